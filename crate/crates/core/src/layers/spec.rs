use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr::{parse_rep, GroupSpec, Rep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    Emlp,
    Rpp,
    RppConv,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Emlp => "emlp",
            ModelKind::Rpp => "rpp",
            ModelKind::RppConv => "rpp-conv",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "emlp" => Ok(ModelKind::Emlp),
            "rpp" | "rpp-emlp" => Ok(ModelKind::Rpp),
            "rpp-conv" | "rppconv" => Ok(ModelKind::RppConv),
            _ => Err(Error::Unknown {
                kind: "model kind",
                name: s.to_string(),
            }),
        }
    }
}

/// Which prior variance a parameter is penalized with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorClass {
    /// Variance `sigma_a2`.
    Equivariant,
    /// Variance `sigma_b2`.
    Free,
}

/// Image layout for convolutional models. Inputs are channel-major
/// `channels x height x width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub hidden_channels: usize,
    pub outputs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub group: String,
    pub rep_in: String,
    pub rep_out: String,
    /// Number of hidden blocks; 0 gives a single linear layer.
    pub depth: usize,
    pub width: usize,
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvSpec>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, group: &str, rep_in: &str, rep_out: &str) -> Self {
        Self {
            kind,
            group: group.to_string(),
            rep_in: rep_in.to_string(),
            rep_out: rep_out.to_string(),
            depth: 3,
            width: 128,
            sigma_a2: 1e5,
            sigma_b2: 1.0,
            conv: None,
        }
    }

    pub fn conv(conv: ConvSpec) -> Self {
        Self {
            kind: ModelKind::RppConv,
            group: "trivial1".into(),
            rep_in: format!("R^{}", conv.channels * conv.height * conv.width),
            rep_out: format!("R^{}", conv.outputs),
            depth: 2,
            width: conv.hidden_channels * conv.height * conv.width,
            sigma_a2: 1e5,
            sigma_b2: 1.0,
            conv: Some(conv),
        }
    }

    /// Std multipliers `(sqrt(σ_a²/(σ_a²+σ_b²)), sqrt(σ_b²/(σ_a²+σ_b²)))`
    /// applied at initialization to layers with both pathways.
    pub fn init_split(&self) -> (f64, f64) {
        let total = self.sigma_a2 + self.sigma_b2;
        ((self.sigma_a2 / total).sqrt(), (self.sigma_b2 / total).sqrt())
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        self
    }

    pub fn with_priors(mut self, sigma_a2: f64, sigma_b2: f64) -> Self {
        self.sigma_a2 = sigma_a2;
        self.sigma_b2 = sigma_b2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_a2", self.sigma_a2), ("sigma_b2", self.sigma_b2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.kind == ModelKind::RppConv {
            let conv = self
                .conv
                .as_ref()
                .ok_or_else(|| Error::Config("rpp-conv model without image layout".into()))?;
            if conv.height < 3 || conv.width < 3 {
                return Err(Error::Dimension(format!(
                    "image {}x{} is smaller than the 3x3 filter",
                    conv.height, conv.width
                )));
            }
        } else if self.depth > 0 && self.width == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(())
    }

    pub fn group_spec(&self) -> Result<GroupSpec> {
        GroupSpec::by_name(&self.group)
    }

    /// Parsed `(rep_in, rep_out)` over the model's group.
    pub fn reps(&self) -> Result<(Rep, Rep)> {
        let d = self.group_spec()?.base_dim();
        Ok((parse_rep(&self.rep_in, d)?, parse_rep(&self.rep_out, d)?))
    }

    /// Hidden allocation used by EMLP and RPP models.
    pub fn hidden_layout(&self) -> Result<HiddenLayout> {
        Ok(HiddenLayout::allocate(self.width, self.group_spec()?.base_dim()))
    }
}

/// Split of a hidden layer into `k0` scalars, `k1` base vectors and `k2`
/// rank-2 tensors, plus one gate scalar per non-scalar channel in the
/// pre-activation. Layout is `[scalars | vectors | matrices | gates]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLayout {
    pub k0: usize,
    pub k1: usize,
    pub k2: usize,
    pub d: usize,
}

impl HiddenLayout {
    /// Equal budget `width / 3` per tensor rank, filled greedily with whole
    /// channels; the remainder goes to scalars.
    pub fn allocate(width: usize, d: usize) -> Self {
        let budget = width / 3;
        let k2 = budget / (d * d);
        let k1 = budget / d;
        let k0 = width - k1 * d - k2 * d * d;
        Self { k0, k1, k2, d }
    }

    pub fn gates(&self) -> usize {
        self.k1 + self.k2
    }

    pub fn vector_dim(&self) -> usize {
        self.k1 * self.d
    }

    pub fn matrix_dim(&self) -> usize {
        self.k2 * self.d * self.d
    }

    pub fn block_dim(&self) -> usize {
        self.vector_dim() + self.matrix_dim()
    }

    /// Dimension after the nonlinearity.
    pub fn hidden_dim(&self) -> usize {
        self.k0 + self.block_dim()
    }

    /// Dimension of a linear layer's output, including gates.
    pub fn preact_dim(&self) -> usize {
        self.hidden_dim() + self.gates()
    }

    fn parts(&self, with_gates: bool) -> Vec<(Rep, usize)> {
        let v = Rep::base(self.d);
        let t2 = Rep::tensor(vec![v.clone(), v.clone()]).expect("same base");
        let mut parts = vec![
            (Rep::scalar(self.d), self.k0),
            (v, self.k1),
            (t2, self.k2),
        ];
        if with_gates {
            parts.push((Rep::scalar(self.d), self.gates()));
        }
        parts
    }

    fn rep(&self, with_gates: bool) -> Result<Rep> {
        let mut leaves = Vec::new();
        for (r, k) in self.parts(with_gates) {
            leaves.extend(std::iter::repeat(r).take(k));
        }
        Rep::sum(leaves)
    }

    pub fn hidden_rep(&self) -> Result<Rep> {
        self.rep(false)
    }

    pub fn preact_rep(&self) -> Result<Rep> {
        self.rep(true)
    }
}
