use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::spec::{HiddenLayout, ModelKind, ModelSpec, PriorClass};
use crate::autodiff::{BilinearForm, ChannelMix, LinearMap, Tape, Tensor, Var};
use crate::basis::{conv_channel_basis, conv_channel_bias_basis, BasisSolver, EquivariantBasis};
use crate::error::{Error, Result};
use crate::repr::{GroupSpec, Rep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub class: PriorClass,
    pub value: Tensor,
}

#[derive(Clone, Debug)]
struct Linear {
    n_in: usize,
    n_out: usize,
    basis: Option<Arc<EquivariantBasis>>,
    beta: Option<usize>,
    free: Option<usize>,
    bias_basis: Option<Arc<EquivariantBasis>>,
    bias_beta: Option<usize>,
    bias_free: Option<usize>,
}

/// Learned bilinear update `h + s(h) * blocks(h) + p(h) (x) q(h)` on a gated
/// pre-activation: scalar channels (including gates) scale every non-scalar
/// channel, and channel mixtures of the vectors form rank-2 outer products.
/// Fixed gain on the bilinear update, keeping the products a small
/// correction to the linear layer at initialization.
const BILINEAR_GAIN: f64 = 0.1;

#[derive(Clone, Debug)]
struct Bilinear {
    layout: HiddenLayout,
    coeffs: usize,
    scalar_form: Arc<BilinearForm>,
    outer: Option<Outer>,
}

#[derive(Clone, Debug)]
struct Outer {
    mix: Arc<ChannelMix>,
    mix_p: usize,
    mix_q: usize,
    form: Arc<BilinearForm>,
}

#[derive(Clone, Debug)]
enum Activation {
    Swish,
    Gated {
        layout: HiddenLayout,
        expand_gates: Option<Tensor>,
        alpha: Option<usize>,
    },
}

#[derive(Clone, Debug)]
struct Block {
    linear: Linear,
    bilinear: Option<Bilinear>,
    activation: Option<Activation>,
}

/// Parameter dump with enough metadata to rebuild the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub seed: u64,
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    /// `(weight rank, bias rank)` per linear layer.
    pub basis_ranks: Vec<(usize, usize)>,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<Param>,
}

#[derive(Serialize, Deserialize)]
struct ParamRow {
    name: String,
    index: usize,
    value: f64,
}

impl Checkpoint {
    /// Writes `checkpoint.json` (header) and `params.csv` (`name,index,value`).
    pub fn write(&self, dir: &Path) -> Result<()> {
        let header = dir.join("checkpoint.json");
        let json = serde_json::to_string_pretty(&self.header)?;
        std::fs::write(&header, json).map_err(|e| Error::io(&header, e))?;
        let path = dir.join("params.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for p in &self.params {
            for (index, &value) in p.value.data().iter().enumerate() {
                w.serialize(ParamRow {
                    name: p.name.clone(),
                    index,
                    value,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Checkpoint::write`], rebuilding
    /// parameter shapes from the model spec.
    pub fn read(dir: &Path) -> Result<(Self, Model)> {
        let header_path = dir.join("checkpoint.json");
        let text = std::fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: CheckpointHeader = serde_json::from_str(&text)?;
        let mut model = Model::build(&header.spec, header.seed)?;
        let path = dir.join("params.csv");
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut values: Vec<Vec<f64>> = model.params.iter().map(|p| vec![f64::NAN; p.value.len()]).collect();
        for row in csv::Reader::from_reader(file).deserialize() {
            let row: ParamRow = row?;
            let i = model
                .param_index(&row.name)
                .ok_or_else(|| Error::Data(format!("unknown parameter {}", row.name)))?;
            let slot = values[i]
                .get_mut(row.index)
                .ok_or_else(|| Error::Data(format!("index {} out of range for {}", row.index, row.name)))?;
            *slot = row.value;
        }
        for (p, v) in model.params.iter_mut().zip(values) {
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::Data(format!("missing values for {}", p.name)));
            }
            p.value.data_mut().copy_from_slice(&v);
        }
        let ckpt = model.checkpoint();
        Ok((ckpt, model))
    }
}

/// A model with its parameters. Forward passes are recorded on a [`Tape`]
/// against parameter handles from [`Model::bind`].
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    seed: u64,
    group: GroupSpec,
    rep_in: Rep,
    rep_out: Rep,
    blocks: Vec<Block>,
    params: Vec<Param>,
}

/// Parameters of each prior class are drawn from their own stream, so an
/// RPP starts from the same equivariant weights as the EMLP of equal seed.
struct Builder {
    rng: ChaCha8Rng,
    free_rng: ChaCha8Rng,
    params: Vec<Param>,
    /// Initial std multipliers of the equivariant and free paths when a
    /// layer has both.
    split: (f64, f64),
}

impl Builder {
    fn add(&mut self, name: String, class: PriorClass, shape: &[usize], std: f64) -> usize {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                if std == 0.0 {
                    0.0
                } else if class == PriorClass::Free {
                    std * self.free_rng.sample::<f64, _>(StandardNormal)
                } else {
                    std * self.rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        self.params.push(Param {
            name,
            class,
            value: Tensor::new(shape.to_vec(), data).expect("sized"),
        });
        self.params.len() - 1
    }

    /// Linear layer with optional equivariant and free paths.
    ///
    /// Free weights use `std = 1/sqrt(n_in)`. Equivariant coordinates use the
    /// std that gives `reshape(Q beta)` the same expected Frobenius norm as
    /// such a free matrix. When both paths are present their variances are
    /// shared in the ratio `σ_a² : σ_b²`, so the sum starts on the scale of a
    /// single path and mostly in the pathway the prior favors.
    #[allow(clippy::too_many_arguments)]
    fn linear(
        &mut self,
        prefix: &str,
        n_in: usize,
        n_out: usize,
        basis: Option<EquivariantBasis>,
        bias_basis: Option<EquivariantBasis>,
        free: bool,
        eq_class: PriorClass,
    ) -> Linear {
        let fan = 1.0 / (n_in.max(1) as f64).sqrt();
        let basis = basis.filter(|b| b.rank() > 0).map(Arc::new);
        let bias_basis = bias_basis.filter(|b| b.rank() > 0).map(Arc::new);
        let (sa, sb) = if free && basis.is_some() { self.split } else { (1.0, 1.0) };
        let beta = basis.as_ref().map(|b| {
            let std = sa * (n_out as f64 / b.rank() as f64).sqrt();
            self.add(format!("{prefix}.beta"), eq_class, &[1, b.rank()], std)
        });
        let free_w = free.then(|| self.add(format!("{prefix}.b_w"), PriorClass::Free, &[n_out, n_in], sb * fan));
        let bias_beta = bias_basis
            .as_ref()
            .map(|b| self.add(format!("{prefix}.bias_beta"), eq_class, &[1, b.rank()], 0.0));
        let bias_free = free.then(|| self.add(format!("{prefix}.b_bias"), PriorClass::Free, &[1, n_out], 0.0));
        Linear {
            n_in,
            n_out,
            basis,
            beta,
            free: free_w,
            bias_basis,
            bias_beta,
            bias_free,
        }
    }

    fn bilinear(&mut self, prefix: &str, layout: HiddenLayout) -> Option<Bilinear> {
        let nonscalar = layout.gates();
        if nonscalar == 0 {
            return None;
        }
        let pool = layout.k0 + layout.gates();
        let coeffs = self.add(
            format!("{prefix}.bilinear_s"),
            PriorClass::Equivariant,
            &[pool, nonscalar],
            1.0 / (pool as f64).sqrt(),
        );
        let d = layout.d;
        let mut entries = Vec::with_capacity(layout.block_dim());
        for c in 0..layout.k1 {
            for e in 0..d {
                let k = (c * d + e) as u32;
                entries.push((k, c as u32, k, 1.0));
            }
        }
        for c in 0..layout.k2 {
            for e in 0..d * d {
                let k = (layout.vector_dim() + c * d * d + e) as u32;
                entries.push((k, (layout.k1 + c) as u32, k, 1.0));
            }
        }
        let scalar_form = Arc::new(BilinearForm::new(layout.block_dim(), nonscalar, layout.block_dim(), entries));
        let outer = (layout.k1 > 0 && layout.k2 > 0).then(|| {
            let mix = Arc::new(ChannelMix {
                k_in: layout.k1,
                k_out: layout.k2,
                d,
            });
            let std = 1.0 / (layout.k1 as f64).sqrt();
            let shape = [1, layout.k1 * layout.k2];
            let mix_p = self.add(format!("{prefix}.bilinear_p"), PriorClass::Equivariant, &shape, std);
            let mix_q = self.add(format!("{prefix}.bilinear_q"), PriorClass::Equivariant, &shape, std);
            let mut entries = Vec::with_capacity(layout.matrix_dim());
            for c in 0..layout.k2 {
                for a in 0..d {
                    for b in 0..d {
                        entries.push((
                            (c * d * d + a * d + b) as u32,
                            (c * d + a) as u32,
                            (c * d + b) as u32,
                            1.0,
                        ));
                    }
                }
            }
            let form = Arc::new(BilinearForm::new(layout.matrix_dim(), layout.k2 * d, layout.k2 * d, entries));
            Outer { mix, mix_p, mix_q, form }
        });
        Some(Bilinear {
            layout,
            coeffs,
            scalar_form,
            outer,
        })
    }
}

fn gate_expansion(layout: &HiddenLayout) -> Option<Tensor> {
    if layout.gates() == 0 {
        return None;
    }
    let cols = layout.block_dim();
    let mut data = vec![0.0; layout.gates() * cols];
    let d = layout.d;
    for c in 0..layout.k1 {
        for e in 0..d {
            data[c * cols + c * d + e] = 1.0;
        }
    }
    for c in 0..layout.k2 {
        for e in 0..d * d {
            data[(layout.k1 + c) * cols + layout.vector_dim() + c * d * d + e] = 1.0;
        }
    }
    Some(Tensor::matrix(layout.gates(), cols, data).expect("sized"))
}

impl Model {
    /// Builds a model with a fresh basis cache.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.kind == ModelKind::RppConv {
            return Self::build_rpp_conv(spec, seed);
        }
        let solver = BasisSolver::new(spec.group_spec()?);
        Self::build_with(spec, &solver, seed)
    }

    /// Builds an MLP, EMLP or RPP model, solving bases with `solver` (whose
    /// group must match the model spec).
    pub fn build_with(spec: &ModelSpec, solver: &BasisSolver, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.kind == ModelKind::RppConv {
            return Self::build_rpp_conv(spec, seed);
        }
        let group = solver.group().clone();
        if group.name() != spec.group_spec()?.name() {
            return Err(Error::Config(format!(
                "basis solver is for {} but the model spec asks for {}",
                group.name(),
                spec.group
            )));
        }
        let (rep_in, rep_out) = spec.reps()?;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            free_rng: ChaCha8Rng::seed_from_u64(seed ^ 0xf7ee_0000_0000_0001),
            params: Vec::new(),
            split: spec.init_split(),
        };
        let mut blocks = Vec::with_capacity(spec.depth + 1);
        match spec.kind {
            ModelKind::Mlp => {
                let mut n_in = rep_in.dim();
                for l in 0..=spec.depth {
                    let last = l == spec.depth;
                    let n_out = if last { rep_out.dim() } else { spec.width };
                    let linear = b.linear(&format!("l{l}"), n_in, n_out, None, None, true, PriorClass::Free);
                    blocks.push(Block {
                        linear,
                        bilinear: None,
                        activation: (!last).then_some(Activation::Swish),
                    });
                    n_in = n_out;
                }
            }
            ModelKind::Emlp | ModelKind::Rpp => {
                let rpp = spec.kind == ModelKind::Rpp;
                let layout = spec.hidden_layout()?;
                let hidden = layout.hidden_rep()?;
                let preact = layout.preact_rep()?;
                let mut cur = rep_in.clone();
                for l in 0..=spec.depth {
                    let last = l == spec.depth;
                    let out = if last { rep_out.clone() } else { preact.clone() };
                    let prefix = format!("l{l}");
                    let basis = solver.solve(&cur, &out)?;
                    let bias = solver.bias(&out)?;
                    let linear = b.linear(
                        &prefix,
                        cur.dim(),
                        out.dim(),
                        Some(basis),
                        Some(bias),
                        rpp,
                        PriorClass::Equivariant,
                    );
                    let (bilinear, activation) = if last {
                        (None, None)
                    } else {
                        let alpha = rpp.then(|| b.add(format!("{prefix}.alpha"), PriorClass::Free, &[1], 0.0));
                        (
                            b.bilinear(&prefix, layout),
                            Some(Activation::Gated {
                                layout,
                                expand_gates: gate_expansion(&layout),
                                alpha,
                            }),
                        )
                    };
                    blocks.push(Block {
                        linear,
                        bilinear,
                        activation,
                    });
                    cur = hidden.clone();
                }
            }
            ModelKind::RppConv => unreachable!("handled above"),
        }
        Ok(Self {
            spec: spec.clone(),
            seed,
            group,
            rep_in,
            rep_out,
            blocks,
            params: b.params,
        })
    }

    /// Convolutional RPP: each hidden layer's equivariant path spans 3x3
    /// zero-padded convolutions between every channel pair, with per-channel
    /// constant biases; a final dense layer maps to the outputs.
    pub fn build_rpp_conv(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let conv = spec
            .conv
            .as_ref()
            .ok_or_else(|| Error::Config("rpp-conv model without image layout".into()))?;
        let hw = conv.height * conv.width;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            free_rng: ChaCha8Rng::seed_from_u64(seed ^ 0xf7ee_0000_0000_0001),
            params: Vec::new(),
            split: spec.init_split(),
        };
        let mut blocks = Vec::with_capacity(spec.depth + 1);
        let mut c_in = conv.channels;
        for l in 0..spec.depth {
            let basis = conv_channel_basis(conv.height, conv.width, c_in, conv.hidden_channels)?;
            let bias = conv_channel_bias_basis(conv.height, conv.width, conv.hidden_channels);
            let linear = b.linear(
                &format!("l{l}"),
                c_in * hw,
                conv.hidden_channels * hw,
                Some(basis),
                Some(bias),
                true,
                PriorClass::Equivariant,
            );
            blocks.push(Block {
                linear,
                bilinear: None,
                activation: Some(Activation::Swish),
            });
            c_in = conv.hidden_channels;
        }
        let n_in = c_in * hw;
        let linear = b.linear(
            &format!("l{}", spec.depth),
            n_in,
            conv.outputs,
            Some(EquivariantBasis::full(conv.outputs, n_in)),
            Some(EquivariantBasis::full(conv.outputs, 1)),
            true,
            PriorClass::Equivariant,
        );
        blocks.push(Block {
            linear,
            bilinear: None,
            activation: None,
        });
        Ok(Self {
            spec: spec.clone(),
            seed,
            group: GroupSpec::trivial(1),
            rep_in: Rep::scalar(1).power(conv.channels * hw)?,
            rep_out: Rep::scalar(1).power(conv.outputs)?,
            blocks,
            params: b.params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn rep_in(&self) -> &Rep {
        &self.rep_in
    }

    pub fn rep_out(&self) -> &Rep {
        &self.rep_out
    }

    pub fn n_in(&self) -> usize {
        self.blocks[0].linear.n_in
    }

    pub fn n_out(&self) -> usize {
        self.blocks.last().expect("at least one layer").linear.n_out
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// `(weight rank, bias rank)` per linear layer; 0 where there is no
    /// equivariant path.
    pub fn basis_ranks(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .map(|b| {
                (
                    b.linear.basis.as_ref().map_or(0, |q| q.rank()),
                    b.linear.bias_basis.as_ref().map_or(0, |q| q.rank()),
                )
            })
            .collect()
    }

    /// Layer shapes `(n_out, n_in)` in order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.linear.n_out, b.linear.n_in)).collect()
    }

    /// The weight basis of a linear layer, if it has an equivariant path.
    pub fn layer_basis(&self, layer: usize) -> Option<&EquivariantBasis> {
        self.blocks.get(layer).and_then(|b| b.linear.basis.as_deref())
    }

    /// Records every parameter on `tape` as a named parameter.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.param(p.name.clone(), p.value.clone()))
            .collect()
    }

    fn linear_forward(&self, tape: &mut Tape, vars: &[Var], lin: &Linear, x: Var) -> Result<Var> {
        let mut w = None;
        if let (Some(basis), Some(beta)) = (&lin.basis, lin.beta) {
            let map: Arc<dyn LinearMap> = basis.clone();
            w = Some(tape.expand(vars[beta], map)?);
        }
        if let Some(free) = lin.free {
            w = Some(match w {
                Some(a) => tape.add(a, vars[free])?,
                None => vars[free],
            });
        }
        let w = match w {
            Some(w) => w,
            None => tape.leaf(Tensor::zeros(&[lin.n_out, lin.n_in])),
        };
        let mut y = tape.matmul_t(x, w, false, true)?;
        let mut bias = None;
        if let (Some(basis), Some(beta)) = (&lin.bias_basis, lin.bias_beta) {
            let map: Arc<dyn LinearMap> = basis.clone();
            let col = tape.expand(vars[beta], map)?;
            bias = Some(tape.reshape(col, &[1, lin.n_out])?);
        }
        if let Some(free) = lin.bias_free {
            bias = Some(match bias {
                Some(a) => tape.add(a, vars[free])?,
                None => vars[free],
            });
        }
        if let Some(bias) = bias {
            y = tape.add_row(y, bias)?;
        }
        Ok(y)
    }

    fn bilinear_forward(&self, tape: &mut Tape, vars: &[Var], bl: &Bilinear, h: Var) -> Result<Var> {
        let l = &bl.layout;
        let scalars = tape.slice_cols(h, 0, l.k0)?;
        let gates = tape.slice_cols(h, l.hidden_dim(), l.gates())?;
        let pool = tape.concat(&[scalars, gates])?;
        let blocks = tape.slice_cols(h, l.k0, l.block_dim())?;
        let coeff = tape.matmul(pool, vars[bl.coeffs])?;
        let mut update = tape.bilinear(coeff, blocks, bl.scalar_form.clone())?;
        if let Some(outer) = &bl.outer {
            let vectors = tape.slice_cols(h, l.k0, l.vector_dim())?;
            let map: Arc<dyn LinearMap> = outer.mix.clone();
            let mp = tape.expand(vars[outer.mix_p], map.clone())?;
            let mq = tape.expand(vars[outer.mix_q], map)?;
            let p = tape.matmul(vectors, mp)?;
            let q = tape.matmul(vectors, mq)?;
            let pq = tape.bilinear(p, q, outer.form.clone())?;
            let padded = tape.pad_cols(pq, l.vector_dim(), 0)?;
            update = tape.add(update, padded)?;
        }
        let update = tape.scale(update, BILINEAR_GAIN);
        let full = tape.pad_cols(update, l.k0, l.gates())?;
        tape.add(h, full)
    }

    fn activation_forward(&self, tape: &mut Tape, vars: &[Var], act: &Activation, h: Var) -> Result<Var> {
        match act {
            Activation::Swish => Ok(tape.swish(h)),
            Activation::Gated {
                layout,
                expand_gates,
                alpha,
            } => {
                let s = tape.slice_cols(h, 0, layout.k0)?;
                let s = tape.swish(s);
                let mut out = match expand_gates {
                    Some(g) => {
                        let blocks = tape.slice_cols(h, layout.k0, layout.block_dim())?;
                        let gates = tape.slice_cols(h, layout.hidden_dim(), layout.gates())?;
                        let sg = tape.sigmoid(gates);
                        let gm = tape.leaf(g.clone());
                        let scale = tape.matmul(sg, gm)?;
                        let gated = tape.mul(blocks, scale)?;
                        tape.concat(&[s, gated])?
                    }
                    None => s,
                };
                if let Some(alpha) = alpha {
                    let pre = tape.slice_cols(h, 0, layout.hidden_dim())?;
                    let sw = tape.swish(pre);
                    let term = tape.scale_by(sw, vars[*alpha])?;
                    out = tape.add(out, term)?;
                }
                Ok(out)
            }
        }
    }

    /// Batched forward pass: `x` is `batch x n_in`, output `batch x n_out`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.n_in() {
            return Err(Error::Shape {
                op: "model forward",
                lhs: shape.to_vec(),
                rhs: vec![0, self.n_in()],
            });
        }
        let mut h = x;
        for block in &self.blocks {
            h = self.linear_forward(tape, vars, &block.linear, h)?;
            if let Some(bl) = &block.bilinear {
                h = self.bilinear_forward(tape, vars, bl, h)?;
            }
            if let Some(act) = &block.activation {
                h = self.activation_forward(tape, vars, act, h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass without recording parameters for differentiation.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let xv = tape.leaf(x.clone());
        let y = self.forward(&mut tape, &vars, xv)?;
        Ok(tape.value(y).clone())
    }

    fn variance(&self, class: PriorClass) -> f64 {
        match (self.spec.kind, class) {
            (ModelKind::Mlp, _) => self.spec.sigma_b2,
            (ModelKind::Emlp, _) => self.spec.sigma_a2,
            (_, PriorClass::Equivariant) => self.spec.sigma_a2,
            (_, PriorClass::Free) => self.spec.sigma_b2,
        }
    }

    /// Negative log prior up to a constant:
    /// `sum_p ||p||^2 / (2 sigma^2)` with each parameter's prior variance.
    pub fn prior_penalty(&self) -> Result<f64> {
        self.spec.validate()?;
        Ok(self
            .params
            .iter()
            .map(|p| p.value.norm_sq() / (2.0 * self.variance(p.class)))
            .sum())
    }

    /// [`Model::prior_penalty`] recorded on a tape.
    pub fn prior_penalty_var(&self, tape: &mut Tape, vars: &[Var]) -> Result<Var> {
        self.spec.validate()?;
        let mut total = tape.leaf(Tensor::scalar(0.0));
        for (p, &v) in self.params.iter().zip(vars) {
            let sq = tape.l2_norm_sq(v);
            let term = tape.scale(sq, 1.0 / (2.0 * self.variance(p.class)));
            total = tape.add(total, term)?;
        }
        Ok(total)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                spec: self.spec.clone(),
                seed: self.seed,
                sigma_a2: self.spec.sigma_a2,
                sigma_b2: self.spec.sigma_b2,
                basis_ranks: self.basis_ranks(),
                param_count: self.param_count(),
            },
            params: self.params.clone(),
        }
    }
}

impl Model {
    /// Effective weight `reshape(Q beta) + B` of a linear layer as an
    /// `n_out x n_in` matrix.
    pub fn effective_weight(&self, layer: usize) -> Result<nalgebra::DMatrix<f64>> {
        let block = self
            .blocks
            .get(layer)
            .ok_or_else(|| Error::Config(format!("model has no layer {layer}")))?;
        let lin = &block.linear;
        let mut w = nalgebra::DMatrix::zeros(lin.n_out, lin.n_in);
        if let (Some(basis), Some(beta)) = (&lin.basis, lin.beta) {
            let beta = nalgebra::DVector::from_column_slice(self.params[beta].value.data());
            w += basis.expand(&beta);
        }
        if let Some(free) = lin.free {
            w += nalgebra::DMatrix::from_row_slice(lin.n_out, lin.n_in, self.params[free].value.data());
        }
        Ok(w)
    }
}
