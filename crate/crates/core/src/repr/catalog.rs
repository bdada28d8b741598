//! State and action representations of the Mujoco locomotion environments.
//!
//! Only the representation expressions are provided; there is no simulator.
//! Groups: `Z2` swaps a left/right pair, `Z4` cyclically permutes the four Ant
//! legs, `Z2xZ2` acts by independent sign flips (left/right and up/down), and
//! Humanoid uses rotations about the vertical axis acting on `R^3`.

use super::group::GroupSpec;
use super::rep::Rep;
use super::text::parse_rep;
use crate::error::{Error, Result};

pub const ENVIRONMENTS: [&str; 6] = ["Hopper", "Swimmer", "HalfCheetah", "Walker2d", "Ant", "Humanoid"];

/// One catalog row.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub env: &'static str,
    pub group: GroupSpec,
    pub state_rep: Rep,
    pub action_rep: Rep,
    pub state_text: &'static str,
    pub action_text: &'static str,
}

struct Row {
    env: &'static str,
    group: fn() -> GroupSpec,
    state: &'static str,
    action: &'static str,
    /// Rows in the raw state-space table (including unobserved coordinates),
    /// when the representation is directly comparable to it.
    raw_entries: Option<usize>,
    unobserved: usize,
}

const ROWS: [Row; 6] = [
    Row {
        env: "Hopper",
        group: GroupSpec::z2,
        state: "R+P^5+R+P^4",
        action: "P^3",
        raw_entries: Some(12),
        unobserved: 1,
    },
    Row {
        env: "Swimmer",
        group: GroupSpec::z2xz2,
        state: "R+P[0:1]+P[0:1]*V+(R+P)^2+P[0:1]*V",
        action: "P[0:1]*V",
        raw_entries: Some(10),
        unobserved: 2,
    },
    Row {
        env: "HalfCheetah",
        group: GroupSpec::z2,
        state: "R+P^8+R+P^7",
        action: "P^6",
        raw_entries: Some(18),
        unobserved: 1,
    },
    Row {
        env: "Walker2d",
        group: GroupSpec::z2,
        state: "R^2+V^3+R^3+V^3",
        action: "V^3",
        raw_entries: Some(18),
        unobserved: 1,
    },
    Row {
        env: "Ant",
        group: GroupSpec::z4,
        state: "R^5+V^2+R^6+V^2",
        action: "V^2",
        raw_entries: None,
        unobserved: 2,
    },
    Row {
        env: "Humanoid",
        group: GroupSpec::so2_about_z,
        state: "R+V*V+R^17+V^2+R^17",
        action: "R^17",
        raw_entries: None,
        unobserved: 2,
    },
];

fn row(env_name: &str) -> Result<&'static Row> {
    ROWS.iter()
        .find(|r| r.env.eq_ignore_ascii_case(env_name))
        .ok_or_else(|| Error::Unknown {
            kind: "environment",
            name: env_name.to_string(),
        })
}

/// `(state_rep, action_rep, group)` for a Mujoco environment name.
pub fn mujoco_catalog(env_name: &str) -> Result<(Rep, Rep, GroupSpec)> {
    let e = catalog_entry(env_name)?;
    Ok((e.state_rep, e.action_rep, e.group))
}

pub fn catalog_entry(env_name: &str) -> Result<CatalogEntry> {
    let r = row(env_name)?;
    let group = (r.group)();
    let n = group.base_dim();
    Ok(CatalogEntry {
        env: r.env,
        state_rep: parse_rep(r.state, n)?,
        action_rep: parse_rep(r.action, n)?,
        group,
        state_text: r.state,
        action_text: r.action,
    })
}

/// Dimension cross-check of a catalog row against the raw state table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionCheck {
    pub env: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Raw table rows minus unobserved coordinates, if comparable.
    pub observed_entries: Option<usize>,
    pub raw_entries: Option<usize>,
    pub consistent: Option<bool>,
}

/// Compares every catalog state dimension to the raw state tables. Rows whose
/// representation was built from transformed coordinates (quaternions turned
/// into rotation matrices) report `consistent: None`.
pub fn verification_report() -> Vec<DimensionCheck> {
    ROWS.iter()
        .map(|r| {
            let e = catalog_entry(r.env).expect("catalog rows parse");
            let observed = r.raw_entries.map(|n| n - r.unobserved);
            DimensionCheck {
                env: r.env,
                state_dim: e.state_rep.dim(),
                action_dim: e.action_rep.dim(),
                observed_entries: observed,
                raw_entries: r.raw_entries,
                consistent: observed.map(|o| o == e.state_rep.dim()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let dims: Vec<(usize, usize)> = ENVIRONMENTS
            .iter()
            .map(|e| {
                let (s, a, _) = mujoco_catalog(e).unwrap();
                (s.dim(), a.dim())
            })
            .collect();
        assert_eq!(dims, vec![(11, 3), (10, 2), (17, 6), (17, 6), (27, 8), (50, 17)]);
    }

    #[test]
    fn hopper_action_is_pseudoscalar_cube() {
        let (_, a, _) = mujoco_catalog("hopper").unwrap();
        assert_eq!(a.to_string(), "P^3");
    }

    #[test]
    fn swimmer_matches_full_state_not_observed_state() {
        let report = verification_report();
        let swimmer = report.iter().find(|r| r.env == "Swimmer").unwrap();
        assert_eq!(swimmer.state_dim, 10);
        assert_eq!(swimmer.raw_entries, Some(10));
        assert_eq!(swimmer.consistent, Some(false));
        for env in ["Hopper", "HalfCheetah", "Walker2d"] {
            let r = report.iter().find(|r| r.env == env).unwrap();
            assert_eq!(r.consistent, Some(true), "{env}");
        }
    }

    #[test]
    fn unknown_env() {
        assert!(matches!(mujoco_catalog("Reacher"), Err(Error::Unknown { .. })));
    }
}
