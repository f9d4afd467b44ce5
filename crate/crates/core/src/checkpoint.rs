//! JSON checkpoints and weight reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy_net::EnergyParams;
use crate::error::{Error, Result};
use crate::material::Integrator;
use crate::potential_net::{ClassicalKind, PotentialParams};
use crate::trainer::{AdamState, ModelParams};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchParams {
    pub energy: Vec<f64>,
    pub potential: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub branch_count: usize,
    pub integrator: Integrator,
    pub branches: Vec<BranchParams>,
    /// Stress scale of the training data; predictions times `s_max` are in
    /// `stress_unit`.
    #[serde(default = "one")]
    pub s_max: f64,
    #[serde(default)]
    pub stress_unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

fn one() -> f64 {
    1.0
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, integrator: Integrator) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            branch_count: params.n_branches,
            integrator,
            branches: (0..params.n_branches)
                .map(|b| BranchParams {
                    energy: params.energy(b).to_flat(),
                    potential: params.potential(b).to_flat(),
                })
                .collect(),
            s_max: 1.0,
            stress_unit: String::new(),
            classical: None,
            optimizer: None,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.branches.len() != self.branch_count || self.branch_count == 0 {
            return Err(Error::Config("branch_count does not match the branch list".into()));
        }
        let mut branches = Vec::with_capacity(self.branch_count);
        for (k, b) in self.branches.iter().enumerate() {
            if b.energy.len() != EnergyParams::<f64>::LEN || b.potential.len() != PotentialParams::<f64>::LEN {
                return Err(Error::Config(format!(
                    "branch {} has {} energy and {} potential parameters",
                    k + 1,
                    b.energy.len(),
                    b.potential.len()
                )));
            }
            if b.energy.iter().chain(&b.potential).any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("branch {} has non-finite parameters", k + 1)));
            }
            branches.push((EnergyParams::from_flat(&b.energy), PotentialParams::from_flat(&b.potential)));
        }
        Ok(ModelParams::from_branches(&branches))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io_at(e, path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io_at(e, path))?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        c.params()?;
        Ok(c)
    }
}

/// Output weights of the potential per branch, one row per branch. The first
/// four columns belong to the max neurons, the last four to the exponential
/// ones. With several sessions each block is prefixed by its label.
pub fn weight_table(sessions: &[(&str, &ModelParams)]) -> String {
    let labelled = sessions.iter().any(|(l, _)| !l.is_empty());
    let width = sessions.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let mut s = String::new();
    if labelled {
        let _ = write!(s, "{:width$} ", "");
    }
    let _ = write!(s, "{:8}", "");
    for k in 1..=8 {
        let _ = write!(s, " {k:>12}");
    }
    s.push('\n');
    for (label, p) in sessions {
        for b in 0..p.n_branches {
            if labelled {
                let l = if b == 0 { *label } else { "" };
                let _ = write!(s, "{l:width$} ");
            }
            let _ = write!(s, "{:8}", format!("{}w_omega", b + 1));
            for w in p.potential(b).w_out {
                let _ = write!(s, " {:>12}", fmt_weight(w));
            }
            s.push('\n');
        }
    }
    s
}

fn fmt_weight(w: f64) -> String {
    if w == 0.0 {
        "0".into()
    } else if w.abs() >= 1e-3 && w.abs() < 1e4 {
        format!("{w:.7}")
    } else {
        format!("{w:.4e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::init_params;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params(4, 2);
        let mut c = Checkpoint::from_params(&p, Integrator::Implicit);
        c.s_max = 125.25;
        let f = dir.path().join("c.json");
        c.save(&f).unwrap();
        let back = Checkpoint::load(&f).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.params().unwrap(), p);
        assert_eq!(back.integrator, Integrator::Implicit);
        assert_eq!(back.params().unwrap().len(), 660);
    }

    #[test]
    fn rejects_wrong_version_and_shape() {
        let p = init_params(4, 2);
        let mut c = Checkpoint::from_params(&p, Integrator::Explicit);
        c.version = 99;
        assert!(matches!(c.params(), Err(Error::Config(_))));
        let mut c = Checkpoint::from_params(&p, Integrator::Explicit);
        c.branches[1].potential.pop();
        assert!(matches!(c.params(), Err(Error::Config(_))));
        let mut c = Checkpoint::from_params(&p, Integrator::Explicit);
        c.branch_count = 3;
        assert!(c.params().is_err());
    }

    #[test]
    fn table_layout() {
        let mut p = ModelParams::zeros(2);
        let o = crate::trainer::BRANCH_LEN + EnergyParams::<f64>::LEN + 298 + 1;
        p.x[o] = 0.2103749;
        let t = weight_table(&[("", &p)]);
        let rows: Vec<&str> = t.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("1w_omega"));
        assert_eq!(rows[1].split_whitespace().filter(|w| *w == "0").count(), 8);
        assert_eq!(rows[2].split_whitespace().nth(2), Some("0.2103749"));
        let t = weight_table(&[("Clean", &p), ("Noisy", &p)]);
        assert_eq!(t.lines().count(), 5);
        assert!(t.lines().nth(3).unwrap().starts_with("Noisy"));
    }
}
