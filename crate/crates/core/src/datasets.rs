//! Reference data generation, noise, normalization and CSV exchange.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::drivers::{self, incompressible_stretch, LoadPath};
use crate::energy_net::NeoHooke;
use crate::error::{Error, Result};
use crate::material::{Branch, Integrator, MaterialModel};
use crate::potential_net::ReferencePotential;
use crate::tensor3::{SymTensor3, Tensor3};
use crate::ReferenceModel;

/// Analytic two-branch material: an equilibrium Neo-Hooke spring in parallel
/// with a Maxwell branch of the same spring and an analytic dual potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMaterial {
    pub mu: f64,
    pub kappa: f64,
    pub potential: ReferencePotential,
}

impl AnalyticMaterial {
    /// μ = κ = 1 MPa with the cosh-J3 potential, K₁ = 2 1/MPa.
    pub fn example1() -> Self {
        Self {
            mu: 1.0,
            kappa: 1.0,
            potential: ReferencePotential::CoshJ3 { k1: 2.0 },
        }
    }

    /// μ = 25 MPa, κ = 50 MPa with the quadratic potential.
    pub fn example2() -> Self {
        Self {
            mu: 25.0,
            kappa: 50.0,
            potential: ReferencePotential::Quadratic { k1: 4e-5, k2: 7.2e-4 },
        }
    }

    /// Example 1 springs without flow.
    pub fn hyperelastic() -> Self {
        Self {
            potential: ReferencePotential::Zero,
            ..Self::example1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.kappa > 0.0) {
            return Err(Error::InvalidConstant(format!(
                "mu and kappa must be positive, got {} and {}",
                self.mu, self.kappa
            )));
        }
        let ok = match self.potential {
            ReferencePotential::Zero => true,
            ReferencePotential::CoshJ3 { k1 } => k1 >= 0.0,
            ReferencePotential::Quadratic { k1, k2 } => k1 >= 0.0 && k2 >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConstant("potential constants must be non-negative".into()))
        }
    }

    pub fn model(&self) -> ReferenceModel {
        let energy = NeoHooke {
            mu: self.mu,
            kappa: self.kappa,
        };
        MaterialModel::new(vec![
            Branch {
                energy,
                potential: ReferencePotential::Zero,
            },
            Branch {
                energy,
                potential: self.potential,
            },
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Full deformation gradient and all six stress components.
    #[default]
    Multiaxial,
    /// Incompressible uniaxial tension. Only `F11` and `S11` are known; the
    /// lateral stress entries are NaN.
    Uniaxial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub f: Tensor3<f64>,
    pub s: SymTensor3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub samples: Vec<Sample>,
    /// Stored stresses times `s_max` are in `stress_unit`.
    pub s_max: f64,
    pub label: String,
    pub kind: ExperimentKind,
    pub time_unit: String,
    pub stress_unit: String,
}

/// Sidecar metadata stored next to a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub time_unit: String,
    pub stress_unit: String,
    pub s_max: f64,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<AnalyticMaterial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_s_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const MULTIAXIAL_HEADER: [&str; 16] = [
    "t", "F11", "F12", "F13", "F21", "F22", "F23", "F31", "F32", "F33", "S11", "S22", "S33",
    "S12", "S13", "S23",
];
pub const UNIAXIAL_HEADER: [&str; 3] = ["t", "F11", "S11"];

impl Experiment {
    pub fn new(samples: Vec<Sample>, kind: ExperimentKind, label: impl Into<String>) -> Self {
        Self {
            samples,
            s_max: 1.0,
            label: label.into(),
            kind,
            time_unit: "min".into(),
            stress_unit: "MPa".into(),
        }
    }

    /// Uniaxial experiment from `(t, λ, S11)` rows.
    pub fn uniaxial(rows: &[(f64, f64, f64)], label: impl Into<String>) -> Self {
        let samples = rows
            .iter()
            .map(|&(t, l, s11)| Sample {
                t,
                f: incompressible_stretch(l),
                s: uniaxial_stress(s11),
            })
            .collect();
        Self::new(samples, ExperimentKind::Uniaxial, label)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn prefix(&self, n: usize) -> Self {
        Self {
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn path(&self) -> Result<LoadPath> {
        LoadPath::new(self.samples.iter().map(|s| (s.t, s.f)).collect())
    }

    /// `(t, λ)` history of a uniaxial experiment.
    pub fn stretches(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.f.m[0][0])).collect()
    }

    /// Largest known stress magnitude.
    pub fn max_abs_stress(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.s.to_voigt())
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn scaled(&self, factor: f64) -> Self {
        let mut e = self.clone();
        for s in e.samples.iter_mut() {
            s.s = s.s.scale(factor);
        }
        e
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            time_unit: self.time_unit.clone(),
            stress_unit: self.stress_unit.clone(),
            s_max: self.s_max,
            label: self.label.clone(),
            material: None,
            reference_s_max: None,
            noise_sigma: None,
            seed: None,
        }
    }
}

fn uniaxial_stress(s11: f64) -> SymTensor3<f64> {
    let n = f64::NAN;
    SymTensor3::new(s11, n, n, n, n, n)
}

/// Drives the analytic material along `path` and records the stresses.
pub fn generate_reference(
    am: &AnalyticMaterial,
    path: &LoadPath,
    integrator: Integrator,
    label: impl Into<String>,
) -> Result<Experiment> {
    am.validate()?;
    let out = am.model().evaluate_path(&path.right_cauchy_green(), integrator)?;
    let samples = path
        .samples
        .iter()
        .zip(out)
        .map(|(&(t, f), o)| Sample { t, f, s: o.stress })
        .collect();
    Ok(Experiment::new(samples, ExperimentKind::Multiaxial, label))
}

/// Uniaxial-stress test of the analytic material on the test path. Lateral
/// stretches are solved so the experiment carries the full `F` and `S`.
pub fn generate_uniaxial_test(
    am: &AnalyticMaterial,
    lambda_path: &[(f64, f64)],
    integrator: Integrator,
    label: impl Into<String>,
) -> Result<Experiment> {
    am.validate()?;
    let r = drivers::uniaxial_test_driver(&am.model(), lambda_path, integrator)?;
    let samples = r
        .path
        .samples
        .iter()
        .zip(r.stress)
        .map(|(&(t, f), s)| Sample { t, f, s })
        .collect();
    Ok(Experiment::new(samples, ExperimentKind::Multiaxial, label))
}

/// Adds i.i.d. `N(0, σ²)` noise to every known stress component.
pub fn add_noise(e: &Experiment, sigma: f64, seed: u64) -> Result<Experiment> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConstant(format!("noise sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(e.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|err| Error::InvalidConstant(err.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = e.clone();
    for s in out.samples.iter_mut() {
        s.s = SymTensor3::from_voigt(s.s.to_voigt().map(|v| {
            if v.is_finite() {
                v + normal.sample(&mut rng)
            } else {
                v
            }
        }));
    }
    Ok(out)
}

/// Divides by the largest stress magnitude and folds it into `s_max`.
pub fn normalize(e: &Experiment) -> Result<Experiment> {
    let m = e.max_abs_stress();
    if !(m > 0.0) {
        return Err(Error::DegenerateData(format!("experiment '{}' has no nonzero stress", e.label)));
    }
    normalize_with(e, m)
}

/// Divides the stresses by `scale`, e.g. the training set's maximum.
pub fn normalize_with(e: &Experiment, scale: f64) -> Result<Experiment> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateData(format!("normalization scale {scale}")));
    }
    let mut out = e.scaled(1.0 / scale);
    out.s_max = e.s_max * scale;
    Ok(out)
}

/// Restores physical stresses, leaving `s_max = 1`.
pub fn denormalize(e: &Experiment) -> Experiment {
    let mut out = e.scaled(e.s_max);
    out.s_max = 1.0;
    out
}

/// Sidecar path: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_csv(e: &Experiment, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    match e.kind {
        ExperimentKind::Multiaxial => {
            w.write_record(MULTIAXIAL_HEADER).map_err(csv_io)?;
            for s in &e.samples {
                let mut row = vec![s.t.to_string()];
                row.extend(s.f.to_row_major().iter().map(f64::to_string));
                row.extend(s.s.to_voigt().iter().map(f64::to_string));
                w.write_record(&row).map_err(csv_io)?;
            }
        }
        ExperimentKind::Uniaxial => {
            w.write_record(UNIAXIAL_HEADER).map_err(csv_io)?;
            for s in &e.samples {
                w.write_record([s.t.to_string(), s.f.m[0][0].to_string(), s.s.get(0, 0).to_string()])
                    .map_err(csv_io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV and its sidecar.
pub fn write_experiment(e: &Experiment, path: &Path, sidecar: Option<Sidecar>) -> Result<()> {
    write_csv(e, path)?;
    let meta = sidecar.unwrap_or_else(|| e.sidecar());
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

/// Reads a dataset CSV. The sidecar, when present, supplies units and
/// `s_max`.
pub fn ingest_csv(path: &Path) -> Result<Experiment> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match csv_io(e) {
            Error::Io(io) => Error::io_at(io, path),
            other => other,
        })?;
    let header: Vec<String> = rdr.headers().map_err(csv_io)?.iter().map(str::to_owned).collect();
    let kind = if header == MULTIAXIAL_HEADER {
        ExperimentKind::Multiaxial
    } else if header == UNIAXIAL_HEADER {
        ExperimentKind::Uniaxial
    } else {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unrecognised header {header:?}"),
        });
    };
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut samples: Vec<Sample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_io)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|err| Error::Parse {
                    line,
                    msg: format!("'{f}': {err}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let sample = match kind {
            ExperimentKind::Multiaxial => {
                let mut fv = [0.0; 9];
                fv.copy_from_slice(&vals[1..10]);
                let mut sv = [0.0; 6];
                sv.copy_from_slice(&vals[10..16]);
                Sample {
                    t: vals[0],
                    f: Tensor3::from_row_major(fv),
                    s: SymTensor3::from_voigt(sv),
                }
            }
            ExperimentKind::Uniaxial => {
                if !(vals[1] > 0.0) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("stretch {} must be positive", vals[1]),
                    });
                }
                Sample {
                    t: vals[0],
                    f: incompressible_stretch(vals[1]),
                    s: uniaxial_stress(vals[2]),
                }
            }
        };
        if !(sample.f.det() > 0.0) || !sample.t.is_finite() {
            return Err(Error::Parse {
                line,
                msg: "non-finite time or non-positive det F".into(),
            });
        }
        if let Some(prev) = samples.last() {
            if !(sample.t > prev.t) {
                return Err(Error::Monotonicity { line });
            }
        }
        samples.push(sample);
    }
    let mut e = Experiment::new(samples, kind, label);
    let side = sidecar_path(path);
    if side.exists() {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(side)?)?;
        e.s_max = meta.s_max;
        e.time_unit = meta.time_unit;
        e.stress_unit = meta.stress_unit;
        if !meta.label.is_empty() {
            e.label = meta.label;
        }
    }
    Ok(e)
}
