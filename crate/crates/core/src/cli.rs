//! Command line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{weight_table, Checkpoint};
use crate::datasets::{
    self, add_noise, generate_reference, generate_uniaxial_test, ingest_csv, normalize, normalize_with,
    write_experiment, AnalyticMaterial, Experiment, ExperimentKind,
};
use crate::drivers::{
    incompressible_uniaxial_driver, training_path, uniaxial_test_driver, uniaxial_test_path,
};
use crate::energy_net::EnergyParams;
use crate::error::{Error, Result};
use crate::material::Integrator;
use crate::potential_net::{classical_config, ClassicalKind};
use crate::tensor3::SymTensor3;
use crate::trainer::{self, parse_schedule, staggered_train, write_loss_csv, ModelParams, Stage, TrainConfig};

/// Maximum stress of the second example on its original load path, kept as
/// reference metadata.
pub const EXAMPLE2_REFERENCE_S_MAX: f64 = 125.1517;
/// Default noise level as a fraction of the largest stress.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.02;
/// Thread count for the training pool.
pub const THREADS_ENV: &str = "ICANN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "icann", version, about = "Inelastic constitutive neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate reference training and test data.
    Generate(GenerateArgs),
    /// Train a two-branch network on dataset files.
    Train(TrainArgs),
    /// Predict stresses with a checkpoint.
    Evaluate(EvaluateArgs),
    /// Write a checkpoint whose potential reproduces a classical model.
    ExportClassical(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Hyperelastic,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub example: Example,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian noise standard deviation as a fraction of the largest stress.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, default_value = "explicit")]
    pub integrator: Integrator,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV files.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV, defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// JSON file with training options; its keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub integrator: Option<Integrator>,
    /// Staggered schedule, e.g. `70,170,240,all`. Without a value the
    /// default schedule is used; without the flag all points are trained at once.
    #[arg(long, num_args = 0..=1, default_missing_value = "70,170,240,all")]
    pub stagger: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset to compare against. Without it the built-in uniaxial test
    /// path is driven.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Prescribe only `F11` of a multiaxial file and solve for zero lateral stress.
    #[arg(long)]
    pub uniaxial_stress: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub integrator: Option<Integrator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassicalName {
    VonMises,
    DruckerPrager,
    BreslerPister,
    Stassi,
    Quadratic,
    MaxPrincipal,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_enum)]
    pub kind: ClassicalName,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_t: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub zeta1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub zeta2: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Shear modulus of the Neo-Hooke energy paired with the potential.
    #[arg(long, default_value_t = 1.0)]
    pub energy_mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub energy_kappa: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit code: 2 for configuration and input errors, 3 for solver
/// failures, 4 for I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Io(_) => 4,
        Error::NoConvergence { .. } | Error::Tensor(_) | Error::NonFinite => 3,
        _ => 2,
    }
}

/// Sizes the global pool from [`THREADS_ENV`] when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::ExportClassical(a) => cmd_export_classical(&a),
    }
}

/// Paths written by `generate`.
#[derive(Debug, Clone)]
pub struct Generated {
    pub train: PathBuf,
    pub test: PathBuf,
    pub s_max: f64,
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<Generated> {
    let (am, name, normalized) = match a.example {
        Example::One => (AnalyticMaterial::example1(), "example1", false),
        Example::Two => (AnalyticMaterial::example2(), "example2", true),
        Example::Hyperelastic => (AnalyticMaterial::hyperelastic(), "hyperelastic", false),
    };
    let mut train = generate_reference(&am, &training_path(), a.integrator, format!("{name}_train"))?;
    let mut test = generate_uniaxial_test(&am, &uniaxial_test_path(), a.integrator, format!("{name}_test"))?;
    if normalized {
        train = normalize(&train)?;
        test = normalize_with(&test, train.s_max)?;
    }
    if let Some(frac) = a.noise_sigma {
        if !(frac >= 0.0) {
            return Err(Error::Config(format!("noise sigma {frac} must be non-negative")));
        }
        train = add_noise(&train, frac * train.max_abs_stress(), a.seed)?;
    }
    fs::create_dir_all(&a.out_dir)?;
    let mut meta = train.sidecar();
    meta.material = Some(am);
    meta.noise_sigma = a.noise_sigma;
    meta.seed = Some(a.seed);
    if a.example == Example::Two {
        meta.reference_s_max = Some(EXAMPLE2_REFERENCE_S_MAX);
    }
    let train_path = a.out_dir.join(format!("{name}_train.csv"));
    let test_path = a.out_dir.join(format!("{name}_test.csv"));
    write_experiment(&train, &train_path, Some(meta.clone()))?;
    let mut test_meta = test.sidecar();
    test_meta.material = meta.material;
    test_meta.reference_s_max = meta.reference_s_max;
    write_experiment(&test, &test_path, Some(test_meta))?;
    println!(
        "wrote {} ({} samples) and {} ({} samples), s_max = {}",
        train_path.display(),
        train.len(),
        test_path.display(),
        test.len(),
        train.s_max
    );
    Ok(Generated {
        train: train_path,
        test: test_path,
        s_max: train.s_max,
    })
}

/// Defaults, then flags, then the config file.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        stagger_schedule: vec![Stage::All],
        ..TrainConfig::default()
    };
    if let Some(i) = a.integrator {
        cfg.integrator = i;
    }
    if let Some(s) = &a.stagger {
        cfg.stagger_schedule = parse_schedule(s).map_err(Error::Config)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    if let Some(c) = a.clip_norm {
        cfg.clip_norm = c;
    }
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(e, path))?;
        let file: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let serde_json::Value::Object(over) = file else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        };
        let mut base = serde_json::to_value(&cfg)?;
        if let serde_json::Value::Object(m) = &mut base {
            m.extend(over);
        }
        cfg = serde_json::from_value(base).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_experiments(paths: &[PathBuf]) -> Result<Vec<Experiment>> {
    let exps = paths.iter().map(|p| ingest_csv(p)).collect::<Result<Vec<_>>>()?;
    if let Some(first) = exps.first() {
        if let Some(e) = exps
            .iter()
            .find(|e| (e.s_max - first.s_max).abs() > 1e-12 * first.s_max.abs())
        {
            return Err(Error::Config(format!(
                "'{}' has s_max {} but '{}' has {}",
                e.label, e.s_max, first.label, first.s_max
            )));
        }
    }
    Ok(exps)
}

/// Result of `train`.
#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub params: ModelParams,
    pub stages: usize,
    pub final_loss: f64,
}

pub fn cmd_train(a: &TrainArgs) -> Result<Trained> {
    let cfg = train_config(a)?;
    let exps = load_experiments(&a.data)?;
    let init = trainer::init_params(cfg.seed, cfg.n_branches);
    let every = (cfg.epochs / 10).max(1);
    let out = staggered_train(init, &exps, &cfg, |stage, epoch, loss| {
        if epoch % every == 0 || epoch + 1 == cfg.epochs {
            eprintln!("stage {stage} epoch {epoch} loss {loss:.6e}");
        }
    })?;
    let mut ck = Checkpoint::from_params(&out.params, cfg.integrator);
    ck.s_max = exps[0].s_max;
    ck.stress_unit = exps[0].stress_unit.clone();
    ck.optimizer = Some(out.optimizer.clone());
    ck.save(&a.out)?;
    let loss_path = a.loss_csv.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"));
    write_loss_csv(&out.history, &loss_path)?;
    let final_loss = trainer::loss(&out.params, &exps, &cfg);
    println!("final loss {final_loss:.6e}");
    print!("{}", weight_table(&[("", &out.params)]));
    Ok(Trained {
        checkpoint: ck,
        params: out.params,
        stages: out.history.len(),
        final_loss,
    })
}

/// Result of `evaluate`: mean squared error on the compared components.
#[derive(Debug, Clone, Copy)]
pub struct Evaluated {
    pub mse: Option<f64>,
    pub samples: usize,
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<Evaluated> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let integrator = a.integrator.unwrap_or(ck.integrator);
    let model = ck.params()?.model();

    let (times, pred, data, compare_all): (Vec<f64>, Vec<SymTensor3<f64>>, Option<Experiment>, bool) =
        match &a.data {
            None => {
                let path = uniaxial_test_path();
                let r = uniaxial_test_driver(&model, &path, integrator)?;
                (path.iter().map(|p| p.0).collect(), r.stress, None, false)
            }
            Some(file) => {
                let e = ingest_csv(file)?;
                let times: Vec<f64> = e.samples.iter().map(|s| s.t).collect();
                match (e.kind, a.uniaxial_stress) {
                    (ExperimentKind::Uniaxial, _) => {
                        let s11 = incompressible_uniaxial_driver(&model, &e.stretches(), integrator)?;
                        let n = f64::NAN;
                        let pred = s11.iter().map(|&s| SymTensor3::new(s, n, n, n, n, n)).collect();
                        (times, pred, Some(e), false)
                    }
                    (ExperimentKind::Multiaxial, true) => {
                        let r = uniaxial_test_driver(&model, &e.stretches(), integrator)?;
                        (times, r.stress, Some(e), false)
                    }
                    (ExperimentKind::Multiaxial, false) => {
                        let path = e.path()?.right_cauchy_green();
                        let out = model.evaluate_path(&path, integrator)?;
                        (times, out.into_iter().map(|o| o.stress).collect(), Some(e), true)
                    }
                }
            }
        };

    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Error::Io(e.into()))?;
    let comps = ["S11", "S22", "S33", "S12", "S13", "S23"];
    let mut header = vec!["t".to_string()];
    header.extend(comps.iter().map(|c| format!("{c}_pred")));
    if data.is_some() {
        header.extend(comps.iter().map(|c| format!("{c}_data")));
        header.extend(comps.iter().map(|c| format!("{c}_err")));
    }
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    let mut se = 0.0;
    for (k, (t, p)) in times.iter().zip(&pred).enumerate() {
        let pv = p.to_voigt();
        let mut row = vec![t.to_string()];
        row.extend(pv.iter().map(f64::to_string));
        if let Some(e) = &data {
            let dv = e.samples[k].s.to_voigt();
            row.extend(dv.iter().map(f64::to_string));
            row.extend((0..6).map(|j| (pv[j] - dv[j]).to_string()));
            se += if compare_all {
                (0..6).map(|j| (pv[j] - dv[j]).powi(2)).sum::<f64>() / 6.0
            } else {
                (pv[0] - dv[0]).powi(2)
            };
        }
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    let mse = data.as_ref().map(|_| se / pred.len() as f64);
    if let Some(m) = mse {
        println!("mse {m:.6e} over {} samples", pred.len());
    }
    print!("{}", weight_table(&[("", &ck.params()?)]));
    Ok(Evaluated {
        mse,
        samples: pred.len(),
    })
}

fn need(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("--{name} is required for this kind")))
}

pub fn classical_kind(a: &ExportArgs) -> Result<ClassicalKind> {
    Ok(match a.kind {
        ClassicalName::VonMises => ClassicalKind::VonMises,
        ClassicalName::DruckerPrager => ClassicalKind::DruckerPrager {
            sigma_c: need(a.sigma_c, "sigma-c")?,
            sigma_t: need(a.sigma_t, "sigma-t")?,
        },
        ClassicalName::BreslerPister => ClassicalKind::BreslerPister {
            zeta1: need(a.zeta1, "zeta1")?,
            zeta2: need(a.zeta2, "zeta2")?,
        },
        ClassicalName::Stassi => ClassicalKind::Stassi {
            sigma_c: need(a.sigma_c, "sigma-c")?,
            sigma_t: need(a.sigma_t, "sigma-t")?,
        },
        ClassicalName::Quadratic => ClassicalKind::Quadratic {
            mu: need(a.mu, "mu")?,
            kappa: need(a.kappa, "kappa")?,
        },
        ClassicalName::MaxPrincipal => ClassicalKind::MaxPrincipal,
    })
}

pub fn cmd_export_classical(a: &ExportArgs) -> Result<()> {
    let kind = classical_kind(a)?;
    let pot = classical_config(kind)?;
    if !(a.energy_mu > 0.0 && a.energy_kappa > 0.0) {
        return Err(Error::InvalidConstant("energy moduli must be positive".into()));
    }
    let energy = EnergyParams::neo_hooke(a.energy_mu, a.energy_kappa);
    let params = ModelParams::from_branches(&[(energy, pot)]);
    let mut ck = Checkpoint::from_params(&params, Integrator::Explicit);
    ck.classical = Some(kind);
    write_checkpoint(&ck, &a.out)?;
    println!("wrote {} ({})", a.out.display(), kind.name());
    Ok(())
}

fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ck.save(path)
}

#[doc(hidden)]
pub use datasets::sidecar_path;
