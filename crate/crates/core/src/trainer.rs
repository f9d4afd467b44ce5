//! Loss, regularization, initialization, Adam and the staggered schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::autodiff::{self, Var};
use crate::datasets::{Experiment, ExperimentKind};
use crate::drivers::incompressible_s11;
use crate::energy_net::EnergyParams;
use crate::error::{Error, Result};
use crate::material::{Branch, Integrator, MaterialModel};
use crate::potential_net::PotentialParams;
use crate::scalar::Real;
use crate::tensor3::SymTensor3;
use crate::NetworkModel;

/// Loss assigned to an experiment whose forward pass fails.
pub const FAILURE_PENALTY: f64 = 1e6;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Scalars per branch: energy network then potential network.
pub const BRANCH_LEN: usize = EnergyParams::<f64>::LEN + PotentialParams::<f64>::LEN;

/// Number of samples in a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Points(usize),
    All,
}

impl Stage {
    pub fn points(self, len: usize) -> usize {
        match self {
            Stage::Points(n) => n.min(len),
            Stage::All => len,
        }
    }
}

impl Serialize for Stage {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Stage::Points(n) => s.serialize_u64(*n as u64),
            Stage::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Stage::Points(n)),
            Raw::S(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "all" => Ok(Stage::All),
            n => n
                .parse()
                .map(Stage::Points)
                .map_err(|_| format!("stage '{n}' is neither a count nor 'all'")),
        }
    }
}

/// Parses `70,170,240,all`.
pub fn parse_schedule(s: &str) -> std::result::Result<Vec<Stage>, String> {
    s.split(',').map(str::parse).collect()
}

pub fn default_schedule() -> Vec<Stage> {
    vec![Stage::Points(70), Stage::Points(170), Stage::Points(240), Stage::All]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Epochs per stage.
    pub epochs: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub integrator: Integrator,
    pub stagger_schedule: Vec<Stage>,
    pub seed: u64,
    pub n_branches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            clip_norm: 1e-3,
            epochs: 3000,
            lambda1: 1e-4,
            lambda2: 1e-4,
            lambda3: 1e-4,
            lambda4: 1e-2,
            lambda5: 1e-3,
            integrator: Integrator::Explicit,
            stagger_schedule: default_schedule(),
            seed: 0,
            n_branches: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.learning_rate, self.clip_norm];
        if pos.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::Config("learning_rate and clip_norm must be positive".into()));
        }
        let lambdas = [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5];
        if lambdas.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("regularization weights must be non-negative".into()));
        }
        if self.epochs == 0 || self.n_branches == 0 {
            return Err(Error::Config("epochs and n_branches must be positive".into()));
        }
        if self.stagger_schedule.is_empty() {
            return Err(Error::Config("stagger schedule is empty".into()));
        }
        let mut prev = 0;
        for (k, s) in self.stagger_schedule.iter().enumerate() {
            match *s {
                Stage::Points(n) if n > prev => prev = n,
                Stage::All if k + 1 == self.stagger_schedule.len() => {}
                _ => {
                    return Err(Error::Config(
                        "stagger schedule must be strictly increasing and end with 'all' if present".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Flat parameters of all branches in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n_branches: usize,
    pub x: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_branches: usize) -> Self {
        let mut x = Vec::with_capacity(n_branches * BRANCH_LEN);
        for _ in 0..n_branches {
            x.extend(EnergyParams::<f64>::zeros().to_flat());
            x.extend(PotentialParams::<f64>::zeros().to_flat());
        }
        Self { n_branches, x }
    }

    pub fn from_branches(branches: &[(EnergyParams<f64>, PotentialParams<f64>)]) -> Self {
        let mut x = Vec::with_capacity(branches.len() * BRANCH_LEN);
        for (e, p) in branches {
            x.extend(e.to_flat());
            x.extend(p.to_flat());
        }
        Self {
            n_branches: branches.len(),
            x,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn energy(&self, b: usize) -> EnergyParams<f64> {
        let o = b * BRANCH_LEN;
        EnergyParams::from_flat(&self.x[o..o + EnergyParams::<f64>::LEN])
    }

    pub fn potential(&self, b: usize) -> PotentialParams<f64> {
        let o = b * BRANCH_LEN + EnergyParams::<f64>::LEN;
        PotentialParams::from_flat(&self.x[o..o + PotentialParams::<f64>::LEN])
    }

    pub fn model(&self) -> NetworkModel<f64> {
        network_model(&self.x, self.n_branches)
    }

    /// Clamps every network to its feasible set.
    pub fn project(&mut self) {
        let branches: Vec<_> = (0..self.n_branches)
            .map(|b| {
                let mut e = self.energy(b);
                let mut p = self.potential(b);
                e.project();
                p.project();
                (e, p)
            })
            .collect();
        *self = Self::from_branches(&branches);
    }

    pub fn is_feasible(&self) -> bool {
        (0..self.n_branches).all(|b| self.energy(b).is_feasible() && self.potential(b).is_feasible())
    }
}

/// Builds the material from a flat parameter slice.
pub fn network_model<T: Real>(x: &[T], n_branches: usize) -> NetworkModel<T> {
    assert_eq!(x.len(), n_branches * BRANCH_LEN, "parameter vector length");
    let ne = EnergyParams::<f64>::LEN;
    MaterialModel::new(
        x.chunks(BRANCH_LEN)
            .map(|c| Branch {
                energy: EnergyParams::from_flat(&c[..ne]),
                potential: PotentialParams::from_flat(&c[ne..]),
            })
            .collect(),
    )
}

/// Mean squared stress error of one experiment. Multiaxial samples average
/// the six Voigt components; uniaxial samples compare `S11` after pressure
/// elimination.
pub fn experiment_loss<T: Real>(
    model: &NetworkModel<T>,
    e: &Experiment,
    integrator: Integrator,
) -> Result<T> {
    if e.is_empty() {
        return Err(Error::DegenerateData(format!("experiment '{}' is empty", e.label)));
    }
    let path: Vec<(f64, SymTensor3<T>)> = e
        .samples
        .iter()
        .map(|s| (s.t, SymTensor3::lift(&s.f.right_cauchy_green())))
        .collect();
    let out = model.evaluate_path(&path, integrator)?;
    let mut sum = T::zero();
    for (o, s) in out.iter().zip(&e.samples) {
        match e.kind {
            ExperimentKind::Multiaxial => {
                let pred = o.stress.to_voigt();
                let data = s.s.to_voigt();
                let mut acc = T::zero();
                for k in 0..6 {
                    let d = pred[k] - T::from_f64(data[k]);
                    acc += d * d;
                }
                sum += acc * T::from_f64(1.0 / 6.0);
            }
            ExperimentKind::Uniaxial => {
                let d = incompressible_s11(&o.stress, s.f.m[0][0]) - T::from_f64(s.s.get(0, 0));
                sum += d * d;
            }
        }
    }
    let l = sum * T::from_f64(1.0 / e.len() as f64);
    if !l.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(l)
}

/// Elastic net on `W₀`, lasso on the output weights and on the hidden biases.
pub fn reg_potential(p: &PotentialParams<f64>, cfg: &TrainConfig) -> f64 {
    reg_potential_grad(p, cfg).0
}

/// Value and subgradient (`sign(0) = 0`) of [`reg_potential`].
pub fn reg_potential_grad(p: &PotentialParams<f64>, cfg: &TrainConfig) -> (f64, PotentialParams<f64>) {
    let mut g = PotentialParams::zeros();
    let mut r = 0.0;
    for (w, gw) in p.w0.iter().flatten().zip(g.w0.iter_mut().flatten()) {
        r += cfg.lambda1 * w * w + cfg.lambda2 * w.abs();
        *gw = 2.0 * cfg.lambda1 * w + cfg.lambda2 * sign(*w);
    }
    for (w, gw) in p.w_out.iter().zip(g.w_out.iter_mut()) {
        r += cfg.lambda3 * w.abs();
        *gw = cfg.lambda3 * sign(*w);
    }
    for (b, gb) in p.b1.iter().chain(&p.b2).zip(g.b1.iter_mut().chain(g.b2.iter_mut())) {
        r += cfg.lambda4 * b.abs();
        *gb = cfg.lambda4 * sign(*b);
    }
    (r, g)
}

/// Lasso on the eight isochoric energy weights.
pub fn reg_energy(p: &EnergyParams<f64>, cfg: &TrainConfig) -> f64 {
    reg_energy_grad(p, cfg).0
}

pub fn reg_energy_grad(p: &EnergyParams<f64>, cfg: &TrainConfig) -> (f64, EnergyParams<f64>) {
    let mut g = EnergyParams {
        w_inner: [0.0; 4],
        w_psi: [0.0; 9],
        p3: 0.0,
    };
    let mut r = 0.0;
    for k in 0..8 {
        r += cfg.lambda5 * p.w_psi[k].abs();
        g.w_psi[k] = cfg.lambda5 * sign(p.w_psi[k]);
    }
    (r, g)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Regularization of all branches and its subgradient.
pub fn regularization(params: &ModelParams, cfg: &TrainConfig) -> (f64, Vec<f64>) {
    let mut r = 0.0;
    let mut g = Vec::with_capacity(params.len());
    for b in 0..params.n_branches {
        let (re, ge) = reg_energy_grad(&params.energy(b), cfg);
        let (rp, gp) = reg_potential_grad(&params.potential(b), cfg);
        r += re + rp;
        g.extend(ge.to_flat());
        g.extend(gp.to_flat());
    }
    (r, g)
}

/// Data term: mean over experiments, failures count as [`FAILURE_PENALTY`].
pub fn data_loss(params: &ModelParams, experiments: &[Experiment], integrator: Integrator) -> f64 {
    let model = params.model();
    let per: Vec<f64> = experiments
        .par_iter()
        .map(|e| experiment_loss(&model, e, integrator).unwrap_or(FAILURE_PENALTY))
        .collect();
    per.iter().sum::<f64>() / experiments.len() as f64
}

pub fn loss(params: &ModelParams, experiments: &[Experiment], cfg: &TrainConfig) -> f64 {
    data_loss(params, experiments, cfg.integrator) + regularization(params, cfg).0
}

/// Loss and gradient. Each experiment is differentiated on its own tape;
/// contributions are summed in experiment order.
pub fn loss_and_gradient(
    params: &ModelParams,
    experiments: &[Experiment],
    cfg: &TrainConfig,
) -> (f64, Vec<f64>) {
    assert!(!experiments.is_empty(), "loss needs at least one experiment");
    let nb = params.n_branches;
    let per: Vec<(f64, Vec<f64>)> = experiments
        .par_iter()
        .map(|e| {
            autodiff::try_gradient(&params.x, |v: &[Var]| {
                experiment_loss(&network_model(v, nb), e, cfg.integrator)
            })
            .unwrap_or_else(|_| (FAILURE_PENALTY, vec![0.0; params.len()]))
        })
        .collect();
    let scale = 1.0 / experiments.len() as f64;
    let (r, mut g) = regularization(params, cfg);
    let mut l = r;
    for (v, gr) in per {
        l += scale * v;
        for (a, b) in g.iter_mut().zip(gr) {
            *a += scale * b;
        }
    }
    (l, g)
}

/// Initial parameters, deterministic under `seed`.
pub fn init_params(seed: u64, n_branches: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branches: Vec<_> = (0..n_branches)
        .map(|_| {
            let e = EnergyParams {
                w_inner: std::array::from_fn(|_| rng.random_range(0.0..0.01)),
                w_psi: std::array::from_fn(|_| rng.random_range(0.0..0.01)),
                p3: 1.0,
            };
            let mut p = PotentialParams::<f64>::zeros();
            p.w0.iter_mut().flatten().for_each(|w| *w = rng.random_range(-1.0..1.0));
            p.w1.iter_mut().flatten().for_each(|w| *w = rng.random_range(0.0..0.01));
            p.w2.iter_mut().flatten().for_each(|w| *w = rng.random_range(0.0..0.01));
            p.w_out.iter_mut().for_each(|w| *w = rng.random_range(0.0..0.001));
            p.p1 = rng.random_range(0.0..1.0);
            p.p2 = rng.random_range(0.0..1.0);
            (e, p)
        })
        .collect();
    ModelParams::from_branches(&branches)
}

/// Rescales `g` to norm `clip` if it is longer.
pub fn clip_gradient(g: &mut [f64], clip: f64) {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > clip {
        let s = clip / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Clips the raw gradient, updates the moments, steps and projects.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grad: &[f64], cfg: &TrainConfig) {
    assert_eq!(grad.len(), params.len());
    let mut g = grad.to_vec();
    clip_gradient(&mut g, cfg.clip_norm);
    state.t += 1;
    let b1t = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let b2t = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..g.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let mh = state.m[i] / b1t;
        let vh = state.v[i] / b2t;
        params.x[i] -= cfg.learning_rate * mh / (vh.sqrt() + ADAM_EPS);
    }
    params.project();
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageHistory {
    /// Samples per experiment used in the stage.
    pub points: usize,
    /// Loss before each epoch's update.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<StageHistory>,
    pub optimizer: AdamState,
}

/// Trains on growing time-prefixes, warm starting every stage from the
/// previous one with a fresh optimizer state. `on_epoch(stage, epoch, loss)`
/// is called after every loss evaluation.
pub fn staggered_train(
    init: ModelParams,
    experiments: &[Experiment],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if experiments.is_empty() {
        return Err(Error::DegenerateData("no training experiments".into()));
    }
    let longest = experiments.iter().map(Experiment::len).max().unwrap_or(0);
    let mut params = init;
    params.project();
    let mut history = Vec::with_capacity(cfg.stagger_schedule.len());
    let mut state = AdamState::new(params.len());
    for (k, stage) in cfg.stagger_schedule.iter().enumerate() {
        let n = stage.points(longest);
        let batch: Vec<Experiment> = experiments.iter().map(|e| e.prefix(n)).collect();
        state = AdamState::new(params.len());
        let mut losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let (l, g) = loss_and_gradient(&params, &batch, cfg);
            losses.push(l);
            on_epoch(k, epoch, l);
            adam_step(&mut state, &mut params, &g, cfg);
        }
        history.push(StageHistory { points: n, losses });
    }
    Ok(TrainOutcome {
        params,
        history,
        optimizer: state,
    })
}

/// Loss history CSV `stage,epoch,loss`.
pub fn write_loss_csv(history: &[StageHistory], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(["stage", "epoch", "loss"]).map_err(|e| Error::Io(e.into()))?;
    for (k, h) in history.iter().enumerate() {
        for (e, l) in h.losses.iter().enumerate() {
            w.write_record([k.to_string(), e.to_string(), l.to_string()])
                .map_err(|e| Error::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}
