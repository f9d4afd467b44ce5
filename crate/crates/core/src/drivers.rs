//! Deformation paths and stress-constrained drivers.

use crate::error::{Error, Result};
use crate::material::{DualPotential, HelmholtzEnergy, Integrator, MaterialModel, MaterialState};
use crate::scalar::Real;
use crate::tensor3::{SymTensor3, Tensor3};

/// Time stamped deformation gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPath {
    pub samples: Vec<(f64, Tensor3<f64>)>,
    pub time_unit: String,
}

impl LoadPath {
    pub fn new(samples: Vec<(f64, Tensor3<f64>)>) -> Result<Self> {
        for (n, w) in samples.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Monotonicity { line: n + 1 });
            }
        }
        if samples.iter().any(|(_, f)| !(f.det() > 0.0)) {
            return Err(Error::InvalidConstant("det F must be positive".into()));
        }
        Ok(Self {
            samples,
            time_unit: "min".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(t, C)` series for [`MaterialModel::evaluate_path`].
    pub fn right_cauchy_green(&self) -> Vec<(f64, SymTensor3<f64>)> {
        self.samples
            .iter()
            .map(|(t, f)| (*t, f.right_cauchy_green()))
            .collect()
    }

    /// First `n` samples.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
            time_unit: self.time_unit.clone(),
        }
    }
}

/// Breakpoints `(t, F11, F22, F12, F21)` of the multiaxial training path.
/// Two full cycles on `t ∈ [5, 11]`, holds on `[2.5, 3.5]` and `[13, 15]`.
pub const TRAINING_BREAKPOINTS: [[f64; 5]; 13] = [
    [0.0, 1.0, 1.0, 0.0, 0.0],
    [2.5, 1.4, 0.9, 0.15, 0.05],
    [3.5, 1.4, 0.9, 0.15, 0.05],
    [5.0, 1.0, 1.0, 0.0, 0.0],
    [6.0, 0.8, 1.15, -0.2, -0.1],
    [7.0, 1.3, 0.9, 0.3, 0.2],
    [8.0, 1.0, 1.0, 0.0, 0.0],
    [9.0, 0.8, 1.15, -0.3, -0.2],
    [10.0, 1.3, 0.9, 0.25, 0.3],
    [11.0, 1.0, 1.0, 0.0, 0.0],
    [13.0, 1.6, 0.85, 0.1, -0.1],
    [15.0, 1.6, 0.85, 0.1, -0.1],
    [17.0, 1.2, 0.95, 0.0, 0.0],
];

/// Breakpoints `(t, λ)` of the uniaxial test path.
pub const TEST_BREAKPOINTS: [[f64; 2]; 8] = [
    [0.0, 1.0],
    [3.0, 1.5],
    [5.0, 1.5],
    [8.0, 1.0],
    [10.0, 1.3],
    [11.0, 1.3],
    [13.0, 1.6],
    [16.0, 1.0],
];

pub const TRAINING_DT: f64 = 0.05;
pub const TRAINING_T_END: f64 = 17.0;
pub const TEST_DT: f64 = 0.06;
/// Last sample of the test path lies on the `dt` grid below `t = 16`.
pub const TEST_SAMPLES: usize = 267;

fn interpolate<const N: usize>(table: &[[f64; N]], t: f64) -> [f64; N] {
    let last = table[table.len() - 1];
    if t >= last[0] {
        return last;
    }
    let k = table.iter().rposition(|r| r[0] <= t).unwrap_or(0);
    let (a, b) = (table[k], table[k + 1]);
    let s = (t - a[0]) / (b[0] - a[0]);
    let mut out = a;
    out[0] = t;
    for j in 1..N {
        out[j] = a[j] + s * (b[j] - a[j]);
    }
    out
}

/// Sample times `0, dt, 2dt, …` up to `t_end` inclusive.
fn grid(dt: f64, t_end: f64) -> impl Iterator<Item = f64> {
    let n = (t_end / dt + 1e-9).floor() as usize;
    (0..=n).map(move |k| k as f64 * dt)
}

pub fn surrogate_training_path(dt: f64, t_end: f64) -> LoadPath {
    let samples = grid(dt, t_end)
        .map(|t| {
            let [_, f11, f22, f12, f21] = interpolate(&TRAINING_BREAKPOINTS, t);
            let f = Tensor3::from_rows([[f11, f12, 0.0], [f21, f22, 0.0], [0.0, 0.0, 1.0]]);
            (t, f)
        })
        .collect();
    LoadPath::new(samples).expect("training breakpoints are admissible")
}

/// Default training path: 341 samples at `Δt = 0.05`.
pub fn training_path() -> LoadPath {
    surrogate_training_path(TRAINING_DT, TRAINING_T_END)
}

/// Stretch history of the uniaxial test.
pub fn uniaxial_test_path() -> Vec<(f64, f64)> {
    (0..TEST_SAMPLES)
        .map(|k| {
            let t = k as f64 * TEST_DT;
            (t, interpolate(&TEST_BREAKPOINTS, t)[1])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniaxialResponse {
    pub path: LoadPath,
    pub stress: Vec<SymTensor3<f64>>,
    /// Newton iterations per step.
    pub iterations: Vec<usize>,
}

pub const UNIAXIAL_TOL: f64 = 1e-10;
pub const UNIAXIAL_MAX_ITER: usize = 50;

fn lateral_residual(s: &SymTensor3<f64>) -> [f64; 2] {
    [s.get(1, 1), s.get(2, 2)]
}

/// Uniaxial stress: prescribes `F11 = λ` and solves `F22`, `F33` so that
/// `S22 = S33 = 0`. Damped Newton with a difference Jacobian, warm started
/// from the previous step.
pub fn uniaxial_test_driver<E, P>(
    model: &MaterialModel<E, P>,
    lambda_path: &[(f64, f64)],
    integrator: Integrator,
) -> Result<UniaxialResponse>
where
    E: HelmholtzEnergy<f64>,
    P: DualPotential<f64>,
{
    let mut state = MaterialState::<f64>::initial(model.n_branches());
    let mut x = [1.0, 1.0];
    let mut samples = Vec::with_capacity(lambda_path.len());
    let mut stress = Vec::with_capacity(lambda_path.len());
    let mut iterations = Vec::with_capacity(lambda_path.len());
    let mut t_prev = f64::NAN;

    for (n, &(t, lam)) in lambda_path.iter().enumerate() {
        if !(lam > 0.0) {
            return Err(Error::InvalidConstant(format!("stretch {lam} at step {n}")));
        }
        let dt = if n == 0 { 0.0 } else { t - t_prev };
        if n > 0 && !(dt > 0.0) {
            return Err(Error::Monotonicity { line: n });
        }
        // Stress after the step with lateral stretches `y`, leaving `state` untouched.
        let trial = |y: [f64; 2]| -> Result<(SymTensor3<f64>, MaterialState<f64>)> {
            let c = SymTensor3::diag(lam * lam, y[0] * y[0], y[1] * y[1]);
            let mut st = state.clone();
            if n == 0 {
                let s = model.stress(&st, &c)?;
                for b in st.branches.iter_mut() {
                    b.cn = c;
                }
                Ok((s, st))
            } else {
                let out = model.step(&mut st, &c, dt, integrator)?;
                Ok((out.stress, st))
            }
        };
        let at = |e: Error| Error::AtStep {
            step: n,
            source: Box::new(e),
        };

        let (mut s, mut st) = trial(x).map_err(at)?;
        let mut r = lateral_residual(&s);
        let mut it = 0;
        while r[0].abs().max(r[1].abs()) > UNIAXIAL_TOL * s.get(0, 0).abs().max(1.0) {
            if it == UNIAXIAL_MAX_ITER {
                return Err(at(Error::NoConvergence {
                    iterations: it,
                    residual: r[0].hypot(r[1]),
                }));
            }
            it += 1;
            let mut jac = [[0.0; 2]; 2];
            for j in 0..2 {
                let h = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let rp = lateral_residual(&trial(xp).map_err(at)?.0);
                let rm = lateral_residual(&trial(xm).map_err(at)?.0);
                for i in 0..2 {
                    jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if !(det.abs() > 0.0) || !det.is_finite() {
                return Err(at(Error::Tensor(crate::error::TensorError::Singular)));
            }
            let dx = [
                -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
                -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
            ];
            let norm = r[0].hypot(r[1]);
            let mut alpha = 1.0;
            loop {
                let y = [x[0] + alpha * dx[0], x[1] + alpha * dx[1]];
                if y[0] > 0.0 && y[1] > 0.0 {
                    if let Ok((s_new, st_new)) = trial(y) {
                        let r_new = lateral_residual(&s_new);
                        if r_new[0].hypot(r_new[1]) < norm || alpha < 1e-3 {
                            x = y;
                            s = s_new;
                            st = st_new;
                            r = r_new;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    return Err(at(Error::NoConvergence {
                        iterations: it,
                        residual: norm,
                    }));
                }
            }
        }
        state = st;
        samples.push((t, Tensor3::diag(lam, x[0], x[1])));
        stress.push(s);
        iterations.push(it);
        t_prev = t;
    }
    Ok(UniaxialResponse {
        path: LoadPath::new(samples)?,
        stress,
        iterations,
    })
}

/// `F = diag(λ, λ^{-1/2}, λ^{-1/2})`.
pub fn incompressible_stretch(lam: f64) -> Tensor3<f64> {
    let l = 1.0 / lam.sqrt();
    Tensor3::diag(lam, l, l)
}

/// Axial stress after eliminating the pressure `p` of
/// `S = S_model + p C⁻¹` from `S22 = 0`: `S11 − S22 C22 / C11`.
pub fn incompressible_s11<T: Real>(s: &SymTensor3<T>, lam: f64) -> T {
    let c11 = lam * lam;
    let c22 = 1.0 / lam;
    s.get(0, 0) - s.get(1, 1) * T::from_f64(c22 / c11)
}

/// Axial stress along a stretch history under incompressibility.
pub fn incompressible_uniaxial_driver<E, P>(
    model: &MaterialModel<E, P>,
    lambda_path: &[(f64, f64)],
    integrator: Integrator,
) -> Result<Vec<f64>>
where
    E: HelmholtzEnergy<f64>,
    P: DualPotential<f64>,
{
    if let Some(&(_, l)) = lambda_path.iter().find(|(_, l)| !(*l > 0.0)) {
        return Err(Error::InvalidConstant(format!("stretch {l}")));
    }
    let path: Vec<(f64, SymTensor3<f64>)> = lambda_path
        .iter()
        .map(|&(t, l)| (t, incompressible_stretch(l).right_cauchy_green()))
        .collect();
    let out = model.evaluate_path(&path, integrator)?;
    Ok(out
        .iter()
        .zip(lambda_path)
        .map(|(o, &(_, l))| incompressible_s11(&o.stress, l))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy_net::NeoHooke;
    use crate::material::Branch;
    use crate::potential_net::ReferencePotential;

    fn elastic(mu: f64, kappa: f64) -> MaterialModel<NeoHooke, ReferencePotential> {
        MaterialModel::new(vec![Branch {
            energy: NeoHooke { mu, kappa },
            potential: ReferencePotential::Zero,
        }])
    }

    fn example_one() -> MaterialModel<NeoHooke, ReferencePotential> {
        let nh = NeoHooke { mu: 1.0, kappa: 1.0 };
        MaterialModel::new(vec![
            Branch {
                energy: nh,
                potential: ReferencePotential::Zero,
            },
            Branch {
                energy: nh,
                potential: ReferencePotential::CoshJ3 { k1: 2.0 },
            },
        ])
    }

    #[test]
    fn training_path_shape() {
        let p = training_path();
        assert_eq!(p.len(), 341);
        assert_eq!(p.samples[0].1, Tensor3::identity());
        let at = |t: f64| p.samples[(t / TRAINING_DT).round() as usize].1;
        assert_eq!(at(2.5), at(3.5));
        assert!((p.samples[340].0 - 17.0).abs() < 1e-12);
        for (_, f) in &p.samples {
            assert!(f.det() > 0.0);
            assert_eq!(f.m[2], [0.0, 0.0, 1.0]);
            assert_eq!((f.m[0][2], f.m[1][2]), (0.0, 0.0));
            assert!((0.8 - 1e-12..=1.6 + 1e-12).contains(&f.m[0][0]));
            assert!(f.m[0][1].abs() <= 0.3 + 1e-12 && f.m[1][0].abs() <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn test_path_shape() {
        let p = uniaxial_test_path();
        assert_eq!(p.len(), TEST_SAMPLES);
        assert_eq!(p[0], (0.0, 1.0));
        assert!((p[50].1 - 1.5).abs() < 1e-12);
        assert!(p.iter().all(|(_, l)| *l > 0.0));
    }

    #[test]
    fn unit_stretch_is_stress_free() {
        let path: Vec<_> = (0..20).map(|k| (k as f64 * 0.1, 1.0)).collect();
        let r = uniaxial_test_driver(&example_one(), &path, Integrator::Explicit).unwrap();
        for (f, s) in r.path.samples.iter().zip(&r.stress) {
            assert!((f.1.m[1][1] - 1.0).abs() < 1e-12 && (f.1.m[2][2] - 1.0).abs() < 1e-12);
            assert!(s.max_abs() < 1e-12);
        }
        let s = incompressible_uniaxial_driver(&example_one(), &path, Integrator::Explicit).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn lateral_stress_vanishes() {
        let path = uniaxial_test_path();
        for integrator in [Integrator::Explicit, Integrator::Implicit] {
            let r = uniaxial_test_driver(&example_one(), &path, integrator).unwrap();
            for (k, s) in r.stress.iter().enumerate() {
                let tol = UNIAXIAL_TOL * s.get(0, 0).abs().max(1.0);
                assert!(s.get(1, 1).abs() <= tol && s.get(2, 2).abs() <= tol, "step {k}");
            }
            // contraction under tension
            let k = 50;
            let f = r.path.samples[k].1;
            assert!(f.m[1][1] < 1.0 && (f.m[1][1] - f.m[2][2]).abs() < 1e-8);
        }
    }

    #[test]
    fn hyperelastic_laterals_are_equal() {
        let path = uniaxial_test_path();
        let r = uniaxial_test_driver(&elastic(1.0, 3.0), &path, Integrator::Explicit).unwrap();
        for (_, f) in &r.path.samples {
            assert!((f.m[1][1] - f.m[2][2]).abs() < 1e-9);
        }
    }

    #[test]
    fn incompressible_neo_hooke_closed_form() {
        let mu = 1.7;
        let s = incompressible_uniaxial_driver(&elastic(mu, 5.0), &[(0.0, 1.0), (1.0, 2.0)], Integrator::Explicit)
            .unwrap();
        let exact = mu * (1.0 - 2f64.powi(-3));
        assert!((s[1] - exact).abs() < 1e-12 * exact);
        assert!((incompressible_stretch(2.0).det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(matches!(
            LoadPath::new(vec![(0.0, Tensor3::identity()), (0.0, Tensor3::identity())]),
            Err(Error::Monotonicity { line: 1 })
        ));
        assert!(uniaxial_test_driver(&example_one(), &[(0.0, -1.0)], Integrator::Explicit).is_err());
    }
}
