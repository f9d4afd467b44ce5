//! Recurrent material-point kernel for parallel inelastic branches.
//!
//! Each branch holds a free energy ψ(C̄ₑ) and a dual potential ω*(Σ̄). With
//! the inelastic stretch `Uᵢ` the elastic stretch is `C̄ₑ = Uᵢ⁻¹ C Uᵢ⁻¹`, the
//! driving stress `Σ̄ = sym(2 C̄ₑ ∂ψ/∂C̄ₑ)` and the branch stress
//! `S = 2 Uᵢ⁻¹ ∂ψ/∂C̄ₑ Uᵢ⁻¹`. Branch stresses are summed.
//!
//! The flow `D̄ᵢ = ∂ω*/∂Σ̄` is integrated with the exponential map, either
//! explicitly from the previous state or implicitly by Broyden iteration on
//! `log(Uᵢ⁻¹ Cᵢₙ Uᵢ⁻¹) + 2Δt D̄ᵢ(Uᵢ) = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, TensorError};
use crate::scalar::Real;
use crate::tensor3::{sym_matrix_function, MatFn, SymTensor3};

pub trait HelmholtzEnergy<T: Real> {
    fn psi(&self, ce: &SymTensor3<T>) -> Result<T, TensorError>;
    fn dpsi_dce(&self, ce: &SymTensor3<T>) -> Result<SymTensor3<T>, TensorError>;
}

pub trait DualPotential<T: Real> {
    fn omega(&self, sigma: &SymTensor3<T>) -> T;
    fn domega_dsigma(&self, sigma: &SymTensor3<T>) -> SymTensor3<T>;
    /// True if ω* vanishes identically, so the branch never flows.
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch<E, P> {
    pub energy: E,
    pub potential: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialModel<E, P> {
    pub branches: Vec<Branch<E, P>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchState<T> {
    pub ui: SymTensor3<T>,
    pub cn: SymTensor3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialState<T> {
    pub branches: Vec<BranchState<T>>,
}

impl<T: Real> MaterialState<T> {
    /// Undeformed state: `Uᵢ = I`, `Cₙ = I` in every branch.
    pub fn initial(n_branches: usize) -> Self {
        Self {
            branches: vec![
                BranchState {
                    ui: SymTensor3::identity(),
                    cn: SymTensor3::identity(),
                };
                n_branches
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Explicit,
    Implicit,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Explicit => "explicit",
            Self::Implicit => "implicit",
        })
    }
}

impl FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "explicit" => Ok(Self::Explicit),
            "implicit" => Ok(Self::Implicit),
            other => Err(Error::Config(format!("unknown integrator '{other}'"))),
        }
    }
}

/// Residual tolerance of the implicit scheme.
pub const IMPLICIT_TOL: f64 = 1e-8;
/// Broyden iteration cap.
pub const IMPLICIT_MAX_ITER: usize = 50;
/// Smallest admissible `|sᵀ B y| / (‖s‖ ‖B y‖)` in the inverse update.
pub const BROYDEN_GUARD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    pub stress: SymTensor3<T>,
    /// `Σ̄ : D̄ᵢ` per branch at the point where the flow was evaluated.
    pub dissipation: Vec<f64>,
    /// Broyden iterations summed over branches (0 for the explicit scheme).
    pub iterations: usize,
}

/// `Uᵢ⁻¹ C Uᵢ⁻¹`.
pub fn elastic_stretch<T: Real>(
    ui: &SymTensor3<T>,
    c: &SymTensor3<T>,
) -> Result<SymTensor3<T>, TensorError> {
    Ok(ui.inverse()?.congruence(c))
}

fn check_spd<T: Real>(t: &SymTensor3<T>) -> Result<(), TensorError> {
    let v = t.values().to_voigt();
    let [a, b, _, d, _, _] = v;
    let m2 = a * b - d * d;
    let m3 = t.values().det();
    let min = a.min(m2).min(m3);
    if a > 0.0 && m2 > 0.0 && m3 > 0.0 && v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NotPositiveDefinite { min_eigenvalue: min })
    }
}

/// `sym(2 C̄ₑ ∂ψ/∂C̄ₑ)`.
pub fn mandel_stress<T: Real, E: HelmholtzEnergy<T>>(
    energy: &E,
    ui: &SymTensor3<T>,
    c: &SymTensor3<T>,
) -> Result<SymTensor3<T>, TensorError> {
    let ce = elastic_stretch(ui, c)?;
    let d = energy.dpsi_dce(&ce)?;
    Ok(ce.sym_mul(&d).scale(T::from_f64(2.0)))
}

/// `2 Uᵢ⁻¹ ∂ψ/∂C̄ₑ Uᵢ⁻¹`.
pub fn second_pk<T: Real, E: HelmholtzEnergy<T>>(
    energy: &E,
    ui: &SymTensor3<T>,
    c: &SymTensor3<T>,
) -> Result<SymTensor3<T>, TensorError> {
    let uinv = ui.inverse()?;
    let ce = uinv.congruence(c);
    let d = energy.dpsi_dce(&ce)?;
    Ok(uinv.congruence(&d).scale(T::from_f64(2.0)))
}

/// Reduced dissipation `Σ̄ : D̄ᵢ`.
pub fn dissipation_rate<T: Real>(sigma: &SymTensor3<T>, di: &SymTensor3<T>) -> T {
    sigma.ddot(di)
}

/// Explicit exponential update of one branch:
/// `Cᵢ = Uᵢₙ exp(2Δt D̄ᵢₙ) Uᵢₙ`, `Uᵢ = +√Cᵢ`, with `D̄ᵢₙ` taken at `(Uᵢₙ, Cₙ)`.
/// Returns the new `Uᵢ` and the dissipation at the previous state.
pub fn explicit_update<T: Real, E: HelmholtzEnergy<T>, P: DualPotential<T>>(
    branch: &Branch<E, P>,
    state: &BranchState<T>,
    dt: f64,
) -> Result<(SymTensor3<T>, f64), TensorError> {
    if branch.potential.is_zero() || dt == 0.0 {
        return Ok((state.ui, 0.0));
    }
    let sigma = mandel_stress(&branch.energy, &state.ui, &state.cn)?;
    let d = branch.potential.domega_dsigma(&sigma);
    let diss = dissipation_rate(&sigma, &d).value();
    let e = sym_matrix_function(&d.scale(T::from_f64(2.0 * dt)), MatFn::Exp)?;
    let ci = state.ui.congruence(&e);
    let ui = sym_matrix_function(&ci, MatFn::Sqrt)?;
    Ok((ui, diss))
}

fn implicit_residual<T: Real, E: HelmholtzEnergy<T>, P: DualPotential<T>>(
    branch: &Branch<E, P>,
    ui: &SymTensor3<T>,
    cin: &SymTensor3<T>,
    c: &SymTensor3<T>,
    dt: f64,
) -> Result<[T; 6], TensorError> {
    check_spd(ui)?;
    let uinv = ui.inverse()?;
    let l = sym_matrix_function(&uinv.congruence(cin), MatFn::Log)?;
    if branch.potential.is_zero() {
        return Ok(l.to_voigt());
    }
    let sigma = mandel_stress(&branch.energy, ui, c)?;
    let d = branch.potential.domega_dsigma(&sigma);
    Ok((l + d.scale(T::from_f64(2.0 * dt))).to_voigt())
}

fn norm6<T: Real>(r: &[T; 6]) -> f64 {
    r.iter().map(|x| x.value() * x.value()).sum::<f64>().sqrt()
}

/// Implicit exponential update of one branch by Broyden's method with the
/// Sherman–Morrison inverse update, starting from `Uᵢₙ` and `B = I`.
/// Returns the converged `Uᵢ` and the iteration count.
pub fn implicit_update<T: Real, E: HelmholtzEnergy<T>, P: DualPotential<T>>(
    branch: &Branch<E, P>,
    state: &BranchState<T>,
    c: &SymTensor3<T>,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(SymTensor3<T>, usize), Error> {
    let cin = state.ui.squared();
    let mut u = state.ui.to_voigt();
    let mut r = implicit_residual(branch, &state.ui, &cin, c, dt)?;
    if norm6(&r) <= tol {
        return Ok((state.ui, 0));
    }
    let mut b = [[T::zero(); 6]; 6];
    for (i, row) in b.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for m in 1..=max_iter {
        let s: [T; 6] = std::array::from_fn(|i| -T::dot(&b[i], &r));
        for i in 0..6 {
            u[i] += s[i];
        }
        let r_new = implicit_residual(branch, &SymTensor3::from_voigt(u), &cin, c, dt)?;
        let y: [T; 6] = std::array::from_fn(|i| r_new[i] - r[i]);
        let by: [T; 6] = std::array::from_fn(|i| T::dot(&b[i], &y));
        let den = T::dot(&s, &by);
        if !(den.value().abs() >= BROYDEN_GUARD * norm6(&s) * norm6(&by)) {
            return Err(Error::NoConvergence {
                iterations: m,
                residual: norm6(&r_new),
            });
        }
        let stb: [T; 6] = std::array::from_fn(|j| {
            let col: [T; 6] = std::array::from_fn(|i| b[i][j]);
            T::dot(&s, &col)
        });
        for i in 0..6 {
            let f = (s[i] - by[i]) / den;
            for j in 0..6 {
                b[i][j] += f * stb[j];
            }
        }
        r = r_new;
        if norm6(&r) < tol {
            return Ok((SymTensor3::from_voigt(u), m));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: norm6(&r),
    })
}

impl<E, P> MaterialModel<E, P> {
    pub fn new(branches: Vec<Branch<E, P>>) -> Self {
        assert!(!branches.is_empty(), "a material needs at least one branch");
        Self { branches }
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Summed stress at the given state without evolving it.
    pub fn stress<T: Real>(
        &self,
        state: &MaterialState<T>,
        c: &SymTensor3<T>,
    ) -> Result<SymTensor3<T>, TensorError>
    where
        E: HelmholtzEnergy<T>,
        P: DualPotential<T>,
    {
        let mut s = SymTensor3::zero();
        for (b, st) in self.branches.iter().zip(&state.branches) {
            s = s + second_pk(&b.energy, &st.ui, c)?;
        }
        Ok(s)
    }

    pub fn step_explicit<T: Real>(
        &self,
        state: &mut MaterialState<T>,
        c_next: &SymTensor3<T>,
        dt: f64,
    ) -> Result<StepOutput<T>, Error>
    where
        E: HelmholtzEnergy<T>,
        P: DualPotential<T>,
    {
        let mut next = Vec::with_capacity(self.branches.len());
        let mut dissipation = Vec::with_capacity(self.branches.len());
        let mut stress = SymTensor3::zero();
        for (b, st) in self.branches.iter().zip(&state.branches) {
            let (ui, diss) = explicit_update(b, st, dt)?;
            stress = stress + second_pk(&b.energy, &ui, c_next)?;
            dissipation.push(diss);
            next.push(BranchState { ui, cn: *c_next });
        }
        state.branches = next;
        Ok(StepOutput {
            stress,
            dissipation,
            iterations: 0,
        })
    }

    pub fn step_implicit<T: Real>(
        &self,
        state: &mut MaterialState<T>,
        c_next: &SymTensor3<T>,
        dt: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<StepOutput<T>, Error>
    where
        E: HelmholtzEnergy<T>,
        P: DualPotential<T>,
    {
        let mut next = Vec::with_capacity(self.branches.len());
        let mut dissipation = Vec::with_capacity(self.branches.len());
        let mut stress = SymTensor3::zero();
        let mut iterations = 0;
        for (b, st) in self.branches.iter().zip(&state.branches) {
            let (ui, it) = implicit_update(b, st, c_next, dt, tol, max_iter)?;
            iterations += it;
            let diss = if b.potential.is_zero() {
                0.0
            } else {
                let sigma = mandel_stress(&b.energy, &ui, c_next)?;
                dissipation_rate(&sigma, &b.potential.domega_dsigma(&sigma)).value()
            };
            stress = stress + second_pk(&b.energy, &ui, c_next)?;
            dissipation.push(diss);
            next.push(BranchState { ui, cn: *c_next });
        }
        state.branches = next;
        Ok(StepOutput {
            stress,
            dissipation,
            iterations,
        })
    }

    pub fn step<T: Real>(
        &self,
        state: &mut MaterialState<T>,
        c_next: &SymTensor3<T>,
        dt: f64,
        integrator: Integrator,
    ) -> Result<StepOutput<T>, Error>
    where
        E: HelmholtzEnergy<T>,
        P: DualPotential<T>,
    {
        match integrator {
            Integrator::Explicit => self.step_explicit(state, c_next, dt),
            Integrator::Implicit => {
                self.step_implicit(state, c_next, dt, IMPLICIT_TOL, IMPLICIT_MAX_ITER)
            }
        }
    }

    /// Stress history along `(t, C)` samples starting from the initial state.
    /// The first sample only sets the clock; its stress is evaluated at the
    /// initial state.
    pub fn evaluate_path<T: Real>(
        &self,
        path: &[(f64, SymTensor3<T>)],
        integrator: Integrator,
    ) -> Result<Vec<StepOutput<T>>, Error>
    where
        E: HelmholtzEnergy<T>,
        P: DualPotential<T>,
    {
        let mut state = MaterialState::initial(self.branches.len());
        let mut out = Vec::with_capacity(path.len());
        let Some((t0, c0)) = path.first() else {
            return Ok(out);
        };
        let at = |step: usize| move |e: Error| Error::AtStep {
            step,
            source: Box::new(e),
        };
        let s0 = self.stress(&state, c0).map_err(|e| at(0)(e.into()))?;
        out.push(StepOutput {
            stress: s0,
            dissipation: vec![0.0; self.branches.len()],
            iterations: 0,
        });
        for b in state.branches.iter_mut() {
            b.cn = *c0;
        }
        let mut t_prev = *t0;
        for (n, (t, c)) in path.iter().enumerate().skip(1) {
            let dt = t - t_prev;
            if !(dt > 0.0) {
                return Err(Error::Monotonicity { line: n });
            }
            out.push(self.step(&mut state, c, dt, integrator).map_err(at(n))?);
            t_prev = *t;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy_net::{EnergyParams, NeoHooke};
    use crate::potential_net::{classical_config, ClassicalKind, PotentialParams, ReferencePotential};
    use crate::tensor3::Tensor3;

    type Ref = MaterialModel<NeoHooke, ReferencePotential>;

    fn nh() -> NeoHooke {
        NeoHooke { mu: 1.0, kappa: 1.0 }
    }

    fn c_of(f: [f64; 9]) -> SymTensor3<f64> {
        Tensor3::from_row_major(f).right_cauchy_green()
    }

    #[test]
    fn elastic_stretch_cases() {
        let c = c_of([1.2, 0.1, 0.0, 0.05, 0.9, 0.0, 0.0, 0.0, 1.1]);
        let ce = elastic_stretch(&SymTensor3::identity(), &c).unwrap();
        assert!((ce - c).max_abs() < 1e-15);
        let u = sym_matrix_function(&c, MatFn::Sqrt).unwrap();
        let ce = elastic_stretch(&u, &c).unwrap();
        assert!((ce - SymTensor3::identity()).max_abs() < 1e-12);
        let ce = elastic_stretch(&SymTensor3::identity().scale(2.0), &SymTensor3::identity().scale(4.0)).unwrap();
        assert!((ce - SymTensor3::identity()).max_abs() < 1e-15);
    }

    #[test]
    fn mandel_vanishes_at_elastic_identity() {
        let u = SymTensor3::new(1.1, 0.95, 1.02, 0.03, -0.01, 0.02);
        let c = u.squared();
        let s = mandel_stress(&nh(), &u, &c).unwrap();
        assert!(s.max_abs() < 1e-13);
    }

    #[test]
    fn hyperelastic_stress_matches_closed_form() {
        let c = c_of([2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let s = second_pk(&nh(), &SymTensor3::identity(), &c).unwrap();
        // S = μ J^{-2/3}(I − I1/3 C⁻¹) + κ/2 (I3 − 1) C⁻¹, I3 = 4, I1 = 6
        let j23 = 4f64.powf(-1.0 / 3.0);
        let s11 = j23 * (1.0 - 2.0 / 4.0) + 0.5 * 3.0 / 4.0;
        let s22 = j23 * (1.0 - 2.0) + 0.5 * 3.0;
        assert!((s.get(0, 0) - s11).abs() < 1e-14);
        assert!((s.get(1, 1) - s22).abs() < 1e-14);
        assert!((s.get(2, 2) - s22).abs() < 1e-14);
    }

    #[test]
    fn two_identical_branches_double_the_stress() {
        let b = Branch {
            energy: nh(),
            potential: ReferencePotential::CoshJ3 { k1: 2.0 },
        };
        let one = Ref::new(vec![b]);
        let two = Ref::new(vec![b, b]);
        let path: Vec<_> = (0..30)
            .map(|k| {
                let t = k as f64 * 0.05;
                (t, c_of([1.0 + 0.3 * t, 0.1 * t, 0.0, 0.0, 1.0 - 0.1 * t, 0.0, 0.0, 0.0, 1.0]))
            })
            .collect();
        let a = one.evaluate_path(&path, Integrator::Explicit).unwrap();
        let b = two.evaluate_path(&path, Integrator::Explicit).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.stress.scale(2.0), y.stress);
        }
    }

    #[test]
    fn zero_potential_keeps_ui() {
        let m = MaterialModel::new(vec![Branch {
            energy: EnergyParams::neo_hooke(1.0, 1.0),
            potential: PotentialParams::<f64>::zeros(),
        }]);
        let mut st = MaterialState::initial(1);
        let c = c_of([1.3, 0.2, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0, 1.0]);
        for integ in [Integrator::Explicit, Integrator::Implicit] {
            m.step(&mut st, &c, 0.1, integ).unwrap();
            m.step(&mut st, &c, 0.1, integ).unwrap();
            assert_eq!(st.branches[0].ui, SymTensor3::identity());
        }
    }

    #[test]
    fn zero_dt_keeps_ui() {
        let m = Ref::new(vec![Branch {
            energy: nh(),
            potential: ReferencePotential::Quadratic { k1: 0.5, k2: 0.5 },
        }]);
        let mut st = MaterialState::initial(1);
        st.branches[0].cn = c_of([1.3, 0.2, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0, 1.0]);
        let c = st.branches[0].cn;
        m.step_explicit(&mut st, &c, 0.0).unwrap();
        assert_eq!(st.branches[0].ui, SymTensor3::identity());
        let out = m.step_implicit(&mut st, &c, 0.0, 1e-8, 50).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(st.branches[0].ui, SymTensor3::identity());
    }

    #[test]
    fn von_mises_flow_preserves_volume() {
        let m = MaterialModel::new(vec![Branch {
            energy: EnergyParams::neo_hooke(1.0, 1.0),
            potential: classical_config(ClassicalKind::VonMises).unwrap(),
        }]);
        let mut st = MaterialState::initial(1);
        for k in 1..=100 {
            let t = k as f64 * 0.02;
            let c = c_of([1.0 + 0.3 * t.sin(), 0.2 * t, 0.0, 0.0, 1.0 - 0.1 * t.sin(), 0.0, 0.0, 0.0, 1.05]);
            m.step_explicit(&mut st, &c, 0.02).unwrap();
            assert!((st.branches[0].ui.det() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn implicit_converges_and_matches_explicit_for_small_dt() {
        let b = Branch {
            energy: nh(),
            potential: classical_config(ClassicalKind::VonMises).unwrap(),
        };
        let m = MaterialModel::new(vec![b]);
        let mut st = MaterialState::initial(1);
        st.branches[0].ui = SymTensor3::new(1.05, 0.97, 0.99, 0.02, 0.0, -0.01);
        st.branches[0].cn = c_of([1.2, 0.1, 0.0, 0.0, 0.95, 0.0, 0.0, 0.0, 1.0]);
        let c = c_of([1.21, 0.1, 0.0, 0.0, 0.95, 0.0, 0.0, 0.0, 1.0]);
        let dt = 1e-3;
        let mut se = st.clone();
        let mut si = st.clone();
        m.step_explicit(&mut se, &c, dt).unwrap();
        let out = m.step_implicit(&mut si, &c, dt, 1e-10, 50).unwrap();
        assert!(out.iterations > 0 && out.iterations <= 50);
        let diff = (se.branches[0].ui - si.branches[0].ui).max_abs();
        assert!(diff < 1e-4, "diff {diff}");
    }

    #[test]
    fn relaxation_during_hold() {
        let m = Ref::new(vec![Branch {
            energy: nh(),
            potential: ReferencePotential::Quadratic { k1: 0.5, k2: 0.1 },
        }]);
        let mut path = vec![];
        for k in 0..=10 {
            let l = 1.0 + 0.03 * k as f64;
            path.push((k as f64 * 0.05, c_of([l, 0., 0., 0., 1., 0., 0., 0., 1.])));
        }
        let c_hold = path.last().unwrap().1;
        for k in 11..=40 {
            path.push((k as f64 * 0.05, c_hold));
        }
        let out = m.evaluate_path(&path, Integrator::Explicit).unwrap();
        for k in 11..40 {
            assert!(out[k + 1].stress.get(0, 0) < out[k].stress.get(0, 0));
        }
    }

    #[test]
    fn constant_identity_path_is_stress_free() {
        let m = Ref::new(vec![Branch {
            energy: nh(),
            potential: ReferencePotential::CoshJ3 { k1: 2.0 },
        }]);
        let path: Vec<_> = (0..10).map(|k| (k as f64, SymTensor3::<f64>::identity())).collect();
        for integ in [Integrator::Explicit, Integrator::Implicit] {
            for o in m.evaluate_path(&path, integ).unwrap() {
                assert_eq!(o.stress.max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn dissipation_examples() {
        let z = SymTensor3::<f64>::zero();
        let i = SymTensor3::<f64>::identity();
        assert_eq!(dissipation_rate(&i, &z), 0.0);
        assert_eq!(dissipation_rate(&i, &i), 3.0);
    }

    #[test]
    fn integrator_parses() {
        assert_eq!("implicit".parse::<Integrator>().unwrap(), Integrator::Implicit);
        assert!("rk4".parse::<Integrator>().is_err());
        assert_eq!(Integrator::Explicit.to_string(), "explicit");
    }
}
