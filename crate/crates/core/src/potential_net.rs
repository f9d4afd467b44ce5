//! Dual potential network ω*(Σ̄), its analytic stress derivative, the
//! classical potentials expressible in it, and the analytic reference
//! potentials used to generate data.
//!
//! Layout of the 316 trainable scalars:
//!
//! | block   | shape | constraint |
//! |---------|-------|------------|
//! | `w0`    | 18×5  | none       |
//! | `w1`    | 8×18  | ≥ 0        |
//! | `w2`    | 8×8   | ≥ 0        |
//! | `w_out` | 8     | ≥ 0        |
//! | `b1`    | 4     | ≤ 0        |
//! | `b2`    | 4     | ≤ 0        |
//! | `p1`    | 1     | ≥ 0        |
//! | `p2`    | 1     | ≥ 0        |
//!
//! Layer I neurons 0–5 are the identity, 6–11 `|x|^{p₁+1}` and 12–17
//! `ln cosh(|x|^{p₂+1})`. Layers II and III use `max(x + b, 0)` on neurons
//! 0–3 and `exp(x) − 1` on neurons 4–7. A weight-free `max(x, 0)` precedes the
//! output weights.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::material::DualPotential;
use crate::scalar::Real;
use crate::tensor3::{
    invariant_gradients, invariants, smoothed_cbrt_deriv, smoothed_sqrt_deriv, InvariantVector,
    SymTensor3,
};

pub const N_IN: usize = 5;
pub const N_I: usize = 18;
pub const N_H: usize = 8;

/// Offsets of the power activation. Only their sum enters the evaluated form.
pub const POW_EPS1: f64 = 1e-4;
pub const POW_EPS2: f64 = 1e-4;
const POW_EPS: f64 = POW_EPS1 + POW_EPS2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams<T> {
    pub w0: [[T; N_IN]; N_I],
    pub w1: [[T; N_I]; N_H],
    pub w2: [[T; N_H]; N_H],
    pub w_out: [T; N_H],
    pub b1: [T; 4],
    pub b2: [T; 4],
    pub p1: T,
    pub p2: T,
}

/// `(|x| + ε)^q − ε^q`: zero at the origin, convex for `q ≥ 1`.
/// Returns the value and `ln(|x| + ε)` for reuse in the derivative.
#[inline]
fn power_act<T: Real>(x: T, q: T) -> (T, T) {
    let l = (x.abs() + T::from_f64(POW_EPS)).ln();
    let v = (q * l).exp() - (q * T::from_f64(POW_EPS.ln())).exp();
    (v, l)
}

#[inline]
fn power_act_deriv<T: Real>(x: T, q: T, l: T) -> T {
    let s = x.sign();
    if s == 0.0 {
        return T::zero();
    }
    q * ((q - T::one()) * l).exp() * T::from_f64(s)
}

/// Overflow-safe `ln cosh y`.
#[inline]
fn ln_cosh<T: Real>(y: T) -> T {
    let a = y.abs();
    a + (T::one() + (a * T::from_f64(-2.0)).exp()).ln() - T::from_f64(std::f64::consts::LN_2)
}

struct Forward<T> {
    x0: [T; N_I],
    logs: [T; 12],
    y2: [T; 6],
    e1: [T; 4],
    act1: [bool; 4],
    e2: [T; 4],
    act2: [bool; 4],
    out_active: [bool; N_H],
    omega: T,
}

impl<T: Real> PotentialParams<T> {
    pub const LEN: usize = 316;

    pub fn zeros() -> Self {
        let z = T::zero();
        Self {
            w0: [[z; N_IN]; N_I],
            w1: [[z; N_I]; N_H],
            w2: [[z; N_H]; N_H],
            w_out: [z; N_H],
            b1: [z; 4],
            b2: [z; 4],
            p1: z,
            p2: z,
        }
    }

    pub fn from_flat(x: &[T]) -> Self {
        assert_eq!(x.len(), Self::LEN, "potential parameter vector length");
        let mut it = x.iter().copied();
        let mut next = || it.next().unwrap();
        let mut p = Self::zeros();
        for row in p.w0.iter_mut() {
            for w in row.iter_mut() {
                *w = next();
            }
        }
        for row in p.w1.iter_mut() {
            for w in row.iter_mut() {
                *w = next();
            }
        }
        for row in p.w2.iter_mut() {
            for w in row.iter_mut() {
                *w = next();
            }
        }
        for w in p.w_out.iter_mut().chain(p.b1.iter_mut()).chain(p.b2.iter_mut()) {
            *w = next();
        }
        p.p1 = next();
        p.p2 = next();
        p
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(Self::LEN);
        self.w0.iter().for_each(|r| v.extend_from_slice(r));
        self.w1.iter().for_each(|r| v.extend_from_slice(r));
        self.w2.iter().for_each(|r| v.extend_from_slice(r));
        v.extend_from_slice(&self.w_out);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.b2);
        v.push(self.p1);
        v.push(self.p2);
        v
    }

    pub fn values(&self) -> PotentialParams<f64> {
        PotentialParams::from_flat(&self.to_flat().iter().map(|x| x.value()).collect::<Vec<_>>())
    }

    /// True when every output weight is an exact constant zero, i.e. ω* ≡ 0
    /// and no derivative with respect to the weights is requested.
    pub fn is_inactive(&self) -> bool {
        self.w_out.iter().all(|w| w.is_constant() && w.value() == 0.0)
    }

    fn forward(&self, z: &[T; N_IN]) -> Forward<T> {
        let one = T::one();
        let q1 = self.p1 + one;
        let q2 = self.p2 + one;
        let x0: [T; N_I] = std::array::from_fn(|k| T::dot(&self.w0[k], z));
        let mut a0 = [T::zero(); N_I];
        let mut logs = [T::zero(); 12];
        let mut y2 = [T::zero(); 6];
        a0[..6].copy_from_slice(&x0[..6]);
        for k in 6..12 {
            let (v, l) = power_act(x0[k], q1);
            a0[k] = v;
            logs[k - 6] = l;
        }
        for k in 12..18 {
            let (v, l) = power_act(x0[k], q2);
            y2[k - 12] = v;
            logs[k - 6] = l;
            a0[k] = ln_cosh(v);
        }

        let (a1, e1, act1) = Self::hidden(&self.w1, &a0, &self.b1);
        let (a2, e2, act2) = Self::hidden(&self.w2, &a1, &self.b2);
        let out_active: [bool; N_H] = std::array::from_fn(|j| a2[j].value() > 0.0);
        let a3: [T; N_H] = std::array::from_fn(|j| a2[j].relu());
        let omega = T::dot(&self.w_out, &a3);
        Forward {
            x0,
            logs,
            y2,
            e1,
            act1,
            e2,
            act2,
            out_active,
            omega,
        }
    }

    #[allow(clippy::type_complexity)]
    fn hidden<const N: usize>(
        w: &[[T; N]; N_H],
        a: &[T; N],
        b: &[T; 4],
    ) -> ([T; N_H], [T; 4], [bool; 4]) {
        let mut out = [T::zero(); N_H];
        let mut e = [T::zero(); 4];
        let mut act = [false; 4];
        for j in 0..4 {
            let x = T::dot(&w[j], a) + b[j];
            act[j] = x.value() > 0.0;
            out[j] = x.relu();
        }
        for j in 4..8 {
            let ex = T::dot(&w[j], a).exp();
            e[j - 4] = ex;
            out[j] = ex - T::one();
        }
        (out, e, act)
    }

    /// Adjoint of the hidden layer: from `∂ω/∂out` to `∂ω/∂a`.
    fn hidden_back<const N: usize>(
        w: &[[T; N]; N_H],
        g_out: &[T; N_H],
        e: &[T; 4],
        act: &[bool; 4],
    ) -> [T; N] {
        let mut g_x = [T::zero(); N_H];
        for j in 0..4 {
            if act[j] {
                g_x[j] = g_out[j];
            }
        }
        for j in 4..8 {
            g_x[j] = g_out[j] * e[j - 4];
        }
        std::array::from_fn(|k| {
            let col: [T; N_H] = std::array::from_fn(|j| w[j][k]);
            T::dot(&col, &g_x)
        })
    }

    pub fn omega_from_z(&self, z: &[T; N_IN]) -> T {
        self.forward(z).omega
    }

    /// `ω*(z)` and `∂ω*/∂z`.
    pub fn domega_dz(&self, z: &[T; N_IN]) -> (T, [T; N_IN]) {
        if self.is_inactive() {
            return (T::zero(), [T::zero(); N_IN]);
        }
        let f = self.forward(z);
        let one = T::one();
        let g_a2: [T; N_H] = std::array::from_fn(|j| {
            if f.out_active[j] {
                self.w_out[j]
            } else {
                T::zero()
            }
        });
        let g_a1 = Self::hidden_back(&self.w2, &g_a2, &f.e2, &f.act2);
        let g_a0 = Self::hidden_back(&self.w1, &g_a1, &f.e1, &f.act1);
        let q1 = self.p1 + one;
        let q2 = self.p2 + one;
        let mut g_x0 = [T::zero(); N_I];
        g_x0[..6].copy_from_slice(&g_a0[..6]);
        for k in 6..12 {
            g_x0[k] = g_a0[k] * power_act_deriv(f.x0[k], q1, f.logs[k - 6]);
        }
        for k in 12..18 {
            let inner = power_act_deriv(f.x0[k], q2, f.logs[k - 6]);
            g_x0[k] = g_a0[k] * f.y2[k - 12].tanh() * inner;
        }
        let g_z = std::array::from_fn(|m| {
            let col: [T; N_I] = std::array::from_fn(|k| self.w0[k][m]);
            T::dot(&col, &g_x0)
        });
        (f.omega, g_z)
    }

    pub fn omega_eval(&self, sigma: &SymTensor3<T>) -> T {
        if self.is_inactive() {
            return T::zero();
        }
        self.omega_from_z(&InvariantVector::of(sigma).z)
    }

    /// `∂ω*/∂Σ̄` through the smoothed invariants.
    pub fn domega_dsigma(&self, sigma: &SymTensor3<T>) -> SymTensor3<T> {
        if self.is_inactive() {
            return SymTensor3::zero();
        }
        let inv = invariants(sigma);
        let z = InvariantVector::from_invariants(&inv).z;
        let (_, g) = self.domega_dz(&z);
        let d = invariant_gradients(sigma);
        d.di1.scale(g[0])
            + d.dj2.scale(g[1] * smoothed_sqrt_deriv(inv.j2))
            + d.dj3.scale(g[2] * smoothed_cbrt_deriv(inv.j3))
            + d.di2.scale(g[3] * smoothed_sqrt_deriv(inv.i2))
            + d.di3.scale(g[4] * smoothed_cbrt_deriv(inv.i3))
    }
}

impl PotentialParams<f64> {
    /// Clamps to the feasible set; `w0` is left untouched.
    pub fn project(&mut self) {
        for w in self
            .w1
            .iter_mut()
            .flatten()
            .chain(self.w2.iter_mut().flatten())
            .chain(self.w_out.iter_mut())
        {
            *w = w.max(0.0);
        }
        for b in self.b1.iter_mut().chain(self.b2.iter_mut()) {
            *b = b.min(0.0);
        }
        self.p1 = self.p1.max(0.0);
        self.p2 = self.p2.max(0.0);
    }

    pub fn is_feasible(&self) -> bool {
        self.w1.iter().flatten().all(|&w| w >= 0.0)
            && self.w2.iter().flatten().all(|&w| w >= 0.0)
            && self.w_out.iter().all(|&w| w >= 0.0)
            && self.b1.iter().chain(&self.b2).all(|&b| b <= 0.0)
            && self.p1 >= 0.0
            && self.p2 >= 0.0
    }

    pub fn lift<T: Real>(&self) -> PotentialParams<T> {
        PotentialParams::from_flat(&self.to_flat().into_iter().map(T::from_f64).collect::<Vec<_>>())
    }
}

impl<T: Real> DualPotential<T> for PotentialParams<T> {
    fn omega(&self, sigma: &SymTensor3<T>) -> T {
        self.omega_eval(sigma)
    }

    fn domega_dsigma(&self, sigma: &SymTensor3<T>) -> SymTensor3<T> {
        PotentialParams::domega_dsigma(self, sigma)
    }

    fn is_zero(&self) -> bool {
        self.is_inactive()
    }
}

/// Classical potentials that the network reproduces exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalKind {
    /// `√(3 J₂)`
    VonMises,
    /// `√(3 J₂) + ξ I₁` with `ξ = (σc − σt)/(σc + σt)`
    DruckerPrager { sigma_c: f64, sigma_t: f64 },
    /// `√(3 J₂) + ζ₁ I₁ + ζ₂ I₁²`
    BreslerPister { zeta1: f64, zeta2: f64 },
    /// `3 J₂ + (σc − σt) I₁`
    Stassi { sigma_c: f64, sigma_t: f64 },
    /// `J₂ / (4μ) + I₁² / (18κ)`
    Quadratic { mu: f64, kappa: f64 },
    /// `I₁ + √I₂`
    MaxPrincipal,
}

impl ClassicalKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::VonMises => "von-mises",
            Self::DruckerPrager { .. } => "drucker-prager",
            Self::BreslerPister { .. } => "bresler-pister",
            Self::Stassi { .. } => "stassi",
            Self::Quadratic { .. } => "quadratic",
            Self::MaxPrincipal => "max-principal",
        }
    }
}

/// Columns of `w0` fed by the reduced inputs `(I₁, √J₂, √I₂)`.
const REDUCED_INPUTS: [usize; 3] = [0, 1, 3];
/// Rows of `w0` used by the reduced layer I: one identity, two power neurons.
const REDUCED_NEURONS: [usize; 3] = [0, 6, 7];

/// Weights reproducing a classical potential with the reduced wiring:
/// three layer-I neurons feeding one max neuron in each hidden layer, `p₁ = 1`.
pub fn classical_config(kind: ClassicalKind) -> Result<PotentialParams<f64>, Error> {
    let s3 = 3f64.sqrt();
    let (rows, w_next): ([[f64; 3]; 3], [f64; 3]) = match kind {
        ClassicalKind::VonMises => ([[0., 1., 0.], [0.; 3], [0.; 3]], [s3, 0., 0.]),
        ClassicalKind::DruckerPrager { sigma_c, sigma_t } => {
            let sum = sigma_c + sigma_t;
            if sum == 0.0 || !sum.is_finite() {
                return Err(Error::InvalidConstant(format!(
                    "σc + σt must be non-zero, got {sum}"
                )));
            }
            let xi = (sigma_c - sigma_t) / sum;
            ([[xi, s3, 0.], [0.; 3], [0.; 3]], [1., 0., 0.])
        }
        ClassicalKind::BreslerPister { zeta1, zeta2 } => {
            if !(zeta2 >= 0.0) {
                return Err(Error::InvalidConstant(format!("ζ₂ must be ≥ 0, got {zeta2}")));
            }
            ([[zeta1, s3, 0.], [1., 0., 0.], [0.; 3]], [1., zeta2, 0.])
        }
        ClassicalKind::Stassi { sigma_c, sigma_t } => (
            [[sigma_c - sigma_t, 0., 0.], [0., s3, 0.], [0.; 3]],
            [1., 1., 0.],
        ),
        ClassicalKind::Quadratic { mu, kappa } => {
            if !(mu > 0.0 && kappa > 0.0) {
                return Err(Error::InvalidConstant(format!(
                    "μ and κ must be positive, got μ={mu}, κ={kappa}"
                )));
            }
            (
                [[0.; 3], [1., 0., 0.], [0., 1., 0.]],
                [0., 1.0 / (18.0 * kappa), 0.25 / mu],
            )
        }
        ClassicalKind::MaxPrincipal => ([[1., 0., 1.], [0.; 3], [0.; 3]], [1., 0., 0.]),
    };
    let mut p = PotentialParams::<f64>::zeros();
    for (r, row) in rows.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            p.w0[REDUCED_NEURONS[r]][REDUCED_INPUTS[c]] = w;
        }
        p.w1[0][REDUCED_NEURONS[r]] = w_next[r];
    }
    p.w2[0][0] = 1.0;
    p.w_out[0] = 1.0;
    p.p1 = 1.0;
    Ok(p)
}

/// Analytic dual potentials used to generate reference data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferencePotential {
    /// Purely elastic branch.
    Zero,
    /// `K₁ (cosh(J₃ / (J₂ + 1)) − 1)`
    CoshJ3 { k1: f64 },
    /// `2 K₁ J₂ + K₂ I₂²`
    Quadratic { k1: f64, k2: f64 },
}

impl<T: Real> DualPotential<T> for ReferencePotential {
    fn omega(&self, sigma: &SymTensor3<T>) -> T {
        let inv = invariants(sigma);
        match *self {
            Self::Zero => T::zero(),
            Self::CoshJ3 { k1 } => {
                let r = inv.j3 / (inv.j2 + T::one());
                T::from_f64(k1) * (r.cosh() - T::one())
            }
            Self::Quadratic { k1, k2 } => {
                T::from_f64(2.0 * k1) * inv.j2 + T::from_f64(k2) * inv.i2 * inv.i2
            }
        }
    }

    fn domega_dsigma(&self, sigma: &SymTensor3<T>) -> SymTensor3<T> {
        match *self {
            Self::Zero => SymTensor3::zero(),
            Self::CoshJ3 { k1 } => {
                let inv = invariants(sigma);
                let d = invariant_gradients(sigma);
                let den = inv.j2 + T::one();
                let r = inv.j3 / den;
                let c = T::from_f64(k1) * r.sinh();
                (d.dj3.scale(T::one() / den) - d.dj2.scale(inv.j3 / (den * den))).scale(c)
            }
            Self::Quadratic { k1, k2 } => {
                let inv = invariants(sigma);
                sigma.deviator().scale(T::from_f64(2.0 * k1))
                    + sigma.scale(T::from_f64(2.0 * k2) * inv.i2)
            }
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor3::smoothed_sqrt;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feasible(seed: u64) -> PotentialParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..316).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = PotentialParams::from_flat(&x);
        for b in p.b1.iter_mut().chain(p.b2.iter_mut()) {
            *b *= 0.1;
        }
        for w in p.w1.iter_mut().flatten().chain(p.w2.iter_mut().flatten()) {
            *w = w.abs() * 0.02;
        }
        p.project();
        p
    }

    fn random_sigma(rng: &mut ChaCha8Rng) -> SymTensor3<f64> {
        SymTensor3::from_voigt(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn parameter_count_and_flat_round_trip() {
        assert_eq!(PotentialParams::<f64>::LEN, 90 + 144 + 64 + 8 + 4 + 4 + 1 + 1);
        let p = random_feasible(3);
        let flat = p.to_flat();
        assert_eq!(flat.len(), 316);
        assert_eq!(PotentialParams::from_flat(&flat), p);
    }

    #[test]
    fn zero_valued() {
        for s in 0..20 {
            let p = random_feasible(s);
            assert_eq!(p.omega_eval(&SymTensor3::zero()), 0.0);
            assert_eq!(p.domega_dsigma(&SymTensor3::zero()).max_abs(), 0.0);
        }
    }

    #[test]
    fn power_activation_is_zero_at_origin() {
        let (v, _) = power_act(0.0f64, 2.7);
        assert_eq!(v, 0.0);
        let (v, _) = power_act(1.0f64, 2.0);
        assert!((v - ((1.0 + POW_EPS).powi(2) - POW_EPS * POW_EPS)).abs() < 1e-15);
    }

    #[test]
    fn von_mises_value() {
        let p = classical_config(ClassicalKind::VonMises).unwrap();
        let w = p.omega_eval(&SymTensor3::diag(1.0, 0.0, 0.0));
        let oracle = 3f64.sqrt() * (1.0 / 3.0) / (1.0 / 3.0 + 0.01f64).sqrt();
        assert!((w - oracle).abs() < 1e-14);
        assert!((w - 0.985329278164293).abs() < 1e-12);
    }

    #[test]
    fn von_mises_direction_is_deviatoric() {
        let p = classical_config(ClassicalKind::VonMises).unwrap();
        let sigma = SymTensor3::diag(2.0, 0.0, 0.0);
        let d = p.domega_dsigma(&sigma);
        let dev = sigma.deviator();
        let ratio = d.get(0, 0) / dev.get(0, 0);
        assert!((d - dev.scale(ratio)).max_abs() < 1e-14);
        assert!(d.trace().abs() < 1e-14);
    }

    #[test]
    fn quadratic_hydrostatic() {
        let p = classical_config(ClassicalKind::Quadratic { mu: 25.0, kappa: 50.0 }).unwrap();
        let s = 0.7;
        let w = p.omega_eval(&SymTensor3::identity().scale(s));
        let i1 = 3.0 * s;
        let oracle = ((i1 + POW_EPS).powi(2) - POW_EPS * POW_EPS) / (18.0 * 50.0);
        assert!((w - oracle).abs() < 1e-14 * oracle.abs().max(1.0));
    }

    #[test]
    fn drucker_prager_is_clamped() {
        let p = classical_config(ClassicalKind::DruckerPrager { sigma_c: 1.0, sigma_t: 3.0 }).unwrap();
        assert_eq!(p.omega_eval(&SymTensor3::identity().scale(2.0)), 0.0);
    }

    #[test]
    fn bresler_pister_rejects_negative_zeta2() {
        let r = classical_config(ClassicalKind::BreslerPister { zeta1: 0.1, zeta2: -1.0 });
        assert!(matches!(r, Err(Error::InvalidConstant(_))));
    }

    #[test]
    fn drucker_prager_degenerates_to_von_mises() {
        let dp = classical_config(ClassicalKind::DruckerPrager { sigma_c: 2.0, sigma_t: 2.0 }).unwrap();
        let vm = classical_config(ClassicalKind::VonMises).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = random_sigma(&mut rng);
            let a = dp.omega_eval(&s);
            let b = vm.omega_eval(&s);
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            assert!((a - 3f64.sqrt() * smoothed_sqrt(invariants(&s).j2)).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_clamps() {
        let mut p = PotentialParams::<f64>::zeros();
        p.w1[2][5] = -0.5;
        p.p1 = -0.1;
        p.b2[1] = 0.3;
        p.w0[0][0] = -4.0;
        p.project();
        assert_eq!(p.w1[2][5], 0.0);
        assert_eq!(p.p1, 0.0);
        assert_eq!(p.b2[1], 0.0);
        assert_eq!(p.w0[0][0], -4.0);
        let q = {
            let mut q = p;
            q.project();
            q
        };
        assert_eq!(p, q);
    }

    #[test]
    fn reference_potentials_are_dissipative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let s = random_sigma(&mut rng);
            for rp in [
                ReferencePotential::CoshJ3 { k1: 2.0 },
                ReferencePotential::Quadratic { k1: 4e-5, k2: 7.2e-4 },
            ] {
                let d: SymTensor3<f64> = rp.domega_dsigma(&s);
                assert!(s.ddot(&d) >= 0.0);
            }
        }
    }

    fn fd_tensor(f: impl Fn(&SymTensor3<f64>) -> f64, s: &SymTensor3<f64>) -> [f64; 6] {
        let v = s.to_voigt();
        std::array::from_fn(|k| {
            let h = 1e-6;
            let mut p = v;
            let mut m = v;
            p[k] += h;
            m[k] -= h;
            let fd = (f(&SymTensor3::from_voigt(p)) - f(&SymTensor3::from_voigt(m))) / (2.0 * h);
            if k >= 3 {
                0.5 * fd
            } else {
                fd
            }
        })
    }

    #[test]
    fn reference_derivatives_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s = random_sigma(&mut rng);
            for rp in [
                ReferencePotential::CoshJ3 { k1: 2.0 },
                ReferencePotential::Quadratic { k1: 0.3, k2: 0.2 },
            ] {
                let d: SymTensor3<f64> = rp.domega_dsigma(&s);
                let fd = fd_tensor(|x| DualPotential::<f64>::omega(&rp, x), &s);
                for k in 0..6 {
                    assert!((fd[k] - d.to_voigt()[k]).abs() < 1e-7 * fd[k].abs().max(1.0));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn network_derivative_matches_differences(seed in 0u64..1000, v in proptest::array::uniform6(-1.0f64..1.0)) {
            let p = random_feasible(seed);
            let s = SymTensor3::from_voigt(v);
            let d = p.domega_dsigma(&s).to_voigt();
            let fd = fd_tensor(|x| p.omega_eval(x), &s);
            for k in 0..6 {
                prop_assert!((fd[k] - d[k]).abs() <= 1e-6 * fd[k].abs().max(d[k].abs()).max(1.0),
                    "k={} fd={} an={}", k, fd[k], d[k]);
            }
        }

        #[test]
        fn non_negative_and_convex_in_z(
            seed in 0u64..1000,
            za in proptest::array::uniform5(-2.0f64..2.0),
            zb in proptest::array::uniform5(-2.0f64..2.0),
        ) {
            let p = random_feasible(seed);
            let fa = p.omega_from_z(&za);
            let fb = p.omega_from_z(&zb);
            let zm: [f64; 5] = std::array::from_fn(|i| 0.5 * (za[i] + zb[i]));
            prop_assert!(fa >= 0.0 && fb >= 0.0);
            prop_assert!(p.omega_from_z(&zm) <= 0.5 * (fa + fb) + 1e-10);
            let (_, g) = p.domega_dz(&za);
            let gz: f64 = g.iter().zip(&za).map(|(a, b)| a * b).sum();
            prop_assert!(gz >= -1e-12 * fa.max(1.0));
        }
    }
}
