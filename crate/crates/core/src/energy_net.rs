//! Helmholtz free-energy network ψ(C̄ₑ) and the compressible Neo-Hooke
//! reference energy.
//!
//! Inputs are the shifted isochoric invariants and the determinant:
//! `i1t = Ĩ₁ − 3`, `i2t = Ĩ₂^{3/2} − 3^{3/2}`, `i3 = det C̄ₑ`. The first layer
//! forms `(i1t, i1t², i2t, i2t²)`; each of these feeds a weight-free identity
//! node and an `exp(w·x) − 1` node with a trainable inner weight. `i3` feeds a
//! single volumetric node `x^{p₃} − 1 − ln x^{p₃}`. All nine second-layer
//! outputs are summed with the non-negative weights `w_psi`.

use crate::error::TensorError;
use crate::material::HelmholtzEnergy;
use crate::scalar::Real;
use crate::tensor3::SymTensor3;

/// Lower bound of the volumetric exponent enforced by [`EnergyParams::project`].
pub const P3_MIN: f64 = 1e-3;

/// Trainable parameters of the energy network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams<T> {
    pub w_inner: [T; 4],
    pub w_psi: [T; 9],
    pub p3: T,
}

/// Network inputs derived from `C̄ₑ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticInputs<T> {
    pub i1t: T,
    pub i2t: T,
    pub i3: T,
}

impl<T: Real> EnergyParams<T> {
    /// Number of trainable scalars.
    pub const LEN: usize = 14;

    pub fn zeros() -> Self {
        Self {
            w_inner: [T::zero(); 4],
            w_psi: [T::zero(); 9],
            p3: T::one(),
        }
    }

    /// Flat order: `w_inner[0..4]`, `w_psi[0..9]`, `p3`.
    pub fn from_flat(x: &[T]) -> Self {
        assert_eq!(x.len(), Self::LEN, "energy parameter vector length");
        Self {
            w_inner: std::array::from_fn(|i| x[i]),
            w_psi: std::array::from_fn(|i| x[4 + i]),
            p3: x[13],
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(Self::LEN);
        v.extend_from_slice(&self.w_inner);
        v.extend_from_slice(&self.w_psi);
        v.push(self.p3);
        v
    }

    pub fn values(&self) -> EnergyParams<f64> {
        EnergyParams {
            w_inner: self.w_inner.map(|x| x.value()),
            w_psi: self.w_psi.map(|x| x.value()),
            p3: self.p3.value(),
        }
    }
}

impl EnergyParams<f64> {
    /// Weights reproducing `μ/2 (Ĩ₁ − 3) + κ/4 (I₃ − 1 − ln I₃)`.
    pub fn neo_hooke(mu: f64, kappa: f64) -> Self {
        let mut p = Self::zeros();
        p.w_psi[0] = 0.5 * mu;
        p.w_psi[8] = 0.25 * kappa;
        p
    }

    /// Clamps weights to be non-negative and `p3 ≥ P3_MIN`.
    pub fn project(&mut self) {
        for w in self.w_inner.iter_mut().chain(self.w_psi.iter_mut()) {
            *w = w.max(0.0);
        }
        self.p3 = self.p3.max(P3_MIN);
    }

    pub fn is_feasible(&self) -> bool {
        self.w_inner.iter().chain(&self.w_psi).all(|&w| w >= 0.0) && self.p3 >= P3_MIN
    }

    pub fn lift<T: Real>(&self) -> EnergyParams<T> {
        EnergyParams {
            w_inner: self.w_inner.map(T::from_f64),
            w_psi: self.w_psi.map(T::from_f64),
            p3: T::from_f64(self.p3),
        }
    }
}

struct Kinematics<T> {
    i3: T,
    tr: T,
    i2: T,
    j13: T,
    i1_bar: T,
    i2_bar: T,
}

fn kinematics<T: Real>(ce: &SymTensor3<T>) -> Result<Kinematics<T>, TensorError> {
    let i3 = ce.det();
    if !(i3.value() > 0.0) {
        return Err(TensorError::NotPositiveDefinite {
            min_eigenvalue: i3.value(),
        });
    }
    let tr = ce.trace();
    let i2 = T::from_f64(0.5) * (tr * tr - ce.ddot(ce));
    let j13 = i3.powc(-1.0 / 3.0);
    Ok(Kinematics {
        i3,
        tr,
        i2,
        j13,
        i1_bar: j13 * tr,
        i2_bar: j13 * j13 * i2,
    })
}

/// Network inputs of `C̄ₑ`.
pub fn elastic_inputs<T: Real>(ce: &SymTensor3<T>) -> Result<ElasticInputs<T>, TensorError> {
    let k = kinematics(ce)?;
    Ok(ElasticInputs {
        i1t: k.i1_bar - T::from_f64(3.0),
        i2t: k.i2_bar.powc(1.5) - T::from_f64(3f64.powf(1.5)),
        i3: k.i3,
    })
}

/// `∂Ĩ₁/∂C`, `∂Ĩ₂/∂C`, `∂I₃/∂C`.
fn invariant_derivatives<T: Real>(
    ce: &SymTensor3<T>,
    k: &Kinematics<T>,
) -> Result<[SymTensor3<T>; 3], TensorError> {
    let cinv = ce.inverse()?;
    let id = SymTensor3::identity();
    let third = T::from_f64(1.0 / 3.0);
    let d1 = (id - cinv.scale(k.tr * third)).scale(k.j13);
    let d2 = (id.scale(k.tr) - *ce - cinv.scale(T::from_f64(2.0 / 3.0) * k.i2))
        .scale(k.j13 * k.j13);
    let d3 = cinv.scale(k.i3);
    Ok([d1, d2, d3])
}

impl<T: Real> EnergyParams<T> {
    pub fn psi_eval(&self, ce: &SymTensor3<T>) -> Result<T, TensorError> {
        let inp = elastic_inputs(ce)?;
        let xs = [inp.i1t, inp.i1t * inp.i1t, inp.i2t, inp.i2t * inp.i2t];
        let mut psi = T::zero();
        for k in 0..4 {
            let e = (self.w_inner[k] * xs[k]).exp() - T::one();
            psi += self.w_psi[k] * xs[k] + self.w_psi[4 + k] * e;
        }
        let ln3 = inp.i3.ln();
        let pl = self.p3 * ln3;
        psi += self.w_psi[8] * (pl.exp() - T::one() - pl);
        Ok(psi)
    }

    pub fn dpsi_dce(&self, ce: &SymTensor3<T>) -> Result<SymTensor3<T>, TensorError> {
        let k = kinematics(ce)?;
        let three = T::from_f64(3.0);
        let two = T::from_f64(2.0);
        let i1t = k.i1_bar - three;
        let sqrt_i2b = k.i2_bar.sqrt();
        let i2t = k.i2_bar * sqrt_i2b - T::from_f64(3f64.powf(1.5));

        let slope = |a: usize, x: T| {
            let e = (self.w_inner[a] * x).exp();
            self.w_psi[a] + self.w_psi[4 + a] * self.w_inner[a] * e
        };
        let d_i1t = slope(0, i1t) + two * i1t * slope(1, i1t * i1t);
        let d_i2t = slope(2, i2t) + two * i2t * slope(3, i2t * i2t);
        let d_i2b = d_i2t * T::from_f64(1.5) * sqrt_i2b;
        let pe = (self.p3 * k.i3.ln()).exp();
        let d_i3 = self.w_psi[8] * self.p3 * (pe - T::one()) / k.i3;

        let [d1, d2, d3] = invariant_derivatives(ce, &k)?;
        Ok(d1.scale(d_i1t) + d2.scale(d_i2b) + d3.scale(d_i3))
    }
}

impl<T: Real> HelmholtzEnergy<T> for EnergyParams<T> {
    fn psi(&self, ce: &SymTensor3<T>) -> Result<T, TensorError> {
        self.psi_eval(ce)
    }

    fn dpsi_dce(&self, ce: &SymTensor3<T>) -> Result<SymTensor3<T>, TensorError> {
        EnergyParams::dpsi_dce(self, ce)
    }
}

/// Compressible Neo-Hooke energy `μ/2 (Ĩ₁ − 3) + κ/4 (I₃ − 1 − ln I₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeoHooke {
    pub mu: f64,
    pub kappa: f64,
}

impl<T: Real> HelmholtzEnergy<T> for NeoHooke {
    fn psi(&self, ce: &SymTensor3<T>) -> Result<T, TensorError> {
        let k = kinematics(ce)?;
        let mu = T::from_f64(self.mu);
        let kappa = T::from_f64(self.kappa);
        Ok(T::from_f64(0.5) * mu * (k.i1_bar - T::from_f64(3.0))
            + T::from_f64(0.25) * kappa * (k.i3 - T::one() - k.i3.ln()))
    }

    fn dpsi_dce(&self, ce: &SymTensor3<T>) -> Result<SymTensor3<T>, TensorError> {
        let k = kinematics(ce)?;
        let cinv = ce.inverse()?;
        let mu = T::from_f64(self.mu);
        let kappa = T::from_f64(self.kappa);
        let iso = (SymTensor3::identity() - cinv.scale(k.tr / T::from_f64(3.0)))
            .scale(T::from_f64(0.5) * mu * k.j13);
        let vol = cinv.scale(T::from_f64(0.25) * kappa * (k.i3 - T::one()));
        Ok(iso + vol)
    }
}
