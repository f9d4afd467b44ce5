//! Fixed-size 3×3 tensor algebra.
//!
//! [`SymTensor3`] stores the six independent components in Voigt order
//! `(11, 22, 33, 12, 13, 23)` without any scaling of the shear entries.
//! That ordering is also the layout of stress vectors in the loss and of the
//! unknown vector in the implicit integrator.

pub mod eigen;

use std::ops::{Add, Neg, Sub};

use crate::error::TensorError;
use crate::scalar::Real;

/// Smoothing constant of the square root applied to `J₂` and `I₂`.
pub const EPS_SQRT: f64 = 0.01;
/// Smoothing constant of the cubic root applied to `J₃` and `I₃`.
pub const EPS_CBRT: f64 = 0.01;

/// Isotropic matrix function evaluated through the spectral decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatFn {
    Exp,
    Log,
    Sqrt,
}

const VOIGT_IJ: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

#[inline]
fn voigt_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

/// Symmetric second-order tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor3<T> {
    v: [T; 6],
}

impl<T: Real> SymTensor3<T> {
    pub fn new(a11: T, a22: T, a33: T, a12: T, a13: T, a23: T) -> Self {
        Self {
            v: [a11, a22, a33, a12, a13, a23],
        }
    }

    pub fn zero() -> Self {
        Self { v: [T::zero(); 6] }
    }

    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        Self::new(o, o, o, z, z, z)
    }

    pub fn diag(a: T, b: T, c: T) -> Self {
        let z = T::zero();
        Self::new(a, b, c, z, z, z)
    }

    /// Voigt order `(11, 22, 33, 12, 13, 23)`, no shear scaling.
    pub fn from_voigt(v: [T; 6]) -> Self {
        Self { v }
    }

    pub fn to_voigt(&self) -> [T; 6] {
        self.v
    }

    pub fn voigt(&self) -> &[T; 6] {
        &self.v
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.v[voigt_index(i, j)]
    }

    /// Converts a plain tensor into this scalar type as constants.
    pub fn lift(t: &SymTensor3<f64>) -> Self {
        Self {
            v: t.v.map(T::from_f64),
        }
    }

    pub fn values(&self) -> SymTensor3<f64> {
        SymTensor3 {
            v: self.v.map(|x| x.value()),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            v: self.v.map(|x| x * s),
        }
    }

    pub fn trace(&self) -> T {
        self.v[0] + self.v[1] + self.v[2]
    }

    pub fn det(&self) -> T {
        let [a, b, c, d, e, f] = self.v;
        // a(bc - f²) - d(dc - fe) + e(df - be)
        a * (b * c - f * f) - d * (d * c - f * e) + e * (d * f - b * e)
    }

    /// Adjugate divided by the determinant.
    pub fn inverse(&self) -> Result<Self, TensorError> {
        let [a, b, c, d, e, f] = self.v;
        let c11 = b * c - f * f;
        let c22 = a * c - e * e;
        let c33 = a * b - d * d;
        let c12 = e * f - d * c;
        let c13 = d * f - b * e;
        let c23 = d * e - a * f;
        let det = a * c11 + d * c12 + e * c13;
        let dv = det.value();
        if dv == 0.0 || !dv.is_finite() {
            return Err(TensorError::Singular);
        }
        let inv = T::one() / det;
        Ok(Self::new(
            c11 * inv,
            c22 * inv,
            c33 * inv,
            c12 * inv,
            c13 * inv,
            c23 * inv,
        ))
    }

    /// `t - (tr t / 3) I`.
    pub fn deviator(&self) -> Self {
        let m = self.trace() / T::from_f64(3.0);
        let [a, b, c, d, e, f] = self.v;
        Self::new(a - m, b - m, c - m, d, e, f)
    }

    /// `A · A`.
    pub fn squared(&self) -> Self {
        let [a, b, c, d, e, f] = self.v;
        Self::new(
            a * a + d * d + e * e,
            d * d + b * b + f * f,
            e * e + f * f + c * c,
            a * d + d * b + e * f,
            a * e + d * f + e * c,
            d * e + b * f + f * c,
        )
    }

    /// Full double contraction `A : B`.
    pub fn ddot(&self, o: &Self) -> T {
        let x = &self.v;
        let y = &o.v;
        let two = T::from_f64(2.0);
        T::dot(&x[..3], &y[..3]) + two * T::dot(&x[3..], &y[3..])
    }

    pub fn norm(&self) -> T {
        self.ddot(self).sqrt()
    }

    /// General product `A · B`.
    pub fn mul(&self, o: &Self) -> Tensor3<T> {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                let a = [self.get(i, 0), self.get(i, 1), self.get(i, 2)];
                let b = [o.get(0, j), o.get(1, j), o.get(2, j)];
                *x = T::dot(&a, &b);
            }
        }
        Tensor3 { m }
    }

    /// `sym(A · B)`.
    pub fn sym_mul(&self, o: &Self) -> Self {
        self.mul(o).sym()
    }

    /// `P · M · P` with `self = P`; symmetric for symmetric `M`.
    pub fn congruence(&self, m: &Self) -> Self {
        let pm = self.mul(m);
        let mut out = [T::zero(); 6];
        for (k, &(i, j)) in VOIGT_IJ.iter().enumerate() {
            let a = [pm.m[i][0], pm.m[i][1], pm.m[i][2]];
            let b = [self.get(0, j), self.get(1, j), self.get(2, j)];
            out[k] = T::dot(&a, &b);
        }
        Self { v: out }
    }

    pub fn to_full(&self) -> Tensor3<T> {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.get(i, j);
            }
        }
        Tensor3 { m }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.value().abs()))
    }
}

impl<T: Real> Add for SymTensor3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut v = self.v;
        for (x, y) in v.iter_mut().zip(o.v) {
            *x += y;
        }
        Self { v }
    }
}

impl<T: Real> Sub for SymTensor3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut v = self.v;
        for (x, y) in v.iter_mut().zip(o.v) {
            *x -= y;
        }
        Self { v }
    }
}

impl<T: Real> Neg for SymTensor3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: self.v.map(|x| -x) }
    }
}

/// General 3×3 tensor, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Tensor3<T> {
    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        SymTensor3::identity().to_full()
    }

    pub fn diag(a: T, b: T, c: T) -> Self {
        SymTensor3::diag(a, b, c).to_full()
    }

    pub fn transpose(&self) -> Self {
        let mut m = self.m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.m[j][i];
            }
        }
        Self { m }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                let b = [o.m[0][j], o.m[1][j], o.m[2][j]];
                *x = T::dot(&self.m[i], &b);
            }
        }
        Self { m }
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Symmetric part.
    pub fn sym(&self) -> SymTensor3<T> {
        let h = T::from_f64(0.5);
        let m = &self.m;
        SymTensor3::new(
            m[0][0],
            m[1][1],
            m[2][2],
            h * (m[0][1] + m[1][0]),
            h * (m[0][2] + m[2][0]),
            h * (m[1][2] + m[2][1]),
        )
    }

    /// Right Cauchy-Green tensor `C = Fᵀ F`.
    pub fn right_cauchy_green(&self) -> SymTensor3<T> {
        let col = |j: usize| [self.m[0][j], self.m[1][j], self.m[2][j]];
        let mut v = [T::zero(); 6];
        for (k, &(i, j)) in VOIGT_IJ.iter().enumerate() {
            v[k] = T::dot(&col(i), &col(j));
        }
        SymTensor3 { v }
    }

    /// Row-major flattening `(F11, F12, F13, F21, ..., F33)`.
    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_row_major(a: [T; 9]) -> Self {
        Self {
            m: [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]],
        }
    }
}

/// Raw stress invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants<T> {
    /// `tr Σ`
    pub i1: T,
    /// `½ tr(dev Σ)²`
    pub j2: T,
    /// `⅓ tr(dev Σ)³`
    pub j3: T,
    /// `½ tr Σ²`
    pub i2: T,
    /// `⅓ tr Σ³`
    pub i3: T,
}

pub fn deviator<T: Real>(t: &SymTensor3<T>) -> SymTensor3<T> {
    t.deviator()
}

fn trace_cubed<T: Real>(t: &SymTensor3<T>) -> T {
    t.squared().ddot(t)
}

pub fn invariants<T: Real>(t: &SymTensor3<T>) -> Invariants<T> {
    let half = T::from_f64(0.5);
    let third = T::from_f64(1.0 / 3.0);
    let s = t.deviator();
    Invariants {
        i1: t.trace(),
        j2: half * s.ddot(&s),
        j3: third * trace_cubed(&s),
        i2: half * t.ddot(t),
        i3: third * trace_cubed(t),
    }
}

/// `x / (x + ε)^{1/2}`, differentiable at zero.
pub fn smoothed_sqrt<T: Real>(x: T) -> T {
    x / (x + T::from_f64(EPS_SQRT)).sqrt()
}

/// Derivative of [`smoothed_sqrt`]: `(x + 2ε) / (2 (x + ε)^{3/2})`.
pub fn smoothed_sqrt_deriv<T: Real>(x: T) -> T {
    let e = T::from_f64(EPS_SQRT);
    let xe = x + e;
    (x + T::from_f64(2.0 * EPS_SQRT)) / (T::from_f64(2.0) * xe * xe.sqrt())
}

/// `x / (|x| + ε)^{2/3}`, odd and differentiable at zero.
pub fn smoothed_cbrt<T: Real>(x: T) -> T {
    x / (x.abs() + T::from_f64(EPS_CBRT)).powc(2.0 / 3.0)
}

/// Derivative of [`smoothed_cbrt`]: `(|x|/3 + ε) / (|x| + ε)^{5/3}`.
pub fn smoothed_cbrt_deriv<T: Real>(x: T) -> T {
    let a = x.abs();
    (a * T::from_f64(1.0 / 3.0) + T::from_f64(EPS_CBRT))
        / (a + T::from_f64(EPS_CBRT)).powc(5.0 / 3.0)
}

/// Network input vector `(I₁, √J₂, ∛J₃, √I₂, ∛I₃)` with smoothed roots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantVector<T> {
    pub z: [T; 5],
}

impl<T: Real> InvariantVector<T> {
    pub fn from_invariants(inv: &Invariants<T>) -> Self {
        Self {
            z: [
                inv.i1,
                smoothed_sqrt(inv.j2),
                smoothed_cbrt(inv.j3),
                smoothed_sqrt(inv.i2),
                smoothed_cbrt(inv.i3),
            ],
        }
    }

    pub fn of(t: &SymTensor3<T>) -> Self {
        Self::from_invariants(&invariants(t))
    }
}

/// Tensor derivatives of the raw invariants with respect to `Σ`.
pub struct InvariantGradients<T> {
    pub di1: SymTensor3<T>,
    pub dj2: SymTensor3<T>,
    pub dj3: SymTensor3<T>,
    pub di2: SymTensor3<T>,
    pub di3: SymTensor3<T>,
}

pub fn invariant_gradients<T: Real>(t: &SymTensor3<T>) -> InvariantGradients<T> {
    let s = t.deviator();
    InvariantGradients {
        di1: SymTensor3::identity(),
        dj2: s,
        dj3: s.squared().deviator(),
        di2: *t,
        di3: t.squared(),
    }
}

/// `f(t)` through the eigen-decomposition. `Log` and `Sqrt` require a
/// positive definite argument.
pub fn sym_matrix_function<T: Real>(
    t: &SymTensor3<T>,
    kind: MatFn,
) -> Result<SymTensor3<T>, TensorError> {
    Ok(SymTensor3::from_voigt(T::sym_matrix_fn(t.v, kind)?))
}

pub fn to_voigt<T: Real>(t: &SymTensor3<T>) -> [T; 6] {
    t.to_voigt()
}

pub fn from_voigt<T: Real>(v: [T; 6]) -> SymTensor3<T> {
    SymTensor3::from_voigt(v)
}
