//! Spectral decomposition of symmetric 3×3 tensors and isotropic matrix
//! functions built on it.
//!
//! Eigenvalues come from the closed-form trigonometric solution of the
//! characteristic polynomial. Eigenvectors are taken from cross products of
//! the rows of `A - λI`. Whenever the result fails a residual check (close
//! or repeated eigenvalues), the cyclic Jacobi method is used instead.

use crate::error::TensorError;
use crate::tensor3::MatFn;

type Mat3 = [[f64; 3]; 3];

/// Smallest admissible eigenvalue of an SPD argument, relative to the largest.
pub const TOL_SPD: f64 = 1e-12;

const VOIGT_IJ: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

pub(crate) fn to_mat(v: &[f64; 6]) -> Mat3 {
    [[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]]
}

fn from_mat(m: &Mat3) -> [f64; 6] {
    [
        m[0][0],
        m[1][1],
        m[2][2],
        0.5 * (m[0][1] + m[1][0]),
        0.5 * (m[0][2] + m[2][0]),
        0.5 * (m[1][2] + m[2][1]),
    ]
}

/// Eigenvalues and eigenvectors. Column `k` of the returned matrix is the
/// unit eigenvector of eigenvalue `k`.
pub fn sym_eigen(v: &[f64; 6]) -> ([f64; 3], Mat3) {
    let a = to_mat(v);
    if v[3] == 0.0 && v[4] == 0.0 && v[5] == 0.0 {
        return ([v[0], v[1], v[2]], identity());
    }
    if let Some(res) = analytic(&a) {
        return res;
    }
    jacobi(a)
}

fn identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn frobenius(a: &Mat3) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn analytic(a: &Mat3) -> Option<([f64; 3], Mat3)> {
    let scale = frobenius(a);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p <= 1e-8 * scale {
        return None;
    }
    let mut b = *a;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if i == j {
                *x -= q;
            }
            *x /= p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (0.5 * det_b).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l0 = q + 2.0 * p * phi.cos();
    let l2 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l1 = 3.0 * q - l0 - l2;
    let lambdas = [l0, l1, l2];

    let vec_for = |lambda: f64| -> Option<[f64; 3]> {
        let rows = [
            [a[0][0] - lambda, a[0][1], a[0][2]],
            [a[1][0], a[1][1] - lambda, a[1][2]],
            [a[2][0], a[2][1], a[2][2] - lambda],
        ];
        let cands = [
            cross(&rows[0], &rows[1]),
            cross(&rows[0], &rows[2]),
            cross(&rows[1], &rows[2]),
        ];
        let best = cands
            .iter()
            .max_by(|x, y| dot3(x, x).total_cmp(&dot3(y, y)))
            .copied()?;
        let n2 = dot3(&best, &best);
        if n2 <= (1e-6 * scale * scale).powi(2) {
            return None;
        }
        let n = n2.sqrt();
        Some([best[0] / n, best[1] / n, best[2] / n])
    };
    let v0 = vec_for(l0)?;
    let mut v1 = vec_for(l1)?;
    let d = dot3(&v0, &v1);
    for k in 0..3 {
        v1[k] -= d * v0[k];
    }
    let n1 = dot3(&v1, &v1).sqrt();
    if n1 < 0.5 {
        return None;
    }
    for x in v1.iter_mut() {
        *x /= n1;
    }
    let v2 = cross(&v0, &v1);
    let vecs = [v0, v1, v2];
    // residual check; close eigenvalues make the cross products unreliable
    for (k, vk) in vecs.iter().enumerate() {
        let mut res = 0.0;
        for i in 0..3 {
            let av = a[i][0] * vk[0] + a[i][1] * vk[1] + a[i][2] * vk[2];
            res += (av - lambdas[k] * vk[i]).powi(2);
        }
        if res.sqrt() > 1e-13 * scale {
            return None;
        }
    }
    let mut qm = [[0.0; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            qm[i][k] = vecs[k][i];
        }
    }
    Some((lambdas, qm))
}

/// Cyclic Jacobi rotations; robust for repeated eigenvalues.
fn jacobi(mut a: Mat3) -> ([f64; 3], Mat3) {
    let mut v = identity();
    let scale = frobenius(&a);
    for _sweep in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off == 0.0 || off.sqrt() <= 1e-17 * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = if theta.is_infinite() {
                0.0
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let akp = row[p];
                let akq = row[q];
                row[p] = c * akp - s * akq;
                row[q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

fn scalar_fn(f: MatFn, x: f64) -> f64 {
    match f {
        MatFn::Exp => x.exp(),
        MatFn::Log => x.ln(),
        MatFn::Sqrt => x.sqrt(),
    }
}

/// First divided difference `(f(a) - f(b)) / (a - b)`, `f'(a)` when equal.
fn divided_difference(f: MatFn, a: f64, b: f64) -> f64 {
    let d = a - b;
    match f {
        MatFn::Exp => {
            if d == 0.0 {
                a.exp()
            } else {
                b.exp() * d.exp_m1() / d
            }
        }
        MatFn::Log => {
            if d == 0.0 {
                1.0 / a
            } else {
                (d / b).ln_1p() / d
            }
        }
        MatFn::Sqrt => 1.0 / (a.sqrt() + b.sqrt()),
    }
}

fn check_domain(f: MatFn, lambdas: &[f64; 3]) -> Result<(), TensorError> {
    if matches!(f, MatFn::Exp) {
        return Ok(());
    }
    let max = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let min = lambdas.iter().fold(f64::INFINITY, |m, &l| m.min(l));
    if !(min > TOL_SPD * max) || !min.is_finite() {
        return Err(TensorError::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

fn reassemble(q: &Mat3, d: &[f64; 3]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (m, &(i, j)) in VOIGT_IJ.iter().enumerate() {
        out[m] = (0..3).map(|k| q[i][k] * d[k] * q[j][k]).sum();
    }
    out
}

/// `f(A)` for symmetric `A` in Voigt order.
pub fn apply_sym_fn(v: &[f64; 6], f: MatFn) -> Result<[f64; 6], TensorError> {
    let (lambdas, q) = sym_eigen(v);
    check_domain(f, &lambdas)?;
    let fl = lambdas.map(|l| scalar_fn(f, l));
    Ok(reassemble(&q, &fl))
}

/// `f(A)` together with the Jacobian `∂f(A)_m / ∂A_k` in Voigt components,
/// where an off-diagonal input component moves both symmetric entries.
///
/// Uses the Daleckii-Krein form `dY = Q (F ∘ (Qᵀ dA Q)) Qᵀ` with
/// `F_ij = f[λ_i, λ_j]`.
pub fn sym_fn_with_jacobian(
    v: &[f64; 6],
    f: MatFn,
) -> Result<([f64; 6], [[f64; 6]; 6]), TensorError> {
    let (lambdas, q) = sym_eigen(v);
    check_domain(f, &lambdas)?;
    let fl = lambdas.map(|l| scalar_fn(f, l));
    let value = reassemble(&q, &fl);
    let mut dd = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            dd[a][b] = divided_difference(f, lambdas[a], lambdas[b]);
        }
    }
    let mut jac = [[0.0; 6]; 6];
    for (k, &(i, j)) in VOIGT_IJ.iter().enumerate() {
        // Qᵀ E_k Q where E_k = e_i e_jᵀ (+ e_j e_iᵀ off the diagonal)
        let mut h = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let mut x = q[i][a] * q[j][b];
                if i != j {
                    x += q[j][a] * q[i][b];
                }
                h[a][b] = x * dd[a][b];
            }
        }
        let mut y = [[0.0; 3]; 3];
        for r in 0..3 {
            for s in 0..3 {
                let mut acc = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        acc += q[r][a] * h[a][b] * q[s][b];
                    }
                }
                y[r][s] = acc;
            }
        }
        let yv = from_mat(&y);
        for m in 0..6 {
            jac[m][k] = yv[m];
        }
    }
    Ok((value, jac))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(l: &[f64; 3], q: &Mat3) -> [f64; 6] {
        reassemble(q, l)
    }

    fn max_diff(a: &[f64; 6], b: &[f64; 6]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn analytic_path_reconstructs() {
        let v = [2.0, 3.0, 5.0, 0.3, -0.7, 0.2];
        let (l, q) = sym_eigen(&v);
        assert!(max_diff(&reconstruct(&l, &q), &v) < 1e-13);
    }

    #[test]
    fn repeated_eigenvalues_fall_back_to_jacobi() {
        // eigenvalues (1, 1, 4) in a rotated basis
        let v = [2.0, 2.0, 2.0, 1.0, 1.0, 1.0];
        let (mut l, q) = sym_eigen(&v);
        assert!(max_diff(&reconstruct(&l, &q), &v) < 1e-13);
        l.sort_by(f64::total_cmp);
        assert!((l[0] - 1.0).abs() < 1e-13);
        assert!((l[1] - 1.0).abs() < 1e-13);
        assert!((l[2] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let v = [1.3, 0.9, 1.7, 0.2, -0.1, 0.3];
        for f in [MatFn::Exp, MatFn::Log, MatFn::Sqrt] {
            let (_, jac) = sym_fn_with_jacobian(&v, f).unwrap();
            for k in 0..6 {
                let h = 1e-6;
                let mut vp = v;
                let mut vm = v;
                vp[k] += h;
                vm[k] -= h;
                let yp = apply_sym_fn(&vp, f).unwrap();
                let ym = apply_sym_fn(&vm, f).unwrap();
                for m in 0..6 {
                    let fd = (yp[m] - ym[m]) / (2.0 * h);
                    assert!((fd - jac[m][k]).abs() < 1e-8, "{f:?} m={m} k={k}");
                }
            }
        }
    }

    #[test]
    fn jacobian_at_degenerate_point() {
        // at the identity the derivative of exp is e·(perturbation)
        let v = [0.0; 6];
        let (_, jac) = sym_fn_with_jacobian(&v, MatFn::Exp).unwrap();
        for m in 0..6 {
            for k in 0..6 {
                let expected = if m == k { 1.0 } else { 0.0 };
                assert!((jac[m][k] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn log_rejects_indefinite() {
        let v = [1.0, -1.0, 2.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            apply_sym_fn(&v, MatFn::Log),
            Err(TensorError::NotPositiveDefinite { .. })
        ));
    }
}
