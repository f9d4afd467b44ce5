//! Reverse-mode differentiation over a thread-local tape.
//!
//! A [`Var`] is a value plus the index of the tape node that produced it.
//! Every arithmetic operation appends one node holding the local partial
//! derivatives with respect to its operands; [`gradient`] then sweeps the
//! tape backwards once. Constants carry no node, so code that mixes
//! parameters with data only records what depends on the parameters.
//!
//! Kinks follow fixed conventions: `max(x, 0)` has slope 0 at `x = 0` and
//! `|x|` has slope `sign(0) = 0`.
//!
//! Each thread owns its own tape; concurrent evaluations on different
//! threads never share state.

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

use crate::error::{Error, TensorError};
use crate::scalar::Real;
use crate::tensor3::{eigen, MatFn};

const CONST: u32 = u32::MAX;

/// Scalar recorded on the current thread's tape.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    idx: u32,
    val: f64,
}

struct Tape {
    offsets: Vec<u32>,
    parents: Vec<u32>,
    weights: Vec<f64>,
    active: bool,
}

impl Tape {
    const fn new() -> Self {
        Self {
            offsets: Vec::new(),
            parents: Vec::new(),
            weights: Vec::new(),
            active: false,
        }
    }

    fn reset(&mut self) {
        self.offsets.clear();
        self.parents.clear();
        self.weights.clear();
        self.offsets.push(0);
    }

    #[inline]
    fn finish_node(&mut self) -> u32 {
        self.offsets.push(self.parents.len() as u32);
        (self.offsets.len() - 2) as u32
    }

    fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }
}

thread_local! {
    static TAPE: RefCell<Tape> = const { RefCell::new(Tape::new()) };
}

impl Var {
    pub fn constant(val: f64) -> Self {
        Self { idx: CONST, val }
    }

    #[inline]
    fn unary(a: Var, da: f64, val: f64) -> Var {
        if a.idx == CONST {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.parents.push(a.idx);
            t.weights.push(da);
            let idx = t.finish_node();
            Var { idx, val }
        })
    }

    #[inline]
    fn binary(a: Var, da: f64, b: Var, db: f64, val: f64) -> Var {
        match (a.idx == CONST, b.idx == CONST) {
            (true, true) => Var::constant(val),
            (false, true) => Var::unary(a, da, val),
            (true, false) => Var::unary(b, db, val),
            (false, false) => TAPE.with(|t| {
                let mut t = t.borrow_mut();
                t.parents.push(a.idx);
                t.weights.push(da);
                t.parents.push(b.idx);
                t.weights.push(db);
                let idx = t.finish_node();
                Var { idx, val }
            }),
        }
    }

    fn nary(parents: &[(Var, f64)], val: f64) -> Var {
        if parents.iter().all(|(p, _)| p.idx == CONST) {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            for (p, w) in parents {
                if p.idx != CONST {
                    t.parents.push(p.idx);
                    t.weights.push(*w);
                }
            }
            let idx = t.finish_node();
            Var { idx, val }
        })
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        Var::binary(self, 1.0, o, 1.0, self.val + o.val)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        Var::binary(self, 1.0, o, -1.0, self.val - o.val)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        Var::binary(self, o.val, o, self.val, self.val * o.val)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let inv = 1.0 / o.val;
        let q = self.val * inv;
        Var::binary(self, inv, o, -q * inv, q)
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        Var::unary(self, -1.0, -self.val)
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, o: Var) {
        *self = *self + o;
    }
}

impl SubAssign for Var {
    fn sub_assign(&mut self, o: Var) {
        *self = *self - o;
    }
}

impl MulAssign for Var {
    fn mul_assign(&mut self, o: Var) {
        *self = *self * o;
    }
}

impl DivAssign for Var {
    fn div_assign(&mut self, o: Var) {
        *self = *self / o;
    }
}

impl Zero for Var {
    fn zero() -> Self {
        Var::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.idx == CONST && self.val == 0.0
    }
}

impl One for Var {
    fn one() -> Self {
        Var::constant(1.0)
    }
}

impl Real for Var {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        Var::unary(self, e, e)
    }

    fn ln(self) -> Self {
        Var::unary(self, 1.0 / self.val, self.val.ln())
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        Var::unary(self, 0.5 / s, s)
    }

    fn abs(self) -> Self {
        Var::unary(self, self.sign(), self.val.abs())
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        Var::unary(self, 1.0 - t * t, t)
    }

    fn cosh(self) -> Self {
        Var::unary(self, self.val.sinh(), self.val.cosh())
    }

    fn sinh(self) -> Self {
        Var::unary(self, self.val.cosh(), self.val.sinh())
    }

    fn powf(self, e: Self) -> Self {
        let v = self.val.powf(e.val);
        let dx = e.val * self.val.powf(e.val - 1.0);
        let de = v * self.val.ln();
        Var::binary(self, dx, e, de, v)
    }

    fn powc(self, e: f64) -> Self {
        let v = self.val.powf(e);
        Var::unary(self, e * self.val.powf(e - 1.0), v)
    }

    fn relu(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            Var::constant(0.0)
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut val = 0.0;
        for (x, y) in a.iter().zip(b) {
            val += x.val * y.val;
        }
        if a.iter().chain(b).all(|v| v.idx == CONST) {
            return Var::constant(val);
        }
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            for (x, y) in a.iter().zip(b) {
                if x.idx != CONST {
                    t.parents.push(x.idx);
                    t.weights.push(y.val);
                }
                if y.idx != CONST {
                    t.parents.push(y.idx);
                    t.weights.push(x.val);
                }
            }
            let idx = t.finish_node();
            Var { idx, val }
        })
    }

    fn sym_matrix_fn(v: [Self; 6], f: MatFn) -> Result<[Self; 6], TensorError> {
        let vals = v.map(|x| x.val);
        if v.iter().all(|x| x.idx == CONST) {
            return Ok(eigen::apply_sym_fn(&vals, f)?.map(Var::constant));
        }
        let (out, jac) = eigen::sym_fn_with_jacobian(&vals, f)?;
        let mut res = [Var::constant(0.0); 6];
        for m in 0..6 {
            let parents: [(Var, f64); 6] = std::array::from_fn(|k| (v[k], jac[m][k]));
            res[m] = Var::nary(&parents, out[m]);
        }
        Ok(res)
    }
}

/// Marks the tape active for the lifetime of a gradient evaluation.
struct ActiveGuard;

impl ActiveGuard {
    fn acquire() -> Self {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            assert!(
                !t.active,
                "nested gradient evaluation on the same thread is not supported"
            );
            t.active = true;
            t.reset();
        });
        ActiveGuard
    }
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.active = false;
            t.reset();
            t.parents.shrink_to(1 << 22);
            t.weights.shrink_to(1 << 22);
            t.offsets.shrink_to(1 << 21);
        });
    }
}

/// Value and gradient of `f` at `x`.
pub fn gradient<F>(x: &[f64], f: F) -> Result<(f64, Vec<f64>), Error>
where
    F: FnOnce(&[Var]) -> Var,
{
    try_gradient(x, |v| Ok::<_, Error>(f(v)))
}

/// Like [`gradient`] for a fallible function. Errors from `f` are returned
/// unchanged; a non-finite value or adjoint yields `Error::NonFinite`
/// converted into `E`.
pub fn try_gradient<F, E>(x: &[f64], f: F) -> Result<(f64, Vec<f64>), E>
where
    F: FnOnce(&[Var]) -> Result<Var, E>,
    E: From<Error>,
{
    let _guard = ActiveGuard::acquire();
    let inputs: Vec<Var> = TAPE.with(|t| {
        let mut t = t.borrow_mut();
        x.iter()
            .map(|&val| {
                let idx = t.finish_node();
                Var { idx, val }
            })
            .collect()
    });
    let out = f(&inputs)?;
    if !out.val.is_finite() {
        return Err(Error::NonFinite.into());
    }
    let grad = TAPE.with(|t| {
        let t = t.borrow();
        let mut grad = vec![0.0; x.len()];
        if out.idx == CONST {
            return grad;
        }
        let n = t.len();
        let mut adj = vec![0.0f64; n];
        adj[out.idx as usize] = 1.0;
        for i in (0..=out.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = (t.offsets[i] as usize, t.offsets[i + 1] as usize);
            for k in lo..hi {
                adj[t.parents[k] as usize] += a * t.weights[k];
            }
        }
        grad.copy_from_slice(&adj[..x.len()]);
        grad
    });
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite.into());
    }
    Ok((out.val, grad))
}

/// Number of nodes currently on this thread's tape (diagnostics).
pub fn tape_len() -> usize {
    TAPE.with(|t| t.borrow().len())
}
