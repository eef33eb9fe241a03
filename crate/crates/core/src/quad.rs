//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15) and tanh-sinh.
//!
//! The two rules are deliberately independent so that oracle values can be
//! confirmed by agreement of both.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-14, max_intervals: 4000 }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }
    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs, ..Self::default() }
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs();
    (value, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Adaptive Gauss–Kronrod on the finite interval [a, b].
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Argument(format!("gauss_kronrod needs finite limits, got [{a}, {b}]")));
    }
    let (value, err) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let mut total = value;
    let mut total_err = err;
    let mut evals = 15;
    loop {
        if !total.is_finite() {
            return Err(Error::Audit(format!("non-finite integrand on [{a}, {b}]")));
        }
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Audit(format!(
                "quadrature on [{a}, {b}] did not converge: value {total:e}, error {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split further; accept what we have
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
    }
    // resum to remove drift from incremental updates
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.err).sum();
    Ok(Estimate { value, error, evaluations: evals })
}

/// Gauss–Kronrod on [a, ∞) via x = a + s/(1-s).
pub fn gauss_kronrod_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    gauss_kronrod(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - s;
            let v = f(a + s / w);
            if v == 0.0 {
                0.0
            } else {
                v / (w * w)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Tanh-sinh (double exponential) quadrature on [a, b]. Copes with
/// integrable endpoint singularities because the integrand is never
/// evaluated at the endpoints themselves.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Argument(format!("tanh_sinh needs finite limits, got [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let c = 0.5 * (a + b);
    let fc = f(c);
    let mut evals = 1usize;
    // node at parameter t >= 0: contributes f(a + off) + f(b - off)
    let mut pair = |t: f64, evals: &mut usize| -> Option<f64> {
        let y = pi2 * t.sinh();
        let e2y = (2.0 * y).exp();
        let off = 2.0 * half / (e2y + 1.0);
        let ch = (y).cosh();
        let w = half * pi2 * t.cosh() / (ch * ch);
        if off <= 0.0 || !w.is_finite() || w == 0.0 {
            return None;
        }
        let lo = a + off;
        let hi = b - off;
        let mut acc = 0.0;
        let mut any = false;
        if lo > a {
            acc += f(lo);
            *evals += 1;
            any = true;
        }
        if hi < b {
            acc += f(hi);
            *evals += 1;
            any = true;
        }
        if any {
            Some(w * acc)
        } else {
            None
        }
    };
    let mut h = 1.0;
    // level 0: t = 0 and t = k for k >= 1
    let mut sum = half * pi2 * fc;
    let mut k = 1.0;
    while let Some(v) = pair(k, &mut evals) {
        sum += v;
        k += 1.0;
        if k > 8.0 {
            break;
        }
    }
    let mut prev = sum * h;
    for _level in 1..14 {
        h *= 0.5;
        let mut t = h;
        while t < 8.0 {
            match pair(t, &mut evals) {
                Some(v) => sum += v,
                None => break,
            }
            t += 2.0 * h;
        }
        let cur = sum * h;
        if !cur.is_finite() {
            return Err(Error::Audit(format!("non-finite integrand on [{a}, {b}]")));
        }
        let diff = (cur - prev).abs();
        if diff <= rel_tol * cur.abs() || (cur == 0.0 && prev == 0.0) {
            return Ok(Estimate { value: cur, error: diff, evaluations: evals });
        }
        prev = cur;
    }
    Err(Error::Audit(format!("tanh-sinh on [{a}, {b}] did not converge: last value {prev:e}")))
}
