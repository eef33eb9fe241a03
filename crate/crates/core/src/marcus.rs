//! Jump-adapted integration of Marcus-type equations driven by a jump
//! skeleton: deterministic flow between jumps, the canonical flow
//! a(x, λ) at jumps, hard and soft killing, and state-dependent extra jumps.

use crate::error::{arg, Error, Result};
use crate::geometry::{frame_horizontal_step, Frame, Manifold};
use crate::levy::{JumpSampler, JumpSkeleton, LevyKind, LevyMeasureSpec};
use crate::lie::{self, GroupData, GroupElement, GroupSpec, LieAlgebraVector};
use crate::rng::{open01, poisson, PathSeed, Substream};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Cap on adaptive substeps for a single flow.
pub const MAX_SUBSTEPS: usize = 1_000_000;
/// Local error tolerance of the Runge–Kutta fallback.
pub const RK_TOL: f64 = 1e-10;

/// Named coefficient fields ā(x): ℝ^m → ℝ^d on Euclidean space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinField {
    /// ā = I_d.
    Identity { dim: usize },
    /// ā = A (d×m, given by rows).
    Constant { matrix: Vec<Vec<f64>> },
    /// ā(x)λ = Σ λ_i B_i x.
    Linear { generators: Vec<Vec<Vec<f64>>> },
    /// On ℝ²: ā(x) = [[1, sin x₂], [0, 1]].
    SinShear,
    /// On ℝ²: ā(x) = [[1 + sin(x₂)/2, 0.3 cos x₁], [0.2 sin x₁, 1 + cos(x₂)/2]];
    /// no closed-form flow, integrated by Runge–Kutta.
    Warped,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return arg("matrix rows must be non-empty and of equal length");
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl BuiltinField {
    pub fn state_dim(&self) -> usize {
        match self {
            BuiltinField::Identity { dim } => *dim,
            BuiltinField::Constant { matrix } => matrix.len(),
            BuiltinField::Linear { generators } => generators.first().map_or(0, |g| g.len()),
            BuiltinField::SinShear | BuiltinField::Warped => 2,
        }
    }

    pub fn mark_dim(&self) -> usize {
        match self {
            BuiltinField::Identity { dim } => *dim,
            BuiltinField::Constant { matrix } => matrix.first().map_or(0, |r| r.len()),
            BuiltinField::Linear { generators } => generators.len(),
            BuiltinField::SinShear | BuiltinField::Warped => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BuiltinField::Identity { dim } if *dim == 0 => arg("identity field needs dim >= 1"),
            BuiltinField::Constant { matrix } => rows_to_matrix(matrix).map(|_| ()),
            BuiltinField::Linear { generators } => {
                let d = self.state_dim();
                if generators.is_empty() {
                    return arg("linear field needs at least one generator");
                }
                for g in generators {
                    let m = rows_to_matrix(g)?;
                    if m.nrows() != d || m.ncols() != d {
                        return arg("linear field generators must all be d×d");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// ā(x) as a d×m matrix.
    pub fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            BuiltinField::Identity { dim } => DMatrix::identity(*dim, *dim),
            BuiltinField::Constant { matrix } => rows_to_matrix(matrix).expect("validated field"),
            BuiltinField::Linear { generators } => {
                let d = self.state_dim();
                let mut a = DMatrix::zeros(d, generators.len());
                for (k, g) in generators.iter().enumerate() {
                    let col = rows_to_matrix(g).expect("validated field") * x;
                    a.set_column(k, &col);
                }
                a
            }
            BuiltinField::SinShear => DMatrix::from_row_slice(2, 2, &[1.0, x[1].sin(), 0.0, 1.0]),
            BuiltinField::Warped => DMatrix::from_row_slice(
                2,
                2,
                &[1.0 + 0.5 * x[1].sin(), 0.3 * x[0].cos(), 0.2 * x[0].sin(), 1.0 + 0.5 * x[1].cos()],
            ),
        }
    }

    /// Whether `flow` is evaluated in closed form.
    pub fn has_closed_form(&self) -> bool {
        !matches!(self, BuiltinField::Warped)
    }

    /// Time-1 flow of ẋ = ā(x)λ; returns the number of RK substeps used.
    pub fn flow(&self, x: &DVector<f64>, lambda: &[f64]) -> Result<(DVector<f64>, usize)> {
        Ok(match self {
            BuiltinField::Identity { .. } => (x + DVector::from_column_slice(lambda), 0),
            BuiltinField::Constant { matrix } => (x + rows_to_matrix(matrix)? * DVector::from_column_slice(lambda), 0),
            BuiltinField::Linear { generators } => {
                let d = self.state_dim();
                let mut b = DMatrix::zeros(d, d);
                for (g, l) in generators.iter().zip(lambda) {
                    b += rows_to_matrix(g)? * *l;
                }
                (b.exp() * x, 0)
            }
            BuiltinField::SinShear => {
                let (l1, l2) = (lambda[0], lambda[1]);
                let y1 = x[0] + l1 + x[1].cos() - (x[1] + l2).cos();
                (DVector::from_vec(vec![y1, x[1] + l2]), 0)
            }
            BuiltinField::Warped => {
                let l = DVector::from_column_slice(lambda);
                dopri(|y| self.matrix(y) * &l, x, 1.0, RK_TOL)?
            }
        })
    }
}

/// Drift b(x), in state coordinates on ℝ^d and in mark (λ) coordinates on
/// frame bundles and groups.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    #[default]
    Zero,
    Constant { vector: Vec<f64> },
    /// b(x) = B x (Euclidean only).
    Linear { matrix: Vec<Vec<f64>> },
}

impl Drift {
    pub fn is_zero(&self) -> bool {
        match self {
            Drift::Zero => true,
            Drift::Constant { vector } => vector.iter().all(|v| *v == 0.0),
            Drift::Linear { matrix } => matrix.iter().flatten().all(|v| *v == 0.0),
        }
    }
}

/// Domains M for hard killing, tested on the flattened state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Everywhere,
    /// {x₀ < bound}
    HalfLineBelow { bound: f64 },
    /// {lo < x₀ < hi}
    Interval { lo: f64, hi: f64 },
    /// Open ball in the leading coordinates.
    Ball { center: Vec<f64>, radius: f64 },
    /// {x₀ ≤ lo or x₀ ≥ hi}: the path stops on entering (lo, hi).
    Outside { lo: f64, hi: f64 },
}

impl Domain {
    pub fn contains(&self, flat: &[f64]) -> bool {
        match self {
            Domain::Everywhere => true,
            Domain::HalfLineBelow { bound } => flat[0] < *bound,
            Domain::Interval { lo, hi } => flat[0] > *lo && flat[0] < *hi,
            Domain::Ball { center, radius } => {
                center.iter().zip(flat).map(|(c, x)| (x - c).powi(2)).sum::<f64>() < radius * radius
            }
            Domain::Outside { lo, hi } => flat[0] <= *lo || flat[0] >= *hi,
        }
    }
}

/// Killing rates h(x) ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KillRate {
    Constant { h: f64 },
    /// h(x) = rate·1{x₀ > threshold}
    Step { threshold: f64, rate: f64 },
    /// h(x) = scale·|x|²; unbounded, so `sup` must be supplied and bounds h
    /// on the region actually visited.
    Quadratic { scale: f64, sup: Option<f64> },
}

impl KillRate {
    pub fn rate(&self, flat: &[f64]) -> f64 {
        match self {
            KillRate::Constant { h } => *h,
            KillRate::Step { threshold, rate } => {
                if flat[0] > *threshold {
                    *rate
                } else {
                    0.0
                }
            }
            KillRate::Quadratic { scale, .. } => scale * flat.iter().map(|x| x * x).sum::<f64>(),
        }
    }

    pub fn sup(&self) -> Result<f64> {
        let s = match self {
            KillRate::Constant { h } => *h,
            KillRate::Step { rate, .. } => *rate,
            KillRate::Quadratic { sup, .. } => match sup {
                Some(s) => *s,
                None => return arg("unbounded killing rate needs an explicit sup"),
            },
        };
        if !(s >= 0.0 && s.is_finite()) {
            return arg(format!("killing rate bound {s} must be finite and non-negative"));
        }
        Ok(s)
    }
}

/// State-dependent jump kernels x ↦ mass(x)·δ_mark (marks in λ coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpKernel {
    Zero,
    Constant { rate: f64, mark: Vec<f64> },
    /// mass(x) = rate·1{x₀ > 0}
    PositiveHalf { rate: f64, mark: Vec<f64> },
    /// mass(x) = rate·exp(-|x - center|²/(2 width²))
    Gaussian { rate: f64, center: Vec<f64>, width: f64, mark: Vec<f64> },
}

impl JumpKernel {
    pub fn mass(&self, flat: &[f64]) -> f64 {
        match self {
            JumpKernel::Zero => 0.0,
            JumpKernel::Constant { rate, .. } => *rate,
            JumpKernel::PositiveHalf { rate, .. } => {
                if flat[0] > 0.0 {
                    *rate
                } else {
                    0.0
                }
            }
            JumpKernel::Gaussian { rate, center, width, .. } => {
                let r2: f64 = center.iter().zip(flat).map(|(c, x)| (x - c).powi(2)).sum();
                rate * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn mark(&self) -> &[f64] {
        match self {
            JumpKernel::Zero => &[],
            JumpKernel::Constant { mark, .. }
            | JumpKernel::PositiveHalf { mark, .. }
            | JumpKernel::Gaussian { mark, .. } => mark,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    EuclideanLinear { field: BuiltinField },
    FrameHorizontal { manifold: Manifold },
    LieLeftInvariant { group: GroupSpec },
    LieRightInvariant { group: GroupSpec },
    Killed { inner: Box<FieldKind>, domain: Domain },
    SoftKilled { inner: Box<FieldKind>, rate: KillRate },
    StateJumps { inner: Box<FieldKind>, kernel: JumpKernel, sup_mass: f64 },
}

fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub drift_b: Drift,
    /// Order γ of the Marcus remainder; diagnostic only.
    #[serde(default = "default_gamma")]
    pub marcus_remainder_order_gamma: f64,
}

impl From<FieldKind> for CoefficientField {
    fn from(kind: FieldKind) -> Self {
        CoefficientField { kind, drift_b: Drift::Zero, marcus_remainder_order_gamma: 2.0 }
    }
}

impl CoefficientField {
    pub fn euclidean(field: BuiltinField) -> Self {
        FieldKind::EuclideanLinear { field }.into()
    }

    pub fn identity(dim: usize) -> Self {
        Self::euclidean(BuiltinField::Identity { dim })
    }

    pub fn frame_horizontal(manifold: Manifold) -> Self {
        FieldKind::FrameHorizontal { manifold }.into()
    }

    pub fn lie_left(group: GroupSpec) -> Self {
        FieldKind::LieLeftInvariant { group }.into()
    }

    pub fn lie_right(group: GroupSpec) -> Self {
        FieldKind::LieRightInvariant { group }.into()
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift_b = drift;
        self
    }

    /// The innermost (non-wrapper) field.
    pub fn base(&self) -> &FieldKind {
        let mut k = &self.kind;
        loop {
            match k {
                FieldKind::Killed { inner, .. } | FieldKind::SoftKilled { inner, .. } | FieldKind::StateJumps { inner, .. } => {
                    k = inner
                }
                _ => return k,
            }
        }
    }

    pub fn mark_dim(&self) -> usize {
        match self.base() {
            FieldKind::EuclideanLinear { field } => field.mark_dim(),
            FieldKind::FrameHorizontal { manifold } => manifold.dim(),
            FieldKind::LieLeftInvariant { group } | FieldKind::LieRightInvariant { group } => group_mark_dim(*group),
            _ => unreachable!(),
        }
    }

    /// Structural checks; `alpha` is the index of the driving measure when
    /// known (α < 1 forbids a drift b).
    pub fn validate(&self, alpha: Option<f64>) -> Result<()> {
        if let Some(a) = alpha {
            if a < 1.0 && !self.drift_b.is_zero() {
                return arg(format!("alpha = {a} < 1 requires drift_b = 0"));
            }
        }
        let g = self.marcus_remainder_order_gamma;
        if !(g > alpha.unwrap_or(0.0).max(1.0) && g <= 2.0) {
            return arg(format!("marcus_remainder_order_gamma = {g} must lie in (max(alpha, 1), 2]"));
        }
        Plan::resolve(self).map(|_| ())
    }
}

/// Mark dimension of group-driven fields; ℝ^d ⋊ ℤ marks carry the integer
/// level as a trailing coordinate.
fn group_mark_dim(g: GroupSpec) -> usize {
    match g {
        GroupSpec::DilTrans(d) => d + 1,
        _ => g.algebra_dim(),
    }
}

pub fn kill_hard(coeffs: CoefficientField, domain: Domain) -> CoefficientField {
    CoefficientField { kind: FieldKind::Killed { inner: Box::new(coeffs.kind), domain }, ..coeffs }
}

pub fn kill_soft(coeffs: CoefficientField, rate: KillRate) -> Result<CoefficientField> {
    rate.sup()?;
    Ok(CoefficientField { kind: FieldKind::SoftKilled { inner: Box::new(coeffs.kind), rate }, ..coeffs })
}

pub fn state_dependent_jumps(base: CoefficientField, kernel: JumpKernel, sup_mass: f64) -> Result<CoefficientField> {
    if !(sup_mass >= 0.0 && sup_mass.is_finite()) {
        return arg("sup_mass must be finite and non-negative");
    }
    if !matches!(kernel, JumpKernel::Zero) && kernel.mark().len() != base.mark_dim() {
        return arg("kernel mark dimension does not match the field");
    }
    Ok(CoefficientField { kind: FieldKind::StateJumps { inner: Box::new(base.kind), kernel, sup_mass }, ..base })
}

/// Position of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum State {
    Euclid(#[serde(with = "crate::geometry::plain")] DVector<f64>),
    Frame(Frame),
    Group(GroupElement),
}

impl State {
    /// Flat ambient coordinates: ℝ^d coordinates; frame base then basis
    /// vectors; group matrices row-major; (y, n) for ℝ^d ⋊ ℤ.
    pub fn flat(&self) -> Vec<f64> {
        match self {
            State::Euclid(x) => x.iter().copied().collect(),
            State::Frame(f) => {
                let mut v: Vec<f64> = f.base.coords.iter().copied().collect();
                for b in &f.basis {
                    v.extend(b.iter());
                }
                v
            }
            State::Group(g) => match &g.data {
                GroupData::Rotation(r) => (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])).collect(),
                GroupData::Affine { g1, g2 } => {
                    let d = g2.len();
                    let mut v: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| g1[(i, j)])).collect();
                    v.extend(g2.iter());
                    v
                }
                GroupData::DilTrans { y, n } => {
                    let mut v: Vec<f64> = y.iter().copied().collect();
                    v.push(*n as f64);
                    v
                }
            },
        }
    }

    /// Deviation from the manifold / group constraints.
    pub fn invariant_error(&self) -> f64 {
        match self {
            State::Euclid(_) => 0.0,
            State::Frame(f) => f.base.constraint_error().max(f.orthonormality_error()),
            State::Group(g) => g.invariant_error(),
        }
    }

    pub fn reproject(&mut self) -> f64 {
        match self {
            State::Euclid(_) => 0.0,
            State::Frame(f) => f.reproject(),
            State::Group(g) => g.reproject(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub position: State,
    pub alive: bool,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub endpoint: PathState,
    pub jump_count: usize,
    pub max_flow_substeps: usize,
    /// t·∫_{|λ|≤δ} λλᵀ μ(dλ), the covariance of the neglected small jumps
    /// (empty when the driving measure is unknown to the integrator).
    pub truncation_bias_report: DMatrix<f64>,
    pub max_invariant_error: f64,
    pub max_reprojection: f64,
}

/// One applied jump: x_post = a(x_pre, mark) before reprojection.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub pre: State,
    pub mark: Vec<f64>,
    pub post: State,
    /// Whether the jump came from the state-dependent kernel.
    pub extra: bool,
}

/// Dormand–Prince 5(4) for the autonomous ODE ẋ = f(x) over time `t_end`
/// (negative times integrate backwards). Returns the substep count.
pub fn dopri<F: FnMut(&DVector<f64>) -> DVector<f64>>(
    mut f: F,
    x0: &DVector<f64>,
    t_end: f64,
    tol: f64,
) -> Result<(DVector<f64>, usize)> {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    if t_end == 0.0 {
        return Ok((x0.clone(), 0));
    }
    let sign = t_end.signum();
    let total = t_end.abs();
    let mut g = |y: &DVector<f64>| f(y) * sign;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut h = total;
    let mut steps = 0usize;
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    while t < total {
        if steps >= MAX_SUBSTEPS {
            return Err(Error::Explosion(format!("flow needed more than {MAX_SUBSTEPS} substeps")));
        }
        steps += 1;
        h = h.min(total - t);
        k.clear();
        k.push(g(&x));
        for row in C.iter() {
            let mut y = x.clone();
            for (j, c) in row.iter().enumerate() {
                if *c != 0.0 {
                    y.axpy(h * c, &k[j], 1.0);
                }
            }
            k.push(g(&y));
        }
        // 5th-order solution equals the last stage point
        let mut xn = x.clone();
        for (j, c) in C[5].iter().enumerate() {
            if *c != 0.0 {
                xn.axpy(h * c, &k[j], 1.0);
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..x.len() {
            let mut e = 0.0;
            for (j, c) in E.iter().enumerate() {
                e += c * k[j][i];
            }
            let sc = tol + tol * x[i].abs().max(xn[i].abs());
            err = err.max((h * e / sc).abs());
        }
        if !err.is_finite() || !xn.iter().all(|v| v.is_finite()) {
            if h < 1e-300 {
                return Err(Error::Explosion("flow produced non-finite values".into()));
            }
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            t += h;
            x = xn;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok((x, steps))
}

fn dil_level(v: f64) -> Result<i64> {
    let n = v.round();
    if (v - n).abs() > 1e-9 {
        return arg(format!("dilation level {v} is not an integer"));
    }
    Ok(n as i64)
}

/// The element of G encoded by a mark.
fn mark_element(group: GroupSpec, lambda: &[f64]) -> Result<GroupElement> {
    match group {
        GroupSpec::DilTrans(d) => {
            let n = dil_level(lambda[d])?;
            Ok(GroupElement::dil_trans(DVector::from_column_slice(&lambda[..d]), n))
        }
        _ => lie::group_exp(&LieAlgebraVector { spec: group, components: lambda.to_vec() }),
    }
}

fn base_flow(kind: &FieldKind, x: &State, lambda: &[f64]) -> Result<(State, usize)> {
    match (kind, x) {
        (FieldKind::EuclideanLinear { field }, State::Euclid(v)) => {
            if lambda.len() != field.mark_dim() || v.len() != field.state_dim() {
                return arg("mark or state dimension does not match the field");
            }
            let (y, n) = field.flow(v, lambda)?;
            Ok((State::Euclid(y), n))
        }
        (FieldKind::FrameHorizontal { manifold }, State::Frame(f)) => {
            if f.base.manifold != *manifold {
                return arg("frame lives on a different manifold");
            }
            Ok((State::Frame(frame_horizontal_step(f, lambda)?), 0))
        }
        (FieldKind::LieLeftInvariant { group }, State::Group(g)) | (FieldKind::LieRightInvariant { group }, State::Group(g)) => {
            if g.spec != *group || lambda.len() != group_mark_dim(*group) {
                return arg("group or mark dimension does not match the field");
            }
            let e = mark_element(*group, lambda)?;
            let out = if matches!(kind, FieldKind::LieLeftInvariant { .. }) {
                lie::compose(g, &e)?
            } else {
                lie::compose(&e, g)?
            };
            Ok((State::Group(out), 0))
        }
        (FieldKind::Killed { .. } | FieldKind::SoftKilled { .. } | FieldKind::StateJumps { .. }, _) => {
            arg("the canonical flow is defined for non-killed fields only")
        }
        _ => arg("state type does not match the coefficient field"),
    }
}

/// a(x, λ): time-1 flow of ẋ = ā(x)λ.
pub fn marcus_flow(x: &State, lambda: &[f64], coeffs: &CoefficientField) -> Result<State> {
    base_flow(&coeffs.kind, x, lambda).map(|(s, _)| s)
}

/// Flow of ẋ = ā(x)k + b(x) for time τ.
fn drift_flow(kind: &FieldKind, b: &Drift, x: &State, k: &[f64], tau: f64) -> Result<(State, usize)> {
    let k_zero = k.iter().all(|v| *v == 0.0);
    if tau == 0.0 || (k_zero && b.is_zero()) {
        return Ok((x.clone(), 0));
    }
    let scaled = |extra: &[f64]| -> Vec<f64> {
        k.iter().enumerate().map(|(i, v)| tau * (v + extra.get(i).copied().unwrap_or(0.0))).collect()
    };
    match kind {
        FieldKind::EuclideanLinear { field } => {
            let State::Euclid(v) = x else { return arg("state type does not match the coefficient field") };
            match b {
                Drift::Zero => base_flow(kind, x, &scaled(&[])),
                Drift::Constant { vector } if matches!(field, BuiltinField::Identity { .. } | BuiltinField::Constant { .. }) => {
                    if vector.len() != v.len() {
                        return arg("drift dimension does not match the state");
                    }
                    let ak = field.matrix(v) * DVector::from_column_slice(k);
                    Ok((State::Euclid(v + (ak + DVector::from_column_slice(vector)) * tau), 0))
                }
                Drift::Linear { matrix } if matches!(field, BuiltinField::Identity { .. } | BuiltinField::Constant { .. }) => {
                    // [x; 1]' = [[B, ā k], [0, 0]] [x; 1]
                    let bm = rows_to_matrix(matrix)?;
                    let d = v.len();
                    if bm.nrows() != d || bm.ncols() != d {
                        return arg("drift matrix must be d×d");
                    }
                    let ak = field.matrix(v) * DVector::from_column_slice(k);
                    let mut m = DMatrix::zeros(d + 1, d + 1);
                    m.view_mut((0, 0), (d, d)).copy_from(&(bm * tau));
                    m.view_mut((0, d), (d, 1)).copy_from(&(ak * tau));
                    let mut aug = v.clone().insert_row(d, 1.0);
                    aug = m.exp() * aug;
                    Ok((State::Euclid(aug.remove_row(d)), 0))
                }
                _ => {
                    let kv = DVector::from_column_slice(k);
                    let bvec = match b {
                        Drift::Constant { vector } => Some(DVector::from_column_slice(vector)),
                        _ => None,
                    };
                    let bmat = match b {
                        Drift::Linear { matrix } => Some(rows_to_matrix(matrix)?),
                        _ => None,
                    };
                    let (y, n) = dopri(
                        |y| {
                            let mut dy = field.matrix(y) * &kv;
                            if let Some(c) = &bvec {
                                dy += c;
                            }
                            if let Some(m) = &bmat {
                                dy += m * y;
                            }
                            dy
                        },
                        v,
                        tau,
                        RK_TOL,
                    )?;
                    Ok((State::Euclid(y), n))
                }
            }
        }
        _ => match b {
            Drift::Zero => base_flow(kind, x, &scaled(&[])),
            Drift::Constant { vector } => {
                if vector.len() != k.len() {
                    return arg("drift dimension does not match the mark dimension");
                }
                base_flow(kind, x, &scaled(vector))
            }
            Drift::Linear { .. } => arg("linear drifts are only defined on Euclidean space"),
        },
    }
}

struct Plan<'a> {
    base: &'a FieldKind,
    domains: Vec<&'a Domain>,
    soft: Option<(&'a KillRate, f64)>,
    extra: Option<(&'a JumpKernel, f64)>,
}

impl<'a> Plan<'a> {
    fn resolve(c: &'a CoefficientField) -> Result<Self> {
        let mut p = Plan { base: &c.kind, domains: Vec::new(), soft: None, extra: None };
        loop {
            match p.base {
                FieldKind::Killed { inner, domain } => {
                    p.domains.push(domain);
                    p.base = inner;
                }
                FieldKind::SoftKilled { inner, rate } => {
                    if p.soft.is_some() {
                        return arg("at most one soft-killing layer is supported");
                    }
                    p.soft = Some((rate, rate.sup()?));
                    p.base = inner;
                }
                FieldKind::StateJumps { inner, kernel, sup_mass } => {
                    if p.extra.is_some() {
                        return arg("at most one state-dependent jump layer is supported");
                    }
                    p.extra = Some((kernel, *sup_mass));
                    p.base = inner;
                }
                FieldKind::EuclideanLinear { field } => {
                    field.validate()?;
                    return Ok(p);
                }
                _ => return Ok(p),
            }
        }
    }

    fn inside(&self, s: &State) -> bool {
        if self.domains.is_empty() {
            return true;
        }
        let f = s.flat();
        self.domains.iter().all(|d| d.contains(&f))
    }
}

fn candidate_times(rate: f64, t: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let n = poisson(rng, rate * t) as usize;
    let mut v: Vec<f64> = (0..n).map(|_| t * open01(rng)).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Clone, Copy)]
enum Event {
    Levy(usize),
    Extra,
    Kill,
}

struct Run<'a> {
    plan: Plan<'a>,
    drift_b: &'a Drift,
    k: Vec<f64>,
    state: State,
    t: f64,
    alive: bool,
    jumps: usize,
    substeps: usize,
    inv_err: f64,
    reproj: f64,
}

impl Run<'_> {
    /// Advances the drift to absolute time `to`, stopping at the first exit
    /// from the domain (located by bisection to 1e-10 in time).
    fn advance(&mut self, to: f64) -> Result<()> {
        let tau = to - self.t;
        if tau <= 0.0 {
            return Ok(());
        }
        let moving = !(self.k.iter().all(|v| *v == 0.0) && self.drift_b.is_zero());
        if !moving {
            self.t = to;
            return Ok(());
        }
        if self.plan.domains.is_empty() {
            let (s, n) = drift_flow(self.plan.base, self.drift_b, &self.state, &self.k, tau)?;
            self.substeps = self.substeps.max(n);
            self.state = s;
            self.t = to;
            return Ok(());
        }
        const CHECKS: usize = 8;
        let mut lo = 0.0;
        for j in 1..=CHECKS {
            let s = tau * j as f64 / CHECKS as f64;
            let (y, n) = drift_flow(self.plan.base, self.drift_b, &self.state, &self.k, s)?;
            self.substeps = self.substeps.max(n);
            if !self.plan.inside(&y) {
                let mut hi = s;
                let mut at_hi = y;
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    let (ym, _) = drift_flow(self.plan.base, self.drift_b, &self.state, &self.k, mid)?;
                    if self.plan.inside(&ym) {
                        lo = mid;
                    } else {
                        hi = mid;
                        at_hi = ym;
                    }
                }
                self.state = at_hi;
                self.t += hi;
                self.alive = false;
                return Ok(());
            }
            lo = s;
            if j == CHECKS {
                self.state = y;
            }
        }
        self.t = to;
        Ok(())
    }

    fn jump(&mut self, mark: &[f64], extra: bool, trace: &mut Option<&mut Vec<JumpRecord>>) -> Result<()> {
        let (mut post, n) = base_flow(self.plan.base, &self.state, mark)?;
        self.substeps = self.substeps.max(n);
        self.jumps += 1;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(JumpRecord { time: self.t, pre: self.state.clone(), mark: mark.to_vec(), post: post.clone(), extra });
        }
        self.inv_err = self.inv_err.max(post.invariant_error());
        self.reproj = self.reproj.max(post.reproject());
        if !self.plan.inside(&post) {
            self.alive = false;
        }
        self.state = post;
        Ok(())
    }
}

fn integrate_inner(
    x0: &State,
    sk: &JumpSkeleton,
    coeffs: &CoefficientField,
    seed: PathSeed,
    mut trace: Option<&mut Vec<JumpRecord>>,
) -> Result<SimOutput> {
    let plan = Plan::resolve(coeffs)?;
    if sk.dim != coeffs.mark_dim() {
        return arg(format!("skeleton marks have dimension {}, the field expects {}", sk.dim, coeffs.mark_dim()));
    }
    let k = if sk.compensator_drift.is_empty() { vec![0.0; sk.dim] } else { sk.compensator_drift.clone() };
    if k.len() != sk.dim {
        return arg("compensator drift has the wrong dimension");
    }
    if let (FieldKind::LieLeftInvariant { group: GroupSpec::DilTrans(d) } | FieldKind::LieRightInvariant { group: GroupSpec::DilTrans(d) }, kn) =
        (plan.base, k[k.len() - 1])
    {
        let bn = match &coeffs.drift_b {
            Drift::Constant { vector } => vector.get(*d).copied().unwrap_or(0.0),
            _ => 0.0,
        };
        if kn != 0.0 || bn != 0.0 {
            return arg("the dilation level cannot drift");
        }
    }
    let horizon = sk.horizon_t;
    let mut clock = seed.stream(Substream::Clock);
    let kill_times = match plan.soft {
        Some((_, sup)) => candidate_times(sup, horizon, &mut clock),
        None => Vec::new(),
    };
    let mut thin = seed.stream(Substream::Thinning);
    let extra_times = match plan.extra {
        Some((JumpKernel::Zero, _)) | None => Vec::new(),
        Some((_, sup)) => candidate_times(sup, horizon, &mut thin),
    };
    let mut run = Run {
        drift_b: &coeffs.drift_b,
        k,
        state: x0.clone(),
        t: 0.0,
        alive: true,
        jumps: 0,
        substeps: 0,
        inv_err: x0.invariant_error(),
        reproj: 0.0,
        plan,
    };
    if !run.plan.inside(&run.state) {
        run.alive = false;
    }
    let (mut i, mut e, mut q) = (0usize, 0usize, 0usize);
    while run.alive {
        let tl = sk.times.get(i).copied().unwrap_or(f64::INFINITY);
        let te = extra_times.get(e).copied().unwrap_or(f64::INFINITY);
        let tk = kill_times.get(q).copied().unwrap_or(f64::INFINITY);
        let (s, ev) = if tl <= te && tl <= tk {
            (tl, Event::Levy(i))
        } else if te <= tk {
            (te, Event::Extra)
        } else {
            (tk, Event::Kill)
        };
        if !s.is_finite() {
            break;
        }
        run.advance(s)?;
        if !run.alive {
            break;
        }
        match ev {
            Event::Levy(j) => {
                i += 1;
                run.jump(sk.mark(j), false, &mut trace)?;
            }
            Event::Extra => {
                e += 1;
                let (kernel, sup) = run.plan.extra.expect("extra layer present");
                let mass = kernel.mass(&run.state.flat());
                if mass > sup * (1.0 + 1e-12) {
                    return Err(Error::ContractViolation(format!("kernel mass {mass} exceeds sup_mass {sup}")));
                }
                if open01(&mut thin) * sup <= mass {
                    run.jump(kernel.mark(), true, &mut trace)?;
                }
            }
            Event::Kill => {
                q += 1;
                let (rate, sup) = run.plan.soft.expect("soft layer present");
                let h = rate.rate(&run.state.flat());
                if h > sup * (1.0 + 1e-12) {
                    return Err(Error::ContractViolation(format!("killing rate {h} exceeds its bound {sup}")));
                }
                if open01(&mut clock) * sup <= h {
                    run.alive = false;
                }
            }
        }
    }
    if run.alive {
        run.advance(horizon)?;
    }
    let m = sk.dim;
    Ok(SimOutput {
        endpoint: PathState { position: run.state, alive: run.alive, time: run.t },
        jump_count: run.jumps,
        max_flow_substeps: run.substeps,
        truncation_bias_report: DMatrix::zeros(m, m),
        max_invariant_error: run.inv_err,
        max_reprojection: run.reproj,
    })
}

/// Integrates one path through a skeleton. `seed` drives the soft-killing
/// clock and the candidate events of state-dependent jumps.
pub fn integrate_path(x0: &State, skeleton: &JumpSkeleton, coeffs: &CoefficientField, seed: PathSeed) -> Result<SimOutput> {
    integrate_inner(x0, skeleton, coeffs, seed, None)
}

/// As [`integrate_path`], also returning every applied jump.
pub fn integrate_path_traced(
    x0: &State,
    skeleton: &JumpSkeleton,
    coeffs: &CoefficientField,
    seed: PathSeed,
) -> Result<(SimOutput, Vec<JumpRecord>)> {
    let mut tr = Vec::new();
    let out = integrate_inner(x0, skeleton, coeffs, seed, Some(&mut tr))?;
    Ok((out, tr))
}

/// Skeleton sampler plus integrator for repeated paths of one configuration.
pub struct Simulator {
    pub coeffs: CoefficientField,
    pub sampler: JumpSampler,
    pub horizon: f64,
    report: DMatrix<f64>,
}

impl Simulator {
    pub fn new(spec: &LevyMeasureSpec, coeffs: CoefficientField, horizon: f64, delta: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return arg(format!("horizon {horizon} must be positive"));
        }
        coeffs.validate(spec.alpha())?;
        let sampler = spec.sampler(delta)?;
        if sampler.dim != coeffs.mark_dim() {
            return arg("Lévy measure and coefficient field have different mark dimensions");
        }
        let report = spec.small_jump_variance(delta)? * horizon;
        Ok(Simulator { coeffs, sampler, horizon, report })
    }

    pub fn run(&self, x0: &State, seed: PathSeed) -> Result<SimOutput> {
        let mut sk = JumpSkeleton::empty(self.horizon, self.sampler.delta, self.sampler.dim, Vec::new());
        self.run_with(x0, seed, &mut sk)
    }

    /// As [`Simulator::run`] with a caller-owned skeleton buffer.
    pub fn run_with(&self, x0: &State, seed: PathSeed, sk: &mut JumpSkeleton) -> Result<SimOutput> {
        self.sampler.sample_into(sk, self.horizon, seed);
        let mut out = integrate_path(x0, sk, &self.coeffs, seed)?;
        out.truncation_bias_report.clone_from(&self.report);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurjectivityReport {
    pub min_singular_values: Vec<f64>,
    pub min: f64,
    pub pass: bool,
    /// Index of the first sample point failing the 1e-8 threshold.
    pub failing_point: Option<usize>,
}

/// Columns ā(x)e_i in ambient coordinates, with the Gram matrix in the
/// natural metric.
fn field_gram(kind: &FieldKind, x: &State) -> Result<DMatrix<f64>> {
    match (kind, x) {
        (FieldKind::EuclideanLinear { field }, State::Euclid(v)) => {
            let a = field.matrix(v);
            Ok(a.transpose() * a)
        }
        (FieldKind::FrameHorizontal { manifold }, State::Frame(f)) => {
            let d = f.basis.len();
            Ok(DMatrix::from_fn(d, d, |i, j| manifold.inner(&f.basis[i], &f.basis[j])))
        }
        (FieldKind::LieLeftInvariant { group } | FieldKind::LieRightInvariant { group }, State::Group(g)) => {
            let left = matches!(kind, FieldKind::LieLeftInvariant { .. });
            let gm = g.matrix();
            let (cols, n): (Vec<DVector<f64>>, usize) = match *group {
                GroupSpec::DilTrans(d) => {
                    // only the translation directions are tangent
                    let e = match &g.data {
                        GroupData::DilTrans { n, .. } => (*n as f64).exp(),
                        _ => unreachable!(),
                    };
                    let c = (0..d)
                        .map(|i| {
                            let mut v = DVector::zeros(d);
                            v[i] = if left { e } else { 1.0 };
                            v
                        })
                        .collect();
                    (c, d)
                }
                _ => {
                    let n = group.algebra_dim();
                    let c = (0..n)
                        .map(|i| {
                            let mut comp = vec![0.0; n];
                            comp[i] = 1.0;
                            let u = algebra_matrix(*group, &comp);
                            let t = if left { &gm * u } else { u * &gm };
                            DVector::from_column_slice(t.as_slice())
                        })
                        .collect();
                    (c, n)
                }
            };
            Ok(DMatrix::from_fn(n, n, |i, j| cols[i].dot(&cols[j])))
        }
        _ => arg("state type does not match the coefficient field"),
    }
}

/// Matrix form of an algebra vector (3×3 for so(3), (d+1)×(d+1) for aff).
fn algebra_matrix(group: GroupSpec, c: &[f64]) -> DMatrix<f64> {
    match group {
        GroupSpec::SO3 => DMatrix::from_row_slice(3, 3, &[0.0, -c[2], c[1], c[2], 0.0, -c[0], -c[1], c[0], 0.0]),
        GroupSpec::Affine(d) => {
            let mut m = DMatrix::zeros(d + 1, d + 1);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] = c[i * d + j];
                }
                m[(i, d)] = c[d * d + i];
            }
            m
        }
        GroupSpec::DilTrans(d) => {
            let mut m = DMatrix::zeros(d + 1, d + 1);
            for i in 0..d {
                m[(i, d)] = c[i];
            }
            m
        }
    }
}

/// Smallest singular value of ā(x) at each point; pass iff all ≥ 1e-8.
pub fn surjectivity_check(coeffs: &CoefficientField, points: &[State]) -> Result<SurjectivityReport> {
    let base = coeffs.base();
    let mut mins = Vec::with_capacity(points.len());
    for p in points {
        let g = field_gram(base, p)?;
        let ev = g.symmetric_eigenvalues();
        let rank_target = match (base, p) {
            (FieldKind::EuclideanLinear { field }, State::Euclid(_)) => field.state_dim().min(field.mark_dim()),
            _ => ev.len(),
        };
        // ā(x) is onto iff its d largest singular values are positive
        let mut s: Vec<f64> = ev.iter().map(|e| e.max(0.0).sqrt()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let need = match (base, p) {
            (FieldKind::EuclideanLinear { field }, _) => field.state_dim(),
            _ => rank_target,
        };
        let v = if need > s.len() { 0.0 } else { s[need - 1] };
        mins.push(v);
    }
    let min = mins.iter().copied().fold(f64::INFINITY, f64::min);
    let failing_point = mins.iter().position(|v| *v < 1e-8);
    Ok(SurjectivityReport { min_singular_values: mins, min, pass: failing_point.is_none(), failing_point })
}

/// C² test functions of the flattened state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    Coordinate { index: usize },
    /// cos(freq·x_i)
    Cosine { index: usize, freq: f64 },
    /// x_i·x_j
    Product { i: usize, j: usize },
    /// exp(-|x - c|²/(2w²)) in the leading coordinates.
    Gaussian { center: Vec<f64>, width: f64 },
    /// exp(1 - 1/(1 - |x - c|²/R²)) inside the ball, 0 outside.
    Bump { center: Vec<f64>, radius: f64 },
}

impl TestFunction {
    pub fn eval(&self, flat: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Coordinate { index } => flat[*index],
            TestFunction::Cosine { index, freq } => (freq * flat[*index]).cos(),
            TestFunction::Product { i, j } => flat[*i] * flat[*j],
            TestFunction::Gaussian { center, width } => {
                let r2: f64 = center.iter().zip(flat).map(|(c, x)| (x - c).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
            TestFunction::Bump { center, radius } => {
                let q: f64 = center.iter().zip(flat).map(|(c, x)| (x - c).powi(2)).sum::<f64>() / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
        }
    }

    pub fn at(&self, s: &State) -> f64 {
        self.eval(&s.flat())
    }
}

/// Derivative at 0 of ε ↦ g(ε) by a fourth-order central difference.
fn derivative_at_zero<F: FnMut(f64) -> Result<f64>>(mut g: F, h: f64) -> Result<f64> {
    let (p1, m1, p2, m2) = (g(h)?, g(-h)?, g(2.0 * h)?, g(-2.0 * h)?);
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
}

/// Per-coordinate flag: whether jumps in that coordinate are compensated on
/// the unit ball.
fn compensation_mask(spec: &LevyMeasureSpec, out: &mut Vec<bool>, outer_pure: bool) {
    let pure = outer_pure || spec.pure_jump;
    match &spec.kind {
        LevyKind::Product { components } => {
            for c in components {
                compensation_mask(c, out, pure);
            }
        }
        _ => out.extend(std::iter::repeat_n(!pure, spec.dim())),
    }
}

/// 𝒢f(x) = Df(x)(b + āκ) + ∫(f(a(x,λ)) − f(x) − 1{|λ|≤1}Df(x)āλ) μ(dλ).
pub fn generator_apply(f: &TestFunction, x: &State, spec: &LevyMeasureSpec, coeffs: &CoefficientField) -> Result<f64> {
    let plan = Plan::resolve(coeffs)?;
    if plan.soft.is_some() || plan.extra.is_some() || !plan.domains.is_empty() {
        return arg("the generator is evaluated for non-killed fields only");
    }
    if spec.dim() != coeffs.mark_dim() {
        return arg("Lévy measure and coefficient field have different mark dimensions");
    }
    let base = plan.base;
    let fx = f.at(x);
    let kappa: Vec<f64> = spec.compensator_drift(1.0)?.iter().copied().collect();
    let h = 1e-3;
    let drift_term = derivative_at_zero(|eps| Ok(f.at(&drift_flow(base, &coeffs.drift_b, x, &kappa, eps)?.0)), h)?;
    let mut mask = Vec::new();
    compensation_mask(spec, &mut mask, false);
    let mut failure: Option<Error> = None;
    let mut dir = vec![0.0; kappa.len()];
    let mut phi = |lambda: &[f64]| -> f64 {
        let r = lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let res = (|| -> Result<f64> {
            let mut v = f.at(&base_flow(base, x, lambda)?.0) - fx;
            let first = lambda.iter().position(|v| *v != 0.0).unwrap_or(0);
            if r <= 1.0 && mask[first] {
                dir.iter_mut().zip(lambda).for_each(|(d, l)| *d = l / r);
                let dd = derivative_at_zero(
                    |eps| {
                        let m: Vec<f64> = dir.iter().map(|d| d * eps).collect();
                        Ok(f.at(&base_flow(base, x, &m)?.0))
                    },
                    h,
                )?;
                v -= r * dd;
            }
            Ok(v)
        })();
        res.unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        })
    };
    let mut tol = 1e-7;
    let jump_term = loop {
        match spec.integrate(&mut phi, tol) {
            Ok(v) => break v,
            // near λ = 0 the integrand is O(|λ|^γ); relax and retry
            Err(Error::Audit(_)) if tol < 1e-5 => tol *= 10.0,
            Err(e) => return Err(e),
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(drift_term + jump_term)
}
