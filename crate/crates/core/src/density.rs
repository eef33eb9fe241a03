//! Density estimates from endpoint samples and the probes built on them:
//! sup-density scaling fits, boundedness, first-derivative blow-up and
//! invariance tests.

use crate::error::{arg, Error, Result};
use crate::geometry::{chart_to_normal_coords, Manifold, Point};
use crate::lie::so3_log;
use crate::stats::{ks_two_sample, ols_weighted, quantile_sorted, LinearFit};
use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Endpoint samples as flat points; `n_total` counts every simulated path,
/// including killed or conditioned-out ones, and normalises the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub dim: usize,
    pub data: Vec<f64>,
    pub n_total: usize,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>, n_total: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return arg("sample data length is not a multiple of the dimension");
        }
        if n_total < data.len() / dim {
            return arg("n_total is smaller than the number of samples");
        }
        Ok(Samples { dim, data, n_total })
    }

    pub fn from_scalars(xs: Vec<f64>) -> Self {
        let n = xs.len();
        Samples { dim: 1, data: xs, n_total: n }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Coordinates in which densities are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chart {
    /// Leading `dim` coordinates, Lebesgue reference.
    Flat { dim: usize },
    /// Riemannian normal coordinates at `origin`; reference is the
    /// Riemannian volume.
    Normal { origin: Point },
    /// Rotation vectors of SO(3) (samples are row-major 3×3 matrices);
    /// reference is the Haar probability.
    So3Exp,
}

impl Chart {
    pub fn dim(&self) -> usize {
        match self {
            Chart::Flat { dim } => *dim,
            Chart::Normal { origin } => origin.manifold.dim(),
            Chart::So3Exp => 3,
        }
    }

    /// Chart coordinates of a flat point, or None off the chart.
    pub fn coords(&self, flat: &[f64]) -> Option<Vec<f64>> {
        match self {
            Chart::Flat { dim } => flat.get(..*dim).map(|s| s.to_vec()),
            Chart::Normal { origin } => {
                let m = origin.manifold;
                let p = Point { manifold: m, coords: DVector::from_column_slice(flat.get(..m.ambient_dim())?) };
                let c = chart_to_normal_coords(&p, origin).ok()?;
                if matches!(m, Manifold::Sphere2) && c.iter().map(|v| v * v).sum::<f64>().sqrt() > PI - 1e-6 {
                    return None;
                }
                Some(c)
            }
            Chart::So3Exp => {
                if flat.len() < 9 {
                    return None;
                }
                let r = Matrix3::from_fn(|i, j| flat[3 * i + j]);
                let w = so3_log(&r);
                if w.norm() > PI - 1e-6 {
                    return None;
                }
                Some(w.iter().copied().collect())
            }
        }
    }

    /// Density of the reference measure w.r.t. Lebesgue measure in chart
    /// coordinates.
    pub fn jacobian(&self, c: &[f64]) -> f64 {
        let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Chart::Flat { .. } => 1.0,
            Chart::Normal { origin } => origin.manifold.normal_jacobian(r),
            Chart::So3Exp => {
                let k = if r < 1e-6 { 1.0 - r * r / 12.0 } else { 2.0 * (1.0 - r.cos()) / (r * r) };
                k / (8.0 * PI * PI)
            }
        }
    }

    pub fn reference_measure(&self) -> String {
        match self {
            Chart::Flat { dim } => format!("Lebesgue on R^{dim}"),
            Chart::Normal { origin } => format!("Riemannian volume of {:?} in normal coordinates", origin.manifold),
            Chart::So3Exp => "Haar probability of SO(3) in exponential coordinates".into(),
        }
    }
}

/// Regular lattice lo + k·(hi − lo)/(n − 1), k = 0..n, per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() {
            return arg("grid axes have inconsistent lengths");
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || n.iter().any(|&k| k < 2) {
            return arg("grid needs lo < hi and at least two points per axis");
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n[axis] - 1) as f64
    }

    /// Lattice point with linear index `i` (first axis fastest).
    pub fn point(&self, mut i: usize) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let k = i % self.n[a];
            i /= self.n[a];
            p.push(self.lo[a] + k as f64 * self.step(a));
        }
        p
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.step(a)).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub sample_count: usize,
    pub reference_measure: String,
    /// Fraction of samples that fell off the chart.
    pub overflow_fraction: f64,
    /// Trapezoid integral of the estimate against the reference measure.
    pub integral: f64,
}

impl DensityEstimate {
    /// Columns: grid coordinates…, value.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..self.grid.dim() {
            let _ = write!(s, "x{a},");
        }
        s.push_str("value\n");
        for (i, v) in self.values.iter().enumerate() {
            for c in self.grid.point(i) {
                let _ = write!(s, "{c},");
            }
            let _ = writeln!(s, "{v:e}");
        }
        s
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Chart coordinates sorted by the first coordinate, for windowed sums.
struct Indexed {
    dim: usize,
    coords: Vec<f64>,
    first: Vec<f64>,
    n_total: usize,
    overflow: usize,
}

impl Indexed {
    fn build(samples: &Samples, chart: &Chart) -> Result<Self> {
        let dim = chart.dim();
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
        let mut overflow = 0;
        for p in samples.points() {
            match chart.coords(p) {
                Some(c) if c.iter().all(|v| v.is_finite()) => pts.push(c),
                _ => overflow += 1,
            }
        }
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let first = pts.iter().map(|p| p[0]).collect();
        let coords = pts.into_iter().flatten().collect();
        Ok(Indexed { dim, coords, first, n_total: samples.n_total, overflow })
    }

    /// Σ K_h(x − X_i) and Σ K_h² over samples, Gaussian kernel cut at 8h.
    fn kernel_sums(&self, x: &[f64], h: f64) -> (f64, f64) {
        let lo = self.first.partition_point(|v| *v < x[0] - 8.0 * h);
        let hi = self.first.partition_point(|v| *v <= x[0] + 8.0 * h);
        let norm = (2.0 * PI).sqrt().powi(self.dim as i32) * h.powi(self.dim as i32);
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in lo..hi {
            let p = &self.coords[i * self.dim..(i + 1) * self.dim];
            let r2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = (-0.5 * r2 / (h * h)).exp() / norm;
            s1 += k;
            s2 += k * k;
        }
        (s1, s2)
    }

    fn value_se(&self, x: &[f64], h: f64, jac: f64) -> (f64, f64) {
        // beyond the image of the chart
        if !(jac > 0.0) {
            return (0.0, 0.0);
        }
        let (s1, s2) = self.kernel_sums(x, h);
        let n = self.n_total as f64;
        let mean = s1 / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        (mean / jac, (var / n).sqrt() / jac)
    }
}

/// n^{-1/(d+4)}.
pub fn default_bandwidth(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

/// Robust scale (mean per-axis IQR/1.349) times n^{-1/(d+4)}.
pub fn scaled_bandwidth(samples: &Samples, chart: &Chart) -> Result<f64> {
    let d = chart.dim();
    let coords: Vec<Vec<f64>> = samples.points().filter_map(|p| chart.coords(p)).collect();
    if coords.len() < 2 {
        return Err(Error::Degenerate("too few on-chart samples for a bandwidth".into()));
    }
    let mut scale = 0.0;
    for a in 0..d {
        let mut v: Vec<f64> = coords.iter().map(|c| c[a]).collect();
        v.sort_by(f64::total_cmp);
        scale += (quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)) / 1.349;
    }
    scale /= d as f64;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("samples have zero spread; the law has no density".into()));
    }
    Ok(scale * default_bandwidth(coords.len(), d))
}

/// Gaussian-kernel density estimate on a chart, w.r.t. the chart's
/// reference measure.
pub fn kde_density(samples: &Samples, bandwidth: f64, grid: &Grid, chart: &Chart) -> Result<DensityEstimate> {
    if samples.len() < 10_000 {
        return arg(format!("kde_density needs at least 10^4 samples, got {}", samples.len()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return arg("bandwidth must be positive");
    }
    if grid.dim() != chart.dim() {
        return arg("grid and chart dimensions differ");
    }
    let idx = Indexed::build(samples, chart)?;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            idx.value_se(&p, bandwidth, chart.jacobian(&p)).0
        })
        .collect();
    // trapezoid weights
    let mut integral = 0.0;
    for (i, v) in values.iter().enumerate() {
        let p = grid.point(i);
        let mut w = grid.cell_volume();
        let mut j = i;
        for a in 0..grid.dim() {
            let k = j % grid.n[a];
            j /= grid.n[a];
            if k == 0 || k == grid.n[a] - 1 {
                w *= 0.5;
            }
        }
        integral += w * v * chart.jacobian(&p);
    }
    Ok(DensityEstimate {
        grid: grid.clone(),
        values,
        bandwidth,
        sample_count: samples.len(),
        reference_measure: chart.reference_measure(),
        overflow_fraction: idx.overflow as f64 / samples.len().max(1) as f64,
        integral,
    })
}

/// KDE value at one chart point with its Monte Carlo standard error.
pub fn kde_at(samples: &Samples, point: &[f64], bandwidth: f64, chart: &Chart) -> Result<(f64, f64)> {
    if !(bandwidth > 0.0) {
        return arg("bandwidth must be positive");
    }
    if point.len() != chart.dim() {
        return arg("point and chart dimensions differ");
    }
    let idx = Indexed::build(samples, chart)?;
    Ok(idx.value_se(point, bandwidth, chart.jacobian(point)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    SupDensityScaling,
    Boundedness,
    Derivative,
    Invariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Diverging,
    DivergingNegative,
    Inconclusive,
    /// Fitted exponent agrees with the reference within tolerance.
    Consistent,
    Inconsistent,
    Pass,
    Fail,
}

/// One rung of a probe ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub scale: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub fitted: f64,
    pub ci: (f64, f64),
    pub verdict: Verdict,
    pub rungs: Vec<Rung>,
    pub note: String,
}

/// Where the sup of the density is sought: a sub-grid of a box in chart
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRegion {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl ProbeRegion {
    pub fn point(center: Vec<f64>) -> Self {
        ProbeRegion { center, half_width: 0.0, points_per_axis: 1 }
    }

    fn lattice(&self, scale: f64) -> Vec<Vec<f64>> {
        let d = self.center.len();
        let k = self.points_per_axis.max(1);
        let total = k.pow(d as u32);
        (0..total)
            .map(|mut i| {
                (0..d)
                    .map(|a| {
                        let j = i % k;
                        i /= k;
                        let off = if k == 1 { 0.0 } else { -1.0 + 2.0 * j as f64 / (k - 1) as f64 };
                        self.center[a] + off * self.half_width * scale
                    })
                    .collect()
            })
            .collect()
    }
}

fn fit_report(kind: ProbeKind, fit: &LinearFit, rungs: Vec<Rung>, verdict: Verdict, note: String) -> ProbeReport {
    ProbeReport { kind, fitted: fit.slope, ci: fit.ci, verdict, rungs, note }
}

/// Fits log sup p(t, ·) over the region against log t and compares the
/// slope with `target` (−d/α) at tolerance `tol`.
///
/// The sampler returns endpoint samples at time t. The region is scaled by
/// (t/t_max)^{1/α} when `alpha` is given, so that it tracks the
/// self-similar spread.
pub fn sup_density_scaling<F>(
    t_grid: &[f64],
    mut endpoint_sampler: F,
    probe_region: &ProbeRegion,
    chart: &Chart,
    target: f64,
    tol: f64,
) -> Result<ProbeReport>
where
    F: FnMut(f64) -> Result<Samples>,
{
    if t_grid.len() < 4 {
        return arg("sup_density_scaling needs at least 4 times");
    }
    let (tmin, tmax) = t_grid.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if !(tmin > 0.0) || tmax / tmin < 8.0 - 1e-12 {
        return arg("the time grid must be positive and span at least a factor 8");
    }
    let mut rungs = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let s = endpoint_sampler(t)?;
        let h = scaled_bandwidth(&s, chart)?;
        let idx = Indexed::build(&s, chart)?;
        let mut best = (0.0, 0.0);
        for p in probe_region.lattice(h) {
            let v = idx.value_se(&p, h, chart.jacobian(&p));
            if v.0 > best.0 {
                best = v;
            }
        }
        if !(best.0 > 0.0) {
            return Err(Error::Degenerate(format!("no density mass near the probe region at t={t}")));
        }
        rungs.push(Rung { scale: t, value: best.0, se: best.1 });
    }
    let x: Vec<f64> = rungs.iter().map(|r| r.scale.ln()).collect();
    let y: Vec<f64> = rungs.iter().map(|r| r.value.ln()).collect();
    let w: Vec<f64> = rungs.iter().map(|r| (r.value / r.se.max(1e-300)).powi(2)).collect();
    let fit = ols_weighted(&x, &y, Some(&w), 0.95);
    let verdict = if fit.ci.1 - fit.ci.0 > 1.0 {
        Verdict::Inconclusive
    } else if (fit.slope - target).abs() <= tol {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    };
    let note = format!("target slope {target:.6}, tolerance {tol}");
    Ok(fit_report(ProbeKind::SupDensityScaling, &fit, rungs, verdict, note))
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 4 {
        return arg("ladders need at least 4 rungs");
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0]) || !(w[1] > 0.0)) {
        return arg("ladder must be strictly decreasing and positive");
    }
    Ok(())
}

fn pair_sigma(a: &Rung, b: &Rung) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

fn log_slope(rungs: &[Rung]) -> LinearFit {
    let x: Vec<f64> = rungs.iter().map(|r| r.scale.ln()).collect();
    let y: Vec<f64> = rungs.iter().map(|r| r.value.max(1e-300).ln()).collect();
    let w: Vec<f64> = rungs.iter().map(|r| (r.value / r.se.max(1e-300)).powi(2)).collect();
    ols_weighted(&x, &y, Some(&w), 0.95)
}

/// KDE value at `target` across a decreasing bandwidth ladder. The sampler
/// gets (rung index, bandwidth) and may scale its sample count per rung.
///
/// Diverging iff the values increase at every rung and the total growth
/// exceeds 3 combined standard errors; bounded iff first and last rung agree
/// within 3 combined standard errors; any rung with relative error above
/// 20% makes the probe inconclusive.
pub fn boundedness_probe<F>(mut sampler: F, target: &[f64], bandwidth_ladder: &[f64], chart: &Chart) -> Result<ProbeReport>
where
    F: FnMut(usize, f64) -> Result<Samples>,
{
    check_ladder(bandwidth_ladder)?;
    let mut rungs = Vec::with_capacity(bandwidth_ladder.len());
    for (k, &h) in bandwidth_ladder.iter().enumerate() {
        let s = sampler(k, h)?;
        let (v, se) = kde_at(&s, target, h, chart)?;
        rungs.push(Rung { scale: h, value: v, se });
    }
    let fit = log_slope(&rungs);
    let noisy = rungs.iter().any(|r| !(r.value > 0.0) || r.se > 0.2 * r.value);
    let (first, last) = (&rungs[0], &rungs[rungs.len() - 1]);
    let monotone = rungs.windows(2).all(|w| w[1].value > w[0].value);
    let verdict = if noisy {
        Verdict::Inconclusive
    } else if monotone && last.value - first.value > 3.0 * pair_sigma(first, last) {
        Verdict::Diverging
    } else if (last.value - first.value).abs() <= 3.0 * pair_sigma(first, last) {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    let note = "fitted: log-log slope of the KDE value against the bandwidth".to_string();
    Ok(fit_report(ProbeKind::Boundedness, &fit, rungs, verdict, note))
}

/// First-derivative probe approaching `target` from one side (side = ±1),
/// or at `target` itself (side = 0).
///
/// At rung h the density slope at x_h = target + side·h is estimated by the
/// difference of the mass in the half-bins [x_h − h/2, x_h) and
/// [x_h, x_h + h/2), divided by (h/2)²·n_total, i.e. a box-kernel KDE
/// difference quotient. Diverging-negative iff the slopes decrease at every
/// rung and the total drop exceeds 3 combined standard errors.
pub fn derivative_probe<F>(mut sampler: F, target: f64, side: f64, scale_ladder: &[f64]) -> Result<ProbeReport>
where
    F: FnMut(usize, f64) -> Result<Samples>,
{
    check_ladder(scale_ladder)?;
    if side != 1.0 && side != -1.0 && side != 0.0 {
        return arg("side must be -1, 0 or +1");
    }
    let mut rungs = Vec::with_capacity(scale_ladder.len());
    for (k, &h) in scale_ladder.iter().enumerate() {
        let s = sampler(k, h)?;
        let x = target + side * h;
        let half = 0.5 * h;
        let (mut left, mut right) = (0usize, 0usize);
        for p in s.points() {
            let v = p[0];
            if v >= x - half && v < x {
                left += 1;
            } else if v >= x && v < x + half {
                right += 1;
            }
        }
        let n = s.n_total as f64;
        let scale = n * half * half;
        let value = (right as f64 - left as f64) / scale;
        let se = ((right + left) as f64).sqrt() / scale;
        rungs.push(Rung { scale: h, value, se });
    }
    let (first, last) = (&rungs[0], &rungs[rungs.len() - 1]);
    let x: Vec<f64> = rungs.iter().map(|r| r.scale.ln()).collect();
    let y: Vec<f64> = rungs.iter().map(|r| r.value).collect();
    let w: Vec<f64> = rungs.iter().map(|r| 1.0 / r.se.max(1e-300).powi(2)).collect();
    let fit = ols_weighted(&x, &y, Some(&w), 0.95);
    let drop = last.value - first.value;
    let sig = pair_sigma(first, last);
    let verdict = if rungs.windows(2).all(|w| w[1].value < w[0].value) && drop < -3.0 * sig {
        Verdict::DivergingNegative
    } else if rungs.windows(2).all(|w| w[1].value > w[0].value) && drop > 3.0 * sig {
        Verdict::Diverging
    } else if drop.abs() <= 3.0 * sig {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    let note = "fitted: slope of the derivative estimate against log h".to_string();
    Ok(fit_report(ProbeKind::Derivative, &fit, rungs, verdict, note))
}

/// Linear isometries acting on the leading coordinates of flat points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub matrix: Vec<Vec<f64>>,
}

impl Isometry {
    pub fn identity(k: usize) -> Self {
        Isometry { matrix: (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect() }
    }

    pub fn rotation_2d(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Isometry { matrix: vec![vec![c, -s], vec![s, c]] }
    }

    /// Rotation of ℝ³ about the first axis.
    pub fn rotation_about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Isometry { matrix: vec![vec![1.0, 0.0, 0.0], vec![0.0, c, -s], vec![0.0, s, c]] }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let k = self.matrix.len();
        let mut out = p.to_vec();
        for (i, row) in self.matrix.iter().enumerate() {
            out[i] = row.iter().zip(&p[..k]).map(|(a, b)| a * b).sum();
        }
        out
    }

    fn as_matrix(&self) -> DMatrix<f64> {
        let k = self.matrix.len();
        DMatrix::from_fn(k, k, |i, j| self.matrix[i][j])
    }
}

/// Two-sample KS tests between the samples and their images under each
/// transform, on the projections onto every coordinate of `projection_dims`
/// leading coordinates and onto their sum; pass iff every p-value exceeds
/// 0.01 / (number of tests).
pub fn invariance_test(samples: &Samples, transforms: &[Isometry], projection_dims: usize) -> Result<ProbeReport> {
    if transforms.is_empty() {
        return arg("invariance_test needs at least one transform");
    }
    for t in transforms {
        let m = t.as_matrix();
        if m.nrows() > samples.dim || (m.transpose() * &m - DMatrix::identity(m.nrows(), m.nrows())).amax() > 1e-10 {
            return arg("transforms must be orthogonal maps of the leading coordinates");
        }
    }
    let k = projection_dims.min(samples.dim);
    let projections: Vec<Box<dyn Fn(&[f64]) -> f64>> = (0..k)
        .map(|a| Box::new(move |p: &[f64]| p[a]) as Box<dyn Fn(&[f64]) -> f64>)
        .chain((k > 1).then(|| Box::new(move |p: &[f64]| p[..k].iter().sum::<f64>()) as Box<dyn Fn(&[f64]) -> f64>))
        .collect();
    let tests = transforms.len() * projections.len();
    let level = 0.01 / tests as f64;
    let mut rungs = Vec::with_capacity(tests);
    let mut min_p: f64 = 1.0;
    let mut max_stat: f64 = 0.0;
    for t in transforms {
        let images: Vec<Vec<f64>> = samples.points().map(|p| t.apply(p)).collect();
        for proj in &projections {
            let a: Vec<f64> = samples.points().map(proj).collect();
            let b: Vec<f64> = images.iter().map(|p| proj(p)).collect();
            let ks = ks_two_sample(&a, &b);
            min_p = min_p.min(ks.p_value);
            max_stat = max_stat.max(ks.statistic);
            rungs.push(Rung { scale: ks.statistic, value: ks.p_value, se: 0.0 });
        }
    }
    let verdict = if min_p > level { Verdict::Pass } else { Verdict::Fail };
    Ok(ProbeReport {
        kind: ProbeKind::Invariance,
        fitted: max_stat,
        ci: (max_stat, max_stat),
        verdict,
        rungs,
        note: format!("{tests} KS tests, Bonferroni level {level:.3e}; rungs hold (statistic, p-value)"),
    })
}
