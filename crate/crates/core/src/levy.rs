//! Lévy measures, their jump skeletons and numerical audits.
//!
//! Isotropic measures use the radial convention μ = c·r^{-α-1}dr ⊗ σ, with σ
//! the uniform probability on directions. In one dimension this puts mass
//! (c/2)|λ|^{-α-1}dλ on each half-line.

use crate::error::{arg, Error, Result};
use crate::quad::{gauss_kronrod, tanh_sinh, Tolerance};
use crate::rng::{open01, open01_with_sign, poisson, unit_direction, PathSeed, Substream};
use crate::stable::standard_radial_const;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

/// Named mark laws for finite compound-Poisson components (all on ℝ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkSampler {
    UnitPositive,
    UnitNegative,
    UnitSign,
    StdNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LevyKind {
    IsotropicStable {
        alpha: f64,
        dim: usize,
        radial_density_const: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation_radius: Option<f64>,
    },
    /// Atoms at integer levels of ℝ.
    DiscreteSigned { masses: Vec<(i64, f64)> },
    /// Radius/mass atoms, each spread uniformly over directions.
    AtomicRadial { atoms: Vec<(f64, f64)>, dim: usize },
    CompoundFinite { total_rate: f64, mark_sampler_id: MarkSampler },
    /// Independent components acting on consecutive coordinate blocks.
    Product { components: Vec<LevyMeasureSpec> },
}

/// A Lévy measure μ with drift κ.
///
/// Unless `pure_jump` is set, κ is the drift of the representation with
/// jumps of size at most one compensated. With `pure_jump` the process is
/// κt plus the plain sum of its jumps (only meaningful when ∫(|λ|∧1)μ < ∞).
/// For a `Product`, each component carries its own κ and flag and the outer
/// κ, if given, is added on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    #[serde(flatten)]
    pub kind: LevyKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift_kappa: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pure_jump: bool,
}

impl From<LevyKind> for LevyMeasureSpec {
    fn from(kind: LevyKind) -> Self {
        Self { kind, drift_kappa: Vec::new(), pure_jump: false }
    }
}

/// Outcome of `verify_scaling_bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub c_hat: f64,
    #[serde(rename = "C_hat")]
    pub big_c_hat: f64,
    pub pass: bool,
    /// (ρ, direction index, I(ρ,u)/ρ^{2-α})
    pub ratios: Vec<(f64, usize, f64)>,
}

/// Outcome of `integrability_audit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// ∫_{|λ|≤1} |λ|² μ(dλ)
    pub small_second_moment: f64,
    /// μ(|λ| > 1)
    pub big_mass: f64,
    pub finite_activity: bool,
    pub symmetric: bool,
    pub alpha: Option<f64>,
}

fn total_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    v.into_iter().sum()
}

impl LevyMeasureSpec {
    pub fn isotropic_stable(alpha: f64, dim: usize, radial_density_const: f64) -> Self {
        LevyKind::IsotropicStable { alpha, dim, radial_density_const, truncation_radius: None }.into()
    }

    /// The Lévy measure of the law with characteristic function exp(-t|u|^α).
    pub fn standard_stable(alpha: f64, dim: usize) -> Self {
        Self::isotropic_stable(alpha, dim, standard_radial_const(alpha, dim))
    }

    pub fn truncated(mut self, radius: f64) -> Self {
        if let LevyKind::IsotropicStable { truncation_radius, .. } = &mut self.kind {
            *truncation_radius = Some(radius);
        }
        self
    }

    pub fn with_kappa(mut self, kappa: Vec<f64>) -> Self {
        self.drift_kappa = kappa;
        self
    }

    pub fn pure_jump(mut self) -> Self {
        self.pure_jump = true;
        self
    }

    pub fn discrete(masses: Vec<(i64, f64)>) -> Self {
        LevyKind::DiscreteSigned { masses }.into()
    }

    /// p_n = e^{-βn}, p_{-n} = e^{-σn} for n ≥ 1, listed until both terms
    /// fall below 1e-18 of the leading ones.
    pub fn two_sided_geometric(beta: f64, sigma: f64) -> Self {
        let mut masses = Vec::new();
        let mut n = 1i64;
        loop {
            let up = (-beta * n as f64).exp();
            let down = (-sigma * n as f64).exp();
            if up < 1e-18 * (-beta).exp() && down < 1e-18 * (-sigma).exp() {
                break;
            }
            masses.push((n, up));
            masses.push((-n, down));
            n += 1;
        }
        Self::discrete(masses)
    }

    pub fn atomic(atoms: Vec<(f64, f64)>, dim: usize) -> Self {
        LevyKind::AtomicRadial { atoms, dim }.into()
    }

    /// Semi-stable atomic measure: atoms at r_k = 2^{-k}, k = 0..=k_max, with
    /// mass 2^{kα}(1 + wobble·(-1)^k). The scaling ratio I(ρ,u)/ρ^{2-α}
    /// oscillates between two fixed bounds instead of being constant.
    pub fn semi_stable_atoms(alpha: f64, dim: usize, k_max: u32, wobble: f64) -> Self {
        let atoms = (0..=k_max)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                (2f64.powi(-(k as i32)), 2f64.powf(k as f64 * alpha) * (1.0 + wobble * s))
            })
            .collect();
        Self::atomic(atoms, dim)
    }

    pub fn compound(total_rate: f64, sampler: MarkSampler) -> Self {
        LevyKind::CompoundFinite { total_rate, mark_sampler_id: sampler }.into()
    }

    pub fn product(components: Vec<LevyMeasureSpec>) -> Self {
        LevyKind::Product { components }.into()
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            LevyKind::IsotropicStable { dim, .. } | LevyKind::AtomicRadial { dim, .. } => *dim,
            LevyKind::DiscreteSigned { .. } | LevyKind::CompoundFinite { .. } => 1,
            LevyKind::Product { components } => components.iter().map(|c| c.dim()).sum(),
        }
    }

    /// Stability index of the infinite-activity part, if any.
    pub fn alpha(&self) -> Option<f64> {
        match &self.kind {
            LevyKind::IsotropicStable { alpha, .. } => Some(*alpha),
            LevyKind::Product { components } => {
                components.iter().filter_map(|c| c.alpha()).fold(None, |m, a| Some(m.map_or(a, |m: f64| m.max(a))))
            }
            _ => None,
        }
    }

    pub fn is_finite_activity(&self) -> bool {
        match &self.kind {
            LevyKind::IsotropicStable { .. } => false,
            LevyKind::Product { components } => components.iter().all(|c| c.is_finite_activity()),
            _ => true,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            LevyKind::IsotropicStable { .. } | LevyKind::AtomicRadial { .. } => true,
            LevyKind::DiscreteSigned { masses } => {
                let mut net = std::collections::BTreeMap::new();
                for &(n, p) in masses {
                    *net.entry(n).or_insert(0.0) += p;
                }
                net.iter().all(|(n, p)| (net.get(&-n).copied().unwrap_or(0.0) - p).abs() <= 1e-15 * p.abs())
            }
            LevyKind::CompoundFinite { mark_sampler_id, .. } => {
                matches!(mark_sampler_id, MarkSampler::UnitSign | MarkSampler::StdNormal)
            }
            LevyKind::Product { components } => components.iter().all(|c| c.is_symmetric()),
        }
    }

    /// Parameter-domain checks shared by every operation.
    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64| x.is_finite();
        if !self.drift_kappa.is_empty() && self.drift_kappa.len() != self.dim() {
            return arg(format!("drift_kappa has length {}, measure dimension is {}", self.drift_kappa.len(), self.dim()));
        }
        if !self.drift_kappa.iter().all(|&k| finite(k)) {
            return arg("drift_kappa must be finite");
        }
        match &self.kind {
            LevyKind::IsotropicStable { alpha, dim, radial_density_const, truncation_radius } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return arg(format!("stable index alpha={alpha} outside (0,2)"));
                }
                if *dim == 0 {
                    return arg("dimension must be positive");
                }
                if !(*radial_density_const >= 0.0 && finite(*radial_density_const)) {
                    return arg(format!("radial density constant {radial_density_const} must be finite and >= 0"));
                }
                if let Some(r) = truncation_radius {
                    if !(*r > 0.0) {
                        return arg(format!("truncation radius {r} must be > 0"));
                    }
                }
            }
            LevyKind::DiscreteSigned { masses } => {
                for &(n, p) in masses {
                    if n == 0 {
                        return arg("discrete measure has an atom at level 0");
                    }
                    if !(p >= 0.0 && finite(p)) {
                        return arg(format!("mass {p} at level {n} must be finite and >= 0"));
                    }
                }
                if !total_sum(masses.iter().map(|m| m.1)).is_finite() {
                    return Err(Error::Audit("discrete masses have an infinite sum".into()));
                }
            }
            LevyKind::AtomicRadial { atoms, dim } => {
                if *dim == 0 {
                    return arg("dimension must be positive");
                }
                for &(r, m) in atoms {
                    if !(r > 0.0 && finite(r)) || !(m > 0.0 && finite(m)) {
                        return arg(format!("atom (r={r}, mass={m}) needs r > 0 and mass > 0"));
                    }
                }
            }
            LevyKind::CompoundFinite { total_rate, .. } => {
                if !(*total_rate >= 0.0 && finite(*total_rate)) {
                    return arg(format!("total rate {total_rate} must be finite and >= 0"));
                }
            }
            LevyKind::Product { components } => {
                if components.is_empty() {
                    return arg("product measure needs at least one component");
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// μ({|λ| > delta}).
    pub fn tail_mass(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return arg(format!("tail_mass needs delta > 0, got {delta}"));
        }
        let v = match &self.kind {
            LevyKind::IsotropicStable { alpha, radial_density_const: c, truncation_radius, .. } => match truncation_radius {
                Some(r) if delta >= *r => 0.0,
                Some(r) => c / alpha * (delta.powf(-alpha) - r.powf(-alpha)),
                None => c / alpha * delta.powf(-alpha),
            },
            LevyKind::DiscreteSigned { masses } => {
                total_sum(masses.iter().filter(|(n, _)| (*n as f64).abs() > delta).map(|m| m.1))
            }
            LevyKind::AtomicRadial { atoms, .. } => total_sum(atoms.iter().filter(|a| a.0 > delta).map(|a| a.1)),
            LevyKind::CompoundFinite { total_rate, mark_sampler_id } => match mark_sampler_id {
                MarkSampler::StdNormal => total_rate * 2.0 * normal_sf(delta),
                _ => {
                    if delta < 1.0 {
                        *total_rate
                    } else {
                        0.0
                    }
                }
            },
            LevyKind::Product { components } => {
                let mut s = 0.0;
                for c in components {
                    s += c.tail_mass(delta)?;
                }
                s
            }
        };
        if !v.is_finite() {
            return Err(Error::Audit(format!("tail mass above {delta} is not finite")));
        }
        Ok(v)
    }

    /// ∫_{|λ|≤delta} λλᵀ μ(dλ), the per-unit-time covariance of the jumps
    /// that a skeleton with cutoff `delta` leaves out.
    pub fn small_jump_variance(&self, delta: f64) -> Result<DMatrix<f64>> {
        if !(delta > 0.0) {
            return arg(format!("small_jump_variance needs delta > 0, got {delta}"));
        }
        let m = self.dim();
        Ok(match &self.kind {
            LevyKind::IsotropicStable { alpha, dim, radial_density_const: c, truncation_radius } => {
                let rho = truncation_radius.map_or(delta, |r| delta.min(r));
                let s = c * rho.powf(2.0 - alpha) / (2.0 - alpha) / *dim as f64;
                DMatrix::identity(m, m) * s
            }
            LevyKind::DiscreteSigned { masses } => {
                let s = total_sum(
                    masses.iter().filter(|(n, _)| (*n as f64).abs() <= delta).map(|&(n, p)| p * (n * n) as f64),
                );
                DMatrix::from_element(1, 1, s)
            }
            LevyKind::AtomicRadial { atoms, dim } => {
                let s = total_sum(atoms.iter().filter(|a| a.0 <= delta).map(|&(r, w)| w * r * r)) / *dim as f64;
                DMatrix::identity(m, m) * s
            }
            LevyKind::CompoundFinite { total_rate, mark_sampler_id } => {
                let s = match mark_sampler_id {
                    // E[Z²; |Z| ≤ δ] = P(|Z| ≤ δ) - 2δφ(δ)
                    MarkSampler::StdNormal => {
                        let phi = (-0.5 * delta * delta).exp() / (2.0 * PI).sqrt();
                        total_rate * ((1.0 - 2.0 * normal_sf(delta)) - 2.0 * delta * phi)
                    }
                    _ => {
                        if delta >= 1.0 {
                            *total_rate
                        } else {
                            0.0
                        }
                    }
                };
                DMatrix::from_element(1, 1, s)
            }
            LevyKind::Product { components } => {
                let mut out = DMatrix::zeros(m, m);
                let mut off = 0;
                for c in components {
                    let k = c.dim();
                    out.view_mut((off, off), (k, k)).copy_from(&c.small_jump_variance(delta)?);
                    off += k;
                }
                out
            }
        })
    }

    /// ∫_{delta<|λ|≤1} λ μ(dλ).
    pub fn truncated_first_moment(&self, delta: f64) -> Result<DVector<f64>> {
        let m = self.dim();
        if self.is_symmetric() || delta >= 1.0 {
            return Ok(DVector::zeros(m));
        }
        Ok(match &self.kind {
            LevyKind::DiscreteSigned { masses } => {
                let s = total_sum(
                    masses.iter().filter(|(n, _)| (*n as f64).abs() > delta && n.abs() <= 1).map(|&(n, p)| p * n as f64),
                );
                DVector::from_element(1, s)
            }
            LevyKind::CompoundFinite { total_rate, mark_sampler_id } => DVector::from_element(
                1,
                match mark_sampler_id {
                    MarkSampler::UnitPositive => *total_rate,
                    MarkSampler::UnitNegative => -*total_rate,
                    _ => 0.0,
                },
            ),
            LevyKind::Product { components } => {
                let mut v = Vec::with_capacity(m);
                for c in components {
                    v.extend(c.truncated_first_moment(delta)?.iter());
                }
                DVector::from_vec(v)
            }
            _ => DVector::zeros(m),
        })
    }

    /// Drift to apply between the jumps of a skeleton with cutoff `delta`.
    pub fn compensator_drift(&self, delta: f64) -> Result<DVector<f64>> {
        let m = self.dim();
        let kappa = if self.drift_kappa.is_empty() {
            DVector::zeros(m)
        } else {
            DVector::from_column_slice(&self.drift_kappa)
        };
        if let LevyKind::Product { components } = &self.kind {
            let mut v = Vec::with_capacity(m);
            for c in components {
                v.extend(c.compensator_drift(delta)?.iter());
            }
            return Ok(DVector::from_vec(v) + kappa);
        }
        if self.pure_jump {
            return Ok(kappa);
        }
        Ok(kappa - self.truncated_first_moment(delta)?)
    }

    /// Checks ∫(|λ|²∧1)μ < ∞ and the extra requirement at α = 1.
    pub fn integrability_audit(&self) -> Result<AuditReport> {
        self.validate()?;
        let small = self.small_jump_variance(1.0)?.trace();
        let big = self.tail_mass(1.0)?;
        if !(small.is_finite() && big.is_finite()) {
            return Err(Error::Audit(format!("∫(|λ|²∧1)μ is not finite: small={small}, big={big}")));
        }
        self.check_alpha_one()?;
        Ok(AuditReport {
            small_second_moment: small,
            big_mass: big,
            finite_activity: self.is_finite_activity(),
            symmetric: self.is_symmetric(),
            alpha: self.alpha(),
        })
    }

    fn check_alpha_one(&self) -> Result<()> {
        if let LevyKind::Product { components } = &self.kind {
            return components.iter().try_for_each(|c| c.check_alpha_one());
        }
        if let Some(a) = self.alpha() {
            if (a - 1.0).abs() < 1e-12 && !self.is_symmetric() && !self.pure_jump {
                return Err(Error::Audit(
                    "alpha = 1 needs a symmetric measure or an explicit principal-value drift (pure_jump)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Two-sided scaling audit: min and max over the grid of
    /// I(ρ,u)/(|u|²ρ^{2-α}) with I(ρ,u) = ∫_{|λ|≤ρ}⟨λ,u⟩²μ(dλ), computed by
    /// radial quadrature for stable parts and summation for atoms.
    pub fn verify_scaling_bounds(&self, alpha: f64, rho_grid: &[f64], directions: &[Vec<f64>]) -> Result<ScalingReport> {
        if rho_grid.is_empty() {
            return arg("rho_grid is empty");
        }
        if let Some(r) = rho_grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return arg(format!("rho {r} outside (0,1]"));
        }
        let m = self.dim();
        if let Some(u) = directions.iter().find(|u| u.len() != m) {
            return arg(format!("direction of length {} for a measure of dimension {m}", u.len()));
        }
        let mut ratios = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &rho in rho_grid {
            let cov = self.second_moment_by_quadrature(rho)?;
            for (k, u) in directions.iter().enumerate() {
                let u = DVector::from_column_slice(u);
                let n2 = u.norm_squared();
                if n2 == 0.0 {
                    return arg("zero direction vector");
                }
                let r = (u.transpose() * &cov * &u)[0] / (n2 * rho.powf(2.0 - alpha));
                lo = lo.min(r);
                hi = hi.max(r);
                ratios.push((rho, k, r));
            }
        }
        Ok(ScalingReport { c_hat: lo, big_c_hat: hi, pass: lo > 0.0 && hi.is_finite(), ratios })
    }

    fn second_moment_by_quadrature(&self, rho: f64) -> Result<DMatrix<f64>> {
        match &self.kind {
            LevyKind::IsotropicStable { alpha, dim, radial_density_const: c, truncation_radius } => {
                let top = truncation_radius.map_or(rho, |r| rho.min(r));
                let e = tanh_sinh(|r| c * r.powf(1.0 - alpha), 0.0, top, 1e-13)?;
                Ok(DMatrix::identity(*dim, *dim) * (e.value / *dim as f64))
            }
            LevyKind::Product { components } => {
                let m = self.dim();
                let mut out = DMatrix::zeros(m, m);
                let mut off = 0;
                for c in components {
                    let k = c.dim();
                    out.view_mut((off, off), (k, k)).copy_from(&c.second_moment_by_quadrature(rho)?);
                    off += k;
                }
                Ok(out)
            }
            _ => self.small_jump_variance(rho),
        }
    }

    /// ∫ φ(λ) μ(dλ) over λ ≠ 0. For infinite-activity parts φ must vanish to
    /// second order at 0; the innermost radial piece below `r0` is
    /// replaced by its quadratic extrapolation, which is exact up to
    /// O(r0^{3-α}).
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut phi: F, tol: f64) -> Result<f64> {
        let m = self.dim();
        let mut buf = vec![0.0; m];
        self.integrate_block(&mut phi, &mut buf, 0, tol)
    }

    fn integrate_block<F: FnMut(&[f64]) -> f64>(&self, phi: &mut F, buf: &mut [f64], off: usize, tol: f64) -> Result<f64> {
        let k = self.dim();
        let at = |buf: &mut [f64], x: &[f64], phi: &mut F| -> f64 {
            buf[off..off + k].copy_from_slice(x);
            let v = phi(buf);
            buf[off..off + k].iter_mut().for_each(|z| *z = 0.0);
            v
        };
        match &self.kind {
            LevyKind::IsotropicStable { alpha, dim, radial_density_const: c, truncation_radius } => {
                let d = *dim;
                let mut shell = |r: f64, buf: &mut [f64]| -> Result<f64> {
                    let mut x = vec![0.0; d];
                    direction_average(
                        d,
                        |theta| {
                            x.iter_mut().zip(theta).for_each(|(xi, t)| *xi = r * t);
                            at(buf, &x, phi)
                        },
                        tol * 0.1,
                    )
                };
                let r0 = 1e-3f64;
                let top = truncation_radius.unwrap_or(f64::INFINITY);
                let inner_top = top.min(1.0);
                let mut total = 0.0;
                let mut err: Option<Error> = None;
                // below r0: avg φ(rθ) ≈ K r², K from the r0 shell
                let k_quad = shell(r0.min(inner_top), buf)? / r0.min(inner_top).powi(2);
                let a0 = r0.min(inner_top);
                total += c * k_quad * a0.powf(2.0 - alpha) / (2.0 - alpha);
                if inner_top > r0 {
                    let e = gauss_kronrod(
                        |r| match shell(r, buf) {
                            Ok(v) => c * v * r.powf(-alpha - 1.0),
                            Err(e) => {
                                err.get_or_insert(e);
                                0.0
                            }
                        },
                        r0,
                        inner_top,
                        Tolerance::new(tol, 1e-14),
                    )?;
                    total += e.value;
                }
                if top > 1.0 {
                    // far tail in log-radius; an untruncated measure is cut
                    // where its remaining mass drops below `tol`, so the
                    // neglected part is at most sup|φ|·tol
                    let far = if top.is_finite() { top } else { (c / (alpha * tol)).powf(1.0 / alpha).max(2.0) };
                    let e = gauss_kronrod(
                        |v| {
                            let r = v.exp();
                            match shell(r, buf) {
                                Ok(s) => c * s * r.powf(-alpha),
                                Err(e) => {
                                    err.get_or_insert(e);
                                    0.0
                                }
                            }
                        },
                        0.0,
                        far.ln(),
                        Tolerance { rel: tol, abs: 1e-14, max_intervals: 20_000 },
                    )?;
                    total += e.value;
                }
                match err {
                    Some(e) => Err(e),
                    None => Ok(total),
                }
            }
            LevyKind::DiscreteSigned { masses } => {
                Ok(total_sum(masses.iter().map(|&(n, p)| p * at(buf, &[n as f64], phi))))
            }
            LevyKind::AtomicRadial { atoms, dim } => {
                let d = *dim;
                let mut s = 0.0;
                for &(r, w) in atoms {
                    let mut x = vec![0.0; d];
                    let v = direction_average(
                        d,
                        |theta| {
                            x.iter_mut().zip(theta).for_each(|(xi, t)| *xi = r * t);
                            at(buf, &x, phi)
                        },
                        tol * 0.1,
                    )?;
                    s += w * v;
                }
                Ok(s)
            }
            LevyKind::CompoundFinite { total_rate, mark_sampler_id } => Ok(total_rate
                * match mark_sampler_id {
                    MarkSampler::UnitPositive => at(buf, &[1.0], phi),
                    MarkSampler::UnitNegative => at(buf, &[-1.0], phi),
                    MarkSampler::UnitSign => 0.5 * (at(buf, &[1.0], phi) + at(buf, &[-1.0], phi)),
                    MarkSampler::StdNormal => {
                        let norm = (2.0 * PI).sqrt();
                        gauss_kronrod(
                            |z| at(buf, &[z], phi) * (-0.5 * z * z).exp() / norm,
                            -12.0,
                            12.0,
                            Tolerance::new(tol, 1e-15),
                        )?
                        .value
                    }
                }),
            LevyKind::Product { components } => {
                let mut s = 0.0;
                let mut o = off;
                for c in components {
                    s += c.integrate_block(phi, buf, o, tol)?;
                    o += c.dim();
                }
                Ok(s)
            }
        }
    }

    /// Compiles the normalised restriction of μ to {|λ| > delta}.
    pub fn sampler(&self, delta: f64) -> Result<JumpSampler> {
        JumpSampler::new(self, delta)
    }

    /// Random skeleton of all jumps larger than `delta` on (0, t].
    pub fn sample_jump_skeleton(&self, t: f64, delta: f64, seed: PathSeed) -> Result<JumpSkeleton> {
        if !(t > 0.0 && t.is_finite()) {
            return arg(format!("horizon t={t} must be positive"));
        }
        let s = self.sampler(delta)?;
        let mut sk = JumpSkeleton::empty(t, delta, self.dim(), s.drift.clone());
        s.sample_into(&mut sk, t, seed);
        Ok(sk)
    }
}

fn normal_sf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sf(x)
}

/// Average of f over the uniform probability on S^{d-1}, d ≤ 3.
pub fn direction_average<F: FnMut(&[f64]) -> f64>(d: usize, mut f: F, tol: f64) -> Result<f64> {
    let tol = Tolerance::new(tol.max(1e-14), 1e-15);
    match d {
        1 => Ok(0.5 * (f(&[1.0]) + f(&[-1.0]))),
        2 => {
            let e = gauss_kronrod(|p| f(&[p.cos(), p.sin()]), 0.0, 2.0 * PI, tol)?;
            Ok(e.value / (2.0 * PI))
        }
        3 => {
            let mut inner_err = None;
            let e = gauss_kronrod(
                |z| {
                    let s = (1.0 - z * z).max(0.0).sqrt();
                    match gauss_kronrod(|p| f(&[s * p.cos(), s * p.sin(), z]), 0.0, 2.0 * PI, tol) {
                        Ok(v) => v.value,
                        Err(e) => {
                            inner_err.get_or_insert(e);
                            0.0
                        }
                    }
                },
                -1.0,
                1.0,
                tol,
            )?;
            match inner_err {
                Some(e) => Err(e),
                None => Ok(e.value / (4.0 * PI)),
            }
        }
        _ => arg(format!("direction averages are implemented for d <= 3, got {d}")),
    }
}

/// All jumps of size above the cutoff on (0, t], in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSkeleton {
    pub horizon_t: f64,
    pub cutoff_delta: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major marks, `dim` entries per event.
    pub marks: Vec<f64>,
    /// Drift per unit time replacing the compensated small jumps.
    pub compensator_drift: Vec<f64>,
}

impl JumpSkeleton {
    pub fn empty(t: f64, delta: f64, dim: usize, drift: Vec<f64>) -> Self {
        Self { horizon_t: t, cutoff_delta: delta, dim, times: Vec::new(), marks: Vec::new(), compensator_drift: drift }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mark(&self, i: usize) -> &[f64] {
        &self.marks[i * self.dim..(i + 1) * self.dim]
    }

    pub fn events(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.marks.chunks_exact(self.dim.max(1)))
    }
}

#[derive(Debug, Clone)]
enum Block {
    Stable { alpha: f64, lo_pow: f64, hi_pow: f64, dim: usize },
    Levels { levels: Vec<f64>, cdf: Vec<f64> },
    Radii { radii: Vec<f64>, cdf: Vec<f64>, dim: usize },
    Constant(f64),
    Sign,
    Normal { delta: f64 },
}

/// Compiled mark sampler for a fixed cutoff.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    pub dim: usize,
    /// Total rate of jumps above the cutoff.
    pub rate: f64,
    pub delta: f64,
    pub drift: Vec<f64>,
    blocks: Vec<(usize, Block)>,
    block_cdf: Vec<f64>,
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut v: Vec<f64> = w
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(&last) = v.last() {
        if last > 0.0 {
            v.iter_mut().for_each(|x| *x /= last);
        }
    }
    v
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

impl JumpSampler {
    pub fn new(spec: &LevyMeasureSpec, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return arg(format!("cutoff delta={delta} must be positive and finite"));
        }
        spec.validate()?;
        spec.check_alpha_one()?;
        if let Some(a) = spec.alpha() {
            if a <= 1.0 && !spec.is_symmetric() && !spec.pure_jump && !matches!(spec.kind, LevyKind::Product { .. }) {
                return arg("alpha <= 1 with an asymmetric measure must be declared pure_jump");
            }
        }
        let mut blocks = Vec::new();
        let mut weights = Vec::new();
        Self::collect(spec, delta, 0, &mut blocks, &mut weights)?;
        let rate: f64 = weights.iter().sum();
        let keep: Vec<usize> = (0..blocks.len()).filter(|&i| weights[i] > 0.0).collect();
        let blocks: Vec<(usize, Block)> = keep.iter().map(|&i| blocks[i].clone()).collect();
        let block_cdf = cumulative(keep.iter().map(|&i| weights[i]));
        Ok(Self {
            dim: spec.dim(),
            rate,
            delta,
            drift: spec.compensator_drift(delta)?.iter().copied().collect(),
            blocks,
            block_cdf,
        })
    }

    fn collect(
        spec: &LevyMeasureSpec,
        delta: f64,
        off: usize,
        blocks: &mut Vec<(usize, Block)>,
        weights: &mut Vec<f64>,
    ) -> Result<()> {
        let w = if matches!(spec.kind, LevyKind::Product { .. }) { 0.0 } else { spec.tail_mass(delta)? };
        match &spec.kind {
            LevyKind::IsotropicStable { alpha, dim, truncation_radius, .. } => {
                blocks.push((
                    off,
                    Block::Stable {
                        alpha: *alpha,
                        lo_pow: delta.powf(-alpha),
                        hi_pow: truncation_radius.map_or(0.0, |r| r.powf(-alpha)),
                        dim: *dim,
                    },
                ));
                weights.push(w);
            }
            LevyKind::DiscreteSigned { masses } => {
                let sel: Vec<&(i64, f64)> = masses.iter().filter(|(n, p)| (*n as f64).abs() > delta && *p > 0.0).collect();
                blocks.push((
                    off,
                    Block::Levels { levels: sel.iter().map(|m| m.0 as f64).collect(), cdf: cumulative(sel.iter().map(|m| m.1)) },
                ));
                weights.push(w);
            }
            LevyKind::AtomicRadial { atoms, dim } => {
                let sel: Vec<&(f64, f64)> = atoms.iter().filter(|a| a.0 > delta).collect();
                blocks.push((
                    off,
                    Block::Radii { radii: sel.iter().map(|a| a.0).collect(), cdf: cumulative(sel.iter().map(|a| a.1)), dim: *dim },
                ));
                weights.push(w);
            }
            LevyKind::CompoundFinite { mark_sampler_id, .. } => {
                blocks.push((
                    off,
                    match mark_sampler_id {
                        MarkSampler::UnitPositive => Block::Constant(1.0),
                        MarkSampler::UnitNegative => Block::Constant(-1.0),
                        MarkSampler::UnitSign => Block::Sign,
                        MarkSampler::StdNormal => Block::Normal { delta },
                    },
                ));
                weights.push(w);
            }
            LevyKind::Product { components } => {
                let mut o = off;
                for c in components {
                    Self::collect(c, delta, o, blocks, weights)?;
                    o += c.dim();
                }
            }
        }
        Ok(())
    }

    /// Draws one mark into `out` (length `dim`), which is overwritten.
    #[inline]
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let (off, block) = if self.blocks.len() == 1 {
            let b = &self.blocks[0];
            (b.0, &b.1)
        } else {
            out.iter_mut().for_each(|x| *x = 0.0);
            let b = &self.blocks[pick(&self.block_cdf, open01(rng))];
            (b.0, &b.1)
        };
        match block {
            Block::Stable { alpha, lo_pow, hi_pow, dim } => {
                if *dim == 1 {
                    let (u, s) = open01_with_sign(rng);
                    let r = (hi_pow + u * (lo_pow - hi_pow)).powf(-1.0 / alpha);
                    out[off] = s * r;
                } else {
                    let u = open01(rng);
                    let r = (hi_pow + u * (lo_pow - hi_pow)).powf(-1.0 / alpha);
                    let o = &mut out[off..off + dim];
                    unit_direction(rng, o);
                    o.iter_mut().for_each(|x| *x *= r);
                }
            }
            Block::Levels { levels, cdf } => out[off] = levels[pick(cdf, open01(rng))],
            Block::Radii { radii, cdf, dim } => {
                let r = radii[pick(cdf, open01(rng))];
                let o = &mut out[off..off + dim];
                unit_direction(rng, o);
                o.iter_mut().for_each(|x| *x *= r);
            }
            Block::Constant(c) => out[off] = *c,
            Block::Sign => out[off] = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 },
            Block::Normal { delta } => loop {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                if z.abs() > *delta {
                    out[off] = z;
                    break;
                }
            },
        }
    }

    /// Number of jumps on (0, t] for the path addressed by `seed`.
    pub fn sample_count(&self, t: f64, seed: PathSeed) -> usize {
        poisson(&mut seed.stream(Substream::Count), self.rate * t) as usize
    }

    /// Fills `sk` (buffers reused) with a fresh skeleton on (0, t].
    pub fn sample_into(&self, sk: &mut JumpSkeleton, t: f64, seed: PathSeed) {
        let n = self.sample_count(t, seed);
        sk.horizon_t = t;
        sk.cutoff_delta = self.delta;
        sk.dim = self.dim;
        sk.compensator_drift.clone_from(&self.drift);
        sk.times.clear();
        let mut tr = seed.stream(Substream::Times);
        sk.times.extend((0..n).map(|_| t * open01(&mut tr)));
        sk.times.sort_by(f64::total_cmp);
        sk.marks.clear();
        sk.marks.resize(n * self.dim, 0.0);
        let mut mr = seed.stream(Substream::Marks);
        for chunk in sk.marks.chunks_exact_mut(self.dim.max(1)) {
            self.sample_mark(&mut mr, chunk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::tanh_sinh;

    #[test]
    fn tail_mass_examples() {
        let s = LevyMeasureSpec::isotropic_stable(1.0, 1, 1.0).truncated(1.0);
        assert!((s.tail_mass(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s.tail_mass(1.0).unwrap(), 0.0);
        assert_eq!(s.tail_mass(3.0).unwrap(), 0.0);
        assert!(s.tail_mass(0.0).is_err());

        let masses: Vec<(i64, f64)> =
            (1..60).flat_map(|n| [(n, (-(n as f64)).exp()), (-n, (-2.0 * n as f64).exp())]).collect();
        let d = LevyMeasureSpec::discrete(masses);
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let exact = e1 / (1.0 - e1) + e2 / (1.0 - e2);
        assert!((d.tail_mass(0.5).unwrap() - exact).abs() < 1e-15);
    }

    #[test]
    fn tail_mass_against_quadrature() {
        let (a, c, r, delta) = (1.3, 0.7, 2.0, 0.05);
        let s = LevyMeasureSpec::isotropic_stable(a, 2, c).truncated(r);
        let q = gauss_kronrod(|x| c * x.powf(-a - 1.0), delta, r, Tolerance::rel(1e-12)).unwrap().value;
        let q2 = tanh_sinh(|x| c * x.powf(-a - 1.0), delta, r, 1e-13).unwrap().value;
        let v = s.tail_mass(delta).unwrap();
        assert!((v - q).abs() < 1e-9 * v);
        assert!((v - q2).abs() < 1e-9 * v);
        // also against the generic integrator with φ = 1{|λ|>δ}
        let g = s
            .integrate(|x| if x.iter().map(|v| v * v).sum::<f64>().sqrt() > delta { 1.0 } else { 0.0 }, 1e-10)
            .unwrap();
        assert!((g - v).abs() < 1e-6 * v, "{g} vs {v}");
    }

    #[test]
    fn small_jump_variance_examples() {
        let a = 1.5;
        let s = LevyMeasureSpec::isotropic_stable(a, 1, a);
        for &d in &[0.5, 0.1, 1e-3] {
            let v = s.small_jump_variance(d).unwrap()[(0, 0)];
            assert!((v - a * d.powf(2.0 - a) / (2.0 - a)).abs() < 1e-15);
            let q = tanh_sinh(|r| a * r.powf(1.0 - a), 0.0, d, 1e-13).unwrap().value;
            assert!((v - q).abs() < 1e-10 * v);
        }
        let p = LevyMeasureSpec::product(vec![
            LevyMeasureSpec::isotropic_stable(1.2, 1, 1.0),
            LevyMeasureSpec::compound(2.0, MarkSampler::StdNormal),
        ]);
        let m = p.small_jump_variance(0.3).unwrap();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
        // E[Z²;|Z|≤δ] by quadrature
        let q = gauss_kronrod(|z| z * z * (-0.5 * z * z).exp() / (2.0 * PI).sqrt(), -0.3, 0.3, Tolerance::default())
            .unwrap()
            .value;
        assert!((m[(1, 1)] - 2.0 * q).abs() < 1e-13);
    }

    #[test]
    fn scaling_bounds_examples() {
        let a = 1.5;
        let s = LevyMeasureSpec::isotropic_stable(a, 1, a);
        let grid: Vec<f64> = (0..12).map(|k| 0.5f64.powi(k)).collect();
        let r = s.verify_scaling_bounds(a, &grid, &[vec![1.0]]).unwrap();
        assert!(r.pass);
        assert!((r.c_hat - a / (2.0 - a)).abs() < 1e-9);
        assert!((r.big_c_hat - a / (2.0 - a)).abs() < 1e-9);
        assert!(r.c_hat / r.big_c_hat >= 0.999);

        // axis-only measure in ℝ²
        let axis = LevyMeasureSpec::product(vec![
            LevyMeasureSpec::isotropic_stable(a, 1, 1.0),
            LevyMeasureSpec::atomic(vec![], 1),
        ]);
        let r = axis.verify_scaling_bounds(a, &grid, &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(r.c_hat, 0.0);
        assert!(!r.pass);

        // semi-stable atoms: ratio oscillates within fixed bounds
        let semi = LevyMeasureSpec::semi_stable_atoms(a, 2, 60, 0.5);
        let fine: Vec<f64> = (0..200).map(|k| 0.9f64.powi(k)).collect();
        let r = semi.verify_scaling_bounds(a, &fine, &[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        assert!(r.pass);
        assert!(r.big_c_hat / r.c_hat > 1.2, "ratio should genuinely oscillate");
        assert!(r.big_c_hat / r.c_hat < 10.0);
    }

    #[test]
    fn verify_rejects_bad_grid() {
        let s = LevyMeasureSpec::standard_stable(1.5, 1);
        assert!(s.verify_scaling_bounds(1.5, &[], &[vec![1.0]]).is_err());
        assert!(s.verify_scaling_bounds(1.5, &[1.5], &[vec![1.0]]).is_err());
    }

    #[test]
    fn audit_rules() {
        assert!(LevyMeasureSpec::standard_stable(1.0, 2).integrability_audit().is_ok());
        let skew = LevyMeasureSpec::product(vec![
            LevyMeasureSpec::standard_stable(1.0, 1),
            LevyMeasureSpec::compound(1.0, MarkSampler::UnitPositive),
        ]);
        assert!(skew.integrability_audit().is_ok());
        let bad = LevyMeasureSpec::isotropic_stable(2.5, 1, 1.0);
        assert!(bad.integrability_audit().is_err());
        let r = LevyMeasureSpec::standard_stable(0.5, 3).integrability_audit().unwrap();
        assert!(!r.finite_activity && r.symmetric);
    }

    #[test]
    fn compensator_drift_rules() {
        let s = LevyMeasureSpec::standard_stable(1.5, 2).with_kappa(vec![0.5, -1.0]);
        assert_eq!(s.compensator_drift(1e-3).unwrap().as_slice(), &[0.5, -1.0]);
        let p = LevyMeasureSpec::compound(2.0, MarkSampler::UnitPositive);
        assert_eq!(p.compensator_drift(0.5).unwrap()[0], -2.0);
        assert_eq!(p.clone().pure_jump().compensator_drift(0.5).unwrap()[0], 0.0);
        let d = LevyMeasureSpec::discrete(vec![(1, 3.0), (-1, 1.0), (2, 5.0)]);
        assert_eq!(d.compensator_drift(0.5).unwrap()[0], -2.0);
    }

    #[test]
    fn serde_round_trip() {
        let s = LevyMeasureSpec::product(vec![
            LevyMeasureSpec::standard_stable(0.6, 1).truncated(3.0),
            LevyMeasureSpec::compound(1.0, MarkSampler::UnitNegative).pure_jump(),
        ]);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"kind\":\"Product\""));
        let back: LevyMeasureSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let parsed: LevyMeasureSpec =
            serde_json::from_str(r#"{"kind":"AtomicRadial","atoms":[[0.5,1.0]],"dim":2,"drift_kappa":[0,0]}"#).unwrap();
        assert_eq!(parsed.dim(), 2);
    }

    #[test]
    fn skeleton_structure_and_determinism() {
        let s = LevyMeasureSpec::standard_stable(1.5, 2);
        let delta = 0.05;
        let a = s.sample_jump_skeleton(2.0, delta, PathSeed::new(9, 3)).unwrap();
        let b = s.sample_jump_skeleton(2.0, delta, PathSeed::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        assert!(a.times.windows(2).all(|w| w[0] < w[1]));
        assert!(a.times.iter().all(|&t| t > 0.0 && t <= 2.0));
        for (_, m) in a.events() {
            assert!(m.iter().map(|x| x * x).sum::<f64>().sqrt() > delta);
        }
        let none = s.clone().truncated(0.5).sample_jump_skeleton(1.0, 0.6, PathSeed::new(1, 1)).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn skeleton_event_count_matches_tail_mass() {
        let a = 1.5;
        let s = LevyMeasureSpec::isotropic_stable(a, 1, a).truncated(1.0);
        let (t, delta) = (1.0, 0.1);
        let sampler = s.sampler(delta).unwrap();
        let n = 100_000;
        let total: usize = (0..n).map(|i| sampler.sample_count(t, PathSeed::new(4, i))).sum();
        let mean = total as f64 / n as f64;
        let expect = t * (delta.powf(-a) - 1.0);
        let se = (expect / n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");
    }

    #[test]
    fn mark_second_moment_matches_measure() {
        // empirical ∫_{δ<|λ|≤1} λλᵀ μ from marks vs the closed form
        let a = 1.2;
        let s = LevyMeasureSpec::standard_stable(a, 2);
        let delta = 0.05;
        let sampler = s.sampler(delta).unwrap();
        let c = standard_radial_const(a, 2);
        let exact = c * (1.0 - delta.powf(2.0 - a)) / (2.0 - a) / 2.0;
        let n = 200_000;
        let mut rng = PathSeed::new(5, 0).stream(Substream::Marks);
        let mut m = [0.0; 2];
        let (mut s11, mut s12) = (crate::stats::Running::default(), crate::stats::Running::default());
        for _ in 0..n {
            sampler.sample_mark(&mut rng, &mut m);
            let r2 = m[0] * m[0] + m[1] * m[1];
            let inside = if r2 <= 1.0 { sampler.rate } else { 0.0 };
            s11.push(inside * m[0] * m[0]);
            s12.push(inside * m[0] * m[1]);
        }
        let e11 = s11.summary();
        let e12 = s12.summary();
        assert!((e11.mean - exact).abs() < 3.0 * e11.se, "{:?} vs {exact}", e11);
        assert!(e12.mean.abs() < 3.0 * e12.se);
    }

    #[test]
    fn symmetric_marks_have_zero_mean() {
        let s = LevyMeasureSpec::standard_stable(1.7, 1).truncated(5.0);
        let sampler = s.sampler(0.01).unwrap();
        let mut rng = PathSeed::new(6, 0).stream(Substream::Marks);
        let mut r = crate::stats::Running::default();
        let mut m = [0.0];
        for _ in 0..200_000 {
            sampler.sample_mark(&mut rng, &mut m);
            r.push(m[0]);
        }
        let e = r.summary();
        assert!(e.mean.abs() < 3.5 * e.se);
    }

    #[test]
    fn integrate_matches_closed_forms() {
        // ∫ |λ|² 1{|λ|≤1} μ = trace of small_jump_variance(1)
        let s = LevyMeasureSpec::standard_stable(1.4, 2);
        let v = s
            .integrate(|x| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 <= 1.0 {
                    r2
                } else {
                    0.0
                }
            }, 1e-9)
            .unwrap();
        let exact = s.small_jump_variance(1.0).unwrap().trace();
        assert!((v - exact).abs() < 1e-6 * exact, "{v} vs {exact}");
        // ∫(1 - cos⟨u,λ⟩)μ = |u|^α for the standard law, d = 3
        let a = 1.5;
        // against the same integral in one radial dimension: for the truncated
        // law, ∫(1-cos⟨u,λ⟩)μ = c·E_θ ∫_0^R (1-cos(r⟨u,θ⟩)) r^{-α-1} dr, and for
        // d = 3 ⟨u,θ⟩ = |u|z with z uniform on [-1,1]
        let s3 = LevyMeasureSpec::standard_stable(a, 3).truncated(4.0);
        let c = standard_radial_const(a, 3);
        let u = [0.3, -0.4, 0.5];
        let nu = (0.5f64).sqrt();
        let v = s3
            .integrate(|x| 2.0 * (0.5 * (u[0] * x[0] + u[1] * x[1] + u[2] * x[2])).sin().powi(2), 1e-8)
            .unwrap();
        let radial = |z: f64| {
            tanh_sinh(
                |r| {
                    let k = r * nu * z;
                    if r < 1e-6 { 0.5 * (nu * z).powi(2) * r.powf(1.0 - a) } else { 2.0 * (0.5 * k).sin().powi(2) * r.powf(-a - 1.0) }
                },
                0.0,
                4.0,
                1e-12,
            )
            .unwrap()
            .value
        };
        let oracle = c * gauss_kronrod(|z| 0.5 * radial(z), -1.0, 1.0, Tolerance::rel(1e-10)).unwrap().value;
        assert!((v - oracle).abs() < 1e-6 * oracle, "{v} vs {oracle}");
        // untruncated, one dimension: exponent |u|^α
        let s1 = LevyMeasureSpec::standard_stable(a, 1);
        let v = s1.integrate(|x| 2.0 * (0.5 * 0.8 * x[0]).sin().powi(2), 1e-9).unwrap();
        assert!((v - 0.8f64.powf(a)).abs() < 1e-6, "{v}");
    }
}
