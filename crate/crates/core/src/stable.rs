//! Symmetric α-stable laws: normalising constants, densities by Fourier
//! inversion, and exact samplers.
//!
//! "Standard" here means the isotropic law on ℝ^d with characteristic
//! function exp(-|u|^α). The exact samplers are used by experiments and test
//! oracles only; paths are always built from truncated jump skeletons.

use crate::error::{arg, Result};
use crate::quad::{gauss_kronrod, gauss_kronrod_to_inf, Tolerance};
use crate::rng::open01;
use rand::{Rng, RngCore};
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_PI_2, PI};

/// Surface area of the unit sphere S^{d-1} ⊂ ℝ^d.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// E|θ₁|^α for θ uniform on S^{d-1}.
pub fn first_coord_abs_moment(alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    gamma(d / 2.0) * gamma((alpha + 1.0) / 2.0) / (PI.sqrt() * gamma((d + alpha) / 2.0))
}

/// Radial density constant c such that c·r^{-α-1}dr ⊗ (uniform direction) is
/// the Lévy measure of the standard isotropic stable law.
pub fn standard_radial_const(alpha: f64, d: usize) -> f64 {
    2.0 * gamma(1.0 + alpha) * (PI * alpha / 2.0).sin() / (PI * first_coord_abs_moment(alpha, d))
}

/// Density at the origin of the standard law at time 1, closed form
/// (2π)^{-d}|S^{d-1}|Γ(d/α)/α.
pub fn density_at_zero(alpha: f64, d: usize) -> f64 {
    (2.0 * PI).powi(-(d as i32)) * sphere_area(d) * gamma(d as f64 / alpha) / alpha
}

/// Density at the origin by numerical Fourier inversion,
/// (2π)^{-d}|S^{d-1}| ∫₀^∞ r^{d-1} e^{-r^α} dr.
pub fn density_at_zero_fourier(alpha: f64, d: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) || d == 0 {
        return arg(format!("density_at_zero_fourier: alpha={alpha}, d={d}"));
    }
    let dm1 = d as i32 - 1;
    let e = gauss_kronrod_to_inf(|r| r.powi(dm1) * (-r.powf(alpha)).exp(), 0.0, Tolerance::rel(1e-12))?;
    Ok((2.0 * PI).powi(-(d as i32)) * sphere_area(d) * e.value)
}

fn fourier_cutoff(alpha: f64) -> f64 {
    // e^{-u^α} < 1e-18 beyond this point
    42.0f64.powf(1.0 / alpha)
}

/// Density of the standard one-dimensional law at x (time 1).
pub fn density_1d(alpha: f64, x: f64) -> Result<f64> {
    let u_max = fourier_cutoff(alpha);
    let tol = Tolerance { rel: 1e-10, abs: 1e-15, max_intervals: 20_000 };
    let e = gauss_kronrod(|u| (u * x).cos() * (-u.powf(alpha)).exp(), 0.0, u_max, tol)?;
    Ok(e.value / PI)
}

/// Distribution function of the standard one-dimensional law (time 1).
pub fn cdf_1d(alpha: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.5);
    }
    let u_max = fourier_cutoff(alpha);
    let tol = Tolerance { rel: 1e-10, abs: 1e-13, max_intervals: 20_000 };
    let sinc = |u: f64| if u == 0.0 { x } else { (u * x).sin() / u };
    let e = gauss_kronrod(|u| sinc(u) * (-u.powf(alpha)).exp(), 0.0, u_max, tol)?;
    Ok(0.5 + e.value / PI)
}

/// Chambers–Mallows–Stuck sampler for the standard symmetric law on ℝ.
pub fn sample_symmetric<R: RngCore + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    let w = -open01(rng).ln();
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Kanter's sampler for the positive stable law with Laplace transform
/// exp(-s^a), 0 < a < 1.
pub fn sample_positive<R: RngCore + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * open01(rng);
    let e = -open01(rng).ln();
    let u = if u >= PI { PI * (1.0 - 1e-16) } else { u };
    (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a)
}

/// Standard isotropic law on ℝ^d by Gaussian subordination: √A·G with A
/// positive (α/2)-stable and G ~ N(0, 2I).
pub fn sample_isotropic_subordinated<R: Rng + ?Sized>(alpha: f64, rng: &mut R, out: &mut [f64]) {
    let a = if alpha >= 2.0 { 1.0 } else { sample_positive(alpha / 2.0, rng) };
    let s = (2.0 * a).sqrt();
    for v in out.iter_mut() {
        *v = s * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
}

/// Standard isotropic law on ℝ^d; CMS in one dimension, subordination
/// otherwise.
pub fn sample_isotropic<R: Rng + ?Sized>(alpha: f64, rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = sample_symmetric(alpha, rng);
    } else {
        sample_isotropic_subordinated(alpha, rng, out);
    }
}

/// ∫₀^∞ (1 - cos s) s^{-1-α} ds = π / (2Γ(1+α) sin(πα/2)).
pub fn one_minus_cos_integral(alpha: f64) -> f64 {
    FRAC_PI_2 / (gamma(1.0 + alpha) * (FRAC_PI_2 * alpha).sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::tanh_sinh;
    use crate::rng::{PathSeed, Substream};
    use crate::stats::{ks_one_sample, ks_two_sample};

    #[test]
    fn closed_form_density_at_zero_matches_fourier() {
        for &d in &[1usize, 2, 3] {
            for &a in &[0.5, 0.8, 1.0, 1.5, 1.9] {
                let c = density_at_zero(a, d);
                let f = density_at_zero_fourier(a, d).unwrap();
                assert!((c - f).abs() < 1e-10 * c, "d={d} a={a}: {c} vs {f}");
            }
        }
        // Cauchy
        assert!((density_at_zero(1.0, 1) - 1.0 / PI).abs() < 1e-14);
        // Gaussian with variance 2
        assert!((density_at_zero(2.0, 1) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn radial_constant_reproduces_exponent() {
        // c·E|θ₁|^α·∫(1-cos s)s^{-1-α}ds = 1, the inner integral by quadrature
        for &a in &[0.6, 1.0, 1.5] {
            let split = 1.0;
            let g = |s: f64| {
                if s < 1e-6 {
                    0.5 * s.powf(1.0 - a)
                } else {
                    2.0 * (0.5 * s).sin().powi(2) * s.powf(-1.0 - a)
                }
            };
            let near = tanh_sinh(g, 0.0, split, 1e-12).unwrap().value;
            // tail: ∫_1^∞ s^{-1-α}ds - ∫_1^∞ cos(s) s^{-1-α} ds
            let tail_cos = gauss_kronrod(|s| s.cos() * s.powf(-1.0 - a), split, 4000.0, Tolerance {
                rel: 1e-11,
                abs: 1e-13,
                max_intervals: 50_000,
            })
            .unwrap()
            .value;
            // remainder beyond 4000 is O(4000^{-1-α}) by integration by parts
            let integral = near + 1.0 / a - tail_cos;
            assert!((integral - one_minus_cos_integral(a)).abs() < 1e-5, "{a}: {integral}");
            for &d in &[1usize, 2, 3] {
                let c = standard_radial_const(a, d);
                let v = c * first_coord_abs_moment(a, d) * one_minus_cos_integral(a);
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_coord_moment_by_quadrature() {
        // d = 3: θ₁ uniform on [-1,1]
        let a = 1.3;
        let q = gauss_kronrod(|z: f64| 0.5 * z.abs().powf(a), -1.0, 1.0, Tolerance::default()).unwrap().value;
        assert!((q - first_coord_abs_moment(a, 3)).abs() < 1e-10);
        // d = 2: θ₁ = cos φ
        let q = gauss_kronrod(|p: f64| p.cos().abs().powf(a) / (2.0 * PI), 0.0, 2.0 * PI, Tolerance::default())
            .unwrap()
            .value;
        assert!((q - first_coord_abs_moment(a, 2)).abs() < 1e-9);
        assert!((first_coord_abs_moment(a, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fourier_density_and_cdf_agree() {
        let a = 1.5;
        let p0 = density_1d(a, 0.0).unwrap();
        assert!((p0 - density_at_zero(a, 1)).abs() < 1e-10);
        // numerical derivative of the cdf
        let h = 1e-4;
        let x = 0.7;
        let fd = (cdf_1d(a, x + h).unwrap() - cdf_1d(a, x - h).unwrap()) / (2.0 * h);
        assert!((fd - density_1d(a, x).unwrap()).abs() < 1e-7);
        // Cauchy cdf
        let c = cdf_1d(1.0, 2.0).unwrap();
        assert!((c - (0.5 + 2.0f64.atan() / PI)).abs() < 1e-9);
    }

    #[test]
    fn cms_matches_fourier_cdf() {
        let a = 1.5;
        let mut rng = PathSeed::new(11, 0).stream(Substream::Exact);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_symmetric(a, &mut rng)).collect();
        // tabulate the cdf on a grid to keep the test quick
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
        let table: Vec<f64> = grid.iter().map(|&x| cdf_1d(a, x).unwrap()).collect();
        let cdf = |x: f64| {
            if x <= grid[0] {
                return table[0] * (grid[0] / x).abs().powf(a);
            }
            if x >= grid[grid.len() - 1] {
                return 1.0 - (1.0 - table[table.len() - 1]) * (grid[grid.len() - 1] / x).powf(a);
            }
            let p = (x - grid[0]) / 0.05;
            let i = p.floor() as usize;
            let f = p - i as f64;
            table[i] * (1.0 - f) + table[i + 1] * f
        };
        let r = ks_one_sample(&xs, cdf);
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn cms_and_subordination_agree_in_one_dimension() {
        let a = 1.2;
        let mut r1 = PathSeed::new(12, 0).stream(Substream::Exact);
        let mut r2 = PathSeed::new(12, 1).stream(Substream::Exact);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_symmetric(a, &mut r1)).collect();
        let ys: Vec<f64> = (0..20_000)
            .map(|_| {
                let mut v = [0.0];
                sample_isotropic_subordinated(a, &mut r2, &mut v);
                v[0]
            })
            .collect();
        let r = ks_two_sample(&xs, &ys);
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let a = 0.4;
        let mut rng = PathSeed::new(13, 0).stream(Substream::Exact);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_positive(a, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        for &s in &[0.5, 1.0, 2.0] {
            let m = xs.iter().map(|&x| (-s * x).exp()).sum::<f64>() / n as f64;
            let exact = (-(s as f64).powf(a)).exp();
            assert!((m - exact).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "s={s}: {m} vs {exact}");
        }
    }
}
