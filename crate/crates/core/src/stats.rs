//! Small statistics toolkit: running moments, Kolmogorov–Smirnov tests,
//! least-squares slopes with t-intervals, correlation tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Running) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = (self.n + o.n) as f64;
        let d = o.mean - self.mean;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n;
        self.mean += d * o.n as f64 / n;
        self.n += o.n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn summary(&self) -> MeanSe {
        MeanSe { mean: self.mean, se: (self.variance() / self.n.max(1) as f64).sqrt(), n: self.n }
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let mut r = Running::default();
    xs.iter().for_each(|&x| r.push(x));
    r.summary()
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 0..50 {
            let j = (2 * k + 1) as f64;
            let term = (j * j * y).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..100 {
            let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            s += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Inverse of `kolmogorov_sf` by bisection.
pub fn kolmogorov_isf(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size n·m/(n+m) (or n for one-sample tests).
    pub n_eff: f64,
}

impl KsResult {
    /// Asymptotic critical value of the statistic at level `level`.
    pub fn critical_value(&self, level: f64) -> f64 {
        kolmogorov_isf(level) / self.n_eff.sqrt()
    }
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let a = sorted(a);
    let b = sorted(b);
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return KsResult { statistic: 0.0, p_value: 1.0, n_eff: 0.0 };
    }
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    KsResult { statistic: d, p_value: ks_p(d, n_eff), n_eff }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult { statistic: d, p_value: ks_p(d, n), n_eff: n }
}

/// Ordinary least-squares line with a Student-t confidence interval on the
/// slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci: (f64, f64),
}

pub fn ols(x: &[f64], y: &[f64], level: f64) -> LinearFit {
    ols_weighted(x, y, None, level)
}

/// Weighted least squares; weights are inverse variances. With weights the
/// slope standard error is the model-based one (known variances), without
/// them it uses the residual variance.
pub fn ols_weighted(x: &[f64], y: &[f64], w: Option<&[f64]>, level: f64) -> LinearFit {
    let n = x.len();
    assert_eq!(n, y.len());
    assert!(n >= 2, "need at least two points for a line");
    let weighted = w.is_some();
    let ones = vec![1.0; n];
    let w = w.unwrap_or(&ones);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += w[i] * (x[i] - mx).powi(2);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, q) = if weighted {
        let z = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        ((1.0 / sxx).sqrt(), z.inverse_cdf(0.5 + level / 2.0))
    } else {
        let rss: f64 = (0..n).map(|i| (y[i] - intercept - slope * x[i]).powi(2)).sum();
        let dof = (n as f64 - 2.0).max(1.0);
        let se = (rss / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof).unwrap();
        (se, t.inverse_cdf(0.5 + level / 2.0))
    };
    LinearFit { slope, intercept, slope_se, ci: (slope - q * slope_se, slope + q * slope_se) }
}

/// Pearson correlation and its two-sided p-value under independence
/// (t-statistic with n-2 degrees of freedom).
pub fn pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    assert_eq!(n, y.len());
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, 1.0);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let dof = n as f64 - 2.0;
    let t = r * (dof / (1.0 - r * r).max(1e-300)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
    (r, 2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Sample quantile with linear interpolation (q in [0,1]) of sorted data.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < n {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[n - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_values() {
        // classical critical values
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_isf(0.01) - 1.6276).abs() < 1e-3);
        // continuity across the branch switch
        assert!((kolmogorov_sf(1.18 - 1e-9) - kolmogorov_sf(1.18 + 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ks_shifted_samples_reject() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 0.2).abs() < 2e-3);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&a, |x| x.clamp(0.0, 1.0));
        assert!((r.statistic - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = ols(&x, &y, 0.95);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!(f.ci.0 <= f.slope && f.slope <= f.ci.1);
    }

    #[test]
    fn running_merge_matches_sequential() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let mut a = Running::default();
        let mut b = Running::default();
        xs[..20].iter().for_each(|&x| a.push(x));
        xs[20..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let s = mean_se(&xs);
        assert!((a.mean() - s.mean).abs() < 1e-12);
        assert!((a.summary().se - s.se).abs() < 1e-12);
    }
}
