//! Flat isotropic stable process through skeleton, integrator, KDE and the
//! scaling fit of sup p(t, ·) against t.

use super::{check_alpha, check_count, check_positive, config_err, csv_table, ExperimentResult, Scenario};
use crate::density::{sup_density_scaling, Chart, ProbeRegion, ProbeReport, Samples, Verdict};
use crate::error::Result;
use crate::levy::{JumpSampler, LevyMeasureSpec};
use crate::parallel::Pool;
use crate::rng::{derive_master, PathSeed, Substream};
use crate::stable;
use crate::svg::Plot;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub alpha: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    pub paths: u64,
    pub delta: f64,
    /// Allowed distance between the fitted slope and −d/α.
    pub tolerance: f64,
    /// Repeat the fit with δ/2 on the same random numbers.
    pub halved_delta_check: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            alpha: 1.5,
            dim: 1,
            times: vec![0.05, 0.1, 0.2, 0.4],
            paths: 1_000_000,
            delta: 1e-3,
            tolerance: 0.1,
            halved_delta_check: false,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(1..=3).contains(&self.dim) {
            return config_err(format!("dim={} must be 1, 2 or 3", self.dim));
        }
        check_positive("delta", self.delta)?;
        check_positive("tolerance", self.tolerance)?;
        check_count("paths", self.paths, 10_000)?;
        if self.times.len() < 4 || self.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return config_err("times must hold at least 4 positive values");
        }
        Ok(())
    }
}

/// Endpoint at time t, started at 0, of the path addressed by `seed` for the
/// identity field without drift: the marks of its skeleton summed in draw
/// order. Uses the same random numbers, and the same additions, as
/// sampling the skeleton and integrating it, without storing event times.
pub fn stream_endpoint(sampler: &JumpSampler, t: f64, seed: PathSeed, mark: &mut [f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let n = sampler.sample_count(t, seed);
    let mut rng = seed.stream(Substream::Marks);
    for _ in 0..n {
        sampler.sample_mark(&mut rng, mark);
        for (o, m) in out.iter_mut().zip(mark.iter()) {
            *o += *m;
        }
    }
}

/// Endpoint samples at time t for paths 0..n under `master`.
pub fn endpoints(sampler: &JumpSampler, t: f64, n: u64, master: u64, pool: &Pool) -> Result<Samples> {
    let d = sampler.dim;
    let chunks = pool.chunks(n, |r| {
        let mut v = Vec::with_capacity((r.end - r.start) as usize * d);
        let mut mark = vec![0.0; d];
        let mut out = vec![0.0; d];
        for i in r {
            stream_endpoint(sampler, t, PathSeed::new(master, i), &mut mark, &mut out);
            v.extend_from_slice(&out);
        }
        Ok(v)
    })?;
    Samples::new(d, chunks.concat(), n as usize)
}

fn fit(p: &Params, spec: &LevyMeasureSpec, delta: f64, seed: u64, pool: &Pool) -> Result<ProbeReport> {
    let sampler = spec.sampler(delta)?;
    let region = ProbeRegion { center: vec![0.0; p.dim], half_width: 2.0, points_per_axis: 5 };
    let target = -(p.dim as f64) / p.alpha;
    let mut rung = 0u64;
    sup_density_scaling(
        &p.times,
        |t| {
            rung += 1;
            endpoints(&sampler, t, p.paths, derive_master(seed, rung), pool)
        },
        &region,
        &Chart::Flat { dim: p.dim },
        target,
        p.tolerance,
    )
}

pub fn run(p: &Params, seed: u64, pool: &Pool) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new(&Scenario::ScalingFlat(p.clone()), seed);
    let (a, d) = (p.alpha, p.dim);
    let spec = LevyMeasureSpec::standard_stable(a, d);
    let p1 = stable::density_at_zero_fourier(a, d)?;
    res.oracle("p_1_0_fourier", p1);
    res.oracle("p_1_0_closed_form", stable::density_at_zero(a, d));
    res.oracle("target_slope", -(d as f64) / a);

    let rep = fit(p, &spec, p.delta, seed, pool)?;
    let mut rows = Vec::new();
    for r in &rep.rungs {
        let exact = r.scale.powf(-(d as f64) / a) * p1;
        res.oracle(format!("p_t_0[t={}]", r.scale), exact);
        res.mc(format!("sup_kde[t={}]", r.scale), r.value, r.se);
        rows.push(vec![r.scale, r.value, r.se, exact]);
    }
    res.files.push(("density_sup.csv".into(), csv_table("t,sup_density,se,exact_p_t_0", rows.clone())));
    res.files.push((
        "scaling.svg".into(),
        Plot::new("sup-density scaling", "t", "density")
            .log_log()
            .with("KDE sup", rows.iter().map(|r| (r[0], r[1])).collect())
            .with("exact p(t,0)", rows.iter().map(|r| (r[0], r[3])).collect())
            .render(),
    ));
    res.check(
        "AC1",
        "sup-density log-log slope",
        rep.verdict == Verdict::Consistent,
        format!(
            "slope {:.4} (95% CI [{:.4}, {:.4}]) vs target {:.4} +/- {}; verdict {:?}",
            rep.fitted,
            rep.ci.0,
            rep.ci.1,
            -(d as f64) / a,
            p.tolerance,
            rep.verdict
        ),
    );
    if p.halved_delta_check {
        let half = fit(p, &spec, 0.5 * p.delta, seed, pool)?;
        let width = rep.ci.1 - rep.ci.0;
        let change = (half.fitted - rep.fitted).abs();
        res.report(
            "AC1",
            "slope stable under halving the cutoff",
            change < width,
            format!("slope {:.4} at delta/2, change {change:.4} vs CI width {width:.4}", half.fitted),
        );
        res.probes.insert("scaling_half_delta".into(), half);
    }
    res.probes.insert("scaling".into(), rep);
    Ok(res)
}
