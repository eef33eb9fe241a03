//! Isotropic jump processes on the sphere and the hyperbolic plane through
//! the frame bundle: the marks are read in a moving orthonormal frame and
//! each jump follows a geodesic, carrying the frame along by parallel
//! transport. Started from a uniformly random frame at the reference point,
//! the law at time t is invariant under the isotropy group of that point.

use super::{check_alpha, check_count, check_positive, config_err, ExperimentResult, Scenario};
use crate::density::{invariance_test, Isometry, Samples, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{Frame, Manifold};
use crate::levy::LevyMeasureSpec;
use crate::marcus::{CoefficientField, SimOutput, Simulator, State};
use crate::parallel::Pool;
use crate::rng::{derive_master, PathSeed, Substream};
use crate::stable;
use crate::stats::ks_two_sample;
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub manifolds: Vec<Manifold>,
    pub alpha: f64,
    /// Radial density constant; the standard stable constant when absent.
    pub radial_const: Option<f64>,
    pub truncation_radius: f64,
    pub t: f64,
    pub delta: f64,
    pub paths: u64,
    /// Isotropy rotation angles.
    pub angles: Vec<f64>,
    pub flat_paths: u64,
    /// Also run an anisotropic measure from a fixed frame, which the
    /// invariance test should reject.
    pub negative_control: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            manifolds: vec![Manifold::Sphere2, Manifold::Hyperboloid(2)],
            alpha: 1.2,
            radial_const: None,
            truncation_radius: 1.0,
            t: 0.5,
            delta: 1e-2,
            paths: 100_000,
            angles: vec![0.7, 2.1, std::f64::consts::PI],
            flat_paths: 100_000,
            negative_control: true,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if self.manifolds.is_empty() || self.manifolds.iter().any(|m| !matches!(m, Manifold::Sphere2 | Manifold::Hyperboloid(2))) {
            return config_err("manifolds must be Sphere2 or Hyperboloid(2)");
        }
        check_alpha(self.alpha)?;
        if let Some(c) = self.radial_const {
            if !(c >= 0.0 && c.is_finite()) {
                return config_err("radial_const must be non-negative");
            }
        }
        check_positive("truncation_radius", self.truncation_radius)?;
        check_positive("t", self.t)?;
        check_positive("delta", self.delta)?;
        check_count("paths", self.paths, 1000)?;
        check_count("flat_paths", self.flat_paths, 1000)?;
        if self.angles.is_empty() {
            return config_err("angles must not be empty");
        }
        Ok(())
    }

    pub fn radial_measure(&self) -> LevyMeasureSpec {
        let c = self.radial_const.unwrap_or_else(|| stable::standard_radial_const(self.alpha, 2));
        LevyMeasureSpec::isotropic_stable(self.alpha, 2, c).truncated(self.truncation_radius)
    }

    /// Two-sided scaling bounds of the radial measure; a failure is a
    /// configuration error.
    pub fn audit(&self) -> Result<crate::levy::ScalingReport> {
        let rho: Vec<f64> = (0..=12).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect();
        let dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, -2.0]];
        let rep = self.radial_measure().verify_scaling_bounds(self.alpha, &rho, &dirs)?;
        if !rep.pass {
            return config_err(format!(
                "radial measure fails the two-sided scaling bounds (c = {:.3e}, C = {:.3e})",
                rep.c_hat, rep.big_c_hat
            ));
        }
        Ok(rep)
    }
}

/// Uniformly random orthonormal frame (rotation and reflection) at the
/// reference point, from the `Init` substream.
pub fn random_frame(m: Manifold, seed: PathSeed) -> Frame {
    let mut rng = seed.stream(Substream::Init);
    let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let std = Frame::standard(m.origin());
    let (e1, e2) = (&std.basis[0], &std.basis[1]);
    let (sn, cs) = th.sin_cos();
    Frame { base: std.base.clone(), basis: vec![e1 * cs + e2 * sn, (e2 * cs - e1 * sn) * s] }
}

fn run_paths(sim: &Simulator, m: Manifold, n: u64, master: u64, random: bool, pool: &Pool) -> Result<Vec<SimOutput>> {
    pool.try_map(n, |i| {
        let seed = PathSeed::new(master, i);
        let f = if random { random_frame(m, seed) } else { Frame::standard(m.origin()) };
        sim.run(&State::Frame(f), seed)
    })
}

fn base_samples(outs: &[SimOutput], ambient: usize) -> Result<Samples> {
    let data: Vec<f64> = outs.iter().flat_map(|o| o.endpoint.position.flat()[..ambient].to_vec()).collect();
    Samples::new(ambient, data, outs.len())
}

/// Rotations fixing the reference point, acting on ambient coordinates,
/// and the number of leading coordinates they move.
fn isotropy(m: Manifold, angles: &[f64]) -> (Vec<Isometry>, usize) {
    match m {
        // about the x₂ axis through the north pole
        Manifold::Sphere2 => (angles.iter().map(|&a| Isometry::rotation_2d(a)).collect(), 2),
        _ => (angles.iter().map(|&a| Isometry::rotation_about_x(a)).collect(), 3),
    }
}

pub fn run(p: &Params, seed: u64, pool: &Pool) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new(&Scenario::IsotropicManifold(p.clone()), seed);
    let audit = p.audit()?;
    res.oracle("scaling_c", audit.c_hat);
    res.oracle("scaling_C", audit.big_c_hat);
    let spec = p.radial_measure();

    for (mi, &m) in p.manifolds.iter().enumerate() {
        let sim = Simulator::new(&spec, CoefficientField::frame_horizontal(m), p.t, p.delta)?;
        let outs = run_paths(&sim, m, p.paths, derive_master(seed, 1 + mi as u64), true, pool)?;
        let inv_err = outs.iter().map(|o| o.max_invariant_error).fold(0.0, f64::max);
        let samples = base_samples(&outs, m.ambient_dim())?;
        let (transforms, k) = isotropy(m, &p.angles);
        let rep = invariance_test(&samples, &transforms, k)?;
        res.check(
            "AC9",
            &format!("isotropy invariance of the law at time t on {m:?}"),
            rep.verdict == Verdict::Pass,
            format!("{}; max KS statistic {:.4}, min p-value {:.4}", rep.note, rep.fitted, rep.rungs.iter().map(|r| r.value).fold(1.0, f64::min)),
        );
        res.report(
            "AC9",
            &format!("manifold and frame invariants along the paths on {m:?}"),
            inv_err <= 1e-10,
            format!("max invariant error {inv_err:.2e}"),
        );
        res.probes.insert(format!("invariance_{mi}"), rep);

        if p.negative_control {
            let c = p.radial_const.unwrap_or_else(|| stable::standard_radial_const(p.alpha, 2));
            let aniso = LevyMeasureSpec::product(vec![
                LevyMeasureSpec::isotropic_stable(p.alpha, 1, c).truncated(p.truncation_radius),
                LevyMeasureSpec::isotropic_stable(p.alpha, 1, 0.01 * c).truncated(p.truncation_radius),
            ]);
            let sim = Simulator::new(&aniso, CoefficientField::frame_horizontal(m), p.t, p.delta)?;
            let n = (p.paths / 5).max(1000);
            let outs = run_paths(&sim, m, n, derive_master(seed, 50 + mi as u64), false, pool)?;
            let rep = invariance_test(&base_samples(&outs, m.ambient_dim())?, &transforms, k)?;
            res.report(
                "AC9",
                &format!("anisotropic control from a fixed frame is rejected on {m:?}"),
                rep.verdict == Verdict::Fail,
                format!("verdict {:?}, max KS statistic {:.4}", rep.verdict, rep.fitted),
            );
        }
    }

    // flat space: frame bundle of ℝ² against the direct simulation
    let flat = Manifold::Euclidean(2);
    let sim = Simulator::new(&spec, CoefficientField::frame_horizontal(flat), p.t, p.delta)?;
    let a = run_paths(&sim, flat, p.flat_paths, derive_master(seed, 100), true, pool)?;
    let direct = Simulator::new(&spec, CoefficientField::identity(2), p.t, p.delta)?;
    let m2 = derive_master(seed, 101);
    let x0 = State::Euclid(DVector::zeros(2));
    let b = pool.try_map(p.flat_paths, |i| direct.run(&x0, PathSeed::new(m2, i)))?;
    let coord = |o: &[SimOutput], f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> { o.iter().map(|o| f(&o.endpoint.position.flat())).collect() };
    let first = |v: &[f64]| v[0];
    let radius = |v: &[f64]| v[0].hypot(v[1]);
    let ks0 = ks_two_sample(&coord(&a, &first), &coord(&b, &first));
    let ksr = ks_two_sample(&coord(&a, &radius), &coord(&b, &radius));
    let level = 0.01 / 2.0;
    res.mc("flat_ks_x0", ks0.statistic, 0.0);
    res.mc("flat_ks_radius", ksr.statistic, 0.0);
    res.check(
        "AC9",
        "frame-bundle process on R^2 vs direct isotropic simulation",
        ks0.p_value > level && ksr.p_value > level,
        format!(
            "KS on x0: D = {:.4} (p = {:.3}); on |x|: D = {:.4} (p = {:.3}); Bonferroni level {level}",
            ks0.statistic, ks0.p_value, ksr.statistic, ksr.p_value
        ),
    );
    if res.criteria.is_empty() {
        return Err(Error::Argument("no criteria evaluated".into()));
    }
    Ok(res)
}
