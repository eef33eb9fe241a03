//! Random cases and property suites shared by the integration tests and
//! the acceptance harness.

#![allow(dead_code)]

use jumpflow::experiments::{self, ExperimentConfig, Scenario};
use jumpflow::geometry::{frame_horizontal_step, Frame, Manifold};
use jumpflow::levy::LevyMeasureSpec;
use jumpflow::lie::{adjoint, compose, group_exp, modulus, GroupElement, GroupSpec, LieAlgebraVector};
use jumpflow::marcus::{marcus_flow, BuiltinField, CoefficientField, Simulator, State};
use jumpflow::parallel::Pool;
use jumpflow::{PathSeed, Result, Substream};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_vec<R: Rng>(rng: &mut R, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| s * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    PathSeed::new(seed, 0).stream(Substream::Aux)
}

#[derive(Debug, Clone)]
pub enum Space {
    Euclid(BuiltinField),
    Frames(Manifold),
    Group(GroupSpec, bool),
}

/// A state space with its coefficient field.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub name: String,
    pub space: Space,
    pub field: CoefficientField,
}

pub fn geometries() -> Vec<Geometry> {
    let mut out = Vec::new();
    let euclid = [
        ("identity", BuiltinField::Identity { dim: 2 }),
        ("constant", BuiltinField::Constant { matrix: vec![vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 2.0]] }),
        (
            "linear",
            BuiltinField::Linear { generators: vec![vec![vec![0.0, 1.0], vec![0.0, 0.0]], vec![vec![0.5, 0.0], vec![0.3, -0.2]]] },
        ),
        ("sin_shear", BuiltinField::SinShear),
        ("warped", BuiltinField::Warped),
    ];
    for (n, f) in euclid {
        out.push(Geometry { name: format!("R^d {n}"), field: CoefficientField::euclidean(f.clone()), space: Space::Euclid(f) });
    }
    for m in [Manifold::Euclidean(3), Manifold::Sphere2, Manifold::Hyperboloid(2)] {
        out.push(Geometry { name: format!("O({m:?})"), field: CoefficientField::frame_horizontal(m), space: Space::Frames(m) });
    }
    for g in [GroupSpec::SO3, GroupSpec::Affine(2), GroupSpec::DilTrans(2)] {
        for left in [true, false] {
            let field = if left { CoefficientField::lie_left(g) } else { CoefficientField::lie_right(g) };
            let side = if left { "left" } else { "right" };
            out.push(Geometry { name: format!("{g:?} {side}"), field, space: Space::Group(g, left) });
        }
    }
    out
}

pub fn random_frame<R: Rng>(m: Manifold, rng: &mut R) -> Frame {
    frame_horizontal_step(&Frame::standard(m.origin()), &rand_vec(rng, m.dim(), 1.5)).unwrap()
}

pub fn random_element<R: Rng>(g: GroupSpec, rng: &mut R) -> GroupElement {
    match g {
        GroupSpec::DilTrans(d) => GroupElement::dil_trans(DVector::from_vec(rand_vec(rng, d, 3.0)), rng.random_range(-3..=3)),
        _ => group_exp(&LieAlgebraVector { spec: g, components: rand_vec(rng, g.algebra_dim(), 1.0) }).unwrap(),
    }
}

impl Geometry {
    pub fn random_state<R: Rng>(&self, rng: &mut R) -> State {
        match &self.space {
            Space::Euclid(f) => State::Euclid(DVector::from_vec(rand_vec(rng, f.state_dim(), 2.0))),
            Space::Frames(m) => State::Frame(random_frame(*m, rng)),
            Space::Group(g, _) => State::Group(random_element(*g, rng)),
        }
    }

    pub fn random_mark<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.space {
            // ℝ^d ⋊ ℤ jumps translate or dilate, never both
            Space::Group(GroupSpec::DilTrans(d), _) => {
                let mut v = vec![0.0; d + 1];
                if rng.random::<bool>() {
                    v[..*d].copy_from_slice(&rand_vec(rng, *d, 2.0));
                } else {
                    v[*d] = rng.random_range(-2..=2) as f64;
                }
                v
            }
            _ => rand_vec(rng, self.field.mark_dim(), 1.5),
        }
    }
}

/// max |a − b|∞ / (1 + |a|∞) over flat coordinates.
pub fn rel_dist(a: &State, b: &State) -> f64 {
    let (a, b) = (a.flat(), b.flat());
    let scale = 1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Largest relative error of a(a(x, λ), −λ) = x over `cases` random pairs.
pub fn flow_inversion(g: &Geometry, cases: usize, seed: u64) -> Result<f64> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x = g.random_state(&mut rng);
        let l = g.random_mark(&mut rng);
        let neg: Vec<f64> = l.iter().map(|v| -v).collect();
        let y = marcus_flow(&x, &l, &g.field)?;
        let back = marcus_flow(&y, &neg, &g.field)?;
        worst = worst.max(rel_dist(&x, &back));
    }
    Ok(worst)
}

/// (name, coefficients, driving measure, start) of the long-path
/// invariant suite; about 1.2·10^4 jumps per unit time.
pub fn long_path_cases() -> Vec<(String, CoefficientField, LevyMeasureSpec, State)> {
    let rate = 12_000.0;
    let atoms = |r: f64, d: usize| LevyMeasureSpec::atomic(vec![(r, rate)], d);
    let mut v = Vec::new();
    for (m, r) in [(Manifold::Sphere2, 0.5), (Manifold::Hyperboloid(2), 0.02)] {
        v.push((format!("O({m:?})"), CoefficientField::frame_horizontal(m), atoms(r, 2), State::Frame(Frame::standard(m.origin()))));
    }
    for (g, r) in [(GroupSpec::SO3, 0.5), (GroupSpec::Affine(2), 0.02)] {
        v.push((format!("{g:?}"), CoefficientField::lie_left(g), atoms(r, g.algebra_dim()), State::Group(g.identity())));
    }
    let g = GroupSpec::DilTrans(2);
    let spec = LevyMeasureSpec::product(vec![
        LevyMeasureSpec::atomic(vec![(0.5, rate / 2.0)], 2),
        LevyMeasureSpec::discrete(vec![(1, rate / 4.0), (-1, rate / 4.0)]),
    ]);
    v.push((format!("{g:?}"), CoefficientField::lie_left(g), spec, State::Group(g.identity())));
    v
}

/// (name, jump count, largest per-step invariant defect) for each long path.
pub fn long_path_invariants(seed: u64) -> Result<Vec<(String, usize, f64)>> {
    long_path_cases()
        .into_iter()
        .map(|(name, field, spec, x0)| {
            let sim = Simulator::new(&spec, field, 1.0, 1e-3)?;
            let out = sim.run(&x0, PathSeed::new(seed, 0))?;
            Ok((name, out.jump_count, out.max_invariant_error))
        })
        .collect()
}

/// Largest relative defects of Ad_{gh} = Ad_g Ad_h, χ(gh) = χ(g)χ(h) and
/// χ = |det Ad| over random pairs on every group.
pub fn homomorphism_defects(cases: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let mut rng = rng(seed);
    let (mut ad, mut chi, mut det) = (0.0f64, 0.0f64, 0.0f64);
    let groups = [GroupSpec::SO3, GroupSpec::Affine(2), GroupSpec::Affine(3), GroupSpec::DilTrans(1), GroupSpec::DilTrans(3)];
    for _ in 0..cases {
        for &s in &groups {
            let (g, h) = (random_element(s, &mut rng), random_element(s, &mut rng));
            let gh = compose(&g, &h)?;
            let lhs = adjoint(&gh);
            let rhs = adjoint(&g) * adjoint(&h);
            ad = ad.max((&lhs - &rhs).amax() / (1.0 + lhs.amax()));
            let (a, b, c) = (modulus(&g), modulus(&h), modulus(&gh));
            chi = chi.max((c - a * b).abs() / (a * b));
            det = det.max((adjoint(&g).determinant().abs() - a).abs() / a.max(1.0));
        }
    }
    Ok((ad, chi, det))
}

/// `result.json` bytes of a small fixed-seed experiment on each thread count.
pub fn result_bytes(threads: &[usize], seed: u64) -> Result<Vec<String>> {
    let scenario: Scenario = serde_json::from_str(r#"{"scaling_flat": {"paths": 20000}}"#)?;
    let cfg = ExperimentConfig { seed, output_dir: None, scenario };
    threads.iter().map(|&t| experiments::run(&cfg, &Pool::new(t)?)?.to_json()).collect()
}
