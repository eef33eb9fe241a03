//! Built-in matrix Lie groups: SO(3), the affine group of ℝ^d and the
//! dilation–translation group ℝ^d ⋊ ℤ, with exponential, adjoint action,
//! modulus, Haar densities and big-jump moment conditions.

use crate::error::{arg, Error, Result};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "group", content = "dim")]
pub enum GroupSpec {
    SO3,
    Affine(usize),
    DilTrans(usize),
}

impl GroupSpec {
    pub fn algebra_dim(&self) -> usize {
        match *self {
            GroupSpec::SO3 => 3,
            GroupSpec::Affine(d) => d * d + d,
            GroupSpec::DilTrans(d) => d,
        }
    }

    /// Dimension of the space acted on (ℝ^d, or ℝ³ for rotations).
    pub fn space_dim(&self) -> usize {
        match *self {
            GroupSpec::SO3 => 3,
            GroupSpec::Affine(d) | GroupSpec::DilTrans(d) => d,
        }
    }

    pub fn identity(&self) -> GroupElement {
        let data = match *self {
            GroupSpec::SO3 => GroupData::Rotation(Matrix3::identity()),
            GroupSpec::Affine(d) => GroupData::Affine { g1: DMatrix::identity(d, d), g2: DVector::zeros(d) },
            GroupSpec::DilTrans(d) => GroupData::DilTrans { y: DVector::zeros(d), n: 0 },
        };
        GroupElement { spec: *self, data }
    }

    pub fn is_unimodular(&self) -> bool {
        matches!(self, GroupSpec::SO3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupData {
    Rotation(Matrix3<f64>),
    /// x ↦ g1·x + g2
    Affine { g1: DMatrix<f64>, g2: DVector<f64> },
    /// z ↦ e^n z + y
    DilTrans { y: DVector<f64>, n: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ElementRepr", try_from = "ElementRepr")]
pub struct GroupElement {
    pub spec: GroupSpec,
    pub data: GroupData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieAlgebraVector {
    pub spec: GroupSpec,
    pub components: Vec<f64>,
}

/// JSON shape of a group element: matrix rows or (y, n) pairs.
#[derive(Serialize, Deserialize)]
#[serde(tag = "group")]
enum ElementRepr {
    SO3 { rows: Vec<Vec<f64>> },
    Affine { g1: Vec<Vec<f64>>, g2: Vec<f64> },
    DilTrans { y: Vec<f64>, n: i64 },
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl From<GroupElement> for ElementRepr {
    fn from(g: GroupElement) -> Self {
        match g.data {
            GroupData::Rotation(r) => ElementRepr::SO3 { rows: (0..3).map(|i| r.row(i).iter().copied().collect()).collect() },
            GroupData::Affine { g1, g2 } => ElementRepr::Affine { g1: rows_of(&g1), g2: g2.iter().copied().collect() },
            GroupData::DilTrans { y, n } => ElementRepr::DilTrans { y: y.iter().copied().collect(), n },
        }
    }
}

impl TryFrom<ElementRepr> for GroupElement {
    type Error = Error;
    fn try_from(r: ElementRepr) -> Result<Self> {
        match r {
            ElementRepr::SO3 { rows } => {
                if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
                    return arg("SO3 element needs 3 rows of 3 entries");
                }
                let m = Matrix3::from_fn(|i, j| rows[i][j]);
                GroupElement::rotation(m)
            }
            ElementRepr::Affine { g1, g2 } => {
                let d = g2.len();
                if g1.len() != d || g1.iter().any(|r| r.len() != d) {
                    return arg("affine element needs a d×d matrix g1 and a d-vector g2");
                }
                GroupElement::affine(DMatrix::from_fn(d, d, |i, j| g1[i][j]), DVector::from_vec(g2))
            }
            ElementRepr::DilTrans { y, n } => Ok(GroupElement::dil_trans(DVector::from_vec(y), n)),
        }
    }
}

fn hat(w: &[f64]) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Rodrigues' formula.
pub fn rodrigues(w: &[f64]) -> Matrix3<f64> {
    let th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let th = th2.sqrt();
    let k = hat(w);
    let (a, b) = if th < 1e-5 {
        (1.0 - th2 / 6.0 + th2 * th2 / 120.0, 0.5 - th2 / 24.0 + th2 * th2 / 720.0)
    } else {
        (th.sin() / th, (1.0 - th.cos()) / th2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation vector of R (principal branch, angle in [0, π]).
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    // vee of the antisymmetric part is sin θ · k
    let s = vee(r);
    let c = (r.trace() - 1.0) / 2.0;
    let th = s.norm().atan2(c);
    if th < 1e-5 {
        return s * (1.0 + th * th / 6.0);
    }
    if th > 3.0 {
        // near π: axis from the symmetric part cos θ I + (1 - cos θ) k kᵀ
        let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
        let mut best = 0;
        for i in 1..3 {
            if b[(i, i)] > b[(best, best)] {
                best = i;
            }
        }
        let mut k = b.column(best).into_owned();
        k /= k.norm();
        if s.dot(&k) < 0.0 {
            k = -k;
        }
        return k * th;
    }
    s * (th / th.sin())
}

fn augmented(g1: &DMatrix<f64>, g2: &DVector<f64>, corner: f64) -> DMatrix<f64> {
    let d = g2.len();
    let mut m = DMatrix::zeros(d + 1, d + 1);
    m.view_mut((0, 0), (d, d)).copy_from(g1);
    m.view_mut((0, d), (d, 1)).copy_from(g2);
    m[(d, d)] = corner;
    m
}

fn split_augmented(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let d = m.nrows() - 1;
    (m.view((0, 0), (d, d)).into_owned(), m.view((0, d), (d, 1)).column(0).into_owned())
}

/// Principal matrix logarithm by inverse scaling and squaring
/// (Denman–Beavers square roots, then a Gregory series).
fn matrix_log(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut y = a.clone();
    let mut k = 0;
    while (&y - &id).norm() > 0.25 {
        let mut z = id.clone();
        for _ in 0..100 {
            let yi = y.clone().try_inverse().ok_or_else(|| Error::Chart("matrix logarithm: singular iterate".into()))?;
            let zi = z.clone().try_inverse().ok_or_else(|| Error::Chart("matrix logarithm: singular iterate".into()))?;
            let ny = (&y + zi) * 0.5;
            let nz = (&z + yi) * 0.5;
            let done = (&ny - &y).norm() <= 1e-15 * ny.norm();
            y = ny;
            z = nz;
            if done {
                break;
            }
        }
        k += 1;
        if k > 60 || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Chart("matrix logarithm did not converge (negative real eigenvalue?)".into()));
        }
    }
    // log(I+X) = 2 atanh-series in W = X (2I + X)^{-1}
    let x = &y - &id;
    let w = &x * (&id * 2.0 + &x).try_inverse().ok_or_else(|| Error::Chart("matrix logarithm: singular".into()))?;
    let w2 = &w * &w;
    let mut term = w.clone();
    let mut sum = w.clone();
    for j in 1..60 {
        term = &term * &w2;
        let add = &term / (2 * j + 1) as f64;
        sum += &add;
        if add.norm() < 1e-18 {
            break;
        }
    }
    Ok(sum * 2.0 * 2f64.powi(k))
}

impl GroupElement {
    pub fn rotation(r: Matrix3<f64>) -> Result<Self> {
        let e = (r.transpose() * r - Matrix3::identity()).amax();
        if e > 1e-10 || (r.determinant() - 1.0).abs() > 1e-10 {
            return arg("matrix is not a rotation");
        }
        Ok(GroupElement { spec: GroupSpec::SO3, data: GroupData::Rotation(r) })
    }

    pub fn affine(g1: DMatrix<f64>, g2: DVector<f64>) -> Result<Self> {
        let d = g2.len();
        if g1.nrows() != d || g1.ncols() != d {
            return arg("affine element dimensions do not match");
        }
        if g1.determinant() == 0.0 {
            return arg("affine element needs an invertible linear part");
        }
        Ok(GroupElement { spec: GroupSpec::Affine(d), data: GroupData::Affine { g1, g2 } })
    }

    pub fn dil_trans(y: DVector<f64>, n: i64) -> Self {
        GroupElement { spec: GroupSpec::DilTrans(y.len()), data: GroupData::DilTrans { y, n } }
    }

    /// (d+1)×(d+1) (or 3×3) matrix representation.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.data {
            GroupData::Rotation(r) => DMatrix::from_fn(3, 3, |i, j| r[(i, j)]),
            GroupData::Affine { g1, g2 } => augmented(g1, g2, 1.0),
            GroupData::DilTrans { y, n } => {
                let d = y.len();
                augmented(&(DMatrix::identity(d, d) * (*n as f64).exp()), y, 1.0)
            }
        }
    }

    /// Condition number of the linear part (1 for rotations).
    pub fn condition_number(&self) -> f64 {
        match &self.data {
            GroupData::Rotation(_) => 1.0,
            GroupData::Affine { g1, .. } => {
                let s = g1.clone().singular_values();
                s.max() / s.min()
            }
            GroupData::DilTrans { .. } => 1.0,
        }
    }

    /// Deviation from the group's defining constraints.
    pub fn invariant_error(&self) -> f64 {
        match &self.data {
            GroupData::Rotation(r) => (r.transpose() * r - Matrix3::identity()).amax().max((r.determinant() - 1.0).abs()),
            _ => 0.0,
        }
    }

    /// Re-orthonormalises rotations (polar projection); returns the size
    /// of the correction.
    pub fn reproject(&mut self) -> f64 {
        if let GroupData::Rotation(r) = &mut self.data {
            let svd = r.svd(true, true);
            let p = svd.u.unwrap() * svd.v_t.unwrap();
            let c = (p - *r).amax();
            *r = p;
            c
        } else {
            0.0
        }
    }

    /// Action on a point of the underlying space.
    pub fn act(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.data {
            GroupData::Rotation(r) => {
                let v = r * Vector3::new(x[0], x[1], x[2]);
                DVector::from_column_slice(v.as_slice())
            }
            GroupData::Affine { g1, g2 } => g1 * x + g2,
            GroupData::DilTrans { y, n } => x * (*n as f64).exp() + y,
        }
    }
}

fn same(g: &GroupElement, h: &GroupElement) -> Result<()> {
    if g.spec != h.spec {
        return arg(format!("group mismatch: {:?} vs {:?}", g.spec, h.spec));
    }
    Ok(())
}

/// g·h (apply h first, then g).
pub fn compose(g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
    same(g, h)?;
    let data = match (&g.data, &h.data) {
        (GroupData::Rotation(a), GroupData::Rotation(b)) => GroupData::Rotation(a * b),
        (GroupData::Affine { g1: a1, g2: a2 }, GroupData::Affine { g1: b1, g2: b2 }) => {
            GroupData::Affine { g1: a1 * b1, g2: a1 * b2 + a2 }
        }
        (GroupData::DilTrans { y: y2, n: n2 }, GroupData::DilTrans { y: y1, n: n1 }) => {
            GroupData::DilTrans { y: y1 * (*n2 as f64).exp() + y2, n: n1 + n2 }
        }
        _ => return arg("inconsistent group payloads"),
    };
    Ok(GroupElement { spec: g.spec, data })
}

pub fn inverse(g: &GroupElement) -> GroupElement {
    let data = match &g.data {
        GroupData::Rotation(r) => GroupData::Rotation(r.transpose()),
        GroupData::Affine { g1, g2 } => {
            let inv = g1.clone().try_inverse().expect("invertible linear part");
            let t = -(&inv * g2);
            GroupData::Affine { g1: inv, g2: t }
        }
        GroupData::DilTrans { y, n } => GroupData::DilTrans { y: -y * (-(*n) as f64).exp(), n: -n },
    };
    GroupElement { spec: g.spec, data }
}

fn check_algebra(u: &LieAlgebraVector) -> Result<()> {
    if u.components.len() != u.spec.algebra_dim() {
        return arg(format!("{:?} algebra vector needs {} components, got {}", u.spec, u.spec.algebra_dim(), u.components.len()));
    }
    Ok(())
}

/// Affine algebra coordinates: u1 row-major (d² entries), then u2.
fn affine_parts(d: usize, c: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    (DMatrix::from_row_slice(d, d, &c[..d * d]), DVector::from_column_slice(&c[d * d..]))
}

pub fn group_exp(u: &LieAlgebraVector) -> Result<GroupElement> {
    check_algebra(u)?;
    let c = &u.components;
    let data = match u.spec {
        GroupSpec::SO3 => GroupData::Rotation(rodrigues(c)),
        GroupSpec::Affine(d) => {
            let (u1, u2) = affine_parts(d, c);
            let e = augmented(&u1, &u2, 0.0).exp();
            let (g1, g2) = split_augmented(&e);
            GroupData::Affine { g1, g2 }
        }
        GroupSpec::DilTrans(_) => GroupData::DilTrans { y: DVector::from_column_slice(c), n: 0 },
    };
    Ok(GroupElement { spec: u.spec, data })
}

pub fn group_log(g: &GroupElement) -> Result<LieAlgebraVector> {
    let components = match &g.data {
        GroupData::Rotation(r) => so3_log(r).iter().copied().collect(),
        GroupData::Affine { g1, g2 } => {
            let l = matrix_log(&augmented(g1, g2, 1.0))?;
            let (u1, u2) = split_augmented(&l);
            let d = g2.len();
            let mut v: Vec<f64> = Vec::with_capacity(d * d + d);
            for i in 0..d {
                v.extend(u1.row(i).iter());
            }
            v.extend(u2.iter());
            v
        }
        GroupData::DilTrans { y, n } => {
            if *n != 0 {
                return Err(Error::Chart("dilation by e^n, n ≠ 0, is not in the identity component".into()));
            }
            y.iter().copied().collect()
        }
    };
    Ok(LieAlgebraVector { spec: g.spec, components })
}

/// Matrix of Ad_g in algebra coordinates.
pub fn adjoint(g: &GroupElement) -> DMatrix<f64> {
    match &g.data {
        GroupData::Rotation(r) => DMatrix::from_fn(3, 3, |i, j| r[(i, j)]),
        GroupData::Affine { g1, g2 } => {
            // Ad_g(u1, u2) = (g1 u1 g1⁻¹, g1 u2 - g1 u1 g1⁻¹ g2)
            let d = g2.len();
            let inv = g1.clone().try_inverse().expect("invertible linear part");
            let n = d * d + d;
            let mut a = DMatrix::zeros(n, n);
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                let (u1, u2) = affine_parts(d, &e);
                let c = g1 * &u1 * &inv;
                let t = g1 * &u2 - &c * g2;
                for i in 0..d {
                    for j in 0..d {
                        a[(i * d + j, k)] = c[(i, j)];
                    }
                    a[(d * d + i, k)] = t[i];
                }
            }
            a
        }
        GroupData::DilTrans { y, n } => DMatrix::identity(y.len(), y.len()) * (*n as f64).exp(),
    }
}

/// χ_G(g) = |det Ad_g|, in closed form.
pub fn modulus(g: &GroupElement) -> f64 {
    match &g.data {
        GroupData::Rotation(_) => 1.0,
        GroupData::Affine { g1, .. } => g1.determinant().abs(),
        GroupData::DilTrans { y, n } => (*n as f64 * y.len() as f64).exp(),
    }
}

/// Operator 2-norm |Ad_g|.
pub fn adjoint_norm(g: &GroupElement) -> f64 {
    match &g.data {
        GroupData::Rotation(_) => 1.0,
        GroupData::DilTrans { n, .. } => (*n as f64).exp(),
        GroupData::Affine { .. } => adjoint(g).singular_values().max(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Haar density with respect to the product measure of the parametrisation:
/// exponential coordinates for SO(3) (normalised to a probability), entries
/// of (g1, g2) for the affine group, dy ⊗ counting measure for ℝ^d ⋊ ℤ.
pub fn haar_density(spec: GroupSpec, side: Side) -> impl Fn(&GroupElement) -> f64 {
    move |g: &GroupElement| {
        debug_assert_eq!(g.spec, spec);
        match (&g.data, side) {
            (GroupData::Rotation(r), _) => {
                let th = so3_log(r).norm();
                let k = if th < 1e-6 { 1.0 - th * th / 12.0 } else { 2.0 * (1.0 - th.cos()) / (th * th) };
                k / (8.0 * std::f64::consts::PI.powi(2))
            }
            (GroupData::Affine { g1, .. }, s) => {
                let d = g1.nrows() as i32;
                let det = g1.determinant().abs();
                match s {
                    Side::Left => det.powi(-(d + 1)),
                    Side::Right => det.powi(-d),
                }
            }
            (GroupData::DilTrans { y, n }, s) => match s {
                Side::Left => (-(*n as f64) * y.len() as f64).exp(),
                Side::Right => 1.0,
            },
        }
    }
}

/// Moment condition for big jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// None when the series diverges.
    pub value: Option<f64>,
    pub finite: bool,
    pub side: Side,
    pub j: u32,
}

/// Whether g lies in the fixed neutral neighbourhood
/// V = {exp(u) : |u| ≤ 1}.
pub fn in_unit_neighborhood(g: &GroupElement) -> bool {
    match group_log(g) {
        Ok(u) => u.components.iter().map(|x| x * x).sum::<f64>() <= 1.0,
        Err(_) => false,
    }
}

/// Σ rate·χ(g)|Ad_g|^j (left) or Σ rate·χ(g)^{-1}|Ad_{g^{-1}}|^j (right)
/// over a finite list of big-jump atoms.
pub fn big_jump_moment(spec: GroupSpec, atoms: &[(GroupElement, f64)], j: u32, side: Side) -> Result<MomentReport> {
    let mut s = 0.0;
    for (g, rate) in atoms {
        if g.spec != spec {
            return arg("atom from a different group");
        }
        if *rate < 0.0 {
            return arg("negative jump rate");
        }
        if in_unit_neighborhood(g) {
            return arg("big-jump atoms must lie outside the unit neighbourhood of the identity");
        }
        let term = match side {
            Side::Left => modulus(g) * adjoint_norm(g).powi(j as i32),
            Side::Right => {
                let gi = inverse(g);
                adjoint_norm(&gi).powi(j as i32) / modulus(g)
            }
        };
        s += rate * term;
    }
    Ok(MomentReport { value: if s.is_finite() { Some(s) } else { None }, finite: s.is_finite(), side, j })
}

/// Moment series for the two-sided geometric walk on ℝ^d ⋊ ℤ with
/// p_n = e^{-βn}, p_{-n} = e^{-σn}, n ≥ 1 (pure dilation jumps), in closed
/// form. Left: Σ e^{n(d+j-β)} + Σ e^{-n(σ+d+j)}; right: the same with
/// (β, σ) exchanged.
pub fn geometric_dil_trans_moment(d: usize, beta: f64, sigma: f64, j: u32, side: Side) -> MomentReport {
    let k = d as f64 + j as f64;
    let (grow, shrink) = match side {
        Side::Left => (beta, sigma),
        Side::Right => (sigma, beta),
    };
    let geo = |r: f64| r / (1.0 - r);
    let value = if grow > k { Some(geo((k - grow).exp()) + geo((-(shrink + k)).exp())) } else { None };
    MomentReport { value, finite: value.is_some(), side, j }
}

/// π(g) = g(o) with o the origin of ℝ^d.
pub fn semidirect_project(g: &GroupElement) -> Result<DVector<f64>> {
    match &g.data {
        GroupData::Affine { g2, .. } => Ok(g2.clone()),
        GroupData::DilTrans { y, .. } => Ok(y.clone()),
        GroupData::Rotation(_) => arg("SO3 is not a semidirect product over ℝ^d here"),
    }
}

/// The translation section S_x.
pub fn section_lift(spec: GroupSpec, x: &DVector<f64>) -> Result<GroupElement> {
    match spec {
        GroupSpec::Affine(d) if x.len() == d => Ok(GroupElement {
            spec,
            data: GroupData::Affine { g1: DMatrix::identity(d, d), g2: x.clone() },
        }),
        GroupSpec::DilTrans(d) if x.len() == d => Ok(GroupElement::dil_trans(x.clone(), 0)),
        _ => arg(format!("cannot lift a point of dimension {} into {spec:?}", x.len())),
    }
}

/// Isotropy part h = S_{π(g)}⁻¹ g.
pub fn isotropy_part(g: &GroupElement) -> Result<GroupElement> {
    let s = section_lift(g.spec, &semidirect_project(g)?)?;
    compose(&inverse(&s), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{PathSeed, Substream};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_element<R: Rng>(spec: GroupSpec, rng: &mut R) -> GroupElement {
        let mut u = |s: f64| s * (rng.random::<f64>() - 0.5);
        match spec {
            GroupSpec::SO3 => group_exp(&LieAlgebraVector { spec, components: (0..3).map(|_| u(5.0)).collect() }).unwrap(),
            GroupSpec::Affine(d) => {
                let g1 = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } + u(1.0));
                GroupElement::affine(g1, DVector::from_fn(d, |_, _| u(4.0))).unwrap()
            }
            GroupSpec::DilTrans(d) => {
                let n = (u(8.0)).round() as i64;
                GroupElement::dil_trans(DVector::from_fn(d, |_, _| u(4.0)), n)
            }
        }
    }

    const GROUPS: [GroupSpec; 5] =
        [GroupSpec::SO3, GroupSpec::Affine(1), GroupSpec::Affine(2), GroupSpec::DilTrans(1), GroupSpec::DilTrans(3)];

    fn mat_close(a: &GroupElement, b: &GroupElement, tol: f64) -> bool {
        (a.matrix() - b.matrix()).amax() <= tol * (1.0 + a.matrix().amax())
    }

    #[test]
    fn dil_trans_conjugation_example() {
        let y = DVector::from_vec(vec![0.3, -1.2]);
        let a = GroupElement::dil_trans(DVector::zeros(2), 1);
        let b = GroupElement::dil_trans(y.clone(), 0);
        let c = GroupElement::dil_trans(DVector::zeros(2), -1);
        let r = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        match r.data {
            GroupData::DilTrans { y: ry, n } => {
                assert_eq!(n, 0);
                assert!((ry - y * 1f64.exp()).amax() < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rodrigues_against_series() {
        let u = LieAlgebraVector { spec: GroupSpec::SO3, components: vec![0.0, 0.0, PI / 2.0] };
        let g = group_exp(&u).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((g.act(&e1) - DVector::from_vec(vec![0.0, 1.0, 0.0])).amax() < 1e-12);
        // Taylor series of the matrix exponential
        let mut rng = PathSeed::new(31, 0).stream(Substream::Aux);
        for _ in 0..50 {
            let w: Vec<f64> = (0..3).map(|_| 4.0 * (rng.random::<f64>() - 0.5)).collect();
            let k = hat(&w);
            let mut term = Matrix3::identity();
            let mut sum = Matrix3::identity();
            for n in 1..60 {
                term = term * k / n as f64;
                sum += term;
            }
            assert!((rodrigues(&w) - sum).amax() < 1e-12);
        }
    }

    #[test]
    fn affine_exp_against_series_and_log() {
        let mut rng = PathSeed::new(32, 0).stream(Substream::Aux);
        for d in 1..=3 {
            let spec = GroupSpec::Affine(d);
            for _ in 0..20 {
                let c: Vec<f64> = (0..spec.algebra_dim()).map(|_| 1.5 * (rng.random::<f64>() - 0.5)).collect();
                let u = LieAlgebraVector { spec, components: c.clone() };
                let g = group_exp(&u).unwrap();
                let (u1, u2) = affine_parts(d, &c);
                let a = augmented(&u1, &u2, 0.0);
                let mut term = DMatrix::identity(d + 1, d + 1);
                let mut sum = term.clone();
                for n in 1..60 {
                    term = term * &a / n as f64;
                    sum += &term;
                }
                assert!((g.matrix() - sum).amax() < 1e-11);
                let back = group_log(&g).unwrap();
                let err = back.components.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9, "d={d}: {err}");
            }
        }
    }

    #[test]
    fn so3_log_round_trip_including_near_pi() {
        let mut rng = PathSeed::new(33, 0).stream(Substream::Aux);
        for k in 0..500 {
            let mut w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let n = (w.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let th = if k % 5 == 0 { PI - 1e-7 } else { PI * rng.random::<f64>() };
            w.iter_mut().for_each(|x| *x *= th / n);
            let r = rodrigues(&w);
            let back = so3_log(&r);
            assert!((rodrigues(back.as_slice()) - r).amax() < 1e-9);
            if th < PI - 1e-3 {
                assert!((back - Vector3::from_column_slice(&w)).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn modulus_and_adjoint_examples() {
        let mut rng = PathSeed::new(34, 0).stream(Substream::Aux);
        for _ in 0..20 {
            let g = random_element(GroupSpec::SO3, &mut rng);
            assert_eq!(modulus(&g), 1.0);
        }
        let g = GroupElement::dil_trans(DVector::from_vec(vec![1.0, 2.0, 3.0]), 2);
        let u = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        assert!((adjoint(&g) * &u - &u * 2f64.exp()).amax() < 1e-12);
        assert!((modulus(&g) - 6f64.exp()).abs() < 1e-12 * 6f64.exp());
        for d in 1..=3 {
            let g = random_element(GroupSpec::Affine(d), &mut rng);
            if let GroupData::Affine { g1, .. } = &g.data {
                assert!((modulus(&g) - g1.determinant().abs()).abs() < 1e-12);
            }
            assert!((adjoint(&g).determinant().abs() - modulus(&g)).abs() < 1e-10 * modulus(&g));
        }
    }

    #[test]
    fn adjoint_is_derivative_of_conjugation() {
        // Ad_g u = d/dε g exp(εu) g⁻¹ at ε = 0, by central differences
        let mut rng = PathSeed::new(35, 0).stream(Substream::Aux);
        for spec in [GroupSpec::SO3, GroupSpec::Affine(2)] {
            let g = random_element(spec, &mut rng);
            let gi = inverse(&g);
            let ad = adjoint(&g);
            for k in 0..spec.algebra_dim() {
                let mut e = vec![0.0; spec.algebra_dim()];
                let h = 1e-5;
                e[k] = h;
                let plus = group_log(&compose(&compose(&g, &group_exp(&LieAlgebraVector { spec, components: e.clone() }).unwrap()).unwrap(), &gi).unwrap()).unwrap();
                e[k] = -h;
                let minus = group_log(&compose(&compose(&g, &group_exp(&LieAlgebraVector { spec, components: e }).unwrap()).unwrap(), &gi).unwrap()).unwrap();
                for i in 0..spec.algebra_dim() {
                    let fd = (plus.components[i] - minus.components[i]) / (2.0 * h);
                    assert!((fd - ad[(i, k)]).abs() < 1e-6 * (1.0 + ad[(i, k)].abs()), "{spec:?} ({i},{k}): {fd} vs {}", ad[(i, k)]);
                }
            }
        }
    }

    #[test]
    fn haar_examples() {
        let mut rng = PathSeed::new(36, 0).stream(Substream::Aux);
        let l = haar_density(GroupSpec::SO3, Side::Left);
        let r = haar_density(GroupSpec::SO3, Side::Right);
        for _ in 0..10 {
            let g = random_element(GroupSpec::SO3, &mut rng);
            assert_eq!(l(&g), r(&g));
        }
        let spec = GroupSpec::DilTrans(2);
        let l = haar_density(spec, Side::Left);
        let r = haar_density(spec, Side::Right);
        for _ in 0..10 {
            let g = random_element(spec, &mut rng);
            assert!((r(&g) / l(&g) - modulus(&g)).abs() < 1e-12 * modulus(&g));
        }
        let spec = GroupSpec::Affine(2);
        let l = haar_density(spec, Side::Left);
        let r = haar_density(spec, Side::Right);
        for _ in 0..10 {
            let g = random_element(spec, &mut rng);
            assert!((r(&g) / l(&g) - modulus(&g)).abs() < 1e-10 * modulus(&g));
        }
    }

    /// |det| of the Jacobian of g ↦ g₀g in the parametrisation, by central
    /// differences.
    fn left_translation_jacobian(g0: &GroupElement, g: &GroupElement) -> f64 {
        let params = |x: &GroupElement| -> Vec<f64> {
            match &x.data {
                GroupData::Rotation(r) => so3_log(r).iter().copied().collect(),
                GroupData::Affine { g1, g2 } => {
                    let mut v: Vec<f64> = Vec::new();
                    for i in 0..g1.nrows() {
                        v.extend(g1.row(i).iter());
                    }
                    v.extend(g2.iter());
                    v
                }
                GroupData::DilTrans { y, .. } => y.iter().copied().collect(),
            }
        };
        let rebuild = |x: &GroupElement, p: &[f64]| -> GroupElement {
            match &x.data {
                GroupData::Rotation(_) => GroupElement { spec: x.spec, data: GroupData::Rotation(rodrigues(p)) },
                GroupData::Affine { g2, .. } => {
                    let d = g2.len();
                    GroupElement::affine(DMatrix::from_row_slice(d, d, &p[..d * d]), DVector::from_column_slice(&p[d * d..])).unwrap()
                }
                GroupData::DilTrans { n, .. } => GroupElement::dil_trans(DVector::from_column_slice(p), *n),
            }
        };
        let p0 = params(g);
        let k = p0.len();
        let mut jac = DMatrix::zeros(k, k);
        let h = 1e-6;
        for c in 0..k {
            let mut pp = p0.clone();
            pp[c] += h;
            let mut pm = p0.clone();
            pm[c] -= h;
            let fp = params(&compose(g0, &rebuild(g, &pp)).unwrap());
            let fm = params(&compose(g0, &rebuild(g, &pm)).unwrap());
            for r in 0..k {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        jac.determinant().abs()
    }

    #[test]
    fn left_haar_is_left_invariant_pointwise() {
        // h(g₀g)·|J L_{g₀}(g)| = h(g)
        let mut rng = PathSeed::new(37, 0).stream(Substream::Aux);
        for spec in [GroupSpec::SO3, GroupSpec::Affine(1), GroupSpec::Affine(2), GroupSpec::DilTrans(2)] {
            let h = haar_density(spec, Side::Left);
            for _ in 0..10 {
                let g0 = random_element(spec, &mut rng);
                let mut g = random_element(spec, &mut rng);
                if spec == GroupSpec::SO3 {
                    // stay away from the cut locus of the exponential chart
                    g = group_exp(&LieAlgebraVector { spec, components: vec![0.3, -0.2, 0.4] }).unwrap();
                    let gg = compose(&g0, &g).unwrap();
                    if so3_log(match &gg.data {
                        GroupData::Rotation(r) => r,
                        _ => unreachable!(),
                    })
                    .norm()
                        > 3.0
                    {
                        continue;
                    }
                }
                let lhs = h(&compose(&g0, &g).unwrap()) * left_translation_jacobian(&g0, &g);
                assert!((lhs - h(&g)).abs() < 1e-5 * h(&g), "{spec:?}: {lhs} vs {}", h(&g));
            }
        }
    }

    #[test]
    fn left_haar_mc_invariance_dil_trans() {
        // ∫ f(g₀g) h_←(dg) = ∫ f(g) h_←(dg), both sides by Monte Carlo over
        // y uniform on [-L, L], n uniform on {-K..K}
        let spec = GroupSpec::DilTrans(1);
        let h = haar_density(spec, Side::Left);
        let f = |g: &GroupElement| match &g.data {
            GroupData::DilTrans { y, n } => (-(y[0] - 0.5).powi(2)).exp() * if n.abs() <= 1 { 1.0 + 0.3 * *n as f64 } else { 0.0 },
            _ => unreachable!(),
        };
        let g0 = GroupElement::dil_trans(DVector::from_vec(vec![0.7]), 1);
        let (l, k) = (12.0, 3i64);
        let vol = 2.0 * l * (2 * k + 1) as f64;
        let mut rng = PathSeed::new(38, 0).stream(Substream::Aux);
        let mut a = crate::stats::Running::default();
        let mut b = crate::stats::Running::default();
        for _ in 0..200_000 {
            let y = l * (2.0 * rng.random::<f64>() - 1.0);
            let n = rng.random_range(-k..=k);
            let g = GroupElement::dil_trans(DVector::from_vec(vec![y]), n);
            a.push(vol * f(&compose(&g0, &g).unwrap()) * h(&g));
            b.push(vol * f(&g) * h(&g));
        }
        let (a, b) = (a.summary(), b.summary());
        assert!((a.mean - b.mean).abs() < 3.0 * (a.se.powi(2) + b.se.powi(2)).sqrt(), "{a:?} {b:?}");
    }

    #[test]
    fn big_jump_moment_examples() {
        let d = 3;
        let l = geometric_dil_trans_moment(d, 0.5, 0.5, 0, Side::Left);
        assert!(!l.finite);
        assert!(geometric_dil_trans_moment(d, 3.5, 0.5, 0, Side::Left).finite);
        assert!(!geometric_dil_trans_moment(d, 3.5, 0.5, 1, Side::Left).finite);
        assert!(geometric_dil_trans_moment(d, 0.5, 3.5, 0, Side::Right).finite);
        assert!(!geometric_dil_trans_moment(d, 3.5, 0.5, 0, Side::Right).finite);
        // closed form against truncated direct summation over atoms
        let (beta, sigma) = (4.0, 1.0);
        let spec = GroupSpec::DilTrans(d);
        let atoms: Vec<(GroupElement, f64)> = (1..200)
            .flat_map(|n| {
                [
                    (GroupElement::dil_trans(DVector::zeros(d), n), (-beta * n as f64).exp()),
                    (GroupElement::dil_trans(DVector::zeros(d), -n), (-sigma * n as f64).exp()),
                ]
            })
            .collect();
        let direct = big_jump_moment(spec, &atoms, 0, Side::Left).unwrap();
        let closed = geometric_dil_trans_moment(d, beta, sigma, 0, Side::Left);
        assert!((direct.value.unwrap() - closed.value.unwrap()).abs() < 1e-12);
        // compact jump support is always finite
        let so3: Vec<(GroupElement, f64)> = (0..5)
            .map(|k| (group_exp(&LieAlgebraVector { spec: GroupSpec::SO3, components: vec![1.5 + 0.3 * k as f64, 0.0, 0.0] }).unwrap(), 1.0))
            .collect();
        let r = big_jump_moment(GroupSpec::SO3, &so3, 2, Side::Left).unwrap();
        assert!(r.finite && (r.value.unwrap() - 5.0).abs() < 1e-12);
        // atoms inside V are rejected
        let small = vec![(GroupElement::dil_trans(DVector::from_vec(vec![0.1, 0.0, 0.0]), 0), 1.0)];
        assert!(big_jump_moment(spec, &small, 0, Side::Left).is_err());
    }

    #[test]
    fn projection_and_lift() {
        let spec = GroupSpec::DilTrans(2);
        assert_eq!(semidirect_project(&spec.identity()).unwrap(), DVector::zeros(2));
        let g = GroupElement::dil_trans(DVector::from_vec(vec![1.0, -2.0]), 3);
        assert_eq!(semidirect_project(&g).unwrap(), DVector::from_vec(vec![1.0, -2.0]));
        let x = DVector::from_vec(vec![0.4, 0.5]);
        assert_eq!(semidirect_project(&section_lift(spec, &x).unwrap()).unwrap(), x);
    }

    #[test]
    fn serialisation_round_trip() {
        let mut rng = PathSeed::new(39, 0).stream(Substream::Aux);
        for spec in GROUPS {
            let g = random_element(spec, &mut rng);
            let j = serde_json::to_string(&g).unwrap();
            let back: GroupElement = serde_json::from_str(&j).unwrap();
            assert_eq!(back, g);
        }
        let j = r#"{"group":"DilTrans","y":[1.0,2.0],"n":-1}"#;
        let g: GroupElement = serde_json::from_str(j).unwrap();
        assert_eq!(g.spec, GroupSpec::DilTrans(2));
        assert!(serde_json::from_str::<GroupElement>(r#"{"group":"SO3","rows":[[2,0,0],[0,1,0],[0,0,1]]}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn group_laws(seed in 0u64..1_000_000, k in 0usize..5) {
            let spec = GROUPS[k];
            let mut rng = PathSeed::new(seed, 0).stream(Substream::Aux);
            let (a, b, c) = (random_element(spec, &mut rng), random_element(spec, &mut rng), random_element(spec, &mut rng));
            let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
            let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
            prop_assert!(mat_close(&left, &right, 1e-12));
            let e = spec.identity();
            prop_assert!(mat_close(&compose(&a, &inverse(&a)).unwrap(), &e, 1e-12));
            prop_assert!(mat_close(&compose(&inverse(&a), &a).unwrap(), &e, 1e-12));
            prop_assert!(mat_close(&compose(&a, &e).unwrap(), &a, 1e-15));
        }

        #[test]
        fn adjoint_and_modulus_are_homomorphisms(seed in 0u64..1_000_000, k in 0usize..5) {
            let spec = GROUPS[k];
            let mut rng = PathSeed::new(seed, 1).stream(Substream::Aux);
            let (g, h) = (random_element(spec, &mut rng), random_element(spec, &mut rng));
            let gh = compose(&g, &h).unwrap();
            let lhs = adjoint(&gh);
            let rhs = adjoint(&g) * adjoint(&h);
            prop_assert!((&lhs - &rhs).amax() <= 1e-10 * (1.0 + lhs.amax()));
            let (a, b, c) = (modulus(&g), modulus(&h), modulus(&gh));
            prop_assert!((c - a * b).abs() <= 1e-10 * a * b);
            prop_assert!((adjoint(&g).determinant().abs() - a).abs() <= 1e-10 * a.max(1.0));
        }

        #[test]
        fn modulus_of_inverse_section(seed in 0u64..1_000_000, d in 1usize..4) {
            let mut rng = PathSeed::new(seed, 2).stream(Substream::Aux);
            let spec = GroupSpec::DilTrans(d);
            let g = random_element(spec, &mut rng);
            let s = section_lift(spec, &semidirect_project(&g).unwrap()).unwrap();
            prop_assert!((modulus(&inverse(&s)) * modulus(&s) - 1.0).abs() < 1e-14);
            prop_assert!((modulus(&inverse(&g)) * modulus(&g) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn semidirect_product_rule(seed in 0u64..1_000_000, k in 1usize..5) {
            // S(x₁)h₁S(x₂)h₂ = S(x₁ + h₁(x₂))h₁h₂
            let spec = GROUPS[k];
            let mut rng = PathSeed::new(seed, 3).stream(Substream::Aux);
            let (g, g2) = (random_element(spec, &mut rng), random_element(spec, &mut rng));
            let (x1, x2) = (semidirect_project(&g).unwrap(), semidirect_project(&g2).unwrap());
            let (h1, h2) = (isotropy_part(&g).unwrap(), isotropy_part(&g2).unwrap());
            prop_assert!(mat_close(&compose(&section_lift(spec, &x1).unwrap(), &h1).unwrap(), &g, 1e-12));
            let lhs = compose(&g, &g2).unwrap();
            let rhs = compose(&section_lift(spec, &(&x1 + h1.act(&x2))).unwrap(), &compose(&h1, &h2).unwrap()).unwrap();
            prop_assert!(mat_close(&lhs, &rhs, 1e-12));
            prop_assert!((semidirect_project(&section_lift(spec, &x1).unwrap()).unwrap() - &x1).amax() == 0.0);
        }
    }
}
