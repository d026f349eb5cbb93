//! Rigid-body primitives: rotations, rigid transforms, rotation averaging
//! and least-squares point alignment.
//!
//! Conventions: radians, meters, row-major when flattened. A
//! [`RigidTransform`] maps a point `p` to `R·p + t`.

use std::cmp::Ordering;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Orthonormality tolerance used when validating rotations.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Singular values below this are treated as zero when checking rank.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("cannot average an empty list")]
    Empty,
    #[error("mean rotation matrix is rank deficient (singular values {0:?})")]
    DegenerateMean([f64; 3]),
    #[error("need at least 3 point pairs, got {0}")]
    TooFewPairs(usize),
    #[error("point pairs are collinear or otherwise degenerate")]
    DegeneratePairs,
    #[error("axis vectors are zero or parallel")]
    DegenerateAxes,
    #[error("matrix is not a proper rotation: {0}")]
    NotARotation(String),
    #[error("homogeneous matrix last row must be exactly (0, 0, 0, 1)")]
    BadHomogeneousRow,
    #[error("expected {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
}

/// A proper rotation (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and determinant within [`ORTHONORMAL_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NotARotation("non-finite entry".into()));
        }
        let err = (m.transpose() * m - Matrix3::identity()).amax();
        if err > ORTHONORMAL_TOL {
            return Err(GeometryError::NotARotation(format!(
                "RᵀR deviates from identity by {err:e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::NotARotation(format!("det = {det}")));
        }
        Ok(Self(m))
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self, GeometryError> {
        if v.len() != 9 {
            return Err(GeometryError::WrongLength { expected: 9, got: v.len() });
        }
        Self::from_matrix(Matrix3::from_row_slice(v))
    }

    /// Rotation about the world Z axis.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    /// Rotation by `|v|` radians about `v / |v|` (Rodrigues).
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let r = nalgebra::Rotation3::from_scaled_axis(v);
        Self(*r.matrix())
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::from_rotation_vector(axis / n * angle)
    }

    /// Rotation whose columns are the given axes: maps a local frame into the
    /// frame the axes are expressed in.
    pub fn from_axes(x: Vec3, y: Vec3, z: Vec3) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_columns(&[x, y, z]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Geodesic distance to `other`, radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).angle()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Rotation followed by translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vec3::zeros())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// Rotates a direction; translation does not apply.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -rt.apply(&self.translation) }
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// 4×4 homogeneous matrix, row-major, last row exactly `(0, 0, 0, 1)`.
    pub fn to_row_major_4x4(&self) -> [f64; 16] {
        let r = self.rotation.to_row_major();
        let t = self.translation;
        [
            r[0], r[1], r[2], t.x, r[3], r[4], r[5], t.y, r[6], r[7], r[8], t.z, 0.0, 0.0, 0.0,
            1.0,
        ]
    }

    pub fn from_row_major_4x4(v: &[f64]) -> Result<Self, GeometryError> {
        if v.len() != 16 {
            return Err(GeometryError::WrongLength { expected: 16, got: v.len() });
        }
        if v[12..16] != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::BadHomogeneousRow);
        }
        let rotation = Rotation::from_row_major(&[v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]])?;
        let translation = Vec3::new(v[3], v[7], v[11]);
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NotARotation("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Rotation error (radians) and translation error (meters) relative to `other`.
    pub fn error_to(&self, other: &RigidTransform) -> (f64, f64) {
        (self.rotation.angle_to(&other.rotation), (self.translation - other.translation).norm())
    }
}

/// Serde adapter writing a [`Vec3`] as `[x, y, z]`.
pub mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([v.x, v.y, v.z])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(x, y, z))
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Sum of vectors in input order, divided by the count.
pub fn average_translations(ts: &[Vec3]) -> Result<Vec3, GeometryError> {
    if ts.is_empty() {
        return Err(GeometryError::Empty);
    }
    let mut sum = Vec3::zeros();
    for t in ts {
        sum += t;
    }
    Ok(sum / ts.len() as f64)
}

/// Chordal L2 mean: the arithmetic mean of the rotation matrices projected
/// back onto SO(3) with a determinant sign correction.
///
/// Inputs are summed in a canonical (lexicographic) order so the result does
/// not depend on the order of `rs`, bit for bit.
pub fn average_rotations(rs: &[Rotation]) -> Result<Rotation, GeometryError> {
    if rs.is_empty() {
        return Err(GeometryError::Empty);
    }
    let mut sorted: Vec<[f64; 9]> = rs.iter().map(Rotation::to_row_major).collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    let mut sum = Matrix3::zeros();
    for r in &sorted {
        sum += Matrix3::from_row_slice(r);
    }
    let mean = sum / rs.len() as f64;
    project_to_rotation(&mean)
}

/// Nearest rotation in Frobenius norm. Fails when the matrix has rank < 3.
pub fn project_to_rotation(m: &Matrix3<f64>) -> Result<Rotation, GeometryError> {
    let svd = m.svd(true, true);
    let s = svd.singular_values;
    if s.min() < RANK_TOL {
        return Err(GeometryError::DegenerateMean([s[0], s[1], s[2]]));
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(s.imin(), s.imin())] = -1.0;
    }
    Ok(Rotation(u * d * v_t))
}

/// Sum of squared residuals `Σ‖T·src − dst‖²`.
pub fn alignment_residual(t: &RigidTransform, pairs: &[(Vec3, Vec3)]) -> f64 {
    pairs.iter().map(|(s, d)| (t.apply(s) - d).norm_squared()).sum()
}

/// Rigid transform minimizing `Σ‖T·srcₖ − dstₖ‖²` (Kabsch).
pub fn align_least_squares(pairs: &[(Vec3, Vec3)]) -> Result<RigidTransform, GeometryError> {
    if pairs.len() < 3 {
        return Err(GeometryError::TooFewPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut cs = Vec3::zeros();
    let mut cd = Vec3::zeros();
    for (s, d) in pairs {
        cs += s;
        cd += d;
    }
    cs /= n;
    cd /= n;

    let mut h = Matrix3::zeros();
    for (s, d) in pairs {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    // rank(H) < 2 leaves a rotational degree of freedom unconstrained
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(GeometryError::DegeneratePairs);
    }
    let u = svd.u.expect("svd computed with u");
    let v = svd.v_t.expect("svd computed with v_t").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let i = svd.singular_values.imin();
        d[(i, i)] = -1.0;
    }
    let rotation = Rotation(v * d * u.transpose());
    let translation = cd - rotation.apply(&cs);
    Ok(RigidTransform { rotation, translation })
}

/// Gram–Schmidt in the order x, y; `z` is rebuilt as `x × y`.
pub fn orthonormalize(x: Vec3, y: Vec3, _z: Vec3) -> Result<(Vec3, Vec3, Vec3), GeometryError> {
    let xn = x.norm();
    if !(xn > 1e-12) || !xn.is_finite() {
        return Err(GeometryError::DegenerateAxes);
    }
    let xu = x / xn;
    let yp = y - xu * xu.dot(&y);
    let yn = yp.norm();
    if !(yn > 1e-9 * y.norm().max(1e-12)) {
        return Err(GeometryError::DegenerateAxes);
    }
    let yu = yp / yn;
    Ok((xu, yu, xu.cross(&yu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn assert_transform_eq(a: &RigidTransform, b: &RigidTransform, tol: f64) {
        assert_abs_diff_eq!(a.rotation.matrix(), b.rotation.matrix(), epsilon = tol);
        assert_abs_diff_eq!(a.translation, b.translation, epsilon = tol);
    }

    fn sample_transform() -> RigidTransform {
        RigidTransform::new(
            Rotation::from_axis_angle(Vec3::new(0.3, -1.0, 0.4), 0.7),
            Vec3::new(0.4, -1.2, 2.5),
        )
    }

    #[test]
    fn compose_identity() {
        let i = RigidTransform::identity();
        assert_eq!(compose(&i, &i), i);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let t = sample_transform();
        assert_transform_eq(&compose(&t, &invert(&t)), &RigidTransform::identity(), 1e-9);
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        // rotZ(90°)·rotZ(90°): [[0,-1,0],[1,0,0],[0,0,1]]² = [[-1,0,0],[0,-1,0],[0,0,1]]
        let q = RigidTransform::from_rotation(Rotation::about_z(PI / 2.0));
        let half = compose(&q, &q);
        let expected = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(half.rotation.matrix(), &expected, epsilon = 1e-12);
        assert_abs_diff_eq!(
            half.rotation.matrix(),
            Rotation::about_z(PI).matrix(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn invert_cases() {
        let i = RigidTransform::identity();
        assert_eq!(invert(&i), i);
        let t = RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(invert(&t).translation, Vec3::new(-1.0, -2.0, -3.0));
        let s = sample_transform();
        assert_transform_eq(&invert(&invert(&s)), &s, 1e-9);
    }

    #[test]
    fn average_rotations_cases() {
        let r = sample_transform().rotation;
        let avg = average_rotations(&[r, r, r]).unwrap();
        assert_abs_diff_eq!(avg.matrix(), r.matrix(), epsilon = 1e-12);

        let sym = average_rotations(&[Rotation::about_z(deg(10.0)), Rotation::about_z(deg(-10.0))]).unwrap();
        assert_abs_diff_eq!(sym.matrix(), &Matrix3::identity(), epsilon = 1e-9);

        // Brute-force oracle: minimize Σ‖rotZ(θ) − Rᵢ‖²_F over a fine grid of θ.
        let inputs = [Rotation::about_z(deg(10.0)), Rotation::about_z(deg(30.0))];
        let cost = |theta: f64| -> f64 {
            let c = Rotation::about_z(theta);
            inputs.iter().map(|r| (c.matrix() - r.matrix()).norm_squared()).sum()
        };
        let mut best = (f64::INFINITY, 0.0);
        let steps = 400_000;
        for k in 0..=steps {
            let theta = deg(0.0) + deg(40.0) * k as f64 / steps as f64;
            let c = cost(theta);
            if c < best.0 {
                best = (c, theta);
            }
        }
        assert_abs_diff_eq!(best.1, deg(20.0), epsilon = 1e-6);
        let avg = average_rotations(&inputs).unwrap();
        assert_abs_diff_eq!(avg.matrix(), Rotation::about_z(best.1).matrix(), epsilon = 1e-6);
    }

    #[test]
    fn antipodal_average_is_rejected() {
        let err = average_rotations(&[Rotation::identity(), Rotation::about_z(PI)]);
        assert!(matches!(err, Err(GeometryError::DegenerateMean(_))));
        assert_eq!(average_rotations(&[]), Err(GeometryError::Empty));
    }

    #[test]
    fn average_translations_cases() {
        assert_eq!(average_translations(&[Vec3::zeros()]).unwrap(), Vec3::zeros());
        assert_eq!(
            average_translations(&[Vec3::new(1.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)]).unwrap(),
            Vec3::new(2.0, 0.0, 0.0)
        );
        assert_eq!(
            average_translations(&[
                Vec3::new(1.0, 2.0, 3.0),
                Vec3::new(2.0, 3.0, 4.0),
                Vec3::new(3.0, 4.0, 5.0)
            ])
            .unwrap(),
            Vec3::new(2.0, 3.0, 4.0)
        );
    }

    fn tetra() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.5, 0.7, -0.2),
        ]
    }

    #[test]
    fn align_identity_and_exact_recovery() {
        let pts = tetra();
        let same: Vec<_> = pts.iter().map(|p| (*p, *p)).collect();
        assert_transform_eq(&align_least_squares(&same).unwrap(), &RigidTransform::identity(), 1e-12);

        let t = sample_transform();
        let moved: Vec<_> = pts.iter().map(|p| (*p, t.apply(p))).collect();
        assert_transform_eq(&align_least_squares(&moved).unwrap(), &t, 1e-9);
    }

    #[test]
    fn align_handles_coplanar_points() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let t = sample_transform();
        let pairs: Vec<_> = pts.iter().map(|p| (*p, t.apply(p))).collect();
        assert_transform_eq(&align_least_squares(&pairs).unwrap(), &t, 1e-9);
    }

    #[test]
    fn align_rejects_degenerate_input() {
        let line: Vec<_> = (0..5).map(|k| Vec3::new(k as f64, 0.0, 0.0)).map(|p| (p, p)).collect();
        assert_eq!(align_least_squares(&line), Err(GeometryError::DegeneratePairs));
        let two = vec![(Vec3::zeros(), Vec3::zeros()); 2];
        assert_eq!(align_least_squares(&two), Err(GeometryError::TooFewPairs(2)));
    }

    #[test]
    fn orthonormalize_cases() {
        let r = sample_transform().rotation;
        let (x, y, z) = orthonormalize(r.column(0), r.column(1), r.column(2)).unwrap();
        assert_abs_diff_eq!(x, r.column(0), epsilon = 1e-12);
        assert_abs_diff_eq!(y, r.column(1), epsilon = 1e-12);
        assert_abs_diff_eq!(z, r.column(2), epsilon = 1e-12);

        let (x, y, z) =
            orthonormalize(Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0), Vec3::new(0.0, 0.0, 9.0)).unwrap();
        assert_eq!((x, y, z), (Vec3::x(), Vec3::y(), Vec3::z()));

        let (x, y, z) =
            orthonormalize(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(5.0, -3.0, 1.0)).unwrap();
        assert_eq!((x, y, z), (Vec3::x(), Vec3::y(), Vec3::z()));

        assert_eq!(
            orthonormalize(Vec3::zeros(), Vec3::y(), Vec3::z()),
            Err(GeometryError::DegenerateAxes)
        );
        assert_eq!(
            orthonormalize(Vec3::x(), Vec3::new(-2.0, 0.0, 0.0), Vec3::z()),
            Err(GeometryError::DegenerateAxes)
        );
    }

    #[test]
    fn homogeneous_round_trip_and_validation() {
        let t = sample_transform();
        let m = t.to_row_major_4x4();
        assert_eq!(&m[12..], &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(RigidTransform::from_row_major_4x4(&m).unwrap(), t);
        let mut bad = m;
        bad[15] = 2.0;
        assert_eq!(RigidTransform::from_row_major_4x4(&bad), Err(GeometryError::BadHomogeneousRow));
        let mut reflect = RigidTransform::identity().to_row_major_4x4();
        reflect[0] = -1.0;
        assert!(RigidTransform::from_row_major_4x4(&reflect).is_err());
        let m4 = t.to_matrix4();
        assert_eq!(m4[(0, 3)], t.translation.x);
    }
}
