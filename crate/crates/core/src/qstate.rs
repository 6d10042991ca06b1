//! State-space algebra: density matrices, Bloch vectors, trace distance,
//! orthogonal pairs and the Jordan-Hahn pair construction.

use crate::linalg::{C64, CMat};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const TOL_HERM: f64 = 1e-10;
pub const TOL_TRACE: f64 = 1e-10;
pub const TOL_PSD: f64 = 1e-9;
pub const TOL_ORTHO: f64 = 1e-8;
pub const TOL_DISTINCT: f64 = 1e-12;

/// A d x d Hermitian, positive semidefinite, unit-trace operator.
///
/// Constructors validate eagerly; use [`DensityMatrix::project_to_nearest`]
/// to repair noisy input instead of relying on silent projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        let defect = mat.hermiticity_defect();
        if defect > TOL_HERM {
            return Err(Error::InvalidState(format!("hermiticity defect {defect:.3e}")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TOL_TRACE || tr.im.abs() > TOL_TRACE {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min_eig = mat.eigvals_hermitian()[0];
        if min_eig < -TOL_PSD {
            return Err(Error::InvalidState(format!("min eigenvalue {min_eig:.3e}")));
        }
        Ok(DensityMatrix { mat })
    }

    /// Computational-basis state |k><k|.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        DensityMatrix { mat: CMat::basis_unit(dim, k, k) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix { mat: CMat::identity(dim).scale_re(1.0 / dim as f64) }
    }

    /// Pure state from a (not necessarily normalized) amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm_sqr <= 0.0 {
            return Err(Error::InvalidState("zero amplitude vector".into()));
        }
        let dim = amplitudes.len();
        let mut mat = CMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                mat[(i, j)] = amplitudes[i] * amplitudes[j].conj() / norm_sqr;
            }
        }
        Ok(DensityMatrix { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.mat.eigvals_hermitian()[0]
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// Clip negative eigenvalues and renormalize the trace. Intended for data
    /// ingestion of states that fail validation by a small margin.
    pub fn project_to_nearest(mat: &CMat) -> Result<Self> {
        let defect = mat.hermiticity_defect();
        if defect > 1e-6 {
            return Err(Error::InvalidState(format!(
                "hermiticity defect {defect:.3e} too large to repair"
            )));
        }
        let sym = mat + &mat.adjoint();
        let e = sym.scale_re(0.5).eigh();
        let clipped = e.apply_function(|x| C64::new(x.max(0.0), 0.0));
        let tr = clipped.trace().re;
        if tr <= 0.0 {
            return Err(Error::InvalidState("projection collapsed to zero".into()));
        }
        DensityMatrix::new(clipped.scale_re(1.0 / tr))
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(&self.mat).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let mat = raw.to_cmat().map_err(serde::de::Error::custom)?;
        DensityMatrix::new(mat).map_err(serde::de::Error::custom)
    }
}

/// Wire format shared by all matrix-valued payloads:
/// `{"dim": n, "re": [[...]], "im": [[...]]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from(mat: &CMat) -> Self {
        let n = mat.dim();
        let mut re = vec![vec![0.0; n]; n];
        let mut im = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                re[i][j] = mat[(i, j)].re;
                im[i][j] = mat[(i, j)].im;
            }
        }
        MatrixJson { dim: n, re, im }
    }

    pub fn to_cmat(&self) -> Result<CMat> {
        if self.re.len() != self.dim
            || self.im.len() != self.dim
            || self.re.iter().any(|r| r.len() != self.dim)
            || self.im.iter().any(|r| r.len() != self.dim)
        {
            return Err(Error::Config("matrix rows do not match dim".into()));
        }
        Ok(CMat::from_re_im(&self.re, &self.im))
    }
}

/// Spherical-coordinate qubit state: radius in [0, 1], polar angle in
/// [0, pi], azimuth in [0, 2*pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochVector {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl BlochVector {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0 + 1e-12).contains(&r) {
            return Err(Error::InvalidBloch(format!("radius {r} outside [0,1]")));
        }
        if !(0.0..=std::f64::consts::PI + 1e-12).contains(&theta) {
            return Err(Error::InvalidBloch(format!("theta {theta} outside [0,pi]")));
        }
        Ok(BlochVector { r: r.min(1.0), theta, phi: canonical_phi(phi) }.gauge_fixed())
    }

    /// From Cartesian components (x, y, z) with |v| <= 1.
    pub fn from_cartesian(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = (x * x + y * y + z * z).sqrt();
        if r > 1.0 + 1e-12 {
            return Err(Error::InvalidBloch(format!("|v| = {r} > 1")));
        }
        if r == 0.0 {
            return Ok(BlochVector { r: 0.0, theta: 0.0, phi: 0.0 });
        }
        let theta = (z / r).clamp(-1.0, 1.0).acos();
        let phi = canonical_phi(y.atan2(x));
        Ok(BlochVector { r: r.min(1.0), theta, phi }.gauge_fixed())
    }

    pub fn cartesian(&self) -> [f64; 3] {
        [
            self.r * self.theta.sin() * self.phi.cos(),
            self.r * self.theta.sin() * self.phi.sin(),
            self.r * self.theta.cos(),
        ]
    }

    /// phi is unphysical at r = 0 and at the poles; pin it to 0 there so
    /// round trips are exact.
    fn gauge_fixed(self) -> Self {
        if self.r == 0.0 {
            return BlochVector { r: 0.0, theta: 0.0, phi: 0.0 };
        }
        if self.theta == 0.0 || self.theta == std::f64::consts::PI {
            return BlochVector { phi: 0.0, ..self };
        }
        self
    }
}

fn canonical_phi(phi: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut p = phi % tau;
    if p < 0.0 {
        p += tau;
    }
    if p >= tau {
        p = 0.0;
    }
    p
}

/// rho = (I + x sx + y sy + z sz) / 2.
pub fn bloch_to_density(b: &BlochVector) -> DensityMatrix {
    let [x, y, z] = b.cartesian();
    let mat = CMat::from_rows(&[
        vec![C64::new(0.5 * (1.0 + z), 0.0), C64::new(0.5 * x, -0.5 * y)],
        vec![C64::new(0.5 * x, 0.5 * y), C64::new(0.5 * (1.0 - z), 0.0)],
    ]);
    DensityMatrix { mat }
}

pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch(rho.dim(), 2));
    }
    let m = rho.matrix();
    let x = 2.0 * m[(0, 1)].re;
    let y = -2.0 * m[(0, 1)].im;
    let z = m[(0, 0)].re - m[(1, 1)].re;
    BlochVector::from_cartesian(x, y, z)
}

/// A nonzero Hermitian traceless operator, a "direction" in state space.
#[derive(Debug, Clone, PartialEq)]
pub struct TracelessDirection {
    mat: CMat,
}

impl TracelessDirection {
    pub fn new(mat: CMat) -> Result<Self> {
        let defect = mat.hermiticity_defect();
        if defect > TOL_HERM {
            return Err(Error::InvalidDirection(format!("hermiticity defect {defect:.3e}")));
        }
        let tr = mat.trace();
        if tr.norm() > TOL_TRACE {
            return Err(Error::InvalidDirection(format!("trace {tr} != 0")));
        }
        if mat.frobenius_norm() == 0.0 {
            return Err(Error::InvalidDirection("zero operator".into()));
        }
        Ok(TracelessDirection { mat })
    }

    /// Qubit direction n . sigma for a unit vector n; eigenvalues are +-1 so
    /// the half trace norm is exactly 1.
    pub fn qubit_from_angles(theta: f64, phi: f64) -> Self {
        let (x, y, z) = (theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        Self::qubit_from_cartesian(x, y, z)
    }

    pub fn qubit_from_cartesian(x: f64, y: f64, z: f64) -> Self {
        let mat = CMat::from_rows(&[
            vec![C64::new(z, 0.0), C64::new(x, -y)],
            vec![C64::new(x, y), C64::new(-z, 0.0)],
        ]);
        TracelessDirection { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    /// Half the trace norm, i.e. the trace distance the direction spans per
    /// unit of ray parameter.
    pub fn half_trace_norm(&self) -> f64 {
        0.5 * self.mat.eigvals_hermitian().iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Bloch difference vector for qubit directions: A = a . sigma.
    pub fn qubit_cartesian(&self) -> Result<[f64; 3]> {
        if self.dim() != 2 {
            return Err(Error::DimensionMismatch(self.dim(), 2));
        }
        Ok([self.mat[(0, 1)].re, -self.mat[(0, 1)].im, self.mat[(0, 0)].re])
    }
}

/// A pair of states with orthogonal supports, equivalently trace distance 1.
#[derive(Debug, Clone)]
pub struct OrthogonalPair {
    rho1: DensityMatrix,
    rho2: DensityMatrix,
}

impl OrthogonalPair {
    pub fn new(rho1: DensityMatrix, rho2: DensityMatrix) -> Result<Self> {
        if rho1.dim() != rho2.dim() {
            return Err(Error::DimensionMismatch(rho1.dim(), rho2.dim()));
        }
        let overlap = (rho1.matrix() * rho2.matrix()).trace().re;
        if overlap.abs() > TOL_ORTHO {
            return Err(Error::InvalidState(format!("support overlap Tr(r1 r2) = {overlap:.3e}")));
        }
        Ok(OrthogonalPair { rho1, rho2 })
    }

    pub fn rho1(&self) -> &DensityMatrix {
        &self.rho1
    }

    pub fn rho2(&self) -> &DensityMatrix {
        &self.rho2
    }
}

/// D(a, b) = half the sum of absolute eigenvalues of a - b.
pub fn trace_distance(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<f64> {
    if rho_a.dim() != rho_b.dim() {
        return Err(Error::DimensionMismatch(rho_a.dim(), rho_b.dim()));
    }
    let diff = rho_a.matrix() - rho_b.matrix();
    Ok(0.5 * diff.eigvals_hermitian().iter().map(|v| v.abs()).sum::<f64>())
}

/// Min eigenvalue at least `eps`: the state sits strictly inside the
/// state-space body with that margin.
pub fn is_interior(rho: &DensityMatrix, eps: f64) -> bool {
    rho.min_eigenvalue() >= eps
}

/// Jordan-Hahn decomposition of rho - rho0 into an orthogonal pair:
/// rho1 - rho2 = (rho - rho0) / lambda with lambda = D(rho, rho0).
///
/// The positive and negative eigenvalue parts of the traceless difference
/// have equal weight, so both normalizations divide by the trace distance.
pub fn jordan_hahn_pair(
    rho: &DensityMatrix,
    rho0: &DensityMatrix,
) -> Result<(OrthogonalPair, f64)> {
    if rho.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), rho0.dim()));
    }
    let diff = rho.matrix() - rho0.matrix();
    let e = diff.eigh();
    let lambda = 0.5 * e.values.iter().map(|v| v.abs()).sum::<f64>();
    if lambda <= TOL_DISTINCT {
        return Err(Error::CoincidentStates);
    }
    let pos = e.apply_function(|x| C64::new(x.max(0.0) / lambda, 0.0));
    let neg = e.apply_function(|x| C64::new((-x).max(0.0) / lambda, 0.0));
    let rho1 = DensityMatrix::new(pos)?;
    let rho2 = DensityMatrix::new(neg)?;
    Ok((OrthogonalPair::new(rho1, rho2)?, lambda))
}

/// Seeded random-state generators for tests and validation runs.
pub mod testkit {
    use super::*;
    use rand::Rng;

    /// Wishart-style full-rank random state: G G^dag normalized.
    pub fn random_density(dim: usize, rng: &mut impl Rng) -> DensityMatrix {
        let mut g = CMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                g[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let w = &g * &g.adjoint();
        let tr = w.trace().re;
        DensityMatrix::new(w.scale_re(1.0 / tr)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testkit::random_density;
    use super::*;
    use crate::linalg::CMat;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn trace_distance_identical_and_orthogonal() {
        let rho = DensityMatrix::basis_state(2, 0);
        assert_eq!(trace_distance(&rho, &rho).unwrap(), 0.0);
        let other = DensityMatrix::basis_state(2, 1);
        assert!((trace_distance(&rho, &other).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trace_distance_opposite_bloch_halves() {
        let a = bloch_to_density(&BlochVector::from_cartesian(0.5, 0.0, 0.0).unwrap());
        let b = bloch_to_density(&BlochVector::from_cartesian(-0.5, 0.0, 0.0).unwrap());
        // Independent oracle: D = |delta|/2 for qubits, delta = (1,0,0).
        assert!((trace_distance(&a, &b).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trace_distance_dimension_mismatch() {
        let a = DensityMatrix::maximally_mixed(2);
        let b = DensityMatrix::maximally_mixed(3);
        assert!(matches!(trace_distance(&a, &b), Err(Error::DimensionMismatch(2, 3))));
    }

    #[test]
    fn density_matrix_rejects_bad_input() {
        // Not unit trace.
        assert!(DensityMatrix::new(CMat::identity(2)).is_err());
        // Not PSD.
        let m = CMat::from_rows(&[
            vec![C64::new(1.5, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(-0.5, 0.0)],
        ]);
        assert!(DensityMatrix::new(m).is_err());
        // Not Hermitian.
        let m = CMat::from_rows(&[
            vec![C64::new(0.5, 0.0), C64::new(0.1, 0.0)],
            vec![C64::new(0.3, 0.0), C64::new(0.5, 0.0)],
        ]);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn project_to_nearest_repairs_small_negativity() {
        let m = CMat::from_rows(&[
            vec![C64::new(1.0000004, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(-4e-7, 0.0)],
        ]);
        let rho = DensityMatrix::project_to_nearest(&m).unwrap();
        assert!(rho.min_eigenvalue() >= 0.0);
    }

    #[test]
    fn jordan_hahn_pure_vs_mixed() {
        let rho = DensityMatrix::basis_state(2, 0);
        let rho0 = DensityMatrix::maximally_mixed(2);
        let (pair, lambda) = jordan_hahn_pair(&rho, &rho0).unwrap();
        assert!((lambda - 0.5).abs() < 1e-14);
        assert!(trace_distance(pair.rho1(), &DensityMatrix::basis_state(2, 0)).unwrap() < 1e-12);
        assert!(trace_distance(pair.rho2(), &DensityMatrix::basis_state(2, 1)).unwrap() < 1e-12);
    }

    #[test]
    fn jordan_hahn_orthogonal_inputs_are_fixed_points() {
        let rho = DensityMatrix::basis_state(3, 0);
        let rho0 = DensityMatrix::basis_state(3, 2);
        let (pair, lambda) = jordan_hahn_pair(&rho, &rho0).unwrap();
        assert!((lambda - 1.0).abs() < 1e-12);
        assert!(trace_distance(pair.rho1(), &rho).unwrap() < 1e-12);
        assert!(trace_distance(pair.rho2(), &rho0).unwrap() < 1e-12);
    }

    #[test]
    fn jordan_hahn_rejects_coincident() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(jordan_hahn_pair(&rho, &rho), Err(Error::CoincidentStates)));
    }

    #[test]
    fn jordan_hahn_random_pairs_satisfy_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for dim in [2usize, 3, 4] {
            for _ in 0..200 {
                let rho = random_density(dim, &mut rng);
                let rho0 = random_density(dim, &mut rng);
                let (pair, lambda) = jordan_hahn_pair(&rho, &rho0).unwrap();
                let lhs = pair.rho1().matrix() - pair.rho2().matrix();
                let rhs = (rho.matrix() - rho0.matrix()).scale_re(1.0 / lambda);
                assert!((&lhs - &rhs).operator_norm_hermitian() < 1e-10);
                let overlap = (pair.rho1().matrix() * pair.rho2().matrix()).trace().re;
                assert!(overlap.abs() < 1e-10);
                assert!((trace_distance(pair.rho1(), pair.rho2()).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interior_tests() {
        assert!(is_interior(&DensityMatrix::maximally_mixed(2), 0.1));
        assert!(!is_interior(&DensityMatrix::basis_state(2, 0), 1e-9));
        let r01 = bloch_to_density(&BlochVector::new(0.20, PI / 2.0, 13.0 * PI / 50.0).unwrap());
        assert!(is_interior(&r01, 0.01));
        assert!((r01.min_eigenvalue() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn bloch_round_trip() {
        let cases = [
            (0.0, 1.0, 2.0),
            (1.0, 0.0, 0.0),
            (0.88, 8.0 * PI / 50.0, 13.0 * PI / 50.0),
            (0.5, PI, 1.0),
            (0.3, PI / 2.0, 0.0),
        ];
        for (r, theta, phi) in cases {
            let b = BlochVector::new(r, theta, phi).unwrap();
            let rho = bloch_to_density(&b);
            let back = density_to_bloch(&rho).unwrap();
            assert!((b.r - back.r).abs() < 1e-12, "{b:?} vs {back:?}");
            assert!((b.theta - back.theta).abs() < 1e-7, "{b:?} vs {back:?}");
            assert!((b.phi - back.phi).abs() < 1e-7, "{b:?} vs {back:?}");
        }
    }

    #[test]
    fn bloch_reference_state_eigenvalues() {
        // r = 0.88 gives eigenvalues (1 +- 0.88) / 2.
        let b = BlochVector::new(0.88, 8.0 * PI / 50.0, 13.0 * PI / 50.0).unwrap();
        let rho = bloch_to_density(&b);
        let evs = rho.matrix().eigvals_hermitian();
        assert!((evs[0] - 0.06).abs() < 1e-12);
        assert!((evs[1] - 0.94).abs() < 1e-12);
    }

    #[test]
    fn bloch_degenerate_cases() {
        let center = bloch_to_density(&BlochVector::new(0.0, 1.2, 3.4).unwrap());
        assert!(trace_distance(&center, &DensityMatrix::maximally_mixed(2)).unwrap() < 1e-15);
        let north = bloch_to_density(&BlochVector::new(1.0, 0.0, 0.0).unwrap());
        assert!(trace_distance(&north, &DensityMatrix::basis_state(2, 0)).unwrap() < 1e-15);
        assert!(BlochVector::new(1.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn density_matrix_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(3, &mut rng);
        let json = serde_json::to_string(&rho).unwrap();
        assert!(json.contains("\"dim\":3"));
        let back: DensityMatrix = serde_json::from_str(&json).unwrap();
        assert!(trace_distance(&rho, &back).unwrap() < 1e-12);
    }
}
