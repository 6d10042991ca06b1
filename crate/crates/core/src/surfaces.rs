//! Construction, sampling and validation of enclosing surfaces around
//! interior reference states.
//!
//! An enclosing surface intersects every traceless Hermitian direction
//! emanating from the reference state at some positive ray parameter; a
//! hemispherical surface intersects each direction pair (A, -A) exactly
//! once.

use crate::linalg::{C64, CMat};
use crate::qstate::{DensityMatrix, TracelessDirection, bloch_to_density, density_to_bloch,
                    trace_distance};
use crate::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Positive radial function over unit directions (half trace norm 1).
pub type RadialFn = Arc<dyn Fn(&TracelessDirection) -> f64 + Send + Sync>;

#[derive(Clone)]
enum SurfaceKind {
    Sphere { eps: f64 },
    ConvexCombination { w: f64 },
    CustomRadial { radial: RadialFn },
    /// Radial function evaluated on the fundamental half of direction space;
    /// each (A, -A) pair is intersected exactly once.
    HemisphericalPatchwork { radial: RadialFn },
}

/// A parametric enclosing surface around an interior reference state.
#[derive(Clone)]
pub struct EnclosingSurface {
    reference: DensityMatrix,
    kind: SurfaceKind,
}

impl std::fmt::Debug for EnclosingSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnclosingSurface")
            .field("kind", &self.kind_name())
            .field("dim", &self.reference.dim())
            .finish()
    }
}

/// Result of intersecting a direction ray with a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Ray parameter: the surface point is rho0 + lambda A (or rho0 - lambda A
    /// when `flipped`).
    pub lambda: f64,
    /// Hemispherical surfaces intersect exactly one of +-A; `flipped` marks
    /// the -A branch.
    pub flipped: bool,
}

/// Deterministic sampling lattice over directions (or pure states, for the
/// convex-combination surface).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionLattice {
    /// theta_k = (k + 1/2) pi / n_theta, phi_j = 2 pi j / n_phi; theta-major
    /// enumeration. Poles are avoided by the half-step offset.
    QubitAngles { n_theta: usize, n_phi: usize },
    /// Seeded Gaussian-random Hermitian traceless directions for general
    /// dimension.
    RandomDirections { n_directions: usize, seed: u64 },
}

impl DirectionLattice {
    /// The 5000-state lattice with spacing 2 pi / 100.
    pub fn experiment() -> Self {
        DirectionLattice::QubitAngles { n_theta: 50, n_phi: 100 }
    }

    pub fn tag(&self) -> String {
        match self {
            DirectionLattice::QubitAngles { n_theta, n_phi } => {
                format!("qubit angles {n_theta} x {n_phi}")
            }
            DirectionLattice::RandomDirections { n_directions, seed } => {
                format!("random directions n = {n_directions}, seed = {seed}")
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DirectionLattice::QubitAngles { n_theta, n_phi } => n_theta * n_phi,
            DirectionLattice::RandomDirections { n_directions, .. } => *n_directions,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One sampled surface state, with angular coordinates when the lattice is
/// angular.
#[derive(Debug, Clone)]
pub struct SurfaceSample {
    pub index: usize,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub state: DensityMatrix,
}

fn require_interior(rho0: &DensityMatrix) -> Result<f64> {
    let margin = rho0.min_eigenvalue();
    if margin <= 0.0 {
        return Err(Error::NotInterior { margin, eps: 0.0 });
    }
    Ok(margin)
}

/// Spherical surface: all states at trace distance `eps` from the reference.
pub fn make_sphere_surface(rho0: &DensityMatrix, eps: f64) -> Result<EnclosingSurface> {
    let margin = require_interior(rho0)?;
    if eps <= 0.0 {
        return Err(Error::InvalidSurface(format!("eps = {eps} must be positive")));
    }
    if eps > margin {
        return Err(Error::InvalidSurface(format!(
            "eps = {eps} exceeds the interior margin {margin:.6}; some directions leave the state space"
        )));
    }
    Ok(EnclosingSurface { reference: rho0.clone(), kind: SurfaceKind::Sphere { eps } })
}

/// The experiment's surface: (1 - w) rho0 + w rho_pure over all pure qubit
/// states. Contains only mixed states for interior rho0.
pub fn make_convex_combination_surface(rho0: &DensityMatrix, w: f64) -> Result<EnclosingSurface> {
    require_interior(rho0)?;
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch(rho0.dim(), 2));
    }
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::InvalidSurface(format!("w = {w} outside (0, 1]")));
    }
    Ok(EnclosingSurface { reference: rho0.clone(), kind: SurfaceKind::ConvexCombination { w } })
}

/// Surface given by an arbitrary positive radial function over unit
/// directions.
pub fn make_custom_radial_surface(rho0: &DensityMatrix, radial: RadialFn) -> Result<EnclosingSurface> {
    require_interior(rho0)?;
    Ok(EnclosingSurface { reference: rho0.clone(), kind: SurfaceKind::CustomRadial { radial } })
}

/// Hemispherical surface: the radial function is evaluated on the
/// fundamental half of direction space, so each (A, -A) pair is hit once.
pub fn make_hemispherical_surface(rho0: &DensityMatrix, radial: RadialFn) -> Result<EnclosingSurface> {
    require_interior(rho0)?;
    Ok(EnclosingSurface { reference: rho0.clone(), kind: SurfaceKind::HemisphericalPatchwork { radial } })
}

/// Hemispherical variant of the constant-radius surface.
pub fn make_hemispherical_sphere_surface(rho0: &DensityMatrix, eps: f64) -> Result<EnclosingSurface> {
    let margin = require_interior(rho0)?;
    if eps <= 0.0 || eps > margin {
        return Err(Error::InvalidSurface(format!(
            "eps = {eps} outside (0, {margin:.6}]"
        )));
    }
    make_hemispherical_surface(rho0, Arc::new(move |_| eps))
}

impl EnclosingSurface {
    pub fn reference(&self) -> &DensityMatrix {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SurfaceKind::Sphere { .. } => "sphere",
            SurfaceKind::ConvexCombination { .. } => "convex_combination",
            SurfaceKind::CustomRadial { .. } => "custom_radial",
            SurfaceKind::HemisphericalPatchwork { .. } => "hemispherical_patchwork",
        }
    }

    pub fn is_hemispherical(&self) -> bool {
        matches!(self.kind, SurfaceKind::HemisphericalPatchwork { .. })
    }

    /// The positive ray parameter placing rho0 + lambda A on the surface
    /// (rho0 - lambda A for the flipped hemispherical branch). The resulting
    /// point is validated as a state.
    pub fn ray_intersection(&self, direction: &TracelessDirection) -> Result<RayHit> {
        self.intersect(direction).map(|(hit, _)| hit)
    }

    /// Intersection plus the surface state it lands on.
    pub fn intersection_point(
        &self,
        direction: &TracelessDirection,
    ) -> Result<(RayHit, DensityMatrix)> {
        self.intersect(direction).map(|(hit, state)| (hit, state))
    }

    fn intersect(&self, direction: &TracelessDirection) -> Result<(RayHit, DensityMatrix)> {
        if direction.dim() != self.dim() {
            return Err(Error::DimensionMismatch(direction.dim(), self.dim()));
        }
        let htn = direction.half_trace_norm();
        if htn <= 0.0 {
            return Err(Error::InvalidDirection("zero direction".into()));
        }
        let (lambda, flipped) = match &self.kind {
            SurfaceKind::Sphere { eps } => (eps / htn, false),
            SurfaceKind::ConvexCombination { w } => {
                let a = direction.qubit_cartesian()?;
                let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                let ahat = [a[0] / na, a[1] / na, a[2] / na];
                let b0 = density_to_bloch(&self.reference)?.cartesian();
                let dot = b0[0] * ahat[0] + b0[1] * ahat[1] + b0[2] * ahat[2];
                let b0_sq = b0[0] * b0[0] + b0[1] * b0[1] + b0[2] * b0[2];
                // Pure-state sphere crossing of the ray b0 + mu ahat.
                let mu = -dot + (dot * dot + 1.0 - b0_sq).sqrt();
                // A Bloch shift of w * mu * ahat corresponds to
                // lambda = w * mu / (2 |a|) in operator units.
                (w * mu / (2.0 * na), false)
            }
            SurfaceKind::CustomRadial { radial } => {
                let unit = TracelessDirection::new(direction.matrix().scale_re(1.0 / htn))?;
                let r = radial(&unit);
                if !(r > 0.0) {
                    return Err(Error::InvalidSurface(format!(
                        "radial function returned {r}; surface misses this direction"
                    )));
                }
                (r / htn, false)
            }
            SurfaceKind::HemisphericalPatchwork { radial } => {
                let unit = TracelessDirection::new(direction.matrix().scale_re(1.0 / htn))?;
                let (rep, flipped) = fold_direction(&unit)?;
                let r = radial(&rep);
                if !(r > 0.0) {
                    return Err(Error::InvalidSurface(format!(
                        "radial function returned {r}; surface misses this direction"
                    )));
                }
                (r / htn, flipped)
            }
        };
        let signed = if flipped { -lambda } else { lambda };
        let point = self.reference.matrix() + &direction.matrix().scale_re(signed);
        let state = DensityMatrix::new(point).map_err(|e| {
            Error::InvalidSurface(format!("intersection leaves the state space: {e}"))
        })?;
        Ok((RayHit { lambda, flipped }, state))
    }

    /// Enumerate surface states over a lattice, in deterministic order.
    pub fn sample(&self, lattice: &DirectionLattice) -> Result<Vec<SurfaceSample>> {
        if lattice.is_empty() {
            return Err(Error::EmptyLattice("direction lattice is empty".into()));
        }
        match *lattice {
            DirectionLattice::QubitAngles { n_theta, n_phi } => {
                if self.dim() != 2 {
                    return Err(Error::DimensionMismatch(self.dim(), 2));
                }
                let mut samples = Vec::with_capacity(n_theta * n_phi);
                for k in 0..n_theta {
                    let theta = (k as f64 + 0.5) * std::f64::consts::PI / n_theta as f64;
                    for j in 0..n_phi {
                        let phi = j as f64 * 2.0 * std::f64::consts::PI / n_phi as f64;
                        let state = match &self.kind {
                            SurfaceKind::ConvexCombination { w } => {
                                let pure = bloch_to_density(
                                    &crate::qstate::BlochVector::new(1.0, theta, phi)?,
                                );
                                DensityMatrix::new(
                                    &self.reference.matrix().scale_re(1.0 - w)
                                        + &pure.matrix().scale_re(*w),
                                )?
                            }
                            _ => {
                                let dir = TracelessDirection::qubit_from_angles(theta, phi);
                                self.intersect(&dir)?.1
                            }
                        };
                        samples.push(SurfaceSample {
                            index: k * n_phi + j,
                            theta: Some(theta),
                            phi: Some(phi),
                            state,
                        });
                    }
                }
                Ok(samples)
            }
            DirectionLattice::RandomDirections { n_directions, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut samples = Vec::with_capacity(n_directions);
                for index in 0..n_directions {
                    let dir = random_unit_direction(self.dim(), &mut rng);
                    let (_, state) = self.intersect(&dir)?;
                    samples.push(SurfaceSample { index, theta: None, phi: None, state });
                }
                Ok(samples)
            }
        }
    }
}

/// Representative of the (A, -A) pair in the fundamental half of direction
/// space, plus whether the input was flipped to reach it.
///
/// For qubits the half is the positive-z Bloch hemisphere, ties resolved by
/// positive x then positive y. For general dimension the first nonzero entry
/// of (diagonal, then upper-triangle real, then upper-triangle imaginary)
/// decides the sign.
pub fn fold_direction(direction: &TracelessDirection) -> Result<(TracelessDirection, bool)> {
    let keys: Vec<f64> = if direction.dim() == 2 {
        let [x, y, z] = direction.qubit_cartesian()?;
        vec![z, x, y]
    } else {
        let m = direction.matrix();
        let n = direction.dim();
        let mut keys = Vec::new();
        for i in 0..n {
            keys.push(m[(i, i)].re);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                keys.push(m[(i, j)].re);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                keys.push(m[(i, j)].im);
            }
        }
        keys
    };
    let tie_tol = 1e-14;
    for key in keys {
        if key > tie_tol {
            return Ok((direction.clone(), false));
        }
        if key < -tie_tol {
            return Ok((TracelessDirection::new(-direction.matrix())?, true));
        }
    }
    Err(Error::InvalidDirection("direction is numerically zero".into()))
}

/// Gaussian-random Hermitian traceless direction, normalized to half trace
/// norm 1.
pub fn random_unit_direction(dim: usize, rng: &mut impl Rng) -> TracelessDirection {
    loop {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            let d: f64 = StandardNormal.sample(rng);
            m[(i, i)] = C64::new(d, 0.0);
            for j in (i + 1)..dim {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                m[(i, j)] = C64::new(re, im);
                m[(j, i)] = C64::new(re, -im);
            }
        }
        let tr = m.trace().re / dim as f64;
        for i in 0..dim {
            m[(i, i)] -= C64::new(tr, 0.0);
        }
        if m.frobenius_norm() < 1e-8 {
            continue;
        }
        let dir = TracelessDirection::new(m).expect("constructed Hermitian traceless");
        let htn = dir.half_trace_norm();
        return TracelessDirection::new(dir.matrix().scale_re(1.0 / htn))
            .expect("normalization keeps the invariants");
    }
}

/// One failed direction in a validation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationFailure {
    pub direction_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceValidationReport {
    pub kind: String,
    pub n_directions: usize,
    pub n_failures: usize,
    /// First few failures, with the offending direction index.
    pub failures: Vec<ValidationFailure>,
}

impl SurfaceValidationReport {
    pub fn passed(&self) -> bool {
        self.n_failures == 0
    }
}

const MAX_REPORTED_FAILURES: usize = 16;

/// Sample random directions and verify existence (and, for hemispherical
/// surfaces, uniqueness) of intersections, plus state validity of every
/// intersection point.
pub fn validate_surface(
    surface: &EnclosingSurface,
    n_directions: usize,
    seed: u64,
) -> SurfaceValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut n_failures = 0usize;
    let record = |idx: usize, reason: String, failures: &mut Vec<ValidationFailure>| {
        if failures.len() < MAX_REPORTED_FAILURES {
            failures.push(ValidationFailure { direction_index: idx, reason });
        }
    };
    for index in 0..n_directions {
        let dir = random_unit_direction(surface.dim(), &mut rng);
        match surface.intersection_point(&dir) {
            Err(e) => {
                n_failures += 1;
                record(index, e.to_string(), &mut failures);
            }
            Ok((hit, state)) => {
                if hit.lambda <= 0.0 {
                    n_failures += 1;
                    record(index, format!("nonpositive lambda {}", hit.lambda), &mut failures);
                    continue;
                }
                match trace_distance(&state, surface.reference()) {
                    Ok(d) if d > 0.0 => {}
                    Ok(d) => {
                        n_failures += 1;
                        record(index, format!("surface point at distance {d} from reference"),
                               &mut failures);
                        continue;
                    }
                    Err(e) => {
                        n_failures += 1;
                        record(index, e.to_string(), &mut failures);
                        continue;
                    }
                }
                if surface.is_hemispherical() {
                    let opposite = TracelessDirection::new(-dir.matrix())
                        .expect("negation preserves invariants");
                    match surface.ray_intersection(&opposite) {
                        Ok(other) => {
                            if other.flipped == hit.flipped {
                                n_failures += 1;
                                record(
                                    index,
                                    "both of +-A intersect the hemispherical surface".into(),
                                    &mut failures,
                                );
                            }
                        }
                        Err(e) => {
                            n_failures += 1;
                            record(index, format!("opposite ray failed: {e}"), &mut failures);
                        }
                    }
                }
            }
        }
    }
    SurfaceValidationReport {
        kind: surface.kind_name().into(),
        n_directions,
        n_failures,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::BlochVector;
    use std::f64::consts::PI;

    fn r01() -> DensityMatrix {
        bloch_to_density(&BlochVector::new(0.20, PI / 2.0, 13.0 * PI / 50.0).unwrap())
    }

    fn r02() -> DensityMatrix {
        bloch_to_density(&BlochVector::new(0.88, 8.0 * PI / 50.0, 13.0 * PI / 50.0).unwrap())
    }

    #[test]
    fn sphere_points_sit_at_constant_distance() {
        let rho0 = r01();
        let surface = make_sphere_surface(&rho0, 0.3).unwrap();
        let samples = surface
            .sample(&DirectionLattice::QubitAngles { n_theta: 10, n_phi: 20 })
            .unwrap();
        assert_eq!(samples.len(), 200);
        for s in &samples {
            let d = trace_distance(&s.state, &rho0).unwrap();
            assert!((d - 0.3).abs() < 1e-10, "distance {d}");
        }
    }

    #[test]
    fn sphere_rejects_eps_beyond_interior_margin() {
        // r01 has min eigenvalue 0.4.
        assert!(make_sphere_surface(&r01(), 0.41).is_err());
        assert!(make_sphere_surface(&r01(), 0.39).is_ok());
    }

    #[test]
    fn sphere_around_center_along_z() {
        let rho0 = DensityMatrix::maximally_mixed(2);
        let surface = make_sphere_surface(&rho0, 0.3).unwrap();
        let dir = TracelessDirection::qubit_from_cartesian(0.0, 0.0, 1.0);
        let (hit, state) = surface.intersection_point(&dir).unwrap();
        assert!(!hit.flipped);
        let b = density_to_bloch(&state).unwrap();
        assert!((b.r - 0.6).abs() < 1e-12);
        assert!(b.theta.abs() < 1e-12);
        assert!((trace_distance(&state, &rho0).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ray_homogeneity_on_sphere() {
        let rho0 = DensityMatrix::maximally_mixed(2);
        let surface = make_sphere_surface(&rho0, 0.3).unwrap();
        // Direction with D(rho0 + A, rho0) = 0.6: half trace norm 0.6.
        let dir = TracelessDirection::new(
            TracelessDirection::qubit_from_cartesian(0.0, 0.0, 1.0).matrix().scale_re(0.6),
        )
        .unwrap();
        let hit = surface.ray_intersection(&dir).unwrap();
        assert!((hit.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn convex_combination_reproduces_experiment_geometry() {
        let rho0 = DensityMatrix::maximally_mixed(2);
        let surface = make_convex_combination_surface(&rho0, 0.7).unwrap();
        // Pure north pole mixes to Bloch radius 0.7 along z.
        let dir = TracelessDirection::qubit_from_cartesian(0.0, 0.0, 1.0);
        let (_, state) = surface.intersection_point(&dir).unwrap();
        let b = density_to_bloch(&state).unwrap();
        assert!((b.r - 0.7).abs() < 1e-12);
        assert!(b.theta.abs() < 1e-12);
        assert!(state.purity() < 1.0);
    }

    #[test]
    fn convex_combination_distance_scales_with_w() {
        let rho0 = r02();
        let w = 0.7;
        let surface = make_convex_combination_surface(&rho0, w).unwrap();
        let lattice = DirectionLattice::QubitAngles { n_theta: 10, n_phi: 20 };
        let samples = surface.sample(&lattice).unwrap();
        for s in &samples {
            let pure = bloch_to_density(
                &BlochVector::new(1.0, s.theta.unwrap(), s.phi.unwrap()).unwrap(),
            );
            let expected = w * trace_distance(&pure, &rho0).unwrap();
            let d = trace_distance(&s.state, &rho0).unwrap();
            assert!((d - expected).abs() < 1e-12);
            assert!(s.state.purity() < 1.0, "surface contains only mixed states");
        }
    }

    #[test]
    fn experiment_lattice_has_5000_points() {
        let lattice = DirectionLattice::experiment();
        assert_eq!(lattice.len(), 5000);
        let surface = make_convex_combination_surface(&r01(), 0.7).unwrap();
        assert_eq!(surface.sample(&lattice).unwrap().len(), 5000);
    }

    #[test]
    fn hemispherical_hits_exactly_one_branch() {
        let rho0 = r01();
        let surface = make_hemispherical_sphere_surface(&rho0, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let dir = random_unit_direction(2, &mut rng);
            let hit = surface.ray_intersection(&dir).unwrap();
            let opposite = TracelessDirection::new(-dir.matrix()).unwrap();
            let other = surface.ray_intersection(&opposite).unwrap();
            assert_ne!(hit.flipped, other.flipped, "exactly one of +-A may hit");
            assert!((hit.lambda - other.lambda).abs() < 1e-12);
        }
    }

    #[test]
    fn validate_surface_clean_and_broken() {
        let rho0 = r02();
        let sphere = make_sphere_surface(&rho0, 0.05).unwrap();
        assert!(validate_surface(&sphere, 10_000, 1).passed());
        let convex = make_convex_combination_surface(&rho0, 0.7).unwrap();
        assert!(validate_surface(&convex, 10_000, 2).passed());
        // Negative control: radial function dead on the z > 0.5 patch.
        let broken = make_custom_radial_surface(
            &DensityMatrix::maximally_mixed(2),
            Arc::new(|dir: &TracelessDirection| {
                let [_, _, z] = dir.qubit_cartesian().unwrap();
                if z > 0.5 { 0.0 } else { 0.1 }
            }),
        )
        .unwrap();
        let report = validate_surface(&broken, 2000, 3);
        assert!(!report.passed());
        assert!(!report.failures.is_empty());
        assert!(report.failures[0].reason.contains("radial"));
    }

    #[test]
    fn non_interior_reference_is_rejected() {
        let pure = DensityMatrix::basis_state(2, 0);
        assert!(matches!(make_sphere_surface(&pure, 0.1), Err(Error::NotInterior { .. })));
        assert!(matches!(
            make_convex_combination_surface(&pure, 0.7),
            Err(Error::NotInterior { .. })
        ));
    }

    #[test]
    fn general_dimension_sphere_sampling() {
        let rho0 = DensityMatrix::maximally_mixed(3);
        let surface = make_sphere_surface(&rho0, 0.2).unwrap();
        let samples = surface
            .sample(&DirectionLattice::RandomDirections { n_directions: 200, seed: 5 })
            .unwrap();
        assert_eq!(samples.len(), 200);
        for s in &samples {
            let d = trace_distance(&s.state, &rho0).unwrap();
            assert!((d - 0.2).abs() < 1e-10);
        }
    }
}
