//! Time-parametrized CPTP map families: the two-peak Fabry-Perot dephasing
//! model plus auxiliary families used to stress-test the measure engines.

use crate::linalg::{C64, CMat, EigH};
use crate::qstate::DensityMatrix;
use crate::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Default thickness window of the quartz-plate sweep, in units of the
/// central wavelength.
pub const THICKNESS_MIN_LAMBDA: f64 = 75.0;
pub const THICKNESS_MAX_LAMBDA: f64 = 318.0;

/// How the printed peak width and separation are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyConvention {
    /// sigma and delta_omega are angular frequencies (rad/s) as printed.
    #[default]
    Angular,
    /// sigma and delta_omega are ordinary frequencies; multiply by 2 pi.
    Ordinary,
}

/// How the relative amplitude of the second spectral peak weights the
/// two Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeConvention {
    /// Peak weights proportional to (1, A).
    #[default]
    WeightRatio,
    /// A is a field-amplitude ratio; peak weights proportional to (1, A^2).
    IntensityRatio,
}

/// Parameters of the two-Gaussian frequency spectrum behind the dephasing
/// dynamics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpDephasingParams {
    /// Relative amplitude of the second spectral peak, in [0, 1].
    pub a_alpha: f64,
    /// Peak width (Hz).
    pub sigma: f64,
    /// Peak separation (Hz).
    pub delta_omega: f64,
    /// Birefringence of the quartz plates.
    pub delta_n: f64,
    /// Central wavelength (m).
    pub lambda0: f64,
    #[serde(default)]
    pub angular_convention: FrequencyConvention,
    #[serde(default)]
    pub amplitude_convention: AmplitudeConvention,
}

impl FpDephasingParams {
    /// Values reported for the photonic setup, at a given tilt amplitude.
    pub fn reported(a_alpha: f64) -> Self {
        FpDephasingParams {
            a_alpha,
            sigma: 7.7e11,
            delta_omega: 7.2e12,
            delta_n: 8.9e-3,
            lambda0: 780e-9,
            angular_convention: FrequencyConvention::Angular,
            amplitude_convention: AmplitudeConvention::WeightRatio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a_alpha) {
            return Err(Error::InvalidParameter(format!("a_alpha {} outside [0,1]", self.a_alpha)));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("delta_omega", self.delta_omega),
            ("delta_n", self.delta_n),
            ("lambda0", self.lambda0),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Angular peak width and separation after applying the frequency
    /// convention.
    pub fn angular_sigma_delta(&self) -> (f64, f64) {
        match self.angular_convention {
            FrequencyConvention::Angular => (self.sigma, self.delta_omega),
            FrequencyConvention::Ordinary => {
                let tau = 2.0 * std::f64::consts::PI;
                (tau * self.sigma, tau * self.delta_omega)
            }
        }
    }

    /// Normalized weights (w1, w2) of the two spectral peaks.
    pub fn peak_weights(&self) -> (f64, f64) {
        let ratio = match self.amplitude_convention {
            AmplitudeConvention::WeightRatio => self.a_alpha,
            AmplitudeConvention::IntensityRatio => self.a_alpha * self.a_alpha,
        };
        (1.0 / (1.0 + ratio), ratio / (1.0 + ratio))
    }
}

/// Decoherence function of the two-Gaussian spectrum, with the global phase
/// of the central frequency dropped:
/// kappa(tau) = exp(-sigma^2 tau^2 / 2) * (w1 + w2 exp(i delta_omega tau)).
pub fn kappa(tau: f64, params: &FpDephasingParams) -> Result<C64> {
    if tau < 0.0 {
        return Err(Error::InvalidParameter(format!("tau = {tau} must be nonnegative")));
    }
    let (sigma, delta_omega) = params.angular_sigma_delta();
    let (w1, w2) = params.peak_weights();
    let envelope = (-0.5 * sigma * sigma * tau * tau).exp();
    let beat = C64::new(w1, 0.0) + C64::from_polar(w2, delta_omega * tau);
    Ok(envelope * beat)
}

/// Conversion from plate thickness (in units of lambda0) to the delay tau
/// entering the decoherence function.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThicknessToTime {
    /// tau = delta_n * L * lambda0 / c.
    Physical,
    /// tau = a * L + b, for calibration against reported measure values.
    Affine { a: f64, b: f64 },
}

impl ThicknessToTime {
    pub fn tau(&self, thickness_lambda: f64, params: &FpDephasingParams) -> f64 {
        match self {
            ThicknessToTime::Physical => {
                params.delta_n * thickness_lambda * params.lambda0 / SPEED_OF_LIGHT
            }
            ThicknessToTime::Affine { a, b } => a * thickness_lambda + b,
        }
    }
}

/// A time-parametrized family of CPTP maps with Phi_0 = identity.
#[derive(Debug, Clone)]
pub struct DynamicalMapFamily {
    dim: usize,
    horizon: f64,
    kind: FamilyKind,
}

#[derive(Debug, Clone)]
enum FamilyKind {
    Identity,
    /// Qubit dephasing in the H/V basis; Bloch-affine representation.
    FpDephasing { params: FpDephasingParams, thickness_to_time: ThicknessToTime },
    /// Standard qubit amplitude damping, Kraus representation.
    AmplitudeDamping { gamma: f64 },
    /// Unitary dilation exp(-iHt) with a random Hermitian generator on
    /// system x environment, traced over the environment.
    RandomCptp { seed: u64, env_dim: usize, generator: EigH },
}

/// One map of a family, frozen at a fixed time so it can be applied to many
/// states cheaply.
#[derive(Debug, Clone)]
pub enum ChannelAtTime {
    Identity,
    /// Populations fixed, coherence multiplied by kappa.
    Dephasing { kappa: C64 },
    Kraus { operators: Vec<CMat> },
}

impl ChannelAtTime {
    /// Linear action on an arbitrary matrix (not only states).
    pub fn apply_matrix(&self, m: &CMat) -> CMat {
        match self {
            ChannelAtTime::Identity => m.clone(),
            ChannelAtTime::Dephasing { kappa } => {
                let mut out = m.clone();
                out[(0, 1)] = m[(0, 1)] * kappa;
                out[(1, 0)] = m[(1, 0)] * kappa.conj();
                out
            }
            ChannelAtTime::Kraus { operators } => {
                let mut out = CMat::zeros(m.dim());
                for k in operators {
                    let term = &(k * m) * &k.adjoint();
                    out = &out + &term;
                }
                out
            }
        }
    }

    /// Choi matrix sum_ij |i><j| (x) Phi(|i><j|) on the dim^2 space.
    pub fn choi(&self, dim: usize) -> CMat {
        let mut choi = CMat::zeros(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let image = self.apply_matrix(&CMat::basis_unit(dim, i, j));
                for k in 0..dim {
                    for l in 0..dim {
                        choi[(i * dim + k, j * dim + l)] = image[(k, l)];
                    }
                }
            }
        }
        choi
    }

    /// Worst-case trace change over the matrix unit basis.
    pub fn trace_preservation_defect(&self, dim: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let image = self.apply_matrix(&CMat::basis_unit(dim, i, j));
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((image.trace() - C64::new(expected, 0.0)).norm());
            }
        }
        worst
    }
}

impl DynamicalMapFamily {
    pub fn identity(dim: usize, horizon: f64) -> Self {
        DynamicalMapFamily { dim, horizon, kind: FamilyKind::Identity }
    }

    /// Qubit dephasing family driven by the two-peak spectrum; the family
    /// time variable is the plate thickness in units of lambda0.
    pub fn fp_dephasing(
        params: FpDephasingParams,
        thickness_to_time: ThicknessToTime,
    ) -> Result<Self> {
        params.validate()?;
        Ok(DynamicalMapFamily {
            dim: 2,
            horizon: THICKNESS_MAX_LAMBDA,
            kind: FamilyKind::FpDephasing { params, thickness_to_time },
        })
    }

    /// Qubit amplitude damping with decay probability p(t) = 1 - exp(-gamma t).
    pub fn amplitude_damping(gamma: f64, horizon: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
        }
        Ok(DynamicalMapFamily { dim: 2, horizon, kind: FamilyKind::AmplitudeDamping { gamma } })
    }

    /// Deterministic-from-seed CPTP family from a random unitary dilation:
    /// a random Hermitian generator H on system x environment is sampled
    /// once, and Phi_t traces exp(-iHt) (rho (x) |0><0|) exp(iHt) over the
    /// environment. Horizon is 1.
    pub fn random_cptp(seed: u64, dim: usize) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(Error::InvalidParameter(format!("random_cptp dim {dim} not in 2..=4")));
        }
        let env_dim = dim;
        let total = dim * env_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = CMat::zeros(total);
        for i in 0..total {
            h[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..total {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        // Scale so the dynamics explores a revival or two inside the horizon.
        let generator = h.scale_re(4.0).eigh();
        Ok(DynamicalMapFamily {
            dim,
            horizon: 1.0,
            kind: FamilyKind::RandomCptp { seed, env_dim, generator },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn representation_tag(&self) -> &'static str {
        match self.kind {
            FamilyKind::Identity | FamilyKind::FpDephasing { .. } => "qubit-bloch-affine",
            FamilyKind::AmplitudeDamping { .. } | FamilyKind::RandomCptp { .. } => "kraus",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.kind {
            FamilyKind::RandomCptp { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Freeze the map at time `t`.
    pub fn channel_at(&self, t: f64) -> Result<ChannelAtTime> {
        if t < 0.0 || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        Ok(match &self.kind {
            FamilyKind::Identity => ChannelAtTime::Identity,
            FamilyKind::FpDephasing { params, thickness_to_time } => {
                let tau = thickness_to_time.tau(t, params).max(0.0);
                ChannelAtTime::Dephasing { kappa: kappa(tau, params)? }
            }
            FamilyKind::AmplitudeDamping { gamma } => {
                let p = 1.0 - (-gamma * t).exp();
                let k0 = CMat::from_rows(&[
                    vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                    vec![C64::new(0.0, 0.0), C64::new((1.0 - p).sqrt(), 0.0)],
                ]);
                let k1 = CMat::from_rows(&[
                    vec![C64::new(0.0, 0.0), C64::new(p.sqrt(), 0.0)],
                    vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
                ]);
                ChannelAtTime::Kraus { operators: vec![k0, k1] }
            }
            FamilyKind::RandomCptp { env_dim, generator, .. } => {
                let u = generator.apply_function(|x| C64::from_polar(1.0, -x * t));
                let d = self.dim;
                let e = *env_dim;
                // K_a[i][j] = <i,a| U |j,0>.
                let operators = (0..e)
                    .map(|a| {
                        let mut k = CMat::zeros(d);
                        for i in 0..d {
                            for j in 0..d {
                                k[(i, j)] = u[(i * e + a, j * e)];
                            }
                        }
                        k
                    })
                    .collect();
                ChannelAtTime::Kraus { operators }
            }
        })
    }

    /// Apply Phi_t to a state, validating the result.
    pub fn apply(&self, t: f64, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch(rho.dim(), self.dim));
        }
        let out = self.channel_at(t)?.apply_matrix(rho.matrix());
        DensityMatrix::new(out)
    }
}

/// Free-function form of [`DynamicalMapFamily::apply`].
pub fn apply_map(
    family: &DynamicalMapFamily,
    t: f64,
    rho: &DensityMatrix,
) -> Result<DensityMatrix> {
    family.apply(t, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::TimeGrid;
    use crate::qstate::{BlochVector, bloch_to_density, trace_distance};
    use std::f64::consts::PI;

    fn quadrature_kappa(tau: f64, params: &FpDephasingParams) -> C64 {
        // Independent oracle: Simpson quadrature of the two-Gaussian spectrum
        // with the first peak centered at omega = 0.
        let (sigma, delta_omega) = params.angular_sigma_delta();
        let (w1, w2) = params.peak_weights();
        let lo = -12.0 * sigma;
        let hi = delta_omega + 12.0 * sigma;
        let n = 40_000usize; // even
        let h = (hi - lo) / n as f64;
        let spectrum = |omega: f64| {
            let g = |mu: f64| {
                (-(omega - mu) * (omega - mu) / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * PI).sqrt())
            };
            w1 * g(0.0) + w2 * g(delta_omega)
        };
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=n {
            let omega = lo + i as f64 * h;
            let weight = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += weight * spectrum(omega) * C64::from_polar(1.0, omega * tau);
        }
        acc * (h / 3.0)
    }

    #[test]
    fn kappa_at_zero_is_one() {
        let p = FpDephasingParams::reported(0.64);
        assert!((kappa(0.0, &p).unwrap().norm() - 1.0).abs() < 1e-15);
        assert!(kappa(-1.0, &p).is_err());
    }

    #[test]
    fn kappa_single_peak_is_monotone_gaussian() {
        let p = FpDephasingParams { a_alpha: 0.0, ..FpDephasingParams::reported(0.0) };
        let mut last = f64::INFINITY;
        for i in 0..200 {
            let tau = i as f64 * 2e-14;
            let k = kappa(tau, &p).unwrap().norm();
            let expected = (-0.5 * p.sigma * p.sigma * tau * tau).exp();
            assert!((k - expected).abs() < 1e-14);
            assert!(k <= last + 1e-15);
            last = k;
        }
    }

    #[test]
    fn kappa_full_revival_at_beat_period() {
        let p = FpDephasingParams { a_alpha: 1.0, ..FpDephasingParams::reported(1.0) };
        let tau = 2.0 * PI / p.delta_omega;
        let envelope = (-0.5 * p.sigma * p.sigma * tau * tau).exp();
        assert!((kappa(tau, &p).unwrap().norm() - envelope).abs() < 1e-12);
    }

    #[test]
    fn kappa_matches_quadrature_oracle() {
        for a_alpha in [0.0, 0.22, 0.64, 1.0] {
            let p = FpDephasingParams::reported(a_alpha);
            for i in 0..20 {
                let tau = i as f64 * 5e-14;
                let closed = kappa(tau, &p).unwrap();
                let quad = quadrature_kappa(tau, &p);
                assert!(
                    (closed - quad).norm() <= 1e-8 * closed.norm().max(1e-3),
                    "a={a_alpha} tau={tau}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn dephasing_fixes_populations() {
        let params = FpDephasingParams::reported(0.64);
        let fam = DynamicalMapFamily::fp_dephasing(params, ThicknessToTime::Physical).unwrap();
        let diag = DensityMatrix::basis_state(2, 1);
        for t in [0.0, 100.0, 318.0] {
            let out = fam.apply(t, &diag).unwrap();
            assert!(trace_distance(&out, &diag).unwrap() < 1e-14);
        }
    }

    #[test]
    fn dephasing_equatorial_pair_distance_is_kappa_norm() {
        let params = FpDephasingParams::reported(0.64);
        let ttt = ThicknessToTime::Affine { a: 2.5e-15, b: 0.0 };
        let fam = DynamicalMapFamily::fp_dephasing(params, ttt).unwrap();
        let plus = bloch_to_density(&BlochVector::new(1.0, PI / 2.0, 0.0).unwrap());
        let minus = bloch_to_density(&BlochVector::new(1.0, PI / 2.0, PI).unwrap());
        for t in [75.0, 150.0, 318.0] {
            let d = trace_distance(&fam.apply(t, &plus).unwrap(), &fam.apply(t, &minus).unwrap())
                .unwrap();
            let k = kappa(ttt.tau(t, &params), &params).unwrap().norm();
            assert!((d - k).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_damping_limits() {
        let fam = DynamicalMapFamily::amplitude_damping(1.0, 50.0).unwrap();
        let rho = DensityMatrix::basis_state(2, 1);
        assert!(trace_distance(&fam.apply(0.0, &rho).unwrap(), &rho).unwrap() < 1e-14);
        let late = fam.apply(50.0, &rho).unwrap();
        assert!(trace_distance(&late, &DensityMatrix::basis_state(2, 0)).unwrap() < 1e-10);
    }

    #[test]
    fn random_cptp_is_deterministic_and_identity_at_zero() {
        let fam_a = DynamicalMapFamily::random_cptp(7, 3).unwrap();
        let fam_b = DynamicalMapFamily::random_cptp(7, 3).unwrap();
        let rho = DensityMatrix::basis_state(3, 1);
        for t in [0.0, 0.3, 0.9] {
            let x = fam_a.apply(t, &rho).unwrap();
            let y = fam_b.apply(t, &rho).unwrap();
            assert_eq!(x.matrix(), y.matrix(), "same seed must be bitwise identical");
        }
        assert!(trace_distance(&fam_a.apply(0.0, &rho).unwrap(), &rho).unwrap() < 1e-12);
        assert!(DynamicalMapFamily::random_cptp(1, 5).is_err());
    }

    #[test]
    fn families_are_cptp_on_grid() {
        let families = vec![
            DynamicalMapFamily::fp_dephasing(
                FpDephasingParams::reported(0.64),
                ThicknessToTime::Physical,
            )
            .unwrap(),
            DynamicalMapFamily::amplitude_damping(0.7, 5.0).unwrap(),
            DynamicalMapFamily::random_cptp(3, 2).unwrap(),
            DynamicalMapFamily::random_cptp(4, 3).unwrap(),
        ];
        for fam in &families {
            let grid = TimeGrid::new(0.0, fam.horizon(), 100).unwrap();
            for t in grid.times() {
                let ch = fam.channel_at(t).unwrap();
                assert!(ch.trace_preservation_defect(fam.dim()) < 1e-10);
                let min_choi = ch.choi(fam.dim()).eigvals_hermitian()[0];
                assert!(min_choi >= -1e-9, "t = {t}: min Choi eigenvalue {min_choi}");
            }
        }
    }

    #[test]
    fn apply_is_linear_and_contractive() {
        use crate::qstate::testkit::random_density;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let fam = DynamicalMapFamily::random_cptp(9, 2).unwrap();
        for _ in 0..50 {
            let rho = random_density(2, &mut rng);
            let sig = random_density(2, &mut rng);
            let w = 0.3;
            let t = 0.7;
            let mixed = DensityMatrix::new(
                &rho.matrix().scale_re(w) + &sig.matrix().scale_re(1.0 - w),
            )
            .unwrap();
            let lhs = fam.apply(t, &mixed).unwrap();
            let rhs = &fam.apply(t, &rho).unwrap().matrix().scale_re(w)
                + &fam.apply(t, &sig).unwrap().matrix().scale_re(1.0 - w);
            assert!((lhs.matrix() - &rhs).frobenius_norm() < 1e-12);
            let d_in = trace_distance(&rho, &sig).unwrap();
            let d_out =
                trace_distance(&fam.apply(t, &rho).unwrap(), &fam.apply(t, &sig).unwrap()).unwrap();
            assert!(d_out <= d_in + 1e-12);
        }
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let fam = DynamicalMapFamily::amplitude_damping(1.0, 2.0).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(fam.apply(3.0, &rho), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(fam.apply(-0.1, &rho), Err(Error::TimeOutOfRange { .. })));
    }
}
