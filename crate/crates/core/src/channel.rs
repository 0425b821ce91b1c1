//! Large-scale and small-scale channel synthesis.
//!
//! Each user's downlink channel is a length-`M` complex vector
//!
//! ```text
//! h = h_bar + R^(1/2) e,      e ~ CN(0, I_M),
//! ```
//!
//! where the deterministic part `h_bar` is a line-of-sight steering vector
//! scaled by the LoS link gain and `R` is the one-ring spatial covariance of
//! the scattered field, scaled by the NLoS link gain. Link gains come from
//! free-space path loss plus log-normal shadowing (1 dB deviation on LoS
//! links, 20 dB on NLoS links); whether a user has a LoS link at all is a
//! Bernoulli draw with the elevation-dependent probability
//! `P(LoS) = 1 / (1 + kappa * exp(-omega * (theta_deg - kappa)))`.
//!
//! The one-ring covariance integrates plane-wave outer products over the
//! angular box of [`one_ring_spreads`](crate::geometry::one_ring_spreads)
//! with a tensor-product Gauss–Legendre rule:
//!
//! ```text
//! [R]_{a,b} = beta_nlos / (4 dphi dtheta) *
//!             int int exp(j k(phi,theta)^T (u_a - u_b)) dphi dtheta.
//! ```
//!
//! # Example
//!
//! ```
//! use hapsim_core::channel::{los_probability, path_loss_db};
//!
//! // 20 km link at 2.5 GHz, no shadowing.
//! let pl = path_loss_db(20_000.0, 2.5e9, 0.0).unwrap();
//! assert!((pl - 126.427).abs() < 1e-3);
//! // A user at 45 degrees elevation almost always sees the platform.
//! assert!(los_probability(45.0, 9.61, 0.16).unwrap() > 0.95);
//! ```

use crate::geometry::{ArrayGeometry, GeometryError, OneRingSpreads};
use crate::quadrature::{gauss_legendre, rescale};
use crate::{C64, SPEED_OF_LIGHT};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

// ---------- Errors ----------

/// Domain errors for channel synthesis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    /// Link distance must be positive.
    #[error("link distance must be positive (got {0})")]
    InvalidLinkDistance(f64),
    /// Carrier frequency must be positive.
    #[error("carrier frequency must be positive (got {0})")]
    InvalidFrequency(f64),
    /// Elevation for the LoS model must lie in (0, 90] degrees.
    #[error("elevation must lie in (0, 90] degrees (got {0})")]
    InvalidElevationDeg(f64),
    /// LoS-probability shape parameters must be positive.
    #[error("LoS probability parameters must be positive (got kappa = {kappa}, omega = {omega})")]
    InvalidLosParams { kappa: f64, omega: f64 },
    /// Link gains must be positive and finite.
    #[error("link gain must be positive and finite (got {0})")]
    InvalidGain(f64),
    /// The angular box of the scattered field has zero area.
    #[error("degenerate angular spreads (delta_phi = {delta_phi}, delta_theta = {delta_theta}); use the rank-one covariance")]
    DegenerateSpreads { delta_phi: f64, delta_theta: f64 },
    /// Quadrature order must be at least 1.
    #[error("quadrature node count must be at least 1")]
    InvalidQuadNodes,
    /// Covariance is too indefinite to admit a square root.
    #[error("covariance eigenvalue {min_eigenvalue:e} below the PSD clamp threshold {threshold:e}")]
    CovarianceNotPsd { min_eigenvalue: f64, threshold: f64 },
    /// Structural mismatch between vectors/matrices.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// Receive antenna count must be at least 1.
    #[error("receive antenna count must be at least 1")]
    InvalidRxCount,
    /// Propagated geometry error.
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------- Large-scale link model ----------

/// Free-space path loss in dB at `distance_m` / `carrier_freq_hz`, plus the
/// shadow-fading term `shadow_db`:
/// `20 log10(d) + 20 log10(f) + 20 log10(4 pi / c) + F`.
pub fn path_loss_db(
    distance_m: f64,
    carrier_freq_hz: f64,
    shadow_db: f64,
) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::InvalidLinkDistance(distance_m));
    }
    if !(carrier_freq_hz > 0.0) {
        return Err(ChannelError::InvalidFrequency(carrier_freq_hz));
    }
    Ok(20.0 * distance_m.log10()
        + 20.0 * carrier_freq_hz.log10()
        + 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10()
        + shadow_db)
}

/// Linear power gain for a path loss in dB: `10^(-pl_db / 10)`.
pub fn gain_from_path_loss_db(pl_db: f64) -> f64 {
    10f64.powf(-pl_db / 10.0)
}

/// Line-of-sight probability at `elevation_deg` degrees with environment
/// parameters `(kappa, omega)`. Strictly increasing in elevation, valued in
/// (0, 1); equals `1 / (1 + kappa)` exactly at `elevation_deg == kappa`.
pub fn los_probability(elevation_deg: f64, kappa: f64, omega: f64) -> Result<f64, ChannelError> {
    if !(elevation_deg > 0.0) || elevation_deg > 90.0 {
        return Err(ChannelError::InvalidElevationDeg(elevation_deg));
    }
    if !(kappa > 0.0) || !(omega > 0.0) {
        return Err(ChannelError::InvalidLosParams { kappa, omega });
    }
    Ok(1.0 / (1.0 + kappa * (-omega * (elevation_deg - kappa)).exp()))
}

// ---------- LoS steering ----------

/// Per-element phases `exp(j k(az, el)^T u_m)` with unit modulus: the
/// gain-free steering direction. The wave vector and the element positions
/// are both taken in the scene frame (positions include the panel's
/// mounting rotation), so the same azimuth/elevation convention serves any
/// orientation. Kernel of the steering vector and the covariances, and the
/// direction the clustering stage correlates (it exists for every user,
/// LoS draw or not).
pub fn steering_phases(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> DVector<C64> {
    let m = geom.n_elements();
    let k = crate::geometry::direction(azimuth, elevation)
        * (2.0 * std::f64::consts::PI / geom.wavelength());
    DVector::from_fn(m, |idx, _| {
        // element_position cannot fail for 1..=M
        let u = geom.element_position(idx + 1).expect("index in range");
        C64::from_polar(1.0, k.dot(&u))
    })
}

/// LoS steering vector: entry `m` is `sqrt(beta_los) * exp(j k^T u_m)` with
/// scene-frame angles. Its squared norm is `M * beta_los`.
pub fn los_steering(
    geom: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
    beta_los: f64,
) -> Result<DVector<C64>, ChannelError> {
    if !(beta_los > 0.0) || !beta_los.is_finite() {
        return Err(ChannelError::InvalidGain(beta_los));
    }
    Ok(steering_phases(geom, azimuth, elevation) * C64::new(beta_los.sqrt(), 0.0))
}

// ---------- One-ring covariance ----------

/// One-ring spatial covariance over the angular box
/// `[az - dphi, az + dphi] x [el_c - dtheta, el_c + dtheta]` (centre angles
/// and spreads in the scene frame, where the ring geometry defines them),
/// scaled so the diagonal equals `beta_nlos` exactly. Uses a
/// `quad_nodes x quad_nodes` tensor Gauss–Legendre rule.
///
/// Errors with [`ChannelError::DegenerateSpreads`] when either spread is
/// zero; callers fall back to [`rank_one_covariance`] in that case.
pub fn one_ring_covariance(
    geom: &ArrayGeometry,
    azimuth_center: f64,
    spreads: &OneRingSpreads,
    beta_nlos: f64,
    quad_nodes: usize,
) -> Result<DMatrix<C64>, ChannelError> {
    if !(beta_nlos > 0.0) || !beta_nlos.is_finite() {
        return Err(ChannelError::InvalidGain(beta_nlos));
    }
    if quad_nodes < 1 {
        return Err(ChannelError::InvalidQuadNodes);
    }
    let (dphi, dtheta) = (spreads.delta_phi, spreads.delta_theta);
    if !(dphi > 0.0) || !(dtheta > 0.0) {
        return Err(ChannelError::DegenerateSpreads {
            delta_phi: dphi,
            delta_theta: dtheta,
        });
    }
    let el_c = spreads.center_elevation;

    let (base_nodes, base_weights) = gauss_legendre(quad_nodes);
    let (phi_nodes, phi_weights) = rescale(
        &base_nodes,
        &base_weights,
        azimuth_center - dphi,
        azimuth_center + dphi,
    );
    let (theta_nodes, theta_weights) =
        rescale(&base_nodes, &base_weights, el_c - dtheta, el_c + dtheta);

    let m = geom.n_elements();
    let mut acc = DMatrix::<C64>::zeros(m, m);
    for (theta, w_t) in theta_nodes.iter().zip(&theta_weights) {
        for (phi, w_p) in phi_nodes.iter().zip(&phi_weights) {
            let t = steering_phases(geom, *phi, *theta);
            let w = w_t * w_p;
            // Lower triangle of the rank-one update w * t * t^H.
            for a in 0..m {
                for b in 0..=a {
                    acc[(a, b)] += t[a] * t[b].conj() * w;
                }
            }
        }
    }
    let scale = beta_nlos / (4.0 * dphi * dtheta);
    let mut cov = DMatrix::<C64>::zeros(m, m);
    for a in 0..m {
        // The diagonal integrand is identically 1, so the diagonal is exact.
        cov[(a, a)] = C64::new(beta_nlos, 0.0);
        for b in 0..a {
            let v = acc[(a, b)] * scale;
            cov[(a, b)] = v;
            cov[(b, a)] = v.conj();
        }
    }
    Ok(cov)
}

/// Rank-one covariance `beta_nlos * t t^H` with unit-modulus steering phases
/// at the centre angles: the zero-spread limit of [`one_ring_covariance`].
pub fn rank_one_covariance(
    geom: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
    beta_nlos: f64,
) -> Result<DMatrix<C64>, ChannelError> {
    if !(beta_nlos > 0.0) || !beta_nlos.is_finite() {
        return Err(ChannelError::InvalidGain(beta_nlos));
    }
    let t = steering_phases(geom, azimuth, elevation);
    let mut cov = &t * t.adjoint();
    cov *= C64::new(beta_nlos, 0.0);
    Ok(cov)
}

// ---------- Channel statistics ----------

/// Shadowing deviations and LoS-probability parameters of the large-scale
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleParams {
    /// Carrier frequency, Hz.
    pub carrier_freq_hz: f64,
    /// LoS probability shape parameter (also the crossing point in degrees).
    pub kappa: f64,
    /// LoS probability slope parameter, 1/degree.
    pub omega: f64,
    /// Shadow-fading standard deviation on LoS links, dB.
    pub sigma_sf_los_db: f64,
    /// Shadow-fading standard deviation on NLoS links, dB.
    pub sigma_sf_nlos_db: f64,
}

impl Default for LargeScaleParams {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 2.5e9,
            kappa: 9.61,
            omega: 0.16,
            sigma_sf_los_db: 1.0,
            sigma_sf_nlos_db: 20.0,
        }
    }
}

/// Second-order statistics of one user's channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    /// Deterministic LoS component `h_bar` (all-zero when `!has_los`).
    pub los_mean: DVector<C64>,
    /// Spatial covariance `R` of the scattered component.
    pub covariance: DMatrix<C64>,
    /// Linear LoS link gain (0 when `!has_los`).
    pub beta_los: f64,
    /// Linear NLoS link gain; equals every diagonal entry of `R`.
    pub beta_nlos: f64,
    /// Whether the Bernoulli LoS draw succeeded (Rician vs Rayleigh).
    pub has_los: bool,
    /// The LoS probability the draw used.
    pub los_probability: f64,
}

impl ChannelStats {
    /// Assembles statistics from parts, validating dimensions, Hermitian
    /// symmetry, and the diagonal/`beta_nlos` agreement.
    pub fn from_parts(
        los_mean: DVector<C64>,
        covariance: DMatrix<C64>,
        beta_los: f64,
        beta_nlos: f64,
        has_los: bool,
        los_prob: f64,
    ) -> Result<Self, ChannelError> {
        let m = los_mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(ChannelError::DimensionMismatch(format!(
                "covariance is {}x{} but the LoS mean has length {m}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if !(beta_nlos > 0.0) || !beta_nlos.is_finite() {
            return Err(ChannelError::InvalidGain(beta_nlos));
        }
        let herm_tol = 1e-9 * beta_nlos;
        for a in 0..m {
            if (covariance[(a, a)].re - beta_nlos).abs() > 1e-6 * beta_nlos
                || covariance[(a, a)].im.abs() > herm_tol
            {
                return Err(ChannelError::DimensionMismatch(format!(
                    "covariance diagonal entry {a} does not equal beta_nlos"
                )));
            }
            for b in 0..a {
                if (covariance[(a, b)] - covariance[(b, a)].conj()).norm() > herm_tol {
                    return Err(ChannelError::DimensionMismatch(format!(
                        "covariance is not Hermitian at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Self {
            los_mean,
            covariance,
            beta_los,
            beta_nlos,
            has_los,
            los_probability: los_prob,
        })
    }

    /// Number of transmit antennas `M`.
    pub fn n_tx(&self) -> usize {
        self.los_mean.len()
    }

    /// Analytic mean received power `E ||h||^2 = ||h_bar||^2 + tr(R)`.
    pub fn mean_power(&self) -> f64 {
        self.los_mean.norm_squared() + self.covariance.diagonal().map(|c| c.re).sum()
    }

    /// Synthesizes one user's statistics from the placement: draws the LoS
    /// state and both shadow-fading terms from `rng` (always three draws, in
    /// a fixed order, so parallel scenarios consume matched randomness),
    /// then builds the steering mean and one-ring covariance.
    pub fn build<R: Rng + ?Sized>(
        geom: &ArrayGeometry,
        user: &crate::geometry::UserPlacement,
        params: &LargeScaleParams,
        quad_nodes: usize,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let los_draw: f64 = rng.gen();
        let f_los: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_sf_los_db;
        let f_nlos: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_sf_nlos_db;
        Self::build_with_draws(geom, user, params, quad_nodes, los_draw, f_los, f_nlos)
    }

    /// Deterministic variant of [`ChannelStats::build`]: no shadowing and a
    /// forced LoS state. Used by the statistics-only experiments and tests.
    pub fn build_deterministic(
        geom: &ArrayGeometry,
        user: &crate::geometry::UserPlacement,
        params: &LargeScaleParams,
        quad_nodes: usize,
        has_los: bool,
    ) -> Result<Self, ChannelError> {
        let los_draw = if has_los { 0.0 } else { 1.0 };
        Self::build_with_draws(geom, user, params, quad_nodes, los_draw, 0.0, 0.0)
    }

    fn build_with_draws(
        geom: &ArrayGeometry,
        user: &crate::geometry::UserPlacement,
        params: &LargeScaleParams,
        quad_nodes: usize,
        los_draw: f64,
        f_los: f64,
        f_nlos: f64,
    ) -> Result<Self, ChannelError> {
        let elevation_deg =
            crate::geometry::clamp_elevation(user.elevation).to_degrees().min(90.0);
        let p_los = los_probability(elevation_deg, params.kappa, params.omega)?;
        let has_los = los_draw < p_los;

        let beta_nlos = gain_from_path_loss_db(path_loss_db(
            user.distance,
            params.carrier_freq_hz,
            f_nlos,
        )?);
        let (los_mean, beta_los) = if has_los {
            let beta_los = gain_from_path_loss_db(path_loss_db(
                user.distance,
                params.carrier_freq_hz,
                f_los,
            )?);
            (
                los_steering(geom, user.azimuth, user.elevation, beta_los)?,
                beta_los,
            )
        } else {
            (DVector::zeros(geom.n_elements()), 0.0)
        };

        let spreads = crate::geometry::one_ring_spreads(user)?;
        let covariance = if spreads.delta_phi > 0.0 && spreads.delta_theta > 0.0 {
            one_ring_covariance(geom, user.azimuth, &spreads, beta_nlos, quad_nodes)?
        } else {
            rank_one_covariance(geom, user.azimuth, user.elevation, beta_nlos)?
        };

        Ok(Self {
            los_mean,
            covariance,
            beta_los,
            beta_nlos,
            has_los,
            los_probability: p_los,
        })
    }
}

// ---------- Karhunen-Loeve sampling ----------

/// Relative clamp band for slightly negative covariance eigenvalues.
const PSD_CLAMP_REL: f64 = 1e-8;

/// Precomputed sampler drawing `h = h_bar + R^(1/2) e` realizations.
///
/// The square root comes from the Hermitian eigendecomposition
/// `R = U diag(lambda) U^H`; eigenvalues in `[-1e-8 * tr(R)/M, 0)` are
/// clamped to zero (quadrature round-off), anything lower is an error.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    mean: DVector<C64>,
    sqrt_cov: DMatrix<C64>,
}

impl ChannelSampler {
    /// Factors the covariance of `stats`.
    pub fn new(stats: &ChannelStats) -> Result<Self, ChannelError> {
        let m = stats.n_tx();
        let trace: f64 = stats.covariance.diagonal().map(|c| c.re).sum();
        let threshold = -PSD_CLAMP_REL * trace / m as f64;
        let eig = stats.covariance.clone().symmetric_eigen();
        let mut min_eigenvalue = f64::INFINITY;
        let mut sqrt_vals = DVector::<f64>::zeros(m);
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            min_eigenvalue = min_eigenvalue.min(lambda);
            if lambda < threshold {
                return Err(ChannelError::CovarianceNotPsd {
                    min_eigenvalue: lambda,
                    threshold,
                });
            }
            sqrt_vals[i] = lambda.max(0.0).sqrt();
        }
        let mut sqrt_cov = eig.eigenvectors.clone();
        for (j, mut col) in sqrt_cov.column_iter_mut().enumerate() {
            let s = C64::new(sqrt_vals[j], 0.0);
            for v in col.iter_mut() {
                *v *= s;
            }
        }
        let sqrt_cov = sqrt_cov * eig.eigenvectors.adjoint();
        Ok(Self {
            mean: stats.los_mean.clone(),
            sqrt_cov,
        })
    }

    /// Number of transmit antennas `M`.
    pub fn n_tx(&self) -> usize {
        self.mean.len()
    }

    /// One channel vector draw `h_bar + R^(1/2) e`, `e ~ CN(0, I)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<C64> {
        let m = self.n_tx();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let e = DVector::from_fn(m, |_, _| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal) * half,
                rng.sample::<f64, _>(StandardNormal) * half,
            )
        });
        &self.mean + &self.sqrt_cov * e
    }

    /// An `n_rx x M` realization whose rows are independent draws (one per
    /// receive antenna, identical statistics).
    pub fn draw_matrix<R: Rng + ?Sized>(
        &self,
        n_rx: usize,
        rng: &mut R,
    ) -> Result<DMatrix<C64>, ChannelError> {
        if n_rx < 1 {
            return Err(ChannelError::InvalidRxCount);
        }
        let m = self.n_tx();
        let mut h = DMatrix::<C64>::zeros(n_rx, m);
        for r in 0..n_rx {
            let row = self.draw(rng);
            for c in 0..m {
                h[(r, c)] = row[c];
            }
        }
        Ok(h)
    }
}

/// One-shot sampling: an `n_rx x M` realization for `stats`, deterministic
/// in `rng_seed`.
pub fn sample_channel(
    stats: &ChannelStats,
    n_rx: usize,
    rng_seed: u64,
) -> Result<DMatrix<C64>, ChannelError> {
    use rand::SeedableRng;
    let sampler = ChannelSampler::new(stats)?;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(rng_seed);
    sampler.draw_matrix(n_rx, &mut rng)
}

// ---------- Debug dump ----------

/// Flat, serializable mirror of [`ChannelStats`] for debugging dumps.
/// Complex arrays are stored row-major with interleaved real/imaginary
/// doubles; the format is stable but not meant to be bit-exact across
/// platforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStatsDump {
    /// Number of transmit antennas.
    pub n_tx: usize,
    /// Linear LoS gain (0 for Rayleigh users).
    pub beta_los: f64,
    /// Linear NLoS gain.
    pub beta_nlos: f64,
    /// LoS indicator.
    pub has_los: bool,
    /// LoS probability used for the indicator draw.
    pub los_probability: f64,
    /// `h_bar` as `[re_0, im_0, re_1, im_1, ...]`.
    pub los_mean: Vec<f64>,
    /// `R` row-major as `[re_00, im_00, re_01, im_01, ...]`.
    pub covariance: Vec<f64>,
}

impl From<&ChannelStats> for ChannelStatsDump {
    fn from(stats: &ChannelStats) -> Self {
        let m = stats.n_tx();
        let mut los_mean = Vec::with_capacity(2 * m);
        for v in stats.los_mean.iter() {
            los_mean.push(v.re);
            los_mean.push(v.im);
        }
        let mut covariance = Vec::with_capacity(2 * m * m);
        for a in 0..m {
            for b in 0..m {
                covariance.push(stats.covariance[(a, b)].re);
                covariance.push(stats.covariance[(a, b)].im);
            }
        }
        Self {
            n_tx: m,
            beta_los: stats.beta_los,
            beta_nlos: stats.beta_nlos,
            has_los: stats.has_los,
            los_probability: stats.los_probability,
            los_mean,
            covariance,
        }
    }
}

impl TryFrom<&ChannelStatsDump> for ChannelStats {
    type Error = ChannelError;

    fn try_from(dump: &ChannelStatsDump) -> Result<Self, ChannelError> {
        let m = dump.n_tx;
        if dump.los_mean.len() != 2 * m || dump.covariance.len() != 2 * m * m {
            return Err(ChannelError::DimensionMismatch(format!(
                "dump arrays do not match n_tx = {m}"
            )));
        }
        let los_mean =
            DVector::from_fn(m, |i, _| C64::new(dump.los_mean[2 * i], dump.los_mean[2 * i + 1]));
        let covariance = DMatrix::from_fn(m, m, |a, b| {
            let k = 2 * (a * m + b);
            C64::new(dump.covariance[k], dump.covariance[k + 1])
        });
        ChannelStats::from_parts(
            los_mean,
            covariance,
            dump.beta_los,
            dump.beta_nlos,
            dump.has_los,
            dump.los_probability,
        )
    }
}

// ---------- Tests ----------
