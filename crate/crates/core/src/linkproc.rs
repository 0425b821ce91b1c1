//! Link processing: precoding, detection vectors, ordering, user rates.
//!
//! The base station transmits one superposed NOMA signal per cluster
//! through the identity precoder `P = I_M` (cluster `m` owns antenna
//! column `m`). A user with `N_r >= M` receive antennas separates the
//! clusters spatially: its detection vector lies in the orthogonal
//! complement of the other clusters' effective columns and is chosen to
//! maximize the retained power of its own column. Within a cluster, users
//! are ranked by that retained *effective gain* and successive
//! interference cancellation (SIC) proceeds strongest-first, so the rate
//! of the user ranked `l` (1-based) with power fractions `omega` is
//!
//! ```text
//! rate_l = log2( 1 + rho*omega_l*gain_l / (1 + rho*gain_l * sum_{k<l} omega_k) ).
//! ```
//!
//! # Example
//!
//! ```
//! use hapsim_core::linkproc::user_rate;
//!
//! // Strongest user, fraction 0.3, rho*gain = 10: log2(1 + 3).
//! let r = user_rate(&[0.3], 1, 10.0, 1.0).unwrap();
//! assert!((r - 2.0).abs() < 1e-12);
//! ```

use crate::C64;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

// ---------- Errors ----------

/// Domain errors for link processing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    /// Cluster count must be at least 1.
    #[error("cluster count must be at least 1")]
    NoClusters,
    /// Spatial nulling needs at least as many receive antennas as clusters.
    #[error("zero-forcing detection needs n_rx >= n_clusters (got {n_rx} < {n_clusters})")]
    TooFewRxAntennas { n_rx: usize, n_clusters: usize },
    /// Column index outside the channel matrix.
    #[error("cluster column {col} outside 0..{n_clusters}")]
    ColumnOutOfRange { col: usize, n_clusters: usize },
    /// The target column is numerically inside the span of the others.
    #[error("degenerate channel: cluster column {col} lies in the span of the other columns (residual ratio {residual_ratio:e})")]
    DegenerateChannel { col: usize, residual_ratio: f64 },
    /// SIC rank outside the cluster.
    #[error("rank {rank} outside 1..={cluster_size}")]
    RankOutOfRange { rank: usize, cluster_size: usize },
    /// Scalar parameter out of domain.
    #[error("{name} must be non-negative and finite (got {value})")]
    InvalidScalar { name: &'static str, value: f64 },
}

// ---------- Precoding and detection ----------

/// Identity precoder: cluster `m`'s beam is transmit antenna `m`.
pub fn precoder(n_clusters: usize) -> Result<DMatrix<C64>, LinkError> {
    if n_clusters < 1 {
        return Err(LinkError::NoClusters);
    }
    Ok(DMatrix::identity(n_clusters, n_clusters))
}

/// Ratio below which the nulling residual counts as degenerate.
const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Zero-forcing detection vector for `cluster_col` of the `n_rx x M`
/// realization `h_matrix` (one row per receive antenna).
///
/// Returns the unit-norm combiner `v` and the effective gain
/// `|v^H h_col|^2`, which equals the squared norm of the component of
/// `h_col` orthogonal to the other columns. The other columns leak nothing:
/// `v^H h_k = 0` for `k != cluster_col` up to round-off.
pub fn detection_vector(
    h_matrix: &DMatrix<C64>,
    cluster_col: usize,
) -> Result<(DVector<C64>, f64), LinkError> {
    let (n_rx, m) = h_matrix.shape();
    if m < 1 {
        return Err(LinkError::NoClusters);
    }
    if cluster_col >= m {
        return Err(LinkError::ColumnOutOfRange {
            col: cluster_col,
            n_clusters: m,
        });
    }
    if n_rx < m {
        return Err(LinkError::TooFewRxAntennas {
            n_rx,
            n_clusters: m,
        });
    }
    let target = h_matrix.column(cluster_col).into_owned();
    let target_norm = target.norm();
    if target_norm == 0.0 {
        return Err(LinkError::DegenerateChannel {
            col: cluster_col,
            residual_ratio: 0.0,
        });
    }
    if m == 1 {
        let gain = target_norm * target_norm;
        return Ok((target / C64::new(target_norm, 0.0), gain));
    }

    // Orthonormal basis of the other columns' span, via Householder QR.
    let others = h_matrix.clone().remove_column(cluster_col);
    let q = others.qr().q();
    // Project out the span twice: the second pass scrubs the O(eps)
    // residual the first leaves behind, keeping leakage at round-off.
    let mut residual = &target - &q * (q.adjoint() * &target);
    residual -= &q * (q.adjoint() * &residual);

    let residual_norm = residual.norm();
    let ratio = residual_norm / target_norm;
    if ratio < DEGENERATE_RESIDUAL {
        return Err(LinkError::DegenerateChannel {
            col: cluster_col,
            residual_ratio: ratio,
        });
    }
    let gain = residual_norm * residual_norm;
    Ok((residual / C64::new(residual_norm, 0.0), gain))
}

// ---------- Cluster ordering ----------

/// One user's spatial link after detection.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLink {
    /// Original (scenario-wide) user index.
    pub user: usize,
    /// Cluster this user belongs to.
    pub cluster: usize,
    /// SIC rank within the cluster, 1 = strongest. Zero until ordered.
    pub rank: usize,
    /// Unit-norm detection combiner.
    pub detection: DVector<C64>,
    /// Effective channel gain `|v^H h_col|^2`.
    pub eff_gain: f64,
}

/// Ranks a cluster's links by descending effective gain (ties keep the
/// lower user index first) and stamps 1-based `rank`s in that order.
pub fn order_cluster(links: &mut [EffectiveLink]) {
    links.sort_by(|a, b| b.eff_gain.total_cmp(&a.eff_gain).then(a.user.cmp(&b.user)));
    for (pos, link) in links.iter_mut().enumerate() {
        link.rank = pos + 1;
    }
}

// ---------- Rates ----------

/// Achievable rate (bps/Hz) of the user ranked `rank` (1-based) in its
/// cluster. `omegas` lists the cluster's power fractions in rank order;
/// only the first `rank` entries are read. Stronger-ranked users' signals
/// are decoded and cancelled, so only fractions `1..rank-1` interfere, and
/// they interfere through this user's own effective gain.
pub fn user_rate(
    omegas: &[f64],
    rank: usize,
    eff_gain: f64,
    rho: f64,
) -> Result<f64, LinkError> {
    if rank < 1 || rank > omegas.len() {
        return Err(LinkError::RankOutOfRange {
            rank,
            cluster_size: omegas.len(),
        });
    }
    if !(eff_gain >= 0.0) || !eff_gain.is_finite() {
        return Err(LinkError::InvalidScalar {
            name: "eff_gain",
            value: eff_gain,
        });
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(LinkError::InvalidScalar {
            name: "rho",
            value: rho,
        });
    }
    for &w in &omegas[..rank] {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(LinkError::InvalidScalar {
                name: "omega",
                value: w,
            });
        }
    }
    let own = omegas[rank - 1];
    let prior: f64 = omegas[..rank - 1].iter().sum();
    Ok((1.0 + rho * own * eff_gain / (1.0 + rho * eff_gain * prior)).log2())
}

// ---------- Tests ----------
