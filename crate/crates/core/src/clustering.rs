//! Correlation-based user clustering.
//!
//! Users whose channel directions are strongly aligned hurt spatial
//! multiplexing but cost nothing when superposed on the same beam, so the
//! grouping rule is: put users with correlation above a threshold into the
//! same NOMA cluster. The greedy pass processes users strongest-first and
//! compares each candidate against cluster *heads* only:
//!
//! 1. sort users by descending norm (ties by index);
//! 2. the first user founds cluster 0 and becomes its head;
//! 3. every later user joins the first non-full cluster whose head
//!    correlates at or above `corr_threshold`, else founds a new cluster;
//! 4. when founding would exceed the cluster budget, the user is assigned
//!    to the non-full cluster with the highest head correlation instead
//!    (the leftover policy; such placements are recorded).
//!
//! # Example
//!
//! ```
//! use hapsim_core::C64;
//! use hapsim_core::clustering::{cluster_users, correlation_coefficient};
//! use nalgebra::DVector;
//!
//! let e0 = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
//! let e1 = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
//! assert_eq!(correlation_coefficient(&e0, &e1).unwrap(), 0.0);
//!
//! let asg = cluster_users(&[e0.clone(), e0.clone(), e1], 0.5, 2, None).unwrap();
//! assert_eq!(asg.n_clusters(), 2); // the two aligned users share a cluster
//! ```

use crate::C64;
use nalgebra::DVector;
use thiserror::Error;

// ---------- Errors ----------

/// Domain errors for the clustering stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    /// At least one user is required.
    #[error("cannot cluster an empty user set")]
    NoUsers,
    /// Channel vectors must share one dimension.
    #[error("channel vectors must share one dimension (got {0} and {1})")]
    DimensionMismatch(usize, usize),
    /// Correlation is undefined against the zero vector.
    #[error("correlation undefined for a zero channel vector (user {0})")]
    ZeroVector(usize),
    /// Threshold must be finite and non-negative.
    #[error("correlation threshold must be finite and non-negative (got {0})")]
    InvalidThreshold(f64),
    /// Cluster size cap must be at least 1.
    #[error("cluster size cap must be at least 1")]
    InvalidCap,
    /// Cluster budget must be at least 1.
    #[error("cluster budget must be at least 1")]
    InvalidBudget,
    /// The budget times the cap cannot hold all users.
    #[error("{n_users} users exceed capacity {max_clusters} clusters x {max_per_cluster} users")]
    CapacityExceeded {
        n_users: usize,
        max_clusters: usize,
        max_per_cluster: usize,
    },
}

// ---------- Correlation ----------

/// Normalized channel correlation `|h_i^H h_j| / (||h_i|| ||h_j||)`,
/// valued in [0, 1]. Phase rotations of either argument do not change it.
pub fn correlation_coefficient(
    hi: &DVector<C64>,
    hj: &DVector<C64>,
) -> Result<f64, ClusterError> {
    if hi.len() != hj.len() {
        return Err(ClusterError::DimensionMismatch(hi.len(), hj.len()));
    }
    let (ni, nj) = (hi.norm(), hj.norm());
    if ni == 0.0 {
        return Err(ClusterError::ZeroVector(0));
    }
    if nj == 0.0 {
        return Err(ClusterError::ZeroVector(1));
    }
    Ok((hi.dotc(hj).norm() / (ni * nj)).min(1.0))
}

// ---------- Assignment ----------

/// Result of the greedy clustering pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// User indices per cluster, head first, in cluster creation order.
    clusters: Vec<Vec<usize>>,
    /// Users placed by the leftover policy (head correlation below the
    /// threshold but no budget left for a new cluster).
    leftover_users: Vec<usize>,
}

impl ClusterAssignment {
    /// Number of clusters formed.
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// User indices of cluster `c`, head first.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.clusters[c]
    }

    /// The head (founding, strongest-norm) user of cluster `c`.
    pub fn head(&self, c: usize) -> usize {
        self.clusters[c][0]
    }

    /// All clusters, head first each, in creation order.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Users placed by the leftover policy.
    pub fn leftover_users(&self) -> &[usize] {
        &self.leftover_users
    }

    /// Cluster index of each user (inverse of `clusters`).
    pub fn cluster_of(&self) -> Vec<usize> {
        let n: usize = self.clusters.iter().map(Vec::len).sum();
        let mut of = vec![usize::MAX; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &u in members {
                of[u] = c;
            }
        }
        of
    }
}

/// Greedy head-correlation clustering of `los_channels`.
///
/// `max_clusters = None` leaves the cluster count unbounded (the leftover
/// policy then never triggers). With a budget, capacity is validated up
/// front so the pass cannot strand a user.
pub fn cluster_users(
    los_channels: &[DVector<C64>],
    corr_threshold: f64,
    max_per_cluster: usize,
    max_clusters: Option<usize>,
) -> Result<ClusterAssignment, ClusterError> {
    let n = los_channels.len();
    if n == 0 {
        return Err(ClusterError::NoUsers);
    }
    if max_per_cluster < 1 {
        return Err(ClusterError::InvalidCap);
    }
    if !corr_threshold.is_finite() || corr_threshold < 0.0 {
        return Err(ClusterError::InvalidThreshold(corr_threshold));
    }
    if let Some(budget) = max_clusters {
        if budget < 1 {
            return Err(ClusterError::InvalidBudget);
        }
        if n > budget * max_per_cluster {
            return Err(ClusterError::CapacityExceeded {
                n_users: n,
                max_clusters: budget,
                max_per_cluster,
            });
        }
    }
    let dim = los_channels[0].len();
    let mut norms = Vec::with_capacity(n);
    for (u, h) in los_channels.iter().enumerate() {
        if h.len() != dim {
            return Err(ClusterError::DimensionMismatch(dim, h.len()));
        }
        let norm = h.norm();
        if norm == 0.0 {
            return Err(ClusterError::ZeroVector(u));
        }
        norms.push(norm);
    }

    // Strongest user first; equal norms keep index order for determinism.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let corr_to_head = |clusters: &[Vec<usize>], c: usize, u: usize| -> f64 {
        let head = clusters[c][0];
        los_channels[head].dotc(&los_channels[u]).norm() / (norms[head] * norms[u])
    };

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut leftover_users = Vec::new();
    for &u in &order {
        let joined = (0..clusters.len()).find(|&c| {
            clusters[c].len() < max_per_cluster && corr_to_head(&clusters, c, u) >= corr_threshold
        });
        match joined {
            Some(c) => clusters[c].push(u),
            None if max_clusters.map_or(true, |b| clusters.len() < b) => {
                clusters.push(vec![u]);
            }
            None => {
                // Leftover policy: best-correlated head among non-full
                // clusters; ties resolve to the lowest cluster index.
                let best = (0..clusters.len())
                    .filter(|&c| clusters[c].len() < max_per_cluster)
                    .max_by(|&a, &b| {
                        corr_to_head(&clusters, a, u)
                            .total_cmp(&corr_to_head(&clusters, b, u))
                            .then(b.cmp(&a))
                    })
                    .ok_or(ClusterError::CapacityExceeded {
                        n_users: n,
                        max_clusters: max_clusters.unwrap_or(usize::MAX),
                        max_per_cluster,
                    })?;
                clusters[best].push(u);
                leftover_users.push(u);
            }
        }
    }
    Ok(ClusterAssignment {
        clusters,
        leftover_users,
    })
}

// ---------- Tests ----------
