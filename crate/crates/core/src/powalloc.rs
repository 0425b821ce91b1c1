//! Two-stage NOMA power allocation under QoS and SIC constraints.
//!
//! Stage one (`primary_allocation`) walks each cluster in SIC order and
//! assigns every user the smallest power fraction that satisfies both its
//! rate target and the received-power gap the receiver needs before it can
//! subtract the previous user's signal:
//!
//! ```text
//! omega_qos_l = (2^R_l - 1) * (sum_{k<l} omega_k + 1/(rho*gain_l))
//! omega_sic_l =               sum_{k<l} omega_k + p_tol/(rho*gain_{l-1})
//! omega_min_l = max(omega_qos_l, omega_sic_l)        (no SIC term at l=1)
//! ```
//!
//! The required power is `p_max * sum(omega_min)`; if it exceeds the budget
//! the problem is infeasible and that is reported as a first-class result.
//!
//! Stage two (`residual_allocation`) pours the leftover budget into the
//! cluster heads. Clusters are ranked by their *fraction level*
//!
//! ```text
//! H_m = p_max * 2^(sum of cluster m rates) / (rho * gain_{m,1})
//! ```
//!
//! and the lowest cluster's head is raised until its level meets the next
//! one, then both are raised together, and so on; once all levels meet,
//! everything rises in lockstep until the budget is gone. For single-user
//! clusters with zero rate targets this is exactly water-filling. Raising a
//! head re-raises its followers' minima (the SIC gap is measured against
//! everything already spent in the cluster), and that cascade cost is paid
//! from the same leftover budget.
//!
//! All powers are noise-normalized: `rho = p_max/sigma^2` and `p_tol` is
//! the tolerance expressed relative to the same noise power, so the SIC gap
//! `rho * gain * (omega_l - sum_{k<l} omega_k) >= p_tol` compares
//! like-for-like quantities.
//!
//! # Example
//!
//! ```
//! use hapsim_core::powalloc::{primary_allocation, residual_allocation, AllocationProblem};
//!
//! // One 2-user cluster and one 1-user cluster, rate target 1 bps/Hz each.
//! let problem = AllocationProblem::new(
//!     vec![vec![8.0, 2.0], vec![4.0]],
//!     vec![vec![1.0, 1.0], vec![1.0]],
//!     1.0,   // rho
//!     1.0,   // p_max, W
//!     10.0,  // p_budget, W
//!     1e-3,  // p_tol (noise-normalized)
//! )
//! .unwrap();
//! let baseline = primary_allocation(&problem).unwrap();
//! let full = residual_allocation(&problem, &baseline).unwrap();
//! assert!(full.sum_rate() >= baseline.sum_rate());
//! full.verify_against(&problem).unwrap();
//! ```

use crate::linkproc::user_rate;
use thiserror::Error;

// ---------- Errors ----------

/// Domain errors for power allocation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    /// The problem must contain at least one cluster.
    #[error("problem must have at least one cluster")]
    EmptyProblem,
    /// Every cluster must contain at least one user.
    #[error("cluster {cluster} has no users")]
    EmptyCluster { cluster: usize },
    /// QoS rows must pair one-to-one with gain rows.
    #[error("qos_rates must have one row per cluster (got {qos_rows}, expected {gain_rows})")]
    QosRowsMismatch { qos_rows: usize, gain_rows: usize },
    /// A QoS row must match its cluster's size.
    #[error("cluster {cluster}: {qos_len} QoS rates for {gain_len} gains")]
    QosShapeMismatch {
        cluster: usize,
        qos_len: usize,
        gain_len: usize,
    },
    /// Gains must be positive and finite.
    #[error("cluster {cluster} gain at position {index} must be positive and finite (got {value})")]
    InvalidGain {
        cluster: usize,
        index: usize,
        value: f64,
    },
    /// Gains must be ordered for SIC (strongest first).
    #[error("cluster {cluster} gains must be nonincreasing (violated at position {index})")]
    GainsNotSorted { cluster: usize, index: usize },
    /// QoS rates must be nonnegative and finite.
    #[error("cluster {cluster} QoS rate at position {index} must be nonnegative and finite (got {value})")]
    InvalidQosRate {
        cluster: usize,
        index: usize,
        value: f64,
    },
    /// Scalar problem parameter out of domain.
    #[error("{name} must be positive and finite (got {value})")]
    InvalidScalar { name: &'static str, value: f64 },
    /// The QoS and SIC minima alone exceed the power budget.
    #[error("minimum required power {p_required:.6e} W exceeds budget {p_budget:.6e} W")]
    Infeasible { p_required: f64, p_budget: f64 },
    /// An allocation failed a posterior constraint check.
    #[error("allocation violates constraint: {what}")]
    InvariantViolation { what: String },
}

// ---------- Problem statement ----------

/// A power allocation instance: per-cluster effective gains in SIC order,
/// per-user rate targets, and the power bookkeeping scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    gains: Vec<Vec<f64>>,
    qos_rates: Vec<Vec<f64>>,
    rho: f64,
    p_max: f64,
    p_budget: f64,
    p_tol: f64,
}

impl AllocationProblem {
    /// Validates and builds a problem.
    ///
    /// `gains[m]` lists cluster `m`'s effective gains nonincreasing (the
    /// SIC decoding order); `qos_rates` has the same shape with rate
    /// targets in bps/Hz (zero allowed). `rho` is the transmit SNR
    /// `p_max/sigma^2`; `p_max` scales fractions to watts; `p_budget` is
    /// the spendable total in watts; `p_tol` is the noise-normalized SIC
    /// power gap.
    pub fn new(
        gains: Vec<Vec<f64>>,
        qos_rates: Vec<Vec<f64>>,
        rho: f64,
        p_max: f64,
        p_budget: f64,
        p_tol: f64,
    ) -> Result<Self, AllocError> {
        if gains.is_empty() {
            return Err(AllocError::EmptyProblem);
        }
        if qos_rates.len() != gains.len() {
            return Err(AllocError::QosRowsMismatch {
                qos_rows: qos_rates.len(),
                gain_rows: gains.len(),
            });
        }
        for (m, (g_row, r_row)) in gains.iter().zip(&qos_rates).enumerate() {
            if g_row.is_empty() {
                return Err(AllocError::EmptyCluster { cluster: m });
            }
            if r_row.len() != g_row.len() {
                return Err(AllocError::QosShapeMismatch {
                    cluster: m,
                    qos_len: r_row.len(),
                    gain_len: g_row.len(),
                });
            }
            for (l, &g) in g_row.iter().enumerate() {
                if !(g > 0.0) || !g.is_finite() {
                    return Err(AllocError::InvalidGain {
                        cluster: m,
                        index: l,
                        value: g,
                    });
                }
                if l > 0 && g > g_row[l - 1] {
                    return Err(AllocError::GainsNotSorted {
                        cluster: m,
                        index: l,
                    });
                }
            }
            for (l, &r) in r_row.iter().enumerate() {
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(AllocError::InvalidQosRate {
                        cluster: m,
                        index: l,
                        value: r,
                    });
                }
            }
        }
        for (name, value) in [
            ("rho", rho),
            ("p_max", p_max),
            ("p_budget", p_budget),
            ("p_tol", p_tol),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(AllocError::InvalidScalar { name, value });
            }
        }
        Ok(Self {
            gains,
            qos_rates,
            rho,
            p_max,
            p_budget,
            p_tol,
        })
    }

    /// Number of clusters.
    pub fn n_clusters(&self) -> usize {
        self.gains.len()
    }

    /// Per-cluster gains, nonincreasing within each cluster.
    pub fn gains(&self) -> &[Vec<f64>] {
        &self.gains
    }

    /// Per-user rate targets, same shape as `gains`.
    pub fn qos_rates(&self) -> &[Vec<f64>] {
        &self.qos_rates
    }

    /// Transmit SNR `p_max/sigma^2`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Power that fraction 1 corresponds to, watts.
    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Total spendable power, watts.
    pub fn p_budget(&self) -> f64 {
        self.p_budget
    }

    /// Noise-normalized SIC power gap.
    pub fn p_tol(&self) -> f64 {
        self.p_tol
    }
}

// ---------- Result record ----------

/// A power split: fractions of `p_max` per user, the stage-one baseline it
/// grew from, and the rates it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Power fractions, same shape as the problem's gains.
    pub omega: Vec<Vec<f64>>,
    /// The stage-one minima the fractions never drop below.
    pub omega_min: Vec<Vec<f64>>,
    /// Power the minima cost, watts.
    pub p_required: f64,
    /// Budget left over after the minima (what stage two distributes), watts.
    pub p_residual: f64,
    /// Achieved per-user rates, bps/Hz, same shape as `omega`.
    pub rates: Vec<Vec<f64>>,
}

impl PowerAllocation {
    /// Total rate over all users, bps/Hz.
    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().flatten().sum()
    }

    /// Total spent power `p_max * sum(omega)`, watts.
    pub fn spent_power(&self, p_max: f64) -> f64 {
        p_max * self.omega.iter().flatten().sum::<f64>()
    }

    /// Re-checks every constraint of the allocation problem on this
    /// allocation: shape, nonnegativity, the power budget (1e-9 W slack),
    /// per-user rate targets (1e-9 bps/Hz slack), the SIC power gap
    /// (1e-9 slack in noise-normalized units), SIC ordering, and that the
    /// stored rates match the fractions (1e-9).
    pub fn verify_against(&self, p: &AllocationProblem) -> Result<(), AllocError> {
        let fail = |what: String| Err(AllocError::InvariantViolation { what });
        if self.omega.len() != p.n_clusters() {
            return fail(format!(
                "omega has {} clusters, problem has {}",
                self.omega.len(),
                p.n_clusters()
            ));
        }
        for (m, row) in self.omega.iter().enumerate() {
            if row.len() != p.gains[m].len() {
                return fail(format!("cluster {m}: omega length mismatch"));
            }
            for (l, &w) in row.iter().enumerate() {
                if !(w >= 0.0) || !w.is_finite() {
                    return fail(format!("cluster {m} user {l}: fraction {w} out of domain"));
                }
            }
        }
        let spent = self.spent_power(p.p_max);
        if spent > p.p_budget + 1e-9 {
            return fail(format!(
                "spent {spent:.12e} W exceeds budget {:.12e} W",
                p.p_budget
            ));
        }
        for (m, row) in self.omega.iter().enumerate() {
            let mut prior = 0.0;
            for (l, &w) in row.iter().enumerate() {
                let rate = user_rate(row, l + 1, p.gains[m][l], p.rho)
                    .expect("validated problem yields valid rate inputs");
                if (rate - self.rates[m][l]).abs() > 1e-9 {
                    return fail(format!(
                        "cluster {m} user {l}: stored rate {} != recomputed {rate}",
                        self.rates[m][l]
                    ));
                }
                if rate < p.qos_rates[m][l] - 1e-9 {
                    return fail(format!(
                        "cluster {m} user {l}: rate {rate} below target {}",
                        p.qos_rates[m][l]
                    ));
                }
                if l > 0 {
                    // Gap the previous user's receiver sees between this
                    // signal and everything already decoded, noise units.
                    // Recomputing the gap as w - prior cancels two numbers
                    // that can dwarf the gap itself, so the slack must
                    // cover the representation error rho*gain*eps*prior
                    // on top of the solver tolerance.
                    let rg = p.rho * p.gains[m][l - 1];
                    let margin = rg * (w - prior);
                    let slack = 1e-9 * (1.0 + p.p_tol) + 8.0 * f64::EPSILON * rg * prior.max(w);
                    if margin < p.p_tol - slack {
                        return fail(format!(
                            "cluster {m} user {l}: SIC margin {margin:.6e} below {:.6e}",
                            p.p_tol
                        ));
                    }
                    if w < prior {
                        return fail(format!(
                            "cluster {m} user {l}: fraction {w} below prior sum {prior}"
                        ));
                    }
                }
                prior += w;
            }
        }
        Ok(())
    }
}

// ---------- Stage one: minimum-feasible coefficients ----------

/// Smallest fraction meeting the rate target `r_qos` for a user whose
/// predecessors hold `prior_omegas`, if interference equals that prior sum:
/// `(2^r_qos - 1) * (sum(prior) + 1/(rho*gain_l))`.
pub fn min_qos_coeff(prior_omegas: &[f64], gain_l: f64, rho: f64, r_qos: f64) -> f64 {
    let prior: f64 = prior_omegas.iter().sum();
    (r_qos.exp2() - 1.0) * (prior + 1.0 / (rho * gain_l))
}

/// Smallest fraction letting the previous (stronger) user subtract this
/// signal with a received-power gap of `p_tol`:
/// `sum(prior) + p_tol/(rho*gain_prev)`.
///
/// `p_max` is part of the interface because the gap can equivalently be
/// written against received power (`p_tol_watts/(p_max*gain)`); under the
/// noise normalization used here the budget scale already lives inside
/// `rho`, so the value does not enter the formula.
pub fn min_sic_coeff(
    prior_omegas: &[f64],
    gain_prev: f64,
    rho: f64,
    p_tol: f64,
    p_max: f64,
) -> f64 {
    let _ = p_max;
    let prior: f64 = prior_omegas.iter().sum();
    prior + p_tol / (rho * gain_prev)
}

/// Rebuilds one cluster's fractions from a fixed head: followers take
/// their QoS/SIC minimum given everything above them.
fn rebuild_from_head(p: &AllocationProblem, m: usize, head: f64) -> Vec<f64> {
    let g = &p.gains[m];
    let r = &p.qos_rates[m];
    let mut row = Vec::with_capacity(g.len());
    row.push(head);
    for l in 1..g.len() {
        let q = min_qos_coeff(&row, g[l], p.rho, r[l]);
        let s = min_sic_coeff(&row, g[l - 1], p.rho, p.p_tol, p.p_max);
        row.push(q.max(s));
    }
    row
}

fn rates_for(p: &AllocationProblem, omega: &[Vec<f64>]) -> Vec<Vec<f64>> {
    omega
        .iter()
        .enumerate()
        .map(|(m, row)| {
            (0..row.len())
                .map(|l| {
                    user_rate(row, l + 1, p.gains[m][l], p.rho)
                        .expect("validated problem yields valid rate inputs")
                })
                .collect()
        })
        .collect()
}

/// Stage one: per cluster, sequentially assigns each user
/// `max(omega_qos, omega_sic)` (the SIC term from rank 2 on). Errors with
/// [`AllocError::Infeasible`] carrying the required power when the minima
/// alone exceed the budget.
pub fn primary_allocation(p: &AllocationProblem) -> Result<PowerAllocation, AllocError> {
    let mut omega_min = Vec::with_capacity(p.n_clusters());
    for m in 0..p.n_clusters() {
        let g = &p.gains[m];
        let r = &p.qos_rates[m];
        let mut row: Vec<f64> = Vec::with_capacity(g.len());
        let head = min_qos_coeff(&row, g[0], p.rho, r[0]);
        row.push(head);
        for l in 1..g.len() {
            let q = min_qos_coeff(&row, g[l], p.rho, r[l]);
            let s = min_sic_coeff(&row, g[l - 1], p.rho, p.p_tol, p.p_max);
            row.push(q.max(s));
        }
        omega_min.push(row);
    }
    let p_required = p.p_max * omega_min.iter().flatten().sum::<f64>();
    if p_required > p.p_budget {
        return Err(AllocError::Infeasible {
            p_required,
            p_budget: p.p_budget,
        });
    }
    let rates = rates_for(p, &omega_min);
    Ok(PowerAllocation {
        omega: omega_min.clone(),
        omega_min,
        p_required,
        p_residual: p.p_budget - p_required,
        rates,
    })
}

// ---------- Stage two: fraction-level residual distribution ----------

/// The budget-like level `p_max * 2^(sum of rates) / (rho*gain_head)` used
/// to rank clusters for residual power. `rates` are one cluster's current
/// per-user rates in bps/Hz.
pub fn fraction_level(rates: &[f64], gain_head: f64, rho: f64, p_max: f64) -> f64 {
    p_max * rates.iter().sum::<f64>().exp2() / (rho * gain_head)
}

fn cluster_rate_sum(p: &AllocationProblem, m: usize, row: &[f64]) -> f64 {
    (0..row.len())
        .map(|l| {
            user_rate(row, l + 1, p.gains[m][l], p.rho)
                .expect("validated problem yields valid rate inputs")
        })
        .sum()
}

fn level_of(p: &AllocationProblem, m: usize, row: &[f64]) -> f64 {
    p.p_max * cluster_rate_sum(p, m, row).exp2() / (p.rho * p.gains[m][0])
}

/// Bisection passes: enough to pin heads to machine precision, which the
/// 1e-6 level-equality and 1e-9 budget tolerances both need headroom under.
const BISECT_ITERS: usize = 100;

/// Raises cluster `m`'s head until the cluster's fraction level reaches
/// `target`, rebuilding followers at each probe. No-op if already there.
fn raise_to_level(p: &AllocationProblem, m: usize, row: &[f64], target: f64) -> Vec<f64> {
    if level_of(p, m, row) >= target {
        return row.to_vec();
    }
    let rg = p.rho * p.gains[m][0];
    let mut lo = row[0];
    // Follower rates are nonnegative, so the head value whose own rate
    // alone produces `target` always overshoots: a guaranteed upper end.
    let mut hi = ((target * rg / p.p_max - 1.0) / rg).max(lo);
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if level_of(p, m, &rebuild_from_head(p, m, mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    rebuild_from_head(p, m, hi)
}

/// Cost in fraction units of raising every cluster in `set` to `target`,
/// along with the rebuilt rows.
fn raise_set(
    p: &AllocationProblem,
    omega: &[Vec<f64>],
    set: &[usize],
    target: f64,
) -> (f64, Vec<(usize, Vec<f64>)>) {
    let mut cost = 0.0;
    let mut rows = Vec::with_capacity(set.len());
    for &m in set {
        let new_row = raise_to_level(p, m, &omega[m], target);
        cost += new_row.iter().sum::<f64>() - omega[m].iter().sum::<f64>();
        rows.push((m, new_row));
    }
    (cost, rows)
}

/// Largest common target level in `[t_lo, t_hi]` whose raise cost stays
/// within `budget` fraction units; returns the committed rows (cost never
/// above `budget`).
fn raise_set_within_budget(
    p: &AllocationProblem,
    omega: &[Vec<f64>],
    set: &[usize],
    mut t_lo: f64,
    mut t_hi: f64,
    budget: f64,
) -> Vec<(usize, Vec<f64>)> {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (t_lo + t_hi);
        let (cost, _) = raise_set(p, omega, set, mid);
        if cost <= budget {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    raise_set(p, omega, set, t_lo).1
}

/// Stage two: distributes `baseline.p_residual` by fraction-level
/// equalization. Clusters are sorted by level ascending; the lowest is
/// raised to the second-lowest, those two to the third, and so on, each
/// raise rebuilding the followers and paying for them; whatever survives
/// the last level lifts all clusters in lockstep. A step the leftover
/// cannot fully fund is cut down by bisection so the budget is exhausted
/// with all raised clusters at one common level.
pub fn residual_allocation(
    p: &AllocationProblem,
    baseline: &PowerAllocation,
) -> Result<PowerAllocation, AllocError> {
    if baseline.p_residual < 0.0 {
        return Err(AllocError::Infeasible {
            p_required: baseline.p_required,
            p_budget: p.p_budget,
        });
    }
    if baseline.p_residual == 0.0 {
        return Ok(baseline.clone());
    }
    let mut omega = baseline.omega.clone();
    let mut rem = baseline.p_residual / p.p_max;

    let levels: Vec<f64> = (0..p.n_clusters())
        .map(|m| level_of(p, m, &omega[m]))
        .collect();
    let mut order: Vec<usize> = (0..p.n_clusters()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]).then(a.cmp(&b)));

    let commit = |omega: &mut Vec<Vec<f64>>, rows: Vec<(usize, Vec<f64>)>| {
        for (m, row) in rows {
            omega[m] = row;
        }
    };

    let mut exhausted = false;
    let mut reached = levels[order[0]];
    for i in 1..order.len() {
        let target = levels[order[i]];
        let set = &order[..i];
        let (cost, rows) = raise_set(p, &omega, set, target);
        if cost <= rem {
            commit(&mut omega, rows);
            rem -= cost;
            reached = target;
        } else {
            let rows = raise_set_within_budget(p, &omega, set, reached, target, rem);
            commit(&mut omega, rows);
            exhausted = true;
            break;
        }
    }

    if !exhausted {
        // All levels met; lift every cluster together until the leftover
        // runs out. Doubling the target grows the cost without bound, so a
        // bracket always appears.
        rem = rem.max(0.0);
        if rem > 0.0 {
            let t_lo = (0..p.n_clusters())
                .map(|m| level_of(p, m, &omega[m]))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut t_hi = t_lo * 2.0;
            while raise_set(p, &omega, &order, t_hi).0 < rem {
                t_hi *= 2.0;
            }
            let rows = raise_set_within_budget(p, &omega, &order, t_lo, t_hi, rem);
            commit(&mut omega, rows);
        }
    }

    let rates = rates_for(p, &omega);
    Ok(PowerAllocation {
        omega,
        omega_min: baseline.omega_min.clone(),
        p_required: baseline.p_required,
        p_residual: baseline.p_residual,
        rates,
    })
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn simple_problem(p_budget: f64) -> AllocationProblem {
        AllocationProblem::new(
            vec![vec![8.0, 2.0], vec![4.0, 1.0]],
            vec![vec![1.0; 2]; 2],
            1.0,
            1.0,
            p_budget,
            1e-3,
        )
        .unwrap()
    }

    fn random_problem<R: Rng>(
        rng: &mut R,
        m: usize,
        l: usize,
        qos: f64,
        budget_scale: f64,
    ) -> AllocationProblem {
        let gains: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let mut g: Vec<f64> = (0..l).map(|_| 10f64.powf(rng.gen_range(-1.0..2.0))).collect();
                g.sort_by(|a, b| b.total_cmp(a));
                g
            })
            .collect();
        let qos_rates = vec![vec![qos; l]; m];
        // Budget pegged to the stage-one requirement keeps instances feasible.
        let probe = AllocationProblem::new(gains.clone(), qos_rates.clone(), 1.0, 1.0, 1e12, 1e-3)
            .unwrap();
        let p_req = primary_allocation(&probe).unwrap().p_required;
        AllocationProblem::new(gains, qos_rates, 1.0, 1.0, p_req * budget_scale, 1e-3).unwrap()
    }

    #[test]
    fn test_problem_validation() {
        let ok = |g: Vec<Vec<f64>>, r: Vec<Vec<f64>>| AllocationProblem::new(g, r, 1.0, 1.0, 1.0, 1.0);
        assert!(matches!(ok(vec![], vec![]), Err(AllocError::EmptyProblem)));
        assert!(matches!(
            ok(vec![vec![]], vec![vec![]]),
            Err(AllocError::EmptyCluster { cluster: 0 })
        ));
        assert!(matches!(
            ok(vec![vec![1.0]], vec![]),
            Err(AllocError::QosRowsMismatch { .. })
        ));
        assert!(matches!(
            ok(vec![vec![1.0]], vec![vec![1.0, 2.0]]),
            Err(AllocError::QosShapeMismatch { .. })
        ));
        assert!(matches!(
            ok(vec![vec![1.0, 0.0]], vec![vec![0.0, 0.0]]),
            Err(AllocError::InvalidGain { index: 1, .. })
        ));
        assert!(matches!(
            ok(vec![vec![1.0, 2.0]], vec![vec![0.0, 0.0]]),
            Err(AllocError::GainsNotSorted { index: 1, .. })
        ));
        assert!(matches!(
            ok(vec![vec![1.0]], vec![vec![-0.5]]),
            Err(AllocError::InvalidQosRate { .. })
        ));
        assert!(matches!(
            AllocationProblem::new(vec![vec![1.0]], vec![vec![0.0]], 0.0, 1.0, 1.0, 1.0),
            Err(AllocError::InvalidScalar { name: "rho", .. })
        ));
        assert!(matches!(
            AllocationProblem::new(vec![vec![1.0]], vec![vec![0.0]], 1.0, 1.0, 1.0, 0.0),
            Err(AllocError::InvalidScalar { name: "p_tol", .. })
        ));
        // Equal gains are legal (nonincreasing, not strictly decreasing).
        assert!(ok(vec![vec![2.0, 2.0]], vec![vec![0.0, 0.0]]).is_ok());
    }

    #[test]
    fn test_min_qos_coeff_examples() {
        // Head user, target 2 bps/Hz, rho*gain = 1: (2^2-1)*(0+1) = 3.
        assert_relative_eq!(min_qos_coeff(&[], 1.0, 1.0, 2.0), 3.0, max_relative = 1e-15);
        // Zero target costs nothing.
        assert_eq!(min_qos_coeff(&[], 1.0, 1.0, 0.0), 0.0);
        // Second user: 3*(0.1 + 0.01) = 0.33, and the rate closes exactly.
        let w2 = min_qos_coeff(&[0.1], 100.0, 1.0, 2.0);
        assert_relative_eq!(w2, 0.33, max_relative = 1e-14);
        let rate = user_rate(&[0.1, w2], 2, 100.0, 1.0).unwrap();
        assert_relative_eq!(rate, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn test_min_sic_coeff_examples() {
        // Priors 0.3 plus a 0.05 tolerance term.
        assert_relative_eq!(
            min_sic_coeff(&[0.2, 0.1], 20.0, 1.0, 1.0, 1.0),
            0.35,
            max_relative = 1e-15
        );
        // Vanishing tolerance leaves just the priors.
        assert_relative_eq!(
            min_sic_coeff(&[0.2, 0.1], 20.0, 1.0, 1e-300, 1.0),
            0.3,
            max_relative = 1e-15
        );
        // rho*gain = 1000, tolerance 1: 0.3 + 1e-3, and the received-power
        // gap at that fraction is exactly the tolerance.
        let w = min_sic_coeff(&[0.3], 1000.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(w, 0.301, max_relative = 1e-15);
        let gap = 1.0 * 1000.0 * (w - 0.3);
        assert_relative_eq!(gap, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn test_primary_single_user_worked_example() {
        // (2^2-1)/(rho*gain=3) = 1: the whole budget, exactly feasible.
        let p = AllocationProblem::new(
            vec![vec![3.0]],
            vec![vec![2.0]],
            1.0,
            1.0,
            1.0 + 1e-12,
            1e-6,
        )
        .unwrap();
        let a = primary_allocation(&p).unwrap();
        assert_relative_eq!(a.omega[0][0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(a.p_required, 1.0, max_relative = 1e-14);
        assert_relative_eq!(a.rates[0][0], 2.0, max_relative = 1e-12);

        // Shrink the budget below the requirement: first-class infeasibility.
        let tight = AllocationProblem::new(vec![vec![3.0]], vec![vec![2.0]], 1.0, 1.0, 0.9, 1e-6)
            .unwrap();
        match primary_allocation(&tight) {
            Err(AllocError::Infeasible { p_required, p_budget }) => {
                assert_relative_eq!(p_required, 1.0, max_relative = 1e-14);
                assert_eq!(p_budget, 0.9);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn test_primary_zero_targets_cost_almost_nothing() {
        let p = AllocationProblem::new(
            vec![vec![5.0, 2.0], vec![3.0, 1.0]],
            vec![vec![0.0; 2]; 2],
            1.0,
            1.0,
            1.0,
            1e-300,
        )
        .unwrap();
        let a = primary_allocation(&p).unwrap();
        assert_eq!(a.omega[0][0], 0.0);
        assert_eq!(a.omega[1][0], 0.0);
        assert!(a.p_required < 1e-290);
    }

    #[test]
    fn test_primary_every_user_pinned_to_binding_constraint() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_problem(&mut rng, 2, 2, 2.0, 2.0);
            let a = primary_allocation(&p).unwrap();
            a.verify_against(&p).unwrap();
            for m in 0..2 {
                for l in 0..2 {
                    let rate = a.rates[m][l];
                    assert!(rate >= 2.0 - 1e-9, "rate {rate} below target");
                    let prior: f64 = a.omega[m][..l].iter().sum();
                    if l == 0 {
                        // Heads have no SIC bound: QoS binds exactly.
                        assert_relative_eq!(rate, 2.0, max_relative = 1e-9);
                    } else {
                        let margin = p.rho() * p.gains()[m][l - 1] * (a.omega[m][l] - prior);
                        let qos_binding = (rate - 2.0).abs() <= 1e-9;
                        let sic_binding = (margin - p.p_tol()).abs() <= 1e-9 * p.p_tol().max(1.0);
                        assert!(
                            qos_binding || sic_binding,
                            "neither constraint binds: rate {rate}, margin {margin:e}"
                        );
                        assert!(margin >= p.p_tol() - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn test_fraction_level_examples() {
        // All rates zero, p_max = rho, gain 1: 2^0 = 1.
        assert_relative_eq!(fraction_level(&[0.0, 0.0], 1.0, 2.0, 2.0), 1.0, max_relative = 1e-15);
        // Rates summing to 2 quadruple the all-zero value.
        let base = fraction_level(&[0.0], 3.0, 5.0, 7.0);
        assert_relative_eq!(
            fraction_level(&[1.5, 0.5], 3.0, 5.0, 7.0),
            4.0 * base,
            max_relative = 1e-14
        );
        // Equal rate sums, head gains 1 and 4: levels in ratio 4:1.
        let a = fraction_level(&[1.0, 1.0], 1.0, 2.0, 3.0);
        let b = fraction_level(&[0.5, 1.5], 4.0, 2.0, 3.0);
        assert_relative_eq!(a / b, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn test_residual_zero_leftover_returns_baseline_exactly() {
        let p = AllocationProblem::new(
            vec![vec![3.0]],
            vec![vec![2.0]],
            1.0,
            1.0,
            1.0 + 1e-12,
            1e-6,
        )
        .unwrap();
        let mut base = primary_allocation(&p).unwrap();
        base.p_residual = 0.0; // pin the leftover to exactly zero
        let full = residual_allocation(&p, &base).unwrap();
        assert_eq!(full, base);
    }

    #[test]
    fn test_residual_symmetric_clusters_split_evenly() {
        let p = AllocationProblem::new(
            vec![vec![6.0, 2.0], vec![6.0, 2.0]],
            vec![vec![1.0; 2]; 2],
            1.0,
            1.0,
            5.0,
            1e-3,
        )
        .unwrap();
        let base = primary_allocation(&p).unwrap();
        let full = residual_allocation(&p, &base).unwrap();
        full.verify_against(&p).unwrap();
        assert_relative_eq!(full.omega[0][0], full.omega[1][0], max_relative = 1e-9);
        let r0: f64 = full.rates[0].iter().sum();
        let r1: f64 = full.rates[1].iter().sum();
        assert_relative_eq!(r0, r1, max_relative = 1e-9);
        // The whole budget went out.
        assert_relative_eq!(full.spent_power(p.p_max()), p.p_budget(), epsilon = 1e-9);
    }

    #[test]
    fn test_residual_single_user_clusters_match_water_filling_grid() {
        // Two single-user clusters, no rate targets: textbook water-filling.
        let p = AllocationProblem::new(
            vec![vec![9.0], vec![2.0]],
            vec![vec![0.0], vec![0.0]],
            1.0,
            1.0,
            1.0,
            1e-9,
        )
        .unwrap();
        let base = primary_allocation(&p).unwrap();
        let full = residual_allocation(&p, &base).unwrap();
        full.verify_against(&p).unwrap();

        // Brute-force grid over the split (full spend is always optimal).
        let budget = p.p_budget() / p.p_max();
        let mut best = f64::NEG_INFINITY;
        let n = 10_000;
        for k in 0..=n {
            let wa = budget * k as f64 / n as f64;
            let wb = budget - wa;
            let sum = (1.0 + p.rho() * 9.0 * wa).log2() + (1.0 + p.rho() * 2.0 * wb).log2();
            if sum > best {
                best = sum;
            }
        }
        assert!(
            (full.sum_rate() - best).abs() < 1e-3,
            "water-filling sum {} vs grid {}",
            full.sum_rate(),
            best
        );
        assert!(full.sum_rate() >= best - 1e-3);

        // Analytic water level: omega + 1/(rho*gain) equal across clusters.
        let la = full.omega[0][0] + 1.0 / 9.0;
        let lb = full.omega[1][0] + 1.0 / 2.0;
        assert_relative_eq!(la, lb, max_relative = 1e-6);
    }

    #[test]
    fn test_residual_invariants_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for trial in 0..50 {
            let p = random_problem(&mut rng, 3, 2, 1.0, 1.5);
            let base = primary_allocation(&p).unwrap();
            let full = residual_allocation(&p, &base).unwrap();
            full.verify_against(&p)
                .unwrap_or_else(|e| panic!("trial {trial}: {e}"));

            // Spend exactly the budget (the final lockstep raise exhausts it).
            assert!(
                (full.spent_power(p.p_max()) - p.p_budget()).abs() <= 1e-9,
                "trial {trial}: spent {} of {}",
                full.spent_power(p.p_max()),
                p.p_budget()
            );
            // Monotone improvement and floor at the stage-one minima.
            assert!(full.sum_rate() >= base.sum_rate() - 1e-12);
            for m in 0..3 {
                for l in 0..2 {
                    assert!(full.omega[m][l] >= base.omega_min[m][l] - 1e-15);
                }
            }
            // Raised clusters share one level; untouched ones sit above it.
            let levels: Vec<f64> = (0..3).map(|m| level_of(&p, m, &full.omega[m])).collect();
            let raised: Vec<usize> = (0..3)
                .filter(|&m| full.omega[m][0] > base.omega[m][0] + 1e-12)
                .collect();
            if raised.len() > 1 {
                let l0 = levels[raised[0]];
                for &m in &raised[1..] {
                    assert_relative_eq!(levels[m], l0, max_relative = 1e-6);
                }
            }
            if let Some(&any) = raised.first() {
                let common = levels[any];
                for m in 0..3 {
                    if !raised.contains(&m) {
                        assert!(
                            levels[m] >= common * (1.0 - 1e-6),
                            "trial {trial}: untouched cluster {m} below the common level"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn test_residual_sum_rate_monotone_in_budget() {
        let p_of = |budget: f64| {
            AllocationProblem::new(
                vec![vec![8.0, 2.0], vec![4.0, 1.0], vec![2.5, 0.5]],
                vec![vec![0.5; 2]; 3],
                1.0,
                1.0,
                budget,
                1e-3,
            )
            .unwrap()
        };
        let mut last = f64::NEG_INFINITY;
        for k in 0..8 {
            let p = p_of(2.0 + k as f64);
            let full = residual_allocation(&p, &primary_allocation(&p).unwrap()).unwrap();
            assert!(
                full.sum_rate() >= last - 1e-12,
                "sum rate fell from {last} at budget {}",
                p.p_budget()
            );
            last = full.sum_rate();
        }
    }

    #[test]
    fn test_residual_sum_rate_monotone_in_qos() {
        let p_of = |qos: f64| {
            AllocationProblem::new(
                vec![vec![8.0, 2.0], vec![4.0, 1.0]],
                vec![vec![qos; 2]; 2],
                1.0,
                1.0,
                6.0,
                1e-3,
            )
            .unwrap()
        };
        let mut last = f64::INFINITY;
        for k in 0..=6 {
            let p = p_of(0.25 * k as f64);
            let full = residual_allocation(&p, &primary_allocation(&p).unwrap()).unwrap();
            assert!(
                full.sum_rate() <= last + 1e-12,
                "sum rate rose to {} as QoS tightened",
                full.sum_rate()
            );
            last = full.sum_rate();
        }
    }

    #[test]
    fn test_verify_against_catches_violations() {
        let p = simple_problem(5.0);
        let good = residual_allocation(&p, &primary_allocation(&p).unwrap()).unwrap();
        good.verify_against(&p).unwrap();

        let mut over = good.clone();
        over.omega[0][0] += 10.0;
        assert!(matches!(
            over.verify_against(&p),
            Err(AllocError::InvariantViolation { .. })
        ));

        let mut starved = good.clone();
        starved.omega[0][1] = 0.0;
        assert!(starved.verify_against(&p).is_err());

        let mut lied = good.clone();
        lied.rates[0][0] += 0.5;
        assert!(lied.verify_against(&p).is_err());
    }
}
