//! Transferring-likelihood estimators.
//!
//! For one source subpopulation involved in an invasion case, these functions
//! give the probability that a specified number of infected movers crossed
//! each of the source's invasion edges, conditioned on the source's
//! observability class. The three classes use different information:
//!
//! * unobservable sources expose nothing beyond their pre-event count, so the
//!   estimator is a multinomial marginal over the invasion edges with every
//!   untraceable channel (hidden edges plus staying home) lumped together;
//! * observable I->S sources are known to have sent away every infected host,
//!   so the estimator is a multinomial over the confirmed travelers with
//!   relative rates restricted to invasion plus hidden edges;
//! * partially observable sources expose a confirmed drop; the estimator sums
//!   over how many of the arriving movers were confirmed travelers versus
//!   drawn from the remaining pool.
//!
//! Everything is computed in log space via log-gamma so that populations up
//! to millions of hosts stay in range. Values are exact marginals, not
//! normalized posteriors: the Bayes step happens per case, where any constant
//! factor per source cancels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmath::{ln_choose, ln_factorial, pow_ln, LogSumExp};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("allocation total {total} exceeds pre-event count {i_prev}")]
    AllocationTooLarge { total: u64, i_prev: u64 },
    #[error("allocation length {got} does not match {expected} invasion edges")]
    AllocationLength { got: usize, expected: usize },
    #[error("invalid source context: {0}")]
    InvalidContext(String),
}

/// Observability class of a source subpopulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceClass {
    Unobservable,
    PartiallyObservable,
    /// Observable via the I->S transition (every infected host left).
    ObservableItoS,
}

/// Everything the estimators need to know about one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceContext {
    /// Infected count before the event, I(t-1).
    pub i_prev: u64,
    /// Infected count after the event, I(t).
    pub i_now: u64,
    /// Rates of the invasion edges, in destination order.
    pub invasion_rates: Vec<f64>,
    /// Total rate of partially observable and unobservable edges.
    pub hidden_edge_mass: f64,
    /// Residence probability (one minus all outbound rates).
    pub stay_prob: f64,
    /// Total rate of observable edges (known to carry zero infected).
    pub observable_mass: f64,
    pub class: SourceClass,
}

impl SourceContext {
    /// Confirmed reduction in infected hosts.
    pub fn drop(&self) -> u64 {
        self.i_prev.saturating_sub(self.i_now)
    }

    /// Untraceable mass: hidden edges plus staying home.
    pub fn hidden_mass(&self) -> f64 {
        self.hidden_edge_mass + self.stay_prob
    }

    pub fn check(&self) -> Result<(), EstimatorError> {
        if self.invasion_rates.is_empty() {
            return Err(EstimatorError::InvalidContext(
                "no invasion edges".to_string(),
            ));
        }
        if self.i_prev == 0 {
            return Err(EstimatorError::InvalidContext(
                "source had no infected hosts before the event".to_string(),
            ));
        }
        let masses = self.invasion_rates.iter().sum::<f64>()
            + self.hidden_edge_mass
            + self.stay_prob
            + self.observable_mass;
        if self.invasion_rates.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || self.hidden_edge_mass < 0.0
            || self.stay_prob < 0.0
            || self.observable_mass < 0.0
            || masses > 1.0 + 1e-9
        {
            return Err(EstimatorError::InvalidContext(format!(
                "masses out of range (total {masses})"
            )));
        }
        let class_ok = match self.class {
            SourceClass::Unobservable => self.i_now >= self.i_prev,
            SourceClass::PartiallyObservable => self.i_now > 0 && self.i_now < self.i_prev,
            SourceClass::ObservableItoS => self.i_now == 0,
        };
        if !class_ok {
            return Err(EstimatorError::InvalidContext(format!(
                "class {:?} inconsistent with I(t-1)={} I(t)={}",
                self.class, self.i_prev, self.i_now
            )));
        }
        Ok(())
    }
}

/// Log transferring likelihood for a single-invasion-edge source.
pub fn log_omega_single(ctx: &SourceContext, h: u64) -> Result<f64, EstimatorError> {
    ctx.check()?;
    if ctx.invasion_rates.len() != 1 {
        return Err(EstimatorError::AllocationLength {
            got: 1,
            expected: ctx.invasion_rates.len(),
        });
    }
    if h > ctx.i_prev {
        return Err(EstimatorError::AllocationTooLarge {
            total: h,
            i_prev: ctx.i_prev,
        });
    }
    let p = ctx.invasion_rates[0];
    Ok(match ctx.class {
        SourceClass::Unobservable => {
            // C(I_prev, h) p^h hidden^(I_prev - h)
            ln_choose(ctx.i_prev, h) + pow_ln(p, h) + pow_ln(ctx.hidden_mass(), ctx.i_prev - h)
        }
        SourceClass::ObservableItoS => {
            let delta = ctx.drop();
            if h > delta {
                return Ok(f64::NEG_INFINITY);
            }
            let denom = p + ctx.hidden_edge_mass;
            if denom <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            // binomial over the confirmed travelers with relative rates
            ln_choose(delta, h)
                + pow_ln(p / denom, h)
                + pow_ln(ctx.hidden_edge_mass / denom, delta - h)
        }
        SourceClass::PartiallyObservable => {
            let delta = ctx.drop();
            let pool = ctx.i_prev - delta;
            let denom = p + ctx.hidden_edge_mass;
            if denom <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let rel = p / denom;
            let phi_lo = h.saturating_sub(pool);
            let phi_hi = delta.min(h);
            let mut acc = LogSumExp::new();
            // phi = movers that came from the confirmed travelers
            for phi in phi_lo..=phi_hi {
                let confirmed = ln_choose(delta, phi)
                    + pow_ln(rel, phi)
                    + pow_ln(1.0 - rel, delta - phi);
                let sent_from_pool = h - phi;
                let residual = ln_choose(pool, sent_from_pool)
                    + pow_ln(p, sent_from_pool)
                    + pow_ln(ctx.hidden_mass(), pool - sent_from_pool);
                acc.add(confirmed + residual);
            }
            acc.value()
        }
    })
}

/// Transferring likelihood for a single-invasion-edge source.
pub fn omega_single(ctx: &SourceContext, h: u64) -> Result<f64, EstimatorError> {
    log_omega_single(ctx, h).map(f64::exp)
}

/// Log transferring likelihood for a source with any number of invasion
/// edges; `alloc[e]` is the number of movers on invasion edge `e`.
pub fn log_omega_multi(ctx: &SourceContext, alloc: &[u64]) -> Result<f64, EstimatorError> {
    ctx.check()?;
    if alloc.len() != ctx.invasion_rates.len() {
        return Err(EstimatorError::AllocationLength {
            got: alloc.len(),
            expected: ctx.invasion_rates.len(),
        });
    }
    let total: u64 = alloc.iter().sum();
    if total > ctx.i_prev {
        return Err(EstimatorError::AllocationTooLarge {
            total,
            i_prev: ctx.i_prev,
        });
    }
    let rates = &ctx.invasion_rates;
    Ok(match ctx.class {
        SourceClass::Unobservable => {
            // multinomial marginal with all hidden channels lumped
            let eta = ctx.i_prev - total;
            let mut lp = ln_factorial(ctx.i_prev) - ln_factorial(eta);
            lp += pow_ln(ctx.hidden_mass(), eta);
            for (&h, &p) in alloc.iter().zip(rates) {
                lp += pow_ln(p, h) - ln_factorial(h);
            }
            lp
        }
        SourceClass::ObservableItoS => {
            let delta = ctx.drop();
            if total > delta {
                return Ok(f64::NEG_INFINITY);
            }
            let denom: f64 = rates.iter().sum::<f64>() + ctx.hidden_edge_mass;
            if denom <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let mut lp = ln_factorial(delta) - ln_factorial(delta - total);
            lp += pow_ln(ctx.hidden_edge_mass / denom, delta - total);
            for (&h, &p) in alloc.iter().zip(rates) {
                lp += pow_ln(p / denom, h) - ln_factorial(h);
            }
            lp
        }
        SourceClass::PartiallyObservable => {
            let delta = ctx.drop();
            let pool = ctx.i_prev - delta;
            let denom: f64 = rates.iter().sum::<f64>() + ctx.hidden_edge_mass;
            if denom <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let phi_lo = total.saturating_sub(pool);
            let phi_hi = delta.min(total);
            let mut acc = LogSumExp::new();
            let mut split = vec![0u64; alloc.len()];
            for phi in phi_lo..=phi_hi {
                sum_splits(ctx, alloc, phi, delta, pool, denom, 0, &mut split, &mut acc);
            }
            acc.value()
        }
    })
}

/// Transferring likelihood for a multi-invasion-edge source.
pub fn omega_multi(ctx: &SourceContext, alloc: &[u64]) -> Result<f64, EstimatorError> {
    log_omega_multi(ctx, alloc).map(f64::exp)
}

/// Enumerate the ways `phi` confirmed travelers split over invasion edges
/// (bounded per edge by the allocation) and accumulate the combined
/// confirmed-times-residual probability of each split.
#[allow(clippy::too_many_arguments)]
fn sum_splits(
    ctx: &SourceContext,
    alloc: &[u64],
    phi: u64,
    delta: u64,
    pool: u64,
    denom: f64,
    edge: usize,
    split: &mut Vec<u64>,
    acc: &mut LogSumExp,
) {
    if edge == alloc.len() {
        let assigned: u64 = split.iter().sum();
        if assigned != phi {
            return;
        }
        let rates = &ctx.invasion_rates;
        // confirmed travelers: multinomial over invasion edges + hidden lump
        let mut confirmed = ln_factorial(delta) - ln_factorial(delta - phi);
        confirmed += pow_ln(ctx.hidden_edge_mass / denom, delta - phi);
        for (&s, &p) in split.iter().zip(rates) {
            confirmed += pow_ln(p / denom, s) - ln_factorial(s);
        }
        // pool: multinomial over invasion edges + hidden-or-stay lump
        let sent_from_pool: u64 = alloc.iter().zip(split.iter()).map(|(&h, &s)| h - s).sum();
        let eta = pool - sent_from_pool;
        let mut residual = ln_factorial(pool) - ln_factorial(eta);
        residual += pow_ln(ctx.hidden_mass(), eta);
        for ((&h, &s), &p) in alloc.iter().zip(split.iter()).zip(rates) {
            residual += pow_ln(p, h - s) - ln_factorial(h - s);
        }
        acc.add(confirmed + residual);
        return;
    }
    let assigned: u64 = split[..edge].iter().sum();
    let remaining = phi - assigned;
    let cap = alloc[edge].min(remaining);
    for take in 0..=cap {
        split[edge] = take;
        sum_splits(ctx, alloc, phi, delta, pool, denom, edge + 1, split, acc);
    }
    split[edge] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unobservable(i_prev: u64, rates: Vec<f64>, hidden_edge: f64, stay: f64, obs: f64) -> SourceContext {
        SourceContext {
            i_prev,
            i_now: i_prev,
            invasion_rates: rates,
            hidden_edge_mass: hidden_edge,
            stay_prob: stay,
            observable_mass: obs,
            class: SourceClass::Unobservable,
        }
    }

    #[test]
    fn unobservable_single_direct_value() {
        // I_prev=2, p=0.1, hidden mass 0.9, h=1 -> 2 * 0.1 * 0.9 = 0.18
        let ctx = unobservable(2, vec![0.1], 0.4, 0.5, 0.0);
        let v = omega_single(&ctx, 1).unwrap();
        assert!((v - 0.18).abs() < 1e-12, "{v}");
    }

    #[test]
    fn unobservable_single_host_must_cross() {
        let ctx = unobservable(1, vec![0.1], 0.0, 0.9, 0.0);
        let v = omega_single(&ctx, 1).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn observable_relative_rate_binomial() {
        // drop=2, rel=0.5, h=1 -> C(2,1) * 0.5 * 0.5 = 0.5
        let ctx = SourceContext {
            i_prev: 2,
            i_now: 0,
            invasion_rates: vec![0.1],
            hidden_edge_mass: 0.1,
            stay_prob: 0.8,
            observable_mass: 0.0,
            class: SourceClass::ObservableItoS,
        };
        let v = omega_single(&ctx, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn observable_overdraw_is_impossible() {
        let ctx = SourceContext {
            i_prev: 2,
            i_now: 0,
            invasion_rates: vec![0.1],
            hidden_edge_mass: 0.1,
            stay_prob: 0.8,
            observable_mass: 0.0,
            class: SourceClass::ObservableItoS,
        };
        // h = I_prev is allowed; only h > I_prev is a domain error.
        assert!((omega_single(&ctx, 2).unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(
            omega_single(&ctx, 3),
            Err(EstimatorError::AllocationTooLarge { .. })
        ));
    }

    #[test]
    fn partial_single_hand_value() {
        // I_prev=2, drop=1, p=0.2, hidden edges 0.3, stay 0.5, h=1.
        // confirmed -> dest (0.4) * pool stays out (0.8) = 0.32
        // confirmed -> hidden (0.6) * pool -> dest (0.2) = 0.12
        let ctx = SourceContext {
            i_prev: 2,
            i_now: 1,
            invasion_rates: vec![0.2],
            hidden_edge_mass: 0.3,
            stay_prob: 0.5,
            observable_mass: 0.0,
            class: SourceClass::PartiallyObservable,
        };
        let v = omega_single(&ctx, 1).unwrap();
        assert!((v - 0.44).abs() < 1e-12, "{v}");
    }

    #[test]
    fn multi_unobservable_direct_value() {
        // I_prev=2, rates (0.1, 0.1), hidden 0.8, h=(1,1) -> 2! * 0.1 * 0.1 = 0.02
        let ctx = unobservable(2, vec![0.1, 0.1], 0.3, 0.5, 0.0);
        let v = omega_multi(&ctx, &[1, 1]).unwrap();
        assert!((v - 0.02).abs() < 1e-12, "{v}");
    }

    #[test]
    fn multi_reduces_to_single_on_one_edge() {
        let contexts = [
            unobservable(3, vec![0.15], 0.2, 0.6, 0.05),
            SourceContext {
                i_prev: 4,
                i_now: 0,
                invasion_rates: vec![0.12],
                hidden_edge_mass: 0.2,
                stay_prob: 0.6,
                observable_mass: 0.08,
                class: SourceClass::ObservableItoS,
            },
            SourceContext {
                i_prev: 4,
                i_now: 2,
                invasion_rates: vec![0.12],
                hidden_edge_mass: 0.2,
                stay_prob: 0.6,
                observable_mass: 0.08,
                class: SourceClass::PartiallyObservable,
            },
        ];
        for ctx in &contexts {
            for h in 0..=ctx.i_prev {
                let single = log_omega_single(ctx, h).unwrap();
                let multi = log_omega_multi(ctx, &[h]).unwrap();
                assert!(
                    (single - multi).abs() < 1e-12
                        || (single == f64::NEG_INFINITY && multi == f64::NEG_INFINITY),
                    "h={h} single={single} multi={multi}"
                );
            }
        }
    }

    #[test]
    fn unobservable_normalization_identity() {
        // sum over h of omega = (1 - observable_mass)^I_prev
        let ctx = unobservable(5, vec![0.1], 0.25, 0.45, 0.2);
        let total: f64 = (0..=5).map(|h| omega_single(&ctx, h).unwrap()).sum();
        let expected = 0.8f64.powi(5);
        assert!((total - expected).abs() < 1e-12, "{total} vs {expected}");
    }

    #[test]
    fn observable_normalization_to_one() {
        let ctx = SourceContext {
            i_prev: 4,
            i_now: 0,
            invasion_rates: vec![0.07],
            hidden_edge_mass: 0.21,
            stay_prob: 0.6,
            observable_mass: 0.12,
            class: SourceClass::ObservableItoS,
        };
        let total: f64 = (0..=4).map(|h| omega_single(&ctx, h).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn hidden_mass_zero_with_leftover_hosts_is_impossible() {
        let ctx = SourceContext {
            i_prev: 2,
            i_now: 2,
            invasion_rates: vec![0.3],
            hidden_edge_mass: 0.0,
            stay_prob: 0.0,
            observable_mass: 0.7,
            class: SourceClass::Unobservable,
        };
        assert_eq!(omega_single(&ctx, 1).unwrap(), 0.0);
        // all hosts on the invasion edge is still possible
        assert!((omega_single(&ctx, 2).unwrap() - 0.09).abs() < 1e-12);
    }
}
