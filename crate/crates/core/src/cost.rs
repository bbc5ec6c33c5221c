//! Adaptive transition cost.
//!
//! ```text
//! c(t) = mde(t) + P(t) C + (1 - P(t)) e_hat(t)
//! ```
//!
//! `P` chains the executed transitions in descending similarity order, each
//! one contributing its label weighted by its similarity and by the mass
//! left over from the more similar ones. `e_hat` is the similarity-weighted
//! mean of observed errors. Both are zero for an empty store, so the first
//! planning minimizes the plain MDE.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::context::{similarity_from_distance, ContextVector};
use crate::deviation::{ExecutedTransition, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// `c = mde`.
    MdeOnly,
    /// Full adaptive cost.
    #[default]
    Adaptive,
}

#[derive(Debug, Clone)]
pub struct CostModel {
    pub penalty: f64,
    pub mode: CostMode,
    executed: Arc<Vec<ExecutedTransition>>,
}

/// Intermediate terms of one cost evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub mde: f64,
    pub p_anomaly: f64,
    pub e_hat: f64,
    pub total: f64,
}

impl CostModel {
    pub const DEFAULT_PENALTY: f64 = 10.0;

    pub fn new(penalty: f64, mode: CostMode) -> Self {
        assert!(penalty > 0.0 && penalty.is_finite(), "penalty must be positive");
        Self {
            penalty,
            mode,
            executed: Arc::new(Vec::new()),
        }
    }

    /// Replaces the executed store. Labels must already be current.
    pub fn with_executed(mut self, executed: Vec<ExecutedTransition>) -> Self {
        self.executed = Arc::new(executed);
        self
    }

    pub fn set_executed(&mut self, executed: Arc<Vec<ExecutedTransition>>) {
        self.executed = executed;
    }

    pub fn executed(&self) -> &[ExecutedTransition] {
        &self.executed
    }

    fn similarities(&self, ctx: &ContextVector) -> Vec<f64> {
        self.executed
            .iter()
            .map(|e| similarity_from_distance(ctx.dist(&e.base.context)))
            .collect()
    }

    pub fn p_anomaly(&self, tau: &Transition) -> f64 {
        let s = self.similarities(&tau.context);
        let labels: Vec<bool> = self.executed.iter().map(|e| e.label).collect();
        p_anomaly_from(&s, &labels)
    }

    pub fn e_hat(&self, tau: &Transition) -> f64 {
        let s = self.similarities(&tau.context);
        let errors: Vec<f64> = self.executed.iter().map(|e| e.error).collect();
        e_hat_from(&s, &errors)
    }

    pub fn breakdown(&self, tau: &Transition) -> CostBreakdown {
        if self.mode == CostMode::MdeOnly || self.executed.is_empty() {
            return CostBreakdown {
                mde: tau.mde,
                p_anomaly: 0.0,
                e_hat: 0.0,
                total: tau.mde,
            };
        }
        let s = self.similarities(&tau.context);
        let labels: Vec<bool> = self.executed.iter().map(|e| e.label).collect();
        let errors: Vec<f64> = self.executed.iter().map(|e| e.error).collect();
        let p = p_anomaly_from(&s, &labels);
        let e = e_hat_from(&s, &errors);
        CostBreakdown {
            mde: tau.mde,
            p_anomaly: p,
            e_hat: e,
            total: combine(tau.mde, p, e, self.penalty),
        }
    }

    pub fn cost(&self, tau: &Transition) -> f64 {
        self.breakdown(tau).total
    }
}

pub fn combine(mde: f64, p_anomaly: f64, e_hat: f64, penalty: f64) -> f64 {
    mde + p_anomaly * penalty + (1.0 - p_anomaly) * e_hat
}

/// Chained anomaly probability from raw similarities and labels (store order).
/// Ties in similarity keep store order.
pub fn p_anomaly_from(similarities: &[f64], labels: &[bool]) -> f64 {
    debug_assert_eq!(similarities.len(), labels.len());
    let mut order: Vec<usize> = (0..similarities.len()).collect();
    order.sort_by(|&a, &b| {
        similarities[b]
            .partial_cmp(&similarities[a])
            .unwrap_or(Ordering::Equal)
    });
    let mut remaining = 1.0;
    let mut p = 0.0;
    for i in order {
        let s = similarities[i];
        if labels[i] {
            p += remaining * s;
        }
        remaining *= 1.0 - s;
    }
    p.clamp(0.0, 1.0)
}

pub fn e_hat_from(similarities: &[f64], errors: &[f64]) -> f64 {
    debug_assert_eq!(similarities.len(), errors.len());
    let wsum: f64 = similarities.iter().sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    similarities.iter().zip(errors).map(|(s, e)| s * e).sum::<f64>() / wsum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::GridSpec;
    use crate::deviation::DriftMde;
    use crate::world2d::{Control, Rect, State, World};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn p_anomaly_examples() {
        assert_eq!(p_anomaly_from(&[], &[]), 0.0);
        assert!(close(p_anomaly_from(&[0.8], &[true]), 0.8));
        assert!(close(p_anomaly_from(&[0.9, 0.5], &[false, true]), 0.05));
        // unsorted input gives the same answer
        assert!(close(p_anomaly_from(&[0.5, 0.9], &[true, false]), 0.05));
        assert_eq!(p_anomaly_from(&[1.0, 0.3], &[true, false]), 1.0);
        assert_eq!(p_anomaly_from(&[0.7, 0.3, 0.9], &[false; 3]), 0.0);
    }

    #[test]
    fn e_hat_examples() {
        assert_eq!(e_hat_from(&[], &[]), 0.0);
        assert!(close(e_hat_from(&[0.37], &[0.03]), 0.03));
        assert!(close(e_hat_from(&[1.0, 1.0], &[0.02, 0.04]), 0.03));
        assert!(close(e_hat_from(&[0.9, 0.1], &[0.0, 0.1]), 0.01));
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine(0.012, 0.0, 0.0, 10.0), 0.012);
        assert!(close(combine(0.012, 1.0, 0.5, 10.0), 10.012));
        assert!(close(combine(0.012, 0.05, 0.03, 10.0), 0.5405));
    }

    #[test]
    fn empty_store_reduces_to_mde() {
        let w = World::open(Rect::from_coords(0.9, 0.9, 1.0, 1.0), 0.012);
        let tau = Transition::new(&w, &GridSpec::default(), &DriftMde, State::new(0.3, 0.3), Control::new(0.1, 0.1));
        let m = CostModel::new(10.0, CostMode::Adaptive);
        assert_eq!(m.cost(&tau), 0.012);
        assert_eq!(m.p_anomaly(&tau), 0.0);
        assert_eq!(m.e_hat(&tau), 0.0);
    }

    #[test]
    fn mde_only_ignores_store() {
        let w = World::open(Rect::from_coords(0.9, 0.9, 1.0, 1.0), 0.012);
        let g = GridSpec::default();
        let tau = Transition::new(&w, &g, &DriftMde, State::new(0.3, 0.3), Control::new(0.1, 0.1));
        let mut ex = crate::deviation::ExecutedTransition::new(tau.clone(), State::new(0.0, 0.0));
        ex.label = true;
        let m = CostModel::new(10.0, CostMode::MdeOnly).with_executed(vec![ex.clone()]);
        assert_eq!(m.cost(&tau), 0.012);
        let a = CostModel::new(10.0, CostMode::Adaptive).with_executed(vec![ex]);
        assert!(a.cost(&tau) > 10.0);
    }

    proptest! {
        #[test]
        fn cost_terms_in_range(
            items in proptest::collection::vec((0.0..=1.0f64, any::<bool>(), 0.0..0.2f64), 1..12),
            mde in 0.0..0.05f64,
        ) {
            let s: Vec<f64> = items.iter().map(|i| i.0).collect();
            let l: Vec<bool> = items.iter().map(|i| i.1).collect();
            let e: Vec<f64> = items.iter().map(|i| i.2).collect();
            let p = p_anomaly_from(&s, &l);
            prop_assert!((0.0..=1.0).contains(&p));
            if s.iter().any(|&v| v > 0.0) {
                let eh = e_hat_from(&s, &e);
                let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(eh >= lo - 1e-15 && eh <= hi + 1e-15);
                prop_assert!(combine(mde, p, eh, 10.0) >= mde);
            }
        }
    }
}
