//! Model deviation estimate, execution error and anomaly labelling of
//! executed transitions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::context::{context_vector, ContextVector, GridSpec};
use crate::world2d::{Control, State, World};

/// Offline estimate of `||f(x, u) - f_hat(x, u)||`.
pub trait Mde: Send + Sync {
    fn mde(&self, world: &World, x: &State, u: &Control) -> f64;
}

/// The drift magnitude at `x`; exact for the drift-only part of the true model.
#[derive(Debug, Clone, Copy, Default)]
pub struct DriftMde;

impl Mde for DriftMde {
    fn mde(&self, world: &World, x: &State, _u: &Control) -> f64 {
        world.drift_at(x)
    }
}

pub fn mde(world: &World, x: &State, u: &Control) -> f64 {
    DriftMde.mde(world, x, u)
}

/// A simulated state-control pair with its nominal successor and cached context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: State,
    pub u: Control,
    pub x_pred: State,
    pub context: ContextVector,
    pub mde: f64,
}

impl Transition {
    pub fn new(world: &World, grid: &GridSpec, mde_model: &dyn Mde, x: State, u: Control) -> Self {
        let m = mde_model.mde(world, &x, &u);
        Self {
            x,
            u,
            x_pred: world.nominal_step_unchecked(&x, &u),
            context: context_vector(world, grid, &x, m),
            mde: m,
        }
    }

    /// Builds a transition reusing a context already computed at `x`.
    pub fn with_context(world: &World, x: State, u: Control, context: ContextVector) -> Self {
        let m = context.mde_entry();
        Self {
            x,
            u,
            x_pred: world.nominal_step_unchecked(&x, &u),
            context,
            mde: m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedTransition {
    pub base: Transition,
    pub x_meas: State,
    pub error: f64,
    pub label: bool,
}

impl ExecutedTransition {
    pub fn new(base: Transition, x_meas: State) -> Self {
        let error = execution_error(&base.x_pred, &x_meas);
        Self {
            base,
            x_meas,
            error,
            label: false,
        }
    }

    pub fn residual(&self) -> f64 {
        self.error - self.base.mde
    }
}

pub fn execution_error(pred: &State, meas: &State) -> f64 {
    pred.dist(meas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `z` is a one-sided confidence level; the cutoff is the normal quantile.
    #[default]
    Quantile,
    /// `z` is used directly as the standardized-residual cutoff.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyConfig {
    pub z: f64,
    pub threshold_mode: ThresholdMode,
    pub min_samples: usize,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            z: 0.95,
            threshold_mode: ThresholdMode::Quantile,
            min_samples: 3,
        }
    }
}

/// Residual spreads below this are treated as zero.
const MIN_STD: f64 = 1e-12;

impl AnomalyConfig {
    pub fn threshold(&self) -> f64 {
        match self.threshold_mode {
            ThresholdMode::Raw => self.z,
            ThresholdMode::Quantile => Normal::standard().inverse_cdf(self.z),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.threshold_mode {
            ThresholdMode::Quantile if !(self.z > 0.0 && self.z < 1.0) => {
                Err(format!("quantile z must be in (0, 1), got {}", self.z))
            }
            ThresholdMode::Raw if !self.z.is_finite() => Err(format!("raw z must be finite, got {}", self.z)),
            _ => Ok(()),
        }
    }
}

/// Labels a transition anomalous when its residual `e - mde` lies more than
/// the threshold above the mean, in units of the population standard
/// deviation over all executed transitions.
pub fn label_transitions(executed: &mut [ExecutedTransition], cfg: &AnomalyConfig) {
    let labels = anomaly_labels(&executed.iter().map(|t| t.residual()).collect::<Vec<_>>(), cfg);
    for (t, l) in executed.iter_mut().zip(labels) {
        t.label = l;
    }
}

pub fn anomaly_labels(residuals: &[f64], cfg: &AnomalyConfig) -> Vec<bool> {
    let m = residuals.len();
    if m < cfg.min_samples.max(1) {
        return vec![false; m];
    }
    let n = m as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std.is_nan() || std <= MIN_STD {
        return vec![false; m];
    }
    let threshold = cfg.threshold();
    residuals.iter().map(|r| (r - mean) / std > threshold).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world2d::{DriftField, DriftRegion, Rect};
    use proptest::prelude::*;

    fn drift_world() -> World {
        World {
            drift: DriftField {
                regions: vec![DriftRegion {
                    rect: Rect::from_coords(0.0, 0.0, 0.5, 1.0),
                    delta: 0.024,
                }],
                default_delta: 0.006,
            },
            ..World::open(Rect::from_coords(0.9, 0.9, 1.0, 1.0), 0.0)
        }
    }

    #[test]
    fn mde_is_drift() {
        let w = drift_world();
        assert_eq!(mde(&w, &State::new(0.2, 0.5), &Control::ZERO), 0.024);
        assert_eq!(mde(&w, &State::new(0.7, 0.5), &Control::ZERO), 0.006);
        assert_eq!(
            mde(&w, &State::new(0.2, 0.5), &Control::new(0.5, -0.5)),
            mde(&w, &State::new(0.2, 0.5), &Control::new(-0.1, 0.3))
        );
    }

    #[test]
    fn error_cases() {
        let p = State::new(0.5, 0.5);
        assert_eq!(execution_error(&p, &p), 0.0);
        let m = State::new(0.53, 0.54);
        assert!((execution_error(&p, &m) - 0.05).abs() < 1e-15);
        assert_eq!(execution_error(&p, &m), execution_error(&m, &p));
    }

    #[test]
    fn quantile_threshold() {
        let t = AnomalyConfig::default().threshold();
        assert!((t - 1.644_853_626_951_472_2).abs() < 1e-9, "{t}");
        let raw = AnomalyConfig {
            threshold_mode: ThresholdMode::Raw,
            ..Default::default()
        };
        assert_eq!(raw.threshold(), 0.95);
    }

    #[test]
    fn zero_residuals_unlabelled() {
        assert_eq!(anomaly_labels(&[0.0; 6], &AnomalyConfig::default()), vec![false; 6]);
    }

    #[test]
    fn outlier_labelled() {
        let l = anomaly_labels(&[0.0, 0.001, -0.001, 0.0005, 0.25], &AnomalyConfig::default());
        assert_eq!(l, vec![false, false, false, false, true]);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(anomaly_labels(&[1.0], &AnomalyConfig::default()), vec![false]);
        assert_eq!(anomaly_labels(&[0.0, 1.0], &AnomalyConfig::default()), vec![false, false]);
        assert!(anomaly_labels(&[], &AnomalyConfig::default()).is_empty());
    }

    #[test]
    fn label_executed_store() {
        let w = drift_world();
        let g = GridSpec::default();
        let mut store: Vec<ExecutedTransition> = (0..6)
            .map(|i| {
                let x = State::new(0.6, 0.1 + 0.1 * i as f64);
                let u = Control::new(0.0, 0.5);
                let t = Transition::new(&w, &g, &DriftMde, x, u);
                let meas = w.true_step(&x, &u).unwrap();
                ExecutedTransition::new(t, meas)
            })
            .collect();
        // one robot that got stuck instead of moving
        let stuck = store[5].base.x;
        store[5] = ExecutedTransition::new(store[5].base.clone(), stuck);
        label_transitions(&mut store, &AnomalyConfig::default());
        let labels: Vec<bool> = store.iter().map(|t| t.label).collect();
        assert_eq!(labels, vec![false, false, false, false, false, true]);
        // executed error is the one-step error, here the drift
        assert!((store[0].error - 0.006).abs() < 1e-12);
    }

    #[test]
    fn context_independent_of_control() {
        let w = drift_world();
        let g = GridSpec::default();
        let x = State::new(0.05, 0.5);
        let a = Transition::new(&w, &g, &DriftMde, x, Control::new(0.5, 0.5));
        let b = Transition::new(&w, &g, &DriftMde, x, Control::new(-0.3, 0.1));
        assert_eq!(a.context, b.context);
    }

    proptest! {
        #[test]
        fn labels_idempotent_and_permutation_invariant(
            r in proptest::collection::vec(-0.05..0.3f64, 0..30),
            seed in any::<u64>(),
        ) {
            let cfg = AnomalyConfig::default();
            let l1 = anomaly_labels(&r, &cfg);
            prop_assert_eq!(&l1, &anomaly_labels(&r, &cfg));
            // permute by a seeded rotation-and-reverse
            let k = if r.is_empty() { 0 } else { (seed as usize) % r.len() };
            let mut idx: Vec<usize> = (0..r.len()).collect();
            idx.rotate_left(k);
            idx.reverse();
            let permuted: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
            let lp = anomaly_labels(&permuted, &cfg);
            for (pos, &i) in idx.iter().enumerate() {
                prop_assert_eq!(lp[pos], l1[i]);
            }
        }

        #[test]
        fn symmetric_duplicates_keep_zero_labels(
            half in proptest::collection::vec(0.0..0.1f64, 2..10),
            dup in 0usize..20,
        ) {
            let cfg = AnomalyConfig::default();
            let mut r: Vec<f64> = half.iter().flat_map(|&v| [v, -v]).collect();
            let before = anomaly_labels(&r, &cfg);
            let i = dup % r.len();
            if !before[i] {
                r.push(r[i]);
                let after = anomaly_labels(&r, &cfg);
                for (j, &b) in before.iter().enumerate() {
                    if !b && r[j] <= r[i] {
                        prop_assert!(!after[j]);
                    }
                }
            }
        }
    }
}
