//! Replan-and-execute loop.
//!
//! Plan from the measured state, execute the controls one at a time on the
//! true model while rolling the nominal model forward alongside, and halt as
//! soon as the two diverge by `delta_safe` or more. Every executed step is
//! stored, the store is relabelled, and the next planning starts from the
//! measured state with the updated cost and sampler.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::context::{context_vector, GridSpec};
use crate::cost::CostModel;
use crate::deviation::{label_transitions, AnomalyConfig, DriftMde, ExecutedTransition, Mde, Transition};
use crate::planner::{apply_variant, plan, PlanContext, PlanError, PlannerConfig, PlanningTrace, SamplerState};
use crate::world2d::{Control, State, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub planner: PlannerConfig,
    pub grid: GridSpec,
    pub anomaly: AnomalyConfig,
    pub penalty: f64,
    pub delta_safe: f64,
    pub max_replannings: usize,
    /// Whether a planning call that finds nothing uses up a replanning.
    pub count_failed_plans: bool,
    /// Keep the last RRT tree of every planning in the outcome.
    pub keep_tree_edges: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            grid: GridSpec::default(),
            anomaly: AnomalyConfig::default(),
            penalty: CostModel::DEFAULT_PENALTY,
            delta_safe: 0.05,
            max_replannings: 10,
            count_failed_plans: true,
            keep_tree_edges: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub plan_index: usize,
    pub step: usize,
    pub x: State,
    pub u: Control,
    pub x_meas: State,
    /// Nominal rollout since the last planning, after this step.
    pub x_hat: State,
    /// One-step error `||x_meas - f_hat(x, u)||`.
    pub error: f64,
    /// `||x_meas - x_hat||`.
    pub deviation: f64,
    pub safety_stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub index: usize,
    pub start: State,
    /// Nominal rollout of the whole plan; empty when planning failed.
    pub states: Vec<State>,
    pub cost: Option<f64>,
    pub trace: PlanningTrace,
    pub error: Option<PlanError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Planning calls beyond the first.
    pub replannings: usize,
    pub executed: Vec<ExecutedTransition>,
    pub steps: Vec<StepRecord>,
    pub plans: Vec<PlanRecord>,
    pub final_state: State,
}

impl EpisodeOutcome {
    pub fn safety_stops(&self) -> usize {
        self.steps.iter().filter(|s| s.safety_stop).count()
    }
}

/// Seed of the `index`-th planning call of an episode.
pub fn planning_seed(episode_seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = episode_seed
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_episode(world: &World, start: State, cfg: &EpisodeConfig, seed: u64) -> EpisodeOutcome {
    run_episode_with(world, start, cfg, seed, &DriftMde)
}

pub fn run_episode_with(world: &World, start: State, cfg: &EpisodeConfig, seed: u64, mde: &dyn Mde) -> EpisodeOutcome {
    let mut cost_model = CostModel::new(cfg.penalty, cfg.planner.variant.cost_mode());
    apply_variant(cfg.planner.variant, &mut cost_model);
    let mut sampler = SamplerState::default();
    let mut executed: Vec<ExecutedTransition> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut plans: Vec<PlanRecord> = Vec::new();
    let mut x = start;
    let mut counted = 0usize;
    let mut uncounted_failures = 0usize;
    let budget = 1 + cfg.max_replannings;

    let success = loop {
        if world.in_goal(&x) {
            break true;
        }
        if counted >= budget || uncounted_failures > cfg.max_replannings {
            break false;
        }
        let index = plans.len();
        cost_model.set_executed(Arc::new(executed.clone()));
        let mut pcfg = cfg.planner;
        pcfg.seed = planning_seed(seed, index);
        let mut ctx = PlanContext::new(&cfg.grid, &cost_model);
        ctx.mde = mde;
        ctx.keep_edges = cfg.keep_tree_edges;
        let result = plan(world, &x, &pcfg, &ctx, &mut sampler);

        let p = match result {
            Ok(p) => p,
            Err(e) => {
                if cfg.count_failed_plans {
                    counted += 1;
                } else {
                    uncounted_failures += 1;
                }
                plans.push(PlanRecord {
                    index,
                    start: x,
                    states: Vec::new(),
                    cost: None,
                    trace: PlanningTrace::default(),
                    error: Some(e),
                });
                continue;
            }
        };
        counted += 1;

        let mut x_hat = x;
        for (k, u) in p.controls.iter().enumerate() {
            let m = mde.mde(world, &x, u);
            let tau = Transition::with_context(world, x, *u, context_vector(world, &cfg.grid, &x, m));
            let x_meas = world.true_step(&x, u).expect("planned controls are within bounds");
            let rec = ExecutedTransition::new(tau, x_meas);
            x_hat = world.nominal_step(&x_hat, u).expect("planned controls are within bounds");
            let deviation = x_meas.dist(&x_hat);
            let stop = deviation >= cfg.delta_safe;
            steps.push(StepRecord {
                plan_index: index,
                step: k,
                x,
                u: *u,
                x_meas,
                x_hat,
                error: rec.error,
                deviation,
                safety_stop: stop,
            });
            executed.push(rec);
            x = x_meas;
            if stop || world.in_goal(&x) {
                break;
            }
        }
        label_transitions(&mut executed, &cfg.anomaly);
        plans.push(PlanRecord {
            index,
            start: p.states[0],
            states: p.states,
            cost: Some(p.cost),
            trace: p.trace,
            error: None,
        });
    };

    EpisodeOutcome {
        success,
        replannings: counted.saturating_sub(1).min(cfg.max_replannings),
        executed,
        steps,
        plans,
        final_state: x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world2d::{DriftField, Rect};

    fn quick() -> EpisodeConfig {
        EpisodeConfig {
            planner: PlannerConfig {
                max_iterations: 1500,
                runs_per_planning: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_drift_no_replanning() {
        let w = World::open(Rect::from_coords(0.7, 0.7, 0.9, 0.9), 0.0);
        let out = run_episode(&w, State::new(0.1, 0.1), &quick(), 3);
        assert!(out.success);
        assert_eq!(out.replannings, 0);
        assert_eq!(out.safety_stops(), 0);
        assert!(out.executed.iter().all(|e| e.error == 0.0));
    }

    #[test]
    fn large_drift_stops_quickly() {
        let mut w = World::open(Rect::from_coords(0.7, 0.7, 0.9, 0.9), 0.0);
        w.drift = DriftField::uniform(0.06);
        let cfg = quick();
        let out = run_episode(&w, State::new(0.1, 0.1), &cfg, 9);
        let bound = (cfg.delta_safe / 0.06f64).ceil() as usize;
        for p in &out.plans {
            let n = out.steps.iter().filter(|s| s.plan_index == p.index).count();
            assert!(n <= bound, "plan {} ran {n} steps", p.index);
        }
    }

    #[test]
    fn budget_exhaustion() {
        // goal walled off: every planning fails
        let mut w = World::open(Rect::from_coords(0.45, 0.45, 0.55, 0.55), 0.0);
        w.obstacles = vec![
            Rect::from_coords(0.4, 0.4, 0.6, 0.42),
            Rect::from_coords(0.4, 0.58, 0.6, 0.6),
            Rect::from_coords(0.4, 0.4, 0.42, 0.6),
            Rect::from_coords(0.58, 0.4, 0.6, 0.6),
        ];
        let mut cfg = quick();
        cfg.planner.max_iterations = 50;
        let out = run_episode(&w, State::new(0.1, 0.1), &cfg, 1);
        assert!(!out.success);
        assert_eq!(out.replannings, 10);
        assert_eq!(out.plans.len(), 11);
    }

    #[test]
    fn rollout_and_error_bookkeeping() {
        let mut w = World::open(Rect::from_coords(0.7, 0.7, 0.9, 0.9), 0.0);
        w.drift = DriftField::uniform(0.012);
        let out = run_episode(&w, State::new(0.1, 0.1), &quick(), 4);
        for p in &out.plans {
            let steps: Vec<_> = out.steps.iter().filter(|s| s.plan_index == p.index).collect();
            let mut xh = p.start;
            for (i, s) in steps.iter().enumerate() {
                xh = w.nominal_step(&xh, &s.u).unwrap();
                assert_eq!(s.x_hat, xh);
                let pred = w.nominal_step(&s.x, &s.u).unwrap();
                assert!((s.error - pred.dist(&s.x_meas)).abs() < 1e-15);
                // the stop fires at the first step over the threshold
                assert_eq!(s.safety_stop, s.deviation >= 0.05);
                if i + 1 < steps.len() {
                    assert!(!s.safety_stop);
                }
            }
        }
    }
}
