//! Kinodynamic RRT with bandit-driven sampling over context clusters.
//!
//! A planning call runs several RRT instances in sequence. After each run the
//! transitions generated so far are clustered by context; each cluster
//! becomes an arm whose starting reward reflects the MDE of its members and,
//! for the poisoning variants, the share of executed transitions predicted
//! into it that turned out anomalous. The cheapest goal-reaching solution
//! over all runs is returned, and later runs only keep branches cheaper than
//! the incumbent.

pub mod bandit;
pub mod cluster;
pub mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bandit::{ArmId, RewardScale, SamplerState};
pub use cluster::{cluster_transitions, init_arm_rewards, normalize_rewards, poison_rewards, Cluster};
pub use tree::{NodeId, Tree, TreeNode};

use crate::context::{context_vector, ContextVector, GridSpec};
use crate::cost::{CostMode, CostModel};
use crate::deviation::{DriftMde, Mde, Transition};
use crate::world2d::{Control, State, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Variant {
    #[serde(rename = "MAB-RRT")]
    MabRrt,
    #[serde(rename = "CTX-RRT-static-cost")]
    CtxRrtStaticCost,
    #[serde(rename = "CTX-RRT-static-bias")]
    CtxRrtStaticBias,
    #[serde(rename = "CTX-RRT")]
    CtxRrt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::MabRrt,
        Variant::CtxRrtStaticCost,
        Variant::CtxRrtStaticBias,
        Variant::CtxRrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MabRrt => "MAB-RRT",
            Variant::CtxRrtStaticCost => "CTX-RRT-static-cost",
            Variant::CtxRrtStaticBias => "CTX-RRT-static-bias",
            Variant::CtxRrt => "CTX-RRT",
        }
    }

    pub fn adaptive_cost(self) -> bool {
        matches!(self, Variant::CtxRrt | Variant::CtxRrtStaticBias)
    }

    pub fn poisoning(self) -> bool {
        matches!(self, Variant::CtxRrt | Variant::CtxRrtStaticCost)
    }

    pub fn cost_mode(self) -> CostMode {
        if self.adaptive_cost() {
            CostMode::Adaptive
        } else {
            CostMode::MdeOnly
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

/// Sets the cost model's mode for `variant` and reports whether arm rewards
/// get poisoned.
pub fn apply_variant(variant: Variant, cost_model: &mut CostModel) -> bool {
    cost_model.mode = variant.cost_mode();
    variant.poisoning()
}

/// Signal behind the per-pull bandit reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PullReward {
    /// Nominal MDE of the created transition. Observed errors then reach the
    /// sampler only through poisoning.
    #[default]
    Mde,
    /// Edge cost under the active cost model.
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub variant: Variant,
    pub max_iterations: usize,
    pub runs_per_planning: usize,
    pub goal_bias: f64,
    pub controls_per_extension: usize,
    /// Context distance under which transitions share a cluster.
    pub cluster_threshold: f64,
    /// Std of the Gaussian kernel around a cluster member's state.
    pub sample_sigma: f64,
    /// Pseudo-observations behind each arm's initial reward in UCB1.
    pub prior_weight: f64,
    pub pull_reward: PullReward,
    /// Drop branches whose cost-to-come reaches the incumbent's cost.
    pub prune_with_incumbent: bool,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::CtxRrt,
            max_iterations: 2000,
            runs_per_planning: 4,
            goal_bias: 0.05,
            controls_per_extension: 10,
            cluster_threshold: 1.5,
            sample_sigma: 0.05,
            prior_weight: 50.0,
            pull_reward: PullReward::Mde,
            prune_with_incumbent: true,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 || self.runs_per_planning == 0 || self.controls_per_extension == 0 {
            return Err("iteration, run and control counts must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(format!("goal_bias must be in [0, 1), got {}", self.goal_bias));
        }
        if !(self.cluster_threshold.is_finite() && self.cluster_threshold >= 0.0) {
            return Err(format!("cluster_threshold must be >= 0, got {}", self.cluster_threshold));
        }
        if !(self.sample_sigma.is_finite() && self.sample_sigma >= 0.0) {
            return Err(format!("sample_sigma must be >= 0, got {}", self.sample_sigma));
        }
        if !(self.prior_weight.is_finite() && self.prior_weight > 0.0) {
            return Err(format!("prior_weight must be > 0, got {}", self.prior_weight));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start state ({0}, {1}) is not in free space")]
    StartInCollision(f64, f64),
    #[error("no solution within {runs} runs of {iterations} iterations")]
    NoSolution { runs: usize, iterations: usize },
}

/// Per-planning log.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PlanningTrace {
    /// Best solution cost after each run (`None` until one is found).
    pub incumbent_costs: Vec<Option<f64>>,
    /// Cost of the solution found in each run, if any.
    pub run_costs: Vec<Option<f64>>,
    pub tree_sizes: Vec<usize>,
    /// Pull counts per arm over the whole planning (arm 0 is uniform).
    pub arm_pulls: Vec<u64>,
    pub clusters: usize,
    /// Tree edges of the last run, when requested.
    pub edges: Vec<(State, State)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub controls: Vec<Control>,
    /// Nominal rollout, `controls.len() + 1` states starting at the start.
    pub states: Vec<State>,
    pub edge_costs: Vec<f64>,
    pub cost: f64,
    pub trace: PlanningTrace,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }
}

/// Everything the planner reads besides the world.
pub struct PlanContext<'a> {
    pub grid: &'a GridSpec,
    pub cost_model: &'a CostModel,
    pub mde: &'a dyn Mde,
    pub keep_edges: bool,
}

impl<'a> PlanContext<'a> {
    pub fn new(grid: &'a GridSpec, cost_model: &'a CostModel) -> Self {
        Self {
            grid,
            cost_model,
            mde: &DriftMde,
            keep_edges: false,
        }
    }
}

/// Per-node context and outgoing-transition cost. Both depend only on the
/// node's state, so every child of a node shares them.
struct NodeCache {
    entries: Vec<Option<(ContextVector, f64)>>,
}

impl NodeCache {
    fn get(&mut self, id: NodeId, state: &State, world: &World, ctx: &PlanContext<'_>) -> (ContextVector, f64) {
        if self.entries.len() <= id {
            self.entries.resize(id + 1, None);
        }
        if let Some(e) = &self.entries[id] {
            return e.clone();
        }
        let m = ctx.mde.mde(world, state, &Control::ZERO);
        let z = context_vector(world, ctx.grid, state, m);
        let probe = Transition::with_context(world, *state, Control::ZERO, z.clone());
        let c = ctx.cost_model.cost(&probe);
        self.entries[id] = Some((z.clone(), c));
        (z, c)
    }
}

/// One extension: nearest node, `k` random controls through the nominal
/// model, keep the collision-free successor closest to `target`.
#[allow(clippy::too_many_arguments)]
pub fn extend<R: Rng + ?Sized>(
    tree: &mut Tree,
    target: &State,
    k: usize,
    world: &World,
    ctx: &PlanContext<'_>,
    rng: &mut R,
    cost_bound: Option<f64>,
) -> Option<(NodeId, Transition, f64)> {
    let mut cache = NodeCache { entries: Vec::new() };
    extend_cached(tree, target, k, world, ctx, rng, cost_bound, &mut cache)
}

#[allow(clippy::too_many_arguments)]
fn extend_cached<R: Rng + ?Sized>(
    tree: &mut Tree,
    target: &State,
    k: usize,
    world: &World,
    ctx: &PlanContext<'_>,
    rng: &mut R,
    cost_bound: Option<f64>,
    cache: &mut NodeCache,
) -> Option<(NodeId, Transition, f64)> {
    let near = tree.nearest(target);
    let from = tree.node(near).state;
    let b = world.control_bound;
    let mut best: Option<(f64, Control, State)> = None;
    for _ in 0..k {
        let u = Control::new(rng.random_range(-b..=b), rng.random_range(-b..=b));
        let next = world.nominal_step_unchecked(&from, &u);
        if world.segment_collides(&from, &next) {
            continue;
        }
        let d = next.dist_sq(target);
        if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
            best = Some((d, u, next));
        }
    }
    let (_, u, next) = best?;
    let (z, edge_cost) = cache.get(near, &from, world, ctx);
    if let Some(bound) = cost_bound {
        if tree.node(near).cost_to_come + edge_cost >= bound {
            return None;
        }
    }
    let id = tree.add(near, next, u, edge_cost);
    Some((id, Transition::with_context(world, from, u, z), edge_cost))
}

/// Rebuilds the arms from `clusters` for the next run.
fn prepare_sampler(mut clusters: Vec<Cluster>, poisoning: bool, cost_model: &CostModel, config: &PlannerConfig) -> SamplerState {
    let threshold = config.cluster_threshold;
    init_arm_rewards(&mut clusters);
    normalize_rewards(&mut clusters);
    if poisoning {
        poison_rewards(&mut clusters, cost_model.executed(), threshold);
    }
    SamplerState::new(clusters).with_prior_weight(config.prior_weight)
}

/// Re-checks a control sequence under the nominal model: collision-free
/// segments and a final state in the goal.
pub fn validate_rollout(world: &World, start: &State, controls: &[Control]) -> Option<Vec<State>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*start);
    let mut x = *start;
    for u in controls {
        world.check_control(u).ok()?;
        let next = world.nominal_step_unchecked(&x, u);
        if world.segment_collides(&x, &next) {
            return None;
        }
        states.push(next);
        x = next;
    }
    world.in_goal(&x).then_some(states)
}

/// Plans from `start` to the goal region. `sampler` carries the clusters of
/// the previous planning in and the final clusters out.
pub fn plan(
    world: &World,
    start: &State,
    config: &PlannerConfig,
    ctx: &PlanContext<'_>,
    sampler: &mut SamplerState,
) -> Result<Plan, PlanError> {
    if !world.is_free(start) {
        return Err(PlanError::StartInCollision(start.x, start.y));
    }
    if world.in_goal(start) {
        return Ok(Plan {
            controls: Vec::new(),
            states: vec![*start],
            edge_costs: Vec::new(),
            cost: 0.0,
            trace: PlanningTrace::default(),
        });
    }
    let poisoning = config.variant.poisoning();
    let threshold = config.cluster_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    *sampler = prepare_sampler(sampler.clusters().to_vec(), poisoning, ctx.cost_model, config);

    let mut trace = PlanningTrace::default();
    let mut total_pulls: Vec<u64> = Vec::new();
    let mut accumulated: Vec<Transition> = Vec::new();
    let mut incumbent: Option<(Vec<Control>, Vec<f64>, f64)> = None;
    let mut scale = RewardScale::default();

    for run in 0..config.runs_per_planning {
        let mut tree = Tree::new(*start, world.bounds);
        let mut cache = NodeCache { entries: Vec::new() };
        let bound = if config.prune_with_incumbent {
            incumbent.as_ref().map(|(_, _, c)| *c)
        } else {
            None
        };
        let mut found: Option<NodeId> = None;
        for _ in 0..config.max_iterations {
            let arm = sampler.select_arm();
            let target = sampler.draw_sample(arm, world, config.goal_bias, config.sample_sigma, &mut rng);
            let ext = extend_cached(
                &mut tree,
                &target,
                config.controls_per_extension,
                world,
                ctx,
                &mut rng,
                bound,
                &mut cache,
            );
            match ext {
                Some((id, transition, edge_cost)) => {
                    let signal = match config.pull_reward {
                        PullReward::Mde => transition.mde,
                        PullReward::Cost => edge_cost,
                    };
                    sampler.record(arm, scale.observe(signal));
                    accumulated.push(transition);
                    if world.in_goal(&tree.node(id).state) {
                        found = Some(id);
                        break;
                    }
                }
                None => sampler.record(arm, 0.0),
            }
        }

        let run_cost = found.map(|id| tree.node(id).cost_to_come);
        if let Some(id) = found {
            let path = tree.path_to(id);
            let controls: Vec<Control> = path[1..].iter().map(|&n| tree.node(n).control).collect();
            let costs: Vec<f64> = path[1..].iter().map(|&n| tree.node(n).edge_cost).collect();
            let cost = tree.node(id).cost_to_come;
            if incumbent.as_ref().is_none_or(|(_, _, c)| cost < *c) {
                incumbent = Some((controls, costs, cost));
            }
        }
        trace.run_costs.push(run_cost);
        trace.incumbent_costs.push(incumbent.as_ref().map(|(_, _, c)| *c));
        trace.tree_sizes.push(tree.len());
        let pulls = sampler.pull_counts();
        if total_pulls.len() < pulls.len() {
            total_pulls.resize(pulls.len(), 0);
        }
        for (t, p) in total_pulls.iter_mut().zip(pulls) {
            *t += p;
        }
        if ctx.keep_edges && run + 1 == config.runs_per_planning {
            trace.edges = tree
                .nodes()
                .iter()
                .filter_map(|n| n.parent.map(|p| (tree.node(p).state, n.state)))
                .collect();
        }

        let clusters = cluster_transitions(&accumulated, threshold);
        *sampler = prepare_sampler(clusters, poisoning, ctx.cost_model, config);
    }
    trace.arm_pulls = total_pulls;
    trace.clusters = sampler.clusters().len();

    let (controls, edge_costs, cost) = incumbent.ok_or(PlanError::NoSolution {
        runs: config.runs_per_planning,
        iterations: config.max_iterations,
    })?;
    let states = validate_rollout(world, start, &controls).expect("tree solutions are collision-free and end in the goal");
    Ok(Plan {
        controls,
        states,
        edge_costs,
        cost,
        trace,
    })
}
