//! UCB1 arm selection over context clusters plus one uniform arm, and the
//! sample generators behind each arm.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::cluster::Cluster;
use crate::world2d::{State, World};

/// Prior of the uniform arm.
pub const UNIFORM_PRIOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArmId {
    Uniform,
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    pub prior: f64,
    /// Number of pseudo-observations the prior stands for.
    pub prior_weight: f64,
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ArmStats {
    fn new(prior: f64) -> Self {
        Self {
            prior,
            prior_weight: 1.0,
            pulls: 0,
            reward_sum: 0.0,
        }
    }

    /// Running mean with the prior counted as `prior_weight` observations.
    pub fn mean(&self) -> f64 {
        (self.prior_weight * self.prior + self.reward_sum) / (self.prior_weight + self.pulls as f64)
    }
}

/// Bandit state. Arm index 0 is the uniform arm; index `i + 1` is cluster `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    clusters: Vec<Cluster>,
    arms: Vec<ArmStats>,
    has_uniform: bool,
    total_pulls: u64,
}

impl Default for SamplerState {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl SamplerState {
    pub fn new(clusters: Vec<Cluster>) -> Self {
        let mut arms = vec![ArmStats::new(UNIFORM_PRIOR)];
        arms.extend(clusters.iter().map(|c| ArmStats::new(c.prior)));
        Self {
            clusters,
            arms,
            has_uniform: true,
            total_pulls: 0,
        }
    }

    /// Sampler with explicit priors for cluster arms. Used when the clusters
    /// themselves don't matter, e.g. to study the selection policy.
    pub fn with_priors(priors: &[f64]) -> Self {
        Self {
            clusters: Vec::new(),
            arms: std::iter::once(UNIFORM_PRIOR)
                .chain(priors.iter().copied())
                .map(ArmStats::new)
                .collect(),
            has_uniform: true,
            total_pulls: 0,
        }
    }

    /// Sampler whose only arms are clusters (no uniform arm).
    pub fn clusters_only(priors: &[f64]) -> Self {
        Self {
            clusters: Vec::new(),
            arms: priors.iter().copied().map(ArmStats::new).collect(),
            has_uniform: false,
            total_pulls: 0,
        }
    }

    /// Sets how many pseudo-observations every arm's prior counts for.
    pub fn with_prior_weight(mut self, weight: f64) -> Self {
        for a in &mut self.arms {
            a.prior_weight = weight;
        }
        self
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm_id(&self, index: usize) -> ArmId {
        match (self.has_uniform, index) {
            (true, 0) => ArmId::Uniform,
            (true, i) => ArmId::Cluster(i - 1),
            (false, i) => ArmId::Cluster(i),
        }
    }

    /// Unpulled arms first in index order, then the UCB1 maximizer.
    pub fn select_arm(&self) -> usize {
        if let Some(i) = self.arms.iter().position(|a| a.pulls == 0) {
            return i;
        }
        let ln_n = (self.total_pulls as f64).ln();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, a) in self.arms.iter().enumerate() {
            let score = a.mean() + (2.0 * ln_n / a.pulls as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    pub fn record(&mut self, arm: usize, reward: f64) {
        let a = &mut self.arms[arm];
        a.pulls += 1;
        a.reward_sum += reward;
        self.total_pulls += 1;
    }

    pub fn pull_counts(&self) -> Vec<u64> {
        self.arms.iter().map(|a| a.pulls).collect()
    }

    /// Draws a sampling target for `arm`.
    ///
    /// The uniform arm samples the bounds, or the goal region with
    /// probability `goal_bias`. A cluster arm perturbs a uniformly chosen
    /// member's start state with isotropic Gaussian noise of std `sigma`.
    pub fn draw_sample<R: Rng + ?Sized>(
        &self,
        arm: usize,
        world: &World,
        goal_bias: f64,
        sigma: f64,
        rng: &mut R,
    ) -> State {
        match self.arm_id(arm) {
            ArmId::Uniform => {
                if goal_bias > 0.0 && rng.random::<f64>() < goal_bias {
                    uniform_in(&world.goal, rng)
                } else {
                    uniform_in(&world.bounds, rng)
                }
            }
            ArmId::Cluster(c) => match self.clusters.get(c) {
                Some(cluster) if !cluster.members.is_empty() => {
                    let m = &cluster.members[rng.random_range(0..cluster.members.len())];
                    gaussian_around(&m.x, sigma, world, rng)
                }
                _ => uniform_in(&world.bounds, rng),
            },
        }
    }
}

pub fn uniform_in<R: Rng + ?Sized>(r: &crate::world2d::Rect, rng: &mut R) -> State {
    let x = if r.width() > 0.0 {
        rng.random_range(r.min.x..=r.max.x)
    } else {
        r.min.x
    };
    let y = if r.height() > 0.0 {
        rng.random_range(r.min.y..=r.max.y)
    } else {
        r.min.y
    };
    State::new(x, y)
}

pub fn gaussian_around<R: Rng + ?Sized>(center: &State, sigma: f64, world: &World, rng: &mut R) -> State {
    if sigma <= 0.0 {
        return world.bounds.clamp(*center);
    }
    let n = Normal::new(0.0, sigma).expect("finite positive sigma");
    world
        .bounds
        .clamp(State::new(center.x + n.sample(rng), center.y + n.sample(rng)))
}

/// Maps transition costs onto `[0, 1]` rewards (cheaper is better) using the
/// range observed so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardScale {
    lo: f64,
    hi: f64,
}

impl Default for RewardScale {
    fn default() -> Self {
        Self {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        }
    }
}

impl RewardScale {
    pub fn observe(&mut self, cost: f64) -> f64 {
        self.lo = self.lo.min(cost);
        self.hi = self.hi.max(cost);
        if self.hi > self.lo {
            (self.hi - cost) / (self.hi - self.lo)
        } else {
            UNIFORM_PRIOR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world2d::Rect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unpulled_first_in_order() {
        let mut s = SamplerState::clusters_only(&[0.2, 0.9, 0.5]);
        let mut seen = Vec::new();
        for _ in 0..3 {
            let a = s.select_arm();
            seen.push(a);
            s.record(a, 0.0);
        }
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn single_arm_always_chosen() {
        let mut s = SamplerState::default();
        for _ in 0..50 {
            let a = s.select_arm();
            assert_eq!(a, 0);
            assert_eq!(s.arm_id(a), ArmId::Uniform);
            s.record(a, 0.3);
        }
    }

    #[test]
    fn high_prior_arm_dominates() {
        // rewards echo the prior, as for clusters of consistently cheap transitions
        let priors = [1.0, 0.0, 0.0];
        let mut s = SamplerState::clusters_only(&priors);
        for _ in 0..1000 {
            let a = s.select_arm();
            s.record(a, priors[a]);
        }
        let counts = s.pull_counts();
        assert!(counts[0] as f64 / 1000.0 > 0.5, "{counts:?}");
    }

    #[test]
    fn arm_ids() {
        let s = SamplerState::with_priors(&[0.1, 0.2]);
        assert_eq!(s.arm_id(0), ArmId::Uniform);
        assert_eq!(s.arm_id(2), ArmId::Cluster(1));
    }

    #[test]
    fn goal_bias_one_hits_goal() {
        let w = World::open(Rect::from_coords(0.8, 0.8, 0.9, 0.9), 0.0);
        let s = SamplerState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(w.in_goal(&s.draw_sample(0, &w, 1.0, 0.05, &mut rng)));
        }
    }

    #[test]
    fn reward_scale() {
        let mut r = RewardScale::default();
        assert_eq!(r.observe(0.1), UNIFORM_PRIOR);
        assert_eq!(r.observe(0.3), 0.0);
        assert_eq!(r.observe(0.1), 1.0);
        assert!((r.observe(0.2) - 0.5).abs() < 1e-12);
    }
}
