//! Context clustering of transitions and the arm rewards derived from it.

use std::collections::HashMap;

use crate::context::ContextVector;
use crate::deviation::{ExecutedTransition, Transition};

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<Transition>,
    /// Index into `members` of the medoid.
    pub medoid: usize,
    /// Negated mean MDE of the members.
    pub reward: f64,
    /// Reward min-max normalized across clusters, then poisoned. This is
    /// the value the bandit starts from.
    pub prior: f64,
}

impl Cluster {
    pub fn representative(&self) -> &ContextVector {
        &self.members[self.medoid].context
    }
}

/// Distinct context with its multiplicity.
struct Group {
    context: ContextVector,
    members: Vec<usize>,
}

/// Greedy agglomerative clustering on context distance.
///
/// Transitions with identical contexts are grouped first and processed in
/// first-appearance order. Each group joins the cluster with the nearest
/// medoid when that distance is within `threshold`, otherwise it founds a
/// new cluster. The medoid (the member minimizing the summed distance to
/// all members) is updated after every join.
pub fn cluster_transitions(transitions: &[Transition], threshold: f64) -> Vec<Cluster> {
    let mut groups: Vec<Group> = Vec::new();
    let mut by_key: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, t) in transitions.iter().enumerate() {
        let key: Vec<u64> = t.context.as_slice().iter().map(|v| v.to_bits()).collect();
        let g = *by_key.entry(key).or_insert_with(|| {
            groups.push(Group {
                context: t.context.clone(),
                members: Vec::new(),
            });
            groups.len() - 1
        });
        groups[g].members.push(i);
    }

    struct Building {
        groups: Vec<usize>,
        // summed weighted distance from each group to all members
        sums: Vec<f64>,
        medoid: usize,
    }

    let mut building: Vec<Building> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let nearest = building
            .iter()
            .enumerate()
            .map(|(ci, c)| (ci, g.context.dist(&groups[c.groups[c.medoid]].context)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((ci, d)) if d <= threshold => {
                let c = &mut building[ci];
                let w_new = g.members.len() as f64;
                let mut own = 0.0;
                for (k, &other) in c.groups.iter().enumerate() {
                    let d = g.context.dist(&groups[other].context);
                    c.sums[k] += w_new * d;
                    own += groups[other].members.len() as f64 * d;
                }
                c.groups.push(gi);
                c.sums.push(own);
                c.medoid = c
                    .sums
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
            }
            _ => building.push(Building {
                groups: vec![gi],
                sums: vec![0.0],
                medoid: 0,
            }),
        }
    }

    building
        .into_iter()
        .enumerate()
        .map(|(id, b)| {
            let mut members = Vec::new();
            let mut medoid = 0;
            for (k, &gi) in b.groups.iter().enumerate() {
                if k == b.medoid {
                    medoid = members.len();
                }
                members.extend(groups[gi].members.iter().map(|&i| transitions[i].clone()));
            }
            Cluster {
                id,
                members,
                medoid,
                reward: 0.0,
                prior: 0.0,
            }
        })
        .collect()
}

/// Sets each cluster's reward to the negated mean MDE of its members.
pub fn init_arm_rewards(clusters: &mut [Cluster]) {
    for c in clusters.iter_mut() {
        let n = c.members.len().max(1) as f64;
        c.reward = -c.members.iter().map(|t| t.mde).sum::<f64>() / n;
    }
}

/// Min-max normalizes rewards into `prior` over `[0, 1]`. When all rewards
/// coincide every prior is 1.
pub fn normalize_rewards(clusters: &mut [Cluster]) {
    let lo = clusters.iter().map(|c| c.reward).fold(f64::INFINITY, f64::min);
    let hi = clusters.iter().map(|c| c.reward).fold(f64::NEG_INFINITY, f64::max);
    for c in clusters.iter_mut() {
        c.prior = if hi > lo { (c.reward - lo) / (hi - lo) } else { 1.0 };
    }
}

/// Index of the cluster an executed transition is predicted to belong to:
/// the nearest medoid, if within `threshold`.
pub fn predict_membership(clusters: &[Cluster], ctx: &ContextVector, threshold: f64) -> Option<usize> {
    clusters
        .iter()
        .enumerate()
        .map(|(i, c)| (i, ctx.dist(c.representative())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|&(_, d)| d <= threshold)
        .map(|(i, _)| i)
}

/// Scale factor `1 - anomalous / predicted` for every cluster; clusters with
/// no predicted members get 1.
pub fn poison_factors(clusters: &[Cluster], executed: &[ExecutedTransition], threshold: f64) -> Vec<f64> {
    let mut predicted = vec![0usize; clusters.len()];
    let mut anomalous = vec![0usize; clusters.len()];
    for e in executed {
        if let Some(i) = predict_membership(clusters, &e.base.context, threshold) {
            predicted[i] += 1;
            if e.label {
                anomalous[i] += 1;
            }
        }
    }
    predicted
        .iter()
        .zip(&anomalous)
        .map(|(&p, &a)| if p == 0 { 1.0 } else { 1.0 - a as f64 / p as f64 })
        .collect()
}

/// Scales each cluster's prior by its poison factor.
pub fn poison_rewards(clusters: &mut [Cluster], executed: &[ExecutedTransition], threshold: f64) {
    let factors = poison_factors(clusters, executed, threshold);
    for (c, f) in clusters.iter_mut().zip(factors) {
        c.prior *= f;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world2d::{Control, State};

    fn tr(occ: &[bool], mde: f64, x: f64) -> Transition {
        Transition {
            x: State::new(x, 0.5),
            u: Control::ZERO,
            x_pred: State::new(x, 0.5),
            context: ContextVector::from_parts(occ, mde),
            mde,
        }
    }

    fn executed(t: Transition, label: bool) -> ExecutedTransition {
        let mut e = ExecutedTransition::new(t.clone(), t.x_pred);
        e.label = label;
        e
    }

    #[test]
    fn single_context_single_cluster() {
        let ts: Vec<_> = (0..5).map(|i| tr(&[false; 9], 0.01, i as f64 * 0.1)).collect();
        let c = cluster_transitions(&ts, 0.5);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 5);
    }

    #[test]
    fn two_blobs() {
        let mut ts = Vec::new();
        for i in 0..4 {
            ts.push(tr(&[false; 9], 0.006, i as f64 * 0.01));
            ts.push(tr(&[true; 9], 0.024, 0.5 + i as f64 * 0.01));
        }
        ts.push(tr(&[false, false, false, false, false, false, false, false, true], 0.006, 0.2));
        let c = cluster_transitions(&ts, 1.5);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members.len(), 5);
        assert_eq!(c[1].members.len(), 4);
        // the medoid of the first blob is the majority context
        assert_eq!(c[0].representative().occupied_count(), 0);
    }

    #[test]
    fn empty_input() {
        assert!(cluster_transitions(&[], 1.0).is_empty());
    }

    #[test]
    fn medoid_moves_to_majority() {
        let a = [false; 9];
        let mut b = [false; 9];
        b[0] = true;
        let mut ts = vec![tr(&b, 0.0, 0.0)];
        ts.extend((0..3).map(|_| tr(&a, 0.0, 0.1)));
        let c = cluster_transitions(&ts, 1.5);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].representative().occupied_count(), 0);
    }

    #[test]
    fn reward_examples() {
        let mut c = cluster_transitions(&[tr(&[false; 9], 0.006, 0.0), tr(&[false; 9], 0.018, 0.1)], 1.0);
        assert_eq!(c.len(), 1);
        init_arm_rewards(&mut c);
        assert!((c[0].reward + 0.012).abs() < 1e-15);

        let mut z = cluster_transitions(&[tr(&[true; 9], 0.0, 0.0)], 1.0);
        init_arm_rewards(&mut z);
        assert_eq!(z[0].reward, 0.0);

        let mut s = cluster_transitions(&[tr(&[true; 9], 0.024, 0.0)], 1.0);
        init_arm_rewards(&mut s);
        assert_eq!(s[0].reward, -0.024);
    }

    #[test]
    fn poison_examples() {
        let free = tr(&[false; 9], 0.01, 0.0);
        let wall = tr(&[true; 9], 0.01, 0.0);
        let mut c = cluster_transitions(&[free.clone(), wall.clone()], 1.0);
        init_arm_rewards(&mut c);
        normalize_rewards(&mut c);
        assert_eq!(c[0].prior, 1.0);
        let ex = vec![
            executed(free.clone(), false),
            executed(free.clone(), true),
            executed(free.clone(), false),
            executed(free, false),
        ];
        poison_rewards(&mut c, &ex, 1.0);
        assert_eq!(c[0].prior, 0.75);
        // nothing predicted into the wall cluster
        assert_eq!(c[1].prior, 1.0);

        let mut c2 = cluster_transitions(std::slice::from_ref(&wall), 1.0);
        init_arm_rewards(&mut c2);
        normalize_rewards(&mut c2);
        poison_rewards(&mut c2, &[executed(wall.clone(), true), executed(wall, true)], 1.0);
        assert_eq!(c2[0].prior, 0.0);
    }

    #[test]
    fn membership_needs_threshold() {
        let c = cluster_transitions(&[tr(&[false; 9], 0.0, 0.0)], 1.0);
        let far = ContextVector::from_parts(&[true; 9], 0.0);
        assert_eq!(predict_membership(&c, &far, 1.0), None);
        assert_eq!(predict_membership(&c, &far, 3.0), Some(0));
    }
}
