//! Search tree with a bucket-grid nearest-neighbour index.

use crate::world2d::{Control, Rect, State};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub state: State,
    pub parent: Option<NodeId>,
    pub control: Control,
    /// Cost of the transition from the parent into this node.
    pub edge_cost: f64,
    pub cost_to_come: f64,
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    index: BucketGrid,
}

impl Tree {
    pub fn new(root: State, bounds: Rect) -> Self {
        let mut index = BucketGrid::new(bounds, 32);
        index.insert(0, &root);
        Self {
            nodes: vec![TreeNode {
                state: root,
                parent: None,
                control: Control::ZERO,
                edge_cost: 0.0,
                cost_to_come: 0.0,
            }],
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn add(&mut self, parent: NodeId, state: State, control: Control, edge_cost: f64) -> NodeId {
        let id = self.nodes.len();
        let cost_to_come = self.nodes[parent].cost_to_come + edge_cost;
        self.nodes.push(TreeNode {
            state,
            parent: Some(parent),
            control,
            edge_cost,
            cost_to_come,
        });
        self.index.insert(id, &state);
        id
    }

    pub fn nearest(&self, target: &State) -> NodeId {
        self.index
            .nearest(target, &self.nodes)
            .expect("tree always holds the root")
    }

    /// Node ids from the root to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

/// Uniform bucket grid over the bounds. Nearest queries scan rings of cells
/// outward and stop once the ring's inner distance exceeds the best match.
#[derive(Debug, Clone)]
struct BucketGrid {
    bounds: Rect,
    n: usize,
    cell_w: f64,
    cell_h: f64,
    cells: Vec<Vec<NodeId>>,
}

impl BucketGrid {
    fn new(bounds: Rect, n: usize) -> Self {
        Self {
            bounds,
            n,
            cell_w: (bounds.width() / n as f64).max(f64::MIN_POSITIVE),
            cell_h: (bounds.height() / n as f64).max(f64::MIN_POSITIVE),
            cells: vec![Vec::new(); n * n],
        }
    }

    fn cell_of(&self, p: &State) -> (usize, usize) {
        let cx = ((p.x - self.bounds.min.x) / self.cell_w).floor();
        let cy = ((p.y - self.bounds.min.y) / self.cell_h).floor();
        let clampi = |v: f64| (v.max(0.0) as usize).min(self.n - 1);
        (clampi(cx), clampi(cy))
    }

    fn insert(&mut self, id: NodeId, p: &State) {
        let (cx, cy) = self.cell_of(p);
        self.cells[cy * self.n + cx].push(id);
    }

    fn nearest(&self, target: &State, nodes: &[TreeNode]) -> Option<NodeId> {
        let (cx, cy) = self.cell_of(target);
        let mut best: Option<(f64, NodeId)> = None;
        let min_cell = self.cell_w.min(self.cell_h);
        for ring in 0..=self.n {
            if let Some((d2, _)) = best {
                // every unvisited cell is at least (ring - 1) cells away
                let inner = (ring as f64 - 1.0).max(0.0) * min_cell;
                if inner * inner > d2 {
                    break;
                }
            }
            let r = ring as isize;
            let (x0, x1) = (cx as isize - r, cx as isize + r);
            let (y0, y1) = (cy as isize - r, cy as isize + r);
            for y in y0..=y1 {
                if y < 0 || y >= self.n as isize {
                    continue;
                }
                let on_edge_row = y == y0 || y == y1;
                let mut x = x0;
                while x <= x1 {
                    if x >= 0 && x < self.n as isize {
                        for &id in &self.cells[y as usize * self.n + x as usize] {
                            let d2 = nodes[id].state.dist_sq(target);
                            // ties resolve to the older node
                            let better = match best {
                                None => true,
                                Some((bd, bid)) => d2 < bd || (d2 == bd && id < bid),
                            };
                            if better {
                                best = Some((d2, id));
                            }
                        }
                    }
                    x += if on_edge_row || x == x1 { 1 } else { x1 - x0 };
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cost_to_come_accumulates() {
        let b = Rect::from_coords(0.0, 0.0, 1.0, 1.0);
        let mut t = Tree::new(State::new(0.1, 0.1), b);
        let a = t.add(0, State::new(0.2, 0.1), Control::new(0.5, 0.0), 0.25);
        let c = t.add(a, State::new(0.3, 0.1), Control::new(0.5, 0.0), 0.5);
        assert_eq!(t.node(0).cost_to_come, 0.0);
        assert_eq!(t.node(c).cost_to_come, 0.75);
        assert_eq!(t.path_to(c), vec![0, a, c]);
    }

    proptest! {
        #[test]
        fn nearest_matches_linear_scan(
            pts in proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..300),
            q in (-0.2..1.2f64, -0.2..1.2f64),
        ) {
            let b = Rect::from_coords(0.0, 0.0, 1.0, 1.0);
            let mut t = Tree::new(State::new(pts[0].0, pts[0].1), b);
            for p in &pts[1..] {
                t.add(0, State::new(p.0, p.1), Control::ZERO, 0.0);
            }
            let target = State::new(q.0, q.1);
            let got = t.nearest(&target);
            let brute = (0..t.len())
                .min_by(|&a, &c| t.node(a).state.dist_sq(&target).total_cmp(&t.node(c).state.dist_sq(&target)))
                .unwrap();
            prop_assert_eq!(t.node(got).state.dist_sq(&target), t.node(brute).state.dist_sq(&target));
        }
    }
}
