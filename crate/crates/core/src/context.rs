//! Local-environment context of a transition and the similarity kernel
//! built on it.
//!
//! A context is a `w x h` occupancy grid centred on the transition's start
//! state followed by one extra entry holding the model deviation estimate.
//! Grid points are flattened row-major starting at the grid's min corner:
//! index `row * w + col`, with `row` increasing along `y` and `col` along `x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world2d::{State, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("context length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("grid dimensions must be odd and >= 1, got {0}x{1}")]
    EvenGrid(usize, usize),
    #[error("grid resolution must be positive, got {0}")]
    BadResolution(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            resolution: 0.05,
        }
    }
}

impl GridSpec {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self, ContextError> {
        let g = Self {
            width,
            height,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        if self.width == 0 || self.height == 0 || self.width.is_multiple_of(2) || self.height.is_multiple_of(2) {
            return Err(ContextError::EvenGrid(self.width, self.height));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(ContextError::BadResolution(self.resolution));
        }
        Ok(())
    }

    /// Number of occupancy entries `F`.
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// World position of grid point `i` for a grid centred at `center`.
    pub fn point(&self, center: &State, i: usize) -> State {
        let col = (i % self.width) as f64 - (self.width / 2) as f64;
        let row = (i / self.width) as f64 - (self.height / 2) as f64;
        State::new(center.x + col * self.resolution, center.y + row * self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    /// `F` binary occupancy entries followed by the MDE entry.
    values: Vec<f64>,
}

impl ContextVector {
    /// Builds a context from raw occupancy flags and an MDE value.
    pub fn from_parts(occ: &[bool], mde: f64) -> Self {
        let mut values: Vec<f64> = occ.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        values.push(mde);
        Self { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn mde_entry(&self) -> f64 {
        *self.values.last().expect("context has an mde entry")
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy().iter().filter(|&&v| v > 0.5).count()
    }

    /// Euclidean distance; panics on length mismatch (use [`distance`] for a checked version).
    pub fn dist(&self, other: &ContextVector) -> f64 {
        assert_eq!(self.len(), other.len(), "context length mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Occupancy grid at `x` plus `mde_value`. Grid points outside the world
/// bounds count as occupied.
pub fn context_vector(world: &World, grid: &GridSpec, x: &State, mde_value: f64) -> ContextVector {
    let mut values = Vec::with_capacity(grid.cells() + 1);
    for i in 0..grid.cells() {
        let p = grid.point(x, i);
        values.push(if world.occupied(&p) { 1.0 } else { 0.0 });
    }
    values.push(mde_value);
    ContextVector { values }
}

pub fn distance(a: &ContextVector, b: &ContextVector) -> Result<f64, ContextError> {
    if a.len() != b.len() {
        return Err(ContextError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.dist(b))
}

/// `exp(-d / 2)` for a context distance `d`.
#[inline]
pub fn similarity_from_distance(d: f64) -> f64 {
    (-0.5 * d).exp()
}

/// Similarity in `(0, 1]`; 1 iff the contexts are equal.
pub fn similarity(a: &ContextVector, b: &ContextVector) -> Result<f64, ContextError> {
    distance(a, b).map(similarity_from_distance)
}

/// Per-entry weights applied before the distance. Identity by default.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContextWeights(pub Option<Vec<f64>>);

impl ContextWeights {
    pub fn weighted_similarity(&self, a: &ContextVector, b: &ContextVector) -> Result<f64, ContextError> {
        let Some(w) = &self.0 else {
            return similarity(a, b);
        };
        if a.len() != b.len() {
            return Err(ContextError::LengthMismatch(a.len(), b.len()));
        }
        if w.len() != a.len() {
            return Err(ContextError::LengthMismatch(w.len(), a.len()));
        }
        let d = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .zip(w)
            .map(|((x, y), wi)| wi * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        Ok(similarity_from_distance(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world2d::Rect;
    use proptest::prelude::*;

    fn world(obstacles: Vec<Rect>) -> World {
        World {
            obstacles,
            ..World::open(Rect::from_coords(0.9, 0.9, 1.0, 1.0), 0.0)
        }
    }

    #[test]
    fn free_space_context() {
        let w = world(vec![Rect::from_coords(0.8, 0.0, 0.85, 0.1)]);
        let z = context_vector(&w, &GridSpec::default(), &State::new(0.5, 0.5), 0.012);
        assert_eq!(z.len(), 26);
        assert_eq!(z.occupied_count(), 0);
        assert_eq!(z.mde_entry(), 0.012);
    }

    #[test]
    fn obstacle_face_fills_right_column() {
        // face at x = 0.6, robot 0.1 to its left: only the col at +0.1 lands on it
        let w = world(vec![Rect::from_coords(0.6, 0.2, 0.8, 0.8)]);
        let z = context_vector(&w, &GridSpec::default(), &State::new(0.5, 0.5), 0.0);
        for i in 0..25 {
            let expected = if i % 5 == 4 { 1.0 } else { 0.0 };
            assert_eq!(z.as_slice()[i], expected, "cell {i}");
        }
    }

    #[test]
    fn face_at_one_cell_fills_two_columns() {
        // closed obstacles: the +0.05 column sits exactly on the face
        let w = world(vec![Rect::from_coords(0.55, 0.2, 0.8, 0.8)]);
        let z = context_vector(&w, &GridSpec::default(), &State::new(0.5, 0.5), 0.0);
        for i in 0..25 {
            let expected = if i % 5 >= 3 { 1.0 } else { 0.0 };
            assert_eq!(z.as_slice()[i], expected, "cell {i}");
        }
    }

    #[test]
    fn corner_marks_out_of_bounds() {
        let w = world(vec![]);
        let g = GridSpec::default();
        let z = context_vector(&w, &g, &State::new(0.0, 0.0), 0.0);
        for i in 0..25 {
            let p = g.point(&State::new(0.0, 0.0), i);
            let expect_occ = p.x < 0.0 || p.y < 0.0;
            assert_eq!(z.as_slice()[i] == 1.0, expect_occ, "cell {i} at {p:?}");
        }
        assert_eq!(z.occupied_count(), 25 - 9);
    }

    #[test]
    fn flattening_starts_at_min_corner() {
        let g = GridSpec::default();
        let c = State::new(0.5, 0.5);
        let p0 = g.point(&c, 0);
        assert!((p0.x - 0.4).abs() < 1e-12 && (p0.y - 0.4).abs() < 1e-12);
        let p1 = g.point(&c, 1);
        assert!((p1.x - 0.45).abs() < 1e-12 && (p1.y - 0.4).abs() < 1e-12);
        let p5 = g.point(&c, 5);
        assert!((p5.x - 0.4).abs() < 1e-12 && (p5.y - 0.45).abs() < 1e-12);
        assert_eq!(g.point(&c, 12), c);
    }

    #[test]
    fn similarity_cases() {
        let a = ContextVector::from_parts(&[false; 25], 0.012);
        assert_eq!(similarity(&a, &a).unwrap(), 1.0);
        let mut occ = [false; 25];
        occ[7] = true;
        let b = ContextVector::from_parts(&occ, 0.012);
        assert!((similarity(&a, &b).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-15);
        let short = ContextVector::from_parts(&[false; 9], 0.0);
        assert_eq!(similarity(&a, &short), Err(ContextError::LengthMismatch(26, 10)));
    }

    #[test]
    fn identity_weights_match_plain_similarity() {
        let a = ContextVector::from_parts(&[true, false, true], 0.01);
        let b = ContextVector::from_parts(&[false, false, true], 0.02);
        let plain = similarity(&a, &b).unwrap();
        assert_eq!(ContextWeights::default().weighted_similarity(&a, &b).unwrap(), plain);
        let ones = ContextWeights(Some(vec![1.0; 4]));
        assert!((ones.weighted_similarity(&a, &b).unwrap() - plain).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4, 5, 0.05).is_err());
        assert!(GridSpec::new(5, 5, 0.0).is_err());
        assert!(GridSpec::new(1, 3, 0.1).is_ok());
    }

    fn ctx() -> impl Strategy<Value = ContextVector> {
        (proptest::collection::vec(any::<bool>(), 25), 0.0..0.05f64)
            .prop_map(|(o, m)| ContextVector::from_parts(&o, m))
    }

    proptest! {
        #[test]
        fn similarity_bounds_and_symmetry(a in ctx(), b in ctx()) {
            let s = similarity(&a, &b).unwrap();
            prop_assert!(s > 0.0 && s <= 1.0);
            prop_assert_eq!(s, similarity(&b, &a).unwrap());
            prop_assert_eq!(s == 1.0, a == b);
        }

        #[test]
        fn similarity_monotone_in_distance(a in ctx(), b in ctx(), c in ctx()) {
            let (dab, dac) = (a.dist(&b), a.dist(&c));
            let (sab, sac) = (similarity(&a, &b).unwrap(), similarity(&a, &c).unwrap());
            if dab <= dac {
                prop_assert!(sab >= sac);
            }
        }
    }
}
