//! Planar world for a point robot: state and control spaces, rectangular
//! obstacles, a position-dependent drift field and the two one-step models.
//!
//! The nominal model is a single integrator `x' = x + T u`. The true model
//! adds a rightward drift `[delta(x), 0]` and stops the robot at the first
//! contact with an obstacle. Both models clamp to the world bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance (along the swept segment) kept between a stopped robot and the
/// obstacle it touched, so the stopped state stays outside the closed obstacle.
pub const CONTACT_BACKOFF: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("control ({ux}, {uy}) outside bounds [{lo}, {hi}]")]
    InvalidControl { ux: f64, uy: f64, lo: f64, hi: f64 },
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
    #[error("drift region {0} has negative or non-finite delta {1}")]
    InvalidDrift(usize, f64),
    #[error("drift regions {0} and {1} overlap")]
    OverlappingDrift(usize, usize),
    #[error("goal region is not contained in the world bounds")]
    GoalOutOfBounds,
    #[error("goal region intersects obstacle {0}")]
    GoalInObstacle(usize),
    #[error("control duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("control bound must be positive, got {0}")]
    InvalidControlBound(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(&self, other: &State) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub ux: f64,
    pub uy: f64,
}

impl Control {
    pub const fn new(ux: f64, uy: f64) -> Self {
        Self { ux, uy }
    }

    pub const ZERO: Control = Control::new(0.0, 0.0);
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: State,
    pub max: State,
}

impl Rect {
    pub fn new(min: State, max: State) -> Result<Self, WorldError> {
        let r = Self { min, max };
        r.validate()?;
        Ok(r)
    }

    /// Unchecked constructor from corner coordinates.
    pub const fn from_coords(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: State::new(x0, y0),
            max: State::new(x1, y1),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(WorldError::InvalidRect(format!("non-finite corner in {self:?}")));
        }
        if self.min.x > self.max.x || self.min.y > self.max.y {
            return Err(WorldError::InvalidRect(format!(
                "min corner ({}, {}) exceeds max corner ({}, {})",
                self.min.x, self.min.y, self.max.x, self.max.y
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &State) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Closed-set intersection (shared boundaries count).
    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    /// Intersection with positive area.
    pub fn overlaps_interior(&self, other: &Rect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }

    pub fn center(&self) -> State {
        State::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn clamp(&self, p: State) -> State {
        State::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    /// Smallest segment parameter `t` in `[0, 1]` at which `a + t (b - a)`
    /// lies in the rectangle, or `None` if the segment misses it.
    pub fn segment_entry(&self, a: &State, b: &State) -> Option<f64> {
        let d = [b.x - a.x, b.y - a.y];
        let p = [a.x, a.y];
        let lo = [self.min.x, self.min.y];
        let hi = [self.max.x, self.max.y];
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for axis in 0..2 {
            if d[axis] == 0.0 {
                if p[axis] < lo[axis] || p[axis] > hi[axis] {
                    return None;
                }
            } else {
                let inv = 1.0 / d[axis];
                let mut ta = (lo[axis] - p[axis]) * inv;
                let mut tb = (hi[axis] - p[axis]) * inv;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRegion {
    pub rect: Rect,
    pub delta: f64,
}

/// Piecewise-constant drift magnitude.
///
/// Regions are half-open `[min, max)` for lookup so that adjacent bands
/// sharing an edge never both claim a point; the world's upper bounds are
/// closed so every in-bounds point resolves to exactly one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    pub regions: Vec<DriftRegion>,
    pub default_delta: f64,
}

impl DriftField {
    pub fn uniform(delta: f64) -> Self {
        Self {
            regions: Vec::new(),
            default_delta: delta,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.default_delta.is_finite() && self.default_delta >= 0.0) {
            return Err(WorldError::InvalidDrift(usize::MAX, self.default_delta));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.rect.validate()?;
            if !(r.delta.is_finite() && r.delta >= 0.0) {
                return Err(WorldError::InvalidDrift(i, r.delta));
            }
        }
        for i in 0..self.regions.len() {
            for j in i + 1..self.regions.len() {
                if self.regions[i].rect.overlaps_interior(&self.regions[j].rect) {
                    return Err(WorldError::OverlappingDrift(i, j));
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, p: &State, bounds: &Rect) -> f64 {
        let in_axis = |v: f64, lo: f64, hi: f64, wall: f64| v >= lo && (v < hi || (hi >= wall && v <= hi));
        self.regions
            .iter()
            .find(|r| {
                in_axis(p.x, r.rect.min.x, r.rect.max.x, bounds.max.x)
                    && in_axis(p.y, r.rect.min.y, r.rect.max.y, bounds.max.y)
            })
            .map_or(self.default_delta, |r| r.delta)
    }

    /// All distinct drift levels, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.regions.iter().map(|r| r.delta).collect();
        v.push(self.default_delta);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// Immutable world description shared by planner, executor and harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub bounds: Rect,
    pub obstacles: Vec<Rect>,
    pub goal: Rect,
    pub drift: DriftField,
    /// Control duration `T`.
    pub control_duration: f64,
    /// Symmetric per-axis control bound: `U = [-u_max, u_max]^2`.
    pub control_bound: f64,
}

impl World {
    pub const DEFAULT_CONTROL_DURATION: f64 = 0.1;
    pub const DEFAULT_CONTROL_BOUND: f64 = 0.5;

    /// Unit square, no obstacles, uniform drift.
    pub fn open(goal: Rect, delta: f64) -> Self {
        Self {
            bounds: Rect::from_coords(0.0, 0.0, 1.0, 1.0),
            obstacles: Vec::new(),
            goal,
            drift: DriftField::uniform(delta),
            control_duration: Self::DEFAULT_CONTROL_DURATION,
            control_bound: Self::DEFAULT_CONTROL_BOUND,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        self.bounds.validate()?;
        self.goal.validate()?;
        for o in &self.obstacles {
            o.validate()?;
        }
        self.drift.validate()?;
        if !(self.control_duration.is_finite() && self.control_duration > 0.0) {
            return Err(WorldError::InvalidDuration(self.control_duration));
        }
        if !(self.control_bound.is_finite() && self.control_bound > 0.0) {
            return Err(WorldError::InvalidControlBound(self.control_bound));
        }
        if !self.bounds.contains_rect(&self.goal) {
            return Err(WorldError::GoalOutOfBounds);
        }
        if let Some(i) = self.obstacles.iter().position(|o| o.intersects(&self.goal)) {
            return Err(WorldError::GoalInObstacle(i));
        }
        Ok(())
    }

    pub fn check_control(&self, u: &Control) -> Result<(), WorldError> {
        let b = self.control_bound;
        let ok = |v: f64| v.is_finite() && (-b..=b).contains(&v);
        if ok(u.ux) && ok(u.uy) {
            Ok(())
        } else {
            Err(WorldError::InvalidControl {
                ux: u.ux,
                uy: u.uy,
                lo: -b,
                hi: b,
            })
        }
    }

    pub fn in_bounds(&self, x: &State) -> bool {
        self.bounds.contains(x)
    }

    /// `x + T u`, clamped to the bounds.
    pub fn nominal_step(&self, x: &State, u: &Control) -> Result<State, WorldError> {
        self.check_control(u)?;
        Ok(self.nominal_step_unchecked(x, u))
    }

    pub(crate) fn nominal_step_unchecked(&self, x: &State, u: &Control) -> State {
        let t = self.control_duration;
        self.bounds.clamp(State::new(x.x + t * u.ux, x.y + t * u.uy))
    }

    /// `x + T u + [delta(x), 0]`, stopping at the first obstacle contact.
    pub fn true_step(&self, x: &State, u: &Control) -> Result<State, WorldError> {
        self.check_control(u)?;
        let t = self.control_duration;
        let target = State::new(x.x + t * u.ux + self.drift_at(x), x.y + t * u.uy);
        match self.first_contact(x, &target) {
            Some(c) => Ok(c),
            None => Ok(self.bounds.clamp(target)),
        }
    }

    pub fn drift_at(&self, x: &State) -> f64 {
        self.drift.lookup(x, &self.bounds)
    }

    pub fn segment_collides(&self, a: &State, b: &State) -> bool {
        self.obstacles.iter().any(|o| o.segment_entry(a, b).is_some())
    }

    /// Smallest entry parameter over all obstacles.
    pub fn segment_entry(&self, a: &State, b: &State) -> Option<f64> {
        self.obstacles
            .iter()
            .filter_map(|o| o.segment_entry(a, b))
            .min_by(f64::total_cmp)
    }

    /// Where a robot sweeping `a -> b` stops, if it touches an obstacle.
    pub fn first_contact(&self, a: &State, b: &State) -> Option<State> {
        let t_hit = self.segment_entry(a, b)?;
        let len = a.dist(b);
        let t = if len > 0.0 {
            (t_hit - CONTACT_BACKOFF / len).max(0.0)
        } else {
            0.0
        };
        Some(State::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
    }

    pub fn point_in_obstacle(&self, p: &State) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Occupied means inside a closed obstacle or outside the bounds.
    pub fn occupied(&self, p: &State) -> bool {
        !self.bounds.contains(p) || self.point_in_obstacle(p)
    }

    pub fn in_goal(&self, x: &State) -> bool {
        self.goal.contains(x)
    }

    pub fn is_free(&self, x: &State) -> bool {
        self.in_bounds(x) && !self.point_in_obstacle(x)
    }
}
