//! Context-aware sampling-based planning under unmodelled drift.
//!
//! A 2-D point robot plans with a nominal model while the true system drifts
//! to the right. Executed transitions are labelled as anomalous or not, and
//! their contexts steer both the edge cost and the bandit sampler of the
//! RRT planner away from regions where the model has failed before.

pub mod context;
pub mod cost;
pub mod deviation;
pub mod executor;
pub mod harness;
pub mod planner;
pub mod world2d;
