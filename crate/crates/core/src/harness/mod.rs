//! Experiment harness: scenario files, batch runs, trace files and SVG figures.

pub mod batch;
pub mod scenario;
pub mod svg;
pub mod trace;

pub use batch::{mean_std, read_rows, run_batch, summarize, BatchOptions, BatchReport, ReplanStats, TrialRow, VariantSummary};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
pub use svg::{render_outcome_svg, render_report_svg, render_world_svg, write_svg};
pub use trace::{executed_csv, read_trace, trace_csv, TraceRow};
