//! Batch trials over planner variants and the summary table.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::executor::{run_episode, EpisodeOutcome};
use crate::planner::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReplanStats {
    /// Failed episodes enter the statistics at the budget cap.
    #[default]
    AllEpisodes,
    SuccessesOnly,
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub variants: Vec<Variant>,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses the rayon default, 1 runs serially.
    pub jobs: usize,
    pub replan_stats: ReplanStats,
    pub keep_outcomes: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            trials: 30,
            base_seed: 0,
            jobs: 0,
            replan_stats: ReplanStats::AllEpisodes,
            keep_outcomes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub variant: String,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub replannings: usize,
    pub plannings: usize,
    pub steps: usize,
    pub safety_stops: usize,
    pub anomalies: usize,
    pub final_x: f64,
    pub final_y: f64,
}

impl TrialRow {
    fn from_outcome(variant: Variant, trial: usize, seed: u64, o: &EpisodeOutcome) -> Self {
        Self {
            variant: variant.name().to_string(),
            trial,
            seed,
            success: o.success,
            replannings: o.replannings,
            plannings: o.plans.len(),
            steps: o.steps.len(),
            safety_stops: o.safety_stops(),
            anomalies: o.executed.iter().filter(|e| e.label).count(),
            final_x: o.final_state.x,
            final_y: o.final_state.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub trials: usize,
    pub success_rate: f64,
    pub replannings_mean: f64,
    pub replannings_std: f64,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub scenario: String,
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<VariantSummary>,
    pub replan_stats: ReplanStats,
    /// Episode outcomes in row order, when requested.
    pub outcomes: Vec<EpisodeOutcome>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates rows per variant, in the order of `variants`.
pub fn summarize(rows: &[TrialRow], variants: &[Variant], stats: ReplanStats) -> Vec<VariantSummary> {
    variants
        .iter()
        .map(|v| {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.variant == v.name()).collect();
            let successes = mine.iter().filter(|r| r.success).count();
            let repl: Vec<f64> = mine
                .iter()
                .filter(|r| stats == ReplanStats::AllEpisodes || r.success)
                .map(|r| r.replannings as f64)
                .collect();
            let (mean, std) = mean_std(&repl);
            VariantSummary {
                variant: v.name().to_string(),
                trials: mine.len(),
                success_rate: if mine.is_empty() { 0.0 } else { successes as f64 / mine.len() as f64 },
                replannings_mean: mean,
                replannings_std: std,
            }
        })
        .collect()
}

pub fn run_batch(scenario: &Scenario, opts: &BatchOptions) -> BatchReport {
    let jobs: Vec<(Variant, usize)> = opts
        .variants
        .iter()
        .flat_map(|&v| (0..opts.trials).map(move |i| (v, i)))
        .collect();
    let run_one = |&(v, i): &(Variant, usize)| {
        let seed = opts.base_seed.wrapping_add(i as u64);
        let mut cfg = scenario.episode;
        cfg.planner.variant = v;
        let o = run_episode(&scenario.world, scenario.start, &cfg, seed);
        (TrialRow::from_outcome(v, i, seed, &o), o)
    };
    let results: Vec<(TrialRow, EpisodeOutcome)> = if opts.jobs == 1 {
        jobs.iter().map(run_one).collect()
    } else if opts.jobs == 0 {
        jobs.par_iter().map(run_one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .expect("thread pool")
            .install(|| jobs.par_iter().map(run_one).collect())
    };
    // par_iter().collect() preserves input order, so rows are already sorted
    // by (variant, trial).
    let (rows, outcomes): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summaries = summarize(&rows, &opts.variants, opts.replan_stats);
    BatchReport {
        scenario: scenario.name.clone(),
        rows,
        summaries,
        replan_stats: opts.replan_stats,
        outcomes: if opts.keep_outcomes { outcomes } else { Vec::new() },
    }
}

impl BatchReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant.name())
    }

    pub fn rows_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }

    pub fn summary_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.summaries {
            w.serialize(s)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }

    /// Plain-text table: success rate mean, replannings mean (std).
    pub fn table(&self) -> String {
        let width = self.summaries.iter().map(|s| s.variant.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.scenario);
        let _ = writeln!(out, "{:width$}  {:>12}  {:>16}", "", "Success rate", "N. replannings");
        let _ = writeln!(out, "{:width$}  {:>12}  {:>16}", "", "mean", "mean (std.dev.)");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:width$}  {:>12.2}  {:>16}",
                s.variant,
                s.success_rate,
                format!("{:.1}({:.2})", s.replannings_mean, s.replannings_std)
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv_err = |e: csv::Error| std::io::Error::other(e.to_string());
        std::fs::write(dir.join("trials.csv"), self.rows_csv().map_err(csv_err)?)?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv().map_err(csv_err)?)?;
        std::fs::write(dir.join("summary.txt"), self.table())?;
        Ok(())
    }
}

/// Parses `trials.csv` back into rows.
pub fn read_rows(csv_text: &str) -> Result<Vec<TrialRow>, csv::Error> {
    csv::Reader::from_reader(csv_text.as_bytes()).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: Variant, trial: usize, success: bool, replannings: usize) -> TrialRow {
        TrialRow {
            variant: v.name().into(),
            trial,
            seed: trial as u64,
            success,
            replannings,
            plannings: replannings + 1,
            steps: 0,
            safety_stops: 0,
            anomalies: 0,
            final_x: 0.0,
            final_y: 0.0,
        }
    }

    #[test]
    fn summary_statistics() {
        let rows = vec![
            row(Variant::CtxRrt, 0, true, 2),
            row(Variant::CtxRrt, 1, true, 4),
            row(Variant::CtxRrt, 2, false, 10),
            row(Variant::MabRrt, 0, false, 10),
        ];
        let all = summarize(&rows, &[Variant::CtxRrt, Variant::MabRrt], ReplanStats::AllEpisodes);
        assert_eq!(all[0].trials, 3);
        assert!((all[0].success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!((all[0].replannings_mean - 16.0 / 3.0).abs() < 1e-12);
        assert_eq!(all[1].success_rate, 0.0);
        let succ = summarize(&rows, &[Variant::CtxRrt], ReplanStats::SuccessesOnly);
        assert_eq!(succ[0].replannings_mean, 3.0);
        assert!((succ[0].replannings_std - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let report = BatchReport {
            scenario: "s".into(),
            rows: vec![row(Variant::CtxRrt, 0, true, 3), row(Variant::MabRrt, 1, false, 10)],
            summaries: Vec::new(),
            replan_stats: ReplanStats::AllEpisodes,
            outcomes: Vec::new(),
        };
        let text = report.rows_csv().unwrap();
        assert!(text.starts_with("variant,trial,seed,success,replannings"));
        assert_eq!(read_rows(&text).unwrap(), report.rows);
    }
}
