//! Command-line front end.
//!
//! Usage:
//!     ctxrrt validate --scenario scenarios/scenario_a.toml
//!     ctxrrt run --scenario scenarios/scenario_a.toml --variant all --trials 30 --out results/a
//!     ctxrrt episode --scenario scenarios/scenario_a.toml --variant CTX-RRT --seed 3 --out ep/
//!     ctxrrt plot --trace ep/trace.csv [--scenario scenarios/scenario_a.toml] --out ep/trace.svg
//!
//! Exit status is 2 for configuration errors and 1 for anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ctxrrt::executor::run_episode;
use ctxrrt::harness::svg::Overlay;
use ctxrrt::harness::{
    executed_csv, load_scenario, read_trace, render_outcome_svg, render_report_svg, render_world_svg,
    run_batch, trace_csv, write_svg, BatchOptions, ReplanStats, Scenario, ScenarioError,
};
use ctxrrt::planner::Variant;
use ctxrrt::world2d::{Rect, World};

#[derive(Parser)]
#[command(name = "ctxrrt", version, about = "Context-aware RRT planning under drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run repeated trials of one or all planner variants.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Variant name, or `all`.
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        /// Trial i runs with seed `seed + i`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Average replannings over successful episodes only.
        #[arg(long)]
        successes_only: bool,
        #[arg(long, env = "CTXRRT_OUT_DIR", default_value = "results")]
        out: PathBuf,
    },
    /// Run one episode and write its trace, transition store and figure.
    Episode {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "CTX-RRT")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "CTXRRT_OUT_DIR", default_value = "results")]
        out: PathBuf,
    },
    /// Draw a trace file (or just the world) as SVG.
    Plot {
        /// Draw the world of this scenario under the trace.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn scenario(path: &PathBuf) -> Result<Scenario> {
    load_scenario(path).with_context(|| format!("scenario {}", path.display()))
}

fn variants(name: &str) -> Result<Vec<Variant>> {
    if name.eq_ignore_ascii_case("all") {
        Ok(Variant::ALL.to_vec())
    } else {
        Ok(vec![name.parse::<Variant>().map_err(anyhow::Error::msg)?])
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { scenario: path } => {
            let s = scenario(&path)?;
            println!(
                "{}: ok ({} obstacles, {} drift regions{})",
                s.name,
                s.world.obstacles.len(),
                s.world.drift.regions.len(),
                if s.reconstruction { ", reconstructed geometry" } else { "" }
            );
        }
        Command::Run {
            scenario: path,
            variant,
            trials,
            seed,
            jobs,
            successes_only,
            out,
        } => {
            let s = scenario(&path)?;
            let opts = BatchOptions {
                variants: variants(&variant)?,
                trials,
                base_seed: seed,
                jobs,
                replan_stats: if successes_only {
                    ReplanStats::SuccessesOnly
                } else {
                    ReplanStats::AllEpisodes
                },
                keep_outcomes: false,
            };
            let report = run_batch(&s, &opts);
            report.write(&out).with_context(|| format!("writing {}", out.display()))?;
            write_svg(&out.join("summary.svg"), &render_report_svg(&s.world, s.start, &report))?;
            print!("{}", report.table());
        }
        Command::Episode {
            scenario: path,
            variant,
            seed,
            out,
        } => {
            let s = scenario(&path)?;
            let mut cfg = s.episode;
            cfg.planner.variant = variant;
            let o = run_episode(&s.world, s.start, &cfg, seed);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("trace.csv"), trace_csv(&o)?)?;
            std::fs::write(out.join("executed.csv"), executed_csv(&o.executed)?)?;
            let title = format!("{} / {} / seed {}", s.name, variant, seed);
            write_svg(&out.join("episode.svg"), &render_outcome_svg(&title, &s.world, s.start, Some(&o)))?;
            println!(
                "{}: success={} replannings={} safety_stops={} steps={}",
                variant,
                o.success,
                o.replannings,
                o.safety_stops(),
                o.steps.len()
            );
        }
        Command::Plot {
            scenario: path,
            trace,
            out,
        } => {
            let overlay = match &trace {
                Some(t) => {
                    let text = std::fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?;
                    Overlay::from_trace(&read_trace(&text)?)
                }
                None => Overlay::default(),
            };
            let svg = match &path {
                Some(p) => {
                    let s = scenario(p)?;
                    render_world_svg(&s.name, &s.world, Some(s.start), &overlay)
                }
                None => {
                    let blank = World::open(Rect::from_coords(0.0, 0.0, 0.0, 0.0), 0.0);
                    render_world_svg("trace", &blank, None, &overlay)
                }
            };
            write_svg(&out, &svg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ScenarioError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
