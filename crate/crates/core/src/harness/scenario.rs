//! Scenario files.
//!
//! A scenario is a TOML document (`schema_version = 1`) that fully
//! determines the world, the start state and every tuning constant. Omitted
//! sections fall back to the library defaults (`delta_safe = 0.05`,
//! `penalty = 10`, a 5x5 context grid at resolution 0.05).

use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::context::GridSpec;
use crate::deviation::AnomalyConfig;
use crate::executor::EpisodeConfig;
use crate::planner::{PlannerConfig, PullReward};
use crate::world2d::{DriftField, DriftRegion, Rect, State, World, WorldError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{}", match .line { Some(l) => format!("line {l}: {message}"), None => message.clone() })]
    Invalid { line: Option<usize>, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub reconstruction: bool,
    pub world: World,
    pub start: State,
    pub episode: EpisodeConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    reconstruction: bool,
    world: RawWorld,
    #[serde(default)]
    drift: Option<RawDrift>,
    #[serde(default)]
    context: Option<Spanned<RawGrid>>,
    #[serde(default)]
    safety: Option<RawSafety>,
    #[serde(default)]
    anomaly: Option<AnomalyConfig>,
    #[serde(default)]
    cost: Option<RawCost>,
    #[serde(default)]
    planner: Option<RawPlanner>,
    #[serde(default)]
    episode: Option<RawEpisode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRect {
    min: [f64; 2],
    max: [f64; 2],
}

impl RawRect {
    fn rect(&self) -> Rect {
        Rect::from_coords(self.min[0], self.min[1], self.max[0], self.max[1])
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorld {
    #[serde(default)]
    bounds: Option<Spanned<RawRect>>,
    start: Spanned<[f64; 2]>,
    goal: Spanned<RawRect>,
    #[serde(default)]
    control_duration: Option<f64>,
    #[serde(default)]
    control_bound: Option<f64>,
    #[serde(default)]
    obstacles: Vec<Spanned<RawRect>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    min: [f64; 2],
    max: [f64; 2],
    delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    default: f64,
    #[serde(default)]
    regions: Vec<Spanned<RawRegion>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    width: usize,
    height: usize,
    resolution: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSafety {
    delta_safe: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    penalty: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    max_iterations: Option<usize>,
    runs_per_planning: Option<usize>,
    goal_bias: Option<f64>,
    controls_per_extension: Option<usize>,
    cluster_threshold: Option<f64>,
    sample_sigma: Option<f64>,
    prior_weight: Option<f64>,
    pull_reward: Option<PullReward>,
    prune_with_incumbent: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpisode {
    max_replannings: Option<usize>,
    count_failed_plans: Option<bool>,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn invalid(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            line: span.map(|s| line_col(self.src, s.start).0),
            message: message.into(),
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&src)
}

pub fn parse_scenario(src: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let cx = Ctx { src };
    if raw.schema_version != SCHEMA_VERSION {
        return Err(cx.invalid(
            None,
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", raw.schema_version),
        ));
    }

    let check_rect = |r: &Spanned<RawRect>, what: &str| -> Result<Rect, ScenarioError> {
        let rect = r.get_ref().rect();
        rect.validate()
            .map_err(|e| cx.invalid(Some(r.span()), format!("{what}: {e}")))?;
        Ok(rect)
    };

    let bounds = match &raw.world.bounds {
        Some(b) => check_rect(b, "bounds")?,
        None => Rect::from_coords(0.0, 0.0, 1.0, 1.0),
    };
    let goal = check_rect(&raw.world.goal, "goal")?;
    let obstacles = raw
        .world
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| check_rect(o, &format!("obstacle {i}")))
        .collect::<Result<Vec<_>, _>>()?;

    let drift = match &raw.drift {
        Some(d) => {
            let mut regions = Vec::new();
            for (i, r) in d.regions.iter().enumerate() {
                let rr = r.get_ref();
                let rect = Rect::from_coords(rr.min[0], rr.min[1], rr.max[0], rr.max[1]);
                rect.validate()
                    .map_err(|e| cx.invalid(Some(r.span()), format!("drift region {i}: {e}")))?;
                regions.push(DriftRegion { rect, delta: rr.delta });
            }
            DriftField {
                regions,
                default_delta: d.default,
            }
        }
        None => DriftField::uniform(0.0),
    };

    let world = World {
        bounds,
        obstacles,
        goal,
        drift,
        control_duration: raw.world.control_duration.unwrap_or(World::DEFAULT_CONTROL_DURATION),
        control_bound: raw.world.control_bound.unwrap_or(World::DEFAULT_CONTROL_BOUND),
    };
    world.validate().map_err(|e| {
        let span = match &e {
            WorldError::GoalInObstacle(i) => Some(raw.world.obstacles[*i].span()),
            WorldError::GoalOutOfBounds => Some(raw.world.goal.span()),
            WorldError::OverlappingDrift(_, j) | WorldError::InvalidDrift(j, _) => raw
                .drift
                .as_ref()
                .and_then(|d| d.regions.get(*j))
                .map(|r| r.span()),
            _ => None,
        };
        cx.invalid(span, e.to_string())
    })?;

    let s = raw.world.start.get_ref();
    let start = State::new(s[0], s[1]);
    if !world.is_free(&start) {
        return Err(cx.invalid(
            Some(raw.world.start.span()),
            format!("start ({}, {}) is out of bounds or inside an obstacle", s[0], s[1]),
        ));
    }

    let mut episode = EpisodeConfig::default();
    if let Some(g) = &raw.context {
        let gr = g.get_ref();
        episode.grid = GridSpec::new(gr.width, gr.height, gr.resolution)
            .map_err(|e| cx.invalid(Some(g.span()), e.to_string()))?;
    }
    if let Some(sf) = &raw.safety {
        if !(sf.delta_safe.is_finite() && sf.delta_safe > 0.0) {
            return Err(cx.invalid(None, format!("delta_safe must be positive, got {}", sf.delta_safe)));
        }
        episode.delta_safe = sf.delta_safe;
    }
    if let Some(a) = raw.anomaly {
        a.validate().map_err(|m| cx.invalid(None, m))?;
        episode.anomaly = a;
    }
    if let Some(c) = &raw.cost {
        if !(c.penalty.is_finite() && c.penalty > 0.0) {
            return Err(cx.invalid(None, format!("penalty must be positive, got {}", c.penalty)));
        }
        episode.penalty = c.penalty;
    }
    if let Some(p) = &raw.planner {
        let d = PlannerConfig::default();
        episode.planner = PlannerConfig {
            max_iterations: p.max_iterations.unwrap_or(d.max_iterations),
            runs_per_planning: p.runs_per_planning.unwrap_or(d.runs_per_planning),
            goal_bias: p.goal_bias.unwrap_or(d.goal_bias),
            controls_per_extension: p.controls_per_extension.unwrap_or(d.controls_per_extension),
            cluster_threshold: p.cluster_threshold.unwrap_or(d.cluster_threshold),
            sample_sigma: p.sample_sigma.unwrap_or(d.sample_sigma),
            prior_weight: p.prior_weight.unwrap_or(d.prior_weight),
            pull_reward: p.pull_reward.unwrap_or(d.pull_reward),
            prune_with_incumbent: p.prune_with_incumbent.unwrap_or(d.prune_with_incumbent),
            ..d
        };
        episode.planner.validate().map_err(|m| cx.invalid(None, m))?;
    }
    if let Some(e) = &raw.episode {
        if let Some(m) = e.max_replannings {
            episode.max_replannings = m;
        }
        if let Some(c) = e.count_failed_plans {
            episode.count_failed_plans = c;
        }
    }

    Ok(Scenario {
        name: raw.name,
        description: raw.description,
        reconstruction: raw.reconstruction,
        world,
        start,
        episode,
    })
}
