//! Self-contained SVG figures of worlds, episodes and batch summaries.

use std::fmt::Write as _;
use std::path::Path;

use super::batch::BatchReport;
use super::trace::TraceRow;
use crate::executor::EpisodeOutcome;
use crate::world2d::{Rect, State, World};

const SIZE: f64 = 500.0;
const MARGIN: f64 = 20.0;

/// Paths drawn on top of the world.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overlay {
    /// One dashed polyline per plan.
    pub planned: Vec<Vec<State>>,
    /// Solid polyline of measured states.
    pub executed: Vec<State>,
    pub stops: Vec<State>,
}

impl Overlay {
    pub fn from_outcome(start: State, outcome: &EpisodeOutcome) -> Self {
        let mut executed = vec![start];
        executed.extend(outcome.steps.iter().map(|s| s.x_meas));
        Self {
            planned: outcome
                .plans
                .iter()
                .filter(|p| p.states.len() > 1)
                .map(|p| p.states.clone())
                .collect(),
            executed,
            stops: outcome.steps.iter().filter(|s| s.safety_stop).map(|s| s.x_meas).collect(),
        }
    }

    /// Without the full plans, the dashed lines are the nominal rollouts of
    /// the executed controls.
    pub fn from_trace(rows: &[TraceRow]) -> Self {
        let mut planned: Vec<Vec<State>> = Vec::new();
        let mut executed = Vec::new();
        let mut current: Option<usize> = None;
        for r in rows {
            if current != Some(r.plan_index) {
                current = Some(r.plan_index);
                planned.push(vec![State::new(r.x, r.y)]);
            }
            if executed.is_empty() {
                executed.push(State::new(r.x, r.y));
            }
            planned.last_mut().expect("pushed above").push(State::new(r.x_hat, r.y_hat));
            executed.push(State::new(r.meas_x, r.meas_y));
        }
        Self {
            planned,
            executed,
            stops: rows
                .iter()
                .filter(|r| r.safety_stop)
                .map(|r| State::new(r.meas_x, r.meas_y))
                .collect(),
        }
    }
}

struct Frame {
    bounds: Rect,
}

impl Frame {
    fn scale(&self) -> f64 {
        (SIZE - 2.0 * MARGIN) / self.bounds.width().max(self.bounds.height()).max(f64::MIN_POSITIVE)
    }

    fn px(&self, p: &State) -> (f64, f64) {
        let s = self.scale();
        (
            MARGIN + (p.x - self.bounds.min.x) * s,
            SIZE - MARGIN - (p.y - self.bounds.min.y) * s,
        )
    }

    fn rect(&self, r: &Rect, attrs: &str) -> String {
        let (x0, y1) = self.px(&r.min);
        let (x1, y0) = self.px(&r.max);
        format!(
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" {attrs}/>"#,
            x1 - x0,
            y1 - y0
        )
    }

    fn polyline(&self, pts: &[State], attrs: &str) -> String {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        format!(r#"<polyline points="{}" fill="none" {attrs}/>"#, coords.join(" "))
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn drift_fill(delta: f64, max_delta: f64) -> String {
    let t = if max_delta > 0.0 { (delta / max_delta).clamp(0.0, 1.0) } else { 0.0 };
    // pale yellow (low drift) to orange-red (high drift)
    let g = (235.0 - 150.0 * t).round() as u8;
    let b = (170.0 - 150.0 * t).round() as u8;
    format!("rgb(255,{g},{b})")
}

fn world_layer(world: &World, start: Option<State>, frame: &Frame, out: &mut String) {
    let levels = world.drift.levels();
    let max_delta = levels.last().copied().unwrap_or(0.0);
    let _ = writeln!(
        out,
        "{}",
        frame.rect(
            &world.bounds,
            &format!(
                r#"class="drift" data-delta="{}" fill="{}" stroke="black""#,
                world.drift.default_delta,
                drift_fill(world.drift.default_delta, max_delta)
            )
        )
    );
    for r in &world.drift.regions {
        let _ = writeln!(
            out,
            "{}",
            frame.rect(
                &r.rect,
                &format!(r#"class="drift" data-delta="{}" fill="{}""#, r.delta, drift_fill(r.delta, max_delta))
            )
        );
    }
    for o in &world.obstacles {
        let _ = writeln!(out, "{}", frame.rect(o, r##"class="obstacle" fill="#444444""##));
    }
    let _ = writeln!(
        out,
        "{}",
        frame.rect(&world.goal, r##"class="goal" fill="#4caf50" fill-opacity="0.35" stroke="#2e7d32""##)
    );
    if let Some(s) = start {
        let (x, y) = frame.px(&s);
        let _ = writeln!(out, r##"<circle class="start" cx="{x:.2}" cy="{y:.2}" r="5" fill="#1565c0"/>"##);
    }
    // legend
    for (i, d) in levels.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}" stroke="black"/><text x="{:.1}" y="{:.1}" font-size="10">δ = {d}</text>"#,
            SIZE + 4.0,
            y,
            drift_fill(*d, max_delta),
            SIZE + 18.0,
            y + 9.0
        );
    }
}

fn overlay_layer(overlay: &Overlay, frame: &Frame, out: &mut String) {
    for p in &overlay.planned {
        let _ = writeln!(
            out,
            "{}",
            frame.polyline(p, r##"class="planned" stroke="#1565c0" stroke-width="1.2" stroke-dasharray="4 3""##)
        );
    }
    if overlay.executed.len() > 1 {
        let _ = writeln!(
            out,
            "{}",
            frame.polyline(&overlay.executed, r##"class="executed" stroke="#b71c1c" stroke-width="1.8""##)
        );
    }
    for s in &overlay.stops {
        let (x, y) = frame.px(s);
        let _ = writeln!(
            out,
            r##"<path class="stop-marker" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#000000" stroke-width="2"/>"##,
            x - 4.0,
            y - 4.0,
            x + 4.0,
            y + 4.0,
            x - 4.0,
            y + 4.0,
            x + 4.0,
            y - 4.0
        );
    }
}

fn document(title: &str, width: f64, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{SIZE:.0}\" viewBox=\"0 0 {width:.0} {SIZE:.0}\">\n<title>{}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
        esc(title)
    )
}

pub fn render_world_svg(title: &str, world: &World, start: Option<State>, overlay: &Overlay) -> String {
    let frame = Frame { bounds: world.bounds };
    let mut body = String::new();
    world_layer(world, start, &frame, &mut body);
    overlay_layer(overlay, &frame, &mut body);
    document(title, SIZE + 90.0, &body)
}

pub fn render_outcome_svg(title: &str, world: &World, start: State, outcome: Option<&EpisodeOutcome>) -> String {
    let overlay = outcome.map(|o| Overlay::from_outcome(start, o)).unwrap_or_default();
    render_world_svg(title, world, Some(start), &overlay)
}

/// World panel plus a bar chart of success rates per variant.
pub fn render_report_svg(world: &World, start: State, report: &BatchReport) -> String {
    let frame = Frame { bounds: world.bounds };
    let mut body = String::new();
    world_layer(world, Some(start), &frame, &mut body);
    let x0 = SIZE + 110.0;
    let chart_h = SIZE - 2.0 * MARGIN - 40.0;
    let bar_w = 40.0;
    let _ = writeln!(
        body,
        r#"<text x="{x0:.1}" y="{:.1}" font-size="12">success rate</text>"#,
        MARGIN
    );
    for (i, s) in report.summaries.iter().enumerate() {
        let h = chart_h * s.success_rate;
        let x = x0 + i as f64 * (bar_w + 20.0);
        let base = SIZE - MARGIN - 30.0;
        let _ = writeln!(
            body,
            r##"<rect class="bar" data-variant="{}" x="{x:.1}" y="{:.1}" width="{bar_w}" height="{h:.1}" fill="#1565c0"/><text x="{x:.1}" y="{:.1}" font-size="9">{}</text><text x="{x:.1}" y="{:.1}" font-size="9">{:.2}</text>"##,
            esc(&s.variant),
            base - h,
            base + 12.0,
            esc(&s.variant),
            base - h - 3.0,
            s.success_rate
        );
    }
    let width = x0 + report.summaries.len() as f64 * (bar_w + 20.0) + 60.0;
    document(&report.scenario, width, &body)
}

pub fn write_svg(path: &Path, svg: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, svg)
}
