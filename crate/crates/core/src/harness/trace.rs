//! Per-episode CSV files: the step trace and the executed-transition store.

use serde::{Deserialize, Serialize};

use crate::deviation::ExecutedTransition;
use crate::executor::EpisodeOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub plan_index: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub x_hat: f64,
    pub y_hat: f64,
    pub ux: f64,
    pub uy: f64,
    pub meas_x: f64,
    pub meas_y: f64,
    pub error: f64,
    pub deviation: f64,
    pub safety_stop: bool,
}

pub fn trace_rows(outcome: &EpisodeOutcome) -> Vec<TraceRow> {
    outcome
        .steps
        .iter()
        .map(|s| TraceRow {
            plan_index: s.plan_index,
            step: s.step,
            x: s.x.x,
            y: s.x.y,
            x_hat: s.x_hat.x,
            y_hat: s.x_hat.y,
            ux: s.u.ux,
            uy: s.u.uy,
            meas_x: s.x_meas.x,
            meas_y: s.x_meas.y,
            error: s.error,
            deviation: s.deviation,
            safety_stop: s.safety_stop,
        })
        .collect()
}

pub fn trace_csv(outcome: &EpisodeOutcome) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in trace_rows(outcome) {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

pub fn read_trace(csv_text: &str) -> Result<Vec<TraceRow>, csv::Error> {
    csv::Reader::from_reader(csv_text.as_bytes()).deserialize().collect()
}

/// One row per executed transition: state, control, nominal and measured
/// successors, error, MDE, label and the context entries `z1..z{F+1}`.
pub fn executed_csv(executed: &[ExecutedTransition]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let width = executed.first().map_or(0, |e| e.base.context.len());
    let mut header: Vec<String> = [
        "x", "y", "ux", "uy", "pred_x", "pred_y", "meas_x", "meas_y", "error", "mde", "label",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=width).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for e in executed {
        let b = &e.base;
        let mut rec: Vec<String> = vec![
            b.x.x.to_string(),
            b.x.y.to_string(),
            b.u.ux.to_string(),
            b.u.uy.to_string(),
            b.x_pred.x.to_string(),
            b.x_pred.y.to_string(),
            e.x_meas.x.to_string(),
            e.x_meas.y.to_string(),
            e.error.to_string(),
            b.mde.to_string(),
            u8::from(e.label).to_string(),
        ];
        rec.extend(b.context.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{run_episode, EpisodeConfig};
    use crate::world2d::{DriftField, Rect, State, World};

    #[test]
    fn trace_round_trip_and_executed_columns() {
        let mut w = World::open(Rect::from_coords(0.7, 0.7, 0.9, 0.9), 0.0);
        w.drift = DriftField::uniform(0.012);
        let mut cfg = EpisodeConfig::default();
        cfg.planner.runs_per_planning = 1;
        let o = run_episode(&w, State::new(0.1, 0.1), &cfg, 2);
        let text = trace_csv(&o).unwrap();
        let rows = read_trace(&text).unwrap();
        assert_eq!(rows, trace_rows(&o));
        assert_eq!(rows.iter().filter(|r| r.safety_stop).count(), o.safety_stops());

        let ex = executed_csv(&o.executed).unwrap();
        let header = ex.lines().next().unwrap();
        assert!(header.starts_with("x,y,ux,uy,pred_x,pred_y,meas_x,meas_y,error,mde,label,z1,"));
        assert!(header.ends_with(",z26"));
        assert_eq!(ex.lines().count(), o.executed.len() + 1);
    }
}
