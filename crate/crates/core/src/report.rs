//! CSV outputs. Every file starts with `# config_hash=<hash>` and a header.

use std::io::{self, Write};

use thiserror::Error;

use crate::eval::{MetricsRow, RunReport};
use crate::movement::MovementId;
use crate::ppo::UpdateLog;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("report header does not match the expected columns")]
    Header,
}

/// One summary row, as written to and read from `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub config_hash: String,
    /// SHA-256 of the checkpoint used, empty if none.
    pub checkpoint: String,
    pub horizon: f64,
    pub avg_waiting_time: f64,
    pub vehicles: usize,
    pub throughput: usize,
    pub mean_unregulated_ratio: f64,
    pub time_to_half_regulated: Option<f64>,
    pub gridlock_at: Option<f64>,
    pub hold_events: usize,
    pub guard_events: usize,
    pub go_committed: usize,
    pub conflict_steps: usize,
    pub per_movement_wait: [f64; 8],
}

impl ReportRow {
    pub fn new(scenario: &str, config_hash: &str, checkpoint: &str, r: &RunReport) -> Self {
        ReportRow {
            scenario: scenario.to_string(),
            controller: r.controller.as_str().to_string(),
            seed: r.seed,
            config_hash: config_hash.to_string(),
            checkpoint: checkpoint.to_string(),
            horizon: r.horizon,
            avg_waiting_time: r.avg_waiting_time,
            vehicles: r.vehicles,
            throughput: r.departures,
            mean_unregulated_ratio: r.mean_unregulated_ratio,
            time_to_half_regulated: r.time_to_half_regulated,
            gridlock_at: r.gridlock_at,
            hold_events: r.hold_events,
            guard_events: r.guard_events,
            go_committed: r.go_committed,
            conflict_steps: r.conflict_steps,
            per_movement_wait: r.per_movement_wait,
        }
    }
}

const REPORT_FIXED: [&str; 17] = [
    "scenario",
    "controller",
    "seed",
    "config_hash",
    "checkpoint",
    "horizon",
    "avg_waiting_time",
    "vehicles",
    "throughput",
    "mean_unregulated_ratio",
    "time_to_half_regulated",
    "gridlock",
    "gridlock_at",
    "hold_events",
    "guard_events",
    "go_committed",
    "conflict_steps",
];

fn report_header() -> Vec<String> {
    let mut h: Vec<String> = REPORT_FIXED.iter().map(|s| s.to_string()).collect();
    h.extend(MovementId::ALL.iter().map(|m| format!("wait_{m}")));
    h
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn comment<W: Write>(w: &mut W, hash: &str) -> io::Result<()> {
    writeln!(w, "# config_hash={hash}")
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_reports<W: Write>(mut w: W, hash: &str, rows: &[ReportRow]) -> Result<(), ReportError> {
    comment(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(report_header()).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.scenario.clone(),
            r.controller.clone(),
            r.seed.to_string(),
            r.config_hash.clone(),
            r.checkpoint.clone(),
            r.horizon.to_string(),
            r.avg_waiting_time.to_string(),
            r.vehicles.to_string(),
            r.throughput.to_string(),
            r.mean_unregulated_ratio.to_string(),
            opt(r.time_to_half_regulated),
            r.gridlock_at.is_some().to_string(),
            opt(r.gridlock_at),
            r.hold_events.to_string(),
            r.guard_events.to_string(),
            r.go_committed.to_string(),
            r.conflict_steps.to_string(),
        ];
        rec.extend(r.per_movement_wait.iter().map(|x| x.to_string()));
        c.write_record(rec).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

pub fn parse_reports(bytes: &[u8]) -> Result<Vec<ReportRow>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(false).from_reader(bytes);
    let mut rows = Vec::new();
    let mut header_seen = false;
    let expected = report_header();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ReportError::Row { line: e.position().map_or(0, |p| p.line()), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if !header_seen {
            if rec.len() != expected.len() || rec.iter().zip(&expected).any(|(a, b)| a != b) {
                return Err(ReportError::Header);
            }
            header_seen = true;
            continue;
        }
        let err = |msg: String| ReportError::Row { line, msg };
        if rec.len() != expected.len() {
            return Err(err(format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let f = |i: usize| rec.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<f64, ReportError> {
            f(i).parse::<f64>().map_err(|_| err(format!("column {} is not a number: `{}`", expected[i], f(i))))
        };
        let int = |i: usize| -> Result<usize, ReportError> {
            f(i).parse::<usize>().map_err(|_| err(format!("column {} is not a count: `{}`", expected[i], f(i))))
        };
        let optnum = |i: usize| -> Result<Option<f64>, ReportError> { if f(i).is_empty() { Ok(None) } else { num(i).map(Some) } };
        let gridlock: bool = f(11).parse().map_err(|_| err(format!("gridlock must be true or false: `{}`", f(11))))?;
        let gridlock_at = optnum(12)?;
        if gridlock != gridlock_at.is_some() {
            return Err(err("gridlock flag and gridlock_at disagree".into()));
        }
        let mut waits = [0.0; 8];
        for (k, w) in waits.iter_mut().enumerate() {
            *w = num(REPORT_FIXED.len() + k)?;
        }
        rows.push(ReportRow {
            scenario: f(0).to_string(),
            controller: f(1).to_string(),
            seed: f(2).parse().map_err(|_| err(format!("seed is not an integer: `{}`", f(2))))?,
            config_hash: f(3).to_string(),
            checkpoint: f(4).to_string(),
            horizon: num(5)?,
            avg_waiting_time: num(6)?,
            vehicles: int(7)?,
            throughput: int(8)?,
            mean_unregulated_ratio: num(9)?,
            time_to_half_regulated: optnum(10)?,
            gridlock_at,
            hold_events: int(13)?,
            guard_events: int(14)?,
            go_committed: int(15)?,
            conflict_steps: int(16)?,
            per_movement_wait: waits,
        });
    }
    if !header_seen {
        return Err(ReportError::Header);
    }
    Ok(rows)
}

pub fn write_metrics<W: Write>(mut w: W, hash: &str, rows: &[MetricsRow]) -> io::Result<()> {
    comment(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["time", "reward", "avg_queue", "unregulated_ratio"]).map_err(csv_err)?;
    for r in rows {
        c.write_record([r.time.to_string(), r.reward.to_string(), r.avg_queue.to_string(), r.unregulated_ratio.to_string()])
            .map_err(csv_err)?;
    }
    c.flush()
}

pub const TRAINING_HEADER: [&str; 9] = ["update_idx", "stage", "env_steps", "mean_reward", "mean_wait", "clip_frac", "approx_kl", "loss", "vf_loss"];

/// Streaming writer for `training.csv`.
pub struct TrainingLog<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrainingLog<W> {
    pub fn new(mut w: W, hash: &str) -> io::Result<Self> {
        comment(&mut w, hash)?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(TRAINING_HEADER).map_err(csv_err)?;
        inner.flush()?;
        Ok(TrainingLog { inner })
    }

    pub fn push(&mut self, l: &UpdateLog) -> io::Result<()> {
        self.inner
            .write_record([
                l.update_idx.to_string(),
                l.stage.as_str().to_string(),
                l.env_steps.to_string(),
                l.mean_reward.to_string(),
                l.mean_wait.to_string(),
                l.clip_frac.to_string(),
                l.approx_kl.to_string(),
                l.loss.to_string(),
                l.vf_loss.to_string(),
            ])
            .map_err(csv_err)?;
        self.inner.flush()
    }
}
