//! Evaluation runs and their per-step metrics.

use crate::controller::{Control, ControllerKind, Env, EnvConfig};
use crate::movement::MovementId;
use crate::observe::{avg_waiting_time, movement_stats, per_movement_waits, unregulated_ratio};
use crate::policy::{PolicyError, PolicyParams};
use crate::sim::{EventKind, EventLog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub time: f64,
    pub reward: f64,
    /// Mean stopped-queue length over the eight movements.
    pub avg_queue: f64,
    pub unregulated_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub controller: ControllerKind,
    pub seed: u64,
    pub horizon: f64,
    pub avg_waiting_time: f64,
    /// Vehicles contributing to the average.
    pub vehicles: usize,
    pub departures: usize,
    pub per_movement_wait: [f64; 8],
    pub mean_unregulated_ratio: f64,
    /// First time at most half the lanes were unregulated.
    pub time_to_half_regulated: Option<f64>,
    pub gridlock_at: Option<f64>,
    /// Times a vehicle was newly held at the entrance.
    pub hold_events: usize,
    pub guard_events: usize,
    pub go_committed: usize,
    /// Steps at which two conflicting movements shared the box.
    pub conflict_steps: usize,
}

pub struct RunOutput {
    pub report: RunReport,
    pub metrics: Vec<MetricsRow>,
    pub events: EventLog,
}

/// Runs one episode of `horizon` seconds. Gridlock is reported but does not
/// end an evaluation run.
pub fn run_episode(
    cfg: &EnvConfig,
    kind: ControllerKind,
    control: Control,
    policy: Option<&PolicyParams>,
    seed: u64,
    horizon: f64,
) -> Result<RunOutput, PolicyError> {
    let mut env = Env::new(cfg, control, policy, seed);
    let steps = (horizon / cfg.sim.dt).round() as u64;
    let mut metrics = Vec::with_capacity(steps as usize);
    let mut ratio_sum = 0.0;
    let mut half = None;
    let mut conflict_steps = 0;
    let mut departures = 0;
    for _ in 0..steps {
        departures += env.step()?.departures;
        if !env.state.conflicting_inside_pairs().is_empty() {
            conflict_steps += 1;
        }
        let ratio = unregulated_ratio(&env.state);
        ratio_sum += ratio;
        if half.is_none() && ratio <= 0.5 {
            half = Some(env.state.time);
        }
        let avg_queue = MovementId::ALL
            .iter()
            .map(|&m| movement_stats(&env.state, m, &cfg.obs).queue_len as f64)
            .sum::<f64>()
            / 8.0;
        metrics.push(MetricsRow { time: env.state.time, reward: env.reward(), avg_queue, unregulated_ratio: ratio });
    }
    env.finish();
    let log = std::mem::take(&mut env.state.event_log);
    let w = avg_waiting_time(&log);
    let report = RunReport {
        controller: kind,
        seed,
        horizon,
        avg_waiting_time: w.avg_waiting_time,
        vehicles: w.vehicles,
        departures,
        per_movement_wait: per_movement_waits(&log),
        mean_unregulated_ratio: if steps == 0 { 0.0 } else { ratio_sum / steps as f64 },
        time_to_half_regulated: half,
        gridlock_at: env.gridlock_at,
        hold_events: log.count(|k| matches!(k, EventKind::HoldOnset)),
        guard_events: log.count(|k| matches!(k, EventKind::Guard { .. } | EventKind::GuardClamp { .. })),
        go_committed: log.count(|k| matches!(k, EventKind::GoCommitted)),
        conflict_steps,
    };
    Ok(RunOutput { report, metrics, events: log })
}
