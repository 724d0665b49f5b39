//! Append-only simulation event log with CSV export.

use std::fmt::Write as _;
use std::io;

use crate::movement::MovementId;
use crate::vehicle::{VehicleId, VehicleKind};

use super::lane_change::LaneChangeRejection;

/// Which controller level produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionLevel {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Spawn { kind: VehicleKind, speed: f64 },
    ZoneEnter,
    BoxEnter,
    Depart { wait_clock: f64 },
    LaneChange { from: usize, to: usize },
    LaneChangeRejected(LaneChangeRejection),
    /// Emergency braking replaced the proposed acceleration.
    Guard { proposed: f64, applied: f64 },
    /// Even emergency braking was not enough; speed was cut to keep gap >= 0.
    GuardClamp { applied: f64 },
    /// Vehicle newly held at the entrance by the conflict manager or a signal.
    HoldOnset,
    /// A held vehicle was stopped at the entrance line by position clamping.
    HoldClamp,
    /// Integration drove the speed below zero; clamped.
    SpeedClamp { unclamped: f64 },
    CommandIgnored,
    Decision { level: DecisionLevel, action: String },
    /// A Stop was overridden because the vehicle could no longer stop
    /// before the entrance line.
    GoCommitted,
    /// Final clock of a vehicle still present when the run ended.
    HorizonEnd { wait_clock: f64, in_zone: bool },
    Gridlock,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Spawn { .. } => "spawn",
            EventKind::ZoneEnter => "zone_enter",
            EventKind::BoxEnter => "box_enter",
            EventKind::Depart { .. } => "depart",
            EventKind::LaneChange { .. } => "lane_change",
            EventKind::LaneChangeRejected(_) => "lane_change_rejected",
            EventKind::Guard { .. } => "guard",
            EventKind::GuardClamp { .. } => "guard_clamp",
            EventKind::HoldOnset => "hold",
            EventKind::HoldClamp => "hold_clamp",
            EventKind::SpeedClamp { .. } => "speed_clamp",
            EventKind::CommandIgnored => "command_ignored",
            EventKind::Decision { .. } => "decision",
            EventKind::GoCommitted => "go_committed",
            EventKind::HorizonEnd { .. } => "horizon_end",
            EventKind::Gridlock => "gridlock",
        }
    }

    fn detail(&self) -> String {
        match self {
            EventKind::Spawn { kind, speed } => format!("{} v={speed}", kind.as_str()),
            EventKind::Depart { wait_clock } => format!("wait={wait_clock}"),
            EventKind::LaneChange { from, to } => format!("{from}->{to}"),
            EventKind::LaneChangeRejected(r) => format!("{r:?}"),
            EventKind::Guard { proposed, applied } => format!("proposed={proposed} applied={applied}"),
            EventKind::GuardClamp { applied } => format!("applied={applied}"),
            EventKind::SpeedClamp { unclamped } => format!("unclamped={unclamped}"),
            EventKind::Decision { level, action } => {
                let l = match level {
                    DecisionLevel::High => "high",
                    DecisionLevel::Low => "low",
                };
                format!("{l}:{action}")
            }
            EventKind::HorizonEnd { wait_clock, in_zone } => format!("wait={wait_clock} in_zone={in_zone}"),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle: Option<VehicleId>,
    pub lane: Option<usize>,
    pub movement: Option<MovementId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut Event> {
        self.events.last_mut()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn count(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }

    /// CSV with columns `time,event_type,vehicle_id,lane,movement,detail`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time,event_type,vehicle_id,lane,movement,detail\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{:.3},{},{},{},{},{}",
                e.time,
                e.kind.name(),
                e.vehicle.map(|v| v.to_string()).unwrap_or_default(),
                e.lane.map(|l| l.to_string()).unwrap_or_default(),
                e.movement.map(|m| m.to_string()).unwrap_or_default(),
                e.kind.detail()
            );
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }
}
