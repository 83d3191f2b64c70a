//! Protocol event log and optional per-slot traces, with their CSV forms.

use std::fmt;
use std::io::Write;

use crate::channel::BlockageState;
use crate::metrics::CsvError;
use crate::model::{ApId, Assignment, FileId, SchedulerKind, UeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    FileGenerated,
    DeadlineExpired,
    MacroStart,
    GateNomination,
    GateEntry,
    MmwWakeup,
    Handover,
    SlotScheduled,
    GateExit,
    MmwSleep,
    MacroResume,
    FileDone,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub ue_id: UeId,
    pub file_id: Option<FileId>,
    pub detail: String,
}

/// `time_s,kind,ue_id,file_id,detail`; times in shortest round-trip form.
pub fn write_events_csv<W: Write>(out: W, events: &[ProtocolEvent]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "kind", "ue_id", "file_id", "detail"])?;
    for e in events {
        w.write_record([
            e.time_s.to_string(),
            e.kind.to_string(),
            e.ue_id.to_string(),
            e.file_id.map(|f| f.to_string()).unwrap_or_default(),
            e.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scheduler view of one UE in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub ue_id: UeId,
    pub stay_s: f64,
    pub weight: f64,
    /// Filtered rate before this slot's update.
    pub avg_rate_bps: f64,
    pub remaining_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub time_s: f64,
    pub assignment: Assignment,
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionRecord {
    pub slot: u64,
    pub ue_id: UeId,
    pub x: f64,
    pub y: f64,
    pub distance_to_exit_m: f64,
    pub stay_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub slot: u64,
    pub ap: ApId,
    pub ue_id: UeId,
    pub path_loss_db: f64,
    pub sinr_db: f64,
    pub capacity_bps: f64,
}

/// Everything recorded slot by slot during the gate phase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub slots: Vec<SlotRecord>,
    pub blockage: Vec<BlockageState>,
    pub positions: Vec<PositionRecord>,
    pub links: Vec<LinkRecord>,
}

impl Trace {
    pub fn write_positions_csv<W: Write>(&self, out: W) -> Result<(), CsvError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "ue_id", "x", "y", "d_k", "TS_k"])?;
        for p in &self.positions {
            w.write_record([
                p.slot.to_string(),
                p.ue_id.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.distance_to_exit_m.to_string(),
                p.stay_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_links_csv<W: Write>(&self, out: W) -> Result<(), CsvError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "ap", "ue", "PL", "SINR_dB", "C_bps"])?;
        for l in &self.links {
            w.write_record([
                l.slot.to_string(),
                l.ap.to_string(),
                l.ue_id.to_string(),
                l.path_loss_db.to_string(),
                l.sinr_db.to_string(),
                l.capacity_bps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per in-gate UE per slot. `mapping` lists `ap:ue` pairs of the
    /// slot; utility and rate are empty for UEs that were not served.
    pub fn write_decisions_csv<W: Write>(&self, out: W, scheduler: SchedulerKind) -> Result<(), CsvError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "scheduler", "mapping", "ue_id", "U_k", "r_k", "R_k", "w_k"])?;
        for s in &self.slots {
            let mapping = s
                .assignment
                .pairs
                .iter()
                .map(|p| format!("{}:{}", p.ap, p.ue))
                .collect::<Vec<_>>()
                .join(" ");
            for d in &s.decisions {
                let grant = s.assignment.grant_for_ue(d.ue_id);
                w.write_record([
                    s.slot.to_string(),
                    scheduler.to_string(),
                    mapping.clone(),
                    d.ue_id.to_string(),
                    grant.map(|g| g.utility.to_string()).unwrap_or_default(),
                    grant.map(|g| g.rate_bps.to_string()).unwrap_or_default(),
                    d.avg_rate_bps.to_string(),
                    d.weight.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
