//! End-to-end scenario run.
//!
//! 1. Pre-gate, continuous time `[0, GRT)`: files arrive; a file whose
//!    deadline passes before the UE reaches the gate goes out over the macro
//!    cell, one file at a time per UE.
//! 2. Gate, slotted from `GRT`: all UEs enter together, any in-flight macro
//!    transfer continues over the gate from its current byte, and the
//!    coordinator schedules APs every slot until the last UE leaves.
//! 3. Post-gate: whatever a UE still holds when it leaves drains over macro.
//!
//! Traffic, mobility and blockage each draw from their own random stream
//! derived from the run seed, so switching the scheduler never changes the
//! workload, the trajectories or the blockage pattern.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{BlockageModel, CapacityTable, LinkBudget, LinkParams};
use crate::metrics::{self, CsvError};
use crate::mobility;
use crate::model::{
    distance2, DelayedFile, FileState, MetricsReport, ScenarioConfig, SchedulerKind, StayReference, UeId,
    UserEquipment, UserRow, ValidatedConfig,
};
use crate::scheduler::{self, RoundRobin, SchedulerInputs, UeInputs};
use crate::trace::{Decision, EventKind, LinkRecord, PositionRecord, ProtocolEvent, SlotRecord, Trace};
use crate::traffic::{self, TrafficParams};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("workload has {got} UE tables but the scenario has {expected} UEs")]
    WorkloadSize { expected: usize, got: usize },
    #[error("file {id} arrives at {fat_s} s, outside the pre-gate window [0, {grt_s})")]
    LateArrival { id: u64, fat_s: f64, grt_s: f64 },
}

/// Named random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Traffic = 1,
    Mobility = 2,
    Blockage = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Simulation time. During the gate phase `now_s` is `GRT + slot * slot_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub now_s: f64,
    pub slot: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_trace: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub events: Vec<ProtocolEvent>,
    /// File tables as generated, before any transfer.
    pub workload: Vec<Vec<DelayedFile>>,
    /// UEs at the end of the run, file tables included.
    pub users: Vec<UserEquipment>,
    pub trace: Option<Trace>,
}

impl RunOutput {
    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<(), CsvError> {
        crate::trace::write_events_csv(out, &self.events)
    }
}

pub fn run(cfg: &ValidatedConfig) -> RunOutput {
    run_with(cfg, None, RunOptions::default()).expect("generated workloads always fit the scenario")
}

/// Runs the scenario, optionally replaying a stored workload instead of
/// drawing one.
pub fn run_with(
    cfg: &ValidatedConfig,
    workload: Option<Vec<Vec<DelayedFile>>>,
    opts: RunOptions,
) -> Result<RunOutput, EngineError> {
    let workload = match workload {
        Some(w) => {
            check_workload(cfg, &w)?;
            w
        }
        None => {
            let mut rng = stream_rng(cfg.rng_seed, Stream::Traffic);
            traffic::generate_workload(&TrafficParams::from_config(cfg), cfg.num_ues, &mut rng)
        }
    };
    let mut sim = Simulation::new(cfg, workload.clone(), opts);
    sim.pre_gate();
    sim.gate();
    sim.post_gate();
    Ok(sim.finish(workload))
}

fn check_workload(cfg: &ScenarioConfig, w: &[Vec<DelayedFile>]) -> Result<(), EngineError> {
    if w.len() != cfg.num_ues {
        return Err(EngineError::WorkloadSize {
            expected: cfg.num_ues,
            got: w.len(),
        });
    }
    for f in w.iter().flatten() {
        if !(f.fat_s >= 0.0 && f.fat_s < cfg.grt_s) {
            return Err(EngineError::LateArrival {
                id: f.id,
                fat_s: f.fat_s,
                grt_s: cfg.grt_s,
            });
        }
    }
    Ok(())
}

/// Runs `cfg` with `seed` twice and reports whether both runs produced
/// byte-identical event logs and results.
pub fn replay_check(cfg: &ScenarioConfig, seed: u64) -> Result<bool, crate::model::ConfigError> {
    let cfg = ScenarioConfig {
        rng_seed: seed,
        ..cfg.clone()
    }
    .validate()?;
    let fingerprint = || {
        let out = run_with(&cfg, None, RunOptions { record_trace: true }).expect("generated workload");
        let mut bytes = Vec::new();
        out.write_events_csv(&mut bytes).expect("in-memory write");
        metrics::write_results_csv(&mut bytes, std::slice::from_ref(&out.report), &[]).expect("in-memory write");
        (bytes, out.trace)
    };
    Ok(fingerprint() == fingerprint())
}

struct Simulation<'a> {
    cfg: &'a ValidatedConfig,
    users: Vec<UserEquipment>,
    events: Vec<ProtocolEvent>,
    trace: Option<Trace>,
    clock: SimClock,
    grants_issued: u64,
    mobility_rng: ChaCha8Rng,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a ValidatedConfig, workload: Vec<Vec<DelayedFile>>, opts: RunOptions) -> Self {
        let mut rng = stream_rng(cfg.rng_seed, Stream::Mobility);
        let mut users = mobility::init_users(cfg.num_ues, &cfg.gate_geometry, &cfg.mobility, &mut rng);
        for (ue, files) in users.iter_mut().zip(workload) {
            ue.files = files;
        }
        Simulation {
            cfg,
            users,
            events: Vec::new(),
            trace: opts.record_trace.then(Trace::default),
            clock: SimClock { now_s: 0.0, slot: 0 },
            grants_issued: 0,
            mobility_rng: rng,
        }
    }

    fn log(&mut self, time_s: f64, kind: EventKind, ue_id: UeId, file_id: Option<u64>, detail: String) {
        self.events.push(ProtocolEvent {
            time_s,
            kind,
            ue_id,
            file_id,
            detail,
        });
    }

    fn pre_gate(&mut self) {
        let grt = self.cfg.grt_s;
        for u in 0..self.users.len() {
            self.log(0.0, EventKind::GateNomination, u, None, format!("grt_s={grt}"));
            let files: Vec<(u64, f64, f64, u64)> = self.users[u]
                .files
                .iter()
                .map(|f| (f.id, f.fat_s, f.deadline_s, f.total_bytes))
                .collect();
            for (id, fat, deadline, bytes) in files {
                self.log(
                    fat,
                    EventKind::FileGenerated,
                    u,
                    Some(id),
                    format!("bytes={bytes} deadline_s={deadline}"),
                );
                if deadline < grt {
                    self.log(deadline, EventKind::DeadlineExpired, u, Some(id), String::new());
                }
            }
            self.macro_before_gate(u);
        }
    }

    /// Sends expired files over macro until the gate reaching time. The
    /// choice is revisited whenever another deadline passes.
    fn macro_before_gate(&mut self, u: usize) {
        let grt = self.cfg.grt_s;
        let rate = self.cfg.macro_rate_bps;
        let order = self.cfg.file_order;
        let mut now = 0.0;
        let mut active: Option<u64> = None;
        while now < grt {
            let next_expiry = self.users[u]
                .files
                .iter()
                .filter(|f| f.remaining_bytes > 0 && f.deadline_s > now && f.deadline_s < grt)
                .map(|f| f.deadline_s)
                .min_by(f64::total_cmp);
            let pick = traffic::next_file_where(&self.users[u].files, now, order, |f| f.deadline_s <= now);
            let Some(i) = pick else {
                match next_expiry {
                    Some(t) => {
                        now = t;
                        continue;
                    }
                    None => break,
                }
            };
            let (id, remaining) = {
                let f = &self.users[u].files[i];
                (f.id, f.remaining_bytes)
            };
            if active != Some(id) {
                self.log(now, EventKind::MacroStart, u, Some(id), "phase=pre_gate".into());
                active = Some(id);
            }
            let done_at = now + remaining as f64 * 8.0 / rate;
            let stop = done_at.min(next_expiry.unwrap_or(f64::INFINITY)).min(grt);
            let bytes = if stop >= done_at {
                remaining
            } else {
                ((stop - now) * rate / 8.0).floor() as u64
            };
            self.users[u].files[i].send(bytes, false);
            now = if stop >= done_at { done_at } else { stop };
            if self.users[u].files[i].remaining_bytes == 0 {
                self.log(now, EventKind::FileDone, u, Some(id), "via=macro".into());
                active = None;
            }
        }
    }

    fn gate(&mut self) {
        let cfg = self.cfg;
        let grt = cfg.grt_s;
        let slot_s = cfg.slot_s;
        let num_aps = cfg.num_aps;
        let aps = cfg.ap_positions().to_vec();
        let geometry = &cfg.gate_geometry;
        let params = LinkParams::from_config(cfg);
        let alpha = match cfg.scheduler {
            SchedulerKind::Pf => 0.0,
            _ => cfg.alpha,
        };

        let mut blockage_rng = stream_rng(cfg.rng_seed, Stream::Blockage);
        let blockage_model =
            BlockageModel::on_entry(cfg.num_ues, num_aps, cfg.channel.blockage_prob_max, &mut blockage_rng);
        let mut round_robin = RoundRobin::new();

        for u in 0..self.users.len() {
            let ue = &mut self.users[u];
            ue.in_gate = true;
            ue.entry_time_s = Some(grt);
            ue.avg_rate_bps = cfg.r_init_bps;
            let in_flight = ue
                .files
                .iter()
                .find(|f| f.state == FileState::MacroActive)
                .map(|f| (f.id, f.remaining_bytes));
            self.log(grt, EventKind::GateEntry, u, None, String::new());
            self.log(grt, EventKind::MmwWakeup, u, None, String::new());
            match in_flight {
                Some((id, left)) => self.log(grt, EventKind::Handover, u, Some(id), format!("remaining_bytes={left}")),
                None => self.log(grt, EventKind::Handover, u, None, "no transfer in flight".into()),
            }
        }

        let mut static_ts_h: Option<f64> = None;
        let mut slot = 0u64;
        loop {
            let now = grt + slot as f64 * slot_s;
            self.clock = SimClock { now_s: now, slot };
            let blockage = blockage_model.sample(&mut blockage_rng);

            if slot > 0 {
                for u in 0..self.users.len() {
                    if !self.users[u].in_gate {
                        continue;
                    }
                    mobility::step(
                        &mut self.users[u],
                        slot_s,
                        now,
                        geometry,
                        &cfg.mobility,
                        &mut self.mobility_rng,
                    );
                    if !self.users[u].in_gate {
                        self.log(now, EventKind::GateExit, u, None, String::new());
                        self.log(now, EventKind::MmwSleep, u, None, String::new());
                    }
                }
            }
            let inside: Vec<usize> = (0..self.users.len()).filter(|&u| self.users[u].in_gate).collect();
            if inside.is_empty() {
                break;
            }

            let stays: Vec<f64> = inside
                .iter()
                .map(|&u| mobility::expected_stay(&self.users[u], geometry).expect("UE is inside"))
                .collect();
            let dynamic_ts_h = stays.iter().copied().fold(0.0, f64::max);
            let ts_h = match cfg.stay_reference {
                StayReference::Dynamic => dynamic_ts_h,
                StayReference::Static => *static_ts_h.get_or_insert(dynamic_ts_h),
            };
            let weights = scheduler::priority_weights(&stays, ts_h);
            let remaining: Vec<u64> = inside
                .iter()
                .map(|&u| traffic::total_remaining(&self.users[u].files, now))
                .collect();

            let inputs = SchedulerInputs {
                slot,
                alpha,
                slot_s,
                ues: inside
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| UeInputs {
                        ue_id: u,
                        remaining_bytes: remaining[i],
                        avg_rate_bps: self.users[u].avg_rate_bps,
                        weight: weights[i],
                    })
                    .collect(),
            };
            let positions: Vec<(UeId, [f64; 2])> = inside.iter().map(|&u| (u, self.users[u].position)).collect();
            let budget = LinkBudget::new(&aps, &positions, &blockage, &params);
            let table = CapacityTable::build(&budget, &params);

            let assignment = match cfg.scheduler {
                SchedulerKind::Wpf | SchedulerKind::Pf => scheduler::select_multi(&inputs, &table),
                SchedulerKind::Rr => {
                    let eligible: Vec<UeId> = inside
                        .iter()
                        .zip(&remaining)
                        .filter(|(_, &l)| l > 0)
                        .map(|(&u, _)| u)
                        .collect();
                    let ue_pos = |ue: UeId| self.users[ue].position;
                    let pairs = round_robin.select(&eligible, num_aps, |ap, ue| {
                        let p = ue_pos(ue);
                        let a = aps[ap];
                        ((a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2) + (a[2] - geometry.ue_height_m).powi(2)).sqrt()
                    });
                    let mut mapping = vec![None; num_aps];
                    for (ap, ue) in pairs {
                        mapping[ap] = inside.iter().position(|&x| x == ue);
                    }
                    scheduler::build_assignment(&inputs, &table, &mapping)
                }
            };

            if let Some(trace) = &mut self.trace {
                trace.blockage.push(blockage.clone());
                for (i, &u) in inside.iter().enumerate() {
                    let p = self.users[u].position;
                    trace.positions.push(PositionRecord {
                        slot,
                        ue_id: u,
                        x: p[0],
                        y: p[1],
                        distance_to_exit_m: distance2(p, geometry.exit),
                        stay_s: stays[i],
                    });
                }
                for g in &assignment.pairs {
                    let idx = inside.iter().position(|&x| x == g.ue).expect("served UE is inside");
                    trace.links.push(LinkRecord {
                        slot,
                        ap: g.ap,
                        ue_id: g.ue,
                        path_loss_db: budget.path_loss_db(g.ap, idx),
                        sinr_db: 10.0 * g.sinr_linear.log10(),
                        capacity_bps: g.capacity_bps,
                    });
                }
                trace.slots.push(SlotRecord {
                    slot,
                    time_s: now,
                    assignment: assignment.clone(),
                    decisions: inputs
                        .ues
                        .iter()
                        .zip(&stays)
                        .map(|(x, &ts)| Decision {
                            ue_id: x.ue_id,
                            stay_s: ts,
                            weight: x.weight,
                            avg_rate_bps: x.avg_rate_bps,
                            remaining_bytes: x.remaining_bytes,
                        })
                        .collect(),
                });
            }

            for g in &assignment.pairs {
                let budget_bytes = ((g.capacity_bps * slot_s / 8.0).floor() as u64).min(remaining_of(&inputs, g.ue));
                let sent = self.send_via_gate(g.ue, budget_bytes, now, now + slot_s);
                let ue = &mut self.users[g.ue];
                ue.alloc_slots += 1;
                ue.bytes_offloaded += sent;
                self.grants_issued += 1;
                self.log(
                    now,
                    EventKind::SlotScheduled,
                    g.ue,
                    None,
                    format!("ap={} bytes={sent}", g.ap),
                );
            }
            for &u in &inside {
                let ue = &mut self.users[u];
                let (rate, served) = match assignment.grant_for_ue(u) {
                    Some(g) => (g.rate_bps, true),
                    None => (0.0, false),
                };
                ue.avg_rate_bps =
                    scheduler::update_avg_rate(ue.avg_rate_bps, rate, served, cfg.n_c).max(f64::MIN_POSITIVE);
            }
            slot += 1;
        }
    }

    /// Moves up to `budget` bytes through the gate, front file first, rolling
    /// leftover slot capacity into the next file.
    fn send_via_gate(&mut self, u: UeId, mut budget: u64, now: f64, slot_end: f64) -> u64 {
        let order = self.cfg.file_order;
        let mut sent = 0;
        while budget > 0 {
            let Some(i) = traffic::next_file_by(&self.users[u].files, now, order) else {
                break;
            };
            let n = self.users[u].files[i].send(budget, true);
            budget -= n;
            sent += n;
            if self.users[u].files[i].remaining_bytes == 0 {
                let id = self.users[u].files[i].id;
                self.log(slot_end, EventKind::FileDone, u, Some(id), "via=gate".into());
            }
        }
        sent
    }

    fn post_gate(&mut self) {
        let rate = self.cfg.macro_rate_bps;
        let order = self.cfg.file_order;
        for u in 0..self.users.len() {
            let Some(mut now) = self.users[u].exit_time_s else {
                continue;
            };
            if traffic::total_remaining(&self.users[u].files, now) > 0 {
                self.log(now, EventKind::MacroResume, u, None, String::new());
            }
            while let Some(i) = traffic::next_file_by(&self.users[u].files, now, order) {
                let f = &mut self.users[u].files[i];
                let (id, left) = (f.id, f.remaining_bytes);
                f.send(left, false);
                self.log(now, EventKind::MacroStart, u, Some(id), "phase=post_gate".into());
                now += left as f64 * 8.0 / rate;
                self.log(now, EventKind::FileDone, u, Some(id), "via=macro".into());
            }
        }
    }

    fn finish(mut self, workload: Vec<Vec<DelayedFile>>) -> RunOutput {
        let cfg = self.cfg;
        self.events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));

        let files = || self.users.iter().flat_map(|u| u.files.iter());
        let total: u64 = files().map(|f| f.total_bytes).sum();
        let via_gate: u64 = files().map(|f| f.bytes_via_gate).sum();
        let via_macro: u64 = files().map(|f| f.bytes_via_macro).sum();
        let undelivered: u64 = files().map(|f| f.remaining_bytes).sum();
        let slots: Vec<u64> = self.users.iter().map(|u| u.alloc_slots).collect();
        let offloaded: Vec<u64> = self.users.iter().map(|u| u.bytes_offloaded).collect();
        let gate_active_s = slots.iter().sum::<u64>() as f64 * cfg.slot_s;
        let macro_active_s = via_macro as f64 * 8.0 / cfg.macro_rate_bps;

        let report = MetricsReport {
            scheduler: cfg.scheduler,
            num_aps: cfg.num_aps,
            grt_s: cfg.grt_s,
            speed_ratio: cfg.mobility.speed_ratio,
            seed: cfg.rng_seed,
            gofe: metrics::gofe(via_gate, total).ok(),
            f_alloc: metrics::allocation_fairness(&slots).ok(),
            f_byte: metrics::byte_fairness(&offloaded).ok(),
            norm_energy: metrics::normalized_energy(
                gate_active_s,
                macro_active_s,
                total,
                &cfg.energy,
                cfg.macro_rate_bps,
            )
            .ok(),
            total_generated_bytes: total,
            bytes_via_gate: via_gate,
            bytes_via_macro: via_macro,
            undelivered_bytes: undelivered,
            gate_active_s,
            macro_active_s,
            total_slots: self.clock.slot,
            grants_issued: self.grants_issued,
            users: self
                .users
                .iter()
                .map(|u| UserRow {
                    ue_id: u.id,
                    speed_mps: u.speed_mps,
                    alloc_slots: u.alloc_slots,
                    bytes_offloaded: u.bytes_offloaded,
                    generated_bytes: u.files.iter().map(|f| f.total_bytes).sum(),
                    stay_s: match (u.entry_time_s, u.exit_time_s) {
                        (Some(a), Some(b)) => b - a,
                        _ => 0.0,
                    },
                })
                .collect(),
        };
        RunOutput {
            report,
            events: self.events,
            workload,
            users: self.users,
            trace: self.trace,
        }
    }
}

fn remaining_of(inputs: &SchedulerInputs, ue: UeId) -> u64 {
    inputs
        .ues
        .iter()
        .find(|x| x.ue_id == ue)
        .map_or(0, |x| x.remaining_bytes)
}
