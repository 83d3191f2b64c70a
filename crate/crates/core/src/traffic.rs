//! Delay-tolerant workload generation and per-UE file-table ordering.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DelayedFile, FileOrder, ScenarioConfig, UeId};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("file arrival time {fat_s} s is after the gate reaching time {grt_s} s")]
    ArrivalAfterGrt { fat_s: f64, grt_s: f64 },
    #[error("workload csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("workload csv row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficParams {
    pub mean_file_bytes: u64,
    pub mean_iat_s: f64,
    /// Generation window `[0, window_s)`; equals the gate reaching time.
    pub window_s: f64,
    pub rho: f64,
    pub delta_frac: f64,
}

impl TrafficParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        TrafficParams {
            mean_file_bytes: cfg.mean_file_bytes,
            mean_iat_s: cfg.mean_iat_s,
            window_s: cfg.grt_s,
            rho: cfg.rho,
            delta_frac: cfg.delta_frac,
        }
    }

    /// Expected bytes generated by one UE over the window.
    pub fn expected_bytes_per_ue(&self) -> f64 {
        self.window_s / self.mean_iat_s * self.mean_file_bytes as f64
    }
}

/// Draws each UE's files: Poisson arrivals over the window, exponential sizes,
/// truncated-Gaussian deadlines. File ids are unique across the whole run and
/// each UE's list is ordered by arrival.
pub fn generate_workload<R: Rng + ?Sized>(
    params: &TrafficParams,
    ue_count: usize,
    rng: &mut R,
) -> Vec<Vec<DelayedFile>> {
    let gap = Exp::new(1.0 / params.mean_iat_s).expect("mean_iat_s validated positive");
    let size = Exp::new(1.0 / params.mean_file_bytes as f64).expect("mean_file_bytes validated positive");
    let mut next_id = 0;

    (0..ue_count)
        .map(|ue| {
            let mut files = Vec::new();
            let mut t: f64 = gap.sample(rng);
            while t < params.window_s {
                let bytes = (size.sample(rng).round() as u64).max(1);
                let deadline = draw_deadline(t, params.window_s, params.rho, params.delta_frac, rng)
                    .expect("arrival lies inside the window");
                files.push(DelayedFile::new(next_id, ue, bytes, t, deadline));
                next_id += 1;
                t += gap.sample(rng);
            }
            files
        })
        .collect()
}

/// Absolute deadline for a file arriving at `fat_s`: the relative deadline is
/// Normal(rho * span, delta_frac * span) with span = grt - fat, clamped at zero.
pub fn draw_deadline<R: Rng + ?Sized>(
    fat_s: f64,
    grt_s: f64,
    rho: f64,
    delta_frac: f64,
    rng: &mut R,
) -> Result<f64, TrafficError> {
    if fat_s > grt_s {
        return Err(TrafficError::ArrivalAfterGrt { fat_s, grt_s });
    }
    let span = grt_s - fat_s;
    let z: f64 = StandardNormal.sample(rng);
    let relative = rho * span + delta_frac * span * z;
    Ok(fat_s + relative.max(0.0))
}

/// Index of the file to transmit next under deadline-first order.
pub fn next_file(table: &[DelayedFile], now_s: f64) -> Option<usize> {
    next_file_by(table, now_s, FileOrder::Deadline)
}

/// Index of the next file to transmit among arrived files with bytes left.
/// Remaining ties fall to the lower file id.
pub fn next_file_by(table: &[DelayedFile], now_s: f64, order: FileOrder) -> Option<usize> {
    next_file_where(table, now_s, order, |_| true)
}

pub(crate) fn next_file_where(
    table: &[DelayedFile],
    now_s: f64,
    order: FileOrder,
    mut eligible: impl FnMut(&DelayedFile) -> bool,
) -> Option<usize> {
    table
        .iter()
        .enumerate()
        .filter(|(_, f)| f.remaining_bytes > 0 && f.fat_s <= now_s && eligible(f))
        .min_by(|(_, a), (_, b)| {
            let by_deadline = a.deadline_s.total_cmp(&b.deadline_s);
            let by_size = a.remaining_bytes.cmp(&b.remaining_bytes);
            match order {
                FileOrder::Deadline => by_deadline.then(by_size),
                FileOrder::RemainingSize => by_size.then(by_deadline),
            }
            .then(a.id.cmp(&b.id))
        })
        .map(|(i, _)| i)
}

/// Bytes still queued in files that have already arrived.
pub fn total_remaining(table: &[DelayedFile], now_s: f64) -> u64 {
    table
        .iter()
        .filter(|f| f.fat_s <= now_s)
        .map(|f| f.remaining_bytes)
        .sum()
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadRow {
    ue_id: UeId,
    file_id: u64,
    fat_s: f64,
    total_bytes: u64,
    deadline_s: f64,
}

/// Writes the workload as `ue_id,file_id,fat_s,total_bytes,deadline_s` rows.
/// Times use the shortest representation that parses back to the same value.
pub fn write_workload_csv<W: Write>(out: W, workload: &[Vec<DelayedFile>]) -> Result<(), TrafficError> {
    let mut w = csv::Writer::from_writer(out);
    for f in workload.iter().flatten() {
        w.serialize(WorkloadRow {
            ue_id: f.owner_ue,
            file_id: f.id,
            fat_s: f.fat_s,
            total_bytes: f.total_bytes,
            deadline_s: f.deadline_s,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a workload written by [`write_workload_csv`] back into `num_ues`
/// per-UE tables sorted by arrival.
pub fn read_workload_csv<R: Read>(input: R, num_ues: usize) -> Result<Vec<Vec<DelayedFile>>, TrafficError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = vec![Vec::new(); num_ues];
    for (i, row) in rd.deserialize::<WorkloadRow>().enumerate() {
        let row = row?;
        let bad = |reason: String| TrafficError::BadRow { row: i + 1, reason };
        if row.ue_id >= num_ues {
            return Err(bad(format!("ue_id {} >= num_ues {num_ues}", row.ue_id)));
        }
        if row.total_bytes == 0 {
            return Err(bad("total_bytes must be positive".into()));
        }
        if !(row.fat_s.is_finite() && row.fat_s >= 0.0 && row.deadline_s >= row.fat_s) {
            return Err(bad(format!(
                "need 0 <= fat_s <= deadline_s, got {} / {}",
                row.fat_s, row.deadline_s
            )));
        }
        out[row.ue_id].push(DelayedFile::new(
            row.file_id,
            row.ue_id,
            row.total_bytes,
            row.fat_s,
            row.deadline_s,
        ));
    }
    for files in &mut out {
        files.sort_by(|a, b| a.fat_s.total_cmp(&b.fat_s).then(a.id.cmp(&b.id)));
    }
    Ok(out)
}
