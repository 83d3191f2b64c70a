//! Browser entry points. Each export wraps a plain function that returns
//! `Result<_, String>` so the logic can be tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use mmw_gate::channel::{self, BlockageState, LinkBudget, LinkParams};
use mmw_gate::engine::{self, stream_rng, RunOptions, Stream};
use mmw_gate::model::{ScenarioConfig, SchedulerKind, UeId};
use mmw_gate::traffic;

/// Position samples kept per UE for the animation: one every this many slots.
const POSITION_STRIDE: u64 = 25;

pub fn simulate_json(
    num_aps: usize,
    num_ues: usize,
    grt_s: f64,
    scheduler: &str,
    speed_ratio: f64,
    seed: u64,
) -> Result<String, String> {
    let scheduler: SchedulerKind = scheduler.parse()?;
    let mut cfg = ScenarioConfig {
        num_aps,
        num_ues,
        grt_s,
        scheduler,
        rng_seed: seed,
        ..Default::default()
    };
    cfg.mobility.speed_ratio = speed_ratio;
    let cfg = cfg.validate().map_err(|e| e.to_string())?;
    let out = engine::run_with(&cfg, None, RunOptions { record_trace: true }).map_err(|e| e.to_string())?;
    let r = &out.report;
    let trace = out.trace.as_ref().expect("trace requested");

    let frames: Vec<Value> = trace
        .slots
        .iter()
        .filter(|s| s.slot % POSITION_STRIDE == 0)
        .map(|s| {
            let ues: Vec<Value> = trace
                .positions
                .iter()
                .filter(|p| p.slot == s.slot)
                .map(|p| json!([p.ue_id, p.x, p.y]))
                .collect();
            let links: Vec<Value> = s.assignment.pairs.iter().map(|g| json!([g.ap, g.ue])).collect();
            json!({ "t": s.time_s - cfg.grt_s, "ues": ues, "links": links })
        })
        .collect();
    let g = &cfg.gate_geometry;
    let doc = json!({
        "gofe": r.gofe,
        "f_alloc": r.f_alloc,
        "f_byte": r.f_byte,
        "norm_energy": r.norm_energy,
        "total_bytes": r.total_generated_bytes,
        "gate_bytes": r.bytes_via_gate,
        "macro_bytes": r.bytes_via_macro,
        "slots": r.total_slots,
        "gate": { "width": g.width_m, "depth": g.depth_m, "aps": cfg.ap_positions() },
        "users": r.users.iter().map(|u| json!({
            "id": u.ue_id,
            "speed": u.speed_mps,
            "slots": u.alloc_slots,
            "offloaded": u.bytes_offloaded,
            "generated": u.generated_bytes,
            "stay": u.stay_s,
        })).collect::<Vec<_>>(),
        "frames": frames,
    });
    Ok(doc.to_string())
}

/// Best-AP capacity in bit/s on an `nx` by `ny` grid over the default gate
/// floor, row by row from y = 0. With `all_active` every other AP interferes.
pub fn capacity_grid(num_aps: usize, all_active: bool, nx: usize, ny: usize) -> Result<Vec<f64>, String> {
    if nx == 0 || ny == 0 {
        return Err("grid needs at least one cell in each direction".into());
    }
    let cfg = ScenarioConfig {
        num_aps,
        ..Default::default()
    }
    .validate()
    .map_err(|e| e.to_string())?;
    let params = LinkParams::from_config(&cfg);
    let g = &cfg.gate_geometry;
    let points: Vec<(UeId, [f64; 2])> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .enumerate()
        .map(|(id, (i, j))| {
            (
                id,
                [
                    (i as f64 + 0.5) * g.width_m / nx as f64,
                    (j as f64 + 0.5) * g.depth_m / ny as f64,
                ],
            )
        })
        .collect();
    let budget = LinkBudget::new(
        cfg.ap_positions(),
        &points,
        &BlockageState::clear(points.len(), num_aps),
        &params,
    );
    let all = (1u32 << num_aps) - 1;
    Ok((0..points.len())
        .map(|u| {
            (0..num_aps)
                .map(|ap| {
                    let mask = if all_active { all } else { 1 << ap };
                    channel::capacity_bps(budget.sinr(ap, u, mask), &params)
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Histogram of relative deadlines (seconds after arrival) for files that
/// arrive `grt_s - fat_s` seconds before the gate.
pub fn deadline_histogram_json(
    rho: f64,
    delta_frac: f64,
    grt_s: f64,
    fat_s: f64,
    draws: u32,
    bins: usize,
    seed: u64,
) -> Result<String, String> {
    if bins == 0 || draws == 0 {
        return Err("need at least one bin and one draw".into());
    }
    let mut rng = stream_rng(seed, Stream::Traffic);
    let rel: Vec<f64> = (0..draws)
        .map(|_| traffic::draw_deadline(fat_s, grt_s, rho, delta_frac, &mut rng).map(|d| d - fat_s))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let span = grt_s - fat_s;
    let hi = rel.iter().copied().fold(span, f64::max);
    let width = if hi > 0.0 { hi / bins as f64 } else { 1.0 };
    let mut counts = vec![0u32; bins];
    for &d in &rel {
        counts[((d / width) as usize).min(bins - 1)] += 1;
    }
    let n = f64::from(draws);
    let doc = json!({
        "bin_width_s": width,
        "counts": counts,
        "span_s": span,
        "after_gate": rel.iter().filter(|&&d| d >= span).count() as f64 / n,
        "immediate": rel.iter().filter(|&&d| d == 0.0).count() as f64 / n,
    });
    Ok(doc.to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Runs one scenario and returns metrics, per-user rows and animation frames
/// as JSON.
#[wasm_bindgen]
pub fn simulate(
    num_aps: usize,
    num_ues: usize,
    grt_s: f64,
    scheduler: &str,
    speed_ratio: f64,
    seed: u64,
) -> Result<String, JsError> {
    js(simulate_json(num_aps, num_ues, grt_s, scheduler, speed_ratio, seed))
}

#[wasm_bindgen]
pub fn capacity_map(num_aps: usize, all_active: bool, nx: usize, ny: usize) -> Result<Vec<f64>, JsError> {
    js(capacity_grid(num_aps, all_active, nx, ny))
}

#[wasm_bindgen]
pub fn deadline_histogram(
    rho: f64,
    delta_frac: f64,
    grt_s: f64,
    fat_s: f64,
    draws: u32,
    bins: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(deadline_histogram_json(
        rho, delta_frac, grt_s, fat_s, draws, bins, seed,
    ))
}
