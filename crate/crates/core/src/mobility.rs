//! UE motion through the gate and the expected-stay estimate behind the WPF
//! priority weight.

use std::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

use crate::model::{distance2, GateGeometry, MobilityConfig, MobilityMode, UeId, UserEquipment};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MobilityError {
    #[error("UE {0} is not inside the gate")]
    NotInGate(UeId),
}

/// Largest heading deviation from the exit direction a random walker may
/// take; keeps the distance to the exit strictly shrinking.
const MAX_DEVIATION_RAD: f64 = 0.4 * PI;

/// Per-UE speeds, evenly spaced from slowest to fastest with the requested
/// ratio and mean. UE 0 is the slowest.
pub fn speeds(count: usize, mean_mps: f64, ratio: f64) -> Vec<f64> {
    if count <= 1 || ratio == 1.0 {
        return vec![mean_mps; count];
    }
    let slowest = 2.0 * mean_mps / (1.0 + ratio);
    let fastest = ratio * slowest;
    (0..count)
        .map(|i| slowest + (fastest - slowest) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Places every UE at the entrance with a small lateral offset, heading for
/// the exit.
pub fn init_users<R: Rng + ?Sized>(
    count: usize,
    geometry: &GateGeometry,
    cfg: &MobilityConfig,
    rng: &mut R,
) -> Vec<UserEquipment> {
    let along = unit(geometry.entrance, geometry.exit);
    let lateral = [-along[1], along[0]];
    speeds(count, cfg.mean_speed_mps, cfg.speed_ratio)
        .into_iter()
        .enumerate()
        .map(|(id, speed)| {
            let offset = if cfg.entry_jitter_m > 0.0 {
                rng.gen_range(-cfg.entry_jitter_m..=cfg.entry_jitter_m)
            } else {
                0.0
            };
            let position = clamp_to_box(
                [
                    geometry.entrance[0] + offset * lateral[0],
                    geometry.entrance[1] + offset * lateral[1],
                ],
                geometry,
            );
            UserEquipment::new(id, position, bearing(position, geometry.exit), speed)
        })
        .collect()
}

/// Advances one UE by `dt_s`. `now_s` is the time at the end of the step and
/// becomes the exit time if the UE reaches the exit plane.
pub fn step<R: Rng + ?Sized>(
    ue: &mut UserEquipment,
    dt_s: f64,
    now_s: f64,
    geometry: &GateGeometry,
    cfg: &MobilityConfig,
    rng: &mut R,
) {
    if !ue.in_gate || dt_s <= 0.0 {
        return;
    }
    let reach = ue.speed_mps * dt_s;
    let to_exit = distance2(ue.position, geometry.exit);
    // Accumulated rounding must not cost a whole extra step.
    if to_exit <= reach * (1.0 + 1e-9) {
        ue.position = geometry.exit;
        leave(ue, now_s);
        return;
    }

    let target = bearing(ue.position, geometry.exit);
    ue.heading = match cfg.mode {
        MobilityMode::Directed => target,
        MobilityMode::RandomWalk => {
            let jitter = if cfg.heading_jitter_rad > 0.0 {
                rng.gen_range(-cfg.heading_jitter_rad..=cfg.heading_jitter_rad)
            } else {
                0.0
            };
            let deviation = (wrap_angle(ue.heading - target) + jitter) * (1.0 - cfg.exit_bias);
            target + deviation.clamp(-MAX_DEVIATION_RAD, MAX_DEVIATION_RAD)
        }
    };

    let mut next = [
        ue.position[0] + reach * ue.heading.cos(),
        ue.position[1] + reach * ue.heading.sin(),
    ];
    if past_exit_plane(next, geometry) {
        ue.position = clamp_to_box(next, geometry);
        leave(ue, now_s);
        return;
    }
    // Reflect off the side walls.
    if next[0] < 0.0 || next[0] > geometry.width_m {
        next[0] = reflect(next[0], geometry.width_m);
        ue.heading = PI - ue.heading;
    }
    if next[1] < 0.0 || next[1] > geometry.depth_m {
        next[1] = reflect(next[1], geometry.depth_m);
        ue.heading = -ue.heading;
    }
    ue.position = next;
}

/// Expected remaining stay: straight-line distance to the exit over the UE's
/// average speed.
pub fn expected_stay(ue: &UserEquipment, geometry: &GateGeometry) -> Result<f64, MobilityError> {
    if !ue.in_gate {
        return Err(MobilityError::NotInGate(ue.id));
    }
    Ok(distance2(ue.position, geometry.exit) / ue.speed_mps)
}

fn leave(ue: &mut UserEquipment, now_s: f64) {
    ue.in_gate = false;
    ue.exit_time_s = Some(now_s);
}

fn past_exit_plane(p: [f64; 2], g: &GateGeometry) -> bool {
    let u = unit(g.entrance, g.exit);
    (p[0] - g.entrance[0]) * u[0] + (p[1] - g.entrance[1]) * u[1] >= g.traversal_length()
}

fn unit(from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    let d = distance2(from, to);
    [(to[0] - from[0]) / d, (to[1] - from[1]) / d]
}

fn bearing(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

fn reflect(v: f64, hi: f64) -> f64 {
    let r = if v < 0.0 { -v } else { 2.0 * hi - v };
    r.clamp(0.0, hi)
}

fn clamp_to_box(p: [f64; 2], g: &GateGeometry) -> [f64; 2] {
    [p[0].clamp(0.0, g.width_m), p[1].clamp(0.0, g.depth_m)]
}
