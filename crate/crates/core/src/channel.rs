//! Parametric 60 GHz link model: log-distance path loss, per-link Bernoulli
//! blockage and a two-gain (main/side lobe) beam abstraction.
//!
//! Serving links use the main lobe at both ends. An AP serving somebody else
//! reaches a victim UE through its side lobe, and the victim, pointed at its
//! own AP, receives it through its side lobe, so interference carries twice
//! the side-lobe gain. All APs share one channel.

use rand::Rng;
use thiserror::Error;

use crate::model::{ApId, ChannelConfig, ScenarioConfig, UeId};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const REFERENCE_DISTANCE_M: f64 = 1.0;
const MIN_DISTANCE_M: f64 = 0.1;
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("UE {0} is not served by the assignment")]
    NotServed(UeId),
}

/// Path loss in dB: free space up to 1 m, then `10 n log10(d)`.
pub fn path_loss_db(distance_m: f64, cfg: &ChannelConfig) -> f64 {
    let d = distance_m.max(MIN_DISTANCE_M);
    let reference =
        20.0 * (4.0 * std::f64::consts::PI * REFERENCE_DISTANCE_M * cfg.carrier_hz / SPEED_OF_LIGHT).log10();
    reference + 10.0 * cfg.pathloss_exponent * (d / REFERENCE_DISTANCE_M).log10()
}

/// Thermal noise over `bandwidth_hz` plus the receiver noise figure.
pub fn noise_dbm(bandwidth_hz: f64, cfg: &ChannelConfig) -> f64 {
    THERMAL_NOISE_DBM_HZ + 10.0 * bandwidth_hz.log10() + cfg.noise_figure_db
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Radio parameters needed to turn geometry into capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub ap_tx_dbm: f64,
    pub bandwidth_hz: f64,
    pub bw_eff: f64,
    pub snr_eff: f64,
    pub ue_height_m: f64,
    pub channel: ChannelConfig,
}

impl LinkParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        LinkParams {
            ap_tx_dbm: cfg.ap_tx_dbm,
            bandwidth_hz: cfg.ap_bandwidth_hz,
            bw_eff: cfg.bw_eff,
            snr_eff: cfg.snr_eff,
            ue_height_m: cfg.gate_geometry.ue_height_m,
            channel: cfg.channel.clone(),
        }
    }
}

/// Shannon capacity scaled by the bandwidth and SNR efficiencies.
pub fn capacity_bps(sinr_linear: f64, params: &LinkParams) -> f64 {
    params.bw_eff * params.bandwidth_hz * (1.0 + sinr_linear / params.snr_eff).log2()
}

/// Per-link blockage probabilities, drawn once when the UEs enter the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockageModel {
    num_aps: usize,
    probs: Vec<f64>,
}

impl BlockageModel {
    /// Draws `p ~ Uniform(0, prob_max)` for every (UE, AP) link.
    pub fn on_entry<R: Rng + ?Sized>(num_ues: usize, num_aps: usize, prob_max: f64, rng: &mut R) -> Self {
        let probs = (0..num_ues * num_aps).map(|_| rng.gen::<f64>() * prob_max).collect();
        BlockageModel { num_aps, probs }
    }

    pub fn from_probs(num_aps: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len() % num_aps, 0);
        BlockageModel { num_aps, probs }
    }

    pub fn prob(&self, ue: UeId, ap: ApId) -> f64 {
        self.probs[ue * self.num_aps + ap]
    }

    /// Blocks each link independently with its own probability. Always
    /// consumes one draw per link so the stream does not depend on the
    /// outcome.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BlockageState {
        let blocked = self.probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
        BlockageState {
            num_aps: self.num_aps,
            blocked,
        }
    }
}

/// Which (UE, AP) links are blocked during one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockageState {
    num_aps: usize,
    blocked: Vec<bool>,
}

impl BlockageState {
    pub fn clear(num_ues: usize, num_aps: usize) -> Self {
        BlockageState {
            num_aps,
            blocked: vec![false; num_ues * num_aps],
        }
    }

    pub fn is_blocked(&self, ue: UeId, ap: ApId) -> bool {
        self.blocked[ue * self.num_aps + ap]
    }

    pub fn set(&mut self, ue: UeId, ap: ApId, blocked: bool) {
        self.blocked[ue * self.num_aps + ap] = blocked;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.blocked
    }
}

/// Received powers for one slot: serving-beam signal and side-lobe
/// interference from every AP at every candidate UE.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    num_aps: usize,
    ue_ids: Vec<UeId>,
    noise_mw: f64,
    /// Indexed `[ap * ues + u]`.
    signal_mw: Vec<f64>,
    interference_mw: Vec<f64>,
    path_loss_db: Vec<f64>,
}

impl LinkBudget {
    /// `ues` pairs each UE id with its floor position; the id also indexes
    /// `blockage`.
    pub fn new(aps: &[[f64; 3]], ues: &[(UeId, [f64; 2])], blockage: &BlockageState, params: &LinkParams) -> Self {
        let ch = &params.channel;
        let k = ues.len();
        let mut signal_mw = Vec::with_capacity(aps.len() * k);
        let mut interference_mw = Vec::with_capacity(aps.len() * k);
        let mut losses = Vec::with_capacity(aps.len() * k);
        for (ap, pos) in aps.iter().enumerate() {
            for &(ue, p) in ues {
                let d =
                    ((pos[0] - p[0]).powi(2) + (pos[1] - p[1]).powi(2) + (pos[2] - params.ue_height_m).powi(2)).sqrt();
                let mut loss = path_loss_db(d, ch);
                losses.push(loss);
                if blockage.is_blocked(ue, ap) {
                    loss += ch.blockage_loss_db;
                }
                signal_mw.push(dbm_to_mw(params.ap_tx_dbm + 2.0 * ch.main_lobe_gain_db - loss));
                interference_mw.push(dbm_to_mw(params.ap_tx_dbm + 2.0 * ch.side_lobe_gain_db - loss));
            }
        }
        LinkBudget {
            num_aps: aps.len(),
            ue_ids: ues.iter().map(|u| u.0).collect(),
            noise_mw: dbm_to_mw(noise_dbm(params.bandwidth_hz, ch)),
            signal_mw,
            interference_mw,
            path_loss_db: losses,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn ue_ids(&self) -> &[UeId] {
        &self.ue_ids
    }

    /// Unblocked path loss between an AP and the UE at index `u`.
    pub fn path_loss_db(&self, ap: ApId, u: usize) -> f64 {
        self.path_loss_db[ap * self.ue_ids.len() + u]
    }

    /// SINR of the UE at index `u` served by `ap` while the APs in
    /// `active_mask` transmit.
    pub fn sinr(&self, ap: ApId, u: usize, active_mask: u32) -> f64 {
        let k = self.ue_ids.len();
        let interference: f64 = (0..self.num_aps)
            .filter(|&a| a != ap && active_mask & (1 << a) != 0)
            .map(|a| self.interference_mw[a * k + u])
            .sum();
        self.signal_mw[ap * k + u] / (self.noise_mw + interference)
    }

    /// SINR of `ue` under a full mapping (serving UE index per AP).
    pub fn sinr_in(&self, mapping: &[Option<usize>], ue: UeId) -> Result<f64, ChannelError> {
        let u = self
            .ue_ids
            .iter()
            .position(|&id| id == ue)
            .ok_or(ChannelError::NotServed(ue))?;
        let ap = mapping
            .iter()
            .position(|m| *m == Some(u))
            .ok_or(ChannelError::NotServed(ue))?;
        Ok(self.sinr(ap, u, mask_of(mapping)))
    }
}

/// Bit mask of the APs that serve somebody.
pub fn mask_of(mapping: &[Option<usize>]) -> u32 {
    mapping
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_some())
        .fold(0, |acc, (ap, _)| acc | 1 << ap)
}

/// Capacity of every AP-UE link under every pattern of active APs.
///
/// Because an interferer's side-lobe power does not depend on whom it
/// serves, a link's SINR in a mapping depends only on which APs are active.
/// Indexing by `(active mask, ap, ue)` therefore covers every injective
/// AP-to-UE mapping, idle APs included.
#[derive(Debug, Clone)]
pub struct CapacityTable {
    num_aps: usize,
    ue_ids: Vec<UeId>,
    sinr: Vec<f64>,
    capacity: Vec<f64>,
}

impl CapacityTable {
    pub fn build(budget: &LinkBudget, params: &LinkParams) -> Self {
        Self::from_fn(budget.num_aps(), budget.ue_ids().to_vec(), |mask, ap, u| {
            let s = budget.sinr(ap, u, mask);
            (s, capacity_bps(s, params))
        })
    }

    /// Fills the table from `f(active_mask, ap, ue_index) -> (sinr, capacity)`.
    /// Entries whose AP is not in the mask are never read and stay zero.
    pub fn from_fn(num_aps: usize, ue_ids: Vec<UeId>, mut f: impl FnMut(u32, ApId, usize) -> (f64, f64)) -> Self {
        let k = ue_ids.len();
        let len = (1usize << num_aps) * num_aps * k;
        let mut sinr = vec![0.0; len];
        let mut capacity = vec![0.0; len];
        for mask in 1u32..1 << num_aps {
            for ap in (0..num_aps).filter(|a| mask & (1 << a) != 0) {
                for u in 0..k {
                    let (s, c) = f(mask, ap, u);
                    let i = Self::index(num_aps, k, mask, ap, u);
                    sinr[i] = s;
                    capacity[i] = c;
                }
            }
        }
        CapacityTable {
            num_aps,
            ue_ids,
            sinr,
            capacity,
        }
    }

    fn index(num_aps: usize, k: usize, mask: u32, ap: ApId, u: usize) -> usize {
        (mask as usize * num_aps + ap) * k + u
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn ue_ids(&self) -> &[UeId] {
        &self.ue_ids
    }

    pub fn capacity(&self, mask: u32, ap: ApId, u: usize) -> f64 {
        debug_assert!(mask & (1 << ap) != 0);
        self.capacity[Self::index(self.num_aps, self.ue_ids.len(), mask, ap, u)]
    }

    pub fn sinr(&self, mask: u32, ap: ApId, u: usize) -> f64 {
        debug_assert!(mask & (1 << ap) != 0);
        self.sinr[Self::index(self.num_aps, self.ue_ids.len(), mask, ap, u)]
    }

    /// `(ap, ue index, sinr, capacity)` of each served link in `mapping`.
    pub fn links(&self, mapping: &[Option<usize>]) -> Vec<(ApId, usize, f64, f64)> {
        let mask = mask_of(mapping);
        mapping
            .iter()
            .enumerate()
            .filter_map(|(ap, m)| m.map(|u| (ap, u, self.sinr(mask, ap, u), self.capacity(mask, ap, u))))
            .collect()
    }

    /// Every injective mapping of APs onto distinct UE indices, idle APs
    /// allowed, in lexicographic order (idle sorts first).
    pub fn mappings(&self) -> Vec<Vec<Option<usize>>> {
        let k = self.ue_ids.len();
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(self.num_aps);
        fn rec(cur: &mut Vec<Option<usize>>, aps: usize, k: usize, out: &mut Vec<Vec<Option<usize>>>) {
            if cur.len() == aps {
                out.push(cur.clone());
                return;
            }
            for choice in std::iter::once(None).chain((0..k).map(Some)) {
                if choice.is_some() && cur.contains(&choice) {
                    continue;
                }
                cur.push(choice);
                rec(cur, aps, k, out);
                cur.pop();
            }
        }
        rec(&mut cur, self.num_aps, k, &mut out);
        out
    }

    /// Number of mappings that keep every AP busy: `k! / (k - aps)!`.
    pub fn full_mapping_count(&self) -> usize {
        let k = self.ue_ids.len();
        if k < self.num_aps {
            return 0;
        }
        (k - self.num_aps + 1..=k).product()
    }
}
