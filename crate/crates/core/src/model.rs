//! Scenario configuration and the domain types shared by every stage of a run.
//!
//! A scenario is described by [`ScenarioConfig`], usually loaded from a TOML
//! file. Top-level keys carry the traffic, radio and scheduler parameters;
//! the `[gate_geometry]`, `[mobility]`, `[channel]` and `[energy]` tables
//! carry the nested groups. Every key is optional (defaults reproduce the
//! reference scenario) and unknown keys are rejected so typos surface early.
//!
//! ```toml
//! num_aps = 4
//! grt_s = 1800.0
//! scheduler = "wpf"
//!
//! [mobility]
//! mode = "directed"
//! speed_ratio = 4.0
//! ```

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type UeId = usize;
pub type ApId = usize;
pub type FileId = u64;

/// 5 km/h in m/s.
pub const WALKING_SPEED_MPS: f64 = 5.0 / 3.6;

/// Largest AP count whose joint assignment is solved by exhaustive search.
pub const MAX_APS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    /// Weighted proportional fairness (stay-time weighted PF).
    Wpf,
    /// Conventional proportional fairness.
    Pf,
    /// Round robin.
    Rr,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Wpf => "wpf",
            SchedulerKind::Pf => "pf",
            SchedulerKind::Rr => "rr",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wpf" | "gawpf" => Ok(SchedulerKind::Wpf),
            "pf" | "conv_pf" => Ok(SchedulerKind::Pf),
            "rr" | "round_robin" => Ok(SchedulerKind::Rr),
            other => Err(format!("unknown scheduler `{other}` (expected wpf, pf or rr)")),
        }
    }
}

/// Order in which a UE drains its file table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileOrder {
    /// Earliest remaining deadline first; remaining size breaks ties.
    #[default]
    Deadline,
    /// Smallest remaining size first; deadline breaks ties.
    RemainingSize,
}

/// How the longest expected stay time `TS_h` is obtained each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StayReference {
    /// Maximum expected stay over the UEs currently inside the gate.
    #[default]
    Dynamic,
    /// Expected stay of the slowest UE at gate entry, held for the traversal.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityMode {
    #[default]
    RandomWalk,
    Directed,
}

impl FromStr for MobilityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random_walk" | "randomwalk" => Ok(MobilityMode::RandomWalk),
            "directed" => Ok(MobilityMode::Directed),
            other => Err(format!(
                "unknown mobility mode `{other}` (expected random-walk or directed)"
            )),
        }
    }
}

/// Rectangular gate floor plan. The x axis runs along `width_m`, y along
/// `depth_m`; heights are measured from the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateGeometry {
    pub width_m: f64,
    pub depth_m: f64,
    pub entrance: [f64; 2],
    pub exit: [f64; 2],
    /// Ceiling height used when AP positions are generated.
    pub ceiling_m: f64,
    /// Antenna height of a handheld UE.
    pub ue_height_m: f64,
    /// Explicit AP positions. Empty means "spread `num_aps` APs evenly along
    /// the entrance-exit line at ceiling height".
    pub ap_positions: Vec<[f64; 3]>,
}

impl Default for GateGeometry {
    fn default() -> Self {
        GateGeometry {
            width_m: 20.0,
            depth_m: 10.0,
            entrance: [0.0, 5.0],
            exit: [20.0, 5.0],
            ceiling_m: 3.0,
            ue_height_m: 1.5,
            ap_positions: Vec::new(),
        }
    }
}

impl GateGeometry {
    /// APs evenly spaced on the entrance-exit line, each centred in its
    /// segment.
    pub fn default_ap_positions(&self, num_aps: usize) -> Vec<[f64; 3]> {
        (0..num_aps)
            .map(|i| {
                let f = (i as f64 + 0.5) / num_aps as f64;
                [
                    self.entrance[0] + f * (self.exit[0] - self.entrance[0]),
                    self.entrance[1] + f * (self.exit[1] - self.entrance[1]),
                    self.ceiling_m,
                ]
            })
            .collect()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.width_m).contains(&p[0]) && (0.0..=self.depth_m).contains(&p[1])
    }

    /// Length of the entrance-exit segment.
    pub fn traversal_length(&self) -> f64 {
        distance2(self.entrance, self.exit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub mode: MobilityMode,
    pub mean_speed_mps: f64,
    /// Fastest-to-slowest speed ratio across the UE population.
    pub speed_ratio: f64,
    /// Random-walk heading perturbation per step, uniform in +/- this value.
    pub heading_jitter_rad: f64,
    /// Fraction of the heading deviation from the exit direction removed per
    /// random-walk step.
    pub exit_bias: f64,
    /// Lateral spread of UE start positions around the entrance.
    pub entry_jitter_m: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            mode: MobilityMode::RandomWalk,
            mean_speed_mps: WALKING_SPEED_MPS,
            speed_ratio: 1.0,
            heading_jitter_rad: 0.3,
            exit_bias: 0.1,
            entry_jitter_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    /// Main-lobe gain at each end of a link.
    pub main_lobe_gain_db: f64,
    /// Side-lobe gain at each end of an interfering link.
    pub side_lobe_gain_db: f64,
    pub noise_figure_db: f64,
    /// Upper end of the uniform per-link blockage probability.
    pub blockage_prob_max: f64,
    pub blockage_loss_db: f64,
    pub pathloss_exponent: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            carrier_hz: 60e9,
            main_lobe_gain_db: 15.0,
            side_lobe_gain_db: -5.0,
            noise_figure_db: 10.0,
            blockage_prob_max: 0.2,
            blockage_loss_db: 25.0,
            pathloss_exponent: 2.0,
        }
    }
}

/// UE radio power draw while a module is actively transferring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub ue_power_mmw_w: f64,
    pub ue_power_macro_w: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            ue_power_mmw_w: 2.0,
            ue_power_macro_w: 2.0,
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    /// Gate reaching time: the pre-gate traffic window, seconds.
    pub grt_s: f64,
    pub slot_s: f64,
    pub mean_file_bytes: u64,
    pub mean_iat_s: f64,
    /// Deadline mean as a multiple of (GRT - FAT).
    pub rho: f64,
    /// Deadline standard deviation as a fraction of (GRT - FAT).
    pub delta_frac: f64,
    pub macro_rate_bps: f64,
    pub macro_tx_dbm: f64,
    pub ap_tx_dbm: f64,
    pub ap_bandwidth_hz: f64,
    pub bw_eff: f64,
    pub snr_eff: f64,
    /// Exponent applied to the stay-time priority weight; 0 gives plain PF.
    pub alpha: f64,
    /// Averaging window of the throughput filter, in slots.
    pub n_c: u32,
    /// Initial average rate of every UE at gate entry.
    pub r_init_bps: f64,
    pub scheduler: SchedulerKind,
    pub file_order: FileOrder,
    pub stay_reference: StayReference,
    pub rng_seed: u64,
    pub gate_geometry: GateGeometry,
    pub mobility: MobilityConfig,
    pub channel: ChannelConfig,
    pub energy: EnergyConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_aps: 4,
            num_ues: 14,
            grt_s: 1800.0,
            slot_s: 0.003,
            mean_file_bytes: 1_620_000_000,
            mean_iat_s: 600.0,
            rho: 1.5,
            delta_frac: 0.1,
            macro_rate_bps: 100e6,
            macro_tx_dbm: 46.0,
            ap_tx_dbm: 10.0,
            ap_bandwidth_hz: 2.16e9,
            bw_eff: 0.7,
            snr_eff: 1.0,
            alpha: 1.0,
            n_c: 100,
            r_init_bps: 1e3,
            scheduler: SchedulerKind::Wpf,
            file_order: FileOrder::Deadline,
            stay_reference: StayReference::Dynamic,
            rng_seed: 42,
            gate_geometry: GateGeometry::default(),
            mobility: MobilityConfig::default(),
            channel: ChannelConfig::default(),
            energy: EnergyConfig::default(),
        }
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {}", join_errors(.0))]
    Invalid(Vec<FieldError>),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl ConfigError {
    pub fn fields(&self) -> &[FieldError] {
        match self {
            ConfigError::Invalid(errs) => errs,
            _ => &[],
        }
    }
}

fn join_errors(errs: &[FieldError]) -> String {
    errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

struct Checker(Vec<FieldError>);

impl Checker {
    fn fail(&mut self, field: &'static str, reason: impl Into<String>) {
        self.0.push(FieldError {
            field,
            reason: reason.into(),
        });
    }

    fn positive(&mut self, field: &'static str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.fail(field, format!("must be finite and > 0, got {v}"));
        }
    }

    fn non_negative(&mut self, field: &'static str, v: f64) {
        if !(v.is_finite() && v >= 0.0) {
            self.fail(field, format!("must be finite and >= 0, got {v}"));
        }
    }

    fn finite(&mut self, field: &'static str, v: f64) {
        if !v.is_finite() {
            self.fail(field, format!("must be finite, got {v}"));
        }
    }

    fn unit_interval(&mut self, field: &'static str, v: f64) {
        if !(0.0..=1.0).contains(&v) {
            self.fail(field, format!("must lie in [0, 1], got {v}"));
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Checks every constraint, reporting all violations at once, and
    /// resolves the AP layout.
    pub fn validate(mut self) -> Result<ValidatedConfig, ConfigError> {
        let mut c = Checker(Vec::new());

        if !(1..=MAX_APS).contains(&self.num_aps) {
            c.fail("num_aps", format!("must be in 1..={MAX_APS}, got {}", self.num_aps));
        }
        if self.num_ues == 0 {
            c.fail("num_ues", "must be at least 1");
        }
        c.positive("grt_s", self.grt_s);
        c.positive("slot_s", self.slot_s);
        if self.mean_file_bytes == 0 {
            c.fail("mean_file_bytes", "must be > 0");
        }
        c.positive("mean_iat_s", self.mean_iat_s);
        c.positive("rho", self.rho);
        c.non_negative("delta_frac", self.delta_frac);
        if self.rho > 1.0 && self.delta_frac >= (self.rho - 1.0) / 2.0 {
            c.fail(
                "delta_frac",
                format!(
                    "must be < (rho - 1) / 2 = {} when rho > 1, got {}",
                    (self.rho - 1.0) / 2.0,
                    self.delta_frac
                ),
            );
        }
        c.positive("macro_rate_bps", self.macro_rate_bps);
        c.finite("macro_tx_dbm", self.macro_tx_dbm);
        c.finite("ap_tx_dbm", self.ap_tx_dbm);
        c.positive("ap_bandwidth_hz", self.ap_bandwidth_hz);
        c.positive("bw_eff", self.bw_eff);
        c.positive("snr_eff", self.snr_eff);
        c.unit_interval("alpha", self.alpha);
        if self.n_c == 0 {
            c.fail("n_c", "must be at least 1 slot");
        }
        c.positive("r_init_bps", self.r_init_bps);

        let g = &self.gate_geometry;
        c.positive("gate_geometry.width_m", g.width_m);
        c.positive("gate_geometry.depth_m", g.depth_m);
        c.positive("gate_geometry.ceiling_m", g.ceiling_m);
        c.non_negative("gate_geometry.ue_height_m", g.ue_height_m);
        if g.entrance == g.exit {
            c.fail("gate_geometry.exit", "must differ from the entrance");
        }
        if !g.contains(g.entrance) {
            c.fail("gate_geometry.entrance", "must lie inside the gate box");
        }
        if !g.contains(g.exit) {
            c.fail("gate_geometry.exit", "must lie inside the gate box");
        }
        if !g.ap_positions.is_empty() && g.ap_positions.len() < self.num_aps {
            c.fail(
                "gate_geometry.ap_positions",
                format!(
                    "lists {} positions but num_aps = {}",
                    g.ap_positions.len(),
                    self.num_aps
                ),
            );
        }
        for p in &g.ap_positions {
            if !(g.contains([p[0], p[1]]) && (0.0..=g.ceiling_m).contains(&p[2])) {
                c.fail("gate_geometry.ap_positions", format!("{p:?} lies outside the gate box"));
            }
        }

        let m = &self.mobility;
        c.positive("mobility.mean_speed_mps", m.mean_speed_mps);
        if !(m.speed_ratio.is_finite() && m.speed_ratio >= 1.0) {
            c.fail(
                "mobility.speed_ratio",
                format!("must be finite and >= 1, got {}", m.speed_ratio),
            );
        }
        c.non_negative("mobility.heading_jitter_rad", m.heading_jitter_rad);
        if !(m.exit_bias > 0.0 && m.exit_bias <= 1.0) {
            c.fail("mobility.exit_bias", format!("must lie in (0, 1], got {}", m.exit_bias));
        }
        c.non_negative("mobility.entry_jitter_m", m.entry_jitter_m);

        let ch = &self.channel;
        c.positive("channel.carrier_hz", ch.carrier_hz);
        c.finite("channel.main_lobe_gain_db", ch.main_lobe_gain_db);
        c.finite("channel.side_lobe_gain_db", ch.side_lobe_gain_db);
        c.finite("channel.noise_figure_db", ch.noise_figure_db);
        c.unit_interval("channel.blockage_prob_max", ch.blockage_prob_max);
        c.non_negative("channel.blockage_loss_db", ch.blockage_loss_db);
        if !(ch.pathloss_exponent.is_finite() && ch.pathloss_exponent >= 2.0) {
            c.fail(
                "channel.pathloss_exponent",
                format!("must be finite and >= 2, got {}", ch.pathloss_exponent),
            );
        }

        c.positive("energy.ue_power_mmw_w", self.energy.ue_power_mmw_w);
        c.positive("energy.ue_power_macro_w", self.energy.ue_power_macro_w);

        if !c.0.is_empty() {
            return Err(ConfigError::Invalid(c.0));
        }

        let g = &mut self.gate_geometry;
        if g.ap_positions.is_empty() {
            g.ap_positions = g.default_ap_positions(self.num_aps);
        } else {
            g.ap_positions.truncate(self.num_aps);
        }
        Ok(ValidatedConfig(self))
    }
}

/// A [`ScenarioConfig`] whose invariants hold and whose AP layout has exactly
/// `num_aps` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(ScenarioConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> ScenarioConfig {
        self.0
    }

    pub fn ap_positions(&self) -> &[[f64; 3]] {
        &self.0.gate_geometry.ap_positions
    }
}

impl Deref for ValidatedConfig {
    type Target = ScenarioConfig;

    fn deref(&self) -> &ScenarioConfig {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileState {
    Pending,
    MacroActive,
    GateActive,
    Done,
}

/// One delay-tolerant file in a UE's offloading table.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedFile {
    pub id: FileId,
    pub owner_ue: UeId,
    pub total_bytes: u64,
    pub remaining_bytes: u64,
    /// File arrival time.
    pub fat_s: f64,
    /// Absolute deadline.
    pub deadline_s: f64,
    pub bytes_via_gate: u64,
    pub bytes_via_macro: u64,
    pub state: FileState,
}

impl DelayedFile {
    pub fn new(id: FileId, owner_ue: UeId, total_bytes: u64, fat_s: f64, deadline_s: f64) -> Self {
        DelayedFile {
            id,
            owner_ue,
            total_bytes,
            remaining_bytes: total_bytes,
            fat_s,
            deadline_s,
            bytes_via_gate: 0,
            bytes_via_macro: 0,
            state: FileState::Pending,
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.bytes_via_gate + self.bytes_via_macro + self.remaining_bytes == self.total_bytes
    }

    /// Moves up to `max_bytes` out of the file, returning the amount moved.
    pub(crate) fn send(&mut self, max_bytes: u64, via_gate: bool) -> u64 {
        let n = max_bytes.min(self.remaining_bytes);
        self.remaining_bytes -= n;
        if via_gate {
            self.bytes_via_gate += n;
        } else {
            self.bytes_via_macro += n;
        }
        if self.remaining_bytes == 0 {
            self.state = FileState::Done;
        } else if n > 0 {
            self.state = if via_gate {
                FileState::GateActive
            } else {
                FileState::MacroActive
            };
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEquipment {
    pub id: UeId,
    pub position: [f64; 2],
    pub heading: f64,
    pub speed_mps: f64,
    pub files: Vec<DelayedFile>,
    /// Slots granted inside the gate.
    pub alloc_slots: u64,
    /// Bytes offloaded through the gate.
    pub bytes_offloaded: u64,
    /// Filtered offloading rate.
    pub avg_rate_bps: f64,
    pub in_gate: bool,
    pub entry_time_s: Option<f64>,
    pub exit_time_s: Option<f64>,
}

impl UserEquipment {
    pub fn new(id: UeId, position: [f64; 2], heading: f64, speed_mps: f64) -> Self {
        UserEquipment {
            id,
            position,
            heading,
            speed_mps,
            files: Vec::new(),
            alloc_slots: 0,
            bytes_offloaded: 0,
            avg_rate_bps: 0.0,
            in_gate: false,
            entry_time_s: None,
            exit_time_s: None,
        }
    }
}

/// One AP serving one UE during a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGrant {
    pub ap: ApId,
    pub ue: UeId,
    pub sinr_linear: f64,
    pub capacity_bps: f64,
    pub rate_bps: f64,
    pub utility: f64,
}

/// The AP-to-UE mapping chosen for one slot, sorted by AP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub pairs: Vec<LinkGrant>,
}

impl Assignment {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ue_for(&self, ap: ApId) -> Option<UeId> {
        self.pairs.iter().find(|p| p.ap == ap).map(|p| p.ue)
    }

    pub fn grant_for_ue(&self, ue: UeId) -> Option<&LinkGrant> {
        self.pairs.iter().find(|p| p.ue == ue)
    }

    /// Each AP and each UE appears at most once.
    pub fn is_injective(&self) -> bool {
        self.pairs
            .iter()
            .enumerate()
            .all(|(i, a)| self.pairs[i + 1..].iter().all(|b| a.ap != b.ap && a.ue != b.ue))
    }

    pub fn total_utility(&self) -> f64 {
        self.pairs.iter().fold(0.0, |acc, p| acc + p.utility)
    }

    /// Serving UE per AP, `None` for idle APs.
    pub fn mapping(&self, num_aps: usize) -> Vec<Option<UeId>> {
        (0..num_aps).map(|ap| self.ue_for(ap)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRow {
    pub ue_id: UeId,
    pub speed_mps: f64,
    pub alloc_slots: u64,
    pub bytes_offloaded: u64,
    pub generated_bytes: u64,
    pub stay_s: f64,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scheduler: SchedulerKind,
    pub num_aps: usize,
    pub grt_s: f64,
    pub speed_ratio: f64,
    pub seed: u64,
    /// `None` when no bytes were generated.
    pub gofe: Option<f64>,
    /// `None` when no slot was granted.
    pub f_alloc: Option<f64>,
    /// `None` when nothing was offloaded.
    pub f_byte: Option<f64>,
    pub norm_energy: Option<f64>,
    pub total_generated_bytes: u64,
    pub bytes_via_gate: u64,
    pub bytes_via_macro: u64,
    pub undelivered_bytes: u64,
    pub gate_active_s: f64,
    pub macro_active_s: f64,
    pub total_slots: u64,
    pub grants_issued: u64,
    pub users: Vec<UserRow>,
}

impl MetricsReport {
    pub fn macro_fraction(&self) -> Option<f64> {
        ratio(self.bytes_via_macro, self.total_generated_bytes)
    }

    pub fn undelivered_fraction(&self) -> Option<f64> {
        ratio(self.undelivered_bytes, self.total_generated_bytes)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub(crate) fn distance2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
