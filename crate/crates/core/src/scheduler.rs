//! The gate coordinator's per-slot decision: weighted proportional fairness
//! (WPF), conventional PF and round robin.
//!
//! WPF scores each candidate link with `U = (r / R) * w^alpha` where `r` is
//! the rate the UE can actually use this slot, `R` its filtered past rate and
//! `w = TS_h / TS_k` the inverse of its expected remaining stay normalised to
//! the longest one. With several APs the coordinator picks the injective
//! AP-to-UE mapping with the largest utility sum, searched exhaustively.

use thiserror::Error;

use crate::channel::CapacityTable;
use crate::model::{ApId, Assignment, LinkGrant, UeId};

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("expected stay {0} s leaves the priority weight undefined")]
    DegenerateStay(f64),
}

/// Usable rate this slot: capacity, capped by what the UE still has queued.
pub fn inst_rate(capacity_bps: f64, remaining_bytes: u64, slot_s: f64) -> f64 {
    capacity_bps.min(8.0 * remaining_bytes as f64 / slot_s)
}

/// `TS_h / TS_k`: grows as the UE's remaining stay shrinks.
pub fn priority_weight(ts_k: f64, ts_h: f64) -> Result<f64, SchedulerError> {
    if ts_k > 0.0 {
        Ok(ts_h / ts_k)
    } else {
        Err(SchedulerError::DegenerateStay(ts_k))
    }
}

/// Weights for a whole pool. A UE standing on the exit plane gets the largest
/// finite weight of the pool, or 1 if nobody has one.
pub fn priority_weights(stays: &[f64], ts_h: f64) -> Vec<f64> {
    let weights: Vec<Option<f64>> = stays.iter().map(|&ts| priority_weight(ts, ts_h).ok()).collect();
    let fallback = weights
        .iter()
        .flatten()
        .copied()
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))));
    weights.into_iter().map(|w| w.or(fallback).unwrap_or(1.0)).collect()
}

pub fn utility(rate_bps: f64, avg_rate_bps: f64, weight: f64, alpha: f64) -> f64 {
    (rate_bps / avg_rate_bps) * weight.powf(alpha)
}

/// One step of the throughput filter with a window of `n_c` slots.
pub fn update_avg_rate(prev_bps: f64, rate_bps: f64, served: bool, n_c: u32) -> f64 {
    let a = if served { 1.0 } else { 0.0 };
    let n = f64::from(n_c);
    (1.0 - 1.0 / n) * prev_bps + (1.0 / n) * rate_bps * a
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeInputs {
    pub ue_id: UeId,
    pub remaining_bytes: u64,
    pub avg_rate_bps: f64,
    pub weight: f64,
}

/// Per-slot scheduler view of the UEs inside the gate, sorted by UE id.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerInputs {
    pub slot: u64,
    pub alpha: f64,
    pub slot_s: f64,
    pub ues: Vec<UeInputs>,
}

impl SchedulerInputs {
    fn utility_at(&self, u: usize, capacity_bps: f64) -> (f64, f64) {
        let ue = &self.ues[u];
        let r = inst_rate(capacity_bps, ue.remaining_bytes, self.slot_s);
        (r, utility(r, ue.avg_rate_bps, ue.weight, self.alpha))
    }
}

/// Single-AP choice: the UE with the highest utility among those with data,
/// lowest id on ties. `capacities[i]` belongs to `inputs.ues[i]`.
pub fn select_single(inputs: &SchedulerInputs, capacities: &[f64]) -> Option<UeId> {
    assert_eq!(capacities.len(), inputs.ues.len());
    let mut best: Option<(usize, f64)> = None;
    for (u, &c) in capacities.iter().enumerate() {
        let (r, util) = inputs.utility_at(u, c);
        if r <= 0.0 {
            continue;
        }
        if best.is_none_or(|(_, b)| util > b) {
            best = Some((u, util));
        }
    }
    best.map(|(u, _)| inputs.ues[u].ue_id)
}

/// Joint choice over every injective AP-to-UE mapping, idle APs included.
///
/// The utility sum is accumulated in AP order. Among equal sums the
/// lexicographically smallest mapping wins, comparing per-AP entries with an
/// idle AP before any UE and UEs in id order.
pub fn select_multi(inputs: &SchedulerInputs, table: &CapacityTable) -> Assignment {
    let num_aps = table.num_aps();
    let k = inputs.ues.len();
    assert_eq!(
        table.ue_ids().len(),
        k,
        "capacity table and inputs disagree on the UE pool"
    );

    let eligible: Vec<usize> = (0..k).filter(|&u| inputs.ues[u].remaining_bytes > 0).collect();
    let mut search = Search {
        eligible: &eligible,
        k,
        util: vec![0.0; num_aps * k],
        cur: vec![None; num_aps],
        used: vec![false; k],
        best_sum: 0.0,
        best: vec![None; num_aps],
    };
    if !eligible.is_empty() {
        for mask in 1u32..1 << num_aps {
            let aps: Vec<ApId> = (0..num_aps).filter(|a| mask & (1 << a) != 0).collect();
            if aps.len() > eligible.len() {
                continue;
            }
            for &ap in &aps {
                for &u in &eligible {
                    search.util[ap * k + u] = inputs.utility_at(u, table.capacity(mask, ap, u)).1;
                }
            }
            search.cur.iter_mut().for_each(|c| *c = None);
            search.descend(&aps, 0.0);
        }
    }
    build_assignment(inputs, table, &search.best)
}

struct Search<'a> {
    eligible: &'a [usize],
    k: usize,
    util: Vec<f64>,
    cur: Vec<Option<usize>>,
    used: Vec<bool>,
    best_sum: f64,
    best: Vec<Option<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, aps: &[ApId], sum: f64) {
        let Some((&ap, rest)) = aps.split_first() else {
            if sum > self.best_sum || (sum == self.best_sum && self.cur < self.best) {
                self.best_sum = sum;
                self.best.copy_from_slice(&self.cur);
            }
            return;
        };
        for &u in self.eligible {
            if self.used[u] {
                continue;
            }
            self.cur[ap] = Some(u);
            self.used[u] = true;
            self.descend(rest, sum + self.util[ap * self.k + u]);
            self.used[u] = false;
        }
        self.cur[ap] = None;
    }
}

/// Grants for `mapping` (UE index per AP) with capacities from `table`.
pub fn build_assignment(inputs: &SchedulerInputs, table: &CapacityTable, mapping: &[Option<usize>]) -> Assignment {
    let pairs = table
        .links(mapping)
        .into_iter()
        .map(|(ap, u, sinr, capacity)| {
            let (rate, util) = inputs.utility_at(u, capacity);
            LinkGrant {
                ap,
                ue: inputs.ues[u].ue_id,
                sinr_linear: sinr,
                capacity_bps: capacity,
                rate_bps: rate,
                utility: util,
            }
        })
        .collect();
    Assignment { pairs }
}

/// Cyclic service in UE-id order, channel-blind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundRobin {
    last_served: Option<UeId>,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_served(&self) -> Option<UeId> {
        self.last_served
    }

    /// Serves the next `num_aps` UEs after the cursor among `eligible`
    /// (ascending ids), then pairs them with APs closest-first.
    pub fn select(
        &mut self,
        eligible: &[UeId],
        num_aps: usize,
        distance: impl Fn(ApId, UeId) -> f64,
    ) -> Vec<(ApId, UeId)> {
        if eligible.is_empty() || num_aps == 0 {
            return Vec::new();
        }
        let start = match self.last_served {
            Some(last) => eligible.iter().position(|&id| id > last).unwrap_or(0),
            None => 0,
        };
        let take = num_aps.min(eligible.len());
        let chosen: Vec<UeId> = (0..take).map(|i| eligible[(start + i) % eligible.len()]).collect();
        self.last_served = chosen.last().copied();

        let mut links: Vec<(f64, ApId, UeId)> = (0..num_aps)
            .flat_map(|ap| chosen.iter().map(move |&ue| (ap, ue)))
            .map(|(ap, ue)| (distance(ap, ue), ap, ue))
            .collect();
        links.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut pairs = Vec::with_capacity(take);
        for (_, ap, ue) in links {
            if pairs.iter().all(|&(a, u)| a != ap && u != ue) {
                pairs.push((ap, ue));
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(rows: &[(u64, f64, f64)], alpha: f64) -> SchedulerInputs {
        SchedulerInputs {
            slot: 0,
            alpha,
            slot_s: 0.003,
            ues: rows
                .iter()
                .enumerate()
                .map(|(i, &(l, r, w))| UeInputs {
                    ue_id: i,
                    remaining_bytes: l,
                    avg_rate_bps: r,
                    weight: w,
                })
                .collect(),
        }
    }

    #[test]
    fn rate_caps() {
        let r = inst_rate(5e9, 1_000_000, 0.003);
        assert!((r - 2.6667e9).abs() < 1e5);
        assert!((r - 8e6 / 0.003).abs() < 1e-3);
        assert_eq!(inst_rate(5e9, 0, 0.003), 0.0);
        assert_eq!(inst_rate(5e9, u64::MAX / 2, 0.003), 5e9);
    }

    #[test]
    fn weight_values() {
        assert_eq!(priority_weight(14.4, 14.4).unwrap(), 1.0);
        assert_eq!(priority_weight(7.2, 14.4).unwrap(), 2.0);
        assert_eq!(
            priority_weight(3.6, 14.4).unwrap(),
            2.0 * priority_weight(7.2, 14.4).unwrap()
        );
        assert_eq!(priority_weight(0.0, 14.4), Err(SchedulerError::DegenerateStay(0.0)));
    }

    #[test]
    fn weight_at_exit_takes_pool_maximum() {
        assert_eq!(priority_weights(&[10.0, 5.0, 0.0], 10.0), vec![1.0, 2.0, 2.0]);
        assert_eq!(priority_weights(&[0.0], 0.0), vec![1.0]);
    }

    #[test]
    fn utility_values() {
        assert_eq!(utility(2e9, 1e9, 3.7, 0.0), 2.0);
        assert_eq!(utility(2e9, 1e9, 2.0, 1.0), 4.0);
        assert_eq!(utility(2e9, 1e9, 1.0, 0.6), 2.0);
    }

    #[test]
    fn average_rate_filter() {
        assert!((update_avg_rate(1e9, 1e9, true, 100) - 1e9).abs() <= 1e-12 * 1e9);
        assert!((update_avg_rate(1e9, 2e9, true, 100) - 1.01e9).abs() < 1e-3);
        assert_eq!(update_avg_rate(1e9, 2e9, false, 100), (1.0 - 1.0 / 100.0) * 1e9);
    }

    #[test]
    fn average_rate_converges_geometrically() {
        let (target, n_c) = (3e9, 50u32);
        let mut r = 1e3;
        for step in 1..=500 {
            r = update_avg_rate(r, target, true, n_c);
            let expected_gap = (target - 1e3) * (1.0 - 1.0 / n_c as f64).powi(step);
            assert!(((target - r) - expected_gap).abs() <= 1e-6 * target);
        }
    }

    #[test]
    fn single_argmax() {
        let inp = inputs(&[(10, 1.0, 1.0), (10, 1.0, 1.0), (10, 1.0, 1.0)], 1.0);
        // Utilities 0.5, 2.0, 1.0.
        assert_eq!(select_single(&inp, &[0.5, 2.0, 1.0]), Some(1));
        assert_eq!(select_single(&inp, &[2.0, 2.0, 1.0]), Some(0));
        let empty = inputs(&[(0, 1.0, 1.0), (0, 1.0, 1.0)], 1.0);
        assert_eq!(select_single(&empty, &[5e9, 5e9]), None);
    }

    #[test]
    fn priority_rules() {
        // Equal R and w: the higher rate wins.
        let inp = inputs(&[(u64::MAX / 4, 1e9, 1.0), (u64::MAX / 4, 1e9, 1.0)], 1.0);
        assert_eq!(select_single(&inp, &[1e9, 2e9]), Some(1));
        // Equal r and R: the shorter stay (larger weight) wins.
        let inp = inputs(&[(u64::MAX / 4, 1e9, 1.0), (u64::MAX / 4, 1e9, 1.5)], 1.0);
        assert_eq!(select_single(&inp, &[2e9, 2e9]), Some(1));
        // Equal r and w: the lower average rate wins.
        let inp = inputs(&[(u64::MAX / 4, 2e9, 1.0), (u64::MAX / 4, 1e9, 1.0)], 1.0);
        assert_eq!(select_single(&inp, &[2e9, 2e9]), Some(1));
    }

    fn table_from(num_aps: usize, caps: &[f64]) -> CapacityTable {
        // Capacity depends on the active mask to exercise interference coupling.
        let k = caps.len() / num_aps;
        CapacityTable::from_fn(num_aps, (0..k).collect(), |mask, ap, u| {
            let c = caps[ap * k + u] / f64::from(mask.count_ones());
            (c, c)
        })
    }

    #[test]
    fn multi_reduces_to_single_for_one_ap() {
        let inp = inputs(&[(10_000_000, 1e9, 1.0), (10_000_000, 2e9, 2.0), (0, 1e3, 1.0)], 1.0);
        let caps = [3e9, 4e9, 9e9];
        let table = table_from(1, &caps);
        let a = select_multi(&inp, &table);
        assert_eq!(a.mapping(1), vec![select_single(&inp, &caps)]);
    }

    #[test]
    fn multi_idles_when_nobody_has_data() {
        let inp = inputs(&[(0, 1e9, 1.0), (0, 1e9, 1.0)], 1.0);
        let a = select_multi(&inp, &table_from(2, &[1e9; 4]));
        assert!(a.is_empty());
    }

    #[test]
    fn multi_leaves_ap_idle_with_one_eligible_ue() {
        let inp = inputs(&[(10_000_000_000, 1e9, 1.0), (0, 1e9, 1.0)], 1.0);
        let a = select_multi(&inp, &table_from(2, &[1e9, 1e9, 3e9, 3e9]));
        assert_eq!(a.mapping(2), vec![None, Some(0)]);
        assert!(a.is_injective());
    }

    #[test]
    fn multi_prefers_fewer_links_when_interference_dominates() {
        // Two active APs quarter each other's capacity, so one strong link
        // beats two weak ones.
        let inp = inputs(&[(u64::MAX / 4, 1e9, 1.0), (u64::MAX / 4, 1e9, 1.0)], 1.0);
        let table = CapacityTable::from_fn(2, vec![0, 1], |mask, ap, u| {
            let base = if ap == u { 8e9 } else { 1e9 };
            let c = if mask == 0b11 { base / 8.0 } else { base };
            (c, c)
        });
        let a = select_multi(&inp, &table);
        assert_eq!(a.mapping(2), vec![None, Some(1)]);
    }

    #[test]
    fn round_robin_cycles() {
        let mut rr = RoundRobin::new();
        let order: Vec<UeId> = (0..7).map(|_| rr.select(&[0, 1, 2], 1, |_, _| 0.0)[0].1).collect();
        assert_eq!(order, [0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn round_robin_skips_empty_ues() {
        // UE 1 has no data for the first three slots. Hand simulation:
        // 0, 2, 0 while it is skipped; it then follows the cursor at 0.
        let mut rr = RoundRobin::new();
        let mut served = Vec::new();
        for slot in 0..6 {
            let eligible: &[UeId] = if slot < 3 { &[0, 2] } else { &[0, 1, 2] };
            served.push(rr.select(eligible, 1, |_, _| 0.0)[0].1);
        }
        assert_eq!(served, [0, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn round_robin_saturates_and_pairs_nearest() {
        let mut rr = RoundRobin::new();
        let dist = |ap: ApId, ue: UeId| if ap == ue { 10.0 } else { 1.0 };
        for _ in 0..4 {
            let pairs = rr.select(&[0, 1], 2, dist);
            assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        }
    }

    proptest! {
        #[test]
        fn argmax_is_scale_invariant(
            caps in prop::collection::vec(1e6f64..1e10, 1..8),
            avg in prop::collection::vec(1e3f64..1e10, 8),
            w in prop::collection::vec(1.0f64..8.0, 8),
            scale in 0.01f64..100.0,
            alpha in 0.0f64..=1.0,
        ) {
            let rows: Vec<_> = (0..caps.len()).map(|i| (u64::MAX / 4, avg[i], w[i])).collect();
            let inp = inputs(&rows, alpha);
            let scaled: Vec<f64> = caps.iter().map(|c| c * scale).collect();
            // Exact ties can flip under rounding; skip them.
            let utils: Vec<f64> = caps.iter().zip(&rows).map(|(c, r)| c / r.1 * r.2.powf(alpha)).collect();
            let mut sorted = utils.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(sorted.len() < 2 || sorted[0] > sorted[1] * (1.0 + 1e-9));
            prop_assert_eq!(select_single(&inp, &caps), select_single(&inp, &scaled));
        }

        #[test]
        fn multi_beats_every_mapping(
            num_aps in 1usize..=3,
            k in 1usize..=5,
            caps in prop::collection::vec(1e6f64..1e10, 15),
            rows in prop::collection::vec((0u64..3_000_000, 1e3f64..1e10, 1.0f64..4.0), 5),
        ) {
            let inp = inputs(&rows[..k], 1.0);
            let table = table_from(num_aps, &caps[..num_aps * k]);
            let chosen = select_multi(&inp, &table);
            prop_assert!(chosen.is_injective());
            prop_assert!(chosen.pairs.len() <= num_aps);
            let chosen_sum = chosen.total_utility();
            for m in table.mappings() {
                let sum = build_assignment(&inp, &table, &m).total_utility();
                prop_assert!(chosen_sum >= sum * (1.0 - 1e-12));
            }
        }
    }
}
