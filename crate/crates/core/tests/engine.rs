use std::collections::HashMap;

use mmw_gate::channel::{CapacityTable, LinkBudget, LinkParams};
use mmw_gate::engine::{self, RunOptions, RunOutput};
use mmw_gate::model::{ScenarioConfig, SchedulerKind, UeId};
use mmw_gate::scheduler::{self, SchedulerInputs, UeInputs};
use mmw_gate::trace::EventKind;
use proptest::prelude::*;

fn traced(cfg: ScenarioConfig) -> RunOutput {
    let cfg = cfg.validate().unwrap();
    engine::run_with(&cfg, None, RunOptions { record_trace: true }).unwrap()
}

fn short(num_aps: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        num_aps,
        num_ues: 6,
        grt_s: 1200.0,
        rng_seed: seed,
        ..Default::default()
    }
}

#[test]
fn single_ap_choice_matches_single_selection() {
    let cfg = short(1, 5);
    let params = LinkParams::from_config(&cfg);
    let valid = cfg.clone().validate().unwrap();
    let aps = valid.ap_positions().to_vec();
    let out = traced(cfg);
    let trace = out.trace.unwrap();
    let mut checked = 0;
    for (i, rec) in trace.slots.iter().enumerate() {
        let positions: Vec<(UeId, [f64; 2])> = trace
            .positions
            .iter()
            .filter(|p| p.slot == rec.slot)
            .map(|p| (p.ue_id, [p.x, p.y]))
            .collect();
        let budget = LinkBudget::new(&aps, &positions, &trace.blockage[i], &params);
        let table = CapacityTable::build(&budget, &params);
        let caps: Vec<f64> = (0..positions.len()).map(|u| table.capacity(1, 0, u)).collect();
        let inputs = SchedulerInputs {
            slot: rec.slot,
            alpha: 1.0,
            slot_s: 0.003,
            ues: rec
                .decisions
                .iter()
                .map(|d| UeInputs {
                    ue_id: d.ue_id,
                    remaining_bytes: d.remaining_bytes,
                    avg_rate_bps: d.avg_rate_bps,
                    weight: d.weight,
                })
                .collect(),
        };
        assert_eq!(
            scheduler::select_single(&inputs, &caps),
            rec.assignment.ue_for(0),
            "slot {}",
            rec.slot
        );
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn transfers_respect_arrival_and_gate_windows() {
    let out = traced(short(3, 9));
    let fat: HashMap<u64, f64> = out.workload.iter().flatten().map(|f| (f.id, f.fat_s)).collect();
    let grt = out.report.grt_s;
    for e in &out.events {
        if let (EventKind::MacroStart, Some(id)) = (e.kind, e.file_id) {
            assert!(e.time_s >= fat[&id]);
        }
        if e.kind == EventKind::SlotScheduled {
            let exit = out.users[e.ue_id].exit_time_s.unwrap();
            assert!(e.time_s >= grt && e.time_s <= exit, "{e:?}");
        }
    }
}

#[test]
fn events_are_time_ordered() {
    let out = traced(short(2, 3));
    assert!(out.events.windows(2).all(|w| w[0].time_s <= w[1].time_s));
    let mut csv = Vec::new();
    out.write_events_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("time_s,kind,ue_id,file_id,detail\n"));
    assert_eq!(text.lines().count(), out.events.len() + 1);
}

#[test]
fn distinct_seeds_give_distinct_reports() {
    let a = engine::run(&short(2, 1).validate().unwrap()).report;
    let b = engine::run(&short(2, 2).validate().unwrap()).report;
    assert_ne!(a.total_generated_bytes, b.total_generated_bytes);
}

#[test]
fn schedulers_share_workload_and_trajectories() {
    let runs: Vec<RunOutput> = [SchedulerKind::Wpf, SchedulerKind::Pf, SchedulerKind::Rr]
        .into_iter()
        .map(|s| {
            traced(ScenarioConfig {
                scheduler: s,
                ..short(2, 11)
            })
        })
        .collect();
    for other in &runs[1..] {
        assert_eq!(runs[0].workload, other.workload);
        let exits = |o: &RunOutput| o.users.iter().map(|u| u.exit_time_s).collect::<Vec<_>>();
        assert_eq!(exits(&runs[0]), exits(other));
        assert_eq!(
            runs[0].trace.as_ref().unwrap().positions,
            other.trace.as_ref().unwrap().positions
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn counters_are_consistent(seed in 0u64..10_000, aps in 1usize..=4, sched in 0usize..3) {
        let scheduler = [SchedulerKind::Wpf, SchedulerKind::Pf, SchedulerKind::Rr][sched];
        let out = engine::run(&ScenarioConfig { scheduler, ..short(aps, seed) }.validate().unwrap());
        let r = &out.report;
        for f in out.users.iter().flat_map(|u| &u.files) {
            prop_assert!(f.is_conserved());
        }
        prop_assert_eq!(r.users.iter().map(|u| u.alloc_slots).sum::<u64>(), r.grants_issued);
        prop_assert_eq!(r.bytes_via_gate + r.bytes_via_macro + r.undelivered_bytes, r.total_generated_bytes);
        if let Some(g) = r.gofe {
            prop_assert!((0.0..=1.0).contains(&g));
        }
        let k = r.users.len() as f64;
        for f in [r.f_alloc, r.f_byte].into_iter().flatten() {
            prop_assert!(f >= 1.0 / k - 1e-12 && f <= 1.0 + 1e-12);
        }
    }
}
