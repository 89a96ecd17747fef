use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use wchain::fault::{CrashSchedule, FaultState};
use wchain::sim::Medium;
use wchain::spanner::{self, BuildMode, SpannerError};
use wchain::{generate, NodeId, Sinr, Spec};

fn spec(n: usize, seed: u64) -> Spec {
    Spec::uniform(2.5 * (n as f64).sqrt() + 4.0, n, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_build_satisfies_invariants(n in 2usize..80, seed in any::<u64>(), order in any::<u64>()) {
        let p = generate(&spec(n, seed)).unwrap();
        let all: BTreeSet<NodeId> = p.ids().collect();
        let s = spanner::build(&p, &all, &BuildMode::default(), order).unwrap();
        prop_assert!(s.verify(&p).is_ok(), "{:?}", s.verify(&p));
        prop_assert_eq!(s.depth(), spanner::level_count(&p));
        prop_assert_eq!(s.level(s.depth()), &[s.collector()][..]);
        prop_assert!(s.density_check(&p) <= 25);
        // Every node reaches the collector by following parents.
        for v in p.ids() {
            let mut at = v;
            let mut hops = 0;
            while let Some(link) = s.parent(at) {
                at = link.parent;
                hops += 1;
                prop_assert!(hops <= s.depth());
            }
            prop_assert_eq!(at, s.collector());
        }
    }

    #[test]
    fn rebuild_spans_exactly_the_survivors(n in 3usize..60, seed in any::<u64>(), drop in proptest::collection::btree_set(0usize..60, 0..20)) {
        let p = generate(&spec(n, seed)).unwrap();
        let alive: BTreeSet<NodeId> = p.ids().filter(|v| !drop.contains(&v.0)).collect();
        prop_assume!(!alive.is_empty());
        let s = spanner::build(&p, &alive, &BuildMode::default(), seed).unwrap();
        let members: BTreeSet<NodeId> = s.members().iter().copied().collect();
        prop_assert_eq!(&members, &alive);
        prop_assert!(alive.contains(&s.collector()));
        for v in &alive {
            if *v != s.collector() {
                prop_assert!(alive.contains(&s.parent(*v).unwrap().parent));
            }
        }
    }
}

#[test]
fn empty_alive_set_is_an_error() {
    let p = generate(&spec(5, 1)).unwrap();
    assert_eq!(spanner::build(&p, &BTreeSet::new(), &BuildMode::default(), 0).unwrap_err(), SpannerError::EmptyAlive);
}

#[test]
fn oracle_charge_matches_formula() {
    let p = generate(&spec(64, 3)).unwrap();
    let all: BTreeSet<NodeId> = p.ids().collect();
    let s = spanner::build(&p, &all, &BuildMode::Oracle { c_span: 7 }, 0).unwrap();
    assert_eq!(s.construction_slots(), 7 * 6 * s.depth() as u64);
}

#[test]
fn f32_build_is_valid() {
    let p = generate(&wchain::DeploymentSpec::<f32>::uniform(30.0, 80, 11)).unwrap();
    let all: BTreeSet<NodeId> = p.ids().collect();
    let s = spanner::build(&p, &all, &BuildMode::default(), 4).unwrap();
    s.verify(&p).unwrap();
}

#[test]
fn distributed_build_is_valid_and_measured() {
    for seed in 0..4 {
        let p = generate(&spec(60, seed)).unwrap();
        let all: BTreeSet<NodeId> = p.ids().collect();
        let mode = BuildMode::Distributed { sinr: Sinr::default(), p: 0.05, phase_slots: 200 };
        let s = spanner::build(&p, &all, &mode, seed).unwrap();
        s.verify(&p).unwrap();
        assert!(s.construction_slots() > 0);
        assert!(s.distributed_stats().is_some());
    }
}

#[test]
fn crashed_relays_are_left_out_of_the_rebuild() {
    let p = Arc::new(generate(&spec(40, 9)).unwrap());
    let all: BTreeSet<NodeId> = p.ids().collect();
    let s = spanner::build(&p, &all, &BuildMode::default(), 0).unwrap();
    let relays: Vec<NodeId> = s.level(1).iter().copied().filter(|&v| v != s.collector()).take(5).collect();
    let events = relays.iter().map(|&node| wchain::CrashEvent { slot: 0, node }).collect();
    let faults = FaultState::new(&CrashSchedule::Scripted(events), 40, 20).unwrap();
    let mut m = Medium::new(Arc::clone(&p), Sinr::default(), faults, 0);
    m.advance(1);
    let alive = m.alive_now();
    let r = spanner::build(&p, &alive, &BuildMode::default(), 1).unwrap();
    for v in relays {
        assert!(!r.contains(v));
    }
    assert_eq!(r.members().len(), 35);
}
