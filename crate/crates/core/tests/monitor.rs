// SPDX-License-Identifier: Apache-2.0

mod common;

use numalang::effects::Label;
use numalang::monitor::{check_step, verify_explore, verify_run, GlobalBehaviour, Monitor, SigmaEntry, Verdict};
use numalang::runtime::{init_config, run, ExploreOptions, Machine, Mutation, Rule, Scheduler};
use numalang::syntax::{parse_behaviour, Address, Location, RemAccess};
use proptest::prelude::*;

fn sigma(entries: &[(u32, &str)]) -> GlobalBehaviour {
    GlobalBehaviour(
        entries
            .iter()
            .map(|(n, b)| SigmaEntry {
                actor: Address::new(*n, 0),
                behaviour: parse_behaviour(b).unwrap(),
            })
            .collect(),
    )
}

fn write(a: u32, b: u32) -> Label {
    Label::Access(RemAccess::Write(Location::Node(a), Location::Node(b)))
}

#[test]
fn prefix_step_passes() {
    let v = check_step(&sigma(&[(0, "write(0,1).read(0,1)")]), Address::new(0, 0), &write(0, 1), &sigma(&[(0, "read(0,1)")]));
    assert!(matches!(v, Verdict::Pass { .. }), "{:?}", v);
}

#[test]
fn message_branch_migrates_to_the_receiver() {
    let before = sigma(&[(0, "msg(0,1,m).(eps || write(1,0))"), (1, "eps")]);
    let after = sigma(&[(0, "eps"), (1, "write(1,0)")]);
    let msg = Label::Access(RemAccess::Msg(Location::Node(0), Location::Node(1), "m".into()));
    match check_step(&before, Address::new(0, 0), &msg, &after) {
        Verdict::Pass { target, .. } => assert_eq!(target, Some(Address::new(1, 0))),
        other => panic!("{:?}", other),
    }
}

#[test]
fn wrong_label_fails() {
    let v = check_step(&sigma(&[(0, "read(0,1)")]), Address::new(0, 0), &write(0, 1), &sigma(&[(0, "eps")]));
    assert!(v.is_fail());
}

#[test]
fn untouched_entries_must_not_change() {
    let before = sigma(&[(0, "write(0,1)"), (1, "read(1,0)")]);
    let after = sigma(&[(0, "eps"), (1, "eps")]);
    assert!(check_step(&before, Address::new(0, 0), &write(0, 1), &after).is_fail());
}

#[test]
fn placement_sigma_at_start() {
    let e = common::entry("placement");
    let cfg = init_config(&e.program, &"L1=0,L2=1,L3=1".parse().unwrap()).unwrap();
    let s = Monitor::new(&e.program).global_behaviour(&cfg).unwrap();
    assert_eq!(s.to_string(), "[@0.0:write(0,1).write(0,1)]");
}

#[test]
fn quiescent_sigma_is_all_eps() {
    for e in common::corpus() {
        let cfg = init_config(&e.program, &e.map).unwrap();
        let done = run(&Machine::new(&e.program), cfg, &Scheduler::Fifo, 10_000).config;
        let s = Monitor::new(&e.program).global_behaviour(&done).unwrap();
        assert!(s.is_all_eps(), "{}: {}", e.name, s);
    }
}

#[test]
fn duplicated_node_ids_violate_clause_one() {
    let e = common::entry("ping");
    let mut cfg = init_config(&e.program, &e.map).unwrap();
    let copy = cfg.nodes[0].clone();
    cfg.nodes.push(copy);
    let v = Monitor::new(&e.program).wf_config(&cfg);
    assert!(v.iter().any(|v| v.clause == 1), "{:?}", v);
}

#[test]
fn misplaced_objects_violate_clause_two() {
    let e = common::entry("placement");
    let cfg = init_config(&e.program, &e.map).unwrap();
    let mut cfg = run(&Machine::new(&e.program), cfg, &Scheduler::Fifo, 3).config;
    let (addr, obj) = cfg.nodes[0].heap.iter().next_back().map(|(a, o)| (*a, o.clone())).unwrap();
    cfg.nodes[0].heap.remove(&addr);
    cfg.nodes[1].heap.insert(addr, obj);
    let v = Monitor::new(&e.program).wf_config(&cfg);
    assert!(v.iter().any(|v| v.clause == 2), "{:?}", v);
}

#[test]
fn injected_new_fault_fails_at_the_first_remote_creation() {
    let e = common::entry("placement");
    let cfg = init_config(&e.program, &"L1=0,L2=1,L3=1".parse().unwrap()).unwrap();
    let m = Machine::with_mutation(&e.program, Some(Mutation::NewRemoteAsRead));
    let (_, report) = verify_run(&m, cfg, &Scheduler::Fifo, 1000);
    let first = report.first_failure().unwrap();
    assert_eq!(first.event.rule, Rule::NewR);
    assert!(report.log().contains("verdict=fail"));
}

#[test]
fn every_mutation_is_caught_somewhere_in_the_corpus() {
    for mutation in Mutation::ALL {
        let caught = common::corpus().iter().any(|e| {
            let cfg = init_config(&e.program, &e.map).unwrap();
            let m = Machine::with_mutation(&e.program, Some(mutation));
            let (_, report) = verify_explore(&m, &cfg, ExploreOptions::default()).unwrap();
            !report.passed()
        });
        assert!(caught, "{} went unnoticed", mutation.name());
    }
}

#[test]
fn exploring_the_corpus_passes() {
    for e in common::corpus() {
        let cfg = init_config(&e.program, &e.map).unwrap();
        let (_, report) = verify_explore(&Machine::new(&e.program), &cfg, ExploreOptions::default()).unwrap();
        assert!(report.passed(), "{}:\n{}", e.name, report.soundness.log());
        assert!(report.faults.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_runs_verify(seed in any::<u64>()) {
        for e in common::corpus() {
            let cfg = init_config(&e.program, &e.map).unwrap();
            let (run, report) = verify_run(&Machine::new(&e.program), cfg, &Scheduler::Random(seed), 10_000);
            prop_assert!(report.passed(), "{} seed {}:\n{}", e.name, seed, report.log());
            prop_assert_eq!(report.steps.len(), run.trace.len());
        }
    }
}

#[test]
fn placement_verifies_for_seeds_0_to_99() {
    let e = common::entry("placement");
    let m = Machine::new(&e.program);
    for seed in 0..100 {
        let cfg = init_config(&e.program, &"L1=0,L2=1,L3=1".parse().unwrap()).unwrap();
        let (_, report) = verify_run(&m, cfg, &Scheduler::Random(seed), 1000);
        assert!(report.passed(), "seed {}", seed);
    }
}

#[test]
fn unreduced_exploration_also_passes() {
    let opts = ExploreOptions {
        depth_limit: 1000,
        reduce: false,
    };
    for e in common::corpus() {
        let cfg = init_config(&e.program, &e.map).unwrap();
        let (_, report) = verify_explore(&Machine::new(&e.program), &cfg, opts).unwrap();
        assert!(report.passed(), "{}:\n{}", e.name, report.soundness.log());
    }
}
