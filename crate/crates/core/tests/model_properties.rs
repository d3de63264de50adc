#![allow(clippy::needless_range_loop)]

mod common;

use common::deviation_values_by_policies;
use promise_persuasion::instances::{random_instance, vc_instance, GadgetLayout, Graph};
use promise_persuasion::mdp::{read_instance, write_instance};
use promise_persuasion::{deviation_values, PersuasionMdp};
use proptest::prelude::*;

const VALUE_TOL: f64 = 1e-12;

fn small_random() -> impl Strategy<Value = PersuasionMdp> {
    (any::<u64>(), 1usize..=3, 1usize..=3, 1usize..=2, 1usize..=3)
        .prop_map(|(seed, ns, na, no, hz)| random_instance(seed, ns, na, no, hz).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn deviation_values_match_policy_enumeration(inst in small_random()) {
        let dev = deviation_values(&inst);
        let brute = deviation_values_by_policies(&inst);
        for h in 0..=inst.horizon {
            for s in 0..inst.num_states() {
                prop_assert!((dev.value(h, s) - brute[h][s]).abs() <= VALUE_TOL);
            }
        }
    }

    #[test]
    fn deviation_values_are_bounded(inst in small_random()) {
        let dev = deviation_values(&inst);
        for h in 0..=inst.horizon {
            for s in 0..inst.num_states() {
                let v = dev.value(h, s);
                prop_assert!(v >= 0.0 && v <= (inst.horizon - h) as f64 + VALUE_TOL);
            }
        }
    }

    #[test]
    fn raising_a_receiver_reward_never_lowers_deviation_values(
        inst in small_random(),
        pick in any::<prop::sample::Index>(),
        bump in 0.0f64..1.0,
    ) {
        let mut raised = inst.clone();
        let cells: Vec<&mut f64> = raised.receiver_reward.iter_mut().flatten().flatten().flatten().collect();
        let n = cells.len();
        let target = cells.into_iter().nth(pick.index(n)).unwrap();
        *target += bump;
        let (before, after) = (deviation_values(&inst), deviation_values(&raised));
        for h in 0..=inst.horizon {
            for s in 0..inst.num_states() {
                prop_assert!(after.value(h, s) >= before.value(h, s) - VALUE_TOL);
            }
        }
    }

    #[test]
    fn instance_files_round_trip_exactly(inst in small_random()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        write_instance(&inst, &path).unwrap();
        let back = read_instance(&path).unwrap();
        prop_assert_eq!(&back, &inst);
        let again = dir.path().join("again.json");
        write_instance(&back, &again).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn complete_graph_gadget_deviation_values() {
    let graph = Graph::complete(4);
    let inst = vc_instance(&graph);
    let dev = deviation_values(&inst);
    let layout = GadgetLayout {
        num_edges: graph.edges.len(),
        num_vertices: graph.num_vertices,
    };
    assert!((dev.value(0, GadgetLayout::START_CHOICE) - 1.0).abs() <= VALUE_TOL);
    assert!((dev.value(0, GadgetLayout::START_SAMPLE) - 0.5).abs() <= VALUE_TOL);
    for i in 0..graph.edges.len() {
        assert!((dev.value(1, layout.edge(i)) - 0.5).abs() <= VALUE_TOL);
    }
    for v in 0..graph.num_vertices {
        assert!((dev.value(2, layout.vertex(v)) - 0.5).abs() <= VALUE_TOL);
    }
}
