//! Hand-checkable election scenarios on small fixtures.

use std::collections::BTreeMap;

use agentsim::engine::{Mode, Params, SimState, Status};
use agentsim::graph::Placement;
use agentsim::{SimGraph, Weight};

fn w(x: i64) -> Weight {
    Weight::from_integer(x)
}

fn place(groups: &[(usize, &[u64])]) -> Placement {
    let mut by_node = BTreeMap::new();
    for (node, ids) in groups {
        by_node.insert(*node, ids.to_vec());
    }
    Placement::new(by_node)
}

fn run(g: &SimGraph, p: &Placement, mode: Mode, params: Params) -> agentsim::engine::RunResult {
    let mut s = SimState::init(g.clone(), p, mode, params, true).unwrap();
    s.run(200_000)
}

fn leaders(r: &agentsim::engine::RunResult) -> Vec<u64> {
    r.leaders.clone()
}

#[test]
fn lone_agent_becomes_leader() {
    // k=1 on a 2-node graph: all-neighbors-empty special case
    let g = SimGraph::build(2, vec![(0, 1, w(1))], None).unwrap();
    let p = place(&[(0, &[1])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(leaders(&r), vec![1]);
    assert_eq!(r.components.len(), 1);
}

#[test]
fn single_node_graph() {
    let g = SimGraph::build(1, vec![], None).unwrap();
    let p = place(&[(0, &[1])]);
    for mode in [Mode::StabLeKn, Mode::ExplLeN, Mode::StabMstKn, Mode::ExplMstN] {
        let r = run(&g, &p, mode, Params::default());
        assert!(r.quiesced);
        assert_eq!(leaders(&r), vec![1], "mode {:?}", mode);
    }
}

#[test]
fn path_three_singletons() {
    // degrees 1,2,1: ends are condition-I winners, middle defers
    let g = SimGraph::build(3, vec![(0, 1, w(1)), (1, 2, w(1))], None).unwrap();
    let p = place(&[(0, &[1]), (1, &[2]), (2, &[3])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.components.len(), 1);
    assert_eq!(r.leaders.len(), 1, "status: {:?}", r.final_status);
    // both ends became local leaders during stage 1
    assert_eq!(r.components[0].zeta, 2, "components: {:?}", r.components);
}

#[test]
fn four_cycle_id_chain() {
    // all degree 2; only the largest id wins singleton election
    let g = SimGraph::build(
        4,
        vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1)), (3, 0, w(1))],
        None,
    )
    .unwrap();
    let p = place(&[(0, &[1]), (1, &[2]), (2, &[3]), (3, &[4])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.components[0].zeta, 1, "only id 4 becomes local leader");
    assert_eq!(leaders(&r), vec![4]);
}

#[test]
fn dispersal_settle_order() {
    // 3 agents {2,5,9} at one end of a path of 3:
    // 9 settles at the start, 5 at the next unoccupied, 2 settles last
    let g = SimGraph::build(3, vec![(0, 1, w(1)), (1, 2, w(1))], None).unwrap();
    let p = place(&[(0, &[2, 5, 9])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.final_nodes[&9], 0);
    assert_eq!(r.final_nodes[&5], 1);
    assert_eq!(r.final_nodes[&2], 2);
    assert_eq!(leaders(&r), vec![2]);
    assert_eq!(r.components[0].zeta, 1);
}

#[test]
fn fig1_two_components() {
    // 7-node path, groups of 3 and 2: dispersal forms two components
    // {0,1,2} and {4,5}; one leader each; nodes 3 and 6 stay empty
    let g = SimGraph::build(
        7,
        vec![
            (0, 1, w(1)),
            (1, 2, w(1)),
            (2, 3, w(1)),
            (3, 4, w(1)),
            (4, 5, w(1)),
            (5, 6, w(1)),
        ],
        None,
    )
    .unwrap();
    let p = place(&[(1, &[10, 11, 12]), (5, &[20, 21])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.components.len(), 2, "components: {:?}", r.components);
    assert_eq!(r.leaders.len(), 2);
    for c in &r.components {
        let leaders_in = r
            .final_nodes
            .iter()
            .filter(|(id, node)| {
                c.nodes.contains(node) && r.final_status[id] == "leader"
            })
            .count();
        assert_eq!(leaders_in, 1);
    }
}

#[test]
fn two_groups_heads_meet() {
    // groups at opposite ends of a path of 4: the larger initiator's
    // dispersal wins; everyone ends on distinct nodes with one leader
    let g = SimGraph::build(
        4,
        vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1))],
        None,
    )
    .unwrap();
    let p = place(&[(0, &[1, 2]), (3, &[7, 8])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    let mut nodes: Vec<usize> = r.final_nodes.values().copied().collect();
    nodes.sort_unstable();
    nodes.dedup();
    assert_eq!(nodes.len(), 4, "dispersed: {:?}", r.final_nodes);
    assert_eq!(r.leaders.len(), 1, "status: {:?}", r.final_status);
}

#[test]
fn determinism_trace_identical() {
    let g = SimGraph::build(
        4,
        vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1)), (3, 0, w(1))],
        None,
    )
    .unwrap();
    let p = place(&[(0, &[3, 5]), (2, &[4])]);
    let mut s1 = SimState::init(g.clone(), &p, Mode::StabLeKn, Params::default(), true).unwrap();
    let r1 = s1.run(100_000);
    let mut s2 = SimState::init(g.clone(), &p, Mode::StabLeKn, Params::default(), true).unwrap();
    let r2 = s2.run(100_000);
    assert!(r1.quiesced);
    assert_eq!(s1.trace_text().unwrap(), s2.trace_text().unwrap());
    assert_eq!(r1.rounds, r2.rounds);
}

#[test]
fn explicit_kn_mode() {
    let g = SimGraph::build(
        4,
        vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1))],
        None,
    )
    .unwrap();
    let p = place(&[(0, &[1]), (1, &[2]), (2, &[3]), (3, &[4])]);
    // k=4, delta=2
    let params = Params {
        k: Some(4),
        delta: Some(2),
        c1: None,
    };
    let r = run(&g, &p, Mode::ExplLeKn, params);
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.leaders.len(), 1, "status: {:?}", r.final_status);
    assert!(
        !r.flags.iter().any(|f| f.contains("overrun")),
        "flags: {:?}",
        r.flags
    );
    // no leader was ever demoted
    let mut s = SimState::init(g.clone(), &p, Mode::ExplLeKn, params, true).unwrap();
    s.run(100_000);
    let trace = s.trace_text().unwrap();
    assert!(!trace.contains("from=leader\tto=non_candidate"));
}

#[test]
fn explicit_kn_missing_delta_rejected() {
    let g = SimGraph::build(2, vec![(0, 1, w(1))], None).unwrap();
    let p = place(&[(0, &[1]), (1, &[2])]);
    let err = SimState::init(
        g,
        &p,
        Mode::ExplLeKn,
        Params {
            k: Some(2),
            delta: None,
            c1: None,
        },
        false,
    );
    assert!(err.is_err());
}

#[test]
fn k_equals_n_dispersed() {
    let g = SimGraph::build(
        4,
        vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1)), (3, 0, w(1))],
        None,
    )
    .unwrap();
    let p = place(&[(0, &[1]), (1, &[2]), (2, &[3]), (3, &[4])]);
    let r = run(&g, &p, Mode::ExplLeN, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.leaders.len(), 1, "status: {:?}", r.final_status);
    assert_eq!(r.components.len(), 1);
}

#[test]
fn k_equals_n_rooted() {
    // all agents on one node: dispersion first, then a unique leader
    let g = SimGraph::build(
        4,
        vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1)), (3, 0, w(1))],
        None,
    )
    .unwrap();
    let p = place(&[(1, &[1, 2, 3, 4])]);
    let r = run(&g, &p, Mode::ExplLeN, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.leaders.len(), 1);
    let mut nodes: Vec<usize> = r.final_nodes.values().copied().collect();
    nodes.sort_unstable();
    assert_eq!(nodes, vec![0, 1, 2, 3]);
}

#[test]
fn k_equals_n_requires_full_placement() {
    let g = SimGraph::build(3, vec![(0, 1, w(1)), (1, 2, w(1))], None).unwrap();
    let p = place(&[(0, &[1]), (1, &[2])]);
    assert!(SimState::init(g, &p, Mode::ExplLeN, Params::default(), false).is_err());
}

#[test]
fn swap_does_not_meet() {
    // engine semantics: simultaneous moves across one edge do not meet.
    // Two singletons on a 2-node graph tour each other's node in lockstep
    // during singleton election; they only resolve via the padded vigil,
    // and the run still ends with exactly one leader.
    let g = SimGraph::build(2, vec![(0, 1, w(1))], None).unwrap();
    let p = place(&[(0, &[1]), (1, &[2])]);
    let r = run(&g, &p, Mode::StabLeKn, Params::default());
    assert!(r.quiesced, "flags: {:?}", r.flags);
    assert_eq!(r.leaders.len(), 1);
    assert_eq!(r.components[0].zeta, 1, "ids 1,2 same degree: larger wins");
    assert_eq!(leaders(&r), vec![2]);
}

#[test]
fn memory_word_examples() {
    use agentsim::engine::{AgentMemory, DfsRecord, InstanceKey, InstanceKind, Program};
    // fresh candidate: <= 8 words
    let mem = AgentMemory::fresh(true, Some(0), Status::Candidate);
    assert!(mem.words(6) <= 8, "fresh candidate {} words", mem.words(6));
    // settled agent with j records: base + 4j
    let mut settled = AgentMemory::fresh(false, Some(1), Status::NonCandidate);
    settled.program = Program::Idle;
    let base = settled.words(6);
    for j in 1..=3u64 {
        settled.hosted.dfs.insert(
            InstanceKey {
                kind: InstanceKind::Nse,
                round: 0,
                owner: j,
            },
            DfsRecord {
                parent: None,
                next: 1,
                recent: 0,
            },
        );
        assert_eq!(settled.words(6), base + 4 * j as usize);
    }
}
