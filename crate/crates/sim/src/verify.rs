//! Post-run verification against the brute-force oracles: leader
//! uniqueness, 2-hop component separation, MST equality, dispersion,
//! status-transition legality, and phase bounds.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::engine::{Event, EventKind, Mode, RunResult, Status};
use crate::graph::NodeId;
use crate::oracle;
use crate::SimGraph;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {} {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        s.push_str(if self.pass { "VERIFIED\n" } else { "FAILED\n" });
        s
    }
}

/// Runs every check applicable to the mode.
pub fn verify(
    graph: &SimGraph,
    mode: Mode,
    result: &RunResult,
    trace: Option<&[Event]>,
) -> Report {
    let mut checks = Vec::new();

    // quiescence
    checks.push(Check {
        name: "quiesced",
        pass: result.quiesced,
        detail: format!("rounds={}", result.rounds),
    });

    // dispersion byproduct: all agents on distinct nodes
    let nodes: BTreeSet<NodeId> = result.final_nodes.values().copied().collect();
    checks.push(Check {
        name: "dispersion",
        pass: nodes.len() == result.final_nodes.len(),
        detail: format!(
            "{} agents on {} nodes",
            result.final_nodes.len(),
            nodes.len()
        ),
    });

    // oracle components from final positions match the result's components,
    // and exactly one leader sits in each
    let comps = oracle::components(graph, &nodes);
    let comp_match = comps.len() == result.components.len()
        && comps.iter().zip(&result.components).all(|(a, b)| {
            a.iter().copied().collect::<Vec<_>>() == b.nodes
        });
    checks.push(Check {
        name: "component_partition",
        pass: comp_match,
        detail: format!("{} components", comps.len()),
    });

    let leaders_per_comp: Vec<usize> = result
        .components
        .iter()
        .map(|c| {
            result
                .final_nodes
                .iter()
                .filter(|(id, node)| {
                    c.nodes.contains(node)
                        && result.final_status.get(*id).map(String::as_str) == Some("leader")
                })
                .count()
        })
        .collect();
    checks.push(Check {
        name: "leader_uniqueness",
        pass: leaders_per_comp.iter().all(|&x| x == 1),
        detail: format!("{leaders_per_comp:?}"),
    });

    // cross-component pairs at hop distance >= 2
    let mut sep = true;
    'outer: for (i, a) in comps.iter().enumerate() {
        for b in comps.iter().skip(i + 1) {
            for &u in a {
                for &v in b {
                    if graph.hop_distance(u, v) < 2 {
                        sep = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    checks.push(Check {
        name: "two_hop_separation",
        pass: sep,
        detail: String::new(),
    });

    // MST equality per component under the shared total order
    if mode.is_mst() {
        let mut ok = true;
        let mut detail = String::new();
        for comp in &result.components {
            let nodes: BTreeSet<NodeId> = comp.nodes.iter().copied().collect();
            let expect = oracle::kruskal(graph, &nodes);
            let expect: BTreeSet<(NodeId, NodeId, String)> = match expect {
                None => {
                    ok = false;
                    detail = "induced subgraph disconnected".into();
                    continue;
                }
                Some(es) => es
                    .iter()
                    .map(|&e| {
                        let edge = &graph.edges()[e];
                        let (lo, hi) = (edge.a.min(edge.b), edge.a.max(edge.b));
                        (lo, hi, edge.weight.to_string())
                    })
                    .collect(),
            };
            let got: BTreeSet<(NodeId, NodeId, String)> =
                comp.mst_edges.iter().cloned().collect();
            if got != expect {
                ok = false;
                detail = format!(
                    "component {:?}: got {:?}, oracle {:?}",
                    comp.nodes, got, expect
                );
            }
        }
        checks.push(Check {
            name: "mst_oracle_equality",
            pass: ok,
            detail,
        });

        // phase bound: ceil(log2 |C|) + 1
        let mut ok = true;
        let mut detail = String::new();
        for comp in &result.components {
            let sz = comp.nodes.len() as u32;
            let bound = if sz <= 1 {
                1
            } else {
                (32 - (sz - 1).leading_zeros()) + 1
            };
            if comp.phases > bound {
                ok = false;
                detail = format!(
                    "component {:?}: {} phases > bound {}",
                    comp.nodes, comp.phases, bound
                );
            }
        }
        checks.push(Check {
            name: "phase_bound",
            pass: ok,
            detail,
        });
    }

    // status-transition legality from the trace
    if let Some(trace) = trace {
        let legal = |from: Status, to: Status, stab: bool| -> bool {
            matches!(
                (from, to),
                (Status::Candidate, Status::LocalLeader)
                    | (Status::Candidate, Status::NonCandidate)
                    | (Status::LocalLeader, Status::Leader)
                    | (Status::LocalLeader, Status::NonCandidate)
            ) || (stab && from == Status::Leader && to == Status::NonCandidate)
        };
        let stab = mode.is_stabilizing();
        let mut ok = true;
        let mut detail = String::new();
        let mut overtakes = 0u64;
        for e in trace {
            if let EventKind::StatusChange { from, to } = &e.kind {
                if !legal(*from, *to, stab) {
                    ok = false;
                    detail = format!(
                        "agent {} round {}: {} -> {}",
                        e.agent,
                        e.round,
                        from.name(),
                        to.name()
                    );
                }
                if *from == Status::Leader && *to == Status::NonCandidate {
                    overtakes += 1;
                }
            }
        }
        checks.push(Check {
            name: "transition_legality",
            pass: ok,
            detail,
        });
        if !mode.is_stabilizing() {
            checks.push(Check {
                name: "no_overtaking",
                pass: overtakes == 0,
                detail: format!("{overtakes} leader demotions"),
            });
        }
    }

    // a local leader was elected in every final component
    let zeta_ok = result.components.iter().all(|c| c.zeta >= 1);
    checks.push(Check {
        name: "local_leader_per_component",
        pass: zeta_ok,
        detail: String::new(),
    });

    let pass = checks.iter().all(|c| c.pass);
    Report { checks, pass }
}

/// Parses a trace file back into events (round, kind, agent, payload); only
/// the fields needed by verification are reconstructed.
pub fn parse_trace(text: &str) -> Vec<Event> {
    let mut events = Vec::new();
    for line in text.lines() {
        let mut it = line.splitn(4, '\t');
        let (Some(round), Some(kind), Some(agent), payload) =
            (it.next(), it.next(), it.next(), it.next())
        else {
            continue;
        };
        let round: u64 = match round.parse() {
            Ok(r) => r,
            Err(_) => continue,
        };
        let agent: u64 = match agent.parse() {
            Ok(a) => a,
            Err(_) => continue,
        };
        let payload = payload.unwrap_or("");
        let kind = match kind {
            "status_change" => {
                let mut from = None;
                let mut to = None;
                for tok in payload.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("from=") {
                        from = parse_status(v);
                    }
                    if let Some(v) = tok.strip_prefix("to=") {
                        to = parse_status(v);
                    }
                }
                match (from, to) {
                    (Some(f), Some(t)) => EventKind::StatusChange { from: f, to: t },
                    _ => continue,
                }
            }
            "settle" => {
                let node = payload
                    .strip_prefix("node=")
                    .and_then(|v| v.parse().ok());
                match node {
                    Some(node) => EventKind::Settle { node },
                    None => continue,
                }
            }
            _ => continue,
        };
        events.push(Event {
            round,
            agent,
            kind,
        });
    }
    events
}

fn parse_status(s: &str) -> Option<Status> {
    Some(match s {
        "candidate" => Status::Candidate,
        "local_leader" => Status::LocalLeader,
        "leader" => Status::Leader,
        "non_candidate" => Status::NonCandidate,
        _ => return None,
    })
}

/// Convenience: verify counting components independently (used by tests).
pub fn components_of_result(graph: &SimGraph, result: &RunResult) -> Vec<BTreeSet<NodeId>> {
    let nodes: BTreeSet<NodeId> = result.final_nodes.values().copied().collect();
    oracle::components(graph, &nodes)
}

/// ell / zeta / c_max measured from a run, per final component, plus graph
/// parameters; used by the bound-ratio checks.
#[derive(Debug, Clone, Serialize)]
pub struct Measured {
    pub c_max: usize,
    pub ell_max: usize,
    pub zeta_max: usize,
    pub ell_total: usize,
    pub zeta_total: usize,
}

pub fn measure(result: &RunResult) -> Measured {
    Measured {
        c_max: result
            .components
            .iter()
            .map(|c| c.nodes.len())
            .max()
            .unwrap_or(0),
        ell_max: result.components.iter().map(|c| c.ell).max().unwrap_or(0),
        zeta_max: result.components.iter().map(|c| c.zeta).max().unwrap_or(0),
        ell_total: result.components.iter().map(|c| c.ell).sum(),
        zeta_total: result.components.iter().map(|c| c.zeta).sum(),
    }
}

/// The paper's stabilization-round bound expression for each mode, given
/// measured quantities. Used for the bound-ratio acceptance check.
pub fn round_bound(mode: Mode, n: usize, m: usize, k: usize, delta: usize, meas: &Measured) -> f64 {
    let log2 = |x: usize| -> f64 {
        if x <= 1 {
            1.0
        } else {
            (x as f64).log2()
        }
    };
    let c = meas.c_max.max(1) as f64;
    let d = delta.max(1) as f64;
    let lk = log2(k);
    match mode {
        Mode::StabLeKn => (c + lk * lk) * d,
        Mode::ExplLeKn => (k as f64) * d,
        Mode::ExplLeN => m.max(1) as f64,
        Mode::StabMstKn => c * (d + log2(meas.c_max.max(1))) + d * lk * lk,
        Mode::ExplMstKn => (k as f64) * d,
        Mode::ExplMstN => m as f64 + (n as f64) * log2(n),
    }
}
