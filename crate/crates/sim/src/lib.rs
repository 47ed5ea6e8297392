//! Deterministic round-based simulator for mobile computational agents on
//! anonymous, port-labeled graphs.
//!
//! Agents relocate between nodes, communicate only when co-located, and run
//! leader-election and minimum-spanning-tree behaviors in synchronous
//! rounds. The crate provides the graph model, the round engine, the
//! election and MST behaviors, brute-force oracles for verification, seeded
//! instance generators, and trace/metrics emission.
//!
//! Graph and oracle code is generic over the weight scalar via
//! [`graph::WeightScalar`]; the simulator itself fixes the exact-rational
//! [`Weight`] alias below so edge comparisons are never ambiguous.

pub mod election;
pub mod engine;
pub mod gen;
pub mod graph;
pub mod mst;
pub mod oracle;
pub mod verify;

/// Exact rational edge weight used by the simulator.
pub type Weight = num_rational::Ratio<i64>;

/// The concrete graph type used by the engine.
pub type SimGraph = graph::Graph<Weight>;

pub use engine::{Mode, Params, RunResult, SimState};
pub use graph::{AgentId, Graph, NodeId, Placement, Port};
