//! Anonymous, undirected, port-labeled, optionally weighted graphs.
//!
//! Nodes carry no identifiers visible to agents; each node locally numbers
//! its incident edges `1..=degree`. The two port numbers of an edge are
//! independent. Weights are any totally ordered positive scalar; the
//! simulator instantiates exact rationals (see [`crate::Weight`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scalar type usable as an edge weight: totally ordered, with exact
/// arithmetic semantics under comparison. Integers and rationals qualify;
/// raw floats do not (no total order).
pub trait WeightScalar: Num + Ord + Clone + Debug + Display {}

impl<T> WeightScalar for T where T: Num + Ord + Clone + Debug + Display {}

/// Node index, `0..n`. Anonymous from the agents' point of view; the index
/// exists only as simulator bookkeeping.
pub type NodeId = usize;

/// Port number at a node, `1..=degree`.
pub type Port = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node index {0} out of range (n = {1})")]
    BadNode(NodeId, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("graph is not connected")]
    Disconnected,
    #[error("non-positive weight on edge ({0}, {1})")]
    NonPositiveWeight(NodeId, NodeId),
    #[error("port map at node {0} is not a bijection onto 1..={1}")]
    BadPortMap(NodeId, usize),
    #[error("port {0} out of range at node {1} (degree {2})")]
    BadPort(Port, NodeId, usize),
    #[error("graph must have at least one node")]
    Empty,
    #[error("parse error: {0}")]
    Parse(String),
}

/// One undirected edge with its two endpoint ports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge<W> {
    pub a: NodeId,
    pub b: NodeId,
    pub weight: W,
    /// Port at `a` leading to `b`.
    pub port_a: Port,
    /// Port at `b` leading to `a`.
    pub port_b: Port,
}

impl<W> Edge<W> {
    /// The endpoint opposite to `v`.
    pub fn other(&self, v: NodeId) -> NodeId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Total order key for edges: (weight, smaller endpoint pair, port at the
/// smaller endpoint). Shared by the agent algorithms and the oracles so MST
/// comparisons are exact set equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeKey<W: WeightScalar> {
    pub weight: W,
    pub lo: NodeId,
    pub hi: NodeId,
    pub port_at_lo: Port,
}

/// Immutable port-labeled graph. Safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph<W: WeightScalar> {
    node_count: usize,
    edges: Vec<Edge<W>>,
    /// `ports[v][p-1]` = edge index incident to `v` reachable via port `p`.
    ports: Vec<Vec<usize>>,
}

impl<W: WeightScalar> Graph<W> {
    /// Builds and validates a graph.
    ///
    /// Ports default to first-appearance order of each node's incident edges
    /// in `edge_list`; `explicit_ports` (per node, a permutation of incident
    /// edge indices, position = port-1) overrides.
    pub fn build(
        n: usize,
        edge_list: Vec<(NodeId, NodeId, W)>,
        explicit_ports: Option<Vec<Vec<usize>>>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (idx, (u, v, w)) in edge_list.into_iter().enumerate() {
            if u >= n {
                return Err(GraphError::BadNode(u, n));
            }
            if v >= n {
                return Err(GraphError::BadNode(v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if w <= W::zero() {
                return Err(GraphError::NonPositiveWeight(u, v));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            incident[u].push(idx);
            incident[v].push(idx);
            edges.push(Edge {
                a: u,
                b: v,
                weight: w,
                port_a: 0,
                port_b: 0,
            });
        }

        let ports = match explicit_ports {
            None => incident,
            Some(p) => {
                if p.len() != n {
                    return Err(GraphError::Parse(format!(
                        "port map has {} nodes, graph has {}",
                        p.len(),
                        n
                    )));
                }
                for (v, assigned) in p.iter().enumerate() {
                    let mut want: BTreeSet<usize> = incident[v].iter().copied().collect();
                    if assigned.len() != want.len() {
                        return Err(GraphError::BadPortMap(v, want.len()));
                    }
                    for e in assigned {
                        if !want.remove(e) {
                            return Err(GraphError::BadPortMap(v, assigned.len()));
                        }
                    }
                }
                p
            }
        };

        for (v, assigned) in ports.iter().enumerate() {
            for (i, &e) in assigned.iter().enumerate() {
                let port = i + 1;
                if edges[e].a == v {
                    edges[e].port_a = port;
                } else {
                    edges[e].port_b = port;
                }
            }
        }

        let g = Graph {
            node_count: n,
            edges,
            ports,
        };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return false;
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &e in &self.ports[v] {
                let u = self.edges[e].other(v);
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.node_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<W>] {
        &self.edges
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.ports[v].len()
    }

    /// Maximum degree Δ.
    pub fn max_degree(&self) -> usize {
        (0..self.node_count).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Incident edges of `v` ordered by increasing port: (port, neighbor, weight).
    pub fn neighbors(&self, v: NodeId) -> Result<Vec<(Port, NodeId, &W)>, GraphError> {
        if v >= self.node_count {
            return Err(GraphError::BadNode(v, self.node_count));
        }
        Ok(self.ports[v]
            .iter()
            .enumerate()
            .map(|(i, &e)| (i + 1, self.edges[e].other(v), &self.edges[e].weight))
            .collect())
    }

    /// Follows `port` out of `v`: returns the destination node and the port
    /// there that leads back to `v`.
    pub fn traverse(&self, v: NodeId, port: Port) -> Result<(NodeId, Port), GraphError> {
        if v >= self.node_count {
            return Err(GraphError::BadNode(v, self.node_count));
        }
        let deg = self.degree(v);
        if port == 0 || port > deg {
            return Err(GraphError::BadPort(port, v, deg));
        }
        let e = &self.edges[self.ports[v][port - 1]];
        if e.a == v {
            Ok((e.b, e.port_b))
        } else {
            Ok((e.a, e.port_a))
        }
    }

    /// Edge index behind `port` at `v`. Panics on bad input (internal use).
    pub fn edge_at(&self, v: NodeId, port: Port) -> usize {
        self.ports[v][port - 1]
    }

    /// Total order key of the edge behind `port` at `v`.
    pub fn edge_key(&self, v: NodeId, port: Port) -> EdgeKey<W> {
        self.key_of(self.edge_at(v, port))
    }

    pub fn key_of(&self, edge_idx: usize) -> EdgeKey<W> {
        let e = &self.edges[edge_idx];
        let (lo, hi, port_at_lo) = if e.a < e.b {
            (e.a, e.b, e.port_a)
        } else {
            (e.b, e.a, e.port_b)
        };
        EdgeKey {
            weight: e.weight.clone(),
            lo,
            hi,
            port_at_lo,
        }
    }

    /// Hop distance between two nodes (BFS); `usize::MAX` if unreachable.
    pub fn hop_distance(&self, a: NodeId, b: NodeId) -> usize {
        if a == b {
            return 0;
        }
        let mut dist = vec![usize::MAX; self.node_count];
        dist[a] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(a);
        while let Some(v) = queue.pop_front() {
            for &e in &self.ports[v] {
                let u = self.edges[e].other(v);
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    if u == b {
                        return dist[u];
                    }
                    queue.push_back(u);
                }
            }
        }
        dist[b]
    }

    /// Serializes to the text format: `n m`, then `u v w` lines, then a
    /// `ports` section pinning the port assignment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.node_count, self.edges.len()));
        for e in &self.edges {
            out.push_str(&format!("{} {} {}\n", e.a, e.b, e.weight));
        }
        out.push_str("ports\n");
        for v in 0..self.node_count {
            let list: Vec<String> = self.ports[v].iter().map(|e| e.to_string()).collect();
            out.push_str(&format!("{} {}\n", v, list.join(" ")));
        }
        out
    }
}

impl<W: WeightScalar + FromStr> Graph<W>
where
    <W as FromStr>::Err: Display,
{
    /// Parses the graph file format. First line `n m`, then `m` lines
    /// `u v w` (`w` optional, default 1), then optionally a line `ports`
    /// followed by `n` lines `v e1 e2 ...` assigning edge indices to ports
    /// in increasing port order.
    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GraphError::Parse("empty graph file".into()))?;
        let mut it = header.split_whitespace();
        let n: usize = parse_tok(it.next(), "n")?;
        let m: usize = parse_tok(it.next(), "m")?;
        let mut edge_list = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| GraphError::Parse("missing edge line".into()))?;
            let mut toks = line.split_whitespace();
            let u: usize = parse_tok(toks.next(), "u")?;
            let v: usize = parse_tok(toks.next(), "v")?;
            let w = match toks.next() {
                None => W::one(),
                Some(t) => t
                    .parse::<W>()
                    .map_err(|e| GraphError::Parse(format!("bad weight {t:?}: {e}")))?,
            };
            edge_list.push((u, v, w));
        }
        let mut explicit_ports = None;
        if let Some(tag) = lines.next() {
            if tag.trim() != "ports" {
                return Err(GraphError::Parse(format!("unexpected line {tag:?}")));
            }
            let mut ports = vec![Vec::new(); n];
            for _ in 0..n {
                let line = lines
                    .next()
                    .ok_or_else(|| GraphError::Parse("missing port line".into()))?;
                let mut toks = line.split_whitespace();
                let v: usize = parse_tok(toks.next(), "node")?;
                if v >= n {
                    return Err(GraphError::BadNode(v, n));
                }
                let assigned: Result<Vec<usize>, _> =
                    toks.map(|t| t.parse::<usize>()).collect();
                ports[v] = assigned
                    .map_err(|e| GraphError::Parse(format!("bad port line: {e}")))?;
            }
            explicit_ports = Some(ports);
        }
        Graph::build(n, edge_list, explicit_ports)
    }
}

fn parse_tok<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T, GraphError>
where
    T::Err: Display,
{
    tok.ok_or_else(|| GraphError::Parse(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|e| GraphError::Parse(format!("bad {what}: {e}")))
}

/// Agent id. Positive, unique across the placement.
pub type AgentId = u64;

/// Initial positions: node -> agent ids starting there.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub by_node: BTreeMap<NodeId, Vec<AgentId>>,
}

impl Placement {
    pub fn new(mut by_node: BTreeMap<NodeId, Vec<AgentId>>) -> Self {
        for ids in by_node.values_mut() {
            ids.sort_unstable();
        }
        by_node.retain(|_, ids| !ids.is_empty());
        Placement { by_node }
    }

    pub fn agent_count(&self) -> usize {
        self.by_node.values().map(|v| v.len()).sum()
    }

    pub fn validate(&self, node_count: usize) -> Result<(), GraphError> {
        let mut ids = BTreeSet::new();
        for (&node, list) in &self.by_node {
            if node >= node_count {
                return Err(GraphError::BadNode(node, node_count));
            }
            for &id in list {
                if id == 0 {
                    return Err(GraphError::Parse("agent id 0 not allowed".into()));
                }
                if !ids.insert(id) {
                    return Err(GraphError::Parse(format!("duplicate agent id {id}")));
                }
            }
        }
        if ids.len() > node_count {
            return Err(GraphError::Parse(format!(
                "{} agents exceed {} nodes",
                ids.len(),
                node_count
            )));
        }
        if ids.is_empty() {
            return Err(GraphError::Parse("placement has no agents".into()));
        }
        Ok(())
    }

    /// Number of nodes initially holding two or more agents.
    pub fn non_singleton_nodes(&self) -> usize {
        self.by_node.values().filter(|v| v.len() >= 2).count()
    }

    /// Text format: one line per occupied node, `node id [id ...]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (node, ids) in &self.by_node {
            let list: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("{} {}\n", node, list.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut by_node = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let node: usize = parse_tok(toks.next(), "node")?;
            let ids: Result<Vec<AgentId>, _> = toks.map(|t| t.parse::<AgentId>()).collect();
            let ids = ids.map_err(|e| GraphError::Parse(format!("bad agent id: {e}")))?;
            if ids.is_empty() {
                return Err(GraphError::Parse(format!(
                    "placement line for node {node} lists no agents"
                )));
            }
            if by_node.insert(node, ids).is_some() {
                return Err(GraphError::Parse(format!("node {node} listed twice")));
            }
        }
        Ok(Placement::new(by_node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Weight;

    fn w(x: i64) -> Weight {
        Weight::from_integer(x)
    }

    #[test]
    fn single_edge_forces_both_ports() {
        let g = Graph::build(2, vec![(0, 1, w(1))], None).unwrap();
        assert_eq!(g.traverse(0, 1).unwrap(), (1, 1));
        assert_eq!(g.traverse(1, 1).unwrap(), (0, 1));
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 1);
    }

    #[test]
    fn triangle_first_appearance_ports() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))], None).unwrap();
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.degree(1), 2);
        assert_eq!(g.degree(2), 2);
        // node 1: port 1 -> edge (0,1), port 2 -> edge (1,2)
        let nb = g.neighbors(1).unwrap();
        assert_eq!(nb.len(), 2);
        assert_eq!((nb[0].0, nb[0].1), (1, 0));
        assert_eq!(*nb[0].2, w(1));
        assert_eq!((nb[1].0, nb[1].1), (2, 2));
        assert_eq!(*nb[1].2, w(2));
    }

    #[test]
    fn duplicate_edge_rejected() {
        let err = Graph::build(3, vec![(0, 1, w(1)), (0, 1, w(2)), (1, 2, w(3))], None)
            .unwrap_err();
        assert_eq!(err, GraphError::DuplicateEdge(0, 1));
    }

    #[test]
    fn neighbors_ordered_by_port() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))], None).unwrap();
        let nb = g.neighbors(1).unwrap();
        assert_eq!(nb.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2]);
        // path 0-1, v=0 -> [(1, 1, 1)]
        let p = Graph::build(2, vec![(0, 1, w(1))], None).unwrap();
        let nb = p.neighbors(0).unwrap();
        assert_eq!(nb.len(), 1);
        assert_eq!((nb[0].0, nb[0].1), (1, 1));
        assert!(p.neighbors(9).is_err());
    }

    #[test]
    fn traverse_examples() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))], None).unwrap();
        // port to node 1 from node 0 is port 1 (first appearance)
        assert_eq!(g.traverse(0, 1).unwrap(), (1, 1));
        assert!(g.traverse(0, 3).is_err());
    }

    #[test]
    fn traverse_round_trip_consistency() {
        let g = Graph::build(
            5,
            vec![
                (0, 1, w(1)),
                (1, 2, w(2)),
                (2, 3, w(3)),
                (3, 4, w(4)),
                (4, 0, w(5)),
                (1, 3, w(6)),
            ],
            None,
        )
        .unwrap();
        for v in 0..5 {
            for p in 1..=g.degree(v) {
                let (u, q) = g.traverse(v, p).unwrap();
                assert_eq!(g.traverse(u, q).unwrap(), (v, p));
            }
        }
        let degsum: usize = (0..5).map(|v| g.degree(v)).sum();
        assert_eq!(degsum, 2 * g.edge_count());
    }

    #[test]
    fn disconnected_rejected() {
        let err = Graph::build(4, vec![(0, 1, w(1)), (2, 3, w(1))], None).unwrap_err();
        assert_eq!(err, GraphError::Disconnected);
    }

    #[test]
    fn self_loop_rejected() {
        let err = Graph::build(2, vec![(0, 0, w(1)), (0, 1, w(1))], None).unwrap_err();
        assert_eq!(err, GraphError::SelfLoop(0));
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let err = Graph::build(2, vec![(0, 1, w(0))], None).unwrap_err();
        assert_eq!(err, GraphError::NonPositiveWeight(0, 1));
    }

    #[test]
    fn build_deterministic() {
        let mk = || {
            Graph::build(
                4,
                vec![(0, 1, w(1)), (1, 2, w(2)), (2, 3, w(3)), (3, 0, w(4))],
                None,
            )
            .unwrap()
        };
        assert_eq!(mk(), mk());
        assert_eq!(mk().to_text(), mk().to_text());
    }

    #[test]
    fn text_round_trip() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))], None).unwrap();
        let text = g.to_text();
        let g2: Graph<Weight> = Graph::from_text(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn text_default_weight_is_one() {
        let g: Graph<Weight> = Graph::from_text("2 1\n0 1\n").unwrap();
        assert_eq!(g.edges()[0].weight, w(1));
    }

    #[test]
    fn explicit_port_map_override() {
        // reverse port order at node 0 of the triangle
        let g = Graph::build(
            3,
            vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))],
            Some(vec![vec![2, 0], vec![0, 1], vec![1, 2]]),
        )
        .unwrap();
        assert_eq!(g.traverse(0, 1).unwrap().0, 2);
        assert_eq!(g.traverse(0, 2).unwrap().0, 1);
    }

    #[test]
    fn bad_explicit_port_map_rejected() {
        let err = Graph::build(
            3,
            vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))],
            Some(vec![vec![0, 0], vec![0, 1], vec![1, 2]]),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::BadPortMap(0, _)));
    }

    #[test]
    fn placement_round_trip_and_validation() {
        let p = Placement::from_text("0 3 1 9\n2 5\n").unwrap();
        assert_eq!(p.agent_count(), 4);
        assert_eq!(p.non_singleton_nodes(), 1);
        assert_eq!(p.by_node[&0], vec![1, 3, 9]);
        p.validate(4).unwrap();
        assert!(p.validate(3).is_err()); // 4 agents exceed 3 nodes
        let p2 = Placement::from_text(&p.to_text()).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn placement_rejects_duplicates_and_overflow() {
        let p = Placement::from_text("0 1\n1 1\n").unwrap();
        assert!(p.validate(4).is_err());
        let p = Placement::from_text("0 1 2 3\n").unwrap();
        assert!(p.validate(2).is_err());
    }

    #[test]
    fn edge_key_total_order() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(1)), (0, 2, w(1))], None).unwrap();
        let mut keys: Vec<EdgeKey<Weight>> = (0..3).map(|e| g.key_of(e)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 3, "equal weights must still be totally ordered");
    }
}
