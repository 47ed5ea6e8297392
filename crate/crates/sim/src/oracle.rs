//! Independent brute-force references used to validate simulation outcomes:
//! centralized MST over the shared edge total order, the 2-hop component
//! partition, exhaustive spanning-tree enumeration, and round-by-round
//! enumeration of padded meeting schedules.

use std::collections::BTreeSet;

use crate::election::pad_id;
use crate::graph::{Graph, NodeId, WeightScalar};

/// Union-find with path halving; plain and small, test-grade.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Greedy MST of the subgraph induced on `nodes`, using the module-wide edge
/// total order. Returns sorted edge indices; `None` if the induced subgraph
/// is disconnected.
pub fn kruskal<W: WeightScalar>(g: &Graph<W>, nodes: &BTreeSet<NodeId>) -> Option<Vec<usize>> {
    if nodes.is_empty() {
        return Some(Vec::new());
    }
    let mut candidates: Vec<usize> = (0..g.edge_count())
        .filter(|&e| nodes.contains(&g.edges()[e].a) && nodes.contains(&g.edges()[e].b))
        .collect();
    candidates.sort_by_key(|&e| g.key_of(e));
    let mut uf = UnionFind::new(g.node_count());
    let mut chosen = Vec::new();
    for e in candidates {
        let edge = &g.edges()[e];
        if uf.union(edge.a, edge.b) {
            chosen.push(e);
        }
    }
    if chosen.len() + 1 != nodes.len() {
        return None;
    }
    chosen.sort_unstable();
    Some(chosen)
}

/// Enumerates all spanning trees of the induced subgraph (edge subsets of
/// size |nodes|-1 that connect), returning the weight-minimal one under
/// (total weight, edge index list) order. Exponential; intended for <= 8
/// nodes.
pub fn brute_force_mst<W: WeightScalar>(
    g: &Graph<W>,
    nodes: &BTreeSet<NodeId>,
) -> Option<Vec<usize>> {
    let node_list: Vec<NodeId> = nodes.iter().copied().collect();
    if node_list.len() <= 1 {
        return Some(Vec::new());
    }
    let candidates: Vec<usize> = (0..g.edge_count())
        .filter(|&e| nodes.contains(&g.edges()[e].a) && nodes.contains(&g.edges()[e].b))
        .collect();
    let need = node_list.len() - 1;
    let mut best: Option<(W, Vec<usize>)> = None;
    let mut subset = Vec::new();
    enumerate_subsets(&candidates, need, 0, &mut subset, &mut |chosen| {
        let mut uf = UnionFind::new(g.node_count());
        let mut joined = 0;
        for &e in chosen {
            if uf.union(g.edges()[e].a, g.edges()[e].b) {
                joined += 1;
            }
        }
        if joined == need {
            let total = chosen
                .iter()
                .fold(W::zero(), |acc, &e| acc + g.edges()[e].weight.clone());
            let key = (total, chosen.to_vec());
            match &best {
                Some(b) if *b <= key => {}
                _ => best = Some(key),
            }
        }
    });
    best.map(|(_, edges)| edges)
}

fn enumerate_subsets(
    items: &[usize],
    need: usize,
    start: usize,
    current: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if current.len() == need {
        f(current);
        return;
    }
    let remaining = need - current.len();
    for i in start..items.len() {
        if items.len() - i < remaining {
            break;
        }
        current.push(items[i]);
        enumerate_subsets(items, need, i + 1, current, f);
        current.pop();
    }
}

/// Maximal sets of occupied nodes closed under occupied adjacency. Sets are
/// returned sorted by smallest member; nodes in different sets are >= 2 hops
/// apart by construction.
pub fn components<W: WeightScalar>(
    g: &Graph<W>,
    occupied: &BTreeSet<NodeId>,
) -> Vec<BTreeSet<NodeId>> {
    let mut unseen: BTreeSet<NodeId> = occupied.clone();
    let mut out = Vec::new();
    while let Some(&start) = unseen.iter().next() {
        unseen.remove(&start);
        let mut comp = BTreeSet::new();
        comp.insert(start);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for (_, u, _) in g.neighbors(v).unwrap() {
                if unseen.remove(&u) {
                    comp.insert(u);
                    stack.push(u);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Outcome of enumerating two padded schedules against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    /// First round (0-based from schedule start) at which one agent stands
    /// at the other's node while that other agent is home.
    pub meeting_round: usize,
}

/// Enumerates the two padded-ID schedules round by round on a two-node
/// abstraction: `a` and `b` sit on adjacent nodes with degrees `deg_a`,
/// `deg_b`. On a 1-bit window an agent tours its neighbors in port order
/// (away on the odd offsets of the window, including, at some offset, the
/// partner's node); on a 0-bit window it stays home. Both agents start
/// their schedules at round 0. A meeting is a round where one agent is at
/// the partner's node and the partner is home; the visit offset is
/// existential over the partner's port position. After its schedule ends an
/// agent stays home.
pub fn schedule_overlap(
    id_a: u64,
    id_b: u64,
    deg_a: usize,
    deg_b: usize,
) -> Option<Overlap> {
    assert_ne!(id_a, id_b, "ids must differ");
    assert!(deg_a >= 1 && deg_b >= 1);
    let sched_a = pad_id(id_a).expect("nonzero id");
    let sched_b = pad_id(id_b).expect("nonzero id");
    let len_a = sched_a.padded_bits.len() * 2 * deg_a;
    let len_b = sched_b.padded_bits.len() * 2 * deg_b;
    let horizon = len_a.max(len_b);

    // touring(agent, t): agent is in a 1-bit window at round t (away on odd
    // offsets within the window). home(agent, t): not away.
    let touring = |bits: &[bool], deg: usize, t: usize| -> bool {
        let w = t / (2 * deg);
        if w >= bits.len() {
            return false;
        }
        bits[w]
    };
    for t in 0..horizon {
        // a visits b's node at some odd offset of a touring window; the
        // exact offset depends on the port of b among a's neighbors, so a
        // meeting at round t requires: t odd within a's active tour window
        // (some port position puts the visit at t) and b home at t.
        let a_tours = touring(&sched_a.padded_bits, deg_a, t);
        let b_tours = touring(&sched_b.padded_bits, deg_b, t);
        let odd_in_a = a_tours && (t % 2 == 1);
        let odd_in_b = b_tours && (t % 2 == 1);
        let b_home = !odd_in_b;
        let a_home = !odd_in_a;
        if (odd_in_a && b_home) || (odd_in_b && a_home) {
            return Some(Overlap { meeting_round: t });
        }
    }
    None
}

/// The bound claimed for the padded meeting: `2 * max(deg) * (b + 2b^2)`
/// rounds, where `b` is the longer id's bit length.
pub fn overlap_bound(id_a: u64, id_b: u64, deg_a: usize, deg_b: usize) -> usize {
    let b = bit_len(id_a).max(bit_len(id_b));
    2 * deg_a.max(deg_b) * (b + 2 * b * b)
}

pub fn bit_len(id: u64) -> usize {
    (64 - id.leading_zeros()) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::Weight;

    fn w(x: i64) -> Weight {
        Weight::from_integer(x)
    }

    fn all_nodes(n: usize) -> BTreeSet<NodeId> {
        (0..n).collect()
    }

    #[test]
    fn kruskal_single_node() {
        let g = Graph::build(2, vec![(0, 1, w(1))], None).unwrap();
        let one: BTreeSet<NodeId> = [0].into_iter().collect();
        assert_eq!(kruskal(&g, &one).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn kruskal_triangle() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(2)), (0, 2, w(3))], None).unwrap();
        assert_eq!(kruskal(&g, &all_nodes(3)).unwrap(), vec![0, 1]);
    }

    #[test]
    fn kruskal_equal_weights_uses_total_order() {
        let g = Graph::build(3, vec![(0, 1, w(5)), (1, 2, w(5)), (0, 2, w(5))], None).unwrap();
        let mst = kruskal(&g, &all_nodes(3)).unwrap();
        // total order breaks ties by endpoints: (0,1) then (0,2)
        assert_eq!(mst, vec![0, 2]);
    }

    #[test]
    fn kruskal_disconnected_induced() {
        let g = Graph::build(3, vec![(0, 1, w(1)), (1, 2, w(2))], None).unwrap();
        let split: BTreeSet<NodeId> = [0, 2].into_iter().collect();
        assert_eq!(kruskal(&g, &split), None);
    }

    #[test]
    fn components_basics() {
        let g = Graph::build(
            5,
            vec![(0, 1, w(1)), (1, 2, w(1)), (2, 3, w(1)), (3, 4, w(1))],
            None,
        )
        .unwrap();
        let occ: BTreeSet<NodeId> = [0, 1, 3, 4].into_iter().collect();
        let comps = components(&g, &occ);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], [0, 1].into_iter().collect());
        assert_eq!(comps[1], [3, 4].into_iter().collect());
        // cross-component distance >= 2
        for a in &comps[0] {
            for b in &comps[1] {
                assert!(g.hop_distance(*a, *b) >= 2);
            }
        }
        // all nodes occupied -> one component
        let comps = components(&g, &all_nodes(5));
        assert_eq!(comps.len(), 1);
        // two occupied at distance 2 -> 2 components
        let occ: BTreeSet<NodeId> = [0, 2].into_iter().collect();
        assert_eq!(components(&g, &occ).len(), 2);
    }

    #[test]
    fn components_idempotent_order_independent() {
        let g = Graph::build(
            6,
            vec![
                (0, 1, w(1)),
                (1, 2, w(1)),
                (2, 3, w(1)),
                (3, 4, w(1)),
                (4, 5, w(1)),
                (5, 0, w(1)),
            ],
            None,
        )
        .unwrap();
        let occ: BTreeSet<NodeId> = [0, 1, 3].into_iter().collect();
        let c1 = components(&g, &occ);
        let c2 = components(&g, &occ);
        assert_eq!(c1, c2);
        let flat: BTreeSet<NodeId> = c1.iter().flatten().copied().collect();
        assert_eq!(flat, occ);
    }

    #[test]
    fn overlap_examples() {
        // "1" vs "10"
        let o = schedule_overlap(1, 2, 1, 1).expect("must meet");
        assert!(o.meeting_round <= overlap_bound(1, 2, 1, 1));
        // "1" vs "11": overlap within the longer schedule's trailing 10s
        let o = schedule_overlap(1, 3, 1, 1).expect("must meet");
        assert!(o.meeting_round <= overlap_bound(1, 3, 1, 1));
    }

    #[test]
    fn overlap_equal_length_ids_meet_at_differing_bit() {
        // ids 5 ("101") and 6 ("110") differ from the MSB side at window 1
        let o = schedule_overlap(5, 6, 2, 2).expect("must meet");
        // window 1 (0-based) spans rounds 4..8 at degree 2
        assert!(o.meeting_round >= 4 && o.meeting_round < 8);
    }

    #[test]
    fn brute_force_matches_kruskal_small() {
        let g = Graph::build(
            4,
            vec![
                (0, 1, w(4)),
                (1, 2, w(1)),
                (2, 3, w(3)),
                (3, 0, w(2)),
                (0, 2, w(5)),
            ],
            None,
        )
        .unwrap();
        assert_eq!(
            kruskal(&g, &all_nodes(4)).unwrap(),
            brute_force_mst(&g, &all_nodes(4)).unwrap()
        );
    }
}
