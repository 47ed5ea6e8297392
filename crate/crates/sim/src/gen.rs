//! Seeded, deterministic instance generators: graphs (gnp, tree, cycle,
//! path, complete) with unit or unique random weights, and placements
//! (dispersed, rooted, general).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{AgentId, NodeId, Placement};
use crate::{SimGraph, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphModel {
    Gnp,
    Tree,
    Cycle,
    Path,
    Complete,
}

impl GraphModel {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gnp" => GraphModel::Gnp,
            "tree" => GraphModel::Tree,
            "cycle" => GraphModel::Cycle,
            "path" => GraphModel::Path,
            "complete" => GraphModel::Complete,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Unit,
    UniqueRandom,
}

impl WeightMode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "unit" => WeightMode::Unit,
            "unique_random" => WeightMode::UniqueRandom,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementShape {
    /// k agents on k distinct nodes.
    Dispersed,
    /// all k agents on one node.
    Rooted,
    /// seeded mix of group sizes.
    General,
}

impl PlacementShape {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dispersed" => PlacementShape::Dispersed,
            "rooted" => PlacementShape::Rooted,
            "general" => PlacementShape::General,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenSpec {
    pub model: GraphModel,
    pub n: usize,
    pub p: Option<f64>,
    pub weight_mode: WeightMode,
    pub k: usize,
    pub placement: PlacementShape,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("unsatisfiable spec: {0}")]
    Unsatisfiable(String),
    #[error("bad generator spec: {0}")]
    Parse(String),
}

impl GenSpec {
    /// Parses a compact spec: comma-separated key=value pairs, e.g.
    /// `model=gnp,n=32,p=0.2,k=8,placement=general,weights=unit,seed=7`.
    pub fn parse(s: &str) -> Result<GenSpec, GenError> {
        let mut model = None;
        let mut n = None;
        let mut p = None;
        let mut k = None;
        let mut placement = PlacementShape::Dispersed;
        let mut weight_mode = WeightMode::Unit;
        let mut seed = 0u64;
        for item in s.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| GenError::Parse(format!("expected key=value, got {item:?}")))?;
            match key {
                "model" => {
                    model = Some(
                        GraphModel::parse(val)
                            .ok_or_else(|| GenError::Parse(format!("unknown model {val:?}")))?,
                    )
                }
                "n" => n = Some(val.parse().map_err(|e| GenError::Parse(format!("n: {e}")))?),
                "p" => p = Some(val.parse().map_err(|e| GenError::Parse(format!("p: {e}")))?),
                "k" => k = Some(val.parse().map_err(|e| GenError::Parse(format!("k: {e}")))?),
                "placement" => {
                    placement = PlacementShape::parse(val)
                        .ok_or_else(|| GenError::Parse(format!("unknown placement {val:?}")))?
                }
                "weights" => {
                    weight_mode = WeightMode::parse(val)
                        .ok_or_else(|| GenError::Parse(format!("unknown weights {val:?}")))?
                }
                "seed" => {
                    seed = val
                        .parse()
                        .map_err(|e| GenError::Parse(format!("seed: {e}")))?
                }
                _ => return Err(GenError::Parse(format!("unknown key {key:?}"))),
            }
        }
        let model = model.ok_or_else(|| GenError::Parse("missing model".into()))?;
        let n = n.ok_or_else(|| GenError::Parse("missing n".into()))?;
        let k = k.unwrap_or(n);
        Ok(GenSpec {
            model,
            n,
            p,
            weight_mode,
            k,
            placement,
            seed,
        })
    }
}

/// Generates the graph and placement for a spec. Deterministic in the seed;
/// gnp retries until connected and reports the attempt count.
pub fn generate(spec: &GenSpec) -> Result<(SimGraph, Placement, u32), GenError> {
    if spec.n == 0 {
        return Err(GenError::Unsatisfiable("n must be positive".into()));
    }
    if spec.k == 0 || spec.k > spec.n {
        return Err(GenError::Unsatisfiable(format!(
            "k = {} must be in 1..={}",
            spec.k, spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (edges, attempts) = gen_edges(spec, &mut rng)?;
    let weighted = assign_weights(edges, spec.weight_mode, &mut rng);
    let graph = SimGraph::build(spec.n, weighted, None)
        .map_err(|e| GenError::Unsatisfiable(format!("{e}")))?;
    let placement = gen_placement(spec, &mut rng);
    Ok((graph, placement, attempts))
}

fn gen_edges(
    spec: &GenSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<(NodeId, NodeId)>, u32), GenError> {
    let n = spec.n;
    match spec.model {
        GraphModel::Path => Ok(((0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(), 1)),
        GraphModel::Cycle => {
            if n < 3 {
                return Err(GenError::Unsatisfiable("cycle needs n >= 3".into()));
            }
            let mut e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            e.push((n - 1, 0));
            Ok((e, 1))
        }
        GraphModel::Complete => {
            let mut e = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    e.push((u, v));
                }
            }
            Ok((e, 1))
        }
        GraphModel::Tree => {
            // random recursive tree: parent drawn uniformly among earlier nodes
            let mut e = Vec::new();
            for v in 1..n {
                let parent = rng.gen_range(0..v);
                e.push((parent, v));
            }
            Ok((e, 1))
        }
        GraphModel::Gnp => {
            let p = spec
                .p
                .ok_or_else(|| GenError::Unsatisfiable("gnp requires p".into()))?;
            if n > 1 && p <= 0.0 {
                return Err(GenError::Unsatisfiable("p = 0 cannot connect n > 1".into()));
            }
            for attempt in 1..=1000u32 {
                let mut e = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.gen_bool(p.clamp(0.0, 1.0)) {
                            e.push((u, v));
                        }
                    }
                }
                if n == 1 || connected(n, &e) {
                    return Ok((e, attempt));
                }
            }
            Err(GenError::Unsatisfiable(format!(
                "gnp(n={n}, p={p}) failed to connect in 1000 attempts"
            )))
        }
    }
}

fn connected(n: usize, edges: &[(NodeId, NodeId)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

fn assign_weights(
    edges: Vec<(NodeId, NodeId)>,
    mode: WeightMode,
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId, Weight)> {
    match mode {
        WeightMode::Unit => edges
            .into_iter()
            .map(|(u, v)| (u, v, Weight::from_integer(1)))
            .collect(),
        WeightMode::UniqueRandom => {
            // distinct positive integers, shuffled
            let m = edges.len();
            let mut pool: Vec<i64> = (1..=(3 * m.max(1) as i64)).collect();
            pool.shuffle(rng);
            edges
                .into_iter()
                .zip(pool)
                .map(|((u, v), w)| (u, v, Weight::from_integer(w)))
                .collect()
        }
    }
}

fn gen_placement(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Placement {
    let mut nodes: Vec<NodeId> = (0..spec.n).collect();
    nodes.shuffle(rng);
    let ids: Vec<AgentId> = (1..=spec.k as AgentId).collect();
    let mut by_node: BTreeMap<NodeId, Vec<AgentId>> = BTreeMap::new();
    match spec.placement {
        PlacementShape::Dispersed => {
            for (i, &id) in ids.iter().enumerate() {
                by_node.entry(nodes[i]).or_default().push(id);
            }
        }
        PlacementShape::Rooted => {
            by_node.insert(nodes[0], ids);
        }
        PlacementShape::General => {
            // draw group sizes until k agents are placed
            let mut remaining = spec.k;
            let mut next_id = 1 as AgentId;
            let mut slot = 0usize;
            while remaining > 0 {
                let size = if remaining == 1 {
                    1
                } else {
                    1 + rng.gen_range(0..remaining.min(4))
                };
                let node = nodes[slot];
                slot += 1;
                let group: Vec<AgentId> =
                    (next_id..next_id + size as AgentId).collect();
                next_id += size as AgentId;
                remaining -= size;
                by_node.insert(node, group);
            }
        }
    }
    Placement::new(by_node)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_fixture() {
        let spec = GenSpec::parse("model=path,n=3,k=3,placement=dispersed,seed=1").unwrap();
        let (g, p, _) = generate(&spec).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(p.agent_count(), 3);
        assert_eq!(p.non_singleton_nodes(), 0);
    }

    #[test]
    fn gnp_deterministic() {
        let spec = GenSpec::parse("model=gnp,n=32,p=0.2,k=8,seed=7").unwrap();
        let (g1, p1, a1) = generate(&spec).unwrap();
        let (g2, p2, a2) = generate(&spec).unwrap();
        assert_eq!(g1.to_text(), g2.to_text());
        assert_eq!(p1.to_text(), p2.to_text());
        assert_eq!(a1, a2);
    }

    #[test]
    fn gnp_p_zero_rejected() {
        let spec = GenSpec::parse("model=gnp,n=2,p=0,k=1,seed=1").unwrap();
        assert!(matches!(generate(&spec), Err(GenError::Unsatisfiable(_))));
    }

    #[test]
    fn unique_weights_distinct() {
        let spec =
            GenSpec::parse("model=complete,n=6,k=3,weights=unique_random,seed=3").unwrap();
        let (g, _, _) = generate(&spec).unwrap();
        let mut ws: Vec<_> = g.edges().iter().map(|e| e.weight.clone()).collect();
        ws.sort();
        ws.dedup();
        assert_eq!(ws.len(), g.edge_count());
    }

    #[test]
    fn general_placement_total() {
        let spec = GenSpec::parse("model=gnp,n=16,p=0.4,k=9,placement=general,seed=5").unwrap();
        let (_, p, _) = generate(&spec).unwrap();
        assert_eq!(p.agent_count(), 9);
    }
}
