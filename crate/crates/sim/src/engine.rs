//! Synchronous round engine: observe -> compute -> write -> move.
//!
//! Each round every agent observes its node-local view (incident ports,
//! weights, co-located agents' memories), computes a transition as a pure
//! function, then writes to co-located agents (applied in increasing
//! writer-id order) and moves (all moves applied simultaneously). Agents
//! are never on an edge at a round boundary.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::election;
use crate::graph::{AgentId, EdgeKey, NodeId, Placement, Port};
use crate::oracle;
use crate::{SimGraph, Weight};

/// Algorithm selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Stabilizing leader election, no parameter knowledge (k < n or k = n).
    StabLeKn,
    /// Explicit leader election with known k and max degree.
    ExplLeKn,
    /// Explicit leader election for k = n, no parameter knowledge.
    ExplLeN,
    /// Stabilizing election followed by MST construction.
    StabMstKn,
    /// Explicit election followed by MST construction.
    ExplMstKn,
    /// k = n election followed by MST construction.
    ExplMstN,
}

impl Mode {
    pub fn is_mst(self) -> bool {
        matches!(self, Mode::StabMstKn | Mode::ExplMstKn | Mode::ExplMstN)
    }
    /// Explicit k<n variant with staged deadlines.
    pub fn is_explicit_kn(self) -> bool {
        matches!(self, Mode::ExplLeKn | Mode::ExplMstKn)
    }
    /// k = n variant.
    pub fn is_k_equals_n(self) -> bool {
        matches!(self, Mode::ExplLeN | Mode::ExplMstN)
    }
    pub fn is_stabilizing(self) -> bool {
        matches!(self, Mode::StabLeKn | Mode::StabMstKn)
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "stab_le_kn" => Mode::StabLeKn,
            "expl_le_kn" => Mode::ExplLeKn,
            "expl_le_n" => Mode::ExplLeN,
            "stab_mst_kn" => Mode::StabMstKn,
            "expl_mst_kn" => Mode::ExplMstKn,
            "expl_mst_n" => Mode::ExplMstN,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::StabLeKn => "stab_le_kn",
            Mode::ExplLeKn => "expl_le_kn",
            Mode::ExplLeN => "expl_le_n",
            Mode::StabMstKn => "stab_mst_kn",
            Mode::ExplMstKn => "expl_mst_kn",
            Mode::ExplMstN => "expl_mst_n",
        }
    }

    pub const ALL: [Mode; 6] = [
        Mode::StabLeKn,
        Mode::ExplLeKn,
        Mode::ExplLeN,
        Mode::StabMstKn,
        Mode::ExplMstKn,
        Mode::ExplMstN,
    ];
}

/// A-priori knowledge handed to the agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Params {
    /// Number of agents (explicit k<n modes; must equal the placement).
    pub k: Option<usize>,
    /// Max degree bound (explicit k<n modes; must be >= the true value).
    pub delta: Option<usize>,
    /// Stage-deadline constant, default 4.
    pub c1: Option<u64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InitError {
    #[error("{0}")]
    Placement(#[from] crate::graph::GraphError),
    #[error("mode {0} requires parameter {1}")]
    MissingKnowledge(&'static str, &'static str),
    #[error("mode requires k = n but k = {0}, n = {1}")]
    KMismatch(usize, usize),
    #[error("given k = {0} does not match placement ({1} agents)")]
    WrongK(usize, usize),
    #[error("given max degree {0} is below the true value {1}")]
    DeltaTooSmall(usize, usize),
    #[error("c1 must be >= 1")]
    BadC1,
}

/// Derived knowledge visible to behaviors.
#[derive(Debug, Clone, Copy)]
pub struct Knowledge {
    pub mode: Mode,
    /// Stage 1 deadline c1*k*delta (explicit k<n modes).
    pub d1: Option<u64>,
    /// Stage 2 deadline 2*c1*k*delta.
    pub d2: Option<u64>,
    /// Known max degree (explicit k<n modes).
    pub delta: Option<usize>,
    /// Common fixed id-schedule bit length (explicit k<n modes).
    pub id_bits: Option<u32>,
    /// Word capacity for the memory metric: bit length of k + max degree.
    pub word_bits: u32,
}

/// Agent status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Status {
    Candidate,
    LocalLeader,
    Leader,
    NonCandidate,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Candidate => "candidate",
            Status::LocalLeader => "local_leader",
            Status::Leader => "leader",
            Status::NonCandidate => "non_candidate",
        }
    }
}

/// Identity of one DFS instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct InstanceKey {
    pub kind: InstanceKind,
    /// Round the instance was created (0 for dispersal instances).
    pub round: u64,
    /// Initiating agent.
    pub owner: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InstanceKind {
    Nse,
    Ge,
    MstRank,
}

impl InstanceKey {
    /// Priority tuple: larger wins; round first, id breaks ties.
    pub fn prio(&self) -> (u64, AgentId) {
        (self.round, self.owner)
    }
}

/// Per-instance DFS bookkeeping stored at (the host of) a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfsRecord {
    /// Port to the parent in the DFS tree; None at the instance root.
    pub parent: Option<Port>,
    /// Smallest untried port.
    pub next: Port,
    /// Port most recently used from this node.
    pub recent: Port,
}

/// MST instance tag: (round the leader was declared, leader id). Larger
/// lexicographic tag subsumes smaller.
pub type MstTag = (u64, AgentId);

/// Per-agent MST bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MstState {
    pub tag: MstTag,
    pub rank: u32,
    pub sub_rank: u32,
    /// Sub-component tree pointers (merging structure).
    pub parent_port: Option<Port>,
    pub child_ports: BTreeSet<Port>,
    /// Ports chosen as MST edges.
    pub mst_ports: BTreeSet<Port>,
    /// Election-tree pointers used for token routing.
    pub t_parent: Option<Port>,
    pub t_children: Vec<Port>,
    /// Outgoing-edge candidates not yet ruled internal, sorted by edge key.
    pub moe_cache: Option<Vec<Port>>,
    /// Completed phase count (kept by the leader).
    pub phases: u32,
}

impl MstState {
    pub fn new(tag: MstTag, rank: u32, t_parent: Option<Port>) -> Self {
        MstState {
            tag,
            rank,
            sub_rank: rank,
            parent_port: None,
            child_ports: BTreeSet::new(),
            mst_ports: BTreeSet::new(),
            t_parent,
            t_children: Vec::new(),
            moe_cache: None,
            phases: 0,
        }
    }
}

/// Minimum outgoing edge candidate found during a gather.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Moe {
    pub weight: Weight,
    pub lo: NodeId,
    pub hi: NodeId,
    pub port_at_lo: Port,
    pub owner_rank: u32,
    pub owner_port: Port,
    pub my_sub_rank: u32,
    pub other_rank: u32,
}

impl Moe {
    pub fn key(&self) -> (Weight, NodeId, NodeId, Port) {
        (self.weight.clone(), self.lo, self.hi, self.port_at_lo)
    }
}

/// Direction of a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeDir {
    /// My sub-component absorbs the other side.
    AbsorbOther,
    /// My sub-component is absorbed into the other side.
    AbsorbSelf,
}

/// Traveling MST walker state, relayed member to member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub phase: u32,
    pub comp_size: u32,
    /// Size gained by the leader's sub-component this phase.
    pub gain: u32,
    /// Rank of the token authority whose turn this is.
    pub auth_rank: u32,
    pub kind: WalkKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WalkKind {
    TokenSeek { rank: u32, phase_end: bool },
    GatherUp,
    GatherDown { best: Option<Moe> },
    Locate { best: Moe },
    MergeCross { best: Moe },
    ReverseWave { best: Moe, dir: MergeDir, origin_rank: u32 },
    ReverseAck { best: Moe, dir: MergeDir, stop_rank: u32 },
    Broadcast { best: Moe, dir: MergeDir, new_rank: u32, count: u32, origin_rank: u32 },
    CrossBack { absorbed: u32 },
}

/// Messages written into another agent's inbox.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Envelope {
    MstInit {
        tag: MstTag,
        rank: u32,
        t_parent: Option<Port>,
    },
    MstTChild {
        tag: MstTag,
        port: Port,
    },
    MstWalk {
        tag: MstTag,
        via: Option<Port>,
        walk: Walk,
    },
    /// Attach: the sender's sub-component hung itself under the recipient
    /// through the delivery port (recipient side of an MOE merge).
    MstAttach {
        tag: MstTag,
        via: Port,
    },
}

/// Records held for one node (either the agent's own home, or in custody
/// for a neighbor's temporarily vacated home).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeRecords {
    pub dfs: BTreeMap<InstanceKey, DfsRecord>,
    pub pending: Vec<Envelope>,
}

/// Oscillation duty: shuttle between own home and a leader's home with
/// period 2 so the vacated home reads as occupied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OscDuty {
    pub served_node: NodeId,
    /// Port from the oscillator's home to the served node.
    pub served_port: Port,
    pub owner: AgentId,
    /// The owner is back; custody drains on the next visit. New records
    /// are not accepted once set.
    pub ending: bool,
}

/// Phases of a walking DFS head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadPhase {
    /// Just arrived through a forward move (may be at an unvisited node).
    Forward,
    /// At a node known to carry this instance's record.
    Back { from_backtrack: bool },
    /// Waiting for the node's host/witness to show; `fresh` when the node
    /// may turn out unoccupied (confirm-empty semantics).
    Wait { tries: u8, fresh: bool, from_backtrack: bool },
    /// At the instance root, about to begin.
    Start,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfsHead {
    pub instance: InstanceKey,
    pub phase: HeadPhase,
    /// Port this head arrived through at its current node; cached in the
    /// program so merged caravan members agree on it.
    pub entry: Option<Port>,
}

/// Per-port sighting collected during singleton election.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortSight {
    Nothing,
    Singleton { id: AgentId, status: Status },
    NonSingleton,
    GeHome,
}

/// Singleton election program state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeProg {
    pub phase: SePhase,
    /// Per port: the neighbor's degree and the latest sighting.
    pub ports: Vec<(usize, PortSight)>,
    /// Padded id bit schedule (stabilizing) or fixed-length id bits
    /// (explicit); stored while the vigil runs.
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SePhase {
    /// Initial visit of ports 1..deg, two rounds each.
    Tour { next_port: Port, out: bool },
    /// Explicit mode: hold at home until the common window grid starts.
    WaitGrid,
    /// Lap of the drift loop, window within the lap, position within the
    /// window, currently out visiting.
    Vigil {
        lap: u8,
        window: u32,
        pos: u32,
        out: bool,
    },
    /// One-round pause between laps: flips the parity of later visits.
    Gap,
    /// Hold at home until the stage deadline (explicit mode).
    HoldVerdict,
}

/// Local-leader probe of a single target node (oscillator acquisition).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeProg {
    pub target_port: Port,
    /// Window counter of the drift loop.
    pub window: u64,
    /// true when standing at the target this round.
    pub out: bool,
    /// Alignment pause so probe visits land on odd rounds.
    pub aligned: bool,
}

/// Walking home along a DFS instance's parent pointers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoHomeProg {
    pub instance: InstanceKey,
    /// First step back through the arrival port (when dying off-tree).
    pub back_first: Option<Port>,
}

/// One-hop return to home, then finalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterReturn {
    Settle,
    StartGe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReturnProg {
    pub then: AfterReturn,
}

/// MST leader driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MstLeadProg {
    pub tag: MstTag,
    pub stage: MstStage,
    pub comp_size: u32,
    pub my_size: u32,
    pub next_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MstStage {
    /// Re-acquire an oscillator before leaving home for the rank pass.
    Recruit { out: bool },
    RankPass(DfsHead),
    /// Token circulation driven through the member task machinery.
    Run,
}

/// Micro-action for MST member work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Micro {
    Decide,
    /// Local MOE scan: probing candidate `cand` of the cache.
    Probe {
        cand: usize,
        attempt: u8,
        out: bool,
        dwell: bool,
    },
    /// Carrying an envelope one hop through `port` and returning; `then`
    /// resumes a walk at home after delivery.
    Carry {
        port: Port,
        env: Envelope,
        out: bool,
        tries: u8,
        then: Option<Walk>,
    },
}

/// A walk being processed by this agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberTask {
    pub walk: Walk,
    /// Port the walk arrived through (None when self-originated).
    pub via: Option<Port>,
    pub micro: Micro,
    /// Local gather work finished.
    pub work_done: bool,
}

/// The active behavior thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Program {
    /// Freshly initialized; resolves to a concrete program at round 0.
    Boot,
    Idle,
    Se(SeProg),
    Nse(DfsHead),
    Probe(ProbeProg),
    Ge(DfsHead),
    GoHome(GoHomeProg),
    Return(ReturnProg),
    MstLead(MstLeadProg),
}

/// Fully inspectable agent memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentMemory {
    pub status: Status,
    pub init_alone: bool,
    /// The node this agent is settled at / anchored to.
    pub home: Option<NodeId>,
    /// Round this agent became a local leader.
    pub round_ll: Option<u64>,
    pub program: Program,
    /// DFS records for the agent's own home node.
    pub hosted: NodeRecords,
    /// Records held in custody for vacated neighbor homes (while
    /// oscillating for their owners).
    pub surrogate: BTreeMap<NodeId, NodeRecords>,
    pub osc: Option<OscDuty>,
    pub inbox: Vec<Envelope>,
    pub task: Option<MemberTask>,
    pub mst: Option<MstState>,
    /// Port of the oscillator recruited for election (reused for MST).
    pub osc_target: Option<Port>,
    /// A recruited oscillator currently holds this agent's home records.
    pub osc_engaged: bool,
    /// Local election verdict reached, declaration deferred to the stage
    /// deadline (explicit modes).
    pub defer_ll: bool,
    /// Global election finished, leader declaration deferred (explicit).
    pub ge_complete: bool,
}

impl AgentMemory {
    pub fn fresh(init_alone: bool, home: Option<NodeId>, status: Status) -> Self {
        AgentMemory {
            status,
            init_alone,
            home,
            round_ll: None,
            program: Program::Boot,
            hosted: NodeRecords::default(),
            surrogate: BTreeMap::new(),
            osc: None,
            inbox: Vec::new(),
            task: None,
            mst: None,
            osc_target: None,
            osc_engaged: false,
            defer_ll: false,
            ge_complete: false,
        }
    }

    /// True when this agent will make no further move on its own.
    pub fn quiet(&self) -> bool {
        matches!(self.program, Program::Idle)
            && self.osc.is_none()
            && self.task.is_none()
            && self.inbox.is_empty()
            && !self.defer_ll
            && !self.ge_complete
    }

    /// Stored words: one word per id, port, rank, round number, status, or
    /// pointer; bit schedules cost ceil(bits/word_bits).
    pub fn words(&self, word_bits: u32) -> usize {
        let mut w = 6; // status, id register, init_alone, home, entry scratch, program tag
        w += match &self.program {
            Program::Boot | Program::Idle => 0,
            Program::Se(se) => {
                let mut x = 5 + 2 * se.ports.len();
                x += (se.bits.len() + word_bits as usize - 1) / word_bits.max(1) as usize;
                x
            }
            Program::Nse(_) | Program::Ge(_) => 4,
            Program::Probe(_) => 4,
            Program::GoHome(_) => 4,
            Program::Return(_) => 1,
            Program::MstLead(p) => {
                5 + match &p.stage {
                    MstStage::RankPass(_) => 4,
                    _ => 1,
                }
            }
        };
        if self.round_ll.is_some() {
            w += 1;
        }
        w += 4 * self.hosted.dfs.len();
        w += self.hosted.pending.iter().map(env_words).sum::<usize>();
        for recs in self.surrogate.values() {
            w += 1 + 4 * recs.dfs.len();
            w += recs.pending.iter().map(env_words).sum::<usize>();
        }
        if self.osc.is_some() {
            w += 3;
        }
        w += self.inbox.iter().map(env_words).sum::<usize>();
        if let Some(t) = &self.task {
            w += 4 + walk_words(&t.walk);
        }
        if let Some(m) = &self.mst {
            w += 8
                + m.child_ports.len()
                + m.mst_ports.len()
                + m.t_children.len()
                + m.moe_cache.as_ref().map_or(0, |c| c.len());
        }
        if self.osc_target.is_some() {
            w += 1;
        }
        w
    }
}

fn env_words(e: &Envelope) -> usize {
    match e {
        Envelope::MstInit { .. } => 4,
        Envelope::MstTChild { .. } => 3,
        Envelope::MstWalk { walk, .. } => 3 + walk_words(walk),
        Envelope::MstAttach { .. } => 3,
    }
}

fn walk_words(w: &Walk) -> usize {
    4 + match &w.kind {
        WalkKind::TokenSeek { .. } => 2,
        WalkKind::GatherUp => 0,
        WalkKind::GatherDown { best } => 1 + best.as_ref().map_or(0, |_| 8),
        WalkKind::Locate { .. } | WalkKind::MergeCross { .. } => 8,
        WalkKind::ReverseWave { .. } => 9,
        WalkKind::ReverseAck { .. } => 10,
        WalkKind::Broadcast { .. } => 11,
        WalkKind::CrossBack { .. } => 1,
    }
}

/// One mobile agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub id: AgentId,
    pub position: NodeId,
    /// Port at the current node through which the agent last arrived.
    pub entry_port: Option<Port>,
    pub mem: AgentMemory,
}

/// Trace event kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Move {
        from: NodeId,
        to: NodeId,
        port: Port,
    },
    Write {
        target: AgentId,
        what: String,
    },
    StatusChange {
        from: Status,
        to: Status,
    },
    TokenPass {
        tag: MstTag,
        phase: u32,
        rank: u32,
    },
    Merge {
        tag: MstTag,
        phase: u32,
        winner_rank: u32,
        absorbed_rank: u32,
    },
    Settle {
        node: NodeId,
    },
    Meet {
        with: AgentId,
        what: String,
    },
}

impl EventKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EventKind::Move { .. } => "move",
            EventKind::Write { .. } => "write",
            EventKind::StatusChange { .. } => "status_change",
            EventKind::TokenPass { .. } => "token_pass",
            EventKind::Merge { .. } => "merge",
            EventKind::Settle { .. } => "settle",
            EventKind::Meet { .. } => "meet",
        }
    }

    pub fn payload(&self) -> String {
        match self {
            EventKind::Move { from, to, port } => {
                format!("from={from} to={to} port={port}")
            }
            EventKind::Write { target, what } => format!("target={target} what={what}"),
            EventKind::StatusChange { from, to } => {
                format!("from={} to={}", from.name(), to.name())
            }
            EventKind::TokenPass { tag, phase, rank } => {
                format!("tag={}:{} phase={phase} rank={rank}", tag.0, tag.1)
            }
            EventKind::Merge {
                tag,
                phase,
                winner_rank,
                absorbed_rank,
            } => format!(
                "tag={}:{} phase={phase} winner={winner_rank} absorbed={absorbed_rank}",
                tag.0, tag.1
            ),
            EventKind::Settle { node } => format!("node={node}"),
            EventKind::Meet { with, what } => format!("with={with} what={what}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub round: u64,
    pub agent: AgentId,
    pub kind: EventKind,
}

impl Event {
    pub fn trace_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.round,
            self.kind.kind_name(),
            self.agent,
            self.kind.payload()
        )
    }
}

/// The node-local view handed to a transition.
pub struct Ctx<'a> {
    pub round: u64,
    pub know: &'a Knowledge,
    pub node: NodeId,
    pub degree: usize,
    /// Destination node per port (opaque identity words).
    pub ports_to: &'a [NodeId],
    /// Edge total-order key per port.
    pub edge_keys: &'a [EdgeKey<Weight>],
    pub entry_port: Option<Port>,
    /// Co-located agents (excluding self), ascending id.
    pub others: Vec<&'a AgentState>,
}

/// Writes applied to other (co-located) agents.
#[derive(Debug, Clone)]
pub enum WriteOp {
    PutDfs {
        node: NodeId,
        instance: InstanceKey,
        rec: DfsRecord,
    },
    TakeDuty {
        duty: OscDuty,
        records: NodeRecords,
    },
    HandBack {
        node: NodeId,
        records: NodeRecords,
    },
    Deliver {
        node: NodeId,
        env: Envelope,
    },
}

impl WriteOp {
    fn describe(&self) -> String {
        match self {
            WriteOp::PutDfs { node, instance, .. } => {
                format!("dfs node={node} inst={:?}:{}:{}", instance.kind, instance.round, instance.owner)
            }
            WriteOp::TakeDuty { duty, .. } => format!("duty node={}", duty.served_node),
            WriteOp::HandBack { node, .. } => format!("handback node={node}"),
            WriteOp::Deliver { node, .. } => format!("deliver node={node}"),
        }
    }
}

/// Result of one agent's compute step.
pub struct Outcome {
    pub mem: AgentMemory,
    pub mv: Option<Port>,
    pub writes: Vec<(AgentId, WriteOp)>,
    pub events: Vec<EventKind>,
}

impl Outcome {
    pub fn new(me: &AgentState) -> Self {
        Outcome {
            mem: me.mem.clone(),
            mv: None,
            writes: Vec::new(),
            events: Vec::new(),
        }
    }
}

/// Global synchronous state.
pub struct SimState {
    pub graph: SimGraph,
    pub round: u64,
    pub agents: BTreeMap<AgentId, AgentState>,
    pub know: Knowledge,
    pub mode: Mode,
    pub c1: u64,
    /// Peak stored words per agent.
    pub high_water: BTreeMap<AgentId, usize>,
    /// Rounds of the last status change / settle / any event.
    pub last_status_change: u64,
    pub last_settle: u64,
    pub last_event: u64,
    pub event_counts: BTreeMap<&'static str, u64>,
    pub flags: BTreeSet<String>,
    /// Local-leader declarations: agent -> round (first).
    pub ll_events: BTreeMap<AgentId, u64>,
    /// Initial non-singleton nodes.
    pub initial_groups: BTreeSet<NodeId>,
    pub trace: Option<Vec<Event>>,
    edge_keys: Vec<Vec<EdgeKey<Weight>>>,
    ports_to: Vec<Vec<NodeId>>,
}

fn bit_len(x: u64) -> u32 {
    64 - x.leading_zeros()
}

impl SimState {
    /// Validates mode/knowledge and builds the round-0 state: groups settle
    /// their largest member immediately, everyone else is a candidate.
    pub fn init(
        graph: SimGraph,
        placement: &Placement,
        mode: Mode,
        params: Params,
        record_trace: bool,
    ) -> Result<SimState, InitError> {
        placement.validate(graph.node_count())?;
        let k = placement.agent_count();
        let n = graph.node_count();
        let delta_true = graph.max_degree();
        let c1 = params.c1.unwrap_or(4);
        if c1 < 1 {
            return Err(InitError::BadC1);
        }
        let mut know = Knowledge {
            mode,
            d1: None,
            d2: None,
            delta: None,
            id_bits: None,
            word_bits: bit_len((k + delta_true) as u64).max(4),
        };
        if mode.is_explicit_kn() {
            let pk = params
                .k
                .ok_or(InitError::MissingKnowledge(mode.name(), "k"))?;
            let pd = params
                .delta
                .ok_or(InitError::MissingKnowledge(mode.name(), "delta"))?;
            if pk != k {
                return Err(InitError::WrongK(pk, k));
            }
            if pd < delta_true {
                return Err(InitError::DeltaTooSmall(pd, delta_true));
            }
            let d1 = c1 * (pk as u64) * (pd as u64);
            know.d1 = Some(d1);
            know.d2 = Some(2 * d1);
            know.delta = Some(pd);
            let max_id = placement
                .by_node
                .values()
                .flatten()
                .copied()
                .max()
                .unwrap_or(1);
            know.id_bits = Some(bit_len(max_id));
        }
        if mode.is_k_equals_n() && k != n {
            return Err(InitError::KMismatch(k, n));
        }

        let mut agents = BTreeMap::new();
        let mut initial_groups = BTreeSet::new();
        let mut events = Vec::new();
        for (&node, ids) in &placement.by_node {
            if ids.len() == 1 {
                let id = ids[0];
                agents.insert(
                    id,
                    AgentState {
                        id,
                        position: node,
                        entry_port: None,
                        mem: AgentMemory::fresh(true, Some(node), Status::Candidate),
                    },
                );
            } else {
                initial_groups.insert(node);
                let max_id = *ids.last().unwrap();
                let min_id = ids[0];
                for &id in ids {
                    let mut mem = AgentMemory::fresh(false, None, Status::Candidate);
                    if id == max_id {
                        // Largest id settles at the start node and hosts the
                        // dispersal's root record.
                        mem.home = Some(node);
                        mem.status = Status::NonCandidate;
                        mem.program = Program::Idle;
                        mem.hosted.dfs.insert(
                            InstanceKey {
                                kind: InstanceKind::Nse,
                                round: 0,
                                owner: min_id,
                            },
                            DfsRecord {
                                parent: None,
                                next: 1,
                                recent: 0,
                            },
                        );
                        events.push(Event {
                            round: 0,
                            agent: id,
                            kind: EventKind::Settle { node },
                        });
                        events.push(Event {
                            round: 0,
                            agent: id,
                            kind: EventKind::StatusChange {
                                from: Status::Candidate,
                                to: Status::NonCandidate,
                            },
                        });
                    }
                    agents.insert(
                        id,
                        AgentState {
                            id,
                            position: node,
                            entry_port: None,
                            mem,
                        },
                    );
                }
            }
        }

        let edge_keys = (0..n)
            .map(|v| {
                (1..=graph.degree(v))
                    .map(|p| graph.edge_key(v, p))
                    .collect()
            })
            .collect();
        let ports_to = (0..n)
            .map(|v| {
                (1..=graph.degree(v))
                    .map(|p| graph.traverse(v, p).unwrap().0)
                    .collect()
            })
            .collect();

        let high_water = agents
            .iter()
            .map(|(&id, a)| (id, a.mem.words(know.word_bits)))
            .collect();
        let mut event_counts: BTreeMap<&'static str, u64> = BTreeMap::new();
        for e in &events {
            *event_counts.entry(e.kind.kind_name()).or_default() += 1;
        }
        Ok(SimState {
            graph,
            round: 0,
            agents,
            know,
            mode,
            c1,
            high_water,
            last_status_change: 0,
            last_settle: 0,
            last_event: 0,
            event_counts,
            flags: BTreeSet::new(),
            ll_events: BTreeMap::new(),
            initial_groups,
            trace: if record_trace { Some(events) } else { None },
            edge_keys,
            ports_to,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// One synchronous round.
    pub fn step(&mut self) {
        let round = self.round;
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();

        // node -> co-located agent ids (ascending)
        let mut by_node: BTreeMap<NodeId, Vec<AgentId>> = BTreeMap::new();
        for (&id, a) in &self.agents {
            by_node.entry(a.position).or_default().push(id);
        }

        let mut outcomes: Vec<(AgentId, Option<Port>, Vec<(AgentId, WriteOp)>, AgentMemory, Vec<EventKind>)> =
            Vec::with_capacity(ids.len());
        for &id in &ids {
            let me = &self.agents[&id];
            let node = me.position;
            let others: Vec<&AgentState> = by_node[&node]
                .iter()
                .filter(|&&o| o != id)
                .map(|o| &self.agents[o])
                .collect();
            let ctx = Ctx {
                round,
                know: &self.know,
                node,
                degree: self.graph.degree(node),
                ports_to: &self.ports_to[node],
                edge_keys: &self.edge_keys[node],
                entry_port: me.entry_port,
                others,
            };
            let out = election::transition(me, &ctx);
            outcomes.push((id, out.mv, out.writes, out.mem, out.events));
        }

        // Apply self-updates first, then writes in writer-id order, then moves.
        let mut new_events: Vec<Event> = Vec::new();
        for (id, _, _, mem, evs) in &outcomes {
            let a = self.agents.get_mut(id).unwrap();
            let old_status = a.mem.status;
            let old_home = a.mem.home;
            a.mem = mem.clone();
            if a.mem.status != old_status {
                new_events.push(Event {
                    round,
                    agent: *id,
                    kind: EventKind::StatusChange {
                        from: old_status,
                        to: a.mem.status,
                    },
                });
                if a.mem.status == Status::LocalLeader {
                    self.ll_events.entry(*id).or_insert(round);
                }
                self.last_status_change = round;
            }
            if old_home.is_none() && a.mem.home.is_some() {
                new_events.push(Event {
                    round,
                    agent: *id,
                    kind: EventKind::Settle {
                        node: a.mem.home.unwrap(),
                    },
                });
                self.last_settle = round;
            }
            for e in evs {
                new_events.push(Event {
                    round,
                    agent: *id,
                    kind: e.clone(),
                });
            }
        }
        for (writer, _, writes, _, _) in &outcomes {
            for (target, op) in writes {
                debug_assert_eq!(
                    self.agents[writer].position, self.agents[target].position,
                    "write to non-co-located agent"
                );
                new_events.push(Event {
                    round,
                    agent: *writer,
                    kind: EventKind::Write {
                        target: *target,
                        what: op.describe(),
                    },
                });
                let t = self.agents.get_mut(target).unwrap();
                apply_write(&mut t.mem, op);
            }
        }
        for (id, mv, _, _, _) in &outcomes {
            if let Some(port) = mv {
                let a = &self.agents[id];
                let from = a.position;
                let (to, back) = self
                    .graph
                    .traverse(from, *port)
                    .expect("behavior moved through an invalid port");
                let a = self.agents.get_mut(id).unwrap();
                a.position = to;
                a.entry_port = Some(back);
                new_events.push(Event {
                    round,
                    agent: *id,
                    kind: EventKind::Move {
                        from,
                        to,
                        port: *port,
                    },
                });
            }
        }

        for e in &new_events {
            *self.event_counts.entry(e.kind.kind_name()).or_default() += 1;
            self.last_event = e.round;
            if let EventKind::StatusChange { from, to } = &e.kind {
                self.check_deadline_flags(*from, *to, e.round);
            }
        }
        if let Some(tr) = &mut self.trace {
            tr.extend(new_events);
        }

        self.round += 1;
        for (&id, a) in &self.agents {
            let w = a.mem.words(self.know.word_bits);
            let hw = self.high_water.get_mut(&id).unwrap();
            if w > *hw {
                *hw = w;
            }
        }
    }

    fn check_deadline_flags(&mut self, _from: Status, to: Status, round: u64) {
        if let (Some(d1), Some(d2)) = (self.know.d1, self.know.d2) {
            if to == Status::LocalLeader && round > d1 {
                self.flags.insert("stage1_overrun".into());
            }
            if to == Status::Leader && round > d2 {
                self.flags.insert("stage2_overrun".into());
            }
        }
    }

    pub fn quiesced(&self) -> bool {
        self.agents.values().all(|a| a.mem.quiet())
    }

    /// Steps until quiescence or `max_rounds`.
    pub fn run(&mut self, max_rounds: u64) -> RunResult {
        assert!(max_rounds > 0, "max_rounds must be positive");
        while self.round < max_rounds && !self.quiesced() {
            self.step();
        }
        let quiesced = self.quiesced();
        if !quiesced {
            self.flags.insert("max_rounds_exhausted".into());
        }
        if let Some(d1) = self.know.d1 {
            if self.last_settle > d1 {
                self.flags.insert("settle_after_stage1_deadline".into());
            }
        }
        self.collect_result(quiesced)
    }

    fn collect_result(&self, quiesced: bool) -> RunResult {
        let occupied: BTreeSet<NodeId> = self.agents.values().map(|a| a.position).collect();
        let comps = oracle::components(&self.graph, &occupied);
        let node_comp: BTreeMap<NodeId, usize> = comps
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |&v| (v, i)))
            .collect();

        let mut components: Vec<ComponentMetrics> = comps
            .iter()
            .map(|c| ComponentMetrics {
                nodes: c.iter().copied().collect(),
                leader: None,
                ell: 0,
                zeta: 0,
                phases: 0,
                mst_edges: Vec::new(),
            })
            .collect();
        for &g in &self.initial_groups {
            if let Some(&ci) = node_comp.get(&g) {
                components[ci].ell += 1;
            }
        }
        for (&id, a) in &self.agents {
            if let Some(&ci) = node_comp.get(&a.position) {
                if self.ll_events.contains_key(&id) {
                    components[ci].zeta += 1;
                }
                if a.mem.status == Status::Leader {
                    components[ci].leader = Some(id);
                    if let Some(m) = &a.mem.mst {
                        components[ci].phases = m.phases;
                    }
                }
            }
        }
        // MST edges per component from members whose tag matches the leader's.
        for comp in components.iter_mut() {
            let Some(lid) = comp.leader else { continue };
            let tag = self.agents[&lid]
                .mem
                .mst
                .as_ref()
                .map(|m| m.tag);
            let Some(tag) = tag else { continue };
            let mut edges: BTreeSet<(NodeId, NodeId, String)> = BTreeSet::new();
            for a in self.agents.values() {
                let node = a.position;
                if !comp.nodes.contains(&node) {
                    continue;
                }
                if let Some(m) = &a.mem.mst {
                    if m.tag != tag {
                        continue;
                    }
                    for &p in &m.mst_ports {
                        let (u, _) = self.graph.traverse(node, p).unwrap();
                        let e = self.graph.edges()[self.graph.edge_at(node, p)].clone();
                        let (lo, hi) = (node.min(u), node.max(u));
                        edges.insert((lo, hi, e.weight.to_string()));
                    }
                }
            }
            comp.mst_edges = edges.into_iter().collect();
        }

        let leaders: Vec<AgentId> = self
            .agents
            .values()
            .filter(|a| a.mem.status == Status::Leader)
            .map(|a| a.id)
            .collect();

        RunResult {
            quiesced,
            rounds: self.round,
            stabilization_round: self.last_status_change,
            completion_round: self.last_event,
            leaders,
            components,
            peak_words: self.high_water.clone(),
            event_counts: self
                .event_counts
                .iter()
                .map(|(&k, &v)| (k.to_string(), v))
                .collect(),
            flags: self.flags.iter().cloned().collect(),
            final_nodes: self
                .agents
                .iter()
                .map(|(&id, a)| (id, a.position))
                .collect(),
            final_status: self
                .agents
                .iter()
                .map(|(&id, a)| (id, a.mem.status.name().to_string()))
                .collect(),
        }
    }

    pub fn trace_text(&self) -> Option<String> {
        self.trace.as_ref().map(|t| {
            let mut s = String::new();
            for e in t {
                s.push_str(&e.trace_line());
                s.push('\n');
            }
            s
        })
    }
}

fn apply_write(mem: &mut AgentMemory, op: &WriteOp) {
    match op {
        WriteOp::PutDfs {
            node,
            instance,
            rec,
        } => {
            if mem.home == Some(*node) {
                mem.hosted.dfs.insert(*instance, rec.clone());
            } else {
                mem.surrogate
                    .entry(*node)
                    .or_default()
                    .dfs
                    .insert(*instance, rec.clone());
            }
        }
        WriteOp::TakeDuty { duty, records } => {
            let slot = mem.surrogate.entry(duty.served_node).or_default();
            slot.dfs.extend(records.dfs.iter().map(|(k, v)| (*k, v.clone())));
            slot.pending.extend(records.pending.iter().cloned());
            mem.osc = Some(duty.clone());
        }
        WriteOp::HandBack { node, records } => {
            debug_assert_eq!(mem.home, Some(*node));
            mem.hosted
                .dfs
                .extend(records.dfs.iter().map(|(k, v)| (*k, v.clone())));
            mem.inbox.extend(records.pending.iter().cloned());
            mem.osc_engaged = false;
        }
        WriteOp::Deliver { node, env } => {
            if mem.home == Some(*node) {
                mem.inbox.push(env.clone());
            } else {
                mem.surrogate
                    .entry(*node)
                    .or_default()
                    .pending
                    .push(env.clone());
            }
        }
    }
}

/// Per-component outcome summary.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentMetrics {
    pub nodes: Vec<NodeId>,
    pub leader: Option<AgentId>,
    /// Initial non-singleton nodes that ended up in this component.
    pub ell: usize,
    /// Agents of this component that ever became local leaders.
    pub zeta: usize,
    /// MST phases executed (MST modes).
    pub phases: u32,
    /// Final MST edge list (u, v, weight), sorted.
    pub mst_edges: Vec<(NodeId, NodeId, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub quiesced: bool,
    pub rounds: u64,
    pub stabilization_round: u64,
    pub completion_round: u64,
    pub leaders: Vec<AgentId>,
    pub components: Vec<ComponentMetrics>,
    pub peak_words: BTreeMap<AgentId, usize>,
    pub event_counts: BTreeMap<String, u64>,
    pub flags: Vec<String>,
    pub final_nodes: BTreeMap<AgentId, NodeId>,
    pub final_status: BTreeMap<AgentId, String>,
}

impl RunResult {
    /// Metrics document (single structured JSON object, stable key order).
    pub fn metrics_json(&self, graph: &SimGraph, mode: Mode, k: usize, c1: u64) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            mode: &'static str,
            n: usize,
            m: usize,
            k: usize,
            delta: usize,
            c1: u64,
            rounds: u64,
            quiesced: bool,
            stabilization_round: u64,
            completion_round: u64,
            leaders: &'a Vec<AgentId>,
            n_components: usize,
            c_max: usize,
            ell_max: usize,
            zeta_max: usize,
            components: &'a Vec<ComponentMetrics>,
            peak_words: &'a BTreeMap<AgentId, usize>,
            event_counts: &'a BTreeMap<String, u64>,
            flags: &'a Vec<String>,
            final_nodes: &'a BTreeMap<AgentId, NodeId>,
            final_status: &'a BTreeMap<AgentId, String>,
        }
        let doc = Doc {
            mode: mode.name(),
            n: graph.node_count(),
            m: graph.edge_count(),
            k,
            delta: graph.max_degree(),
            c1,
            rounds: self.rounds,
            quiesced: self.quiesced,
            stabilization_round: self.stabilization_round,
            completion_round: self.completion_round,
            leaders: &self.leaders,
            n_components: self.components.len(),
            c_max: self.components.iter().map(|c| c.nodes.len()).max().unwrap_or(0),
            ell_max: self.components.iter().map(|c| c.ell).max().unwrap_or(0),
            zeta_max: self.components.iter().map(|c| c.zeta).max().unwrap_or(0),
            components: &self.components,
            peak_words: &self.peak_words,
            event_counts: &self.event_counts,
            flags: &self.flags,
            final_nodes: &self.final_nodes,
            final_status: &self.final_status,
        };
        serde_json::to_string_pretty(&doc).expect("metrics serialize")
    }
}
