//! Leader-election behaviors: singleton election (degree conditions plus a
//! padded-schedule vigil), non-singleton election (DFS dispersal caravans),
//! oscillation acquisition by probing, and component-wide global election
//! with priority fights, in stabilizing k<n, explicit k<n, and k=n modes.

use crate::engine::*;
use crate::graph::{AgentId, NodeId, Port};
use crate::mst;

/// Padded identifier schedule: the id's bits followed by "10" repeated b^2
/// times, b the id's bit length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedSchedule {
    pub original_bits: usize,
    pub padded_bits: Vec<bool>,
    pub cursor: usize,
}

/// Builds the padded schedule for an id. None for id 0 (ids are positive).
pub fn pad_id(id: u64) -> Option<PaddedSchedule> {
    if id == 0 {
        return None;
    }
    let b = (64 - id.leading_zeros()) as usize;
    let mut bits = Vec::with_capacity(b + 2 * b * b);
    for i in (0..b).rev() {
        bits.push((id >> i) & 1 == 1);
    }
    for _ in 0..(b * b) {
        bits.push(true);
        bits.push(false);
    }
    Some(PaddedSchedule {
        original_bits: b,
        padded_bits: bits,
        cursor: 0,
    })
}

/// Length of the padded schedule for an id.
pub fn padded_len(id: u64) -> usize {
    let b = (64 - id.leading_zeros()) as usize;
    b + 2 * b * b
}

/// Bit of the padded schedule without materializing it.
fn padded_bit(id: u64, idx: usize) -> bool {
    let b = (64 - id.leading_zeros()) as usize;
    if idx < b {
        (id >> (b - 1 - idx)) & 1 == 1
    } else {
        (idx - b) % 2 == 0
    }
}

/// Local-leader priority: larger (round became local leader, id) wins.
fn prio(a: &AgentState) -> (u64, AgentId) {
    (a.mem.round_ll.unwrap_or(0), a.id)
}

fn prio_mem(mem: &AgentMemory, id: AgentId) -> (u64, AgentId) {
    (mem.round_ll.unwrap_or(0), id)
}

/// An occupancy witness at a node: a settled/home agent, or an oscillator
/// covering the vacated home of a traveling local leader.
pub enum Witness<'a> {
    Home(&'a AgentState),
    Osc(&'a AgentState),
}

pub fn find_witness<'a>(ctx: &'a Ctx) -> Option<Witness<'a>> {
    for a in &ctx.others {
        if a.mem.home == Some(ctx.node) {
            return Some(Witness::Home(a));
        }
    }
    for a in &ctx.others {
        if let Some(d) = &a.mem.osc {
            if d.served_node == ctx.node {
                return Some(Witness::Osc(a));
            }
        }
    }
    None
}

enum RecordLookup {
    /// Record found; (host id, record).
    Found(AgentId, DfsRecord),
    /// Node is occupied and synced, record absent; host to write to.
    Missing(AgentId),
    /// Node occupied but the record store is momentarily unreachable.
    NotReady,
    /// No witness present this round.
    NoWitness,
}

fn lookup_record(ctx: &Ctx, inst: InstanceKey) -> RecordLookup {
    // A co-located oscillator serving this node may hold records in custody.
    let osc_holder = ctx.others.iter().find(|a| {
        a.mem
            .osc
            .as_ref()
            .map_or(false, |d| d.served_node == ctx.node)
    });
    let home_host = ctx.others.iter().find(|a| a.mem.home == Some(ctx.node));
    if let Some(h) = home_host {
        if let Some(rec) = h.mem.hosted.dfs.get(&inst) {
            return RecordLookup::Found(h.id, rec.clone());
        }
        if let Some(o) = osc_holder {
            if let Some(recs) = o.mem.surrogate.get(&ctx.node) {
                if let Some(rec) = recs.dfs.get(&inst) {
                    return RecordLookup::Found(o.id, rec.clone());
                }
            }
        }
        if h.mem.osc_engaged {
            // while the host's records are in custody, the oscillator's
            // store is the only consistent place to read or write
            return match osc_holder {
                Some(o) if !o.mem.osc.as_ref().unwrap().ending => {
                    RecordLookup::Missing(o.id)
                }
                _ => RecordLookup::NotReady,
            };
        }
        return RecordLookup::Missing(h.id);
    }
    if let Some(o) = osc_holder {
        if let Some(recs) = o.mem.surrogate.get(&ctx.node) {
            if let Some(rec) = recs.dfs.get(&inst) {
                return RecordLookup::Found(o.id, rec.clone());
            }
        }
        if o.mem.osc.as_ref().unwrap().ending {
            return RecordLookup::NotReady;
        }
        return RecordLookup::Missing(o.id);
    }
    RecordLookup::NoWitness
}

/// All GE-instance records visible at this node (for priority fights).
fn visible_ge_records(ctx: &Ctx) -> Vec<InstanceKey> {
    let mut keys = Vec::new();
    for a in &ctx.others {
        if a.mem.home == Some(ctx.node) {
            keys.extend(a.mem.hosted.dfs.keys().copied());
        }
        if let Some(d) = &a.mem.osc {
            if d.served_node == ctx.node {
                if let Some(recs) = a.mem.surrogate.get(&ctx.node) {
                    keys.extend(recs.dfs.keys().copied());
                }
            }
        }
    }
    keys.retain(|k| k.kind == InstanceKind::Ge);
    keys
}

fn port_of_node(ctx: &Ctx, node: NodeId) -> Option<Port> {
    ctx.ports_to.iter().position(|&n| n == node).map(|i| i + 1)
}

/// Whether this agent's home must stay covered by its oscillator.
pub fn needs_cover(mem: &AgentMemory) -> bool {
    match &mem.program {
        Program::Ge(_) | Program::GoHome(_) => true,
        Program::Return(r) => r.then == AfterReturn::StartGe,
        Program::MstLead(p) => {
            matches!(p.stage, MstStage::Recruit { .. } | MstStage::RankPass(_))
        }
        _ => false,
    }
}

/// The behavior transition: a pure function of the agent's memory and its
/// node-local view.
pub(crate) fn transition(me: &AgentState, ctx: &Ctx) -> Outcome {
    let mut out = Outcome::new(me);

    if matches!(out.mem.program, Program::Boot) {
        boot(me, ctx, &mut out);
    }
    mst::intake(me, ctx, &mut out);
    deadlines(me, ctx, &mut out);
    if resolve(me, ctx, &mut out) {
        return out;
    }
    promote(me, ctx, &mut out);
    if osc_step(me, ctx, &mut out) {
        return out;
    }
    match out.mem.program.clone() {
        Program::Boot | Program::Idle => {}
        Program::Se(se) => se_step(me, ctx, &mut out, se),
        Program::Nse(head) => {
            // all co-located caravans act as one: every member mirrors the
            // canonical view (minimum-id carrier of the winning instance)
            let mut sel = (
                head.instance,
                head.phase,
                head.entry.or(ctx.entry_port),
                me.id,
            );
            for a in &ctx.others {
                if let Program::Nse(h) = &a.mem.program {
                    let better = h.instance.owner > sel.0.owner
                        || (h.instance.owner == sel.0.owner && a.id < sel.3);
                    if better {
                        sel = (h.instance, h.phase, h.entry.or(a.entry_port), a.id);
                    }
                }
            }
            if sel.0 != head.instance {
                out.events.push(EventKind::Meet {
                    with: sel.0.owner,
                    what: "dispersal_merge".into(),
                });
            }
            head_step(
                me,
                ctx,
                &mut out,
                DfsHead {
                    instance: sel.0,
                    phase: sel.1,
                    entry: sel.2,
                },
                Flavor::Nse,
                sel.2,
            )
        }
        Program::Ge(head) => {
            let flavor = if ctx.know.mode.is_k_equals_n() {
                Flavor::GeN
            } else {
                Flavor::GeKn
            };
            let entry = head.entry.or(ctx.entry_port);
            head_step(me, ctx, &mut out, head, flavor, entry)
        }
        Program::Probe(p) => probe_step(me, ctx, &mut out, p),
        Program::GoHome(g) => gohome_step(me, ctx, &mut out, g),
        Program::Return(r) => return_step(me, ctx, &mut out, r),
        Program::MstLead(p) => mst::lead_step(me, ctx, &mut out, p),
    }
    let idle_for_task = matches!(out.mem.program, Program::Idle)
        || matches!(&out.mem.program, Program::MstLead(p) if matches!(p.stage, MstStage::Run));
    if idle_for_task && out.mem.osc.is_none() && out.mem.task.is_some() && out.mv.is_none() {
        mst::task_step(me, ctx, &mut out);
    }
    out
}

/// Round-0 program selection.
fn boot(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    if me.mem.init_alone {
        if ctx.degree == 0 {
            // single node, single agent: leader immediately
            finalize_isolated_leader(me, ctx, out);
            return;
        }
        out.mem.program = Program::Se(SeProg {
            phase: SePhase::Tour {
                next_port: 1,
                out: false,
            },
            ports: vec![(0, PortSight::Nothing); ctx.degree],
            bits: Vec::new(),
        });
    } else {
        // non-singleton group member: join the dispersal caravan led by the
        // minimum id of the group
        let min_id = ctx
            .others
            .iter()
            .map(|a| a.id)
            .chain(std::iter::once(me.id))
            .min()
            .unwrap();
        out.mem.program = Program::Nse(DfsHead {
            instance: InstanceKey {
                kind: InstanceKind::Nse,
                round: 0,
                owner: min_id,
            },
            phase: HeadPhase::Back {
                from_backtrack: false,
            },
            entry: None,
        });
    }
}

/// Leader with an empty neighborhood: becomes local leader and promotes to
/// global leader without running Global_Election.
fn finalize_isolated_leader(_me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    out.mem.status = Status::LocalLeader;
    if out.mem.round_ll.is_none() {
        out.mem.round_ll = Some(ctx.round);
    }
    out.mem.ge_complete = true;
    out.mem.program = Program::Idle;
}

/// Declares leadership once the component-wide election finished (and, in
/// explicit modes, the stage-2 deadline has passed). Starts MST
/// construction in MST modes.
fn promote(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    if out.mem.status != Status::LocalLeader || !out.mem.ge_complete {
        return;
    }
    if let Some(d2) = ctx.know.d2 {
        if ctx.round < d2 {
            return;
        }
    }
    out.mem.ge_complete = false;
    out.mem.status = Status::Leader;
    out.mem.program = Program::Idle;
    if ctx.know.mode.is_mst() {
        if out.mem.osc_target.is_none() {
            // isolated component: the tree is empty and so is the MST
            out.mem.mst = Some(MstState::new((ctx.round, me.id), 1, None));
        } else {
            out.mem.program = Program::MstLead(MstLeadProg {
                tag: (ctx.round, me.id),
                stage: MstStage::Recruit { out: false },
                comp_size: 0,
                my_size: 1,
                next_rank: 2,
            });
        }
    }
}

/// Explicit-mode stage deadlines: declarations happen exactly at d1 and d2.
fn deadlines(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    let (Some(d1), Some(d2)) = (ctx.know.d1, ctx.know.d2) else {
        return;
    };
    let _ = d2;
    if ctx.round == d1 && out.mem.defer_ll {
        out.mem.defer_ll = false;
        out.mem.status = Status::LocalLeader;
        out.mem.round_ll = Some(ctx.round);
        if let Some(t) = out.mem.osc_target {
            out.mem.program = Program::Probe(ProbeProg {
                target_port: t,
                window: 0,
                out: false,
                aligned: false,
            });
        } else {
            // no known occupied neighbor: hold as local leader, declare at d2
            out.mem.ge_complete = true;
            out.mem.program = Program::Idle;
        }
    }
    let _ = me;
}

/// Declared leaders are final in k=n mode and, after the stage-2 deadline,
/// in explicit modes.
fn leaders_final(ctx: &Ctx) -> bool {
    if ctx.know.mode.is_k_equals_n() {
        return true;
    }
    if let Some(d2) = ctx.know.d2 {
        return ctx.round >= d2;
    }
    false
}

/// Co-location rules: dispersal merges, DFS priority fights, demotions,
/// oscillator recruitment. Returns true when this round is fully decided.
fn resolve(me: &AgentState, ctx: &Ctx, out: &mut Outcome) -> bool {
    let nse_present = ctx.others.iter().any(|a| matches!(a.mem.program, Program::Nse(_)))
        || matches!(out.mem.program, Program::Nse(_));

    // Surviving GE head at this node: none if a caravan is present or a
    // final leader sits here; otherwise the max-priority head.
    let mut heads: Vec<(u64, AgentId)> = ctx
        .others
        .iter()
        .filter(|a| matches!(a.mem.program, Program::Ge(_)))
        .map(|a| prio(a))
        .collect();
    if matches!(out.mem.program, Program::Ge(_)) {
        heads.push(prio_mem(&out.mem, me.id));
    }
    let final_leader_here = leaders_final(ctx)
        && ctx.others.iter().any(|a| a.mem.status == Status::Leader);
    let survivor: Option<(u64, AgentId)> = if nse_present || final_leader_here {
        None
    } else {
        heads.iter().max().copied()
    };
    // meetings count only on occupied ground: two instances confirming the
    // same unoccupied node may belong to different components
    let fight_ground =
        out.mem.home == Some(ctx.node) || find_witness(ctx).is_some();

    // 2. GE heads: die to caravans, final leaders, and higher priorities
    if matches!(out.mem.program, Program::Ge(_)) && fight_ground {
        let my_prio = prio_mem(&out.mem, me.id);
        if survivor != Some(my_prio) {
            let cause = if nse_present {
                "yield_to_dispersal"
            } else if final_leader_here {
                "yield_to_leader"
            } else {
                "yield_to_priority"
            };
            die_ge(me, ctx, out, cause);
            return false; // GoHome program step moves this round
        }
    }

    // 3. sitting leaders: overtaken when met by a later election
    //    (stabilizing semantics); earlier-priority visitors die on this
    //    leader's stored records instead. A leader that never ran
    //    Global_Election leaves no records and steps aside for any visitor.
    if out.mem.status == Status::Leader && !leaders_final(ctx) {
        let my_prio = prio_mem(&out.mem, me.id);
        let ll_visitor_higher = ctx.others.iter().any(|a| {
            a.mem.status == Status::LocalLeader
                && a.mem.home != Some(ctx.node)
                && prio(a) > my_prio
        });
        let head_higher = survivor.map_or(false, |s| s > my_prio);
        let never_ran_ge = out.mem.osc_target.is_none();
        let overtaken = nse_present
            || head_higher
            || ll_visitor_higher
            || (never_ran_ge && survivor.is_some());
        if fight_ground && overtaken {
            out.mem.status = Status::NonCandidate;
            out.events.push(EventKind::Meet {
                with: 0,
                what: "overtaken".into(),
            });
            demote_active_program(me, ctx, out);
            return !matches!(out.mem.program, Program::GoHome(_) | Program::Return(_));
        }
    }

    // 4. local leaders: demoted by a surviving GE head; prober contests
    if out.mem.status == Status::LocalLeader && !matches!(out.mem.program, Program::Ge(_)) {
        if final_leader_here {
            // the component already has its final leader
            out.mem.status = Status::NonCandidate;
            out.mem.defer_ll = false;
            out.mem.ge_complete = false;
            out.events.push(EventKind::Meet {
                with: 0,
                what: "ll_yield_to_final_leader".into(),
            });
            if me.position == out.mem.home.unwrap_or(usize::MAX) {
                out.mem.program = Program::Idle;
                return true;
            }
            out.mem.program = Program::Return(ReturnProg {
                then: AfterReturn::Settle,
            });
            out.mv = ctx.entry_port;
            return true;
        }
        let outranked_by_head =
            survivor.map_or(false, |s| s > prio_mem(&out.mem, me.id));
        if outranked_by_head && fight_ground {
            out.mem.status = Status::NonCandidate;
            out.mem.defer_ll = false;
            out.mem.ge_complete = false;
            out.events.push(EventKind::Meet {
                with: survivor.unwrap().1,
                what: "ll_yield_to_ge".into(),
            });
            if me.position == out.mem.home.unwrap_or(usize::MAX) {
                out.mem.program = Program::Idle;
                return true;
            }
            out.mem.program = Program::Return(ReturnProg {
                then: AfterReturn::Settle,
            });
            out.mv = ctx.entry_port;
            return true;
        }
        // prober contest at this node
        let i_am_visitor = matches!(&out.mem.program, Program::Probe(p) if p.out)
            && out.mem.home != Some(ctx.node);
        let i_am_home_ll = out.mem.home == Some(ctx.node);
        if i_am_visitor || i_am_home_ll {
            let mut contenders: Vec<(u64, AgentId)> = ctx
                .others
                .iter()
                .filter(|a| {
                    a.mem.status == Status::LocalLeader
                        && (matches!(&a.mem.program, Program::Probe(p) if p.out && a.mem.home != Some(ctx.node))
                            || a.mem.home == Some(ctx.node))
                })
                .map(|a| prio(a))
                .collect();
            contenders.push(prio_mem(&out.mem, me.id));
            if contenders.len() >= 2 {
                let max = *contenders.iter().max().unwrap();
                if max != prio_mem(&out.mem, me.id) {
                    out.mem.status = Status::NonCandidate;
                    out.mem.defer_ll = false;
                    out.events.push(EventKind::Meet {
                        with: max.1,
                        what: "ll_contest_lost".into(),
                    });
                    if i_am_home_ll {
                        out.mem.program = Program::Idle;
                    } else {
                        out.mem.program = Program::Return(ReturnProg {
                            then: AfterReturn::Settle,
                        });
                        out.mv = ctx.entry_port;
                    }
                    return true;
                }
            }
            // recruitment: the max-priority visitor takes a free host
            if i_am_visitor {
                let host = ctx.others.iter().find(|a| {
                    a.mem.home == Some(ctx.node)
                        && a.mem.status == Status::NonCandidate
                        && a.mem.osc.is_none()
                        && !a.mem.osc_engaged
                });
                if let Some(host) = host {
                    recruit(me, ctx, out, host.id);
                    return true;
                }
            }
        }
    }

    false
}

/// A demoted leader abandons whatever it was doing and heads home.
fn demote_active_program(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    let home = out.mem.home.unwrap_or(usize::MAX);
    match &out.mem.program {
        Program::MstLead(p) => match &p.stage {
            MstStage::RankPass(head) => {
                let inst = head.instance;
                let fresh = matches!(
                    head.phase,
                    HeadPhase::Forward | HeadPhase::Wait { fresh: true, .. }
                );
                out.mem.program = Program::GoHome(GoHomeProg {
                    instance: inst,
                    back_first: if fresh { ctx.entry_port } else { None },
                });
            }
            _ => {
                out.mem.task = None;
                if me.position == home {
                    out.mem.program = Program::Idle;
                } else {
                    out.mem.program = Program::Return(ReturnProg {
                        then: AfterReturn::Settle,
                    });
                    out.mv = ctx.entry_port;
                }
            }
        },
        _ => {
            if me.position == home {
                out.mem.program = Program::Idle;
            } else {
                out.mem.program = Program::Return(ReturnProg {
                    then: AfterReturn::Settle,
                });
                out.mv = ctx.entry_port;
            }
        }
    }
}

/// GE head dies: becomes non-candidate and walks home along its parents.
fn die_ge(_me: &AgentState, ctx: &Ctx, out: &mut Outcome, cause: &str) {
    let Program::Ge(head) = &out.mem.program else {
        return;
    };
    let inst = head.instance;
    let fresh = matches!(
        head.phase,
        HeadPhase::Forward | HeadPhase::Wait { fresh: true, .. }
    );
    out.mem.status = Status::NonCandidate;
    out.mem.ge_complete = false;
    out.events.push(EventKind::Meet {
        with: 0,
        what: cause.to_string(),
    });
    out.mem.program = Program::GoHome(GoHomeProg {
        instance: inst,
        back_first: if fresh { ctx.entry_port } else { None },
    });
}

/// The winning prober hands its records and duty to the host, then heads
/// home to start Global_Election.
fn recruit(me: &AgentState, ctx: &Ctx, out: &mut Outcome, host: AgentId) {
    let home = out.mem.home.expect("local leader has a home");
    let ge_key = InstanceKey {
        kind: InstanceKind::Ge,
        round: out.mem.round_ll.unwrap_or(0),
        owner: me.id,
    };
    let mut records = NodeRecords {
        dfs: std::mem::take(&mut out.mem.hosted.dfs),
        pending: std::mem::take(&mut out.mem.hosted.pending),
    };
    records.dfs.insert(
        ge_key,
        DfsRecord {
            parent: None,
            next: 1,
            recent: 0,
        },
    );
    out.writes.push((
        host,
        WriteOp::TakeDuty {
            duty: OscDuty {
                served_node: home,
                served_port: ctx.entry_port.expect("arrived by probing"),
                owner: me.id,
                ending: false,
            },
            records,
        },
    ));
    out.mem.osc_engaged = true;
    out.events.push(EventKind::Meet {
        with: host,
        what: "oscillation_start".into(),
    });
    out.mem.program = Program::Return(ReturnProg {
        then: AfterReturn::StartGe,
    });
    out.mv = ctx.entry_port;
}

/// Oscillator swing: home on even rounds, the served home on odd rounds.
/// Returns true when the duty decided this round's move.
fn osc_step(_me: &AgentState, ctx: &Ctx, out: &mut Outcome) -> bool {
    let Some(duty) = out.mem.osc.clone() else {
        return false;
    };
    if out.mem.home == Some(ctx.node) {
        out.mv = Some(duty.served_port);
        return true;
    }
    if ctx.node == duty.served_node {
        // duty ends when the owner is back home with nothing left to
        // cover; the drain happens one visit later so no record written
        // this round can be stranded
        let owner_home = ctx
            .others
            .iter()
            .find(|a| a.id == duty.owner && a.mem.home == Some(ctx.node));
        if let Some(owner) = owner_home {
            if !needs_cover(&owner.mem) {
                if duty.ending {
                    let records = out
                        .mem
                        .surrogate
                        .remove(&ctx.node)
                        .unwrap_or_default();
                    out.writes.push((
                        duty.owner,
                        WriteOp::HandBack {
                            node: ctx.node,
                            records,
                        },
                    ));
                    out.mem.osc = None;
                } else if let Some(d) = &mut out.mem.osc {
                    d.ending = true;
                }
            } else if let Some(d) = &mut out.mem.osc {
                d.ending = false;
            }
        }
        out.mv = ctx.entry_port;
        return true;
    }
    // mid-swing inconsistency: head home
    out.mv = ctx.entry_port;
    true
}

// ---------------------------------------------------------------------------
// Singleton election
// ---------------------------------------------------------------------------

fn update_sight(entry: &mut (usize, PortSight), new: PortSight) {
    let cur = entry.1;
    entry.1 = match (cur, new) {
        (PortSight::NonSingleton, _) => PortSight::NonSingleton,
        (_, PortSight::Nothing) => cur,
        (_, n) => n,
    };
}

fn sight_of(w: &Witness) -> PortSight {
    match w {
        Witness::Home(a) => {
            if a.mem.init_alone {
                PortSight::Singleton {
                    id: a.id,
                    status: a.mem.status,
                }
            } else {
                PortSight::NonSingleton
            }
        }
        Witness::Osc(_) => PortSight::GeHome,
    }
}

/// Disqualifying evidence, over sighted occupants only: an occupied node
/// with a smaller degree outranks me; a same-degree singleton with a larger
/// id (or one already elected) outranks me; a non-singleton occupant means
/// a dispersal owns this territory. In k = n mode only non-singleton
/// evidence disqualifies.
fn se_beaten(me: &AgentState, ctx: &Ctx, se: &SeProg) -> bool {
    let my_deg = se.ports.len();
    let k_eq_n = ctx.know.mode.is_k_equals_n();
    for (deg, sight) in &se.ports {
        match sight {
            PortSight::Nothing => {}
            PortSight::NonSingleton => return true,
            PortSight::GeHome => {
                if !k_eq_n && *deg <= my_deg {
                    return true;
                }
            }
            PortSight::Singleton { id, status } => {
                if k_eq_n {
                    continue;
                }
                if *deg < my_deg {
                    return true;
                }
                if *deg == my_deg
                    && (*id > me.id
                        || matches!(status, Status::LocalLeader | Status::Leader))
                {
                    return true;
                }
            }
        }
    }
    false
}

fn advance(window: u32, pos: u32, win_len: u32) -> (u32, u32) {
    if pos + 1 >= win_len {
        (window + 1, 0)
    } else {
        (window, pos + 1)
    }
}

fn se_step(me: &AgentState, ctx: &Ctx, out: &mut Outcome, mut se: SeProg) {
    let my_deg = ctx.ports_to.len();
    let at_home = out.mem.home == Some(ctx.node);

    // record visitors while at home: a visitor whose home is one of my
    // neighbors reveals that port's occupancy
    if at_home {
        for a in &ctx.others {
            if let Some(h) = a.mem.home {
                if h != ctx.node {
                    if let Some(p) = port_of_node(ctx, h) {
                        let s = if a.mem.init_alone {
                            PortSight::Singleton {
                                id: a.id,
                                status: a.mem.status,
                            }
                        } else {
                            PortSight::NonSingleton
                        };
                        update_sight(&mut se.ports[p - 1], s);
                    }
                }
            }
        }
    }

    match se.phase {
        SePhase::Tour { next_port, out: touring } => {
            if touring {
                // standing at the neighbor behind `next_port`
                se.ports[next_port - 1].0 = ctx.degree;
                if let Some(w) = find_witness(ctx) {
                    update_sight(&mut se.ports[next_port - 1], sight_of(&w));
                }
                out.mv = ctx.entry_port;
                se.phase = SePhase::Tour {
                    next_port: next_port + 1,
                    out: false,
                };
            } else if next_port > my_deg {
                // tour done
                if ctx.know.d1.is_some() {
                    se.phase = SePhase::WaitGrid;
                } else {
                    se.bits = pad_id(me.id).unwrap().padded_bits;
                    se.phase = SePhase::Vigil {
                        lap: 1,
                        window: 0,
                        pos: 0,
                        out: false,
                    };
                }
            } else {
                out.mv = Some(next_port);
                se.phase = SePhase::Tour {
                    next_port,
                    out: true,
                };
            }
        }
        SePhase::WaitGrid => {
            let delta = ctx.know.delta.unwrap() as u64;
            if ctx.round + 1 >= 2 * delta {
                let l = ctx.know.id_bits.unwrap();
                se.bits = (0..l)
                    .map(|i| (me.id >> (l - 1 - i)) & 1 == 1)
                    .collect();
                se.phase = SePhase::Vigil {
                    lap: 1,
                    window: 0,
                    pos: 0,
                    out: false,
                };
            }
        }
        SePhase::Vigil {
            lap,
            window,
            pos,
            out: touring,
        } => {
            // window geometry follows the HOME degree, whatever node this
            // round's observation happens at
            let home_deg = se.ports.len() as u32;
            let explicit = ctx.know.d1.is_some();
            let win_len = if explicit {
                2 * ctx.know.delta.unwrap() as u32
            } else {
                2 * home_deg
            };
            // lap length: the padded schedule plus id-many dwell windows
            // (stabilizing); the fixed id schedule (explicit)
            let lap_windows = if explicit {
                se.bits.len() as u32
            } else {
                se.bits.len() as u32 + me.id as u32
            };
            if touring {
                // at the neighbor behind port (pos+1)/2
                let p = ((pos + 1) / 2) as usize;
                se.ports[p - 1].0 = ctx.degree;
                if let Some(w) = find_witness(ctx) {
                    update_sight(&mut se.ports[p - 1], sight_of(&w));
                }
                out.mv = ctx.entry_port;
                let (w2, p2) = advance(window, pos, win_len);
                se.phase = SePhase::Vigil {
                    lap,
                    window: w2,
                    pos: p2,
                    out: false,
                };
                out.mem.program = Program::Se(se);
                return;
            }
            // at home
            if pos == 0 {
                if se_beaten(me, ctx, &se) {
                    out.mem.status = Status::NonCandidate;
                    out.mem.program = Program::Idle;
                    return;
                }
                if window >= lap_windows {
                    if explicit {
                        se.phase = SePhase::HoldVerdict;
                        out.mem.program = Program::Se(se);
                        return;
                    }
                    let sighted = se
                        .ports
                        .iter()
                        .any(|(_, s)| !matches!(s, PortSight::Nothing));
                    let visited = !out.mem.hosted.dfs.is_empty();
                    if sighted || visited || lap >= 2 {
                        se_verdict(me, ctx, out, &se);
                        return;
                    }
                    // nothing found: one more lap on the opposite parity
                    se.phase = SePhase::Gap;
                    out.mem.program = Program::Se(se);
                    return;
                }
            }
            let tour_window = (window as usize) < se.bits.len() && se.bits[window as usize];
            if tour_window && pos % 2 == 0 && pos / 2 < home_deg {
                out.mv = Some((pos / 2 + 1) as usize);
            }
            let went_out = out.mv.is_some();
            let (w2, p2) = advance(window, pos, win_len);
            se.phase = SePhase::Vigil {
                lap,
                window: w2,
                pos: p2,
                out: went_out,
            };
        }
        SePhase::Gap => {
            let lap = 2;
            se.phase = SePhase::Vigil {
                lap,
                window: 0,
                pos: 0,
                out: false,
            };
        }
        SePhase::HoldVerdict => {
            if ctx.round >= ctx.know.d1.unwrap() {
                se_verdict(me, ctx, out, &se);
                return;
            }
        }
    }
    if matches!(out.mem.program, Program::Se(_)) {
        out.mem.program = Program::Se(se);
    }
}

fn se_verdict(me: &AgentState, ctx: &Ctx, out: &mut Outcome, se: &SeProg) {
    let k_eq_n = ctx.know.mode.is_k_equals_n();
    let my_deg = se.ports.len();
    if se_beaten(me, ctx, se) {
        out.mem.status = Status::NonCandidate;
        out.mem.program = Program::Idle;
        return;
    }
    let target: Option<Port> = se
        .ports
        .iter()
        .position(|(_, s)| !matches!(s, PortSight::Nothing))
        .map(|i| i + 1);
    if target.is_none() && !out.mem.hosted.dfs.is_empty() {
        // never saw a neighbor, but a dispersal or an election DFS passed
        // through: this territory already has an active instance
        out.mem.status = Status::NonCandidate;
        out.mem.program = Program::Idle;
        return;
    }
    // local leader
    out.mem.osc_target = target;
    if ctx.know.d1.is_some() {
        // explicit: declaration deferred to d1 (HoldVerdict reached d1 now)
        out.mem.status = Status::LocalLeader;
        out.mem.round_ll = Some(ctx.round);
        if let Some(t) = target {
            out.mem.program = Program::Probe(ProbeProg {
                target_port: t,
                window: 0,
                out: false,
                aligned: false,
            });
        } else {
            // no occupied neighbor: declare at the stage-2 deadline
            out.mem.ge_complete = true;
            out.mem.program = Program::Idle;
        }
        return;
    }
    match target {
        None => {
            if k_eq_n && my_deg > 0 {
                // every neighbor is occupied when k = n; probe port 1 until
                // its occupant shows
                out.mem.status = Status::LocalLeader;
                out.mem.round_ll = Some(ctx.round);
                out.mem.osc_target = Some(1);
                out.mem.program = Program::Probe(ProbeProg {
                    target_port: 1,
                    window: 0,
                    out: false,
                    aligned: false,
                });
            } else {
                finalize_isolated_leader(me, ctx, out);
            }
        }
        Some(t) => {
            out.mem.status = Status::LocalLeader;
            out.mem.round_ll = Some(ctx.round);
            out.mem.program = Program::Probe(ProbeProg {
                target_port: t,
                window: 0,
                out: false,
                aligned: false,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Local-leader probe (oscillator acquisition)
// ---------------------------------------------------------------------------

fn probe_step(me: &AgentState, ctx: &Ctx, out: &mut Outcome, mut p: ProbeProg) {
    if p.out {
        // at the target; resolution did not recruit this round
        out.mv = ctx.entry_port;
        p.out = false;
        p.window += 1;
        out.mem.program = Program::Probe(p);
        return;
    }
    if !p.aligned {
        if ctx.round % 2 == 1 {
            out.mem.program = Program::Probe(p);
            return; // wait for an even round so visits land on odd rounds
        }
        p.aligned = true;
    }
    // drift loop: padded id bits followed by id-many dwell windows
    let period = padded_len(me.id) + me.id as usize;
    let idx = (p.window as usize) % period;
    let bit = idx < padded_len(me.id) && padded_bit(me.id, idx);
    if bit {
        out.mv = Some(p.target_port);
        p.out = true;
    } else {
        p.window += 1;
    }
    out.mem.program = Program::Probe(p);
}

// ---------------------------------------------------------------------------
// DFS driver shared by dispersal, global election, and the MST rank pass
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Nse,
    GeKn,
    GeN,
    MstRank,
}

pub(crate) fn head_step(
    me: &AgentState,
    ctx: &Ctx,
    out: &mut Outcome,
    head: DfsHead,
    flavor: Flavor,
    entry: Option<Port>,
) {
    let inst = head.instance;
    let fresh = matches!(
        head.phase,
        HeadPhase::Forward | HeadPhase::Wait { fresh: true, .. }
    );
    let from_backtrack = matches!(
        head.phase,
        HeadPhase::Back {
            from_backtrack: true
        } | HeadPhase::Wait {
            from_backtrack: true,
            ..
        }
    );
    match lookup_record(ctx, inst) {
        RecordLookup::NotReady => {
            // the node is occupied; its record store is momentarily away.
            // Hold without advancing the confirm counter.
            set_head(out, flavor, DfsHead {
                instance: inst,
                phase: HeadPhase::Wait {
                    tries: 0,
                    fresh,
                    from_backtrack,
                },
                entry,
            });
        }
        RecordLookup::NoWitness => {
            if fresh {
                if matches!(head.phase, HeadPhase::Wait { tries, .. } if tries >= 1) {
                    // empty across two consecutive observations
                    unoccupied_verdict(me, ctx, out, head, flavor, entry);
                } else {
                    set_head(out, flavor, DfsHead {
                        instance: inst,
                        phase: HeadPhase::Wait {
                            tries: 1,
                            fresh: true,
                            from_backtrack: false,
                        },
                        entry,
                    });
                }
            } else {
                bump_wait(out, head, flavor, true);
            }
        }
        RecordLookup::Found(host, rec) => {
            if ge_mark_death(me, ctx, out, &head, flavor, entry) {
                return;
            }
            if mst_stale_death(me, ctx, out, &head, flavor, entry) {
                return;
            }
            if fresh {
                // known node reached through a non-tree edge: bounce back
                out.mv = entry;
                set_head(out, flavor, DfsHead {
                    instance: inst,
                    phase: HeadPhase::Back {
                        from_backtrack: false,
                    },
                    entry: None,
                });
            } else {
                if flavor == Flavor::MstRank {
                    if let HeadPhase::Back { from_backtrack: true }
                    | HeadPhase::Wait {
                        from_backtrack: true,
                        ..
                    } = head.phase
                    {
                        // returning over a tree edge: tell the parent about
                        // its child port
                        mst_tchild(me, ctx, out, host, entry);
                    }
                }
                scan_and_go(me, ctx, out, inst, rec, host, flavor);
            }
        }
        RecordLookup::Missing(host) => {
            if ge_mark_death(me, ctx, out, &head, flavor, entry) {
                return;
            }
            if mst_stale_death(me, ctx, out, &head, flavor, entry) {
                return;
            }
            if fresh || matches!(head.phase, HeadPhase::Start) {
                // new node joins the tree
                let rec = DfsRecord {
                    parent: if matches!(head.phase, HeadPhase::Start) {
                        None
                    } else {
                        entry
                    },
                    next: 1,
                    recent: 0,
                };
                if flavor == Flavor::MstRank {
                    mst_assign_rank(me, ctx, out, host, rec.parent);
                }
                scan_and_go(me, ctx, out, inst, rec, host, flavor);
            } else {
                // our record is momentarily unreachable (host swap): wait
                bump_wait(out, head, flavor, false);
            }
        }
    }
}

fn set_head(out: &mut Outcome, flavor: Flavor, head: DfsHead) {
    match flavor {
        Flavor::Nse => out.mem.program = Program::Nse(head),
        Flavor::GeKn | Flavor::GeN => out.mem.program = Program::Ge(head),
        Flavor::MstRank => {
            if let Program::MstLead(mut p) = out.mem.program.clone() {
                p.stage = MstStage::RankPass(head);
                out.mem.program = Program::MstLead(p);
            }
        }
    }
}

fn bump_wait(out: &mut Outcome, head: DfsHead, flavor: Flavor, keep_fresh_path: bool) {
    let (tries, fresh, fb) = match head.phase {
        HeadPhase::Wait {
            tries,
            fresh,
            from_backtrack,
        } => (tries + 1, fresh && keep_fresh_path, from_backtrack),
        HeadPhase::Forward => (1, keep_fresh_path, false),
        HeadPhase::Back { from_backtrack } => (1, false, from_backtrack),
        HeadPhase::Start => (1, false, false),
    };
    debug_assert!(tries < 8, "host never reappeared");
    set_head(out, flavor, DfsHead {
        instance: head.instance,
        phase: HeadPhase::Wait {
            tries,
            fresh,
            from_backtrack: fb,
        },
        entry: head.entry,
    });
}

/// A global-election head dies on contact with a higher-priority instance's
/// stored records.
fn ge_mark_death(
    me: &AgentState,
    ctx: &Ctx,
    out: &mut Outcome,
    head: &DfsHead,
    flavor: Flavor,
    entry: Option<Port>,
) -> bool {
    if !matches!(flavor, Flavor::GeKn | Flavor::GeN) {
        return false;
    }
    let mine = head.instance.prio();
    let higher = visible_ge_records(ctx)
        .into_iter()
        .any(|k| k.owner != me.id && k.prio() > mine);
    if higher {
        die_ge(me, ctx, out, "yield_to_marks");
        // walk starts next round; this round we may already step back
        if let Program::GoHome(g) = &mut out.mem.program {
            g.back_first = g.back_first.and(entry);
            if let Some(p) = g.back_first.take() {
                out.mv = Some(p);
            }
        }
        return true;
    }
    false
}

/// A stale MST rank pass aborts when it reads a newer tag.
fn mst_stale_death(
    _me: &AgentState,
    ctx: &Ctx,
    out: &mut Outcome,
    head: &DfsHead,
    flavor: Flavor,
    entry: Option<Port>,
) -> bool {
    if flavor != Flavor::MstRank {
        return false;
    }
    let Program::MstLead(p) = &out.mem.program else {
        return false;
    };
    let newer = ctx.others.iter().any(|a| {
        a.mem.home == Some(ctx.node)
            && a.mem.mst.as_ref().map_or(false, |m| m.tag > p.tag)
    });
    if newer {
        out.mem.status = Status::NonCandidate;
        out.mem.mst = None;
        let fresh = matches!(
            head.phase,
            HeadPhase::Forward | HeadPhase::Wait { fresh: true, .. }
        );
        out.mem.program = Program::GoHome(GoHomeProg {
            instance: head.instance,
            back_first: if fresh { entry } else { None },
        });
        out.events.push(EventKind::Meet {
            with: 0,
            what: "mst_subsumed".into(),
        });
        return true;
    }
    false
}

fn mst_assign_rank(me: &AgentState, ctx: &Ctx, out: &mut Outcome, host: AgentId, parent: Option<Port>) {
    if let Program::MstLead(mut p) = out.mem.program.clone() {
        let rank = p.next_rank;
        p.next_rank += 1;
        out.writes.push((
            host,
            WriteOp::Deliver {
                node: ctx.node,
                env: Envelope::MstInit {
                    tag: p.tag,
                    rank,
                    t_parent: parent,
                },
            },
        ));
        let _ = me;
        out.mem.program = Program::MstLead(p);
    }
}

fn mst_tchild(_me: &AgentState, ctx: &Ctx, out: &mut Outcome, host: AgentId, entry: Option<Port>) {
    if let Program::MstLead(p) = &out.mem.program {
        out.writes.push((
            host,
            WriteOp::Deliver {
                node: ctx.node,
                env: Envelope::MstTChild {
                    tag: p.tag,
                    port: entry.expect("backtrack arrival"),
                },
            },
        ));
    }
}

/// Advance the DFS cursor at the current node: move out the next untried
/// port, or backtrack, or finish at the root.
fn scan_and_go(
    me: &AgentState,
    ctx: &Ctx,
    out: &mut Outcome,
    inst: InstanceKey,
    rec: DfsRecord,
    host: AgentId,
    flavor: Flavor,
) {
    let deg = ctx.ports_to.len();
    let mut q = rec.next;
    if Some(q) == rec.parent {
        q += 1;
    }
    if q <= deg {
        let newrec = DfsRecord {
            parent: rec.parent,
            next: q + 1,
            recent: q,
        };
        push_record(me, ctx, out, host, inst, newrec, flavor);
        out.mv = Some(q);
        set_head(out, flavor, DfsHead {
            instance: inst,
            phase: HeadPhase::Forward,
            entry: None,
        });
    } else if let Some(pp) = rec.parent {
        let newrec = DfsRecord {
            parent: rec.parent,
            next: q,
            recent: pp,
        };
        push_record(me, ctx, out, host, inst, newrec, flavor);
        out.mv = Some(pp);
        set_head(out, flavor, DfsHead {
            instance: inst,
            phase: HeadPhase::Back {
                from_backtrack: true,
            },
            entry: None,
        });
    } else {
        root_complete(me, ctx, out, flavor);
    }
}

/// All co-located dispersal members (the same-round merge rule makes every
/// co-located caravan one caravan, whatever instance their snapshots still
/// show).
fn caravan_members(me: &AgentState, ctx: &Ctx) -> Vec<AgentId> {
    let mut members: Vec<AgentId> = ctx
        .others
        .iter()
        .filter(|a| matches!(&a.mem.program, Program::Nse(_)))
        .map(|a| a.id)
        .collect();
    members.push(me.id);
    members.sort_unstable();
    members
}

fn push_record(
    me: &AgentState,
    ctx: &Ctx,
    out: &mut Outcome,
    host: AgentId,
    inst: InstanceKey,
    rec: DfsRecord,
    flavor: Flavor,
) {
    // for dispersal caravans only the minimum-id member writes
    if flavor == Flavor::Nse && me.id != caravan_members(me, ctx)[0] {
        return;
    }
    out.writes.push((
        host,
        WriteOp::PutDfs {
            node: ctx.node,
            instance: inst,
            rec,
        },
    ));
}

fn root_complete(me: &AgentState, ctx: &Ctx, out: &mut Outcome, flavor: Flavor) {
    match flavor {
        Flavor::Nse => {
            // the dispersal exhausted its reachable territory with riders
            // left: impossible while k <= n
            debug_assert!(false, "dispersal exhausted the component with unsettled agents");
            out.mem.program = Program::Idle;
        }
        Flavor::GeKn | Flavor::GeN => {
            // declaration happens via the promote step, at the stage-2
            // deadline in explicit modes and next round otherwise
            out.mem.ge_complete = true;
            out.mem.program = Program::Idle;
            let _ = me;
        }
        Flavor::MstRank => {
            mst::rank_pass_done(me, ctx, out);
        }
    }
}

/// The node proved unoccupied after the one-round confirm wait.
fn unoccupied_verdict(
    me: &AgentState,
    ctx: &Ctx,
    out: &mut Outcome,
    head: DfsHead,
    flavor: Flavor,
    entry: Option<Port>,
) {
    let inst = head.instance;
    match flavor {
        Flavor::GeKn | Flavor::MstRank => {
            // outside the component: back out
            out.mv = entry;
            set_head(out, flavor, DfsHead {
                instance: inst,
                phase: HeadPhase::Back {
                    from_backtrack: false,
                },
                entry: None,
            });
        }
        Flavor::GeN => {
            // k = n: an unoccupied node means a dispersal is still running;
            // abort and return home
            out.mem.status = Status::NonCandidate;
            out.events.push(EventKind::Meet {
                with: 0,
                what: "abort_unoccupied".into(),
            });
            out.mem.program = Program::GoHome(GoHomeProg {
                instance: inst,
                back_first: None,
            });
            out.mv = entry;
        }
        Flavor::Nse => {
            // settle the largest unsettled non-designate here; the designate
            // (the instance initiator) settles last and leads
            let members = caravan_members(me, ctx);
            let designate = inst.owner;
            let settler = members
                .iter()
                .copied()
                .filter(|&x| x != designate)
                .max();
            let rec = DfsRecord {
                parent: entry,
                next: 1,
                recent: 0,
            };
            match settler {
                None => {
                    // the designate reached an unoccupied node alone
                    debug_assert_eq!(members, vec![designate]);
                    out.mem.home = Some(ctx.node);
                    out.mem.hosted.dfs.insert(inst, rec);
                    out.mem.osc_target = entry;
                    if ctx.know.d1.is_some() {
                        out.mem.defer_ll = true;
                        out.mem.program = Program::Idle;
                    } else {
                        out.mem.status = Status::LocalLeader;
                        out.mem.round_ll = Some(ctx.round);
                        out.mem.program = Program::Probe(ProbeProg {
                            target_port: entry.expect("dispersal moved"),
                            window: 0,
                            out: false,
                            aligned: false,
                        });
                    }
                }
                Some(settler) => {
                    // the caravan continues from here in the same round
                    let deg = ctx.ports_to.len();
                    let mut q = rec.next;
                    if Some(q) == rec.parent {
                        q += 1;
                    }
                    let (newrec, mv, phase) = if q <= deg {
                        (
                            DfsRecord {
                                parent: rec.parent,
                                next: q + 1,
                                recent: q,
                            },
                            q,
                            HeadPhase::Forward,
                        )
                    } else {
                        (
                            DfsRecord {
                                parent: rec.parent,
                                next: q,
                                recent: rec.parent.unwrap(),
                            },
                            rec.parent.unwrap(),
                            HeadPhase::Back {
                                from_backtrack: true,
                            },
                        )
                    };
                    if me.id == settler {
                        out.mem.home = Some(ctx.node);
                        out.mem.status = Status::NonCandidate;
                        out.mem.program = Program::Idle;
                        out.mem.hosted.dfs.insert(inst, newrec);
                    } else {
                        out.mv = Some(mv);
                        set_head(out, Flavor::Nse, DfsHead {
                            instance: inst,
                            phase,
                            entry: None,
                        });
                    }
                }
            }
        }
    }
}

fn gohome_step(_me: &AgentState, ctx: &Ctx, out: &mut Outcome, mut g: GoHomeProg) {
    if let Some(p) = g.back_first.take() {
        out.mv = Some(p);
        out.mem.program = Program::GoHome(g);
        return;
    }
    if out.mem.home == Some(ctx.node) {
        out.mem.program = Program::Idle;
        return;
    }
    match lookup_record(ctx, g.instance) {
        RecordLookup::Found(_, rec) => match rec.parent {
            Some(p) => {
                out.mv = Some(p);
                out.mem.program = Program::GoHome(g);
            }
            None => {
                out.mem.program = Program::Idle;
            }
        },
        RecordLookup::NoWitness | RecordLookup::NotReady | RecordLookup::Missing(_) => {
            // wait for the host (periodic roles return within 2 rounds)
            out.mem.program = Program::GoHome(g);
        }
    }
}

fn return_step(me: &AgentState, ctx: &Ctx, out: &mut Outcome, r: ReturnProg) {
    if out.mem.home == Some(ctx.node) {
        match r.then {
            AfterReturn::Settle => {
                out.mem.program = Program::Idle;
            }
            AfterReturn::StartGe => {
                out.mem.program = Program::Ge(DfsHead {
                    instance: InstanceKey {
                        kind: InstanceKind::Ge,
                        round: out.mem.round_ll.unwrap_or(0),
                        owner: me.id,
                    },
                    phase: HeadPhase::Start,
                    entry: None,
                });
            }
        }
        return;
    }
    out.mv = ctx.entry_port;
    out.mem.program = Program::Return(r);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_id_lengths() {
        // "1" -> "110", length 3
        let p = pad_id(1).unwrap();
        assert_eq!(p.padded_bits, vec![true, true, false]);
        assert_eq!(p.padded_bits.len(), 3);
        // "10" -> "1010101010", length 10
        let p = pad_id(2).unwrap();
        assert_eq!(
            p.padded_bits,
            vec![true, false, true, false, true, false, true, false, true, false]
        );
        // "101" (id 5, b=3) -> length 21
        let p = pad_id(5).unwrap();
        assert_eq!(p.padded_bits.len(), 21);
        assert!(pad_id(0).is_none());
    }

    #[test]
    fn padded_bit_matches_materialized() {
        for id in 1..=64u64 {
            let p = pad_id(id).unwrap();
            for (i, &b) in p.padded_bits.iter().enumerate() {
                assert_eq!(padded_bit(id, i), b, "id {id} bit {i}");
            }
        }
    }
}
