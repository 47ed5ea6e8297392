//! MST construction on top of an elected leader: rank assignment over the
//! leader's election tree, token-driven minimum-outgoing-edge selection,
//! sub-component merging with pointer reversal, and overtaking subsumption
//! in stabilizing mode.
//!
//! The token and all merge machinery travel as envelopes relayed member to
//! member: the current holder steps one hop, writes, and returns, so no
//! agent is ever away from its node for two consecutive rounds and
//! confirm-empty verdicts elsewhere stay sound.

use crate::election::{self, Flavor};
use crate::engine::*;
use crate::graph::Port;

/// Inbox intake: adopt newer instances, queue walks, apply attachments.
pub(crate) fn intake(_me: &AgentState, _ctx: &Ctx, out: &mut Outcome) {
    if out.mem.inbox.is_empty() {
        return;
    }
    let mut rest = Vec::new();
    let inbox = std::mem::take(&mut out.mem.inbox);
    for env in inbox {
        match env {
            Envelope::MstInit {
                tag,
                rank,
                t_parent,
            } => {
                let newer = out.mem.mst.as_ref().map_or(true, |m| m.tag < tag);
                let same = out.mem.mst.as_ref().map_or(false, |m| m.tag == tag);
                if newer {
                    out.mem.mst = Some(MstState::new(tag, rank, t_parent));
                    out.mem.task = None;
                    if out.mem.status == Status::Leader {
                        // a newer construction subsumes this leader's
                        out.mem.status = Status::NonCandidate;
                        if matches!(out.mem.program, Program::MstLead(_)) {
                            out.mem.program = Program::Idle;
                        }
                    }
                } else if same {
                    let m = out.mem.mst.as_mut().unwrap();
                    m.rank = rank;
                    m.t_parent = t_parent;
                }
            }
            Envelope::MstTChild { tag, port } => {
                if let Some(m) = &mut out.mem.mst {
                    if m.tag == tag && !m.t_children.contains(&port) {
                        let pos = m.t_children.partition_point(|&c| c < port);
                        m.t_children.insert(pos, port);
                    }
                }
            }
            Envelope::MstWalk { tag, via, walk } => {
                match &out.mem.mst {
                    Some(m) if m.tag == tag => {
                        if out.mem.task.is_none() {
                            out.mem.task = Some(MemberTask {
                                walk,
                                via,
                                micro: Micro::Decide,
                                work_done: false,
                            });
                        } else {
                            rest.push(Envelope::MstWalk { tag, via, walk });
                        }
                    }
                    _ => {} // stale or unknown instance: drop
                }
            }
            Envelope::MstAttach { tag, via } => {
                if let Some(m) = &mut out.mem.mst {
                    if m.tag == tag {
                        m.child_ports.insert(via);
                        m.mst_ports.insert(via);
                    }
                }
            }
        }
    }
    out.mem.inbox = rest;
}

/// MST leader driver.
pub(crate) fn lead_step(me: &AgentState, ctx: &Ctx, out: &mut Outcome, p: MstLeadProg) {
    match p.stage.clone() {
        MstStage::Recruit { out: probing } => {
            let Some(target) = out.mem.osc_target else {
                // no occupied neighbor was ever seen: single-node component
                out.mem.mst = Some(MstState::new(p.tag, 1, None));
                out.mem.program = Program::Idle;
                return;
            };
            if !probing && out.mem.osc_engaged {
                // previous custody has not been handed back yet
                return;
            }
            if probing {
                // at the target node
                let outranked = ctx.others.iter().any(|a| {
                    matches!(&a.mem.program, Program::MstLead(q)
                        if matches!(q.stage, MstStage::Recruit { out: true }) && q.tag > p.tag)
                });
                let host = ctx.others.iter().find(|a| {
                    a.mem.home == Some(ctx.node)
                        && a.mem.status == Status::NonCandidate
                        && a.mem.osc.is_none()
                        && !a.mem.osc_engaged
                });
                if !outranked {
                    if let Some(host) = host {
                        let inst = InstanceKey {
                            kind: InstanceKind::MstRank,
                            round: p.tag.0,
                            owner: me.id,
                        };
                        let mut records = NodeRecords {
                            dfs: std::mem::take(&mut out.mem.hosted.dfs),
                            pending: std::mem::take(&mut out.mem.hosted.pending),
                        };
                        records.dfs.insert(
                            inst,
                            DfsRecord {
                                parent: None,
                                next: 1,
                                recent: 0,
                            },
                        );
                        out.writes.push((
                            host.id,
                            WriteOp::TakeDuty {
                                duty: OscDuty {
                                    served_node: out.mem.home.unwrap(),
                                    served_port: ctx.entry_port.unwrap(),
                                    owner: me.id,
                                    ending: false,
                                },
                                records,
                            },
                        ));
                        out.mem.osc_engaged = true;
                        out.mv = ctx.entry_port;
                        let mut p2 = p;
                        p2.stage = MstStage::RankPass(DfsHead {
                            instance: inst,
                            phase: HeadPhase::Start,
                            entry: None,
                        });
                        out.mem.program = Program::MstLead(p2);
                        return;
                    }
                }
                out.mv = ctx.entry_port;
                let mut p2 = p;
                p2.stage = MstStage::Recruit { out: false };
                out.mem.program = Program::MstLead(p2);
            } else {
                if ctx.round % 2 == 1 {
                    return; // align so visits land on odd rounds
                }
                out.mv = Some(target);
                let mut p2 = p;
                p2.stage = MstStage::Recruit { out: true };
                out.mem.program = Program::MstLead(p2);
            }
        }
        MstStage::RankPass(head) => {
            election::head_step(me, ctx, out, head, Flavor::MstRank, ctx.entry_port);
        }
        MstStage::Run => {}
    }
}

/// Rank pass finished at the root: initialize the leader's own state and
/// start phase 1.
pub(crate) fn rank_pass_done(_me: &AgentState, _ctx: &Ctx, out: &mut Outcome) {
    let Program::MstLead(mut p) = out.mem.program.clone() else {
        return;
    };
    p.comp_size = p.next_rank - 1;
    p.my_size = 1;
    out.mem.mst = Some(MstState::new(p.tag, 1, None));
    if p.comp_size <= 1 {
        out.mem.program = Program::Idle;
        return;
    }
    p.stage = MstStage::Run;
    out.mem.task = Some(MemberTask {
        walk: Walk {
            phase: 1,
            comp_size: p.comp_size,
            gain: 0,
            auth_rank: 1,
            kind: WalkKind::TokenSeek {
                rank: 1,
                phase_end: false,
            },
        },
        via: None,
        micro: Micro::Decide,
        work_done: false,
    });
    out.mem.program = Program::MstLead(p);
}

fn next_rank(after: u32, comp: u32) -> u32 {
    if after >= comp {
        1
    } else {
        after + 1
    }
}

enum Hop {
    Down(Port),
    Up(Port),
    Done,
}

/// Euler tour step over a rooted tree given the arrival port.
fn euler_next(parent: Option<Port>, children: &[Port], came: Option<Port>) -> Hop {
    let from_child = came.map_or(false, |c| children.contains(&c));
    let after = if from_child { came } else { None };
    let next = children
        .iter()
        .copied()
        .find(|&c| after.map_or(true, |a| c > a));
    match next {
        Some(c) => Hop::Down(c),
        None => match parent {
            Some(p) => Hop::Up(p),
            None => Hop::Done,
        },
    }
}

fn sorted_children(m: &MstState) -> Vec<Port> {
    m.child_ports.iter().copied().collect()
}

/// Executes the current micro-action of the member task.
pub(crate) fn task_step(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    for _ in 0..8 {
        let Some(task) = out.mem.task.clone() else {
            return;
        };
        if out.mv.is_some() {
            return;
        }
        match task.micro {
            Micro::Decide => {
                walk_decide(me, ctx, out);
                // loop: the decision may have produced a fresh micro to run
                if let Some(t2) = &out.mem.task {
                    if matches!(t2.micro, Micro::Decide) && out.mv.is_none() {
                        return; // waiting (no progress possible this round)
                    }
                } else {
                    return;
                }
            }
            Micro::Probe { .. } => {
                probe_micro(me, ctx, out);
                return;
            }
            Micro::Carry { .. } => {
                carry_micro(me, ctx, out);
                return;
            }
        }
    }
}

fn start_carry(out: &mut Outcome, port: Port, walk: Walk, then: Option<Walk>) {
    let tag = out.mem.mst.as_ref().unwrap().tag;
    if let Some(task) = &mut out.mem.task {
        task.walk = walk.clone();
        task.micro = Micro::Carry {
            port,
            env: Envelope::MstWalk {
                tag,
                via: None,
                walk,
            },
            out: false,
            tries: 0,
            then,
        };
    }
}

fn carry_micro(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    let Some(task) = out.mem.task.clone() else {
        return;
    };
    let Micro::Carry {
        port,
        env,
        out: at_target,
        tries,
        then,
    } = task.micro.clone()
    else {
        return;
    };
    if !at_target {
        out.mv = Some(port);
        if let Some(t) = &mut out.mem.task {
            t.micro = Micro::Carry {
                port,
                env,
                out: true,
                tries,
                then,
            };
        }
        return;
    }
    // standing at the recipient's node
    let host = ctx
        .others
        .iter()
        .find(|a| a.mem.home == Some(ctx.node));
    match host {
        Some(h) => {
            let env_filled = match env {
                Envelope::MstWalk { tag, walk, .. } => Envelope::MstWalk {
                    tag,
                    via: ctx.entry_port,
                    walk,
                },
                Envelope::MstAttach { tag, .. } => Envelope::MstAttach {
                    tag,
                    via: ctx.entry_port.unwrap(),
                },
                other => other,
            };
            out.writes.push((
                h.id,
                WriteOp::Deliver {
                    node: ctx.node,
                    env: env_filled,
                },
            ));
            out.mv = ctx.entry_port;
            match then {
                Some(cont) => {
                    if let Some(t) = &mut out.mem.task {
                        t.walk = cont;
                        t.via = None;
                        t.micro = Micro::Decide;
                        t.work_done = false;
                    }
                }
                None => out.mem.task = None,
            }
        }
        None => {
            if tries >= 8 {
                out.events.push(EventKind::Meet {
                    with: 0,
                    what: "mst_walk_stranded".into(),
                });
                out.mem.task = None;
                out.mv = ctx.entry_port;
                return;
            }
            let _ = me;
            if let Some(t) = &mut out.mem.task {
                t.micro = Micro::Carry {
                    port,
                    env,
                    out: true,
                    tries: tries + 1,
                    then,
                };
            }
        }
    }
}

/// Local minimum-outgoing-edge scan: probe cached candidates in edge order,
/// pruning edges that turned internal or lead outside the component.
fn probe_micro(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    let Some(task) = out.mem.task.clone() else {
        return;
    };
    let Micro::Probe {
        cand,
        attempt,
        out: at_target,
        dwell,
    } = task.micro
    else {
        return;
    };
    let Some(m) = out.mem.mst.clone() else {
        out.mem.task = None;
        return;
    };
    let cache = m.moe_cache.clone().unwrap_or_default();

    if dwell {
        // one-round pause flips the probe's parity
        if let Some(t) = &mut out.mem.task {
            t.micro = Micro::Probe {
                cand,
                attempt,
                out: false,
                dwell: false,
            };
        }
        return;
    }
    if !at_target {
        if cand >= cache.len() {
            finish_probe(me, ctx, out, None);
            return;
        }
        out.mv = Some(cache[cand]);
        if let Some(t) = &mut out.mem.task {
            t.micro = Micro::Probe {
                cand,
                attempt,
                out: true,
                dwell: false,
            };
        }
        return;
    }
    // at the other endpoint of candidate edge `cache[cand]`
    out.mv = ctx.entry_port;
    let host = ctx.others.iter().find(|a| a.mem.home == Some(ctx.node));
    let osc_here = ctx.others.iter().any(|a| {
        a.mem
            .osc
            .as_ref()
            .map_or(false, |d| d.served_node == ctx.node)
    });
    let my_port = cache[cand];
    let set_micro = |out: &mut Outcome, micro: Micro| {
        if let Some(t) = &mut out.mem.task {
            t.micro = micro;
        }
    };
    match host {
        Some(h) => match &h.mem.mst {
            Some(hm) if hm.tag == m.tag => {
                if hm.sub_rank == m.sub_rank {
                    // internal edge: never a candidate again
                    let mut m2 = m.clone();
                    m2.moe_cache.as_mut().unwrap().remove(cand);
                    out.mem.mst = Some(m2);
                    set_micro(out, Micro::Probe {
                        cand,
                        attempt: 0,
                        out: false,
                        dwell: false,
                    });
                } else {
                    // outgoing: cache order makes this the local minimum
                    let key = &ctx.edge_keys[ctx.entry_port.unwrap() - 1];
                    let moe = Moe {
                        weight: key.weight.clone(),
                        lo: key.lo,
                        hi: key.hi,
                        port_at_lo: key.port_at_lo,
                        owner_rank: m.rank,
                        owner_port: my_port,
                        my_sub_rank: m.sub_rank,
                        other_rank: hm.sub_rank,
                    };
                    finish_probe(me, ctx, out, Some(moe));
                }
            }
            _ => {
                // different instance or unranked member: unavailable now
                set_micro(out, Micro::Probe {
                    cand: cand + 1,
                    attempt: 0,
                    out: false,
                    dwell: false,
                });
            }
        },
        None if osc_here => {
            // a vacated home: its member is away; skip this turn
            set_micro(out, Micro::Probe {
                cand: cand + 1,
                attempt: 0,
                out: false,
                dwell: false,
            });
        }
        None => {
            if attempt == 0 {
                set_micro(out, Micro::Probe {
                    cand,
                    attempt: 1,
                    out: false,
                    dwell: true,
                });
            } else {
                // empty at both parities: unoccupied, outside the component
                let mut m2 = m.clone();
                m2.moe_cache.as_mut().unwrap().remove(cand);
                out.mem.mst = Some(m2);
                set_micro(out, Micro::Probe {
                    cand,
                    attempt: 0,
                    out: false,
                    dwell: false,
                });
            }
        }
    }
}

fn finish_probe(_me: &AgentState, _ctx: &Ctx, out: &mut Outcome, local: Option<Moe>) {
    let Some(task) = &mut out.mem.task else {
        return;
    };
    if let WalkKind::GatherDown { best } = &mut task.walk.kind {
        let better = match (&best, &local) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(b), Some(l)) => l.key() < b.key(),
        };
        if better {
            *best = local;
        }
    }
    task.work_done = true;
    task.micro = Micro::Decide;
}

/// Walk state machine: token circulation, gather, locate, merge, reversal,
/// broadcast. Transitions loop within a round until a move or wait occurs.
fn walk_decide(me: &AgentState, ctx: &Ctx, out: &mut Outcome) {
    let Some(task) = out.mem.task.clone() else {
        return;
    };
    let Some(m) = out.mem.mst.clone() else {
        out.mem.task = None;
        return;
    };
    let w = task.walk.clone();
    match w.kind.clone() {
        WalkKind::TokenSeek { rank, phase_end } => {
            if m.rank == rank {
                out.events.push(EventKind::TokenPass {
                    tag: m.tag,
                    phase: w.phase,
                    rank,
                });
                let mut w2 = w.clone();
                if phase_end {
                    // the token is back at the leader
                    if let Program::MstLead(mut lp) = out.mem.program.clone() {
                        lp.my_size += w2.gain;
                        if let Some(mm) = &mut out.mem.mst {
                            mm.phases = w2.phase;
                        }
                        if lp.my_size >= lp.comp_size {
                            out.mem.task = None;
                            out.mem.program = Program::Idle;
                            return;
                        }
                        w2.phase += 1;
                        w2.gain = 0;
                        out.mem.program = Program::MstLead(lp);
                    } else {
                        // stale walk at a non-leader: drop
                        out.mem.task = None;
                        return;
                    }
                }
                if m.rank > m.sub_rank {
                    // a lower-ranked member of my sub-component acts for it
                    let next = next_rank(m.rank, w2.comp_size);
                    w2.auth_rank = m.rank;
                    w2.kind = WalkKind::TokenSeek {
                        rank: next,
                        phase_end: next == 1,
                    };
                    if let Some(t) = &mut out.mem.task {
                        t.walk = w2;
                        t.via = None;
                    }
                } else {
                    w2.auth_rank = m.rank;
                    w2.kind = WalkKind::GatherUp;
                    if let Some(t) = &mut out.mem.task {
                        t.walk = w2;
                        t.via = None;
                        t.work_done = false;
                    }
                }
            } else {
                match euler_next(m.t_parent, &m.t_children, task.via) {
                    Hop::Down(p) | Hop::Up(p) => start_carry(out, p, w, None),
                    Hop::Done => {
                        out.events.push(EventKind::Meet {
                            with: 0,
                            what: "token_lost".into(),
                        });
                        out.mem.task = None;
                    }
                }
            }
        }
        WalkKind::GatherUp => {
            match m.parent_port {
                Some(pp) => start_carry(out, pp, w, None),
                None => {
                    let mut w2 = w;
                    w2.kind = WalkKind::GatherDown { best: None };
                    if let Some(t) = &mut out.mem.task {
                        t.walk = w2;
                        t.via = None;
                        t.work_done = false;
                    }
                }
            }
        }
        WalkKind::GatherDown { best } => {
            let first_visit = task.via.is_none() || task.via == m.parent_port;
            if first_visit && !task.work_done {
                // build the candidate cache once, then scan
                if m.moe_cache.is_none() {
                    let mut ports: Vec<Port> = (1..=ctx.degree).collect();
                    ports.sort_by_key(|&p| ctx.edge_keys[p - 1].clone());
                    let mut m2 = m.clone();
                    m2.moe_cache = Some(ports);
                    out.mem.mst = Some(m2);
                }
                if let Some(t) = &mut out.mem.task {
                    t.micro = Micro::Probe {
                        cand: 0,
                        attempt: 0,
                        out: false,
                        dwell: false,
                    };
                }
                // the probe micro runs from the task_step loop
                probe_micro(me, ctx, out);
                return;
            }
            match euler_next(m.parent_port, &sorted_children(&m), task.via) {
                Hop::Down(p) | Hop::Up(p) => start_carry(out, p, w, None),
                Hop::Done => {
                    let mut w2 = w;
                    match best {
                        None => {
                            // no outgoing edge: my sub spans the component
                            let next = next_rank(w2.auth_rank, w2.comp_size);
                            w2.kind = WalkKind::TokenSeek {
                                rank: next,
                                phase_end: next == 1,
                            };
                        }
                        Some(b) => {
                            w2.kind = WalkKind::Locate { best: b };
                        }
                    }
                    if let Some(t) = &mut out.mem.task {
                        t.walk = w2;
                        t.via = None;
                    }
                }
            }
        }
        WalkKind::Locate { best } => {
            if m.rank == best.owner_rank {
                merge_begin(me, ctx, out, w, best, m);
            } else {
                match euler_next(m.parent_port, &sorted_children(&m), task.via) {
                    Hop::Down(p) | Hop::Up(p) => start_carry(out, p, w, None),
                    Hop::Done => {
                        out.events.push(EventKind::Meet {
                            with: 0,
                            what: "moe_owner_lost".into(),
                        });
                        out.mem.task = None;
                    }
                }
            }
        }
        WalkKind::MergeCross { best } => {
            // I am the other endpoint: my sub-component is absorbed
            let via = task.via.expect("merge arrives over the MOE");
            let mut m2 = m.clone();
            let old = m2.parent_port;
            m2.parent_port = Some(via);
            if let Some(o) = old {
                m2.child_ports.insert(o);
                m2.child_ports.remove(&via);
            }
            m2.mst_ports.insert(via);
            out.mem.mst = Some(m2.clone());
            let mut w2 = w;
            match old {
                Some(o) => {
                    w2.kind = WalkKind::ReverseWave {
                        best,
                        dir: MergeDir::AbsorbOther,
                        origin_rank: m2.rank,
                    };
                    start_carry(out, o, w2, None);
                }
                None => {
                    w2.kind = WalkKind::Broadcast {
                        new_rank: best.my_sub_rank,
                        best,
                        dir: MergeDir::AbsorbOther,
                        count: 0,
                        origin_rank: m2.rank,
                    };
                    if let Some(t) = &mut out.mem.task {
                        t.walk = w2;
                        t.via = None;
                    }
                }
            }
        }
        WalkKind::ReverseWave {
            best,
            dir,
            origin_rank,
        } => {
            let via = task.via.expect("reversal travels the old parent chain");
            let mut m2 = m.clone();
            m2.child_ports.remove(&via);
            let old = m2.parent_port;
            m2.parent_port = Some(via);
            out.mem.mst = Some(m2);
            let mut w2 = w;
            match old {
                Some(o) => start_carry(out, o, w2, None),
                None => {
                    w2.kind = WalkKind::ReverseAck {
                        best,
                        dir,
                        stop_rank: origin_rank,
                    };
                    start_carry(out, via, w2, None);
                }
            }
        }
        WalkKind::ReverseAck {
            best,
            dir,
            stop_rank,
        } => {
            if m.rank == stop_rank {
                let new_rank = match dir {
                    MergeDir::AbsorbOther => best.my_sub_rank,
                    MergeDir::AbsorbSelf => best.other_rank,
                };
                let mut w2 = w;
                w2.kind = WalkKind::Broadcast {
                    best,
                    dir,
                    new_rank,
                    count: 0,
                    origin_rank: stop_rank,
                };
                if let Some(t) = &mut out.mem.task {
                    t.walk = w2;
                    t.via = None;
                }
            } else {
                start_carry(out, m.parent_port.expect("ack follows new parents"), w, None);
            }
        }
        WalkKind::Broadcast {
            best,
            dir,
            new_rank,
            mut count,
            origin_rank,
        } => {
            let at_origin = m.rank == origin_rank;
            let first_visit = task.via.is_none() || (!at_origin && task.via == m.parent_port);
            let mut m2 = m.clone();
            if first_visit {
                m2.sub_rank = new_rank;
                m2.moe_cache = None; // membership changed: candidates reset
                count += 1;
                out.mem.mst = Some(m2.clone());
            }
            let parent_eff = if at_origin { None } else { m2.parent_port };
            let mut w2 = w.clone();
            w2.kind = WalkKind::Broadcast {
                best: best.clone(),
                dir,
                new_rank,
                count,
                origin_rank,
            };
            match euler_next(parent_eff, &sorted_children(&m2), task.via) {
                Hop::Down(p) | Hop::Up(p) => start_carry(out, p, w2, None),
                Hop::Done => {
                    debug_assert!(at_origin);
                    match dir {
                        MergeDir::AbsorbOther => {
                            // back over the MOE with the absorbed size
                            let mut w3 = w2;
                            w3.kind = WalkKind::CrossBack { absorbed: count };
                            start_carry(
                                out,
                                m2.parent_port.expect("absorbed root hangs on the MOE"),
                                w3,
                                None,
                            );
                        }
                        MergeDir::AbsorbSelf => {
                            // notify the absorber's endpoint, then continue
                            // the token from here
                            let gain_add = if best.other_rank == 1 { count } else { 0 };
                            let next = next_rank(w2.auth_rank, w2.comp_size);
                            let cont = Walk {
                                phase: w2.phase,
                                comp_size: w2.comp_size,
                                gain: w2.gain + gain_add,
                                auth_rank: w2.auth_rank,
                                kind: WalkKind::TokenSeek {
                                    rank: next,
                                    phase_end: next == 1,
                                },
                            };
                            let tag = m2.tag;
                            if let Some(t) = &mut out.mem.task {
                                t.micro = Micro::Carry {
                                    port: best.owner_port,
                                    env: Envelope::MstAttach { tag, via: 0 },
                                    out: false,
                                    tries: 0,
                                    then: Some(cont),
                                };
                            }
                        }
                    }
                }
            }
        }
        WalkKind::CrossBack { absorbed } => {
            // back at the MOE owner after absorbing the other side
            let via = task.via.expect("crossback arrives over the MOE");
            let mut m2 = m.clone();
            m2.child_ports.insert(via);
            m2.mst_ports.insert(via);
            out.mem.mst = Some(m2.clone());
            let mut w2 = w;
            if m2.sub_rank == 1 {
                w2.gain += absorbed;
            }
            let next = next_rank(w2.auth_rank, w2.comp_size);
            w2.kind = WalkKind::TokenSeek {
                rank: next,
                phase_end: next == 1,
            };
            if let Some(t) = &mut out.mem.task {
                t.walk = w2;
                t.via = None;
            }
        }
    }
}

/// At the MOE owner: pick the merge direction by sub-component rank and
/// start the pointer adjustments.
fn merge_begin(_me: &AgentState, _ctx: &Ctx, out: &mut Outcome, w: Walk, best: Moe, m: MstState) {
    debug_assert_ne!(best.my_sub_rank, best.other_rank);
    out.events.push(EventKind::Merge {
        tag: m.tag,
        phase: w.phase,
        winner_rank: best.my_sub_rank.min(best.other_rank),
        absorbed_rank: best.my_sub_rank.max(best.other_rank),
    });
    if best.my_sub_rank < best.other_rank {
        // absorb the other side: cross the MOE and reverse over there
        let mut w2 = w;
        w2.kind = WalkKind::MergeCross { best: best.clone() };
        start_carry(out, best.owner_port, w2, None);
    } else {
        // absorb my own side into theirs: re-root my sub at me
        let mut m2 = m.clone();
        let old = m2.parent_port;
        m2.parent_port = Some(best.owner_port);
        if let Some(o) = old {
            m2.child_ports.insert(o);
        }
        m2.mst_ports.insert(best.owner_port);
        out.mem.mst = Some(m2.clone());
        let mut w2 = w;
        match old {
            Some(o) => {
                w2.kind = WalkKind::ReverseWave {
                    best,
                    dir: MergeDir::AbsorbSelf,
                    origin_rank: m2.rank,
                };
                start_carry(out, o, w2, None);
            }
            None => {
                w2.kind = WalkKind::Broadcast {
                    new_rank: best.other_rank,
                    best,
                    dir: MergeDir::AbsorbSelf,
                    count: 0,
                    origin_rank: m2.rank,
                };
                if let Some(t) = &mut out.mem.task {
                    t.walk = w2;
                    t.via = None;
                }
            }
        }
    }
}
