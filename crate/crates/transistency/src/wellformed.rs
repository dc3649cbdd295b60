//! Legality rules for ELT candidate executions: ghost placement, TLB
//! sourcing, remap fan-out, and coherence-order structure. The checker runs
//! these before judging an execution; synthesis only ever produces graphs
//! that pass them.

use std::collections::{BTreeMap, BTreeSet};

use crate::relgraph::{Event, EventId, EventKind, ExecutionGraph, Src, Va};

/// Identifier of one of the closed list of well-formedness rules.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct WfRule(pub u8);

impl std::fmt::Display for WfRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "WF{}", self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WfViolation {
    pub rule: WfRule,
    pub events: Vec<EventId>,
    pub message: String,
}

impl std::fmt::Display for WfViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

fn violation(rule: u8, events: Vec<EventId>, message: impl Into<String>) -> WfViolation {
    WfViolation { rule: WfRule(rule), events, message: message.into() }
}

/// Index of an event within its thread's po row, for non-ghost events.
fn po_index(g: &ExecutionGraph) -> BTreeMap<EventId, usize> {
    let mut idx = BTreeMap::new();
    for row in g.po.values() {
        for (i, &e) in row.iter().enumerate() {
            idx.insert(e, i);
        }
    }
    idx
}

/// The po position an event occupies for ordering checks: ghosts sit at
/// their invoker's index.
fn anchor_index(g: &ExecutionGraph, idx: &BTreeMap<EventId, usize>, e: EventId) -> Option<usize> {
    if let Some(&i) = idx.get(&e) {
        return Some(i);
    }
    g.ghost.get(&e).and_then(|inv| idx.get(inv)).copied()
}

/// True when an `invlpg` to `va` sits strictly between po positions `lo` and
/// `hi` on thread `t` (exclusive bounds).
fn invlpg_between(g: &ExecutionGraph, t: crate::relgraph::ThreadId, va: Va, lo: usize, hi: usize) -> bool {
    let row = match g.po.get(&t) {
        Some(r) => r,
        None => return false,
    };
    row.iter().enumerate().any(|(i, &e)| {
        i > lo
            && i < hi
            && g.event(e).kind == EventKind::Invlpg
            && g.event(e).va == Some(va)
    })
}

/// Validates `g` against the full rule list, returning every violation.
/// WF9 (useless spurious invalidations) is a synthesis-time filter, not a
/// checker error; see [`spurious_invlpg_useful`].
pub fn validate(g: &ExecutionGraph) -> Vec<WfViolation> {
    let mut out = Vec::new();
    let idx = po_index(g);

    // WF1: po is a strict total order per thread over non-ghost events.
    let mut seen_in_po: BTreeSet<EventId> = BTreeSet::new();
    for (&t, row) in &g.po {
        for &e in row {
            match g.events.get(&e) {
                None => out.push(violation(1, vec![e], format!("po references unknown {e}"))),
                Some(ev) => {
                    if ev.thread != t {
                        out.push(violation(1, vec![e], format!("{e} listed under foreign thread")));
                    }
                    if ev.kind.is_ghost() {
                        out.push(violation(1, vec![e], format!("ghost {e} appears in po")));
                    }
                }
            }
            if !seen_in_po.insert(e) {
                out.push(violation(1, vec![e], format!("{e} appears twice in po")));
            }
        }
    }
    for (&e, ev) in &g.events {
        if !ev.kind.is_ghost() && !seen_in_po.contains(&e) {
            out.push(violation(1, vec![e], format!("non-ghost {e} missing from po")));
        }
    }

    // WF2: location discipline per kind.
    for (&e, ev) in &g.events {
        let ok = match ev.kind {
            EventKind::Fence => ev.va.is_none(),
            _ => ev.va.is_some(),
        };
        if !ok {
            out.push(violation(2, vec![e], format!("{e} has a malformed location operand")));
        }
    }

    // WF13: relation endpoint signatures.
    for &(p, i) in &g.remap {
        let ok = g.events.get(&p).is_some_and(|e| matches!(e.kind, EventKind::PteWrite { .. }))
            && g.events.get(&i).is_some_and(|e| e.kind == EventKind::Invlpg);
        if !ok {
            out.push(violation(13, vec![p, i], "remap must relate a PTE write to an invlpg"));
        }
    }
    for (&gh, &inv) in &g.ghost {
        let ok = g.events.get(&gh).is_some_and(|e| e.kind.is_ghost())
            && g.events.get(&inv).is_some_and(|e| !e.kind.is_ghost());
        if !ok {
            out.push(violation(13, vec![gh, inv], "ghost must relate a ghost to a non-ghost"));
        }
    }
    for (&r, _) in &g.rf {
        if !g.events.get(&r).is_some_and(|e| e.kind.is_read()) {
            out.push(violation(13, vec![r], format!("rf target {r} is not a read")));
        }
    }

    // WF3: rf functional with matching coordinates; co a strict total order
    // per location over all writes to it.
    for (&r, &src) in &g.rf {
        if let Src::Ev(w) = src {
            match g.events.get(&w) {
                None => out.push(violation(3, vec![r, w], "rf source does not exist")),
                Some(we) => {
                    if !we.kind.is_write() {
                        out.push(violation(3, vec![r, w], "rf source is not a write"));
                    } else if g.coord(r) != g.coord(w) || g.coord(r).is_none() {
                        out.push(violation(3, vec![w, r], "rf relates different locations"));
                    }
                }
            }
        }
    }
    check_total_per_location(
        g,
        &g.co,
        |e| e.kind.is_write(),
        |id| g.coord(id),
        3,
        "co",
        &mut out,
    );

    // WF4: ghost invocation structure.
    for (&gh, &inv) in &g.ghost {
        let (Some(ge), Some(ie)) = (g.events.get(&gh), g.events.get(&inv)) else { continue };
        if ge.thread != ie.thread {
            out.push(violation(4, vec![gh, inv], "ghost runs on a different thread than its invoker"));
        }
        match ge.kind {
            EventKind::DirtyBitWrite => {
                if ie.kind != EventKind::UserWrite {
                    out.push(violation(4, vec![gh, inv], "dirty-bit write invoked by a non-write"));
                }
            }
            EventKind::PtWalk => {
                if !ie.kind.is_user_data() {
                    out.push(violation(4, vec![gh, inv], "walk invoked by a non-memory event"));
                }
            }
            _ => {}
        }
    }
    let mut walks_of: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
    let mut dbs_of: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
    for (&gh, &inv) in &g.ghost {
        match g.events.get(&gh).map(|e| e.kind) {
            Some(EventKind::PtWalk) => walks_of.entry(inv).or_default().push(gh),
            Some(EventKind::DirtyBitWrite) => dbs_of.entry(inv).or_default().push(gh),
            _ => {}
        }
    }
    for (&e, ev) in &g.events {
        match ev.kind {
            EventKind::PtWalk | EventKind::DirtyBitWrite => {
                if !g.ghost.contains_key(&e) {
                    out.push(violation(4, vec![e], format!("ghost {e} has no invoker")));
                }
            }
            EventKind::UserWrite => {
                if dbs_of.get(&e).map_or(0, Vec::len) != 1 {
                    out.push(violation(4, vec![e], format!("{e} must invoke exactly one dirty-bit write")));
                }
                if walks_of.get(&e).map_or(0, Vec::len) > 1 {
                    out.push(violation(4, vec![e], format!("{e} invokes more than one walk")));
                }
            }
            EventKind::UserRead => {
                if walks_of.get(&e).map_or(0, Vec::len) > 1 {
                    out.push(violation(4, vec![e], format!("{e} invokes more than one walk")));
                }
                if dbs_of.contains_key(&e) {
                    out.push(violation(4, vec![e], format!("read {e} invokes a dirty-bit write")));
                }
            }
            EventKind::PteWrite { .. } | EventKind::Invlpg | EventKind::Fence => {
                if dbs_of.contains_key(&e) || walks_of.contains_key(&e) {
                    out.push(violation(4, vec![e], format!("{e} may not invoke ghosts")));
                }
            }
        }
    }

    // Ghost walks and dirty-bit writes touch the PTE cell of their invoker's VA.
    for (&gh, &inv) in &g.ghost {
        let (Some(ge), Some(ie)) = (g.events.get(&gh), g.events.get(&inv)) else { continue };
        if ge.kind.is_ghost() && ge.va != ie.va {
            out.push(violation(6, vec![gh, inv], "ghost addresses a foreign PTE cell"));
        }
    }

    // WF5: translation sourcing of user data events.
    for (&e, ev) in &g.events {
        if !ev.kind.is_user_data() {
            continue;
        }
        let Some(&w) = g.rf_ptw.get(&e) else {
            out.push(violation(5, vec![e], format!("{e} has no TLB source walk")));
            continue;
        };
        let Some(we) = g.events.get(&w) else {
            out.push(violation(5, vec![e, w], "TLB source walk does not exist"));
            continue;
        };
        if we.kind != EventKind::PtWalk {
            out.push(violation(5, vec![e, w], "TLB source is not a walk"));
            continue;
        }
        let Some(&inv) = g.ghost.get(&w) else { continue };
        let inv_ev = g.event(inv);
        if inv_ev.thread != ev.thread {
            out.push(violation(5, vec![e, w], "walk invoked on a foreign thread"));
        }
        if we.va != ev.va {
            out.push(violation(5, vec![e, w], "walk loads a mapping for a different VA"));
        }
        let (Some(&ei), Some(ii)) = (idx.get(&e), anchor_index(g, &idx, w)) else { continue };
        if inv != e {
            if ii >= ei {
                out.push(violation(5, vec![e, w], "walk invoker does not precede its user"));
            } else if let Some(va) = ev.va {
                if invlpg_between(g, ev.thread, va, ii, ei) {
                    out.push(violation(5, vec![e, w], "stale TLB entry used across an invlpg"));
                }
            }
        }
        if let Some(own) = walks_of.get(&e).and_then(|v| v.first()) {
            if *own != w {
                out.push(violation(5, vec![e, w], "event ignores the walk it invoked"));
            }
        }
        // The walk's loaded mapping is the user's mapping source.
        if g.rf_pa.get(&e) != g.rf_pa.get(&w) {
            out.push(violation(5, vec![e, w], "user and its walk disagree on the mapping source"));
        }
    }

    // WF6: mapping sources exist and match the PTE cell.
    for (&e, ev) in &g.events {
        let needs_src = ev.kind.is_user_data() || ev.kind == EventKind::PtWalk;
        if !needs_src {
            continue;
        }
        match g.rf_pa.get(&e) {
            None => out.push(violation(6, vec![e], format!("{e} has no mapping source"))),
            Some(Src::Init) => {}
            Some(Src::Ev(p)) => match g.events.get(p) {
                Some(pe) if matches!(pe.kind, EventKind::PteWrite { .. }) => {
                    if pe.va != ev.va {
                        out.push(violation(6, vec![e, *p], "mapping source targets a different VA"));
                    }
                }
                _ => out.push(violation(6, vec![e], "mapping source is not a PTE write")),
            },
        }
    }
    // A walk's value source must denote the mapping it loads.
    for (&r, &src) in &g.rf {
        if g.events.get(&r).map(|e| e.kind) != Some(EventKind::PtWalk) {
            continue;
        }
        let loaded = g.rf_pa.get(&r).copied();
        let denoted = match src {
            Src::Init => Some(Src::Init),
            Src::Ev(w) => match g.events.get(&w).map(|e| e.kind) {
                Some(EventKind::PteWrite { .. }) => Some(Src::Ev(w)),
                Some(EventKind::DirtyBitWrite) => {
                    g.ghost.get(&w).and_then(|inv| g.rf_pa.get(inv)).copied()
                }
                _ => None,
            },
        };
        if loaded.is_some() && denoted.is_some() && loaded != denoted {
            out.push(violation(6, vec![r], "walk value source contradicts its loaded mapping"));
        }
    }

    // WF7: co_pa a strict total order over PTE writes per target PA.
    check_total_per_location(
        g,
        &g.co_pa,
        |e| matches!(e.kind, EventKind::PteWrite { .. }),
        |id| match g.event(id).kind {
            EventKind::PteWrite { new_pa } => Some(crate::relgraph::Coord::Phys(new_pa)),
            _ => None,
        },
        7,
        "co_pa",
        &mut out,
    );

    // WF8: remap fan-out. The same-thread invalidation immediately follows
    // its PTE write; remote threads that access the remapped VA carry
    // exactly one invalidation each; an invlpg has at most one remap source.
    let mut remap_preds: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
    for &(p, i) in &g.remap {
        remap_preds.entry(i).or_default().push(p);
    }
    for (i, ps) in &remap_preds {
        if ps.len() > 1 {
            out.push(violation(8, vec![*i], format!("{i} has several remap sources")));
        }
    }
    for (&p, pe) in &g.events {
        if !matches!(pe.kind, EventKind::PteWrite { .. }) {
            continue;
        }
        let Some(va) = pe.va else { continue };
        let targets: Vec<EventId> =
            g.remap.iter().filter(|(a, _)| *a == p).map(|&(_, b)| b).collect();
        for &i in &targets {
            if g.events.get(&i).and_then(|e| e.va) != Some(va) {
                out.push(violation(8, vec![p, i], "remap invalidation addresses the wrong VA"));
            }
        }
        let mut per_thread: BTreeMap<crate::relgraph::ThreadId, usize> = BTreeMap::new();
        for &i in &targets {
            *per_thread.entry(g.thread_of(i)).or_default() += 1;
        }
        for (t, n) in &per_thread {
            if *n > 1 {
                out.push(violation(8, vec![p], format!("{p} invokes several invalidations on thread {}", t.0)));
            }
        }
        // Own thread: required, immediately after.
        match targets.iter().find(|&&i| g.thread_of(i) == pe.thread) {
            None => out.push(violation(8, vec![p], format!("{p} lacks its same-thread invalidation"))),
            Some(&i) => {
                let (pi, ii) = (idx.get(&p), idx.get(&i));
                if !matches!((pi, ii), (Some(a), Some(b)) if *b == *a + 1) {
                    out.push(violation(8, vec![p, i], "same-thread invalidation must immediately follow its PTE write"));
                }
            }
        }
        // Remote threads: one invalidation wherever the thread has a
        // same-VA user data access, none otherwise.
        for (&t, row) in &g.po {
            if t == pe.thread {
                continue;
            }
            let accesses = row.iter().any(|&e| {
                let ev = g.event(e);
                ev.kind.is_user_data() && ev.va == Some(va)
            });
            let has = targets.iter().any(|&i| g.thread_of(i) == t);
            if accesses && !has {
                out.push(violation(8, vec![p], format!("{p} misses an invalidation on accessing thread {}", t.0)));
            }
        }
    }

    // WF10: rmw relates a read to the immediately po-next same-VA write.
    for &(r, w) in &g.rmw {
        let ok = match (g.events.get(&r), g.events.get(&w)) {
            (Some(re), Some(we)) => {
                re.kind == EventKind::UserRead
                    && we.kind == EventKind::UserWrite
                    && re.thread == we.thread
                    && re.va == we.va
                    && matches!((idx.get(&r), idx.get(&w)), (Some(a), Some(b)) if *b == *a + 1)
            }
            _ => false,
        };
        if !ok {
            out.push(violation(10, vec![r, w], "rmw must pair a read with the immediately following same-VA write"));
        }
    }

    // WF12: initial mappings injective.
    let mut seen_pa: BTreeMap<crate::relgraph::Pa, Va> = BTreeMap::new();
    for (&va, &pa) in &g.init_map {
        if let Some(prev) = seen_pa.insert(pa, va) {
            out.push(violation(12, vec![], format!("VAs {} and {} share an initial PA", prev.0, va.0)));
        }
    }
    for (&e, ev) in &g.events {
        if let Some(va) = ev.va {
            if ev.kind != EventKind::Fence && !g.init_map.contains_key(&va) {
                out.push(violation(12, vec![e], format!("{e} uses a VA with no initial mapping")));
            }
        }
    }

    out.sort_by(|a, b| (a.rule, &a.events, &a.message).cmp(&(b.rule, &b.events, &b.message)));
    out.dedup();
    out
}

/// Coherence-style orders must be strict total orders per location: all
/// writes to one location pairwise ordered, no pair both ways, no self pair,
/// nothing relating different locations.
fn check_total_per_location(
    g: &ExecutionGraph,
    rel: &BTreeSet<(EventId, EventId)>,
    in_domain: impl Fn(&Event) -> bool,
    coord_of: impl Fn(EventId) -> Option<crate::relgraph::Coord>,
    rule: u8,
    name: &str,
    out: &mut Vec<WfViolation>,
) {
    for &(a, b) in rel {
        if a == b {
            out.push(violation(rule, vec![a], format!("{name} relates {a} to itself")));
            continue;
        }
        if rel.contains(&(b, a)) {
            out.push(violation(rule, vec![a, b], format!("{name} orders {a} and {b} both ways")));
        }
        let ok = g.events.get(&a).is_some_and(&in_domain)
            && g.events.get(&b).is_some_and(&in_domain)
            && coord_of(a).is_some()
            && coord_of(a) == coord_of(b);
        if !ok {
            out.push(violation(rule, vec![a, b], format!("{name} relates events of different locations or kinds")));
        }
    }
    // Totality and transitivity per location.
    let mut groups: BTreeMap<crate::relgraph::Coord, Vec<EventId>> = BTreeMap::new();
    for (&e, ev) in &g.events {
        if in_domain(ev) {
            if let Some(c) = coord_of(e) {
                groups.entry(c).or_default().push(e);
            }
        }
    }
    for (_, group) in groups {
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                if !rel.contains(&(a, b)) && !rel.contains(&(b, a)) {
                    out.push(violation(rule, vec![a, b], format!("{name} leaves {a} and {b} unordered")));
                }
            }
        }
        for &a in &group {
            for &b in &group {
                for &c in &group {
                    if rel.contains(&(a, b)) && rel.contains(&(b, c)) && !rel.contains(&(a, c)) {
                        out.push(violation(rule, vec![a, c], format!("{name} is not transitive")));
                    }
                }
            }
        }
    }
}

/// WF9, applied only during synthesis: a spurious invalidation must have a
/// po-later same-VA memory event on its thread, otherwise it cannot affect
/// the thread's execution.
pub fn spurious_invlpg_useful(g: &ExecutionGraph, inv: EventId) -> bool {
    let ev = g.event(inv);
    debug_assert_eq!(ev.kind, EventKind::Invlpg);
    if g.remap.iter().any(|&(_, i)| i == inv) {
        return true;
    }
    let Some(va) = ev.va else { return false };
    let row = &g.po[&ev.thread];
    let pos = row.iter().position(|&e| e == inv).unwrap_or(usize::MAX);
    row.iter().enumerate().any(|(i, &e)| {
        i > pos && g.event(e).kind.is_user_data() && g.event(e).va == Some(va)
    })
}

/// The `(va, pa)` pair a user data event or walk translates through.
pub fn effective_mapping(
    g: &ExecutionGraph,
    e: EventId,
) -> Result<(Va, Pa), EffectiveMappingError> {
    let ev = g.events.get(&e).ok_or(EffectiveMappingError::UnknownEvent(e))?;
    if !(ev.kind.is_user_data() || ev.kind == EventKind::PtWalk) {
        return Err(EffectiveMappingError::NotAMemoryEvent(e));
    }
    let va = ev.va.ok_or(EffectiveMappingError::NotAMemoryEvent(e))?;
    let pa = g
        .effective_pa(e)
        .ok_or(EffectiveMappingError::UnresolvedMapping(e))?;
    Ok((va, pa))
}

use crate::relgraph::Pa;

#[derive(Clone, Copy, PartialEq, Eq, Debug, thiserror::Error)]
pub enum EffectiveMappingError {
    #[error("event {0} does not exist")]
    UnknownEvent(EventId),
    #[error("event {0} is not a user data event or walk")]
    NotAMemoryEvent(EventId),
    #[error("event {0} has no resolvable mapping source")]
    UnresolvedMapping(EventId),
}
