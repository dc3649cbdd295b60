//! Brute-force enumeration of every well-formed execution of a structural
//! program, and classification of those executions under a model. This is
//! the independent ground truth for the checker and for synthesis.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{check_unvalidated, Model, Verdict};
use crate::relgraph::{
    Coord, Event, EventId, EventKind, ExecutionGraph, Pa, Src, ThreadId, Va,
};
use crate::wellformed::validate;

/// The structural projection of an execution: events, program order, ghost
/// and remap structure, rmw pairs, and initial mappings, but none of the
/// communication choices. This is the unit of deduplication and suite
/// membership.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Program {
    pub events: BTreeMap<EventId, Event>,
    pub po: BTreeMap<ThreadId, Vec<EventId>>,
    pub ghost: BTreeMap<EventId, EventId>,
    pub remap: BTreeSet<(EventId, EventId)>,
    pub rmw: BTreeSet<(EventId, EventId)>,
    pub init_map: BTreeMap<Va, Pa>,
}

impl Program {
    /// Drops the communication relations of an execution.
    pub fn from_graph(g: &ExecutionGraph) -> Program {
        Program {
            events: g.events.clone(),
            po: g.po.clone(),
            ghost: g.ghost.clone(),
            remap: g.remap.clone(),
            rmw: g.rmw.clone(),
            init_map: g.init_map.clone(),
        }
    }

    /// An execution graph with the structure of `self` and no communication.
    pub fn skeleton(&self) -> ExecutionGraph {
        ExecutionGraph {
            events: self.events.clone(),
            po: self.po.clone(),
            ghost: self.ghost.clone(),
            remap: self.remap.clone(),
            rmw: self.rmw.clone(),
            init_map: self.init_map.clone(),
            ..ExecutionGraph::default()
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Spanning-set screening: an interesting test contains at least one
    /// write of any kind.
    pub fn has_write(&self) -> bool {
        self.events.values().any(|e| e.kind.is_write())
    }

    pub fn thread_ids(&self) -> Vec<ThreadId> {
        self.po.keys().copied().collect()
    }

    fn walks(&self) -> Vec<EventId> {
        self.events
            .values()
            .filter(|e| e.kind == EventKind::PtWalk)
            .map(|e| e.id)
            .collect()
    }

    /// Position of every non-ghost event in its thread row.
    fn po_index(&self) -> BTreeMap<EventId, usize> {
        let mut idx = BTreeMap::new();
        for row in self.po.values() {
            for (i, &e) in row.iter().enumerate() {
                idx.insert(e, i);
            }
        }
        idx
    }

    /// Walks a user data event may read its translation from: same thread,
    /// same VA, invoker at or before the event, no invalidation of that VA
    /// in between. An event that invokes a walk must use its own.
    pub fn eligible_walks(&self, e: EventId) -> Vec<EventId> {
        let ev = &self.events[&e];
        debug_assert!(ev.kind.is_user_data());
        if let Some(own) = self
            .ghost
            .iter()
            .find(|(g, i)| **i == e && self.events[g].kind == EventKind::PtWalk)
            .map(|(g, _)| *g)
        {
            return vec![own];
        }
        let idx = self.po_index();
        let Some(&epos) = idx.get(&e) else { return Vec::new() };
        let va = ev.va;
        let row = &self.po[&ev.thread];
        let mut out = Vec::new();
        for w in self.walks() {
            let inv = self.ghost[&w];
            let iev = &self.events[&inv];
            if iev.thread != ev.thread || self.events[&w].va != va {
                continue;
            }
            let Some(&ipos) = idx.get(&inv) else { continue };
            if ipos >= epos {
                continue;
            }
            let blocked = row.iter().enumerate().any(|(i, &x)| {
                i > ipos
                    && i < epos
                    && self.events[&x].kind == EventKind::Invlpg
                    && self.events[&x].va == va
            });
            if !blocked {
                out.push(w);
            }
        }
        out.sort();
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, thiserror::Error)]
pub enum OracleError {
    #[error("program has {got} events, exceeding the oracle bound of {bound}")]
    BoundExceeded { got: usize, bound: usize },
}

pub const DEFAULT_ORACLE_BOUND: usize = 10;

/// Enumerates exactly the set of well-formed executions extending `p`, each
/// emitted once, in a canonical deterministic order.
pub fn enumerate_executions(p: &Program) -> Result<Vec<ExecutionGraph>, OracleError> {
    enumerate_executions_bounded(p, DEFAULT_ORACLE_BOUND)
}

pub fn enumerate_executions_bounded(
    p: &Program,
    bound: usize,
) -> Result<Vec<ExecutionGraph>, OracleError> {
    if p.len() > bound {
        return Err(OracleError::BoundExceeded { got: p.len(), bound });
    }
    let mut out = Vec::new();

    let user_events: Vec<EventId> = p
        .events
        .values()
        .filter(|e| e.kind.is_user_data())
        .map(|e| e.id)
        .collect();
    let walks = p.walks();
    let pte_writes: Vec<EventId> = p
        .events
        .values()
        .filter(|e| matches!(e.kind, EventKind::PteWrite { .. }))
        .map(|e| e.id)
        .collect();

    // Choice 1: translation source walk per user data event.
    let walk_choices: Vec<Vec<EventId>> =
        user_events.iter().map(|&e| p.eligible_walks(e)).collect();
    if walk_choices.iter().any(|c| c.is_empty()) && !user_events.is_empty() {
        return Ok(out); // some event cannot be translated: no executions
    }

    // Choice 2: mapping root per walk: the initial mapping or any PTE write
    // to the same PTE cell.
    let root_choices: Vec<Vec<Src>> = walks
        .iter()
        .map(|&w| {
            let va = p.events[&w].va;
            let mut v = vec![Src::Init];
            v.extend(
                pte_writes
                    .iter()
                    .filter(|&&q| p.events[&q].va == va)
                    .map(|&q| Src::Ev(q)),
            );
            v
        })
        .collect();

    let mut walk_pick = vec![0usize; user_events.len()];
    loop {
        let rf_ptw: BTreeMap<EventId, EventId> = user_events
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, walk_choices[i][walk_pick[i]]))
            .collect();

        enumerate_roots(p, &user_events, &walks, &rf_ptw, &root_choices, &mut out);

        if !advance(&mut walk_pick, &walk_choices) {
            break;
        }
    }
    Ok(out)
}

fn advance<T>(pick: &mut [usize], choices: &[Vec<T>]) -> bool {
    for i in (0..pick.len()).rev() {
        pick[i] += 1;
        if pick[i] < choices[i].len() {
            return true;
        }
        pick[i] = 0;
    }
    false
}

fn enumerate_roots(
    p: &Program,
    user_events: &[EventId],
    walks: &[EventId],
    rf_ptw: &BTreeMap<EventId, EventId>,
    root_choices: &[Vec<Src>],
    out: &mut Vec<ExecutionGraph>,
) {
    let mut pick = vec![0usize; walks.len()];
    loop {
        let root_of_walk: BTreeMap<EventId, Src> = walks
            .iter()
            .enumerate()
            .map(|(i, &w)| (w, root_choices[i][pick[i]]))
            .collect();
        // Users inherit their walk's mapping source.
        let mut rf_pa = root_of_walk.clone();
        for &e in user_events {
            rf_pa.insert(e, root_of_walk[&rf_ptw[&e]]);
        }

        enumerate_values(p, user_events, walks, rf_ptw, &rf_pa, out);

        if pick.is_empty() || !advance(&mut pick, root_choices) {
            break;
        }
    }
}

/// Effective PA under a chosen mapping assignment.
fn eff_pa(p: &Program, rf_pa: &BTreeMap<EventId, Src>, e: EventId) -> Option<Pa> {
    match rf_pa.get(&e)? {
        Src::Init => p.init_map.get(&p.events[&e].va?).copied(),
        Src::Ev(q) => match p.events[q].kind {
            EventKind::PteWrite { new_pa } => Some(new_pa),
            _ => None,
        },
    }
}

fn enumerate_values(
    p: &Program,
    user_events: &[EventId],
    walks: &[EventId],
    rf_ptw: &BTreeMap<EventId, EventId>,
    rf_pa: &BTreeMap<EventId, Src>,
    out: &mut Vec<ExecutionGraph>,
) {
    // Communication coordinates under this mapping assignment.
    let coord_of = |e: EventId| -> Option<Coord> {
        let ev = &p.events[&e];
        match ev.kind {
            EventKind::UserRead | EventKind::UserWrite => eff_pa(p, rf_pa, e).map(Coord::Phys),
            EventKind::PteWrite { .. } | EventKind::PtWalk | EventKind::DirtyBitWrite => {
                ev.va.map(Coord::PteCell)
            }
            _ => None,
        }
    };

    // Value sources. A user read may read the initial value or any user
    // write on its effective PA. A walk may read the initial mapping, any
    // PTE write on its cell, or any dirty-bit write on its cell whose
    // invoker resolves to the same mapping source.
    let readers: Vec<EventId> = {
        let mut v: Vec<EventId> = user_events
            .iter()
            .copied()
            .filter(|e| p.events[e].kind == EventKind::UserRead)
            .collect();
        v.extend(walks.iter().copied());
        v.sort();
        v
    };
    let value_choices: Vec<Vec<Src>> = readers
        .iter()
        .map(|&r| {
            let mut v = vec![Src::Init];
            match p.events[&r].kind {
                EventKind::UserRead => {
                    let c = coord_of(r);
                    for e in p.events.values() {
                        if e.kind == EventKind::UserWrite && coord_of(e.id) == c && c.is_some() {
                            v.push(Src::Ev(e.id));
                        }
                    }
                }
                EventKind::PtWalk => {
                    let va = p.events[&r].va;
                    let target = rf_pa[&r];
                    for e in p.events.values() {
                        let matches_cell = e.va == va;
                        match e.kind {
                            EventKind::PteWrite { .. } if matches_cell => {
                                if Src::Ev(e.id) == target {
                                    v.push(Src::Ev(e.id));
                                }
                            }
                            EventKind::DirtyBitWrite if matches_cell => {
                                let inv = p.ghost[&e.id];
                                if rf_pa.get(&inv) == Some(&target) {
                                    v.push(Src::Ev(e.id));
                                }
                            }
                            _ => {}
                        }
                    }
                    if target != Src::Init {
                        v.retain(|s| *s != Src::Init);
                    }
                }
                _ => unreachable!(),
            }
            v.sort();
            v.dedup();
            v
        })
        .collect();

    // Coherence orders: writes grouped by coordinate, all interleavings.
    let mut write_groups: BTreeMap<Coord, Vec<EventId>> = BTreeMap::new();
    for e in p.events.values() {
        if e.kind.is_write() {
            if let Some(c) = coord_of(e.id) {
                write_groups.entry(c).or_default().push(e.id);
            }
        }
    }
    let co_groups: Vec<Vec<EventId>> = write_groups.into_values().collect();

    let mut alias_groups: BTreeMap<Pa, Vec<EventId>> = BTreeMap::new();
    for e in p.events.values() {
        if let EventKind::PteWrite { new_pa } = e.kind {
            alias_groups.entry(new_pa).or_default().push(e.id);
        }
    }
    let co_pa_groups: Vec<Vec<EventId>> = alias_groups.into_values().collect();

    let co_orders = orders_product(&co_groups);
    let co_pa_orders = orders_product(&co_pa_groups);

    let mut value_pick = vec![0usize; readers.len()];
    loop {
        let rf: BTreeMap<EventId, Src> = readers
            .iter()
            .enumerate()
            .map(|(i, &r)| (r, value_choices[i][value_pick[i]]))
            .collect();

        for co in &co_orders {
            for co_pa in &co_pa_orders {
                let g = ExecutionGraph {
                    events: p.events.clone(),
                    po: p.po.clone(),
                    rf: rf.clone(),
                    co: co.clone(),
                    co_pa: co_pa.clone(),
                    rf_ptw: rf_ptw.clone(),
                    rf_pa: rf_pa.clone(),
                    ghost: p.ghost.clone(),
                    remap: p.remap.clone(),
                    rmw: p.rmw.clone(),
                    init_map: p.init_map.clone(),
                };
                debug_assert!(
                    validate(&g).is_empty(),
                    "oracle emitted ill-formed execution: {:?}",
                    validate(&g)
                );
                out.push(g);
            }
        }

        if value_pick.is_empty() || !advance(&mut value_pick, &value_choices) {
            break;
        }
    }
}

/// All ways to totally order each group, as full pair sets; the product over
/// groups collapses to one relation per combination.
fn orders_product(groups: &[Vec<EventId>]) -> Vec<BTreeSet<(EventId, EventId)>> {
    let mut acc: Vec<BTreeSet<(EventId, EventId)>> = vec![BTreeSet::new()];
    for group in groups {
        let perms = permutations(group);
        let mut next = Vec::with_capacity(acc.len() * perms.len());
        for base in &acc {
            for perm in &perms {
                let mut rel = base.clone();
                for i in 0..perm.len() {
                    for j in i + 1..perm.len() {
                        rel.insert((perm[i], perm[j]));
                    }
                }
                next.push(rel);
            }
        }
        acc = next;
    }
    acc
}

fn permutations(items: &[EventId]) -> Vec<Vec<EventId>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest: Vec<EventId> = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            let mut v = vec![x];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Classification of a full enumeration under a model.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub permitted: usize,
    pub forbidden: usize,
    pub per_axiom: BTreeMap<String, usize>,
    /// First forbidden execution per axiom, with its verdict.
    pub examples: BTreeMap<String, (ExecutionGraph, Verdict)>,
}

/// Enumerates and classifies every execution of `p` under `m`.
pub fn classify(p: &Program, m: &Model) -> Result<Summary, OracleError> {
    classify_bounded(p, m, DEFAULT_ORACLE_BOUND)
}

pub fn classify_bounded(p: &Program, m: &Model, bound: usize) -> Result<Summary, OracleError> {
    let mut summary = Summary::default();
    for g in enumerate_executions_bounded(p, bound)? {
        let verdict = check_unvalidated(&g, m);
        if verdict.consistent {
            summary.permitted += 1;
        } else {
            summary.forbidden += 1;
            for (name, _) in &verdict.violated {
                *summary.per_axiom.entry(name.clone()).or_default() += 1;
                summary
                    .examples
                    .entry(name.clone())
                    .or_insert_with(|| (g.clone(), verdict.clone()));
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relgraph::EventKind as K;

    /// One user write with its dirty-bit update and walk: the walk may read
    /// the initial mapping or the dirty-bit write, both denoting the same
    /// translation, so exactly two executions exist.
    #[test]
    fn write_with_ghosts_has_two_executions() {
        let mut b = crate::relgraph::GraphBuilder::new();
        let t = b.thread();
        let w = b.push_user(t, K::UserWrite, 0);
        b.add_dirty_bit(w);
        b.add_walk(w);
        let p = b.into_program();
        let execs = enumerate_executions(&p).unwrap();
        assert_eq!(execs.len(), 2);
    }

    /// Two same-VA user writes on different threads admit exactly two
    /// orderings of the data writes per fixed translation choice.
    #[test]
    fn cross_thread_write_pair_co_orders() {
        let mut b = crate::relgraph::GraphBuilder::new();
        let t0 = b.thread();
        let t1 = b.thread();
        let w0 = b.push_user(t0, K::UserWrite, 0);
        b.add_dirty_bit(w0);
        b.add_walk(w0);
        let w1 = b.push_user(t1, K::UserWrite, 0);
        b.add_dirty_bit(w1);
        b.add_walk(w1);
        let p = b.into_program();
        let execs = enumerate_executions(&p).unwrap();
        assert!(!execs.is_empty());
        // Every execution orders the two data writes one way or the other,
        // and both orders occur.
        let mut orders = BTreeSet::new();
        for g in &execs {
            if g.co.contains(&(w0, w1)) {
                orders.insert("w0<w1");
            }
            if g.co.contains(&(w1, w0)) {
                orders.insert("w1<w0");
            }
        }
        assert_eq!(orders.len(), 2);
    }
}
