//! Canonicalization of programs up to isomorphism (thread permutation,
//! VA renaming with its PTE cell, PA renaming, event reindexing),
//! deduplication to unique programs, and comparison of external tests
//! against a synthesized suite.

use std::collections::{BTreeMap, BTreeSet};

use crate::oracle::Program;
use crate::relgraph::{EventId, EventKind, Pa, ThreadId, Va};
use crate::synth::{apply_units, program_units, ProgUnit};

/// A total text encoding of a program, equal exactly for isomorphic
/// programs.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CanonicalForm(pub String);

impl std::fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Renders `p` under one thread order, renaming VAs and fresh PAs by first
/// appearance. Initial PAs of VAs that appear as operands render through
/// their VA; any other target PA is fresh.
fn render(p: &Program, thread_order: &[ThreadId]) -> String {
    let operand_vas: BTreeSet<Va> = p.events.values().filter_map(|e| e.va).collect();
    let init_owner: BTreeMap<Pa, Va> = p
        .init_map
        .iter()
        .filter(|(va, _)| operand_vas.contains(va))
        .map(|(&va, &pa)| (pa, va))
        .collect();

    let mut va_names: BTreeMap<Va, usize> = BTreeMap::new();
    let mut fresh_names: BTreeMap<Pa, usize> = BTreeMap::new();
    let va_name = |va: Va, names: &mut BTreeMap<Va, usize>| -> usize {
        let next = names.len();
        *names.entry(va).or_insert(next)
    };

    // Slot index of each PTE write under this thread order, for remap refs.
    let mut pte_pos: BTreeMap<EventId, (usize, usize)> = BTreeMap::new();
    for (ti, t) in thread_order.iter().enumerate() {
        for (si, &e) in p.po[t].iter().enumerate() {
            if matches!(p.events[&e].kind, EventKind::PteWrite { .. }) {
                pte_pos.insert(e, (ti, si));
            }
        }
    }
    let remap_src: BTreeMap<EventId, EventId> =
        p.remap.iter().map(|&(pte, inv)| (inv, pte)).collect();
    let rmw_reads: BTreeSet<EventId> = p.rmw.iter().map(|&(r, _)| r).collect();

    let mut walks_of: BTreeMap<EventId, bool> = BTreeMap::new();
    for (&g, &inv) in &p.ghost {
        if p.events[&g].kind == EventKind::PtWalk {
            walks_of.insert(inv, true);
        }
    }

    let mut out = String::new();
    for t in thread_order {
        out.push('|');
        for &e in &p.po[t] {
            let ev = &p.events[&e];
            match ev.kind {
                EventKind::UserRead => {
                    let v = va_name(ev.va.unwrap(), &mut va_names);
                    let k = if rmw_reads.contains(&e) { "M" } else { "R" };
                    out.push_str(k);
                    out.push_str(&v.to_string());
                    if walks_of.get(&e).copied().unwrap_or(false) {
                        out.push('w');
                    }
                }
                EventKind::UserWrite => {
                    let v = va_name(ev.va.unwrap(), &mut va_names);
                    out.push('W');
                    out.push_str(&v.to_string());
                    if walks_of.get(&e).copied().unwrap_or(false) {
                        out.push('w');
                    }
                }
                EventKind::PteWrite { new_pa } => {
                    let v = va_name(ev.va.unwrap(), &mut va_names);
                    out.push('P');
                    out.push_str(&v.to_string());
                    out.push('>');
                    match init_owner.get(&new_pa) {
                        Some(&owner) => {
                            let ov = va_name(owner, &mut va_names);
                            out.push('i');
                            out.push_str(&ov.to_string());
                        }
                        None => {
                            let next = fresh_names.len();
                            let f = *fresh_names.entry(new_pa).or_insert(next);
                            out.push('f');
                            out.push_str(&f.to_string());
                        }
                    }
                }
                EventKind::Invlpg => {
                    let v = va_name(ev.va.unwrap(), &mut va_names);
                    out.push('I');
                    out.push_str(&v.to_string());
                    match remap_src.get(&e).and_then(|p| pte_pos.get(p)) {
                        Some((ti, si)) => out.push_str(&format!("@{ti}.{si}")),
                        None => out.push('s'),
                    }
                }
                EventKind::Fence => out.push('F'),
                EventKind::PtWalk | EventKind::DirtyBitWrite => unreachable!("ghosts not in po"),
            }
            out.push(';');
        }
    }
    out
}

fn thread_permutations(threads: &[ThreadId]) -> Vec<Vec<ThreadId>> {
    if threads.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &t) in threads.iter().enumerate() {
        let mut rest = threads.to_vec();
        rest.remove(i);
        for mut tail in thread_permutations(&rest) {
            let mut v = vec![t];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Deterministic encoding invariant under thread permutation, VA renaming,
/// PA renaming, and event reindexing.
pub fn canonical_form(p: &Program) -> CanonicalForm {
    let threads: Vec<ThreadId> = p.thread_ids();
    let best = thread_permutations(&threads)
        .into_iter()
        .map(|order| render(p, &order))
        .min()
        .unwrap_or_default();
    CanonicalForm(best)
}

/// One representative per canonical form, first-seen order.
pub fn dedup(suite: &[Program]) -> Vec<Program> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in suite {
        if seen.insert(canonical_form(p)) {
            out.push(p.clone());
        }
    }
    out
}

/// Category of an external test against a synthesized suite.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CompareOutcome {
    /// The test is outside the spanning-set vector space (it has no write).
    NotInVectorSpace,
    /// The test matches a suite member as-is.
    Verbatim { suite_index: usize },
    /// Removing these coupled event groups (and rmw dependencies) yields a
    /// suite member; the smallest such removal set is reported.
    ReducibleTo { suite_index: usize, removed: Vec<ProgUnit> },
    NotCovered,
}

pub const DEFAULT_SUBSET_CAP: usize = 12;

/// Classifies `t` against `suite`: verbatim match, reducible to a member by
/// removing a subset of relaxation units, or not covered.
pub fn compare(t: &Program, suite: &[Program]) -> CompareOutcome {
    compare_capped(t, suite, DEFAULT_SUBSET_CAP)
}

pub fn compare_capped(t: &Program, suite: &[Program], cap: usize) -> CompareOutcome {
    if !t.has_write() {
        return CompareOutcome::NotInVectorSpace;
    }
    let forms: Vec<CanonicalForm> = suite.iter().map(canonical_form).collect();
    let tf = canonical_form(t);
    if let Some(i) = forms.iter().position(|f| *f == tf) {
        return CompareOutcome::Verbatim { suite_index: i };
    }
    let units = program_units(t);
    if units.len() <= cap {
        for size in 1..=units.len() {
            for subset in subsets_of_size(units.len(), size) {
                let chosen: Vec<ProgUnit> = subset.iter().map(|&i| units[i].clone()).collect();
                let reduced = apply_units(t, &chosen);
                if reduced.is_empty() {
                    continue;
                }
                let rf = canonical_form(&reduced);
                if let Some(i) = forms.iter().position(|f| *f == rf) {
                    return CompareOutcome::ReducibleTo { suite_index: i, removed: chosen };
                }
            }
        }
    }
    CompareOutcome::NotCovered
}

/// Index subsets of `{0..n}` of the given size, in lexicographic order.
fn subsets_of_size(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    rec(0, n, size, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relgraph::{EventKind as K, GraphBuilder};

    fn two_thread_program(swap: bool) -> Program {
        let mut b = GraphBuilder::new();
        let t0 = b.thread();
        let t1 = b.thread();
        let (first, second) = if swap { (t1, t0) } else { (t0, t1) };
        let w = b.push_user(first, K::UserWrite, 0);
        b.add_dirty_bit(w);
        b.add_walk(w);
        let r = b.push_user(second, K::UserRead, 0);
        b.add_walk(r);
        b.into_program()
    }

    #[test]
    fn thread_swap_is_isomorphic() {
        assert_eq!(canonical_form(&two_thread_program(false)), canonical_form(&two_thread_program(true)));
    }

    #[test]
    fn va_renaming_is_isomorphic() {
        let mk = |va: u32| {
            let mut b = GraphBuilder::new();
            let t = b.thread();
            let r = b.push_user(t, K::UserRead, va);
            b.add_walk(r);
            b.into_program()
        };
        assert_eq!(canonical_form(&mk(0)), canonical_form(&mk(7)));
    }

    #[test]
    fn dedup_keeps_first() {
        let a = two_thread_program(false);
        let b = two_thread_program(true);
        let out = dedup(&[a.clone(), b]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], a);
    }
}
