//! Exhaustive bounded synthesis of minimal, interesting ELT programs.
//!
//! Synthesis enumerates every structural program up to an event bound
//! (counting ghosts), keeps those admitting a well-formed execution that
//! violates the target axiom, and filters by the minimality criterion:
//! the forbidden outcome must become legal under every isolated coupled
//! relaxation. Symmetry breaking plus canonical deduplication keep the
//! search from revisiting isomorphic programs.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::canon::{canonical_form, CanonicalForm};
use crate::model::{check_unvalidated, Model, Verdict};
use crate::oracle::{enumerate_executions_bounded, Program};
use crate::relgraph::{EventId, EventKind, ExecutionGraph, GraphBuilder, Pa};

/// Synthesis parameters. Fences enter the vocabulary by default only when
/// targeting `causality`; RMW pairs only when targeting `rmw_atomicity`.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub model: Model,
    pub target_axiom: String,
    /// Maximum total event count, ghosts included.
    pub bound: usize,
    pub timeout: Option<Duration>,
    pub enable_fences: Option<bool>,
    pub enable_rmw: Option<bool>,
    pub max_threads: Option<usize>,
    pub max_vas: Option<usize>,
}

impl SynthConfig {
    pub fn new(model: Model, target_axiom: &str, bound: usize) -> SynthConfig {
        SynthConfig {
            model,
            target_axiom: target_axiom.to_string(),
            bound,
            timeout: None,
            enable_fences: None,
            enable_rmw: None,
            max_threads: None,
            max_vas: None,
        }
    }

    pub fn fences(&self) -> bool {
        self.enable_fences.unwrap_or(self.target_axiom == "causality")
    }

    pub fn rmw(&self) -> bool {
        self.enable_rmw.unwrap_or(self.target_axiom == "rmw_atomicity")
    }

    pub fn threads_cap(&self) -> usize {
        self.max_threads.unwrap_or(self.bound).max(1)
    }

    pub fn vas_cap(&self) -> usize {
        self.max_vas.unwrap_or(self.bound).max(1)
    }
}

/// A coupled-removal group used by the minimality filter and the compare
/// tool. Ghosts go only with their invoker; remap invalidations only with
/// their PTE write; spurious invalidations and fences stand alone; an rmw
/// dependency is erased without removing events.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ProgUnit {
    RemoveEvents(BTreeSet<EventId>),
    RemoveRmwDep(EventId, EventId),
}

/// Relaxation units of a program, in deterministic order.
pub fn program_units(p: &Program) -> Vec<ProgUnit> {
    let mut out = Vec::new();
    let remap_targets: BTreeSet<EventId> = p.remap.iter().map(|&(_, i)| i).collect();
    for (&e, ev) in &p.events {
        match ev.kind {
            EventKind::UserRead | EventKind::UserWrite => {
                let mut group: BTreeSet<EventId> = [e].into();
                for (&g, &inv) in &p.ghost {
                    if inv == e {
                        group.insert(g);
                    }
                }
                out.push(ProgUnit::RemoveEvents(group));
            }
            EventKind::PteWrite { .. } => {
                let mut group: BTreeSet<EventId> = [e].into();
                for &(pte, inv) in &p.remap {
                    if pte == e {
                        group.insert(inv);
                    }
                }
                out.push(ProgUnit::RemoveEvents(group));
            }
            EventKind::Invlpg if !remap_targets.contains(&e) => {
                out.push(ProgUnit::RemoveEvents([e].into()));
            }
            EventKind::Fence => {
                out.push(ProgUnit::RemoveEvents([e].into()));
            }
            _ => {}
        }
    }
    for &(r, w) in &p.rmw {
        out.push(ProgUnit::RemoveRmwDep(r, w));
    }
    out
}

/// Units of the execution's underlying program; ids coincide.
pub fn relaxation_units(g: &ExecutionGraph) -> Vec<ProgUnit> {
    program_units(&Program::from_graph(g))
}

/// Applies removal units to a program, restricting all structure.
pub fn apply_units(p: &Program, units: &[ProgUnit]) -> Program {
    let mut removed: BTreeSet<EventId> = BTreeSet::new();
    let mut dropped_deps: BTreeSet<(EventId, EventId)> = BTreeSet::new();
    for u in units {
        match u {
            ProgUnit::RemoveEvents(set) => removed.extend(set.iter().copied()),
            ProgUnit::RemoveRmwDep(r, w) => {
                dropped_deps.insert((*r, *w));
            }
        }
    }
    let alive = |e: &EventId| !removed.contains(e);
    Program {
        events: p.events.iter().filter(|(e, _)| alive(e)).map(|(&e, &v)| (e, v)).collect(),
        po: p
            .po
            .iter()
            .map(|(&t, row)| (t, row.iter().copied().filter(alive).collect::<Vec<_>>()))
            .filter(|(_, row)| !row.is_empty())
            .collect(),
        ghost: p
            .ghost
            .iter()
            .filter(|(g, inv)| alive(g) && alive(inv))
            .map(|(&g, &i)| (g, i))
            .collect(),
        remap: p.remap.iter().filter(|(a, b)| alive(a) && alive(b)).copied().collect(),
        rmw: p
            .rmw
            .iter()
            .filter(|&&(r, w)| alive(&r) && alive(&w) && !dropped_deps.contains(&(r, w)))
            .copied()
            .collect(),
        init_map: p.init_map.clone(),
    }
}

/// Applies one unit to an execution: relations are restricted to surviving
/// events and derived relations recomputed by the checker.
pub fn apply_unit_to_execution(g: &ExecutionGraph, unit: &ProgUnit) -> ExecutionGraph {
    match unit {
        ProgUnit::RemoveEvents(set) => {
            let keep: BTreeSet<EventId> =
                g.events.keys().copied().filter(|e| !set.contains(e)).collect();
            g.restrict(&keep)
        }
        ProgUnit::RemoveRmwDep(r, w) => {
            let mut out = g.clone();
            out.rmw.remove(&(*r, *w));
            out
        }
    }
}

/// True iff every isolated relaxation of `e` satisfies the full predicate.
/// The execution itself must already violate at least one axiom.
pub fn is_minimal(e: &ExecutionGraph, m: &Model) -> bool {
    for unit in relaxation_units(e) {
        let relaxed = apply_unit_to_execution(e, &unit);
        if !check_unvalidated(&relaxed, m).consistent {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug)]
pub struct Suite {
    pub axiom: String,
    pub bound: usize,
    /// Programs with a violating minimal witness execution, first-seen order.
    pub programs: Vec<(Program, ExecutionGraph)>,
    pub complete: bool,
    pub runtime: Duration,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, thiserror::Error)]
pub enum SynthError {
    #[error("target axiom is not part of the model")]
    UnknownAxiom,
}

// ---------------------------------------------------------------------------
// Structural program generation
// ---------------------------------------------------------------------------

/// Target of a PTE write: a brand-new PA or the initial PA of another VA
/// (creating an alias).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Tgt {
    Fresh(u8),
    InitOf(u8),
}

/// One instruction slot before ghost expansion. `Rmw` stands for an atomic
/// read-modify-write pair.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Instr {
    Read(u8),
    Write(u8),
    Rmw(u8),
    Pte(u8, Tgt),
    SpurInv(u8),
    Fence,
}

impl Instr {
    /// Events this instruction contributes before walks and remote
    /// invalidations: reads 1, writes 2 (dirty bit), PTE writes 2 (own
    /// invalidation), rmw pairs 3.
    fn base_cost(self) -> usize {
        match self {
            Instr::Read(_) => 1,
            Instr::Write(_) => 2,
            Instr::Rmw(_) => 3,
            Instr::Pte(..) => 2,
            Instr::SpurInv(_) => 1,
            Instr::Fence => 1,
        }
    }

    fn data_va(self) -> Option<u8> {
        match self {
            Instr::Read(v) | Instr::Write(v) | Instr::Rmw(v) => Some(v),
            _ => None,
        }
    }
}

/// A user data micro-op position after remote-invalidation placement:
/// (thread, index in the placed op list, micro-op within the slot).
type OpPos = (usize, usize, u8);

#[derive(Clone, Debug)]
enum PlacedOp {
    User(Instr),
    /// Invalidation fanned out from the PTE write at (thread, slot index).
    RemoteInv { va: u8, pte: (usize, usize) },
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    deadline: Option<Instant>,
    seen: BTreeSet<CanonicalForm>,
    out: Vec<(Program, ExecutionGraph)>,
    programs_tried: u64,
    timed_out: bool,
}

impl<'a> Generator<'a> {
    /// All instructions available at a point where `used_vas` distinct VAs
    /// have appeared so far and `used_fresh` fresh targets exist.
    fn alphabet(&self, used_vas: u8, used_fresh: u8) -> Vec<Instr> {
        let max_vas = self.cfg.vas_cap() as u8;
        let vas: Vec<u8> = (0..=used_vas.min(max_vas.saturating_sub(1))).collect();
        let mut out = Vec::new();
        for &v in &vas {
            out.push(Instr::Read(v));
            out.push(Instr::Write(v));
            if self.cfg.rmw() {
                out.push(Instr::Rmw(v));
            }
            for f in 0..=used_fresh {
                out.push(Instr::Pte(v, Tgt::Fresh(f)));
            }
            for o in &vas {
                if *o != v {
                    out.push(Instr::Pte(v, Tgt::InitOf(*o)));
                }
            }
            out.push(Instr::SpurInv(v));
        }
        if self.cfg.fences() {
            out.push(Instr::Fence);
        }
        out
    }

    /// Enumerates skeletons thread by thread, then hands each to remote
    /// invalidation placement.
    fn gen_threads(&mut self, threads: &mut Vec<Vec<Instr>>, budget: usize) {
        if self.expired() {
            return;
        }
        if !threads.is_empty() {
            self.place_remote_invs(threads);
        }
        if threads.len() >= self.cfg.threads_cap() || budget == 0 {
            return;
        }
        threads.push(Vec::new());
        self.gen_sequence(threads, budget);
        threads.pop();
    }

    /// Extends the last thread's instruction list.
    fn gen_sequence(&mut self, threads: &mut Vec<Vec<Instr>>, budget: usize) {
        if self.expired() {
            return;
        }
        let used_vas = threads
            .iter()
            .flatten()
            .filter_map(|i| match *i {
                Instr::Read(v) | Instr::Write(v) | Instr::Rmw(v) | Instr::SpurInv(v) => Some(v + 1),
                Instr::Pte(v, Tgt::InitOf(o)) => Some((v + 1).max(o + 1)),
                Instr::Pte(v, _) => Some(v + 1),
                Instr::Fence => None,
            })
            .max()
            .unwrap_or(0);
        let used_fresh = threads
            .iter()
            .flatten()
            .filter_map(|i| match *i {
                Instr::Pte(_, Tgt::Fresh(f)) => Some(f + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);

        let current_nonempty = !threads.last().unwrap().is_empty();
        if current_nonempty {
            // Close this thread and open the next, or finish here.
            self.gen_threads(threads, budget);
        }

        for instr in self.alphabet(used_vas, used_fresh) {
            let cost = instr.base_cost();
            if cost > budget {
                continue;
            }
            // Same-VA PTE writes must change the mapping and differ from
            // each other; duplicates would only reorder.
            if let Instr::Pte(v, t) = instr {
                let dup = threads.iter().flatten().any(|i| matches!(*i, Instr::Pte(v2, t2) if v2 == v && t2 == t));
                if dup || matches!(t, Tgt::InitOf(o) if o == v) {
                    continue;
                }
            }
            threads.last_mut().unwrap().push(instr);
            self.gen_sequence(threads, budget - cost);
            threads.last_mut().unwrap().pop();
        }
    }

    /// For every PTE write, a remote thread that touches the remapped VA
    /// with a data access carries exactly one invalidation; enumerate its
    /// insertion point. The same-thread invalidation is implicit in the
    /// slot expansion.
    fn place_remote_invs(&mut self, threads: &Vec<Vec<Instr>>) {
        if self.expired() {
            return;
        }
        // Spurious invalidations must be able to affect their thread.
        for row in threads {
            for (i, instr) in row.iter().enumerate() {
                if let Instr::SpurInv(v) = instr {
                    let useful =
                        row[i + 1..].iter().any(|x| x.data_va() == Some(*v));
                    if !useful {
                        return;
                    }
                }
            }
        }
        let mut placed: Vec<Vec<PlacedOp>> = threads
            .iter()
            .map(|row| row.iter().map(|&i| PlacedOp::User(i)).collect())
            .collect();
        let mut pending: Vec<(usize, (usize, usize))> = Vec::new(); // (remote thread, pte slot)
        for (ti, row) in threads.iter().enumerate() {
            for (si, instr) in row.iter().enumerate() {
                if let Instr::Pte(v, _) = instr {
                    for (ui, urow) in threads.iter().enumerate() {
                        if ui != ti && urow.iter().any(|x| x.data_va() == Some(*v)) {
                            pending.push((ui, (ti, si)));
                        }
                    }
                }
            }
        }
        self.insert_pending(&mut placed, &pending, 0, threads);
    }

    fn insert_pending(
        &mut self,
        placed: &mut Vec<Vec<PlacedOp>>,
        pending: &[(usize, (usize, usize))],
        k: usize,
        skeleton: &Vec<Vec<Instr>>,
    ) {
        if self.expired() {
            return;
        }
        if k == pending.len() {
            self.expand_walks(placed, skeleton);
            return;
        }
        let (thread, pte) = pending[k];
        let va = match skeleton[pte.0][pte.1] {
            Instr::Pte(v, _) => v,
            _ => unreachable!(),
        };
        for pos in 0..=placed[thread].len() {
            placed[thread].insert(pos, PlacedOp::RemoteInv { va, pte });
            self.insert_pending(placed, pending, k + 1, skeleton);
            placed[thread].remove(pos);
        }
    }

    /// Decides, per user data micro-op, whether it invokes its own walk.
    /// A micro-op with no eligible earlier walk must invoke one; otherwise
    /// both choices are explored (capacity evictions).
    fn expand_walks(&mut self, placed: &Vec<Vec<PlacedOp>>, skeleton: &Vec<Vec<Instr>>) {
        // Collect user micro-ops in placement order.
        let mut micro: Vec<(OpPos, u8)> = Vec::new(); // position, va
        for (ti, row) in placed.iter().enumerate() {
            for (oi, op) in row.iter().enumerate() {
                if let PlacedOp::User(instr) = op {
                    match instr {
                        Instr::Read(v) | Instr::Write(v) => micro.push(((ti, oi, 0), *v)),
                        Instr::Rmw(v) => {
                            micro.push(((ti, oi, 0), *v));
                            micro.push(((ti, oi, 1), *v));
                        }
                        _ => {}
                    }
                }
            }
        }
        let base_cost: usize = placed
            .iter()
            .flatten()
            .map(|op| match op {
                PlacedOp::User(i) => i.base_cost(),
                PlacedOp::RemoteInv { .. } => 1,
            })
            .sum();
        if base_cost > self.cfg.bound {
            return;
        }
        let mut flags = vec![false; micro.len()];
        self.walk_flags(placed, skeleton, &micro, &mut flags, 0, base_cost);
    }

    fn walk_flags(
        &mut self,
        placed: &Vec<Vec<PlacedOp>>,
        skeleton: &Vec<Vec<Instr>>,
        micro: &[(OpPos, u8)],
        flags: &mut Vec<bool>,
        k: usize,
        cost: usize,
    ) {
        if self.expired() {
            return;
        }
        if cost > self.cfg.bound {
            return;
        }
        if k == micro.len() {
            self.emit(placed, skeleton, micro, flags);
            return;
        }
        let ((ti, oi, _mi), va) = micro[k];
        // Is an earlier walk of this VA still usable here? Walk invokers are
        // the earlier micro-ops with their flag set; an invalidation of the
        // VA in between spoils them. A PTE write carries its own same-VA
        // invalidation immediately after it.
        let eligible = (0..k).any(|j| {
            let ((tj, oj, _), vj) = micro[j];
            if tj != ti || vj != va || !flags[j] {
                return false;
            }
            let row = &placed[ti];
            let blocked = row.iter().enumerate().any(|(x, op)| {
                if x <= oj || x >= oi {
                    return false;
                }
                match op {
                    PlacedOp::User(Instr::SpurInv(v)) => *v == va,
                    PlacedOp::User(Instr::Pte(v, _)) => *v == va,
                    PlacedOp::RemoteInv { va: v, .. } => *v == va,
                    _ => false,
                }
            });
            !blocked
        });
        if eligible {
            flags[k] = false;
            self.walk_flags(placed, skeleton, micro, flags, k + 1, cost);
        }
        flags[k] = true;
        self.walk_flags(placed, skeleton, micro, flags, k + 1, cost + 1);
        flags[k] = false;
    }

    fn emit(
        &mut self,
        placed: &Vec<Vec<PlacedOp>>,
        _skeleton: &Vec<Vec<Instr>>,
        micro: &[(OpPos, u8)],
        flags: &[bool],
    ) {
        let walk_of = |pos: OpPos| -> bool {
            micro
                .iter()
                .position(|(p, _)| *p == pos)
                .map(|i| flags[i])
                .unwrap_or(false)
        };
        let mut b = GraphBuilder::new();
        let mut fresh_pas: BTreeMap<u8, Pa> = BTreeMap::new();
        // Reserve one init PA per VA up front so fresh targets never collide.
        let max_va = placed
            .iter()
            .flatten()
            .filter_map(|op| match op {
                PlacedOp::User(i) => match *i {
                    Instr::Read(v) | Instr::Write(v) | Instr::Rmw(v) | Instr::SpurInv(v) => Some(v),
                    Instr::Pte(v, Tgt::InitOf(o)) => Some(v.max(o)),
                    Instr::Pte(v, _) => Some(v),
                    Instr::Fence => None,
                },
                PlacedOp::RemoteInv { va, .. } => Some(*va),
            })
            .max();
        let nvas = max_va.map(|m| m as u32 + 1).unwrap_or(0);
        for v in 0..nvas {
            b.set_init(crate::relgraph::Va(v), Pa(v));
        }
        let mut threads = Vec::new();
        for _ in 0..placed.len() {
            threads.push(b.thread());
        }
        let mut pte_event: BTreeMap<(usize, usize), EventId> = BTreeMap::new();
        let mut remote_invs: Vec<((usize, usize), EventId)> = Vec::new();
        // The PTE write a remote invalidation refers to may live on a
        // later-built thread, so remap edges for them are added at the end.
        for (ti, row) in placed.iter().enumerate() {
            let t = threads[ti];
            for (oi, op) in row.iter().enumerate() {
                match op {
                    PlacedOp::User(Instr::Read(v)) => {
                        let r = b.push_user(t, EventKind::UserRead, *v as u32);
                        if walk_of((ti, oi, 0)) {
                            b.add_walk(r);
                        }
                    }
                    PlacedOp::User(Instr::Write(v)) => {
                        let w = b.push_user(t, EventKind::UserWrite, *v as u32);
                        b.add_dirty_bit(w);
                        if walk_of((ti, oi, 0)) {
                            b.add_walk(w);
                        }
                    }
                    PlacedOp::User(Instr::Rmw(v)) => {
                        let r = b.push_user(t, EventKind::UserRead, *v as u32);
                        if walk_of((ti, oi, 0)) {
                            b.add_walk(r);
                        }
                        let w = b.push_user(t, EventKind::UserWrite, *v as u32);
                        b.add_dirty_bit(w);
                        if walk_of((ti, oi, 1)) {
                            b.add_walk(w);
                        }
                        b.add_rmw(r, w);
                    }
                    PlacedOp::User(Instr::Pte(v, tgt)) => {
                        let pa = match tgt {
                            Tgt::InitOf(o) => Pa(*o as u32),
                            Tgt::Fresh(f) => *fresh_pas
                                .entry(*f)
                                .or_insert_with(|| Pa(nvas + *f as u32)),
                        };
                        let p = b.push_pte_write(t, *v as u32, pa);
                        let i = b.push_invlpg(t, *v as u32);
                        b.add_remap(p, i);
                        pte_event.insert((ti, oi), p);
                    }
                    PlacedOp::User(Instr::SpurInv(v)) => {
                        b.push_invlpg(t, *v as u32);
                    }
                    PlacedOp::User(Instr::Fence) => {
                        b.push_fence(t);
                    }
                    PlacedOp::RemoteInv { va, pte } => {
                        let i = b.push_invlpg(t, *va as u32);
                        remote_invs.push((*pte, i));
                    }
                }
            }
        }
        for (pte_slot, inv) in remote_invs {
            b.add_remap(pte_event[&pte_slot], inv);
        }
        let program = b.into_program();
        if program.len() > self.cfg.bound {
            return;
        }
        self.consider(program);
    }

    fn consider(&mut self, program: Program) {
        self.programs_tried += 1;
        let cf = canonical_form(&program);
        if !self.seen.insert(cf) {
            return;
        }
        if !program.has_write() {
            return;
        }
        let execs = match enumerate_executions_bounded(&program, self.cfg.bound.max(16)) {
            Ok(e) => e,
            Err(_) => return,
        };
        for g in execs {
            let verdict: Verdict = check_unvalidated(&g, &self.cfg.model);
            if verdict.violated_names().contains(&self.cfg.target_axiom.as_str())
                && is_minimal(&g, &self.cfg.model)
            {
                self.out.push((program, g));
                return;
            }
        }
    }

    fn expired(&mut self) -> bool {
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                self.timed_out = true;
                return true;
            }
        }
        false
    }
}

/// Runs bounded synthesis for one target axiom.
pub fn synthesize(cfg: &SynthConfig) -> Result<Suite, SynthError> {
    if cfg.model.axiom(&cfg.target_axiom).is_none() {
        return Err(SynthError::UnknownAxiom);
    }
    let start = Instant::now();
    let mut generator = Generator {
        cfg,
        deadline: cfg.timeout.map(|t| start + t),
        seen: BTreeSet::new(),
        out: Vec::new(),
        programs_tried: 0,
        timed_out: false,
    };
    let mut threads = Vec::new();
    generator.gen_threads(&mut threads, cfg.bound);
    Ok(Suite {
        axiom: cfg.target_axiom.clone(),
        bound: cfg.bound,
        programs: generator.out,
        complete: !generator.timed_out,
        runtime: start.elapsed(),
    })
}
