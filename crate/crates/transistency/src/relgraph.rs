//! Core domain types for ELT events and binary relations, plus the relational
//! algebra and derived-relation computation everything else consumes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Dense event index, unique within one [`ExecutionGraph`]. Ids are stable
/// under restriction: removed ids simply vanish.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EventId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ThreadId(pub u32);

/// Virtual address symbol. Purely symbolic, no arithmetic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Va(pub u32);

/// Physical address symbol.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Pa(pub u32);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A location operand. Data locations and page-table-entry locations live in
/// disjoint namespaces; there is exactly one PTE location per VA.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Location {
    /// User data at a virtual address.
    Data(Va),
    /// The page-table entry holding the mapping for a virtual address.
    Pte(Va),
}

/// The coordinate two events must share to communicate. Data events
/// communicate on their effective physical address; translation events
/// (PTE writes, PT walks, dirty-bit writes) on the PTE cell they touch.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Coord {
    Phys(Pa),
    PteCell(Va),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum EventKind {
    UserRead,
    UserWrite,
    /// System-level PTE write remapping this event's VA to `new_pa`.
    PteWrite { new_pa: Pa },
    /// TLB invalidation for a VA, either remap-induced or spurious.
    Invlpg,
    Fence,
    /// Ghost page-table walk loading a mapping into the invoker's TLB.
    PtWalk,
    /// Ghost dirty-bit update invoked by a user-facing write.
    DirtyBitWrite,
}

impl EventKind {
    pub fn is_ghost(self) -> bool {
        matches!(self, EventKind::PtWalk | EventKind::DirtyBitWrite)
    }
    pub fn is_user_data(self) -> bool {
        matches!(self, EventKind::UserRead | EventKind::UserWrite)
    }
    pub fn is_memory(self) -> bool {
        !matches!(self, EventKind::Invlpg | EventKind::Fence)
    }
    pub fn is_read(self) -> bool {
        matches!(self, EventKind::UserRead | EventKind::PtWalk)
    }
    pub fn is_write(self) -> bool {
        matches!(
            self,
            EventKind::UserWrite | EventKind::PteWrite { .. } | EventKind::DirtyBitWrite
        )
    }
}

/// One micro-op: user-facing, system-level, or ghost. Ghost events carry
/// their invoker's thread.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Event {
    pub id: EventId,
    pub kind: EventKind,
    pub thread: ThreadId,
    /// Operand VA: the data VA for user memory events and `invlpg`, the
    /// translated VA for PTE writes / walks / dirty-bit writes (their
    /// location is that VA's PTE cell), absent for fences.
    pub va: Option<Va>,
}

impl Event {
    /// The location this event addresses, if any.
    pub fn location(&self) -> Option<Location> {
        let va = self.va?;
        match self.kind {
            EventKind::UserRead | EventKind::UserWrite => Some(Location::Data(va)),
            EventKind::PteWrite { .. } | EventKind::PtWalk | EventKind::DirtyBitWrite => {
                Some(Location::Pte(va))
            }
            EventKind::Invlpg => Some(Location::Data(va)),
            EventKind::Fence => None,
        }
    }
}

/// Source of a read value or of an address mapping: the initial state or a
/// specific event.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Src {
    Init,
    Ev(EventId),
}

/// A binary relation over event ids, with set semantics.
#[derive(Clone, PartialEq, Eq, Default, Debug)]
pub struct Relation {
    pairs: BTreeSet<(EventId, EventId)>,
}

impl Relation {
    pub fn new() -> Self {
        Relation::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (EventId, EventId)>>(iter: I) -> Self {
        Relation { pairs: iter.into_iter().collect() }
    }

    pub fn insert(&mut self, a: EventId, b: EventId) {
        self.pairs.insert((a, b));
    }

    pub fn contains(&self, a: EventId, b: EventId) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventId, EventId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn union(&self, other: &Relation) -> Relation {
        Relation { pairs: self.pairs.union(&other.pairs).copied().collect() }
    }

    pub fn intersect(&self, other: &Relation) -> Relation {
        Relation { pairs: self.pairs.intersection(&other.pairs).copied().collect() }
    }

    pub fn inverse(&self) -> Relation {
        Relation::from_pairs(self.iter().map(|(a, b)| (b, a)))
    }

    /// Relational join: `{(a, c) : (a, b) in self, (b, c) in other}`.
    pub fn compose(&self, other: &Relation) -> Relation {
        let mut by_src: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
        for (b, c) in other.iter() {
            by_src.entry(b).or_default().push(c);
        }
        let mut out = Relation::new();
        for (a, b) in self.iter() {
            if let Some(cs) = by_src.get(&b) {
                for &c in cs {
                    out.insert(a, c);
                }
            }
        }
        out
    }

    /// Drops all pairs with an endpoint outside `keep`.
    pub fn restrict(&self, keep: &BTreeSet<EventId>) -> Relation {
        Relation::from_pairs(
            self.iter().filter(|(a, b)| keep.contains(a) && keep.contains(b)),
        )
    }

    /// Smallest transitive superset.
    pub fn transitive_closure(&self) -> Relation {
        let mut closed = self.pairs.clone();
        let mut changed = true;
        while changed {
            changed = false;
            let snapshot: Vec<(EventId, EventId)> = closed.iter().copied().collect();
            let mut by_src: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
            for &(a, b) in &snapshot {
                by_src.entry(a).or_default().push(b);
            }
            for &(a, b) in &snapshot {
                if let Some(cs) = by_src.get(&b) {
                    for &c in cs {
                        if closed.insert((a, c)) {
                            changed = true;
                        }
                    }
                }
            }
        }
        Relation { pairs: closed }
    }

    /// True iff the relation has no directed cycle. On failure,
    /// [`Relation::witness_cycle`] yields a minimal witness.
    pub fn is_acyclic(&self) -> bool {
        self.witness_cycle().is_none()
    }

    /// A shortest cycle, deterministically chosen (smallest length, then
    /// lexicographically least id sequence), as `[e1, ..., ek, e1]`.
    pub fn witness_cycle(&self) -> Option<Vec<EventId>> {
        let mut succ: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
        for (a, b) in self.iter() {
            succ.entry(a).or_default().push(b);
        }
        let mut best: Option<Vec<EventId>> = None;
        // Shortest path back to each start node via BFS; ties resolved by
        // scanning starts and successors in id order.
        let starts: Vec<EventId> = succ.keys().copied().collect();
        for &start in &starts {
            let mut pred: BTreeMap<EventId, EventId> = BTreeMap::new();
            let mut queue = std::collections::VecDeque::new();
            queue.push_back(start);
            let mut seen = BTreeSet::new();
            seen.insert(start);
            let mut found: Option<EventId> = None;
            'bfs: while let Some(u) = queue.pop_front() {
                if let Some(vs) = succ.get(&u) {
                    for &v in vs {
                        if v == start {
                            found = Some(u);
                            break 'bfs;
                        }
                        if seen.insert(v) {
                            pred.insert(v, u);
                            queue.push_back(v);
                        }
                    }
                }
            }
            if let Some(last) = found {
                let mut tail = Vec::new();
                let mut cur = last;
                while cur != start {
                    tail.push(cur);
                    cur = pred[&cur];
                }
                tail.reverse();
                let mut cycle = Vec::with_capacity(tail.len() + 2);
                cycle.push(start);
                cycle.extend(tail);
                cycle.push(start);
                let better = match &best {
                    None => true,
                    Some(b) => cycle.len() < b.len() || (cycle.len() == b.len() && cycle < *b),
                };
                if better {
                    best = Some(cycle);
                }
            }
        }
        best
    }
}

impl FromIterator<(EventId, EventId)> for Relation {
    fn from_iter<I: IntoIterator<Item = (EventId, EventId)>>(iter: I) -> Self {
        Relation::from_pairs(iter)
    }
}

/// Events plus base relations and initial state: the unit the checker judges.
///
/// `rf` maps each read (user read or PT walk) to its value source, `rf_pa`
/// maps each user data event and walk to its mapping source (a PTE write or
/// the initial mapping), `co` is the per-location coherence order over
/// writes, and `co_pa` the per-PA alias-creation order over PTE writes.
/// All types are immutable values after construction.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ExecutionGraph {
    pub events: BTreeMap<EventId, Event>,
    /// Program order: per-thread sequences over non-ghost events.
    pub po: BTreeMap<ThreadId, Vec<EventId>>,
    /// Value source per read; a missing entry means the source was removed
    /// by restriction (the read is unconstrained, not an init read).
    pub rf: BTreeMap<EventId, Src>,
    /// Coherence: all ordered pairs, per location, over writes to it.
    pub co: BTreeSet<(EventId, EventId)>,
    /// Alias-creation order: ordered pairs of PTE writes targeting one PA.
    pub co_pa: BTreeSet<(EventId, EventId)>,
    /// The PT walk sourcing each user data event's translation.
    pub rf_ptw: BTreeMap<EventId, EventId>,
    /// Mapping source per user data event and per walk.
    pub rf_pa: BTreeMap<EventId, Src>,
    /// ghost -> invoker.
    pub ghost: BTreeMap<EventId, EventId>,
    /// PTE write -> invalidations it invokes.
    pub remap: BTreeSet<(EventId, EventId)>,
    /// Read of an RMW -> its write.
    pub rmw: BTreeSet<(EventId, EventId)>,
    /// Injective initial VA-to-PA mapping.
    pub init_map: BTreeMap<Va, Pa>,
}

impl ExecutionGraph {
    pub fn event(&self, id: EventId) -> &Event {
        &self.events[&id]
    }

    pub fn ids(&self) -> impl Iterator<Item = EventId> + '_ {
        self.events.keys().copied()
    }

    pub fn thread_of(&self, id: EventId) -> ThreadId {
        self.events[&id].thread
    }

    /// The initial PA for a VA (fresh distinct PA per VA by construction).
    pub fn init_pa(&self, va: Va) -> Option<Pa> {
        self.init_map.get(&va).copied()
    }

    /// The mapping written by a PTE write or dirty-bit write, when it can be
    /// resolved. A dirty-bit write re-writes its invoker's effective mapping.
    pub fn mapping_written(&self, id: EventId) -> Option<(Va, Pa)> {
        let ev = self.event(id);
        match ev.kind {
            EventKind::PteWrite { new_pa } => Some((ev.va?, new_pa)),
            EventKind::DirtyBitWrite => {
                let inv = *self.ghost.get(&id)?;
                let pa = self.effective_pa(inv)?;
                Some((ev.va?, pa))
            }
            _ => None,
        }
    }

    /// Effective PA of a user data event or walk, from its mapping source.
    pub fn effective_pa(&self, id: EventId) -> Option<Pa> {
        let ev = self.event(id);
        match self.rf_pa.get(&id)? {
            Src::Init => self.init_pa(ev.va?),
            Src::Ev(src) => match self.events.get(src)?.kind {
                EventKind::PteWrite { new_pa } => Some(new_pa),
                _ => None,
            },
        }
    }

    /// The coordinate on which this event communicates, if any.
    pub fn coord(&self, id: EventId) -> Option<Coord> {
        let ev = self.event(id);
        match ev.kind {
            EventKind::UserRead | EventKind::UserWrite => {
                self.effective_pa(id).map(Coord::Phys)
            }
            EventKind::PteWrite { .. } | EventKind::PtWalk | EventKind::DirtyBitWrite => {
                ev.va.map(Coord::PteCell)
            }
            EventKind::Invlpg | EventKind::Fence => None,
        }
    }

    /// Position of every event in ghost-extended program order: non-ghost
    /// events at `(index, 0)`, ghosts at `(invoker index, 1)`. Two ghosts of
    /// one invoker share a slot and are mutually unordered.
    pub fn gpo_slots(&self) -> BTreeMap<EventId, (ThreadId, u32, u8)> {
        let mut slots = BTreeMap::new();
        for (&t, row) in &self.po {
            for (i, &e) in row.iter().enumerate() {
                slots.insert(e, (t, i as u32, 0u8));
            }
        }
        for (&g, &inv) in &self.ghost {
            if let Some(&(t, i, _)) = slots.get(&inv) {
                slots.insert(g, (t, i, 1u8));
            }
        }
        slots
    }

    /// Ghost-extended program order as a relation (already transitive).
    pub fn gpo(&self) -> Relation {
        let slots = self.gpo_slots();
        let mut rel = Relation::new();
        let ids: Vec<EventId> = slots.keys().copied().collect();
        for &a in &ids {
            for &b in &ids {
                if a == b {
                    continue;
                }
                let (ta, ia, sa) = slots[&a];
                let (tb, ib, sb) = slots[&b];
                if ta == tb && (ia, sa) < (ib, sb) {
                    rel.insert(a, b);
                }
            }
        }
        rel
    }

    pub fn po_relation(&self) -> Relation {
        let mut rel = Relation::new();
        for row in self.po.values() {
            for i in 0..row.len() {
                for j in i + 1..row.len() {
                    rel.insert(row[i], row[j]);
                }
            }
        }
        rel
    }

    pub fn rf_relation(&self) -> Relation {
        Relation::from_pairs(self.rf.iter().filter_map(|(&r, &s)| match s {
            Src::Ev(w) => Some((w, r)),
            Src::Init => None,
        }))
    }

    pub fn rf_pa_relation(&self) -> Relation {
        Relation::from_pairs(self.rf_pa.iter().filter_map(|(&e, &s)| match s {
            Src::Ev(w) => Some((w, e)),
            Src::Init => None,
        }))
    }

    pub fn rf_ptw_relation(&self) -> Relation {
        Relation::from_pairs(self.rf_ptw.iter().map(|(&e, &w)| (w, e)))
    }

    pub fn ghost_relation(&self) -> Relation {
        Relation::from_pairs(self.ghost.iter().map(|(&g, &inv)| (inv, g)))
    }

    pub fn co_relation(&self) -> Relation {
        Relation::from_pairs(self.co.iter().copied())
    }

    pub fn co_pa_relation(&self) -> Relation {
        Relation::from_pairs(self.co_pa.iter().copied())
    }

    pub fn remap_relation(&self) -> Relation {
        Relation::from_pairs(self.remap.iter().copied())
    }

    pub fn rmw_relation(&self) -> Relation {
        Relation::from_pairs(self.rmw.iter().copied())
    }

    /// Restriction to `keep`: relations lose pairs with removed endpoints,
    /// source maps lose entries whose source event was removed. Reads whose
    /// source vanished become unconstrained rather than init reads, so
    /// restriction can only delete derived edges.
    pub fn restrict(&self, keep: &BTreeSet<EventId>) -> ExecutionGraph {
        let alive = |id: &EventId| keep.contains(id);
        let src_alive = |s: &Src| match s {
            Src::Init => true,
            Src::Ev(e) => keep.contains(e),
        };
        ExecutionGraph {
            events: self.events.iter().filter(|(id, _)| alive(id)).map(|(&i, &e)| (i, e)).collect(),
            po: self
                .po
                .iter()
                .map(|(&t, row)| (t, row.iter().copied().filter(|e| alive(e)).collect()))
                .filter(|(_, row): &(ThreadId, Vec<EventId>)| !row.is_empty())
                .collect(),
            rf: self
                .rf
                .iter()
                .filter(|(r, s)| alive(r) && src_alive(s))
                .map(|(&r, &s)| (r, s))
                .collect(),
            co: self.co.iter().filter(|(a, b)| alive(a) && alive(b)).copied().collect(),
            co_pa: self.co_pa.iter().filter(|(a, b)| alive(a) && alive(b)).copied().collect(),
            rf_ptw: self
                .rf_ptw
                .iter()
                .filter(|(e, w)| alive(e) && alive(w))
                .map(|(&e, &w)| (e, w))
                .collect(),
            rf_pa: self
                .rf_pa
                .iter()
                .filter(|(e, s)| alive(e) && src_alive(s))
                .map(|(&e, &s)| (e, s))
                .collect(),
            ghost: self
                .ghost
                .iter()
                .filter(|(g, inv)| alive(g) && alive(inv))
                .map(|(&g, &i)| (g, i))
                .collect(),
            remap: self.remap.iter().filter(|(a, b)| alive(a) && alive(b)).copied().collect(),
            rmw: self.rmw.iter().filter(|(a, b)| alive(a) && alive(b)).copied().collect(),
            init_map: self.init_map.clone(),
        }
    }
}

/// Relations recomputed deterministically from an [`ExecutionGraph`].
#[derive(Clone, Debug)]
pub struct DerivedRelations {
    pub gpo: Relation,
    pub gpo_plus: Relation,
    pub po_loc: Relation,
    pub fr: Relation,
    pub fr_pa: Relation,
    pub fr_va: Relation,
    pub ppo: Relation,
    pub fence: Relation,
    pub rfe: Relation,
    pub com: Relation,
    pub ptw_source: Relation,
    pub effective_pa: BTreeMap<EventId, Pa>,
}

/// Computes every derived relation of `g`.
///
/// `gpo` lifts po with each ghost in its invoker's slot; two ghosts of one
/// invoker stay mutually unordered. `po_loc` keeps gpo pairs with equal
/// communication coordinate. `fr` is `rf^-1 ; co` plus, for init reads,
/// every write to the read's coordinate. `ppo` and `fence` range over
/// user-facing data events only, with write-to-read pairs dropped from
/// `ppo` (the TSO store-to-load relaxation).
pub fn derive(g: &ExecutionGraph) -> DerivedRelations {
    let gpo = g.gpo();
    let gpo_plus = gpo.clone(); // slot order is already transitive
    let coord: BTreeMap<EventId, Coord> =
        g.ids().filter_map(|e| g.coord(e).map(|c| (e, c))).collect();
    let effective_pa: BTreeMap<EventId, Pa> =
        g.ids().filter_map(|e| g.effective_pa(e).map(|p| (e, p))).collect();

    let mut po_loc = Relation::new();
    for (a, b) in gpo_plus.iter() {
        if let (Some(ca), Some(cb)) = (coord.get(&a), coord.get(&b)) {
            if ca == cb {
                po_loc.insert(a, b);
            }
        }
    }

    // Writes per coordinate, for init-read from-reads edges.
    let mut writes_at: BTreeMap<Coord, Vec<EventId>> = BTreeMap::new();
    for e in g.ids() {
        if g.event(e).kind.is_write() {
            if let Some(c) = coord.get(&e) {
                writes_at.entry(*c).or_default().push(e);
            }
        }
    }

    let rf_rel = g.rf_relation();
    let co_rel = g.co_relation();
    let mut fr = rf_rel.inverse().compose(&co_rel);
    for (&r, &src) in &g.rf {
        if src == Src::Init {
            if let Some(c) = coord.get(&r) {
                for &w in writes_at.get(c).into_iter().flatten() {
                    if w != r {
                        fr.insert(r, w);
                    }
                }
            }
        }
    }

    // fr_pa: co_pa-successors of the mapping source; init-mapping readers
    // relate to every PTE write targeting their effective PA.
    let co_pa_rel = g.co_pa_relation();
    let mut fr_pa = Relation::new();
    let mut pte_writes_to: BTreeMap<Pa, Vec<EventId>> = BTreeMap::new();
    for e in g.ids() {
        if let EventKind::PteWrite { new_pa } = g.event(e).kind {
            pte_writes_to.entry(new_pa).or_default().push(e);
        }
    }
    for (&e, &src) in &g.rf_pa {
        match src {
            Src::Ev(p) => {
                for (a, b) in co_pa_rel.iter() {
                    if a == p {
                        fr_pa.insert(e, b);
                    }
                }
            }
            Src::Init => {
                if let Some(pa) = effective_pa.get(&e) {
                    for &p in pte_writes_to.get(pa).into_iter().flatten() {
                        fr_pa.insert(e, p);
                    }
                }
            }
        }
    }

    // fr_va: user data events against later PTE writes to their VA's cell,
    // "later" meaning co-after the event's own mapping source.
    let mut fr_va = Relation::new();
    for (&e, &src) in &g.rf_pa {
        let ev = g.event(e);
        if !ev.kind.is_user_data() {
            continue;
        }
        let va = match ev.va {
            Some(v) => v,
            None => continue,
        };
        for p in g.ids() {
            let pe = g.event(p);
            if !matches!(pe.kind, EventKind::PteWrite { .. }) || pe.va != Some(va) {
                continue;
            }
            let later = match src {
                Src::Init => true,
                Src::Ev(s) => s != p && co_rel.contains(s, p),
            };
            if later {
                fr_va.insert(e, p);
            }
        }
    }

    let mut ppo = Relation::new();
    let mut fence = Relation::new();
    let slots = g.gpo_slots();
    for (a, b) in gpo_plus.iter() {
        let (ka, kb) = (g.event(a).kind, g.event(b).kind);
        if ka.is_user_data() && kb.is_user_data() {
            if !(ka == EventKind::UserWrite && kb == EventKind::UserRead) {
                ppo.insert(a, b);
            }
            let between = g.ids().any(|f| {
                g.event(f).kind == EventKind::Fence
                    && slots.get(&f).is_some_and(|sf| {
                        let (sa, sb) = (slots[&a], slots[&b]);
                        sa.0 == sf.0 && (sa.1, sa.2) < (sf.1, sf.2) && (sf.1, sf.2) < (sb.1, sb.2)
                    })
            });
            if between {
                fence.insert(a, b);
            }
        }
    }

    let rfe = Relation::from_pairs(
        rf_rel.iter().filter(|&(w, r)| g.thread_of(w) != g.thread_of(r)),
    );
    let com = rf_rel.union(&co_rel).union(&fr);

    let mut ptw_source = Relation::new();
    for (&g_ev, &inv) in &g.ghost {
        if g.event(g_ev).kind == EventKind::PtWalk {
            for (&user, &w) in &g.rf_ptw {
                if w == g_ev && user != inv {
                    ptw_source.insert(inv, user);
                }
            }
        }
    }

    DerivedRelations {
        gpo,
        gpo_plus,
        po_loc,
        fr,
        fr_pa,
        fr_va,
        ppo,
        fence,
        rfe,
        com,
        ptw_source,
        effective_pa,
    }
}

/// Incremental construction of programs and executions. Initial mappings
/// default to a fresh distinct PA per VA, allocated on first use.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    next_event: u32,
    next_thread: u32,
    next_pa: u32,
    g: ExecutionGraph,
}

impl GraphBuilder {
    pub fn new() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn thread(&mut self) -> ThreadId {
        let t = ThreadId(self.next_thread);
        self.next_thread += 1;
        self.g.po.insert(t, Vec::new());
        t
    }

    pub fn fresh_pa(&mut self) -> Pa {
        let pa = Pa(self.next_pa);
        self.next_pa += 1;
        pa
    }

    /// Declares an explicit initial mapping; VAs without one get a fresh PA
    /// on first use.
    pub fn set_init(&mut self, va: Va, pa: Pa) {
        self.g.init_map.insert(va, pa);
        self.next_pa = self.next_pa.max(pa.0 + 1);
    }

    fn touch_va(&mut self, va: Va) {
        if !self.g.init_map.contains_key(&va) {
            let pa = self.fresh_pa();
            self.g.init_map.insert(va, pa);
        }
    }

    fn push(&mut self, thread: ThreadId, kind: EventKind, va: Option<Va>) -> EventId {
        let id = EventId(self.next_event);
        self.next_event += 1;
        if let Some(v) = va {
            self.touch_va(v);
        }
        self.g.events.insert(id, Event { id, kind, thread, va });
        if !kind.is_ghost() {
            self.g.po.entry(thread).or_default().push(id);
        }
        id
    }

    pub fn push_user(&mut self, thread: ThreadId, kind: EventKind, va: u32) -> EventId {
        debug_assert!(kind.is_user_data());
        self.push(thread, kind, Some(Va(va)))
    }

    pub fn push_pte_write(&mut self, thread: ThreadId, va: u32, new_pa: Pa) -> EventId {
        self.next_pa = self.next_pa.max(new_pa.0 + 1);
        self.push(thread, EventKind::PteWrite { new_pa }, Some(Va(va)))
    }

    pub fn push_invlpg(&mut self, thread: ThreadId, va: u32) -> EventId {
        self.push(thread, EventKind::Invlpg, Some(Va(va)))
    }

    pub fn push_fence(&mut self, thread: ThreadId) -> EventId {
        self.push(thread, EventKind::Fence, None)
    }

    /// Attaches the dirty-bit ghost write of a user write.
    pub fn add_dirty_bit(&mut self, writer: EventId) -> EventId {
        let (thread, va) = {
            let w = &self.g.events[&writer];
            (w.thread, w.va)
        };
        let id = self.push(thread, EventKind::DirtyBitWrite, va);
        self.g.ghost.insert(id, writer);
        id
    }

    /// Attaches the page-table-walk ghost of a user data event.
    pub fn add_walk(&mut self, user: EventId) -> EventId {
        let (thread, va) = {
            let u = &self.g.events[&user];
            (u.thread, u.va)
        };
        let id = self.push(thread, EventKind::PtWalk, va);
        self.g.ghost.insert(id, user);
        id
    }

    pub fn add_remap(&mut self, pte: EventId, invlpg: EventId) {
        self.g.remap.insert((pte, invlpg));
    }

    pub fn add_rmw(&mut self, read: EventId, write: EventId) {
        self.g.rmw.insert((read, write));
    }

    pub fn set_rf(&mut self, read: EventId, src: Src) {
        self.g.rf.insert(read, src);
    }

    pub fn set_rf_pa(&mut self, e: EventId, src: Src) {
        self.g.rf_pa.insert(e, src);
    }

    pub fn set_rf_ptw(&mut self, user: EventId, walk: EventId) {
        self.g.rf_ptw.insert(user, walk);
    }

    pub fn add_co(&mut self, earlier: EventId, later: EventId) {
        self.g.co.insert((earlier, later));
    }

    pub fn add_co_pa(&mut self, earlier: EventId, later: EventId) {
        self.g.co_pa.insert((earlier, later));
    }

    pub fn into_program(self) -> crate::oracle::Program {
        crate::oracle::Program::from_graph(&self.into_graph())
    }

    /// Finishes the graph, transitively closing the coherence orders.
    pub fn into_graph(self) -> ExecutionGraph {
        let mut g = self.g;
        g.co = Relation::from_pairs(g.co.iter().copied())
            .transitive_closure()
            .iter()
            .collect();
        g.co_pa = Relation::from_pairs(g.co_pa.iter().copied())
            .transitive_closure()
            .iter()
            .collect();
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: u32) -> EventId {
        EventId(n)
    }

    #[test]
    fn closure_of_empty_is_empty() {
        assert!(Relation::new().transitive_closure().is_empty());
    }

    #[test]
    fn closure_of_chain() {
        let r = Relation::from_pairs([(e(1), e(2)), (e(2), e(3))]);
        let tc = r.transitive_closure();
        assert_eq!(
            tc,
            Relation::from_pairs([(e(1), e(2)), (e(2), e(3)), (e(1), e(3))])
        );
    }

    #[test]
    fn closure_of_two_cycle() {
        let r = Relation::from_pairs([(e(1), e(2)), (e(2), e(1))]);
        let tc = r.transitive_closure();
        assert_eq!(
            tc,
            Relation::from_pairs([(e(1), e(2)), (e(2), e(1)), (e(1), e(1)), (e(2), e(2))])
        );
    }

    #[test]
    fn acyclic_checks() {
        assert!(Relation::new().is_acyclic());
        let r = Relation::from_pairs([(e(1), e(2)), (e(2), e(1))]);
        assert_eq!(r.witness_cycle(), Some(vec![e(1), e(2), e(1)]));
    }

    #[test]
    fn compose_and_restrict() {
        let r1 = Relation::from_pairs([(e(1), e(2))]);
        let r2 = Relation::from_pairs([(e(2), e(3))]);
        assert_eq!(r1.compose(&r2), Relation::from_pairs([(e(1), e(3))]));
        let r = Relation::from_pairs([(e(1), e(2)), (e(2), e(3))]);
        let keep: BTreeSet<EventId> = [e(1), e(2)].into_iter().collect();
        assert_eq!(r.restrict(&keep), Relation::from_pairs([(e(1), e(2))]));
    }
}
