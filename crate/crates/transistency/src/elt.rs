//! Line-oriented textual ELT format: parsing into a structural program plus
//! an optional execution, and deterministic printing. Values are never
//! written; outcomes are captured entirely by the communication relations
//! of the `exec` block.

use std::collections::BTreeMap;

use crate::oracle::Program;
use crate::relgraph::{
    EventId, EventKind, ExecutionGraph, GraphBuilder, Pa, Src, Va,
};
use crate::wellformed::{validate, WfViolation};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Expectation {
    Permitted,
    Forbidden(Vec<String>),
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ExecBlock {
    pub rf: Vec<(String, String)>,
    pub co: Vec<(String, String)>,
    pub co_pa: Vec<(String, String)>,
    /// `(source, event)`, source `"init"` or a PTE write label.
    pub rf_pa: Vec<(String, String)>,
    pub rf_ptw: Vec<(String, String)>,
    pub remap: Vec<(String, String)>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum OpLine {
    Write(String),
    Read(String),
    PteWrite(String, String),
    Invlpg(String),
    Mfence,
    GhostDb(String),
    GhostPtw(String),
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ThreadBlock {
    pub tid: u32,
    pub lines: Vec<(String, OpLine)>,
    pub rmw: Vec<(String, String)>,
}

/// Parsed form of one `.elt` file.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EltDocument {
    pub name: String,
    pub init: Vec<(String, String)>,
    pub threads: Vec<ThreadBlock>,
    pub exec: Option<ExecBlock>,
    pub expect: Option<Expectation>,
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

/// Parses the textual format. Grammar is line-oriented; `#` starts a
/// comment; ghost lines name their parent label; the `exec` block
/// references defined labels.
pub fn parse_document(text: &str) -> Result<EltDocument, ParseError> {
    let mut name = None;
    let mut init = Vec::new();
    let mut threads: Vec<ThreadBlock> = Vec::new();
    let mut exec: Option<ExecBlock> = None;
    let mut expect = None;
    #[derive(PartialEq)]
    enum Section {
        Head,
        Thread,
        Exec,
    }
    let mut section = Section::Head;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words[0] {
            "elt" => {
                if name.is_some() {
                    return err(line_no, "duplicate elt header");
                }
                if words.len() != 2 {
                    return err(line_no, "expected `elt <name>`");
                }
                name = Some(words[1].to_string());
            }
            "init" => {
                if words.len() != 4 || words[2] != "->" {
                    return err(line_no, "expected `init <va> -> <pa>`");
                }
                init.push((words[1].to_string(), words[3].to_string()));
            }
            "thread" => {
                let tid: u32 = match words.get(1).and_then(|w| w.parse().ok()) {
                    Some(t) => t,
                    None => return err(line_no, "expected `thread <tid>`"),
                };
                if threads.iter().any(|t| t.tid == tid) {
                    return err(line_no, format!("duplicate thread {tid}"));
                }
                threads.push(ThreadBlock { tid, ..ThreadBlock::default() });
                section = Section::Thread;
            }
            "rmw" if section == Section::Thread => {
                if words.len() != 3 {
                    return err(line_no, "expected `rmw <readL> <writeL>`");
                }
                threads
                    .last_mut()
                    .unwrap()
                    .rmw
                    .push((words[1].to_string(), words[2].to_string()));
            }
            "exec" => {
                if exec.is_some() {
                    return err(line_no, "duplicate exec block");
                }
                exec = Some(ExecBlock::default());
                section = Section::Exec;
            }
            "expect" => {
                expect = Some(match words.get(1) {
                    Some(&"permitted") => Expectation::Permitted,
                    Some(&"forbidden") => Expectation::Forbidden(
                        words[2..].iter().map(|s| s.to_string()).collect(),
                    ),
                    _ => return err(line_no, "expected `expect (permitted|forbidden) [...]`"),
                });
            }
            "rf" | "co" | "co_pa" | "rf_pa" | "rf_ptw" | "remap" if section == Section::Exec => {
                if words.len() != 3 {
                    return err(line_no, format!("expected `{} <a> <b>`", words[0]));
                }
                let pair = (words[1].to_string(), words[2].to_string());
                let e = exec.as_mut().unwrap();
                match words[0] {
                    "rf" => e.rf.push(pair),
                    "co" => e.co.push(pair),
                    "co_pa" => e.co_pa.push(pair),
                    "rf_pa" => e.rf_pa.push(pair),
                    "rf_ptw" => e.rf_ptw.push(pair),
                    _ => e.remap.push(pair),
                }
            }
            _ if section == Section::Thread => {
                // `<L>: <op>` instruction line.
                let Some(colon) = line.find(':') else {
                    return err(line_no, "expected `<label>: <op>`");
                };
                let label = line[..colon].trim().to_string();
                if label.is_empty() || label.contains(char::is_whitespace) {
                    return err(line_no, "malformed label");
                }
                if threads.iter().any(|t| t.lines.iter().any(|(l, _)| *l == label)) {
                    return err(line_no, format!("duplicate label `{label}`"));
                }
                let op_words: Vec<&str> = line[colon + 1..].split_whitespace().collect();
                let op = match op_words.as_slice() {
                    ["W", va] => OpLine::Write(va.to_string()),
                    ["R", va] => OpLine::Read(va.to_string()),
                    ["Wpte", va, "->", pa] => OpLine::PteWrite(va.to_string(), pa.to_string()),
                    ["invlpg", va] => OpLine::Invlpg(va.to_string()),
                    ["mfence"] => OpLine::Mfence,
                    ["ghost", "db", parent] => OpLine::GhostDb(parent.to_string()),
                    ["ghost", "ptw", parent] => OpLine::GhostPtw(parent.to_string()),
                    _ => return err(line_no, format!("unknown instruction `{}`", line)),
                };
                threads.last_mut().unwrap().lines.push((label, op));
            }
            other => return err(line_no, format!("unexpected `{other}` here")),
        }
    }
    let Some(name) = name else {
        return err(0, "missing `elt <name>` header");
    };
    Ok(EltDocument { name, init, threads, exec, expect })
}

#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum EltError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("`{0}`: undefined label")]
    UndefinedLabel(String),
    #[error("`{0}`: ghost parent must be an earlier user event in the same thread")]
    BadGhostParent(String),
    #[error("not well-formed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    IllFormed(Vec<WfViolation>),
}

/// Lowered form: interned symbols plus the label map, for diagnostics and
/// printing.
#[derive(Debug)]
pub struct Lowered {
    pub program: Program,
    pub execution: Option<ExecutionGraph>,
    pub labels: BTreeMap<String, EventId>,
    pub doc: EltDocument,
}

/// Parses and lowers a document, validating the program structure and, when
/// an `exec` block is present, the full execution.
pub fn parse(text: &str) -> Result<Lowered, EltError> {
    let doc = parse_document(text)?;
    lower(doc)
}

pub fn lower(doc: EltDocument) -> Result<Lowered, EltError> {
    let mut b = GraphBuilder::new();
    let mut vas: BTreeMap<String, Va> = BTreeMap::new();
    let mut pas: BTreeMap<String, Pa> = BTreeMap::new();
    let mut next_va = 0u32;
    let mut intern_va = |name: &str, vas: &mut BTreeMap<String, Va>| -> Va {
        *vas.entry(name.to_string()).or_insert_with(|| {
            let v = Va(next_va);
            next_va += 1;
            v
        })
    };
    // Explicit initial mappings first, so fresh PAs never collide.
    for (va, pa) in &doc.init {
        let v = intern_va(va, &mut vas);
        let n = pas.len() as u32;
        let p = *pas.entry(pa.clone()).or_insert(Pa(n));
        b.set_init(v, p);
    }
    // Reserve names for PTE targets before allocating defaults.
    for t in &doc.threads {
        for (_, op) in &t.lines {
            if let OpLine::PteWrite(_, pa) = op {
                let n = pas.len() as u32;
                pas.entry(pa.clone()).or_insert(Pa(n));
            }
        }
    }

    let mut labels: BTreeMap<String, EventId> = BTreeMap::new();
    for tb in &doc.threads {
        let t = b.thread();
        for (label, op) in &tb.lines {
            let id = match op {
                OpLine::Write(va) => {
                    let v = intern_va(va, &mut vas);
                    b.push_user(t, EventKind::UserWrite, v.0)
                }
                OpLine::Read(va) => {
                    let v = intern_va(va, &mut vas);
                    b.push_user(t, EventKind::UserRead, v.0)
                }
                OpLine::PteWrite(va, pa) => {
                    let v = intern_va(va, &mut vas);
                    b.push_pte_write(t, v.0, pas[pa])
                }
                OpLine::Invlpg(va) => {
                    let v = intern_va(va, &mut vas);
                    b.push_invlpg(t, v.0)
                }
                OpLine::Mfence => b.push_fence(t),
                OpLine::GhostDb(parent) => {
                    let &p = labels
                        .get(parent)
                        .ok_or_else(|| EltError::BadGhostParent(label.clone()))?;
                    b.add_dirty_bit(p)
                }
                OpLine::GhostPtw(parent) => {
                    let &p = labels
                        .get(parent)
                        .ok_or_else(|| EltError::BadGhostParent(label.clone()))?;
                    b.add_walk(p)
                }
            };
            labels.insert(label.clone(), id);
        }
        for (r, w) in &tb.rmw {
            let (&ri, &wi) = (
                labels.get(r).ok_or_else(|| EltError::UndefinedLabel(r.clone()))?,
                labels.get(w).ok_or_else(|| EltError::UndefinedLabel(w.clone()))?,
            );
            b.add_rmw(ri, wi);
        }
    }

    if let Some(exec) = &doc.exec {
        let look = |l: &String| -> Result<EventId, EltError> {
            labels.get(l).copied().ok_or_else(|| EltError::UndefinedLabel(l.clone()))
        };
        for (p, i) in &exec.remap {
            b.add_remap(look(p)?, look(i)?);
        }
        for (w, r) in &exec.rf {
            let src = Src::Ev(look(w)?);
            b.set_rf(look(r)?, src);
        }
        for (a, bb) in &exec.co {
            b.add_co(look(a)?, look(bb)?);
        }
        for (a, bb) in &exec.co_pa {
            b.add_co_pa(look(a)?, look(bb)?);
        }
        for (s, e) in &exec.rf_pa {
            let src = if s == "init" { Src::Init } else { Src::Ev(look(s)?) };
            b.set_rf_pa(look(e)?, src);
        }
        for (w, e) in &exec.rf_ptw {
            b.set_rf_ptw(look(e)?, look(w)?);
        }
        let mut g = b.into_graph();
        // Reads and translated events default to the initial state.
        for (&id, ev) in &g.events.clone() {
            if ev.kind.is_read() && !g.rf.contains_key(&id) {
                g.rf.insert(id, Src::Init);
            }
            if (ev.kind.is_user_data() || ev.kind == EventKind::PtWalk)
                && !g.rf_pa.contains_key(&id)
            {
                g.rf_pa.insert(id, Src::Init);
            }
        }
        let violations = validate(&g);
        if !violations.is_empty() {
            return Err(EltError::IllFormed(violations));
        }
        let program = Program::from_graph(&g);
        Ok(Lowered { program, execution: Some(g), labels, doc })
    } else {
        // Without an exec block the remap structure is implicit: an invlpg
        // immediately after a same-VA PTE write on its thread is bound to
        // it, and a remote invalidation binds to the unique same-VA PTE
        // write when that is unambiguous.
        let mut g = b.into_graph();
        bind_adjacent_remaps(&mut g);
        let violations = structural_violations(&g);
        if !violations.is_empty() {
            return Err(EltError::IllFormed(violations));
        }
        let program = Program::from_graph(&g);
        Ok(Lowered { program, execution: None, labels, doc })
    }
}

/// Binds every invalidation that immediately follows a same-VA PTE write on
/// its own thread to that write, and remote invalidations to the unique
/// same-VA PTE write when unambiguous.
fn bind_adjacent_remaps(g: &mut ExecutionGraph) {
    let rows: Vec<Vec<EventId>> = g.po.values().cloned().collect();
    for row in &rows {
        for w in row.windows(2) {
            let (a, bb) = (w[0], w[1]);
            if let (EventKind::PteWrite { .. }, EventKind::Invlpg) =
                (g.event(a).kind, g.event(bb).kind)
            {
                if g.event(a).va == g.event(bb).va {
                    g.remap.insert((a, bb));
                }
            }
        }
    }
    // Remote invalidations: unique same-VA PTE write elsewhere.
    let bound: std::collections::BTreeSet<EventId> =
        g.remap.iter().map(|&(_, i)| i).collect();
    let invs: Vec<EventId> = g
        .events
        .values()
        .filter(|e| e.kind == EventKind::Invlpg && !bound.contains(&e.id))
        .map(|e| e.id)
        .collect();
    for i in invs {
        let va = g.event(i).va;
        let ptes: Vec<EventId> = g
            .events
            .values()
            .filter(|e| matches!(e.kind, EventKind::PteWrite { .. }) && e.va == va)
            .map(|e| e.id)
            .collect();
        if let [p] = ptes.as_slice() {
            if g.thread_of(*p) != g.thread_of(i) {
                g.remap.insert((*p, i));
            }
        }
    }
}

/// Structural rules only (the communication-free subset).
fn structural_violations(g: &ExecutionGraph) -> Vec<WfViolation> {
    validate(g)
        .into_iter()
        .filter(|v| matches!(v.rule.0, 1 | 2 | 4 | 8 | 10 | 12 | 13))
        .collect()
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn va_name(n: u32) -> String {
    const NAMES: [&str; 6] = ["x", "y", "z", "u", "w", "s"];
    NAMES.get(n as usize).map(|s| s.to_string()).unwrap_or_else(|| format!("v{n}"))
}

fn pa_name(n: u32) -> String {
    const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
    NAMES.get(n as usize).map(|s| s.to_string()).unwrap_or_else(|| format!("p{n}"))
}

fn label_of(id: EventId) -> String {
    format!("e{}", id.0)
}

/// Deterministic canonical text for a program, with its execution when
/// given. `parse(print(x))` reproduces `x` up to label renaming.
pub fn print(name: &str, p: &Program, e: Option<&ExecutionGraph>) -> String {
    let mut out = String::new();
    out.push_str(&format!("elt {name}\n"));
    // Initial mappings for every VA that appears as an operand.
    let used: std::collections::BTreeSet<Va> =
        p.events.values().filter_map(|ev| ev.va).collect();
    for va in &used {
        if let Some(pa) = p.init_map.get(va) {
            out.push_str(&format!("init {} -> {}\n", va_name(va.0), pa_name(pa.0)));
        }
    }
    for (t, row) in &p.po {
        out.push_str(&format!("thread {}\n", t.0));
        for &id in row {
            let ev = &p.events[&id];
            let l = label_of(id);
            match ev.kind {
                EventKind::UserWrite => {
                    out.push_str(&format!("  {l}: W {}\n", va_name(ev.va.unwrap().0)))
                }
                EventKind::UserRead => {
                    out.push_str(&format!("  {l}: R {}\n", va_name(ev.va.unwrap().0)))
                }
                EventKind::PteWrite { new_pa } => out.push_str(&format!(
                    "  {l}: Wpte {} -> {}\n",
                    va_name(ev.va.unwrap().0),
                    pa_name(new_pa.0)
                )),
                EventKind::Invlpg => {
                    out.push_str(&format!("  {l}: invlpg {}\n", va_name(ev.va.unwrap().0)))
                }
                EventKind::Fence => out.push_str(&format!("  {l}: mfence\n")),
                EventKind::PtWalk | EventKind::DirtyBitWrite => unreachable!(),
            }
            // Ghosts immediately after their invoker, dirty bit first.
            let mut ghosts: Vec<(EventId, EventKind)> = p
                .ghost
                .iter()
                .filter(|(_, &inv)| inv == id)
                .map(|(&gh, _)| (gh, p.events[&gh].kind))
                .collect();
            ghosts.sort_by_key(|&(gh, kind)| (kind != EventKind::DirtyBitWrite, gh));
            for (gh, kind) in ghosts {
                let gl = label_of(gh);
                match kind {
                    EventKind::DirtyBitWrite => {
                        out.push_str(&format!("  {gl}: ghost db {l}\n"))
                    }
                    EventKind::PtWalk => out.push_str(&format!("  {gl}: ghost ptw {l}\n")),
                    _ => unreachable!(),
                }
            }
        }
        for &(r, w) in &p.rmw {
            if p.events[&r].thread == *t {
                out.push_str(&format!("  rmw {} {}\n", label_of(r), label_of(w)));
            }
        }
    }
    if let Some(g) = e {
        out.push_str("exec\n");
        for &(pte, inv) in &g.remap {
            out.push_str(&format!("  remap {} {}\n", label_of(pte), label_of(inv)));
        }
        for (&r, &src) in &g.rf {
            if let Src::Ev(w) = src {
                out.push_str(&format!("  rf {} {}\n", label_of(w), label_of(r)));
            }
        }
        for (coord, row) in co_rows(g, &g.co) {
            let _ = coord;
            for pair in row.windows(2) {
                out.push_str(&format!("  co {} {}\n", label_of(pair[0]), label_of(pair[1])));
            }
        }
        for (coord, row) in co_rows(g, &g.co_pa) {
            let _ = coord;
            for pair in row.windows(2) {
                out.push_str(&format!("  co_pa {} {}\n", label_of(pair[0]), label_of(pair[1])));
            }
        }
        for (&ev, &src) in &g.rf_pa {
            if let Src::Ev(w) = src {
                out.push_str(&format!("  rf_pa {} {}\n", label_of(w), label_of(ev)));
            }
        }
        for (&user, &walk) in &g.rf_ptw {
            out.push_str(&format!("  rf_ptw {} {}\n", label_of(walk), label_of(user)));
        }
    }
    out
}

/// Reconstructs each location's total order from the pair set.
fn co_rows(
    g: &ExecutionGraph,
    rel: &std::collections::BTreeSet<(EventId, EventId)>,
) -> Vec<(String, Vec<EventId>)> {
    let mut nodes: std::collections::BTreeSet<EventId> = std::collections::BTreeSet::new();
    for &(a, b) in rel {
        nodes.insert(a);
        nodes.insert(b);
    }
    // Group by successor-count ranking within connected groups; a total
    // order sorts by number of successors, descending.
    let mut groups: BTreeMap<String, Vec<EventId>> = BTreeMap::new();
    for &n in &nodes {
        let key = match g.coord(n) {
            Some(c) => format!("{c:?}"),
            None => format!("?{}", n.0),
        };
        groups.entry(key).or_default().push(n);
    }
    let mut out = Vec::new();
    for (key, mut group) in groups {
        group.sort_by_key(|&n| {
            let succ = rel.iter().filter(|&&(a, _)| a == n).count();
            (usize::MAX - succ, n)
        });
        out.push((key, group));
    }
    out
}

pub fn print_with_expect(
    name: &str,
    p: &Program,
    e: Option<&ExecutionGraph>,
    expect: Option<&Expectation>,
) -> String {
    let mut s = print(name, p, e);
    match expect {
        Some(Expectation::Permitted) => s.push_str("expect permitted\n"),
        Some(Expectation::Forbidden(axioms)) => {
            s.push_str("expect forbidden");
            for a in axioms {
                s.push(' ');
                s.push_str(a);
            }
            s.push('\n');
        }
        None => {}
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_label_is_positioned() {
        let text = "elt t\nthread 0\n  a: R x\n  b: ghost ptw a\nexec\n  rf q a\n";
        match parse(text) {
            Err(EltError::UndefinedLabel(l)) => assert_eq!(l, "q"),
            other => panic!("expected undefined label, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_line() {
        let text = "elt t\nthread 0\n  a: Q x\n";
        match parse(text) {
            Err(EltError::Parse(p)) => assert_eq!(p.line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_program_only() {
        let text = "elt t\nthread 0\n  a: Wpte x -> b\n  b: invlpg x\n  c: R x\n  d: ghost ptw c\n";
        let lowered = parse(text).unwrap();
        let printed = print("t", &lowered.program, None);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(
            crate::canon::canonical_form(&lowered.program),
            crate::canon::canonical_form(&reparsed.program)
        );
    }
}
