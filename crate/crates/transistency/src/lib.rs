//! Axiomatic modeling of memory transistency: events, relations, well-formed
//! enhanced litmus tests (ELTs), the `x86t_elt` model, a brute-force execution
//! oracle, bounded synthesis of minimal interesting ELTs, and canonicalization.
//!
//! The crate is organized around a few core ideas:
//!
//! * An [`relgraph::ExecutionGraph`] is a set of events (user-facing,
//!   system-level, and ghost) together with base communication relations
//!   (`rf`, `co`, `rf_ptw`, `rf_pa`, `co_pa`, ...). Derived relations
//!   (`fr`, `fr_va`, `po_loc`, `ptw_source`, ...) are recomputed on demand.
//! * A [`model::Model`] is a conjunction of named relational axioms; the
//!   built-in [`model::x86t_elt`] captures an estimated Intel x86 MTM.
//! * The [`oracle`] enumerates every well-formed execution of a structural
//!   [`oracle::Program`], giving ground truth for the checker and for
//!   synthesis soundness.
//! * [`synth`] performs exhaustive bounded synthesis of minimal, interesting
//!   ELT programs per axiom; [`canon`] deduplicates suites up to isomorphism
//!   and compares external tests against a synthesized suite.
//! * [`elt`] is the textual ELT format used by the command-line tools.

pub mod canon;
pub mod elt;
pub mod model;
pub mod oracle;
pub mod relgraph;
pub mod synth;
pub mod wellformed;

pub use model::{check, x86t_elt, Model, Verdict};
pub use oracle::Program;
pub use relgraph::{derive, Event, EventId, EventKind, ExecutionGraph, Relation};
