//! Declarative axiom layer: relational expressions, named axioms, the
//! `x86t_elt` transistency model, and the checker classifying executions.

use crate::relgraph::{derive, DerivedRelations, EventId, ExecutionGraph, Relation};
use crate::wellformed::{validate, WfViolation};

/// Expression tree over the base + derived relation namespace.
#[derive(Clone, Debug)]
pub enum RelExpr {
    Base(&'static str),
    Union(Vec<RelExpr>),
    Compose(Box<RelExpr>, Box<RelExpr>),
    Closure(Box<RelExpr>),
    Inverse(Box<RelExpr>),
}

impl RelExpr {
    pub fn base(name: &'static str) -> RelExpr {
        RelExpr::Base(name)
    }
    pub fn union_of(parts: impl IntoIterator<Item = RelExpr>) -> RelExpr {
        RelExpr::Union(parts.into_iter().collect())
    }
}

#[derive(Clone, Debug)]
pub enum Assertion {
    Acyclic(RelExpr),
    EmptyIntersect(RelExpr, RelExpr),
}

/// A named transistency predicate component.
#[derive(Clone, Debug)]
pub struct Axiom {
    pub name: &'static str,
    pub assertion: Assertion,
}

/// A conjunction of axioms, checked in order.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: &'static str,
    pub axioms: Vec<Axiom>,
}

impl Model {
    pub fn axiom(&self, name: &str) -> Option<&Axiom> {
        self.axioms.iter().find(|a| a.name == name)
    }
    pub fn axiom_names(&self) -> Vec<&'static str> {
        self.axioms.iter().map(|a| a.name).collect()
    }
}

/// Witness for one violated axiom: a cycle (for acyclicity axioms) or an
/// offending pair (for emptiness axioms).
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Witness {
    Cycle(Vec<EventId>),
    Pair(EventId, EventId),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Verdict {
    pub consistent: bool,
    pub violated: Vec<(String, Witness)>,
}

impl Verdict {
    pub fn violated_names(&self) -> Vec<&str> {
        self.violated.iter().map(|(n, _)| n.as_str()).collect()
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum CheckError {
    #[error("unresolved relation name `{0}`")]
    UnresolvedName(String),
    #[error("execution is not well-formed: {}", format_violations(.0))]
    NotWellFormed(Vec<WfViolation>),
}

fn format_violations(vs: &[WfViolation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

fn resolve(
    g: &ExecutionGraph,
    d: &DerivedRelations,
    name: &str,
) -> Result<Relation, CheckError> {
    let rel = match name {
        "po" => g.po_relation(),
        "rf" => g.rf_relation(),
        "co" => g.co_relation(),
        "co_pa" => g.co_pa_relation(),
        "rf_ptw" => g.rf_ptw_relation(),
        "rf_pa" => g.rf_pa_relation(),
        "ghost" => g.ghost_relation(),
        "remap" => g.remap_relation(),
        "rmw" => g.rmw_relation(),
        "gpo" => d.gpo.clone(),
        "gpo+" => d.gpo_plus.clone(),
        "po_loc" => d.po_loc.clone(),
        "fr" => d.fr.clone(),
        "fr_pa" => d.fr_pa.clone(),
        "fr_va" => d.fr_va.clone(),
        "ppo" => d.ppo.clone(),
        "fence" => d.fence.clone(),
        "rfe" => d.rfe.clone(),
        "com" => d.com.clone(),
        "ptw_source" => d.ptw_source.clone(),
        _ => return Err(CheckError::UnresolvedName(name.to_string())),
    };
    Ok(rel)
}

/// Evaluates a relational expression against base and derived relations.
pub fn eval_expr(
    g: &ExecutionGraph,
    d: &DerivedRelations,
    e: &RelExpr,
) -> Result<Relation, CheckError> {
    Ok(match e {
        RelExpr::Base(name) => resolve(g, d, name)?,
        RelExpr::Union(parts) => {
            let mut acc = Relation::new();
            for p in parts {
                acc = acc.union(&eval_expr(g, d, p)?);
            }
            acc
        }
        RelExpr::Compose(a, b) => eval_expr(g, d, a)?.compose(&eval_expr(g, d, b)?),
        RelExpr::Closure(a) => eval_expr(g, d, a)?.transitive_closure(),
        RelExpr::Inverse(a) => eval_expr(g, d, a)?.inverse(),
    })
}

/// The estimated Intel x86 memory transistency model: TSO's three axioms
/// plus the remap-freshness axiom and the TLB diagnostic axiom.
pub fn x86t_elt() -> Model {
    use RelExpr::*;
    Model {
        name: "x86t_elt",
        axioms: vec![
            Axiom {
                name: "sc_per_loc",
                assertion: Assertion::Acyclic(RelExpr::union_of([
                    Base("rf"),
                    Base("co"),
                    Base("fr"),
                    Base("po_loc"),
                ])),
            },
            Axiom {
                name: "rmw_atomicity",
                assertion: Assertion::EmptyIntersect(
                    Compose(Box::new(Base("fr")), Box::new(Base("co"))),
                    Base("rmw"),
                ),
            },
            Axiom {
                name: "causality",
                assertion: Assertion::Acyclic(RelExpr::union_of([
                    Base("rfe"),
                    Base("co"),
                    Base("fr"),
                    Base("ppo"),
                    Base("fence"),
                ])),
            },
            Axiom {
                name: "remap_order",
                assertion: Assertion::Acyclic(RelExpr::union_of([
                    Base("fr_va"),
                    Base("gpo+"),
                    Base("remap"),
                ])),
            },
            Axiom {
                name: "tlb_causality",
                assertion: Assertion::Acyclic(RelExpr::union_of([
                    Base("ptw_source"),
                    Base("com"),
                ])),
            },
        ],
    }
}

/// The plain TSO consistency predicate: the first three `x86t_elt` axioms.
pub fn x86_tso() -> Model {
    let mut m = x86t_elt();
    m.name = "x86_tso";
    m.axioms.truncate(3);
    m
}

pub fn model_by_name(name: &str) -> Option<Model> {
    match name {
        "x86t_elt" => Some(x86t_elt()),
        "x86_tso" => Some(x86_tso()),
        _ => None,
    }
}

/// Evaluates each axiom of `m` against `derive(g)`, collecting every
/// violation with a deterministic minimal witness.
pub fn check(g: &ExecutionGraph, m: &Model) -> Result<Verdict, CheckError> {
    let violations = validate(g);
    if !violations.is_empty() {
        return Err(CheckError::NotWellFormed(violations));
    }
    Ok(check_unvalidated(g, m))
}

/// Axiom evaluation without the well-formedness gate. Relaxed (restricted)
/// executions are judged with this; they may dangle sources by design.
pub fn check_unvalidated(g: &ExecutionGraph, m: &Model) -> Verdict {
    let d = derive(g);
    let mut violated = Vec::new();
    for ax in &m.axioms {
        match &ax.assertion {
            Assertion::Acyclic(expr) => {
                let rel = eval_expr(g, &d, expr).expect("built-in axiom names resolve");
                if let Some(cycle) = rel.witness_cycle() {
                    violated.push((ax.name.to_string(), Witness::Cycle(cycle)));
                }
            }
            Assertion::EmptyIntersect(a, b) => {
                let ra = eval_expr(g, &d, a).expect("built-in axiom names resolve");
                let rb = eval_expr(g, &d, b).expect("built-in axiom names resolve");
                let inter = ra.intersect(&rb);
                let first = inter.iter().next();
                if let Some((x, y)) = first {
                    violated.push((ax.name.to_string(), Witness::Pair(x, y)));
                }
            }
        }
    }
    Verdict { consistent: violated.is_empty(), violated }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x86t_elt_axiom_order() {
        let m = x86t_elt();
        assert_eq!(
            m.axiom_names(),
            vec!["sc_per_loc", "rmw_atomicity", "causality", "remap_order", "tlb_causality"]
        );
        assert_eq!(x86_tso().axiom_names(), vec!["sc_per_loc", "rmw_atomicity", "causality"]);
    }
}
