//! Explicit-state verification engine for semantically annotated business
//! process schemas: ground-fact process models, ontology-aware enactment
//! semantics, branching-time property checking over finite maximal paths,
//! retrieval queries, and execution-trace compliance.

pub mod annotation;
pub mod ctl;
pub mod enactment;
pub mod error;
pub mod fluent;
pub mod model;
pub mod ontology;
pub mod services;

pub use annotation::{parse_annotations, validate_annotations, AnnotationSet};
pub use ctl::{parse_ctl, validate_nf, CtlFormula, NfReport};
pub use enactment::{Action, ActionKind, EnactmentContext, KripkeGraph, DEFAULT_STATE_BUDGET};
pub use error::{Error, Result};
pub use fluent::{Fluent, FluentExpr, FluentPattern, State, Subst, Term};
pub use model::{parse_process_facts, ProcessSchema};
pub use ontology::{load_axioms, load_triples, TripleStore};
pub use services::{KnowledgeBase, Verdict};
