//! Semantic annotations: terminological references, preconditions, effects,
//! and guarded control-flow edges.
//!
//! Record syntax, one per line (`%` comments):
//!
//! ```text
//! termRef(element, CLASS-EXPR)
//! pre(element, FLUENT-EXPR, process)
//! eff(element, FLUENT-EXPR, [atom, ...], [atom, ...], process)
//! c_seq(FLUENT-EXPR, branch, successor, process)
//! ```
//!
//! `eff`'s bracketed lists are the negative and positive effects. An element
//! may carry several `eff` records: they are nondeterministic alternatives,
//! and annotating an element replaces its default (true, {}, {}) entirely.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::fluent::{tokenize, Cursor, FluentExpr, FluentPattern, Token};
use crate::model::{ElementKind, ProcessSchema, SeqEdge};
use crate::ontology::{ClassExpr, TripleStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermAnnotation {
    pub element: String,
    pub concept: ClassExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Precondition {
    pub element: String,
    pub condition: FluentExpr,
    pub process: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Effect {
    pub element: String,
    /// Qualification Q: evaluated in the pre-state; its bindings instantiate
    /// the effect sets.
    pub qualification: FluentExpr,
    pub negative: Vec<FluentPattern>,
    pub positive: Vec<FluentPattern>,
    pub process: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardedFlow {
    pub guard: FluentExpr,
    pub branch: String,
    pub successor: String,
    pub process: String,
}

impl fmt::Display for GuardedFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c_seq({},{},{},{})", self.guard, self.branch, self.successor, self.process)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub term_refs: Vec<TermAnnotation>,
    pub preconditions: Vec<Precondition>,
    pub effects: Vec<Effect>,
    pub guards: Vec<GuardedFlow>,
}

impl AnnotationSet {
    pub fn term_ref(&self, element: &str) -> Option<&TermAnnotation> {
        self.term_refs.iter().find(|t| t.element == element)
    }

    /// Preconditions attached to (element, process). Several records are
    /// alternatives: the element may begin when at least one is satisfied.
    /// Empty means the default `true`.
    pub fn preconditions_for(&self, element: &str, process: &str) -> Vec<&Precondition> {
        self.preconditions
            .iter()
            .filter(|p| p.element == element && p.process == process)
            .collect()
    }

    /// Effect alternatives for (element, process); `None` means the element
    /// is unannotated and the default (true, {}, {}) applies.
    pub fn effects_for(&self, element: &str, process: &str) -> Option<Vec<&Effect>> {
        let alts: Vec<&Effect> =
            self.effects.iter().filter(|e| e.element == element && e.process == process).collect();
        if alts.is_empty() {
            None
        } else {
            Some(alts)
        }
    }

    pub fn guards_for(&self, branch: &str, process: &str) -> Vec<&GuardedFlow> {
        self.guards.iter().filter(|g| g.branch == branch && g.process == process).collect()
    }

    pub fn is_guarded(&self, branch: &str, process: &str) -> bool {
        !self.guards_for(branch, process).is_empty()
    }

    /// Constants appearing in annotation fluent atoms (the created
    /// individuals such as the order or the invoice).
    pub fn individuals(&self) -> BTreeSet<String> {
        fn from_expr(e: &FluentExpr, out: &mut BTreeSet<String>) {
            for atom in e.positive_atoms() {
                for t in atom.terms() {
                    if let Some(c) = t.as_const() {
                        out.insert(c.to_string());
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        for p in &self.preconditions {
            from_expr(&p.condition, &mut out);
        }
        for g in &self.guards {
            from_expr(&g.guard, &mut out);
        }
        for e in &self.effects {
            from_expr(&e.qualification, &mut out);
            for atom in e.negative.iter().chain(e.positive.iter()) {
                for t in atom.terms() {
                    if let Some(c) = t.as_const() {
                        out.insert(c.to_string());
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn parse_atom_list(cur: &mut Cursor<'_>) -> Result<Vec<FluentPattern>> {
    cur.expect(&Token::LBracket)?;
    let mut out = Vec::new();
    if cur.peek() == Some(&Token::RBracket) {
        cur.next_tok();
        return Ok(out);
    }
    loop {
        match cur.fluent_expr()? {
            FluentExpr::Atom(p) => out.push(p),
            other => return Err(cur.err(format!("expected a fluent atom in effect list, found `{other}`"))),
        }
        match cur.next_tok() {
            Some(Token::Comma) => continue,
            Some(Token::RBracket) => break,
            _ => return Err(cur.err("expected `,` or `]` in effect list")),
        }
    }
    Ok(out)
}

fn known_element(schema: &ProcessSchema, cur: &Cursor<'_>, name: &str) -> Result<()> {
    if !schema.kinds.contains_key(name) {
        return Err(cur.err(format!("unknown element `{name}`")));
    }
    Ok(())
}

fn known_process(schema: &ProcessSchema, cur: &Cursor<'_>, name: &str) -> Result<()> {
    if !schema.contexts().contains_key(name) {
        return Err(cur.err(format!("unknown process `{name}`")));
    }
    Ok(())
}

/// Parse an annotation file against a schema. Unknown element or process
/// references are errors; semantic checks live in [`validate_annotations`].
pub fn parse_annotations(file: &str, text: &str, schema: &ProcessSchema) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut line = line.trim();
        if let Some(stripped) = line.strip_suffix('.') {
            line = stripped.trim_end();
        }
        if line.is_empty() {
            continue;
        }
        let toks = tokenize(file, line_no, line)?;
        let mut cur = Cursor::new(file, line_no, &toks);
        let head = cur.expect_ident()?;
        cur.expect(&Token::LParen)?;
        match head.as_str() {
            "termRef" => {
                let element = cur.expect_ident()?;
                known_element(schema, &cur, &element)?;
                cur.expect(&Token::Comma)?;
                let concept = ClassExpr::parse(&mut cur)?;
                cur.expect(&Token::RParen)?;
                set.term_refs.push(TermAnnotation { element, concept });
            }
            "pre" => {
                let element = cur.expect_ident()?;
                known_element(schema, &cur, &element)?;
                cur.expect(&Token::Comma)?;
                let condition = cur.fluent_expr()?;
                cur.expect(&Token::Comma)?;
                let process = cur.expect_ident()?;
                known_process(schema, &cur, &process)?;
                cur.expect(&Token::RParen)?;
                set.preconditions.push(Precondition { element, condition, process });
            }
            "eff" => {
                let element = cur.expect_ident()?;
                known_element(schema, &cur, &element)?;
                cur.expect(&Token::Comma)?;
                let qualification = cur.fluent_expr()?;
                cur.expect(&Token::Comma)?;
                let negative = parse_atom_list(&mut cur)?;
                cur.expect(&Token::Comma)?;
                let positive = parse_atom_list(&mut cur)?;
                cur.expect(&Token::Comma)?;
                let process = cur.expect_ident()?;
                known_process(schema, &cur, &process)?;
                cur.expect(&Token::RParen)?;
                set.effects.push(Effect { element, qualification, negative, positive, process });
            }
            "c_seq" => {
                let guard = cur.fluent_expr()?;
                cur.expect(&Token::Comma)?;
                let branch = cur.expect_ident()?;
                known_element(schema, &cur, &branch)?;
                cur.expect(&Token::Comma)?;
                let successor = cur.expect_ident()?;
                known_element(schema, &cur, &successor)?;
                cur.expect(&Token::Comma)?;
                let process = cur.expect_ident()?;
                known_process(schema, &cur, &process)?;
                cur.expect(&Token::RParen)?;
                set.guards.push(GuardedFlow { guard, branch, successor, process });
            }
            other => {
                return Err(Error::parse(file, line_no, format!("unknown annotation record `{other}`")));
            }
        }
        if !cur.at_end() {
            return Err(Error::parse(file, line_no, "trailing tokens after annotation"));
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AnnotationIssue {
    /// A fluent atom occurs in both E- and E+.
    EffectOverlap,
    /// An effect variable is not positively bound by the qualification.
    UnboundEffectVar,
    /// c_seq names an element that is not a decision gateway.
    GuardOnNonDecision,
    /// A termRef concept mentions a name absent from the ontology.
    UnknownConcept,
}

impl fmt::Display for AnnotationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnnotationIssue::EffectOverlap => "effect-overlap",
            AnnotationIssue::UnboundEffectVar => "unbound-effect-var",
            AnnotationIssue::GuardOnNonDecision => "guard-on-non-decision",
            AnnotationIssue::UnknownConcept => "unknown-concept",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AnnotationViolation {
    pub issue: AnnotationIssue,
    pub element: String,
    pub message: String,
}

impl fmt::Display for AnnotationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.issue, self.message)
    }
}

/// Semantic checks over a parsed annotation set.
pub fn validate_annotations(
    set: &AnnotationSet,
    schema: &ProcessSchema,
    store: &TripleStore,
) -> Vec<AnnotationViolation> {
    let mut out = Vec::new();

    for eff in &set.effects {
        for n in &eff.negative {
            if eff.positive.contains(n) {
                out.push(AnnotationViolation {
                    issue: AnnotationIssue::EffectOverlap,
                    element: eff.element.clone(),
                    message: format!("effect of `{}`: `{n}` occurs in both E- and E+", eff.element),
                });
            }
        }
        let bound = eff.qualification.positive_vars();
        for atom in eff.negative.iter().chain(eff.positive.iter()) {
            for v in atom.vars() {
                if !bound.contains(&v) {
                    out.push(AnnotationViolation {
                        issue: AnnotationIssue::UnboundEffectVar,
                        element: eff.element.clone(),
                        message: format!(
                            "effect of `{}`: variable `{v}` is not positively bound by the qualification",
                            eff.element
                        ),
                    });
                }
            }
        }
    }

    for g in &set.guards {
        match schema.kind(&g.branch) {
            Some(ElementKind::ExcBranch) | Some(ElementKind::IncBranch) => {}
            _ => out.push(AnnotationViolation {
                issue: AnnotationIssue::GuardOnNonDecision,
                element: g.branch.clone(),
                message: format!("guard on `{}`, which is not an exclusive or inclusive branch", g.branch),
            }),
        }
    }

    for t in &set.term_refs {
        for name in t.concept.named_parts() {
            if !store.mentions(&name) {
                out.push(AnnotationViolation {
                    issue: AnnotationIssue::UnknownConcept,
                    element: t.element.clone(),
                    message: format!("termRef of `{}` mentions `{name}`, absent from the ontology", t.element),
                });
            }
        }
    }

    out.sort();
    out.dedup();
    out
}

/// Materialize the control-flow edges implied by guards (`seq <- c_seq`).
pub fn apply_guard_edges(schema: &ProcessSchema, set: &AnnotationSet) -> ProcessSchema {
    let mut out = schema.clone();
    for g in &set.guards {
        let edge = SeqEdge { from: g.branch.clone(), to: g.successor.clone(), process: g.process.clone() };
        if !out.seq.contains(&edge) {
            out.seq.push(edge);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_process_facts;
    use crate::ontology::load_axioms;

    fn schema() -> ProcessSchema {
        parse_process_facts(
            "t",
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nexc_branch(g)\ntask(b)\ntask(c)\n\
             seq(s,a,p)\nseq(a,g,p)\nseq(g,b,p)\nseq(g,c,p)\nseq(b,e,p)\nseq(c,e,p)\nitem(i)\n",
        )
        .unwrap()
    }

    #[test]
    fn parse_all_record_kinds() {
        let text = "\
% annotations
termRef(a, bro:Transportation and (bro:related some bro:Product))
pre(a, tf(O,rdf:type,bro:ApprovedPO), p)
eff(a, tf(O,rdf:type,bro:ApprovedPO), [tf(O,rdf:type,bro:ApprovedPO)], [tf(O,rdf:type,bro:CancelledPO)], p)
c_seq(not(tf(O,rdf:type,bro:ApprovedPO)), g, b, p)
";
        let set = parse_annotations("t", text, &schema()).unwrap();
        assert_eq!(set.term_refs.len(), 1);
        assert_eq!(set.preconditions.len(), 1);
        assert_eq!(set.effects.len(), 1);
        assert_eq!(set.guards.len(), 1);
        assert!(set.is_guarded("g", "p"));
    }

    #[test]
    fn unknown_element_is_a_parse_error() {
        let err = parse_annotations("t", "pre(zzz, true, p)\n", &schema()).unwrap_err();
        assert!(err.to_string().contains("unknown element"));
    }

    #[test]
    fn unknown_process_is_a_parse_error() {
        let err = parse_annotations("t", "pre(a, true, nope)\n", &schema()).unwrap_err();
        assert!(err.to_string().contains("unknown process"));
    }

    #[test]
    fn overlap_and_unbound_vars_are_violations() {
        let text = "\
eff(a, true, [tf(o,rdf:type,bro:A)], [tf(o,rdf:type,bro:A)], p)
eff(b, tf(o,rdf:type,bro:A), [], [tf(X,rdf:type,bro:B)], p)
eff(c, not(tf(X,rdf:type,bro:A)), [], [tf(X,rdf:type,bro:B)], p)
";
        let set = parse_annotations("t", text, &schema()).unwrap();
        let violations = validate_annotations(&set, &schema(), &TripleStore::default());
        assert!(violations.iter().any(|v| v.issue == AnnotationIssue::EffectOverlap && v.element == "a"));
        assert!(violations.iter().any(|v| v.issue == AnnotationIssue::UnboundEffectVar && v.element == "b"));
        // Occurring only under not() does not bind.
        assert!(violations.iter().any(|v| v.issue == AnnotationIssue::UnboundEffectVar && v.element == "c"));
    }

    #[test]
    fn guard_on_task_is_a_violation() {
        let set = parse_annotations("t", "c_seq(true, a, b, p)\n", &schema()).unwrap();
        let violations = validate_annotations(&set, &schema(), &TripleStore::default());
        assert!(violations.iter().any(|v| v.issue == AnnotationIssue::GuardOnNonDecision));
    }

    #[test]
    fn concepts_must_occur_in_the_ontology() {
        let store = load_axioms("t", "bro:Carrier subClassOf bro:Organizational_Actor\n").unwrap();
        let set = parse_annotations("t", "termRef(i, bro:Carrier)\ntermRef(a, bro:Ghost)\n", &schema()).unwrap();
        let violations = validate_annotations(&set, &schema(), &store);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("bro:Ghost"));
    }

    #[test]
    fn guard_edges_are_materialized() {
        let sch = parse_process_facts(
            "t",
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\ntask(b)\ntask(c)\nseq(s,g,p)\nseq(g,b,p)\nseq(b,e,p)\nseq(c,e,p)\n",
        )
        .unwrap();
        let set = parse_annotations("t", "c_seq(true, g, c, p)\n", &sch).unwrap();
        let augmented = apply_guard_edges(&sch, &set);
        assert!(augmented.seq.iter().any(|e| e.from == "g" && e.to == "c" && e.process == "p"));
        // Idempotent for existing edges.
        let set2 = parse_annotations("t", "c_seq(true, g, b, p)\n", &sch).unwrap();
        let again = apply_guard_edges(&sch, &set2);
        assert_eq!(again.seq.len(), sch.seq.len());
    }
}
