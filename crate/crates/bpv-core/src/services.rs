//! Packaged reasoning services over a business-process knowledge base:
//! the named verification properties, conjunctive retrieval with
//! terminological atoms, and execution-trace checking/generation.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

use crate::annotation::AnnotationSet;
use crate::ctl::{validate_nf, CtlFormula, Evaluator, NfLiteral};
use crate::enactment::{Action, EnactmentContext, KripkeGraph, DEFAULT_STATE_BUDGET};
use crate::error::{Error, Result};
use crate::fluent::{FluentExpr, FluentPattern, State, Subst, Term};
use crate::model::{self, ElementKind, ProcessSchema};
use crate::ontology::{vocab, Triple, TripleObject, TripleStore};

// ---------------------------------------------------------------------------
// Verdicts and witnesses
// ---------------------------------------------------------------------------

/// A path through the reachability graph: `states[i] --actions[i]--> states[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessPath {
    pub states: Vec<usize>,
    pub actions: Vec<Action>,
}

impl WitnessPath {
    pub fn to_json(&self, graph: &KripkeGraph) -> serde_json::Value {
        serde_json::json!({
            "states": self.states.iter().map(|&i| {
                graph.states[i].iter().map(|f| f.to_string()).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
            "actions": self.actions.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        })
    }
}

/// Outcome of a verification service: the truth value plus either a witness
/// path or the bindings that explain it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    pub witness: Option<WitnessPath>,
    pub bindings: Vec<Subst>,
}

impl Verdict {
    fn plain(holds: bool) -> Verdict {
        Verdict { holds, witness: None, bindings: Vec::new() }
    }
}

// ---------------------------------------------------------------------------
// Retrieval queries
// ---------------------------------------------------------------------------

/// One atom of a retrieval query over the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryAtom {
    /// A schema fact or derived schema predicate (task, activity, seq, ...).
    Fact { predicate: String, terms: Vec<Term> },
    /// Terminological annotation: the element's annotation concept is
    /// subsumed by `concept` in the ontology.
    Sigma { element: Term, concept: String },
    /// Hierarchy-aware control-flow reachability inside `process`.
    Reachable { from: Term, to: Term, process: Term },
    /// A branching-time property of `process`, checked at its initial state.
    Holds { formula: CtlFormula, process: Term },
    /// Term equality; binds a variable when the other side is ground.
    Eq { left: Term, right: Term },
}

/// A possibly negated query atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryLiteral {
    pub positive: bool,
    pub atom: QueryAtom,
}

impl QueryLiteral {
    pub fn pos(atom: QueryAtom) -> QueryLiteral {
        QueryLiteral { positive: true, atom }
    }

    pub fn neg(atom: QueryAtom) -> QueryLiteral {
        QueryLiteral { positive: false, atom }
    }

    /// The literal as seen by normal-form validation. Built-in atoms become
    /// plain literals under reserved predicate names; their variables are
    /// bound by enumeration just like schema facts.
    fn to_nf(&self) -> NfLiteral {
        match &self.atom {
            QueryAtom::Fact { predicate, terms } => NfLiteral::Plain {
                positive: self.positive,
                predicate: predicate.clone(),
                terms: terms.clone(),
            },
            QueryAtom::Sigma { element, concept } => NfLiteral::Plain {
                positive: self.positive,
                predicate: "sigma".into(),
                terms: vec![element.clone(), Term::Const(concept.clone())],
            },
            QueryAtom::Reachable { from, to, process } => NfLiteral::Plain {
                positive: self.positive,
                predicate: "reachable".into(),
                terms: vec![from.clone(), to.clone(), process.clone()],
            },
            QueryAtom::Eq { left, right } => NfLiteral::Plain {
                positive: self.positive,
                predicate: "=".into(),
                terms: vec![left.clone(), right.clone()],
            },
            QueryAtom::Holds { formula, process } => NfLiteral::Holds {
                positive: self.positive,
                formula: formula.clone(),
                state: process.clone(),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Knowledge base
// ---------------------------------------------------------------------------

/// A loaded knowledge base: the enactment context plus cached reachability
/// graphs, exposing the verification and retrieval services.
pub struct KnowledgeBase {
    ctx: EnactmentContext,
    budget: usize,
    graphs: RefCell<BTreeMap<String, Rc<KripkeGraph>>>,
    /// element -> canonical annotation-concept names.
    term_refs: BTreeMap<String, BTreeSet<String>>,
}

impl KnowledgeBase {
    /// Build from the parsed inputs. Complex annotation concepts are
    /// normalized into named classes (with their defining axioms) so
    /// subsumption questions about them reduce to named subsumption. Fails
    /// when the schema is not well-formed.
    pub fn new(
        schema: ProcessSchema,
        store: &TripleStore,
        annotations: AnnotationSet,
    ) -> Result<KnowledgeBase> {
        let report = model::well_formedness(&schema);
        if !report.is_well_formed() {
            let first = report.violations[0].to_string();
            return Err(Error::NotWellFormed(report.violations.len(), first));
        }
        let mut store = store.clone();
        let mut term_refs: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for tr in &annotations.term_refs {
            let name = tr.concept.normalize(&mut store);
            term_refs.entry(tr.element.clone()).or_default().insert(name);
        }
        let ctx = EnactmentContext::new(schema, &store, annotations);
        Ok(KnowledgeBase {
            ctx,
            budget: DEFAULT_STATE_BUDGET,
            graphs: RefCell::new(BTreeMap::new()),
            term_refs,
        })
    }

    pub fn with_budget(mut self, budget: usize) -> KnowledgeBase {
        self.budget = budget;
        self
    }

    pub fn context(&self) -> &EnactmentContext {
        &self.ctx
    }

    pub fn schema(&self) -> &ProcessSchema {
        &self.ctx.schema
    }

    /// The (cached) reachability graph of a top-level process.
    pub fn graph(&self, process: &str) -> Result<Rc<KripkeGraph>> {
        if let Some(g) = self.graphs.borrow().get(process) {
            return Ok(Rc::clone(g));
        }
        let g = Rc::new(self.ctx.state_space(process, self.budget)?);
        self.graphs.borrow_mut().insert(process.to_string(), Rc::clone(&g));
        Ok(g)
    }

    /// Shortest path (BFS) from the initial state to any goal state.
    fn shortest_path_to(graph: &KripkeGraph, goal: &[bool]) -> Option<WitnessPath> {
        if goal[graph.initial()] {
            return Some(WitnessPath { states: vec![graph.initial()], actions: Vec::new() });
        }
        let mut parent: Vec<Option<(usize, Action)>> = vec![None; graph.len()];
        let mut seen = vec![false; graph.len()];
        let mut queue = VecDeque::from([graph.initial()]);
        seen[graph.initial()] = true;
        let mut target = None;
        'bfs: while let Some(i) = queue.pop_front() {
            for (a, j) in &graph.succ[i] {
                if !seen[*j] {
                    seen[*j] = true;
                    parent[*j] = Some((i, a.clone()));
                    if goal[*j] {
                        target = Some(*j);
                        break 'bfs;
                    }
                    queue.push_back(*j);
                }
            }
        }
        let mut at = target?;
        let mut states = vec![at];
        let mut actions = Vec::new();
        while let Some((prev, action)) = parent[at].clone() {
            states.push(prev);
            actions.push(action);
            at = prev;
        }
        states.reverse();
        actions.reverse();
        Some(WitnessPath { states, actions })
    }

    // -----------------------------------------------------------------------
    // Named verification properties
    // -----------------------------------------------------------------------

    /// Soundness of the control flow: from every reachable state a final
    /// state remains reachable (AG EF final). On failure the witness is a
    /// shortest path to a state with no route to completion.
    pub fn option_to_complete(&self, process: &str) -> Result<Verdict> {
        let graph = self.graph(process)?;
        let ev = Evaluator::new(&self.ctx, &graph);
        let final_f = CtlFormula::final_state(Term::Const(process.to_string()));
        let can_finish = ev.sat(&CtlFormula::ef(final_f))?;
        if can_finish.iter().all(|&b| b) {
            return Ok(Verdict::plain(true));
        }
        let stuck: Vec<bool> = can_finish.iter().map(|b| !b).collect();
        Ok(Verdict {
            holds: false,
            witness: Self::shortest_path_to(&graph, &stuck),
            bindings: Vec::new(),
        })
    }

    /// Reachability of a state that violates an integrity constraint
    /// (EF false). Witness: shortest path to such a state.
    pub fn inconsistency(&self, process: &str) -> Result<Verdict> {
        let graph = self.graph(process)?;
        let ev = Evaluator::new(&self.ctx, &graph);
        let bad = ev.sat(&CtlFormula::contradiction())?;
        let holds = bad.iter().any(|&b| b);
        Ok(Verdict {
            holds,
            witness: if holds { Self::shortest_path_to(&graph, &bad) } else { None },
            bindings: Vec::new(),
        })
    }

    /// Activities some execution reaches but that can never begin there
    /// (unwritten inputs or an unsatisfiable enabling condition):
    /// EF(cf(X,A,c) ∧ ¬EX en(A,c)), with c the activity's own context.
    pub fn non_executable_activities(&self, process: &str) -> Result<BTreeSet<String>> {
        let graph = self.graph(process)?;
        let ev = Evaluator::new(&self.ctx, &graph);
        let mut out = BTreeSet::new();
        for (activity, context) in self.ctx.schema.activities_in_hierarchy(process) {
            let a = Term::Const(activity.clone());
            let c = Term::Const(context.clone());
            let stuck = CtlFormula::ef(CtlFormula::and(
                CtlFormula::atom(FluentPattern::Cf(Term::Var("X".into()), a.clone(), c.clone())),
                CtlFormula::not(CtlFormula::ex(CtlFormula::atom(FluentPattern::En(a, c)))),
            ));
            if !ev.eval_open(&stuck, graph.initial())?.is_empty() {
                out.insert(activity);
            }
        }
        Ok(out)
    }

    /// Check a compliance rule given as the *noncompliance* pattern: the
    /// process complies iff the pattern matches nothing at the initial
    /// state; bindings are returned as counter-witnesses.
    pub fn compliance(&self, process: &str, noncompliance: &CtlFormula) -> Result<Verdict> {
        let graph = self.graph(process)?;
        let ev = Evaluator::new(&self.ctx, &graph);
        let bindings = if noncompliance.is_ground() {
            if ev.eval(noncompliance, graph.initial())? {
                vec![Subst::new()]
            } else {
                Vec::new()
            }
        } else {
            ev.eval_open(noncompliance, graph.initial())?
        };
        Ok(Verdict { holds: bindings.is_empty(), witness: None, bindings })
    }

    // -----------------------------------------------------------------------
    // Retrieval
    // -----------------------------------------------------------------------

    /// Annotation subsumption: some annotation concept of `element` is
    /// subsumed by `concept` in the ontology closure.
    pub fn sigma(&self, element: &str, concept: &str) -> bool {
        self.term_refs.get(element).is_some_and(|cs| {
            cs.iter().any(|c| {
                c == concept
                    || self.ctx.store.contains(&Triple::term(c, vocab::SUB_CLASS, concept))
            })
        })
    }

    fn fact_tuples(&self, predicate: &str) -> Result<Vec<Vec<String>>> {
        let s = &self.ctx.schema;
        let of_kind = |kinds: &[ElementKind]| -> Vec<Vec<String>> {
            s.kinds
                .iter()
                .filter(|(_, ks)| kinds.iter().any(|k| ks.contains(k)))
                .map(|(e, _)| vec![e.clone()])
                .collect()
        };
        let triples = |rel: &[(String, String, String)]| -> Vec<Vec<String>> {
            rel.iter().map(|(a, b, c)| vec![a.clone(), b.clone(), c.clone()]).collect()
        };
        let seqs = || -> Vec<Vec<String>> {
            s.seq.iter().map(|e| vec![e.from.clone(), e.to.clone(), e.process.clone()]).collect()
        };
        use ElementKind as K;
        const GATEWAYS: [ElementKind; 6] =
            [K::ExcBranch, K::ExcMerge, K::IncBranch, K::IncMerge, K::ParBranch, K::ParMerge];
        let tuples = match predicate {
            "bp" => {
                s.processes.iter().map(|(p, (a, b))| vec![p.clone(), a.clone(), b.clone()]).collect()
            }
            "comp_act" => {
                s.compounds.iter().map(|(p, (a, b))| vec![p.clone(), a.clone(), b.clone()]).collect()
            }
            "task" => of_kind(&[K::Task]),
            "start_event" => of_kind(&[K::StartEvent]),
            "int_event" => of_kind(&[K::IntEvent]),
            "end_event" => of_kind(&[K::EndEvent]),
            "exc_branch" => of_kind(&[K::ExcBranch]),
            "exc_merge" => of_kind(&[K::ExcMerge]),
            "inc_branch" => of_kind(&[K::IncBranch]),
            "inc_merge" => of_kind(&[K::IncMerge]),
            "par_branch" => of_kind(&[K::ParBranch]),
            "par_merge" => of_kind(&[K::ParMerge]),
            "item" => of_kind(&[K::Item]),
            "participant" => of_kind(&[K::Participant]),
            "seq" => seqs(),
            "exception" => triples(&s.exceptions),
            "input" => triples(&s.inputs),
            "output" => triples(&s.outputs),
            "assigned" => triples(&s.assignments),
            // Derived classifications.
            "activity" => of_kind(&[K::Task, K::Compound]),
            "event" => of_kind(&[K::StartEvent, K::IntEvent, K::EndEvent]),
            "gateway" => of_kind(&GATEWAYS),
            "element" => {
                let mut all = vec![K::Task, K::Compound, K::StartEvent, K::IntEvent, K::EndEvent];
                all.extend(GATEWAYS);
                of_kind(&all)
            }
            "relation" => {
                let mut v = seqs();
                v.extend(triples(&s.exceptions));
                v
            }
            // Static knowledge: the loaded ontology under TBox closure. List
            // objects (intersection plumbing) are not answer terms.
            "t" | "tf" => self
                .ctx
                .store
                .triples
                .iter()
                .filter_map(|t| match &t.object {
                    TripleObject::Term(o) => {
                        Some(vec![t.subject.clone(), t.predicate.clone(), o.clone()])
                    }
                    TripleObject::List(_) => None,
                })
                .collect(),
            other => return Err(Error::Other(format!("unknown query predicate `{other}`"))),
        };
        Ok(tuples)
    }

    fn unify_tuple(terms: &[Term], tuple: &[String], env: &Subst) -> Option<Subst> {
        if terms.len() != tuple.len() {
            return None;
        }
        let mut env = env.clone();
        for (t, v) in terms.iter().zip(tuple) {
            match t.apply(&env) {
                Term::Const(c) => {
                    if &c != v {
                        return None;
                    }
                }
                Term::Var(name) => {
                    env.insert(name, v.clone());
                }
            }
        }
        Some(env)
    }

    /// Evaluate a conjunction of (possibly negated) atoms left to right,
    /// returning every satisfying substitution. The query must pass
    /// normal-form validation, which guarantees evaluation never reaches an
    /// unbound variable where a ground value is required.
    pub fn retrieve(&self, query: &[QueryLiteral]) -> Result<Vec<Subst>> {
        let literals: Vec<NfLiteral> = query.iter().map(|l| l.to_nf()).collect();
        let report = validate_nf(&literals);
        if !report.accepted {
            return Err(Error::NotNormalForm(report.to_string()));
        }
        let mut thetas: Vec<Subst> = vec![Subst::new()];
        for (lit, nf) in query.iter().zip(&literals) {
            let mut next: BTreeSet<Subst> = BTreeSet::new();
            for theta in &thetas {
                self.extend_bindings(lit, nf, theta, &mut next)?;
            }
            thetas = next.into_iter().collect();
            if thetas.is_empty() {
                break;
            }
        }
        Ok(thetas)
    }

    fn extend_bindings(
        &self,
        lit: &QueryLiteral,
        nf: &NfLiteral,
        theta: &Subst,
        out: &mut BTreeSet<Subst>,
    ) -> Result<()> {
        let ground_or_err = |t: &Term| -> Result<String> {
            match t.apply(theta) {
                Term::Const(c) => Ok(c),
                Term::Var(v) => Err(Error::UnsafePattern { var: v, pattern: nf.to_string() }),
            }
        };
        match &lit.atom {
            QueryAtom::Fact { predicate, terms } => {
                let tuples = self.fact_tuples(predicate)?;
                if lit.positive {
                    for tuple in &tuples {
                        if let Some(env) = Self::unify_tuple(terms, tuple, theta) {
                            out.insert(env);
                        }
                    }
                } else if !tuples.iter().any(|t| Self::unify_tuple(terms, t, theta).is_some()) {
                    out.insert(theta.clone());
                }
            }
            QueryAtom::Sigma { element, concept } => {
                if lit.positive {
                    match element.apply(theta) {
                        Term::Const(e) => {
                            if self.sigma(&e, concept) {
                                out.insert(theta.clone());
                            }
                        }
                        Term::Var(v) => {
                            for e in self.term_refs.keys() {
                                if self.sigma(e, concept) {
                                    let mut env = theta.clone();
                                    env.insert(v.clone(), e.clone());
                                    out.insert(env);
                                }
                            }
                        }
                    }
                } else if !self.sigma(&ground_or_err(element)?, concept) {
                    out.insert(theta.clone());
                }
            }
            QueryAtom::Reachable { from, to, process } => {
                let p = ground_or_err(process)?;
                let mut elements: BTreeSet<String> = BTreeSet::new();
                for ctx in self.ctx.schema.hierarchy(&p) {
                    elements.extend(self.ctx.schema.elements_of(&ctx));
                    elements.insert(ctx);
                }
                let candidates = |t: &Term| -> Vec<String> {
                    match t.apply(theta) {
                        Term::Const(c) => vec![c],
                        Term::Var(_) => elements.iter().cloned().collect(),
                    }
                };
                for f in candidates(from) {
                    for t in candidates(to) {
                        let ok = model::reachable(&self.ctx.schema, &f, &t, &p)?;
                        if ok == lit.positive {
                            let tuple = vec![f.clone(), t, p.clone()];
                            let terms = [from.clone(), to.clone(), process.clone()];
                            if let Some(env) = Self::unify_tuple(&terms, &tuple, theta) {
                                out.insert(env);
                            }
                        }
                    }
                }
            }
            QueryAtom::Eq { left, right } => match (left.apply(theta), right.apply(theta)) {
                (Term::Const(a), Term::Const(b)) => {
                    if (a == b) == lit.positive {
                        out.insert(theta.clone());
                    }
                }
                (Term::Var(v), Term::Const(c)) | (Term::Const(c), Term::Var(v)) => {
                    if lit.positive {
                        let mut env = theta.clone();
                        env.insert(v, c);
                        out.insert(env);
                    } else {
                        return Err(Error::UnsafePattern { var: v, pattern: nf.to_string() });
                    }
                }
                (Term::Var(v), Term::Var(_)) => {
                    return Err(Error::UnsafePattern { var: v, pattern: nf.to_string() });
                }
            },
            QueryAtom::Holds { formula, process } => {
                let p = ground_or_err(process)?;
                let graph = self.graph(&p)?;
                let ev = Evaluator::new(&self.ctx, &graph);
                let f = formula.apply(theta);
                if f.is_ground() {
                    if ev.eval(&f, graph.initial())? == lit.positive {
                        out.insert(theta.clone());
                    }
                } else if lit.positive {
                    for binding in ev.eval_open(&f, graph.initial())? {
                        let mut env = theta.clone();
                        env.extend(binding);
                        out.insert(env);
                    }
                } else {
                    // Normal-form validation forces negative literals to be
                    // ground by evaluation time; reaching here is a bug.
                    let v = f.vars().into_iter().next().unwrap_or_default();
                    return Err(Error::UnsafePattern { var: v, pattern: nf.to_string() });
                }
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Trace services
    // -----------------------------------------------------------------------

    /// True iff the actions replay from the initial state to a state where
    /// the process is final. Nondeterministic actions (same label, several
    /// targets) are tracked as a frontier of possible states.
    pub fn check_trace(&self, trace: &[Action], process: &str) -> Result<bool> {
        let final_f = FluentExpr::Final(Term::Const(process.to_string()));
        let mut frontier: BTreeSet<State> = BTreeSet::from([self.ctx.initial_state(process)?]);
        for action in trace {
            let mut next = BTreeSet::new();
            for state in &frontier {
                for (a, target) in self.ctx.successors(state)? {
                    if &a == action {
                        next.insert(target);
                    }
                }
            }
            if next.is_empty() {
                return Ok(false);
            }
            frontier = next;
        }
        for state in &frontier {
            if self.ctx.holds(state, &final_f)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// All correct traces of length ≤ `max_len`, optionally filtered by an
    /// ordering condition `(a, b)`: every completion of b must be preceded
    /// by some completion of a.
    pub fn generate_traces(
        &self,
        process: &str,
        max_len: usize,
        before: Option<(&str, &str)>,
    ) -> Result<Vec<Vec<Action>>> {
        let final_f = FluentExpr::Final(Term::Const(process.to_string()));
        let mut out: BTreeSet<Vec<Action>> = BTreeSet::new();
        // Depth-first over traces rather than states: cycles in the model
        // are cut by the length bound alone.
        let mut stack: Vec<(State, Vec<Action>)> =
            vec![(self.ctx.initial_state(process)?, Vec::new())];
        while let Some((state, trace)) = stack.pop() {
            if self.ctx.holds(&state, &final_f)? {
                out.insert(trace.clone());
            }
            if trace.len() == max_len {
                continue;
            }
            for (action, target) in self.ctx.successors(&state)? {
                let mut t = trace.clone();
                t.push(action);
                stack.push((target, t));
            }
        }
        let satisfies = |trace: &Vec<Action>| -> bool {
            let Some((a, b)) = before else { return true };
            let mut seen_a = false;
            for act in trace {
                if act == &Action::complete(b) && !seen_a {
                    return false;
                }
                if act == &Action::complete(a) {
                    seen_a = true;
                }
            }
            true
        };
        Ok(out.into_iter().filter(satisfies).collect())
    }
}

// ---------------------------------------------------------------------------
// The documented retrieval examples
// ---------------------------------------------------------------------------

fn var(name: &str) -> Term {
    Term::Var(name.into())
}

fn fact(predicate: &str, terms: Vec<Term>) -> QueryLiteral {
    QueryLiteral::pos(QueryAtom::Fact { predicate: predicate.into(), terms })
}

fn sigma_atom(element: Term, concept: &str) -> QueryLiteral {
    QueryLiteral::pos(QueryAtom::Sigma { element, concept: concept.into() })
}

/// Activities assigned to a carrier that realize a transportation service.
pub fn carrier_transport_query() -> Vec<QueryLiteral> {
    vec![
        fact("activity", vec![var("A")]),
        fact("assigned", vec![var("A"), var("C"), var("P")]),
        sigma_atom(var("C"), "bro:Carrier"),
        sigma_atom(var("A"), "bro:Transportation"),
    ]
}

/// Purchase-order producers from which some exclusive decision point leads
/// on to a carrier-transport activity; `root` scopes reachability.
pub fn order_decision_transport_query(root: &str) -> Vec<QueryLiteral> {
    vec![
        fact("activity", vec![var("B")]),
        fact("assigned", vec![var("B"), var("C"), var("P")]),
        sigma_atom(var("C"), "bro:Carrier"),
        sigma_atom(var("B"), "bro:Transportation"),
        fact("output", vec![var("A"), var("I"), var("PA")]),
        sigma_atom(var("I"), "bro:Purchase_Order"),
        fact("exc_branch", vec![var("G")]),
        QueryLiteral::pos(QueryAtom::Reachable {
            from: var("A"),
            to: var("G"),
            process: Term::Const(root.into()),
        }),
        QueryLiteral::pos(QueryAtom::Reachable {
            from: var("G"),
            to: var("B"),
            process: Term::Const(root.into()),
        }),
    ]
}

/// Purchase-order producers that every run enables before it enables the
/// carrier-transport activity. The ordering is an until-formula over the
/// root process; each `en` atom carries the activity's own context.
pub fn order_precedes_transport_query(root: &str) -> Vec<QueryLiteral> {
    let ordering = CtlFormula::not(CtlFormula::eu(
        CtlFormula::not(CtlFormula::atom(FluentPattern::En(var("A"), var("PA")))),
        CtlFormula::atom(FluentPattern::En(var("B"), var("PB"))),
    ));
    vec![
        fact("activity", vec![var("B")]),
        fact("assigned", vec![var("B"), var("C"), var("PB")]),
        sigma_atom(var("C"), "bro:Carrier"),
        sigma_atom(var("B"), "bro:Transportation"),
        fact("output", vec![var("A"), var("I"), var("PA")]),
        sigma_atom(var("I"), "bro:Purchase_Order"),
        QueryLiteral::pos(QueryAtom::Reachable {
            from: var("A"),
            to: var("B"),
            process: Term::Const(root.into()),
        }),
        QueryLiteral::pos(QueryAtom::Holds {
            formula: ordering,
            process: Term::Const(root.into()),
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_annotations;
    use crate::ctl::parse_ctl;
    use crate::model::parse_process_facts;
    use crate::ontology::load_axioms;

    fn build(bps: &str, dl: &str, ann: &str) -> KnowledgeBase {
        let schema = parse_process_facts("t", bps).unwrap();
        let store = load_axioms("t", dl).unwrap();
        let set = parse_annotations("t", ann, &schema).unwrap();
        KnowledgeBase::new(schema, &store, set).unwrap()
    }

    const MINIMAL: &str = "bp(p,s,e)\nstart_event(s)\nend_event(e)\nseq(s,e,p)\n";
    const ONE_TASK: &str =
        "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nseq(s,a,p)\nseq(a,e,p)\n";
    const DIAMOND: &str =
        "bp(p,s,e)\nstart_event(s)\nend_event(e)\npar_branch(g)\npar_merge(m)\ntask(a)\ntask(b)\n\
         seq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n";

    #[test]
    fn rejects_malformed_schemas() {
        let schema = parse_process_facts("t", "bp(p,s,e)\nstart_event(s)\nend_event(e)\n").unwrap();
        let err = KnowledgeBase::new(schema, &TripleStore::default(), AnnotationSet::default())
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(err, Error::NotWellFormed(..)), "got {err:?}");
    }

    #[test]
    fn option_to_complete_and_deadlock_witness() {
        assert!(build(ONE_TASK, "", "").option_to_complete("p").unwrap().holds);
        // An exclusive choice feeding a parallel merge: only one arm ever
        // carries a token, so the merge waits forever.
        let vicious = "bp(p,s,e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\ntask(a)\ntask(b)\n\
                       par_merge(m)\nseq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\n\
                       seq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n";
        let verdict = build(vicious, "", "").option_to_complete("p").unwrap();
        assert!(!verdict.holds);
        let w = verdict.witness.expect("deadlock witness");
        assert_eq!(w.states.first(), Some(&0));
        assert_eq!(w.states.len(), w.actions.len() + 1);
    }

    #[test]
    fn witness_paths_replay_through_successors() {
        let kb = build(
            ONE_TASK,
            "c:A disjointWith c:B\n",
            "eff(a, true, [], [tf(x,rdf:type,c:A),tf(x,rdf:type,c:B)], p)\n",
        );
        let verdict = kb.inconsistency("p").unwrap();
        assert!(verdict.holds);
        let w = verdict.witness.expect("inconsistency witness");
        let graph = kb.graph("p").unwrap();
        for (i, action) in w.actions.iter().enumerate() {
            let here = &graph.states[w.states[i]];
            let there = &graph.states[w.states[i + 1]];
            let succs = kb.context().successors(here).unwrap();
            assert!(succs.contains(&(action.clone(), there.clone())));
        }
        // The final witness state is genuinely contradictory.
        let last = &graph.states[*w.states.last().unwrap()];
        assert!(kb.context().closure(last).contradiction);
    }

    #[test]
    fn consistent_models_report_no_inconsistency() {
        assert!(!build(ONE_TASK, "c:A disjointWith c:B\n", "").inconsistency("p").unwrap().holds);
    }

    #[test]
    fn non_executable_activity_is_detected() {
        let kb = build(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\ntask(b)\nseq(s,a,p)\nseq(a,b,p)\nseq(b,e,p)\n",
            "class c:Never\n",
            "pre(b, tf(X,rdf:type,c:Never), p)\n",
        );
        assert_eq!(kb.non_executable_activities("p").unwrap(), BTreeSet::from(["b".to_string()]));
        assert!(build(ONE_TASK, "", "").non_executable_activities("p").unwrap().is_empty());
    }

    #[test]
    fn compliance_returns_counter_witness_bindings() {
        // Noncompliance pattern: some run finishes without ever enabling a.
        let skip = "bp(p,s,e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\nexc_merge(m)\ntask(a)\n\
                    seq(s,g,p)\nseq(g,a,p)\nseq(g,m,p)\nseq(a,m,p)\nseq(m,e,p)\n";
        let skipping = parse_ctl("t", 1, "eu(not(en(a,p)),final(p))").unwrap();
        let verdict = build(skip, "", "").compliance("p", &skipping).unwrap();
        assert!(!verdict.holds);
        assert_eq!(verdict.bindings, vec![Subst::new()]);
        // A linear process cannot skip its only task.
        assert!(build(ONE_TASK, "", "").compliance("p", &skipping).unwrap().holds);
    }

    #[test]
    fn retrieve_joins_schema_sigma_reachability_and_properties() {
        let kb = build(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\ntask(b)\nparticipant(w)\nitem(i)\n\
             seq(s,a,p)\nseq(a,b,p)\nseq(b,e,p)\nassigned(b,w,p)\noutput(a,i,p)\n",
            "class c:Carrier\nclass c:Transportation\nc:Haulage subClassOf c:Transportation\n\
             class c:Purchase_Order\n",
            "termRef(w, c:Carrier)\ntermRef(b, c:Haulage)\ntermRef(i, c:Purchase_Order)\n",
        );
        // Subsumption is reflexive and transitive through the closure.
        assert!(kb.sigma("b", "c:Transportation"));
        assert!(kb.sigma("b", "c:Haulage"));
        assert!(!kb.sigma("w", "c:Transportation"));

        let q = vec![
            fact("activity", vec![var("A")]),
            fact("assigned", vec![var("A"), var("C"), var("P")]),
            sigma_atom(var("C"), "c:Carrier"),
            sigma_atom(var("A"), "c:Transportation"),
        ];
        let rows = kb.retrieve(&q).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].get("A").map(String::as_str), Some("b"));

        // Add reachability and an ordering property: a precedes b everywhere.
        let mut q2 = q.clone();
        q2.push(fact("output", vec![var("W"), var("I"), var("P")]));
        q2.push(QueryLiteral::pos(QueryAtom::Reachable {
            from: var("W"),
            to: var("A"),
            process: Term::Const("p".into()),
        }));
        q2.push(QueryLiteral::pos(QueryAtom::Holds {
            formula: CtlFormula::not(CtlFormula::eu(
                CtlFormula::not(CtlFormula::atom(FluentPattern::En(var("W"), var("P")))),
                CtlFormula::atom(FluentPattern::En(var("A"), var("P"))),
            )),
            process: Term::Const("p".into()),
        }));
        let rows = kb.retrieve(&q2).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].get("W").map(String::as_str), Some("a"));

        // Fresh variables under negation are rejected up front.
        let unsafe_neg = vec![
            fact("task", vec![var("A")]),
            QueryLiteral::neg(QueryAtom::Fact {
                predicate: "assigned".into(),
                terms: vec![var("A"), var("C2"), var("P2")],
            }),
        ];
        assert!(matches!(kb.retrieve(&unsafe_neg), Err(Error::NotNormalForm(_))));

        // Ground negation filters: only the unassigned task survives.
        let neg_ground = vec![
            fact("task", vec![var("A")]),
            fact("participant", vec![var("C2")]),
            fact("bp", vec![var("P2"), var("S"), var("E")]),
            QueryLiteral::neg(QueryAtom::Fact {
                predicate: "assigned".into(),
                terms: vec![var("A"), var("C2"), var("P2")],
            }),
        ];
        let rows = kb.retrieve(&neg_ground).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].get("A").map(String::as_str), Some("a"));
    }

    #[test]
    fn retrieve_enumerates_equality_and_derived_predicates() {
        let kb = build(DIAMOND, "", "");
        let rows = kb
            .retrieve(&[
                fact("gateway", vec![var("G")]),
                QueryLiteral::pos(QueryAtom::Eq { left: var("X"), right: var("G") }),
            ])
            .unwrap();
        let gs: Vec<_> = rows.iter().map(|s| s.get("X").unwrap().as_str()).collect();
        assert_eq!(gs, vec!["g", "m"]);
        let rows = kb
            .retrieve(&[fact("relation", vec![var("F"), Term::Const("e".into()), var("P")])])
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].get("F").map(String::as_str), Some("m"));
        assert!(kb.retrieve(&[fact("unknown_pred", vec![var("X")])]).is_err());
    }

    #[test]
    fn retrieve_is_invariant_under_variable_renaming() {
        let kb = build(ONE_TASK, "", "");
        let tuples = |names: [&str; 3]| -> Vec<Vec<String>> {
            kb.retrieve(&[fact("seq", names.map(var).to_vec())])
                .unwrap()
                .into_iter()
                .map(|s| names.iter().map(|n| s[*n].clone()).collect())
                .collect()
        };
        assert_eq!(tuples(["X", "Y", "P"]), tuples(["From", "To", "Proc"]));
    }

    #[test]
    fn check_trace_accepts_exactly_the_correct_runs() {
        let kb = build(MINIMAL, "", "");
        let ok = vec![Action::complete("s"), Action::complete("e")];
        assert!(kb.check_trace(&ok, "p").unwrap());
        assert!(!kb.check_trace(&[], "p").unwrap());
        assert!(!kb.check_trace(&[Action::complete("e")], "p").unwrap());
        assert!(!kb.check_trace(&[Action::complete("s")], "p").unwrap());
        let extra = vec![Action::complete("s"), Action::complete("e"), Action::complete("e")];
        assert!(!kb.check_trace(&extra, "p").unwrap());
    }

    #[test]
    fn generated_traces_pass_check_trace_and_honor_ordering() {
        let kb = build(DIAMOND, "", "");
        let traces = kb.generate_traces("p", 8, None).unwrap();
        // Two gateway completions bracket the interleavings of begin/complete
        // of a and b: C(4,2) = 6 orderings.
        assert_eq!(traces.len(), 6);
        for t in &traces {
            assert!(kb.check_trace(t, "p").unwrap(), "trace {t:?} must replay");
        }
        let ordered = kb.generate_traces("p", 8, Some(("a", "b"))).unwrap();
        assert_eq!(ordered.len(), 3);
        for t in &ordered {
            let pa = t.iter().position(|x| x == &Action::complete("a")).unwrap();
            let pb = t.iter().position(|x| x == &Action::complete("b")).unwrap();
            assert!(pa < pb);
        }
        // The length bound is honored.
        assert!(kb.generate_traces("p", 0, None).unwrap().is_empty());
        let minimal = build(MINIMAL, "", "");
        assert_eq!(
            minimal.generate_traces("p", 2, None).unwrap(),
            vec![vec![Action::complete("s"), Action::complete("e")]]
        );
    }

    #[test]
    fn canned_query_shapes_pass_nf_validation() {
        for q in [
            carrier_transport_query(),
            order_decision_transport_query("p"),
            order_precedes_transport_query("p"),
        ] {
            let literals: Vec<NfLiteral> = q.iter().map(|l| l.to_nf()).collect();
            let report = validate_nf(&literals);
            assert!(report.accepted, "{report}");
        }
    }
}
