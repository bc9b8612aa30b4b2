//! Fluent-calculus enactment engine: ontology-aware satisfaction, the
//! transition relation over states, reachability-graph construction, and the
//! effect-consistency report.
//!
//! States are finite sets of ground fluents under the closed-world reading.
//! `tf` fluents are special: they hold either by membership or by derivation
//! through the ontology's schema axioms (see [`EnactmentContext::closure`]).

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::annotation::{apply_guard_edges, AnnotationSet, Effect};
use crate::error::{Error, Result};
use crate::fluent::{Fluent, FluentExpr, State, Subst, Term};
use crate::model::{ElementKind, ProcessSchema, END_MARKER, START_MARKER};
use crate::ontology::{tbox_closure, vocab, TripleObject, TripleStore};

pub const DEFAULT_STATE_BUDGET: usize = 100_000;

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Begin,
    Complete,
}

/// Transition label: `begin(a)` starts an activity, `complete(e)` finishes
/// the execution of any flow element (events and gateways execute in a single
/// completion step).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub element: String,
}

impl Action {
    pub fn begin(element: impl Into<String>) -> Action {
        Action { kind: ActionKind::Begin, element: element.into() }
    }

    pub fn complete(element: impl Into<String>) -> Action {
        Action { kind: ActionKind::Complete, element: element.into() }
    }

    /// Parse `begin(a)` / `complete(a)`.
    pub fn parse(text: &str) -> Result<Action> {
        let t = text.trim();
        let inner = |prefix: &str| -> Option<&str> {
            t.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')
        };
        if let Some(el) = inner("begin") {
            return Ok(Action::begin(el.trim()));
        }
        if let Some(el) = inner("complete") {
            return Ok(Action::complete(el.trim()));
        }
        Err(Error::Other(format!("cannot parse action `{t}`: expected begin(..) or complete(..)")))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Begin => write!(f, "begin({})", self.element),
            ActionKind::Complete => write!(f, "complete({})", self.element),
        }
    }
}

/// A transition out of a state, remembering which instantiated negative
/// effects the completion removed (needed by the effect-consistency check).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub action: Action,
    pub target: State,
    pub negative_effects: BTreeSet<Fluent>,
}

/// A state together with the `tf` fluents derivable from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Closure {
    /// Asserted fluents plus derived `tf` fluents.
    pub fluents: State,
    /// True when a disjointness axiom is violated by the closure: the
    /// distinguished contradiction (`false`) holds in this state.
    pub contradiction: bool,
}

// ---------------------------------------------------------------------------
// Context
// ---------------------------------------------------------------------------

/// Schema-level rule tables extracted once from the closed ontology.
#[derive(Debug, Default)]
struct RuleTables {
    super_classes: BTreeMap<String, BTreeSet<String>>,
    super_props: BTreeMap<String, BTreeSet<String>>,
    domains: BTreeMap<String, BTreeSet<String>>,
    ranges: BTreeMap<String, BTreeSet<String>>,
    transitive: BTreeSet<String>,
    /// (class, first conjunct, second conjunct)
    intersections: Vec<(String, String, String)>,
    /// (restriction class, property, filler)
    restrictions: Vec<(String, String, String)>,
    /// Both orientations are stored.
    disjoint: Vec<(String, String)>,
}

impl RuleTables {
    fn from_store(store: &TripleStore) -> RuleTables {
        let mut t = RuleTables::default();
        let push = |map: &mut BTreeMap<String, BTreeSet<String>>, k: &str, v: &str| {
            map.entry(k.to_string()).or_default().insert(v.to_string());
        };
        for (a, b) in store.pairs(vocab::SUB_CLASS) {
            push(&mut t.super_classes, a, b);
        }
        for (a, b) in store.pairs(vocab::SUB_PROPERTY) {
            push(&mut t.super_props, a, b);
        }
        for (a, b) in store.pairs(vocab::DOMAIN) {
            push(&mut t.domains, a, b);
        }
        for (a, b) in store.pairs(vocab::RANGE) {
            push(&mut t.ranges, a, b);
        }
        for (p, k) in store.pairs(vocab::TYPE) {
            if k == vocab::TRANSITIVE_PROPERTY {
                t.transitive.insert(p.to_string());
            }
        }
        for (c, items) in store.intersections() {
            if items.len() == 2 {
                t.intersections.push((c.to_string(), items[0].clone(), items[1].clone()));
            }
        }
        t.restrictions = store.restrictions();
        for (a, b) in store.pairs(vocab::DISJOINT_WITH) {
            t.disjoint.push((a.to_string(), b.to_string()));
            t.disjoint.push((b.to_string(), a.to_string()));
        }
        t
    }
}

/// Everything needed to enact a schema: the control-flow facts (with guard
/// edges materialized), the closed ontology, the annotations, and the finite
/// constant universe. Immutable after construction; the per-state derivation
/// closure is memoized internally.
pub struct EnactmentContext {
    pub schema: ProcessSchema,
    /// TBox closure of the loaded ontology.
    pub store: TripleStore,
    pub annotations: AnnotationSet,
    /// Individuals and ontology names; annotations cannot introduce values
    /// outside this universe during enactment.
    pub constants: BTreeSet<String>,
    rules: RuleTables,
    /// Memo keyed by a state's `tf` subset — control fluents never influence
    /// the derivation rules. Value: (derived additions, contradiction).
    memo: RefCell<BTreeMap<Vec<Fluent>, (BTreeSet<Fluent>, bool)>>,
}

impl EnactmentContext {
    pub fn new(schema: ProcessSchema, store: &TripleStore, annotations: AnnotationSet) -> EnactmentContext {
        let schema = apply_guard_edges(&schema, &annotations);
        let closed = tbox_closure(store);
        let rules = RuleTables::from_store(&closed);
        let mut constants = annotations.individuals();
        for t in &closed.triples {
            constants.insert(t.subject.clone());
            match &t.object {
                TripleObject::Term(o) => {
                    constants.insert(o.clone());
                }
                TripleObject::List(items) => constants.extend(items.iter().cloned()),
            }
        }
        EnactmentContext {
            schema,
            store: closed,
            annotations,
            constants,
            rules,
            memo: RefCell::new(BTreeMap::new()),
        }
    }

    /// The start state {cf(start, s, p)} of a top-level process.
    pub fn initial_state(&self, process: &str) -> Result<State> {
        let (s, _) = self
            .schema
            .processes
            .get(process)
            .ok_or_else(|| Error::UnknownProcess(process.to_string()))?;
        let mut state = State::new();
        state.insert(Fluent::Cf {
            from: START_MARKER.to_string(),
            to: s.clone(),
            process: process.to_string(),
        });
        Ok(state)
    }

    // -----------------------------------------------------------------------
    // Derivation closure
    // -----------------------------------------------------------------------

    /// Least fixpoint of the state-level derivation rules (class/property
    /// subsumption, domain, range, transitivity, binary intersection,
    /// existential restriction) over the state's `tf` fluents, plus the
    /// contradiction flag from disjointness.
    pub fn closure(&self, state: &State) -> Closure {
        let tf_key: Vec<Fluent> =
            state.iter().filter(|f| matches!(f, Fluent::Tf { .. })).cloned().collect();
        let cached = self.memo.borrow().get(&tf_key).cloned();
        let (derived, contradiction) = match cached {
            Some(hit) => hit,
            None => {
                let computed = self.derive(&tf_key);
                self.memo.borrow_mut().insert(tf_key, computed.clone());
                computed
            }
        };
        let mut fluents = state.clone();
        fluents.extend(derived);
        Closure { fluents, contradiction }
    }

    /// Derived `tf` fluents of a state (asserted ones included), per spec'd
    /// membership-plus-derivation reading of `tf` satisfaction.
    pub fn derived_closure(&self, state: &State) -> BTreeSet<Fluent> {
        self.closure(state).fluents.into_iter().filter(|f| matches!(f, Fluent::Tf { .. })).collect()
    }

    fn derive(&self, asserted: &[Fluent]) -> (BTreeSet<Fluent>, bool) {
        type T = (String, String, String);
        let mut tfs: BTreeSet<T> = asserted
            .iter()
            .filter_map(|f| match f {
                Fluent::Tf { subject, predicate, object } => {
                    Some((subject.clone(), predicate.clone(), object.clone()))
                }
                _ => None,
            })
            .collect();
        let r = &self.rules;
        loop {
            let mut fresh: Vec<T> = Vec::new();
            let mut types: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for (s, p, o) in &tfs {
                if p == vocab::TYPE {
                    types.entry(o.as_str()).or_default().insert(s.as_str());
                }
            }
            for (s, p, o) in &tfs {
                if p == vocab::TYPE {
                    if let Some(supers) = r.super_classes.get(o) {
                        for c in supers {
                            fresh.push((s.clone(), p.clone(), c.clone()));
                        }
                    }
                } else {
                    if let Some(supers) = r.super_props.get(p) {
                        for q in supers {
                            fresh.push((s.clone(), q.clone(), o.clone()));
                        }
                    }
                    if let Some(cs) = r.domains.get(p) {
                        for c in cs {
                            fresh.push((s.clone(), vocab::TYPE.to_string(), c.clone()));
                        }
                    }
                    if let Some(cs) = r.ranges.get(p) {
                        for c in cs {
                            fresh.push((o.clone(), vocab::TYPE.to_string(), c.clone()));
                        }
                    }
                    if r.transitive.contains(p) {
                        for (s2, p2, o2) in &tfs {
                            if p2 == p && s2 == o {
                                fresh.push((s.clone(), p.clone(), o2.clone()));
                            }
                        }
                    }
                }
            }
            for (c, c1, c2) in &r.intersections {
                if let (Some(m1), Some(m2)) = (types.get(c1.as_str()), types.get(c2.as_str())) {
                    for s in m1.intersection(m2) {
                        fresh.push((s.to_string(), vocab::TYPE.to_string(), c.clone()));
                    }
                }
            }
            for (c, p, filler) in &r.restrictions {
                if let Some(members) = types.get(filler.as_str()) {
                    for (s, p2, o) in &tfs {
                        if p2 == p && members.contains(o.as_str()) {
                            fresh.push((s.clone(), vocab::TYPE.to_string(), c.clone()));
                        }
                    }
                }
            }
            let before = tfs.len();
            tfs.extend(fresh);
            if tfs.len() == before {
                break;
            }
        }
        let mut contradiction = false;
        'outer: for (a, b) in &r.disjoint {
            for (s, p, o) in &tfs {
                if p == vocab::TYPE
                    && o == a
                    && tfs.contains(&(s.clone(), vocab::TYPE.to_string(), b.clone()))
                {
                    contradiction = true;
                    break 'outer;
                }
            }
        }
        let derived = tfs
            .into_iter()
            .map(|(s, p, o)| Fluent::Tf { subject: s, predicate: p, object: o })
            .collect();
        (derived, contradiction)
    }

    // -----------------------------------------------------------------------
    // Satisfaction
    // -----------------------------------------------------------------------

    fn final_holds(&self, c: &Closure, process: &str) -> bool {
        let end = self
            .schema
            .processes
            .get(process)
            .map(|(_, e)| e)
            .or_else(|| self.schema.compounds.get(process).map(|(_, e)| e));
        let Some(end) = end else { return false };
        c.fluents.contains(&Fluent::Cf {
            from: end.clone(),
            to: END_MARKER.to_string(),
            process: process.to_string(),
        })
    }

    fn holds_ground(&self, c: &Closure, expr: &FluentExpr) -> bool {
        match expr {
            FluentExpr::True => true,
            FluentExpr::False => c.contradiction,
            FluentExpr::Atom(p) => match p.to_fluent() {
                Some(f) => c.fluents.contains(&f),
                None => false,
            },
            FluentExpr::Final(t) => t.as_const().map(|p| self.final_holds(c, p)).unwrap_or(false),
            FluentExpr::Not(e) => !self.holds_ground(c, e),
            FluentExpr::And(a, b) => self.holds_ground(c, a) && self.holds_ground(c, b),
        }
    }

    /// Truth of a ground expression in a state (closed world, ontology-aware).
    pub fn holds(&self, state: &State, expr: &FluentExpr) -> Result<bool> {
        if let Some(v) = expr.vars().into_iter().next() {
            return Err(Error::UnsafePattern { var: v, pattern: expr.to_string() });
        }
        Ok(self.holds_ground(&self.closure(state), expr))
    }

    /// Like [`holds`](Self::holds) but against a precomputed closure.
    pub fn holds_in(&self, closure: &Closure, expr: &FluentExpr) -> Result<bool> {
        if let Some(v) = expr.vars().into_iter().next() {
            return Err(Error::UnsafePattern { var: v, pattern: expr.to_string() });
        }
        Ok(self.holds_ground(closure, expr))
    }

    fn solve(
        &self,
        c: &Closure,
        todo: &[&FluentExpr],
        env: Subst,
        delayed: &[&FluentExpr],
        strict: bool,
        out: &mut Vec<Subst>,
    ) -> Result<()> {
        // Retry delayed negations that the current bindings have grounded.
        let mut still: Vec<&FluentExpr> = Vec::new();
        for d in delayed {
            let applied = d.apply(&env);
            if applied.is_ground() {
                if !self.holds_ground(c, &applied) {
                    return Ok(()); // the negation is violated: this branch dies
                }
            } else {
                still.push(d);
            }
        }
        let Some((head, rest)) = todo.split_first() else {
            for d in still {
                let applied = d.apply(&env);
                if strict {
                    let v = applied.vars().into_iter().next().unwrap_or_default();
                    return Err(Error::UnsafePattern { var: v, pattern: d.to_string() });
                }
                // Negation as failure on the residual existential: not(F)
                // succeeds iff F has no satisfying extension of env.
                let FluentExpr::Not(inner) = applied else { return Ok(()) };
                let mut sub = Vec::new();
                self.solve(c, &[&inner], Subst::new(), &[], false, &mut sub)?;
                if !sub.is_empty() {
                    return Ok(());
                }
            }
            out.push(env);
            return Ok(());
        };
        match head {
            FluentExpr::True => self.solve(c, rest, env, &still, strict, out),
            FluentExpr::False => {
                if c.contradiction {
                    self.solve(c, rest, env, &still, strict, out)
                } else {
                    Ok(())
                }
            }
            FluentExpr::And(a, b) => {
                let mut next: Vec<&FluentExpr> = vec![a, b];
                next.extend_from_slice(rest);
                self.solve(c, &next, env, &still, strict, out)
            }
            FluentExpr::Atom(p) => {
                for f in &c.fluents {
                    if let Some(extended) = p.unify(f, &env) {
                        self.solve(c, rest, extended, &still, strict, out)?;
                    }
                }
                Ok(())
            }
            FluentExpr::Final(t) => match t.apply(&env) {
                Term::Const(p) => {
                    if self.final_holds(c, &p) {
                        self.solve(c, rest, env, &still, strict, out)
                    } else {
                        Ok(())
                    }
                }
                Term::Var(v) => {
                    if strict {
                        Err(Error::UnsafePattern { var: v, pattern: head.to_string() })
                    } else {
                        Ok(())
                    }
                }
            },
            FluentExpr::Not(inner) => {
                let applied = inner.apply(&env);
                if applied.is_ground() {
                    if self.holds_ground(c, &applied) {
                        Ok(())
                    } else {
                        self.solve(c, rest, env, &still, strict, out)
                    }
                } else {
                    let mut next_delayed = still;
                    next_delayed.push(head);
                    self.solve(c, rest, env, &next_delayed, strict, out)
                }
            }
        }
    }

    fn bindings_in(&self, c: &Closure, expr: &FluentExpr, strict: bool) -> Result<Vec<Subst>> {
        let mut raw = Vec::new();
        self.solve(c, &[expr], Subst::new(), &[], strict, &mut raw)?;
        let set: BTreeSet<Subst> = raw.into_iter().collect();
        Ok(set.into_iter().collect())
    }

    /// All substitutions under which the pattern holds. Negated subexpressions
    /// are evaluated once their variables are bound; a pattern with a variable
    /// that no positive atom can bind is rejected as unsafe.
    pub fn matches(&self, state: &State, pattern: &FluentExpr) -> Result<Vec<Subst>> {
        let positive = pattern.positive_vars();
        for v in pattern.vars() {
            if !positive.contains(&v) {
                return Err(Error::UnsafePattern { var: v, pattern: pattern.to_string() });
            }
        }
        self.bindings_in(&self.closure(state), pattern, true)
    }

    /// Existential truth used for guards, preconditions, and effect
    /// qualifications: free variables under `not` are read as "no binding
    /// exists", so evaluation never fails.
    pub fn satisfiable(&self, state: &State, expr: &FluentExpr) -> bool {
        self.satisfiable_in(&self.closure(state), expr)
    }

    fn satisfiable_in(&self, c: &Closure, expr: &FluentExpr) -> bool {
        !self.bindings_in(c, expr, false).map(|b| b.is_empty()).unwrap_or(true)
    }

    // -----------------------------------------------------------------------
    // Transition relation
    // -----------------------------------------------------------------------

    fn blocked_input(&self, state: &State, element: &str, process: &str) -> bool {
        self.schema.inputs.iter().any(|(a, item, p)| {
            a == element
                && p == process
                && !state.iter().any(|f| {
                    matches!(f, Fluent::Wrtn { item: it, process: fp, .. } if it == item && fp == process)
                })
        })
    }

    /// Begin gate: declared inputs must have been written, and at least one
    /// enabling condition (if any are declared) must be satisfied.
    fn enabled(&self, c: &Closure, state: &State, element: &str, process: &str) -> bool {
        if self.blocked_input(state, element, process) {
            return false;
        }
        let pres = self.annotations.preconditions_for(element, process);
        pres.is_empty() || pres.iter().any(|p| self.satisfiable_in(c, &p.condition))
    }

    fn written_outputs(&self, element: &str, process: &str) -> BTreeSet<Fluent> {
        self.schema
            .outputs
            .iter()
            .filter(|(a, _, p)| a == element && p == process)
            .map(|(a, it, p)| Fluent::Wrtn { activity: a.clone(), item: it.clone(), process: p.clone() })
            .collect()
    }

    /// Apply every effect alternative of (element, process) on top of the
    /// control-flow update (remove ∪ E⁻θ, add ∪ E⁺θ), one successor per
    /// alternative and binding.
    fn completions(
        &self,
        c: &Closure,
        state: &State,
        element: &str,
        process: &str,
        remove: &BTreeSet<Fluent>,
        add: &BTreeSet<Fluent>,
        acc: &mut BTreeMap<(Action, State), BTreeSet<Fluent>>,
    ) -> Result<()> {
        let default_effect = Effect {
            element: element.to_string(),
            qualification: FluentExpr::True,
            negative: Vec::new(),
            positive: Vec::new(),
            process: process.to_string(),
        };
        let alternatives: Vec<&Effect> = match self.annotations.effects_for(element, process) {
            Some(alts) => alts,
            None => vec![&default_effect],
        };
        for eff in alternatives {
            for theta in self.bindings_in(c, &eff.qualification, false)? {
                let mut removed = BTreeSet::new();
                for pat in &eff.negative {
                    let g = pat.apply(&theta).to_fluent().ok_or_else(|| Error::UnsafePattern {
                        var: pat.vars().into_iter().next().unwrap_or_default(),
                        pattern: pat.to_string(),
                    })?;
                    removed.insert(g);
                }
                let mut added = BTreeSet::new();
                for pat in &eff.positive {
                    let g = pat.apply(&theta).to_fluent().ok_or_else(|| Error::UnsafePattern {
                        var: pat.vars().into_iter().next().unwrap_or_default(),
                        pattern: pat.to_string(),
                    })?;
                    added.insert(g);
                }
                let mut target: State = state
                    .iter()
                    .filter(|f| !remove.contains(f) && !removed.contains(f))
                    .cloned()
                    .collect();
                target.extend(add.iter().cloned());
                target.extend(added);
                let entry = acc.entry((Action::complete(element), target)).or_default();
                entry.extend(removed);
            }
        }
        Ok(())
    }

    /// The full transition relation out of a state, with the instantiated
    /// negative effects that each completion edge removed.
    pub fn transitions(&self, state: &State) -> Result<Vec<Transition>> {
        let c = self.closure(state);
        let mut acc: BTreeMap<(Action, State), BTreeSet<Fluent>> = BTreeMap::new();
        let mut merges: BTreeSet<(String, String, ElementKind)> = BTreeSet::new();

        let pass = |state: &State, remove: &BTreeSet<Fluent>, add: &BTreeSet<Fluent>| -> State {
            let mut s: State = state.iter().filter(|f| !remove.contains(f)).cloned().collect();
            s.extend(add.iter().cloned());
            s
        };
        let plain = |acc: &mut BTreeMap<(Action, State), BTreeSet<Fluent>>,
                         action: Action,
                         remove: BTreeSet<Fluent>,
                         add: BTreeSet<Fluent>| {
            acc.entry((action, pass(state, &remove, &add))).or_default();
        };

        for fluent in state {
            match fluent {
                Fluent::Cf { from, to, process } => {
                    let token = BTreeSet::from([fluent.clone()]);
                    // Completion of a compound: its inner end event has
                    // produced cf(e, end, compound) and en(compound, parent)
                    // still holds in the enclosing process.
                    if to == END_MARKER {
                        if self.schema.compounds.contains_key(process) {
                            let parents: Vec<String> = state
                                .iter()
                                .filter_map(|f| match f {
                                    Fluent::En { activity, process: parent } if activity == process => {
                                        Some(parent.clone())
                                    }
                                    _ => None,
                                })
                                .collect();
                            for parent in parents {
                                for succ in self.schema.successors(process, &parent) {
                                    let mut remove = token.clone();
                                    remove.insert(Fluent::En {
                                        activity: process.clone(),
                                        process: parent.clone(),
                                    });
                                    let mut add = BTreeSet::from([Fluent::Cf {
                                        from: process.clone(),
                                        to: succ.to_string(),
                                        process: parent.clone(),
                                    }]);
                                    add.extend(self.written_outputs(process, &parent));
                                    self.completions(&c, state, process, &parent, &remove, &add, &mut acc)?;
                                }
                            }
                        }
                        continue;
                    }
                    let kind = match self.schema.kind(to) {
                        Some(k) => k,
                        None => continue,
                    };
                    match kind {
                        ElementKind::StartEvent => {
                            if from == START_MARKER {
                                for succ in self.schema.successors(to, process) {
                                    plain(
                                        &mut acc,
                                        Action::complete(to),
                                        token.clone(),
                                        BTreeSet::from([Fluent::Cf {
                                            from: to.clone(),
                                            to: succ.to_string(),
                                            process: process.clone(),
                                        }]),
                                    );
                                }
                            }
                        }
                        ElementKind::EndEvent => {
                            plain(
                                &mut acc,
                                Action::complete(to),
                                token.clone(),
                                BTreeSet::from([Fluent::Cf {
                                    from: to.clone(),
                                    to: END_MARKER.to_string(),
                                    process: process.clone(),
                                }]),
                            );
                        }
                        ElementKind::IntEvent => {
                            // Single-step occurrence, gated and effectful.
                            if self.enabled(&c, state, to, process) {
                                for succ in self.schema.successors(to, process) {
                                    let add = BTreeSet::from([Fluent::Cf {
                                        from: to.clone(),
                                        to: succ.to_string(),
                                        process: process.clone(),
                                    }]);
                                    self.completions(&c, state, to, process, &token, &add, &mut acc)?;
                                }
                            }
                        }
                        ElementKind::Task => {
                            if self.enabled(&c, state, to, process) {
                                plain(
                                    &mut acc,
                                    Action::begin(to),
                                    token.clone(),
                                    BTreeSet::from([Fluent::En {
                                        activity: to.clone(),
                                        process: process.clone(),
                                    }]),
                                );
                            }
                        }
                        ElementKind::Compound => {
                            let already = state.contains(&Fluent::En {
                                activity: to.clone(),
                                process: process.clone(),
                            });
                            if !already && self.enabled(&c, state, to, process) {
                                if let Some((inner_start, _)) = self.schema.compounds.get(to) {
                                    plain(
                                        &mut acc,
                                        Action::begin(to),
                                        token.clone(),
                                        BTreeSet::from([
                                            Fluent::En { activity: to.clone(), process: process.clone() },
                                            Fluent::Cf {
                                                from: START_MARKER.to_string(),
                                                to: inner_start.clone(),
                                                process: to.clone(),
                                            },
                                        ]),
                                    );
                                }
                            }
                        }
                        ElementKind::ExcBranch => {
                            if self.annotations.is_guarded(to, process) {
                                for g in self.annotations.guards_for(to, process) {
                                    if self.satisfiable_in(&c, &g.guard) {
                                        plain(
                                            &mut acc,
                                            Action::complete(to),
                                            token.clone(),
                                            BTreeSet::from([Fluent::Cf {
                                                from: to.clone(),
                                                to: g.successor.clone(),
                                                process: process.clone(),
                                            }]),
                                        );
                                    }
                                }
                            } else {
                                for succ in self.schema.successors(to, process) {
                                    plain(
                                        &mut acc,
                                        Action::complete(to),
                                        token.clone(),
                                        BTreeSet::from([Fluent::Cf {
                                            from: to.clone(),
                                            to: succ.to_string(),
                                            process: process.clone(),
                                        }]),
                                    );
                                }
                            }
                        }
                        ElementKind::IncBranch => {
                            if self.annotations.is_guarded(to, process) {
                                // Deterministic: exactly the guard-satisfying
                                // edges; none satisfied means no transition.
                                let chosen: BTreeSet<Fluent> = self
                                    .annotations
                                    .guards_for(to, process)
                                    .iter()
                                    .filter(|g| self.satisfiable_in(&c, &g.guard))
                                    .map(|g| Fluent::Cf {
                                        from: to.clone(),
                                        to: g.successor.clone(),
                                        process: process.clone(),
                                    })
                                    .collect();
                                if !chosen.is_empty() {
                                    plain(&mut acc, Action::complete(to), token.clone(), chosen);
                                }
                            } else {
                                let succs = self.schema.successors(to, process);
                                let n = succs.len();
                                for mask in 1u32..(1 << n.min(31)) {
                                    let subset: BTreeSet<Fluent> = succs
                                        .iter()
                                        .enumerate()
                                        .filter(|(i, _)| mask & (1 << i) != 0)
                                        .map(|(_, y)| Fluent::Cf {
                                            from: to.clone(),
                                            to: y.to_string(),
                                            process: process.clone(),
                                        })
                                        .collect();
                                    plain(&mut acc, Action::complete(to), token.clone(), subset);
                                }
                            }
                        }
                        ElementKind::ExcMerge => {
                            for succ in self.schema.successors(to, process) {
                                plain(
                                    &mut acc,
                                    Action::complete(to),
                                    token.clone(),
                                    BTreeSet::from([Fluent::Cf {
                                        from: to.clone(),
                                        to: succ.to_string(),
                                        process: process.clone(),
                                    }]),
                                );
                            }
                        }
                        ElementKind::ParBranch => {
                            let all: BTreeSet<Fluent> = self
                                .schema
                                .successors(to, process)
                                .iter()
                                .map(|y| Fluent::Cf {
                                    from: to.clone(),
                                    to: y.to_string(),
                                    process: process.clone(),
                                })
                                .collect();
                            if !all.is_empty() {
                                plain(&mut acc, Action::complete(to), token.clone(), all);
                            }
                        }
                        ElementKind::IncMerge | ElementKind::ParMerge => {
                            merges.insert((to.clone(), process.clone(), kind));
                        }
                        ElementKind::Item | ElementKind::Participant => {}
                    }
                }
                Fluent::En { activity, process } => {
                    // Normal completion of an atomic task.
                    if self.schema.kind(activity) == Some(ElementKind::Task) {
                        for succ in self.schema.successors(activity, process) {
                            let remove = BTreeSet::from([fluent.clone()]);
                            let mut add = BTreeSet::from([Fluent::Cf {
                                from: activity.clone(),
                                to: succ.to_string(),
                                process: process.clone(),
                            }]);
                            add.extend(self.written_outputs(activity, process));
                            self.completions(&c, state, activity, process, &remove, &add, &mut acc)?;
                        }
                    }
                    // Exceptions attached to the running activity interrupt it.
                    for (ev, act, p) in &self.schema.exceptions {
                        if act == activity && p == process && self.enabled(&c, state, ev, p) {
                            for succ in self.schema.successors(ev, p) {
                                let remove = BTreeSet::from([fluent.clone()]);
                                let add = BTreeSet::from([Fluent::Cf {
                                    from: ev.clone(),
                                    to: succ.to_string(),
                                    process: p.clone(),
                                }]);
                                self.completions(&c, state, ev, p, &remove, &add, &mut acc)?;
                            }
                        }
                    }
                }
                Fluent::Wrtn { .. } | Fluent::Tf { .. } => {}
            }
        }

        for (merge, process, kind) in merges {
            match kind {
                ElementKind::ParMerge => {
                    let preds = self.schema.predecessors(&merge, &process);
                    let tokens: BTreeSet<Fluent> = preds
                        .iter()
                        .map(|x| Fluent::Cf {
                            from: x.to_string(),
                            to: merge.clone(),
                            process: process.clone(),
                        })
                        .collect();
                    if !preds.is_empty() && tokens.iter().all(|t| state.contains(t)) {
                        for succ in self.schema.successors(&merge, &process) {
                            plain(
                                &mut acc,
                                Action::complete(&merge),
                                tokens.clone(),
                                BTreeSet::from([Fluent::Cf {
                                    from: merge.clone(),
                                    to: succ.to_string(),
                                    process: process.clone(),
                                }]),
                            );
                        }
                    }
                }
                ElementKind::IncMerge => {
                    if let Some(consumed) = self.inclusive_merge_ready(state, &merge, &process)? {
                        for succ in self.schema.successors(&merge, &process) {
                            plain(
                                &mut acc,
                                Action::complete(&merge),
                                consumed.clone(),
                                BTreeSet::from([Fluent::Cf {
                                    from: merge.clone(),
                                    to: succ.to_string(),
                                    process: process.clone(),
                                }]),
                            );
                        }
                    }
                }
                _ => unreachable!(),
            }
        }

        Ok(acc
            .into_iter()
            .map(|((action, target), negative_effects)| Transition { action, target, negative_effects })
            .collect())
    }

    /// Inclusive-merge synchronization: fires on the tokens present iff no
    /// empty incoming edge can still receive one. A waiting element U blocks
    /// an empty edge from X when U can reach X without crossing the merge
    /// (U = X included), unless U can equally reach an already-filled edge.
    fn inclusive_merge_ready(
        &self,
        state: &State,
        merge: &str,
        process: &str,
    ) -> Result<Option<BTreeSet<Fluent>>> {
        let preds = self.schema.predecessors(merge, process);
        let filled: Vec<&str> = preds
            .iter()
            .copied()
            .filter(|x| {
                state.contains(&Fluent::Cf {
                    from: x.to_string(),
                    to: merge.to_string(),
                    process: process.to_string(),
                })
            })
            .collect();
        if filled.is_empty() {
            return Ok(None);
        }
        let mut positions: BTreeSet<&str> = BTreeSet::new();
        for f in state {
            match f {
                Fluent::Cf { to, process: p, .. } if p == process => {
                    positions.insert(to);
                }
                Fluent::En { activity, process: p } if p == process => {
                    positions.insert(activity);
                }
                _ => {}
            }
        }
        for x in preds.iter().copied().filter(|x| !filled.contains(x)) {
            for u in &positions {
                let upstream = *u == x || crate::model::n_reachable(&self.schema, u, x, merge, process)?;
                if !upstream {
                    continue;
                }
                let escapes_to_filled = filled.iter().any(|k| {
                    u == k
                        || crate::model::n_reachable(&self.schema, u, k, merge, process).unwrap_or(false)
                });
                if !escapes_to_filled {
                    return Ok(None); // an untaken edge can still deliver
                }
            }
        }
        let consumed = filled
            .into_iter()
            .map(|x| Fluent::Cf {
                from: x.to_string(),
                to: merge.to_string(),
                process: process.to_string(),
            })
            .collect();
        Ok(Some(consumed))
    }

    /// The set of (action, successor-state) pairs executable in a state.
    pub fn successors(&self, state: &State) -> Result<BTreeSet<(Action, State)>> {
        Ok(self.transitions(state)?.into_iter().map(|t| (t.action, t.target)).collect())
    }

    // -----------------------------------------------------------------------
    // State space
    // -----------------------------------------------------------------------

    /// Breadth-first closure of the transition relation from the initial
    /// state of `process`. Fails once more than `budget` states are found
    /// (a possibly unsafe model).
    pub fn state_space(&self, process: &str, budget: usize) -> Result<KripkeGraph> {
        let initial = self.initial_state(process)?;
        let mut states: Vec<State> = vec![initial.clone()];
        let mut index: BTreeMap<State, usize> = BTreeMap::from([(initial.clone(), 0)]);
        let mut edges: Vec<(usize, Action, usize)> = Vec::new();
        let mut queue: VecDeque<usize> = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            let here = states[i].clone();
            for (action, target) in self.successors(&here)? {
                let j = match index.get(&target) {
                    Some(&j) => j,
                    None => {
                        let j = states.len();
                        if j >= budget {
                            return Err(Error::BudgetExceeded {
                                process: process.to_string(),
                                budget,
                            });
                        }
                        states.push(target.clone());
                        index.insert(target, j);
                        queue.push_back(j);
                        j
                    }
                };
                edges.push((i, action, j));
            }
        }
        Ok(KripkeGraph::new(process.to_string(), states, edges))
    }

    // -----------------------------------------------------------------------
    // Effect consistency
    // -----------------------------------------------------------------------

    /// Two-part report over a built graph: states whose closure is
    /// contradictory, and completion edges whose instantiated negative
    /// effects still hold afterwards by derivation.
    pub fn consistency_check(&self, graph: &KripkeGraph) -> Result<ConsistencyReport> {
        let mut report = ConsistencyReport::default();
        let index: BTreeMap<&State, usize> =
            graph.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        for (i, state) in graph.states.iter().enumerate() {
            if self.closure(state).contradiction {
                report.inconsistent_states.push(i);
            }
            for t in self.transitions(state)? {
                if t.negative_effects.is_empty() {
                    continue;
                }
                let Some(&j) = index.get(&t.target) else { continue };
                let after = self.closure(&t.target);
                for f in &t.negative_effects {
                    if after.fluents.contains(f) {
                        report.lingering_negative_effects.push(LingeringEffect {
                            from: i,
                            action: t.action.clone(),
                            to: j,
                            fluent: f.clone(),
                        });
                    }
                }
            }
        }
        Ok(report)
    }
}

// ---------------------------------------------------------------------------
// Reachability graph
// ---------------------------------------------------------------------------

/// Explicit reachability graph of one process: states indexed from the
/// initial state (index 0), labeled edges, and adjacency in both directions.
#[derive(Debug, Clone)]
pub struct KripkeGraph {
    pub process: String,
    pub states: Vec<State>,
    pub edges: Vec<(usize, Action, usize)>,
    pub succ: Vec<Vec<(Action, usize)>>,
    pub pred: Vec<Vec<usize>>,
}

impl KripkeGraph {
    pub fn new(process: String, states: Vec<State>, edges: Vec<(usize, Action, usize)>) -> Self {
        let mut succ = vec![Vec::new(); states.len()];
        let mut pred = vec![Vec::new(); states.len()];
        for (i, a, j) in &edges {
            succ[*i].push((a.clone(), *j));
            pred[*j].push(*i);
        }
        for p in &mut pred {
            p.sort_unstable();
            p.dedup();
        }
        KripkeGraph { process, states, edges, succ, pred }
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_sink(&self, i: usize) -> bool {
        self.succ[i].is_empty()
    }

    pub fn sinks(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_sink(i)).collect()
    }

    /// Line-based dump: `state <i>: {...}`, `edge <i> <action> <j>`, `sink <i>`.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.states.iter().enumerate() {
            let fluents: Vec<String> = s.iter().map(|f| f.to_string()).collect();
            out.push_str(&format!("state {i}: {{{}}}\n", fluents.join(",")));
        }
        for (i, a, j) in &self.edges {
            out.push_str(&format!("edge {i} {a} {j}\n"));
        }
        for i in self.sinks() {
            out.push_str(&format!("sink {i}\n"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "process": self.process,
            "states": self.states.iter().map(|s| {
                s.iter().map(|f| f.to_string()).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|(i, a, j)| {
                serde_json::json!({"from": i, "action": a.to_string(), "to": j})
            }).collect::<Vec<_>>(),
            "sinks": self.sinks(),
        })
    }
}

// ---------------------------------------------------------------------------
// Consistency report
// ---------------------------------------------------------------------------

/// A negative effect that still holds (by derivation) after the completion
/// that was supposed to remove it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LingeringEffect {
    pub from: usize,
    pub action: Action,
    pub to: usize,
    pub fluent: Fluent,
}

impl fmt::Display for LingeringEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "negative effect {} of {} (state {} -> {}) still holds after execution",
            self.fluent, self.action, self.from, self.to
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    /// States whose derivation closure contains the contradiction.
    pub inconsistent_states: Vec<usize>,
    pub lingering_negative_effects: Vec<LingeringEffect>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.inconsistent_states.is_empty() && self.lingering_negative_effects.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_annotations;
    use crate::fluent::parse_fluent_expr;
    use crate::model::parse_process_facts;
    use crate::ontology::load_axioms;

    fn ctx(bps: &str) -> EnactmentContext {
        let schema = parse_process_facts("t", bps).unwrap();
        EnactmentContext::new(schema, &TripleStore::default(), AnnotationSet::default())
    }

    fn ctx_full(bps: &str, dl: &str, ann: &str) -> EnactmentContext {
        let schema = parse_process_facts("t", bps).unwrap();
        let store = load_axioms("t", dl).unwrap();
        let set = parse_annotations("t", ann, &schema).unwrap();
        EnactmentContext::new(schema, &store, set)
    }

    fn fl(text: &str) -> Fluent {
        match parse_fluent_expr("t", 1, text).unwrap() {
            FluentExpr::Atom(p) => p.to_fluent().unwrap(),
            other => panic!("not a ground atom: {other}"),
        }
    }

    const MINIMAL: &str = "bp(p,s,e)\nstart_event(s)\nend_event(e)\nseq(s,e,p)\n";
    const ONE_TASK: &str =
        "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nseq(s,a,p)\nseq(a,e,p)\n";

    #[test]
    fn minimal_process_has_three_states() {
        let ctx = ctx(MINIMAL);
        let g = ctx.state_space("p", 100).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.states[0], BTreeSet::from([fl("cf(start,s,p)")]));
        assert_eq!(g.states[1], BTreeSet::from([fl("cf(s,e,p)")]));
        assert_eq!(g.states[2], BTreeSet::from([fl("cf(e,end,p)")]));
        assert_eq!(g.sinks(), vec![2]);
        let labels: Vec<String> = g.edges.iter().map(|(_, a, _)| a.to_string()).collect();
        assert_eq!(labels, vec!["complete(s)", "complete(e)"]);
    }

    #[test]
    fn one_task_process_has_five_states_and_four_edges() {
        let ctx = ctx(ONE_TASK);
        let g = ctx.state_space("p", 100).unwrap();
        assert_eq!((g.len(), g.edges.len()), (5, 4));
        let labels: Vec<String> = g.edges.iter().map(|(_, a, _)| a.to_string()).collect();
        assert_eq!(labels, vec!["complete(s)", "begin(a)", "complete(a)", "complete(e)"]);
    }

    #[test]
    fn compound_activity_walks_through_inner_process() {
        let ctx = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ncomp_act(c,s1,e1)\nstart_event(s1)\nend_event(e1)\n\
             task(a)\nseq(s,c,p)\nseq(c,e,p)\nseq(s1,a,c)\nseq(a,e1,c)\n",
        );
        let g = ctx.state_space("p", 100).unwrap();
        assert_eq!(g.len(), 9);
        // While the compound runs, en(c,p) coexists with inner tokens.
        assert!(g.states.iter().any(|s| s.contains(&fl("en(c,p)")) && s.contains(&fl("en(a,c)"))));
        // The inner end leaves cf(e1,end,c); completing c clears it.
        assert!(g.states.iter().any(|s| s.contains(&fl("cf(e1,end,c)"))));
        assert_eq!(g.sinks().len(), 1);
        assert_eq!(g.states[g.sinks()[0]], BTreeSet::from([fl("cf(e,end,p)")]));
    }

    #[test]
    fn parallel_branch_forks_and_merge_waits() {
        let ctx = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\npar_branch(g)\npar_merge(m)\ntask(a)\ntask(b)\n\
             seq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n",
        );
        let g = ctx.state_space("p", 100).unwrap();
        // 2 pre-fork + 3x3 interleaving product + 2 post-merge.
        assert_eq!(g.len(), 13);
        assert_eq!(g.sinks().len(), 1);
        // The merge consumes both tokens at once: exactly one state holds both.
        let both = g
            .states
            .iter()
            .filter(|s| s.contains(&fl("cf(a,m,p)")) && s.contains(&fl("cf(b,m,p)")))
            .count();
        assert_eq!(both, 1);
        // No state fires m with only one token present.
        for (i, a, _) in &g.edges {
            if a.element == "m" {
                assert!(g.states[*i].contains(&fl("cf(a,m,p)")));
                assert!(g.states[*i].contains(&fl("cf(b,m,p)")));
            }
        }
    }

    #[test]
    fn exclusive_branch_chooses_one_inclusive_branch_chooses_subsets() {
        let exc = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\nexc_merge(m)\ntask(a)\ntask(b)\n\
             seq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n",
        );
        let s1 = BTreeSet::from([fl("cf(s,g,p)")]);
        assert_eq!(exc.successors(&s1).unwrap().len(), 2);

        let inc = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ninc_branch(g)\ninc_merge(m)\ntask(a)\ntask(b)\n\
             seq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n",
        );
        let succs = inc.successors(&s1).unwrap();
        assert_eq!(succs.len(), 3); // {a}, {b}, {a,b}
        assert!(succs.iter().all(|(a, _)| a == &Action::complete("g")));
    }

    #[test]
    fn inclusive_merge_waits_for_active_arm_but_not_untaken_arm() {
        let ctx = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ninc_branch(g)\ninc_merge(m)\ntask(a)\ntask(b)\n\
             seq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n",
        );
        // One arm delivered, the other still executing: the merge must wait.
        let busy = BTreeSet::from([fl("cf(a,m,p)"), fl("en(b,p)")]);
        let succs = ctx.successors(&busy).unwrap();
        assert!(succs.iter().all(|(a, _)| a != &Action::complete("m")));
        // Token still on the branch edge of the other arm: also wait.
        let pending = BTreeSet::from([fl("cf(a,m,p)"), fl("cf(g,b,p)")]);
        let succs = ctx.successors(&pending).unwrap();
        assert!(succs.iter().all(|(a, _)| a != &Action::complete("m")));
        // Untaken arm (no token anywhere upstream): fire on the one token.
        let solo = BTreeSet::from([fl("cf(a,m,p)")]);
        let succs = ctx.successors(&solo).unwrap();
        assert_eq!(succs.len(), 1);
        let (a, target) = succs.into_iter().next().unwrap();
        assert_eq!(a, Action::complete("m"));
        assert_eq!(target, BTreeSet::from([fl("cf(m,e,p)")]));
        // Both delivered: fire consuming both.
        let both = BTreeSet::from([fl("cf(a,m,p)"), fl("cf(b,m,p)")]);
        let succs = ctx.successors(&both).unwrap();
        assert_eq!(succs.len(), 1);
        assert_eq!(succs.into_iter().next().unwrap().1, BTreeSet::from([fl("cf(m,e,p)")]));
    }

    #[test]
    fn guarded_exclusive_branch_follows_satisfied_guards_only() {
        let ctx = ctx_full(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\nexc_merge(m)\ntask(a)\ntask(b)\n\
             seq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\nseq(b,m,p)\nseq(m,e,p)\n",
            "class c:Good\n",
            "c_seq(tf(X,rdf:type,c:Good), g, a, p)\nc_seq(not(tf(X,rdf:type,c:Good)), g, b, p)\n",
        );
        let with = BTreeSet::from([fl("cf(s,g,p)"), fl("tf(o,rdf:type,c:Good)")]);
        let succs = ctx.successors(&with).unwrap();
        assert_eq!(succs.len(), 1);
        assert!(succs.iter().next().unwrap().1.contains(&fl("cf(g,a,p)")));
        let without = BTreeSet::from([fl("cf(s,g,p)")]);
        let succs = ctx.successors(&without).unwrap();
        assert_eq!(succs.len(), 1);
        assert!(succs.iter().next().unwrap().1.contains(&fl("cf(g,b,p)")));
    }

    #[test]
    fn precondition_gates_begin_and_item_flow_blocks_unwritten_input() {
        let ctx = ctx_full(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\ntask(b)\nitem(i)\n\
             seq(s,a,p)\nseq(a,b,p)\nseq(b,e,p)\noutput(a,i,p)\ninput(b,i,p)\n",
            "class c:Ready\n",
            "pre(a, tf(x,rdf:type,c:Ready), p)\n",
        );
        // a's precondition references an assertion that never holds: stuck.
        let at_a = BTreeSet::from([fl("cf(s,a,p)")]);
        assert!(ctx.successors(&at_a).unwrap().is_empty());
        // If the fact holds, a begins; b remains blocked until a writes i.
        let ready = BTreeSet::from([fl("cf(s,a,p)"), fl("tf(x,rdf:type,c:Ready)")]);
        let succs = ctx.successors(&ready).unwrap();
        assert_eq!(succs.len(), 1);
        let at_b_unwritten = BTreeSet::from([fl("cf(a,b,p)")]);
        assert!(ctx.successors(&at_b_unwritten).unwrap().is_empty());
        let at_b_written = BTreeSet::from([fl("cf(a,b,p)"), fl("wrtn(a,i,p)")]);
        assert_eq!(ctx.successors(&at_b_written).unwrap().len(), 1);
        // Completing a records the written item.
        let running = BTreeSet::from([fl("en(a,p)"), fl("tf(x,rdf:type,c:Ready)")]);
        let succs = ctx.successors(&running).unwrap();
        let (_, target) = succs.into_iter().next().unwrap();
        assert!(target.contains(&fl("wrtn(a,i,p)")));
    }

    #[test]
    fn effect_alternatives_yield_one_successor_per_binding() {
        let ctx = ctx_full(
            ONE_TASK,
            "class c:PO\nclass c:Approved\nclass c:Rejected\n",
            "eff(a, tf(O,rdf:type,c:PO), [], [tf(O,rdf:type,c:Approved)], p)\n\
             eff(a, tf(O,rdf:type,c:PO), [tf(O,rdf:type,c:PO)], [tf(O,rdf:type,c:Rejected)], p)\n",
        );
        let running = BTreeSet::from([fl("en(a,p)"), fl("tf(o1,rdf:type,c:PO)"), fl("tf(o2,rdf:type,c:PO)")]);
        let succs = ctx.successors(&running).unwrap();
        // 2 alternatives x 2 bindings = 4 distinct completions.
        assert_eq!(succs.len(), 4);
        assert!(succs.iter().all(|(a, _)| a == &Action::complete("a")));
        assert!(succs
            .iter()
            .any(|(_, s)| s.contains(&fl("tf(o1,rdf:type,c:Approved)")) && s.contains(&fl("tf(o2,rdf:type,c:PO)"))));
        assert!(succs
            .iter()
            .any(|(_, s)| s.contains(&fl("tf(o2,rdf:type,c:Rejected)")) && !s.contains(&fl("tf(o2,rdf:type,c:PO)"))));
    }

    #[test]
    fn exception_interrupts_running_task() {
        let ctx = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nint_event(ev)\nexc_merge(m)\n\
             seq(s,a,p)\nseq(a,m,p)\nseq(ev,m,p)\nseq(m,e,p)\nexception(ev,a,p)\n",
        );
        let running = BTreeSet::from([fl("en(a,p)")]);
        let succs = ctx.successors(&running).unwrap();
        assert_eq!(succs.len(), 2);
        assert!(succs.contains(&(Action::complete("a"), BTreeSet::from([fl("cf(a,m,p)")]))));
        assert!(succs.contains(&(Action::complete("ev"), BTreeSet::from([fl("cf(ev,m,p)")]))));
    }

    #[test]
    fn closure_derives_through_subsumption_restriction_and_intersection() {
        let ctx = ctx_full(
            MINIMAL,
            "b:UnavailablePL subClassOf b:Part_List\n\
             b:Purchase_Order subClassOf b:Order\n\
             b:CancelledPO subClassOf b:ClosedPO\n\
             b:Order and (b:related some b:UnavailablePL) subClassOf b:CancelledPO\n",
            "",
        );
        let state = BTreeSet::from([
            fl("tf(o,rdf:type,b:Purchase_Order)"),
            fl("tf(o,b:related,pl)"),
            fl("tf(pl,rdf:type,b:UnavailablePL)"),
        ]);
        let c = ctx.closure(&state);
        assert!(c.fluents.contains(&fl("tf(o,rdf:type,b:CancelledPO)")));
        assert!(c.fluents.contains(&fl("tf(o,rdf:type,b:ClosedPO)")));
        assert!(!c.contradiction);
        assert!(ctx.holds(&state, &parse_fluent_expr("t", 1, "tf(o,rdf:type,b:ClosedPO)").unwrap()).unwrap());
    }

    #[test]
    fn closure_flags_disjointness_violations() {
        let ctx = ctx_full(MINIMAL, "b:A disjointWith b:B\n", "");
        let bad = BTreeSet::from([fl("tf(x,rdf:type,b:A)"), fl("tf(x,rdf:type,b:B)")]);
        assert!(ctx.closure(&bad).contradiction);
        assert!(ctx.holds(&bad, &FluentExpr::False).unwrap());
        // Different individuals do not clash.
        let ok = BTreeSet::from([fl("tf(x,rdf:type,b:A)"), fl("tf(y,rdf:type,b:B)")]);
        assert!(!ctx.closure(&ok).contradiction);
    }

    #[test]
    fn closure_handles_property_rules() {
        let ctx = ctx_full(
            MINIMAL,
            "property b:payment\nb:payment subPropertyOf b:related\n\
             b:payment range b:Invoice\nb:member domain b:Human\n\
             transitive b:part_of\n",
            "",
        );
        let state = BTreeSet::from([
            fl("tf(o,b:payment,i)"),
            fl("tf(e,b:member,d)"),
            fl("tf(x,b:part_of,y)"),
            fl("tf(y,b:part_of,z)"),
        ]);
        let c = ctx.closure(&state);
        assert!(c.fluents.contains(&fl("tf(o,b:related,i)")));
        assert!(c.fluents.contains(&fl("tf(i,rdf:type,b:Invoice)")));
        assert!(c.fluents.contains(&fl("tf(e,rdf:type,b:Human)")));
        assert!(c.fluents.contains(&fl("tf(x,b:part_of,z)")));
    }

    #[test]
    fn holds_is_closed_world_and_matches_rejects_unsafe_patterns() {
        let ctx = ctx(MINIMAL);
        let state = BTreeSet::from([fl("cf(start,s,p)")]);
        let absent = parse_fluent_expr("t", 1, "not(en(a,p))").unwrap();
        assert!(ctx.holds(&state, &absent).unwrap());
        let open = parse_fluent_expr("t", 1, "en(A,p)").unwrap();
        assert!(ctx.holds(&state, &open).is_err());
        let unsafe_pat = parse_fluent_expr("t", 1, "not(en(A,p))").unwrap();
        match ctx.matches(&state, &unsafe_pat) {
            Err(Error::UnsafePattern { var, .. }) => assert_eq!(var, "A"),
            other => panic!("expected unsafe-pattern error, got {other:?}"),
        }
        // The existential reading used by guards accepts the same pattern.
        assert!(ctx.satisfiable(&state, &unsafe_pat));
        let present = BTreeSet::from([fl("en(a,p)")]);
        assert!(!ctx.satisfiable(&present, &unsafe_pat));
    }

    #[test]
    fn matches_binds_left_to_right_and_delays_negation() {
        let ctx = ctx_full(MINIMAL, "class c:A\nclass c:B\n", "");
        let state = BTreeSet::from([
            fl("tf(x,rdf:type,c:A)"),
            fl("tf(y,rdf:type,c:A)"),
            fl("tf(x,rdf:type,c:B)"),
        ]);
        // Negation written before its binder: still safe (delayed).
        let pat = parse_fluent_expr("t", 1, "and(not(tf(O,rdf:type,c:B)),tf(O,rdf:type,c:A))").unwrap();
        let thetas = ctx.matches(&state, &pat).unwrap();
        assert_eq!(thetas.len(), 1);
        assert_eq!(thetas[0].get("O").map(String::as_str), Some("y"));
    }

    #[test]
    fn initial_state_rejects_compound_names() {
        let ctx = ctx(
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ncomp_act(c,s1,e1)\nstart_event(s1)\nend_event(e1)\n\
             task(a)\nseq(s,c,p)\nseq(c,e,p)\nseq(s1,a,c)\nseq(a,e1,c)\n",
        );
        assert!(ctx.initial_state("p").is_ok());
        assert!(matches!(ctx.initial_state("c"), Err(Error::UnknownProcess(_))));
    }

    #[test]
    fn state_budget_is_enforced() {
        let ctx = ctx(ONE_TASK);
        match ctx.state_space("p", 3) {
            Err(Error::BudgetExceeded { process, budget }) => {
                assert_eq!((process.as_str(), budget), ("p", 3));
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn consistency_check_reports_contradictions_and_lingering_negatives() {
        // The negative effect removes the asserted membership, but the
        // remaining fluents re-derive it through the restriction axiom.
        let ctx = ctx_full(
            ONE_TASK,
            "class c:Approved\nclass c:Invoice\nclass c:Fulfilled\n\
             c:Approved and (c:related some c:Invoice) subClassOf c:Fulfilled\n",
            "eff(a, tf(O,rdf:type,c:Fulfilled), [tf(O,rdf:type,c:Fulfilled)], [], p)\n",
        );
        let seed = BTreeSet::from([
            fl("cf(start,s,p)"),
            fl("tf(o,rdf:type,c:Approved)"),
            fl("tf(o,c:related,i)"),
            fl("tf(i,rdf:type,c:Invoice)"),
        ]);
        // Build a graph manually from the seeded initial state.
        let mut states = vec![seed.clone()];
        let mut index = BTreeMap::from([(seed, 0usize)]);
        let mut edges = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for (a, t) in ctx.successors(&states[i].clone()).unwrap() {
                let j = *index.entry(t.clone()).or_insert_with(|| {
                    states.push(t.clone());
                    queue.push_back(states.len() - 1);
                    states.len() - 1
                });
                edges.push((i, a, j));
            }
        }
        let graph = KripkeGraph::new("p".into(), states, edges);
        let report = ctx.consistency_check(&graph).unwrap();
        assert!(report.inconsistent_states.is_empty());
        assert_eq!(report.lingering_negative_effects.len(), 1);
        let l = &report.lingering_negative_effects[0];
        assert_eq!(l.action, Action::complete("a"));
        assert_eq!(l.fluent, fl("tf(o,rdf:type,c:Fulfilled)"));
    }

    #[test]
    fn action_parse_roundtrip() {
        for text in ["begin(a)", "complete(select_shipper)"] {
            assert_eq!(Action::parse(text).unwrap().to_string(), text);
        }
        assert!(Action::parse("fire(a)").is_err());
    }
}
