//! Branching-time property checking over the reachability graph, with the
//! maximal-path reading: paths are either infinite or end in a sink state.
//! Includes the textual formula syntax, evaluation of open formulas, and
//! normal-form validation of queries so evaluation cannot flounder.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use crate::enactment::{Closure, EnactmentContext, KripkeGraph};
use crate::error::{Error, Result};
use crate::fluent::{tokenize, Cursor, Fluent, FluentExpr, FluentPattern, Subst, Term, Token};

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

/// Formula tree. `ef`/`ag` are sugar and normalize at construction:
/// EF(F) = EU(true, F) and AG(F) = not(EF(not(F))).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CtlFormula {
    True,
    /// Elementary state property, including `false` (the contradiction
    /// marker) and `final(P)`.
    Elem(FluentExpr),
    Not(Box<CtlFormula>),
    And(Box<CtlFormula>, Box<CtlFormula>),
    Ex(Box<CtlFormula>),
    Eu(Box<CtlFormula>, Box<CtlFormula>),
    Eg(Box<CtlFormula>),
}

impl CtlFormula {
    pub fn atom(p: FluentPattern) -> CtlFormula {
        CtlFormula::Elem(FluentExpr::Atom(p))
    }

    pub fn contradiction() -> CtlFormula {
        CtlFormula::Elem(FluentExpr::False)
    }

    pub fn final_state(process: Term) -> CtlFormula {
        CtlFormula::Elem(FluentExpr::Final(process))
    }

    pub fn not(f: CtlFormula) -> CtlFormula {
        CtlFormula::Not(Box::new(f))
    }

    pub fn and(a: CtlFormula, b: CtlFormula) -> CtlFormula {
        CtlFormula::And(Box::new(a), Box::new(b))
    }

    pub fn ex(f: CtlFormula) -> CtlFormula {
        CtlFormula::Ex(Box::new(f))
    }

    pub fn eu(a: CtlFormula, b: CtlFormula) -> CtlFormula {
        CtlFormula::Eu(Box::new(a), Box::new(b))
    }

    pub fn eg(f: CtlFormula) -> CtlFormula {
        CtlFormula::Eg(Box::new(f))
    }

    pub fn ef(f: CtlFormula) -> CtlFormula {
        CtlFormula::eu(CtlFormula::True, f)
    }

    pub fn ag(f: CtlFormula) -> CtlFormula {
        CtlFormula::not(CtlFormula::ef(CtlFormula::not(f)))
    }

    pub fn vars(&self) -> BTreeSet<String> {
        match self {
            CtlFormula::True => BTreeSet::new(),
            CtlFormula::Elem(e) => e.vars(),
            CtlFormula::Not(f) | CtlFormula::Ex(f) | CtlFormula::Eg(f) => f.vars(),
            CtlFormula::And(a, b) | CtlFormula::Eu(a, b) => {
                let mut v = a.vars();
                v.extend(b.vars());
                v
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        self.vars().is_empty()
    }

    pub fn apply(&self, s: &Subst) -> CtlFormula {
        match self {
            CtlFormula::True => CtlFormula::True,
            CtlFormula::Elem(e) => CtlFormula::Elem(e.apply(s)),
            CtlFormula::Not(f) => CtlFormula::not(f.apply(s)),
            CtlFormula::And(a, b) => CtlFormula::and(a.apply(s), b.apply(s)),
            CtlFormula::Ex(f) => CtlFormula::ex(f.apply(s)),
            CtlFormula::Eu(a, b) => CtlFormula::eu(a.apply(s), b.apply(s)),
            CtlFormula::Eg(f) => CtlFormula::eg(f.apply(s)),
        }
    }

    /// Fluent atoms in grounding positions: the formula itself when
    /// elementary, both branches of a conjunction, the operand of `ex`/`eg`,
    /// and the *target* of `eu` (so `ef`); nothing under negation. A binding
    /// that satisfies the formula must realize each of these atoms in some
    /// reachable state's closure, so they enumerate candidate bindings.
    pub fn grounding_atoms(&self) -> Vec<&FluentPattern> {
        fn from_expr<'a>(e: &'a FluentExpr, out: &mut Vec<&'a FluentPattern>) {
            match e {
                FluentExpr::Atom(p) => out.push(p),
                FluentExpr::And(a, b) => {
                    from_expr(a, out);
                    from_expr(b, out);
                }
                FluentExpr::True | FluentExpr::False | FluentExpr::Final(_) | FluentExpr::Not(_) => {}
            }
        }
        fn walk<'a>(f: &'a CtlFormula, out: &mut Vec<&'a FluentPattern>) {
            match f {
                CtlFormula::True | CtlFormula::Not(_) => {}
                CtlFormula::Elem(e) => from_expr(e, out),
                CtlFormula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                CtlFormula::Ex(g) | CtlFormula::Eg(g) => walk(g, out),
                CtlFormula::Eu(_, b) => walk(b, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for CtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Re-sugar the normal forms for readability.
        if let CtlFormula::Not(inner) = self {
            if let CtlFormula::Eu(a, b) = inner.as_ref() {
                if matches!(a.as_ref(), CtlFormula::True) {
                    if let CtlFormula::Not(g) = b.as_ref() {
                        return write!(f, "ag({g})");
                    }
                }
            }
        }
        match self {
            CtlFormula::True => write!(f, "true"),
            CtlFormula::Elem(e) => write!(f, "{e}"),
            CtlFormula::Not(g) => write!(f, "not({g})"),
            CtlFormula::And(a, b) => write!(f, "and({a},{b})"),
            CtlFormula::Ex(g) => write!(f, "ex({g})"),
            CtlFormula::Eu(a, b) => match a.as_ref() {
                CtlFormula::True => write!(f, "ef({b})"),
                _ => write!(f, "eu({a},{b})"),
            },
            CtlFormula::Eg(g) => write!(f, "eg({g})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Textual syntax
// ---------------------------------------------------------------------------

/// Parse the textual syntax: operators `not/and/ex/eu/eg/ef/ag`
/// (case-insensitive), atoms `cf(x,y,p)`, `en(a,p)`, `wrtn(a,i,p)`,
/// `t(s,p,o)` (alias `tf`), `final(p)`, and the constants `true`/`false`.
pub fn parse_ctl(file: &str, line_no: usize, text: &str) -> Result<CtlFormula> {
    let toks = tokenize(file, line_no, text)?;
    let mut cur = Cursor::new(file, line_no, &toks);
    let f = parse_formula(&mut cur)?;
    if !cur.at_end() {
        return Err(Error::parse(file, line_no, "trailing tokens after formula"));
    }
    Ok(f)
}

fn parse_formula(cur: &mut Cursor<'_>) -> Result<CtlFormula> {
    let name = cur.expect_ident()?;
    let lower = name.to_ascii_lowercase();
    match lower.as_str() {
        "true" => Ok(CtlFormula::True),
        "false" => Ok(CtlFormula::contradiction()),
        "not" | "ex" | "eg" | "ef" | "ag" => {
            cur.expect(&Token::LParen)?;
            let f = parse_formula(cur)?;
            cur.expect(&Token::RParen)?;
            Ok(match lower.as_str() {
                "not" => CtlFormula::not(f),
                "ex" => CtlFormula::ex(f),
                "eg" => CtlFormula::eg(f),
                "ef" => CtlFormula::ef(f),
                _ => CtlFormula::ag(f),
            })
        }
        "and" | "eu" => {
            cur.expect(&Token::LParen)?;
            let a = parse_formula(cur)?;
            cur.expect(&Token::Comma)?;
            let b = parse_formula(cur)?;
            cur.expect(&Token::RParen)?;
            Ok(if lower == "and" { CtlFormula::and(a, b) } else { CtlFormula::eu(a, b) })
        }
        "final" => {
            cur.expect(&Token::LParen)?;
            let t = Term::from_token(&cur.expect_ident()?);
            cur.expect(&Token::RParen)?;
            Ok(CtlFormula::final_state(t))
        }
        "cf" | "en" | "wrtn" | "t" | "tf" => {
            cur.expect(&Token::LParen)?;
            let mut terms = Vec::new();
            terms.push(Term::from_token(&cur.expect_ident()?));
            while cur.peek() == Some(&Token::Comma) {
                cur.next_tok();
                terms.push(Term::from_token(&cur.expect_ident()?));
            }
            cur.expect(&Token::RParen)?;
            let pattern = match (name.as_str(), terms.len()) {
                ("cf", 3) => FluentPattern::Cf(terms[0].clone(), terms[1].clone(), terms[2].clone()),
                ("en", 2) => FluentPattern::En(terms[0].clone(), terms[1].clone()),
                ("wrtn", 3) => {
                    FluentPattern::Wrtn(terms[0].clone(), terms[1].clone(), terms[2].clone())
                }
                ("t" | "tf", 3) => {
                    FluentPattern::Tf(terms[0].clone(), terms[1].clone(), terms[2].clone())
                }
                (p, n) => return Err(cur.err(format!("`{p}` does not take {n} argument(s)"))),
            };
            Ok(CtlFormula::atom(pattern))
        }
        other => Err(cur.err(format!("unknown formula head `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Model checker for one (context, graph) pair. Satisfaction sets are
/// memoized per subformula, so repeated evaluation of shared structure
/// costs nothing and evaluation terminates on every finite graph.
pub struct Evaluator<'a> {
    ctx: &'a EnactmentContext,
    graph: &'a KripkeGraph,
    memo: RefCell<BTreeMap<CtlFormula, Rc<Vec<bool>>>>,
    closures: RefCell<Vec<Option<Rc<Closure>>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(ctx: &'a EnactmentContext, graph: &'a KripkeGraph) -> Evaluator<'a> {
        Evaluator {
            ctx,
            graph,
            memo: RefCell::new(BTreeMap::new()),
            closures: RefCell::new(vec![None; graph.len()]),
        }
    }

    pub fn graph(&self) -> &KripkeGraph {
        self.graph
    }

    fn closure_at(&self, i: usize) -> Rc<Closure> {
        if let Some(c) = &self.closures.borrow()[i] {
            return Rc::clone(c);
        }
        let c = Rc::new(self.ctx.closure(&self.graph.states[i]));
        self.closures.borrow_mut()[i] = Some(Rc::clone(&c));
        c
    }

    /// Satisfaction set of a ground formula over all states.
    pub fn sat(&self, f: &CtlFormula) -> Result<Rc<Vec<bool>>> {
        if let Some(hit) = self.memo.borrow().get(f) {
            return Ok(Rc::clone(hit));
        }
        let n = self.graph.len();
        let computed: Vec<bool> = match f {
            CtlFormula::True => vec![true; n],
            CtlFormula::Elem(e) => {
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    out.push(self.ctx.holds_in(&self.closure_at(i), e)?);
                }
                out
            }
            CtlFormula::Not(g) => self.sat(g)?.iter().map(|b| !b).collect(),
            CtlFormula::And(a, b) => {
                let sa = self.sat(a)?;
                let sb = self.sat(b)?;
                sa.iter().zip(sb.iter()).map(|(x, y)| *x && *y).collect()
            }
            CtlFormula::Ex(g) => {
                let sg = self.sat(g)?;
                (0..n).map(|i| self.graph.succ[i].iter().any(|(_, j)| sg[*j])).collect()
            }
            CtlFormula::Eu(a, b) => {
                // Least fixpoint by backward propagation from the b-states.
                let sa = self.sat(a)?;
                let sb = self.sat(b)?;
                let mut out = vec![false; n];
                let mut queue: VecDeque<usize> = VecDeque::new();
                for i in 0..n {
                    if sb[i] {
                        out[i] = true;
                        queue.push_back(i);
                    }
                }
                while let Some(j) = queue.pop_front() {
                    for &i in &self.graph.pred[j] {
                        if !out[i] && sa[i] {
                            out[i] = true;
                            queue.push_back(i);
                        }
                    }
                }
                out
            }
            CtlFormula::Eg(g) => {
                // Greatest fixpoint on the g-induced subgraph: keep states
                // that are sinks of the full graph or retain a successor in
                // the set, i.e. start a maximal all-g path.
                let sg = self.sat(g)?;
                let mut out: Vec<bool> = sg.as_ref().clone();
                loop {
                    let mut changed = false;
                    for i in 0..n {
                        if out[i]
                            && !self.graph.is_sink(i)
                            && !self.graph.succ[i].iter().any(|(_, j)| out[*j])
                        {
                            out[i] = false;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                out
            }
        };
        let rc = Rc::new(computed);
        self.memo.borrow_mut().insert(f.clone(), Rc::clone(&rc));
        Ok(rc)
    }

    /// Truth of a ground formula at one state.
    pub fn eval(&self, f: &CtlFormula, s: usize) -> Result<bool> {
        if let Some(v) = f.vars().into_iter().next() {
            return Err(Error::UnsafePattern { var: v, pattern: f.to_string() });
        }
        Ok(self.sat(f)?[s])
    }

    /// All substitutions over the constants of reachable closures under
    /// which the formula holds at state `s`. Candidates come from unifying
    /// the formula's grounding atoms with fluents of reachable states, so
    /// the search space stays finite and evaluation cannot flounder.
    pub fn eval_open(&self, f: &CtlFormula, s: usize) -> Result<Vec<Subst>> {
        let report = validate_nf(&[NfLiteral::holds(f.clone(), Term::Const("_".into()))]);
        if !report.accepted {
            return Err(Error::NotNormalForm(report.to_string()));
        }
        let mut pool: BTreeSet<Fluent> = BTreeSet::new();
        for i in 0..self.graph.len() {
            pool.extend(self.closure_at(i).fluents.iter().cloned());
        }
        let mut thetas: BTreeSet<Subst> = BTreeSet::from([Subst::new()]);
        for atom in f.grounding_atoms() {
            let mut next: BTreeSet<Subst> = BTreeSet::new();
            for theta in &thetas {
                for fluent in &pool {
                    if let Some(extended) = atom.unify(fluent, theta) {
                        next.insert(extended);
                    }
                }
            }
            thetas = next;
            if thetas.is_empty() {
                return Ok(Vec::new());
            }
        }
        let vars = f.vars();
        let mut out = Vec::new();
        for theta in thetas {
            if let Some(v) = vars.iter().find(|v| !theta.contains_key(*v)) {
                return Err(Error::UnsafePattern { var: v.clone(), pattern: f.to_string() });
            }
            let restricted: Subst =
                theta.into_iter().filter(|(k, _)| vars.contains(k)).collect();
            if out.contains(&restricted) {
                continue;
            }
            if self.eval(&f.apply(&restricted), s)? {
                out.push(restricted);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// One-shot ground evaluation at a state index.
pub fn eval(ctx: &EnactmentContext, graph: &KripkeGraph, s: usize, f: &CtlFormula) -> Result<bool> {
    Evaluator::new(ctx, graph).eval(f, s)
}

/// One-shot open evaluation at a state index.
pub fn eval_open(
    ctx: &EnactmentContext,
    graph: &KripkeGraph,
    s: usize,
    f: &CtlFormula,
) -> Result<Vec<Subst>> {
    Evaluator::new(ctx, graph).eval_open(f, s)
}

// ---------------------------------------------------------------------------
// Normal-form validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NfRule {
    WellModedness,
    GroundingSubformula,
    UnsafeNegation,
}

impl fmt::Display for NfRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NfRule::WellModedness => "well-modedness",
            NfRule::GroundingSubformula => "grounding-subformula",
            NfRule::UnsafeNegation => "unsafe-negation",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NfIssue {
    pub rule: NfRule,
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NfReport {
    pub accepted: bool,
    pub reasons: Vec<NfIssue>,
}

impl fmt::Display for NfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.accepted {
            return write!(f, "accepted");
        }
        let reasons: Vec<String> =
            self.reasons.iter().map(|r| format!("{}: {}", r.rule, r.location)).collect();
        write!(f, "rejected ({})", reasons.join("; "))
    }
}

/// One body literal of a query: either a plain predicate over terms or a
/// `holds(F, s0(P))` literal tying a formula to a process's initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NfLiteral {
    Plain { positive: bool, predicate: String, terms: Vec<Term> },
    Holds { positive: bool, formula: CtlFormula, state: Term },
}

impl NfLiteral {
    pub fn plain(predicate: impl Into<String>, terms: Vec<Term>) -> NfLiteral {
        NfLiteral::Plain { positive: true, predicate: predicate.into(), terms }
    }

    pub fn negated(predicate: impl Into<String>, terms: Vec<Term>) -> NfLiteral {
        NfLiteral::Plain { positive: false, predicate: predicate.into(), terms }
    }

    pub fn holds(formula: CtlFormula, state: Term) -> NfLiteral {
        NfLiteral::Holds { positive: true, formula, state }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            NfLiteral::Plain { positive, .. } | NfLiteral::Holds { positive, .. } => *positive,
        }
    }

    fn vars(&self) -> BTreeSet<String> {
        match self {
            NfLiteral::Plain { terms, .. } => terms
                .iter()
                .filter_map(|t| match t {
                    Term::Var(v) => Some(v.clone()),
                    Term::Const(_) => None,
                })
                .collect(),
            NfLiteral::Holds { formula, state, .. } => {
                let mut v = formula.vars();
                if let Term::Var(name) = state {
                    v.insert(name.clone());
                }
                v
            }
        }
    }
}

impl fmt::Display for NfLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NfLiteral::Plain { positive, predicate, terms } => {
                let args: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                let neg = if *positive { "" } else { "not " };
                write!(f, "{neg}{predicate}({})", args.join(","))
            }
            NfLiteral::Holds { positive, formula, state } => {
                let neg = if *positive { "" } else { "not " };
                write!(f, "{neg}holds({formula},s0({state}))")
            }
        }
    }
}

/// Fluent atoms of a formula at any polarity or depth.
fn all_fluent_atoms(f: &CtlFormula) -> Vec<&FluentPattern> {
    fn from_expr<'a>(e: &'a FluentExpr, out: &mut Vec<&'a FluentPattern>) {
        match e {
            FluentExpr::Atom(p) => out.push(p),
            FluentExpr::And(a, b) => {
                from_expr(a, out);
                from_expr(b, out);
            }
            FluentExpr::Not(g) => from_expr(g, out),
            FluentExpr::True | FluentExpr::False | FluentExpr::Final(_) => {}
        }
    }
    fn walk<'a>(f: &'a CtlFormula, out: &mut Vec<&'a FluentPattern>) {
        match f {
            CtlFormula::True => {}
            CtlFormula::Elem(e) => from_expr(e, out),
            CtlFormula::Not(g) | CtlFormula::Ex(g) | CtlFormula::Eg(g) => walk(g, out),
            CtlFormula::And(a, b) | CtlFormula::Eu(a, b) => {
                walk(a, out);
                walk(b, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(f, &mut out);
    out
}

fn pattern_has_var(p: &FluentPattern, v: &str) -> bool {
    p.vars().iter().any(|x| x == v)
}

/// Check the three safety conditions on a query body, left to right:
/// every holds-literal's state argument must be bound before the literal
/// (well-modedness); every variable of a holds-formula must occur in a
/// fluent subformula; and each variable's leftmost occurrence must be in a
/// positive literal — bound by a grounding subformula when that literal is
/// a holds. Accepted queries cannot flounder during evaluation.
pub fn validate_nf(query: &[NfLiteral]) -> NfReport {
    let mut reasons: Vec<NfIssue> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for lit in query {
        let lit_vars = lit.vars();
        let fresh: Vec<String> = {
            let mut f: Vec<String> =
                lit_vars.iter().filter(|v| !seen.contains(*v)).cloned().collect();
            f.sort();
            f
        };
        match lit {
            NfLiteral::Plain { positive, .. } => {
                if !positive {
                    for v in &fresh {
                        reasons.push(NfIssue {
                            rule: NfRule::UnsafeNegation,
                            location: format!(
                                "variable {v} first occurs in the negative literal {lit}"
                            ),
                        });
                    }
                }
            }
            NfLiteral::Holds { positive, formula, state } => {
                // Condition on the state argument: it is an input position.
                if let Term::Var(p) = state {
                    if !seen.contains(p) {
                        reasons.push(NfIssue {
                            rule: NfRule::WellModedness,
                            location: format!(
                                "state argument s0({p}) of {lit} is not bound by an earlier literal"
                            ),
                        });
                    }
                }
                let atoms = all_fluent_atoms(formula);
                let grounding = formula.grounding_atoms();
                for v in &fresh {
                    if let Term::Var(p) = state {
                        if v == p && !formula.vars().contains(v) {
                            continue; // already reported as a moding violation
                        }
                    }
                    if !formula.vars().contains(v) {
                        continue;
                    }
                    let in_fluent: Vec<&&FluentPattern> =
                        atoms.iter().filter(|a| pattern_has_var(a, v)).collect();
                    if in_fluent.is_empty() {
                        reasons.push(NfIssue {
                            rule: NfRule::GroundingSubformula,
                            location: format!(
                                "variable {v} of {lit} does not occur in a fluent subformula"
                            ),
                        });
                        continue;
                    }
                    if !positive {
                        reasons.push(NfIssue {
                            rule: NfRule::UnsafeNegation,
                            location: format!(
                                "variable {v} first occurs in the negative literal {lit}"
                            ),
                        });
                        continue;
                    }
                    if !grounding.iter().any(|a| pattern_has_var(a, v)) {
                        reasons.push(NfIssue {
                            rule: NfRule::GroundingSubformula,
                            location: format!("{} is not a grounding subformula", in_fluent[0]),
                        });
                    }
                }
            }
        }
        seen.extend(lit_vars);
    }
    reasons.sort_by(|a, b| (a.rule, &a.location).cmp(&(b.rule, &b.location)));
    reasons.dedup();
    NfReport { accepted: reasons.is_empty(), reasons }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::AnnotationSet;
    use crate::model::parse_process_facts;
    use crate::ontology::TripleStore;

    fn ctx(bps: &str) -> EnactmentContext {
        let schema = parse_process_facts("t", bps).unwrap();
        EnactmentContext::new(schema, &TripleStore::default(), AnnotationSet::default())
    }

    fn f(text: &str) -> CtlFormula {
        parse_ctl("t", 1, text).unwrap()
    }

    const MINIMAL: &str = "bp(p,s,e)\nstart_event(s)\nend_event(e)\nseq(s,e,p)\n";
    const ONE_TASK: &str =
        "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nseq(s,a,p)\nseq(a,e,p)\n";
    // s -> m -> a -> g -> {m, e}: a control-flow cycle plus an exit.
    const LOOPY: &str = "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nexc_merge(m)\n\
                         exc_branch(g)\nseq(s,m,p)\nseq(m,a,p)\nseq(a,g,p)\nseq(g,m,p)\nseq(g,e,p)\n";

    #[test]
    fn parse_normalizes_and_display_resugars() {
        let ef = f("EF(en(a,p))");
        assert_eq!(ef, CtlFormula::eu(CtlFormula::True, f("en(a,p)")));
        assert_eq!(ef.to_string(), "ef(en(a,p))");
        let ag = f("ag(ef(final(p)))");
        assert_eq!(ag.to_string(), "ag(ef(final(p)))");
        // Parse∘print is the identity on the tree.
        for text in [
            "ag(ef(final(p)))",
            "ef(and(cf(A1,A,p),not(ex(en(A,p)))))",
            "not(eu(not(en(a,p)),en(b,p)))",
            "eg(not(final(p)))",
            "ef(false)",
            "and(true,t(o,rdf:type,c:PO))",
        ] {
            let once = f(text);
            assert_eq!(parse_ctl("t", 1, &once.to_string()).unwrap(), once);
        }
    }

    #[test]
    fn parse_rejects_malformed_formulas() {
        assert!(parse_ctl("t", 1, "eu(en(a,p))").is_err());
        assert!(parse_ctl("t", 1, "ef(en(a,p)) extra").is_err());
        assert!(parse_ctl("t", 1, "ax(en(a,p))").is_err());
        assert!(parse_ctl("t", 1, "cf(a,p)").is_err());
    }

    #[test]
    fn basic_operators_on_the_minimal_graph() {
        let ctx = ctx(MINIMAL);
        let g = ctx.state_space("p", 100).unwrap();
        let ev = Evaluator::new(&ctx, &g);
        assert!(ev.eval(&f("ef(final(p))"), 0).unwrap());
        assert!(ev.eval(&f("ag(ef(final(p)))"), 0).unwrap());
        assert!(!ev.eval(&f("final(p)"), 0).unwrap());
        assert!(ev.eval(&f("final(p)"), 2).unwrap());
        // Sink behavior: EX(true) is false, AG(F) degenerates to F.
        assert!(!ev.eval(&f("ex(true)"), 2).unwrap());
        assert!(ev.eval(&f("ag(final(p))"), 2).unwrap());
        assert!(!ev.eval(&f("ag(cf(s,e,p))"), 2).unwrap());
        // EU requires the target on some path; its prefix condition binds.
        assert!(ev.eval(&f("eu(true,final(p))"), 0).unwrap());
        assert!(ev.eval(&f("eu(cf(start,s,p),cf(s,e,p))"), 0).unwrap());
        assert!(!ev.eval(&f("eu(false,final(p))"), 0).unwrap());
    }

    #[test]
    fn eg_distinguishes_cycles_sinks_and_doomed_paths() {
        let loopy = ctx(LOOPY);
        let g = loopy.state_space("p", 100).unwrap();
        let ev = Evaluator::new(&loopy, &g);
        // A cycle of non-final states exists from the start.
        assert!(ev.eval(&f("eg(not(final(p)))"), 0).unwrap());
        // The final sink satisfies EG of its own label.
        let sink = g.sinks()[0];
        assert!(ev.eval(&f("eg(final(p))"), sink).unwrap());
        // No maximal path avoids the sink in the minimal process.
        let lin = ctx(MINIMAL);
        let lg = lin.state_space("p", 100).unwrap();
        let lev = Evaluator::new(&lin, &lg);
        assert!(!lev.eval(&f("eg(not(final(p)))"), 0).unwrap());
    }

    #[test]
    fn ag_ef_duality_and_negation_are_pointwise() {
        let ctx = ctx(LOOPY);
        let g = ctx.state_space("p", 100).unwrap();
        let ev = Evaluator::new(&ctx, &g);
        for phi in ["final(p)", "en(a,p)", "ef(final(p))", "eg(not(final(p)))"] {
            let phi = f(phi);
            let ag = CtlFormula::ag(phi.clone());
            let ef_not = CtlFormula::ef(CtlFormula::not(phi.clone()));
            let not_phi = CtlFormula::not(phi.clone());
            for s in 0..g.len() {
                assert_eq!(ev.eval(&ag, s).unwrap(), !ev.eval(&ef_not, s).unwrap());
                assert_eq!(ev.eval(&not_phi, s).unwrap(), !ev.eval(&phi, s).unwrap());
            }
        }
    }

    #[test]
    fn eval_rejects_open_formulas_and_eval_open_binds_them() {
        let ctx = ctx(ONE_TASK);
        let g = ctx.state_space("p", 100).unwrap();
        let ev = Evaluator::new(&ctx, &g);
        let open = f("ef(en(A,p))");
        assert!(ev.eval(&open, 0).is_err());
        let thetas = ev.eval_open(&open, 0).unwrap();
        assert_eq!(thetas.len(), 1);
        assert_eq!(thetas[0].get("A").map(String::as_str), Some("a"));
        // No reachable state types anything: an open t-atom binds nothing.
        let none = ev.eval_open(&f("ef(t(X,rdf:type,c:PO))"), 0).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn eval_open_rejects_floundering_formulas() {
        let ctx = ctx(ONE_TASK);
        let g = ctx.state_space("p", 100).unwrap();
        let ev = Evaluator::new(&ctx, &g);
        // The variable occurs only in the prefix of EU: not grounding.
        let bad = f("eu(en(A,p),true)");
        match ev.eval_open(&bad, 0) {
            Err(Error::NotNormalForm(msg)) => {
                assert!(msg.contains("en(A,p) is not a grounding subformula"), "{msg}");
            }
            other => panic!("expected normal-form rejection, got {other:?}"),
        }
    }

    #[test]
    fn final_is_structural_and_unknown_processes_are_simply_false() {
        let ctx = ctx(MINIMAL);
        let g = ctx.state_space("p", 100).unwrap();
        let ev = Evaluator::new(&ctx, &g);
        assert!(!ev.eval(&f("final(q)"), 2).unwrap());
        assert!(ev.eval(&f("ef(final(p))"), 0).unwrap());
    }

    #[test]
    fn validate_nf_matches_the_safety_conditions() {
        // Ground query: accepted.
        let ground = vec![NfLiteral::holds(f("ef(final(p))"), Term::Const("p".into()))];
        assert!(validate_nf(&ground).accepted);

        // The floundering pattern: variable first bound in a non-grounding
        // position, then used under plain negation.
        let floundering = vec![
            NfLiteral::holds(f("eu(en(A,p),true)"), Term::Const("p".into())),
            NfLiteral::negated("task", vec![Term::Var("A".into())]),
        ];
        let report = validate_nf(&floundering);
        assert!(!report.accepted);
        assert!(report
            .reasons
            .iter()
            .any(|r| r.rule == NfRule::GroundingSubformula
                && r.location == "en(A,p) is not a grounding subformula"));

        // Safe ordering-property shape: variables bound by earlier positive
        // plain literals, the holds formula fully negative.
        let safe = vec![
            NfLiteral::plain("activity", vec![Term::Var("A".into())]),
            NfLiteral::plain("activity", vec![Term::Var("B".into())]),
            NfLiteral::holds(
                f("not(eu(not(en(A,p)),en(B,p)))"),
                Term::Const("p".into()),
            ),
        ];
        assert!(validate_nf(&safe).accepted);

        // Negative leftmost occurrence in a plain literal.
        let neg_first = vec![
            NfLiteral::negated("task", vec![Term::Var("A".into())]),
            NfLiteral::plain("activity", vec![Term::Var("A".into())]),
        ];
        let report = validate_nf(&neg_first);
        assert!(report.reasons.iter().any(|r| r.rule == NfRule::UnsafeNegation));

        // Unbound state argument.
        let unmoded = vec![NfLiteral::holds(f("ef(final(p))"), Term::Var("P".into()))];
        let report = validate_nf(&unmoded);
        assert!(report.reasons.iter().any(|r| r.rule == NfRule::WellModedness));

        // A state argument bound by an earlier positive literal is fine.
        let moded = vec![
            NfLiteral::plain("bp", vec![Term::Var("P".into())]),
            NfLiteral::holds(f("ef(final(p))"), Term::Var("P".into())),
        ];
        assert!(validate_nf(&moded).accepted);
    }

    #[test]
    fn grounding_atoms_follow_the_recursive_definition() {
        let atoms: Vec<String> =
            f("ef(and(cf(A1,A,p),not(ex(en(A,p)))))").grounding_atoms().iter().map(|a| a.to_string()).collect();
        assert_eq!(atoms, vec!["cf(A1,A,p)"]);
        let atoms: Vec<String> =
            f("eu(en(X,p),eg(en(Y,p)))").grounding_atoms().iter().map(|a| a.to_string()).collect();
        assert_eq!(atoms, vec!["en(Y,p)"]);
        assert!(f("not(en(A,p))").grounding_atoms().is_empty());
    }
}
