//! SELECT/WHERE query front end.
//!
//! Surface syntax over the knowledge-base retrieval atoms:
//!
//! ```text
//! SELECT <>                          boolean result
//! SELECT ?a ?p                       binding table
//! WHERE  atom AND atom OR atom ...   AND binds tighter than OR
//! ```
//!
//! Atoms are schema predicates (`output(?a,?i,?p)`), concept-membership
//! tests written standalone (`?c::bro:Carrier`) or inline on a predicate
//! argument (`output(?a,?i::bro:Purchase_Order,?p)`), equality
//! (`?g = g1`), static-ontology triples (`t(?s,?p,?o)`), and bracketed
//! run properties (`[EF (final(ho) AND ...) | ho]`). `NOT` negates a
//! single atom; parentheses group. Keywords are case-insensitive; `%`
//! starts a comment.
//!
//! Inside a bracketed block both the infix style (`EF (a AND NOT b)`) and
//! the function style the engine prints (`ef(and(a,not(b)))`) parse, so
//! printed queries read back verbatim.

use std::collections::BTreeSet;
use std::fmt;

use bpv_core::ctl::CtlFormula;
use bpv_core::error::{Error, Result};
use bpv_core::fluent::{tokenize, FluentPattern, Term, Token};
use bpv_core::services::{KnowledgeBase, QueryAtom, QueryLiteral};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Select {
    Boolean,
    Vars(Vec<String>),
}

/// A predicate argument, optionally carrying an inline concept test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnTerm {
    pub term: Term,
    pub concept: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    /// Schema predicate, derived predicate, or static triple (`t`/`tf`).
    Pred { name: String, args: Vec<AnnTerm> },
    /// Standalone concept-membership test.
    Sigma { term: Term, concept: String },
    Eq(Term, Term),
    /// `[formula | process]`: the property holds at the process's initial state.
    Ctl { formula: CtlFormula, process: Term },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WhereNode {
    Atom(Atom),
    Not(Box<WhereNode>),
    And(Vec<WhereNode>),
    Or(Vec<WhereNode>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub select: Select,
    pub body: WhereNode,
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

pub fn parse_query(file: &str, text: &str) -> Result<Query> {
    // One logical line; `%` comments run to end of line.
    let mut flat = String::new();
    for line in text.lines() {
        flat.push_str(line.split('%').next().unwrap_or(""));
        flat.push(' ');
    }

    // The select list is plain words, so split it off before tokenizing
    // (`<>` is not a token of the atom syntax).
    let words: Vec<&str> = flat.split_whitespace().collect();
    if words.first().map_or(true, |w| !w.eq_ignore_ascii_case("select")) {
        return Err(Error::parse(file, 1, "query must start with SELECT"));
    }
    let mut i = 1;
    let mut sel_words = Vec::new();
    while i < words.len() && !words[i].eq_ignore_ascii_case("where") {
        sel_words.push(words[i]);
        i += 1;
    }
    if i == words.len() {
        return Err(Error::parse(file, 1, "missing WHERE keyword after the select list"));
    }
    let select = if sel_words == ["<>"] {
        Select::Boolean
    } else if !sel_words.is_empty()
        && sel_words.iter().all(|w| w.starts_with('?') && w.len() > 1)
    {
        Select::Vars(sel_words.iter().map(|w| w[1..].to_string()).collect())
    } else {
        return Err(Error::parse(
            file,
            1,
            format!("select list must be `<>` or `?var` names, got `{}`", sel_words.join(" ")),
        ));
    };

    let body_text = words[i + 1..].join(" ");
    if body_text.is_empty() {
        return Err(Error::parse(file, 1, "empty WHERE clause"));
    }
    let toks = tokenize(file, 1, &body_text)?;
    let mut p = Parser { file, toks: &toks, i: 0 };
    let body = p.or_expr()?;
    if p.i != toks.len() {
        return Err(p.err("trailing tokens after the WHERE clause"));
    }

    if let Select::Vars(vars) = &select {
        let bound = node_vars(&body);
        for v in vars {
            if !bound.contains(v) {
                return Err(Error::parse(
                    file,
                    1,
                    format!("select variable ?{v} does not occur in the WHERE clause"),
                ));
            }
        }
    }
    Ok(Query { select, body })
}

/// Every variable mentioned anywhere in the node, including inside
/// bracketed run properties.
fn node_vars(n: &WhereNode) -> BTreeSet<String> {
    fn term(t: &Term, out: &mut BTreeSet<String>) {
        if let Term::Var(v) = t {
            out.insert(v.clone());
        }
    }
    fn formula(f: &CtlFormula, out: &mut BTreeSet<String>) {
        use bpv_core::fluent::FluentExpr;
        fn expr(e: &FluentExpr, out: &mut BTreeSet<String>) {
            match e {
                FluentExpr::Atom(p) => p.terms().into_iter().for_each(|t| term(t, out)),
                FluentExpr::Final(t) => term(t, out),
                FluentExpr::Not(i) => expr(i, out),
                FluentExpr::And(a, b) => {
                    expr(a, out);
                    expr(b, out);
                }
                FluentExpr::True | FluentExpr::False => {}
            }
        }
        match f {
            CtlFormula::True => {}
            CtlFormula::Elem(e) => expr(e, out),
            CtlFormula::Not(g) | CtlFormula::Ex(g) | CtlFormula::Eg(g) => formula(g, out),
            CtlFormula::And(a, b) | CtlFormula::Eu(a, b) => {
                formula(a, out);
                formula(b, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    match n {
        WhereNode::Atom(a) => match a {
            Atom::Pred { args, .. } => args.iter().for_each(|a| term(&a.term, &mut out)),
            Atom::Sigma { term: t, .. } => term(t, &mut out),
            Atom::Eq(l, r) => {
                term(l, &mut out);
                term(r, &mut out);
            }
            Atom::Ctl { formula: f, process } => {
                formula(f, &mut out);
                term(process, &mut out);
            }
        },
        WhereNode::Not(inner) => out.extend(node_vars(inner)),
        WhereNode::And(xs) | WhereNode::Or(xs) => {
            for x in xs {
                out.extend(node_vars(x));
            }
        }
    }
    out
}

struct Parser<'a> {
    file: &'a str,
    toks: &'a [Token],
    i: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.i)
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let at = match self.toks.get(self.i) {
            Some(t) => format!("`{t}`"),
            None => "end of input".to_string(),
        };
        Error::parse(self.file, 1, format!("{} (at token {}: {at})", msg.into(), self.i + 1))
    }

    fn expect(&mut self, want: &Token, what: &str) -> Result<()> {
        if self.peek() == Some(want) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Token::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn or_expr(&mut self) -> Result<WhereNode> {
        let mut nodes = vec![self.and_expr()?];
        while self.peek_kw("or") {
            self.i += 1;
            nodes.push(self.and_expr()?);
        }
        Ok(if nodes.len() == 1 { nodes.pop().unwrap() } else { WhereNode::Or(nodes) })
    }

    fn and_expr(&mut self) -> Result<WhereNode> {
        let mut nodes = vec![self.unary()?];
        while self.peek_kw("and") {
            self.i += 1;
            nodes.push(self.unary()?);
        }
        Ok(if nodes.len() == 1 { nodes.pop().unwrap() } else { WhereNode::And(nodes) })
    }

    fn unary(&mut self) -> Result<WhereNode> {
        if self.peek_kw("not") {
            self.i += 1;
            return Ok(WhereNode::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Token::LParen) {
            self.i += 1;
            let node = self.or_expr()?;
            self.expect(&Token::RParen, "closing `)`")?;
            return Ok(node);
        }
        Ok(WhereNode::Atom(self.atom()?))
    }

    fn atom(&mut self) -> Result<Atom> {
        if self.peek() == Some(&Token::LBracket) {
            self.i += 1;
            let formula = self.ctl()?;
            self.expect(&Token::Pipe, "`|` before the process of a `[formula | process]` block")?;
            let process = Term::from_token(&self.ident("a process name")?);
            self.expect(&Token::RBracket, "closing `]`")?;
            return Ok(Atom::Ctl { formula, process });
        }
        let head = self.ident("an atom")?;
        match self.peek() {
            Some(Token::DoubleColon) => {
                self.i += 1;
                let concept = self.ident("a concept name")?;
                Ok(Atom::Sigma { term: Term::from_token(&head), concept })
            }
            Some(Token::Eq) => {
                self.i += 1;
                let rhs = self.ident("a term")?;
                Ok(Atom::Eq(Term::from_token(&head), Term::from_token(&rhs)))
            }
            Some(Token::LParen) => {
                self.i += 1;
                let mut args = vec![self.ann_term()?];
                while self.peek() == Some(&Token::Comma) {
                    self.i += 1;
                    args.push(self.ann_term()?);
                }
                self.expect(&Token::RParen, "closing `)`")?;
                Ok(Atom::Pred { name: head, args })
            }
            _ => Err(self.err(format!("expected `(`, `::`, or `=` after `{head}`"))),
        }
    }

    fn ann_term(&mut self) -> Result<AnnTerm> {
        let term = Term::from_token(&self.ident("a term")?);
        let concept = if self.peek() == Some(&Token::DoubleColon) {
            self.i += 1;
            Some(self.ident("a concept name")?)
        } else {
            None
        };
        Ok(AnnTerm { term, concept })
    }

    // -- bracketed run properties --------------------------------------

    fn ctl(&mut self) -> Result<CtlFormula> {
        let mut f = self.ctl_unary()?;
        while self.peek_kw("and") {
            self.i += 1;
            f = CtlFormula::and(f, self.ctl_unary()?);
        }
        Ok(f)
    }

    fn ctl_unary(&mut self) -> Result<CtlFormula> {
        if self.peek() == Some(&Token::LParen) {
            self.i += 1;
            let f = self.ctl()?;
            self.expect(&Token::RParen, "closing `)`")?;
            return Ok(f);
        }
        let head = self.ident("a formula")?;
        let lower = head.to_ascii_lowercase();
        match lower.as_str() {
            "true" => Ok(CtlFormula::True),
            "false" => Ok(CtlFormula::contradiction()),
            // Prefix operators; a parenthesized operand doubles as the
            // function form the engine prints.
            "not" | "ex" | "ef" | "eg" | "ag" => {
                let f = self.ctl_unary()?;
                Ok(match lower.as_str() {
                    "not" => CtlFormula::not(f),
                    "ex" => CtlFormula::ex(f),
                    "ef" => CtlFormula::ef(f),
                    "eg" => CtlFormula::eg(f),
                    _ => CtlFormula::ag(f),
                })
            }
            "and" | "eu" => {
                self.expect(&Token::LParen, format!("`(` after `{head}`").as_str())?;
                let a = self.ctl()?;
                self.expect(&Token::Comma, "`,` between the operands")?;
                let b = self.ctl()?;
                self.expect(&Token::RParen, "closing `)`")?;
                Ok(if lower == "and" { CtlFormula::and(a, b) } else { CtlFormula::eu(a, b) })
            }
            "final" => {
                self.expect(&Token::LParen, "`(` after `final`")?;
                let t = Term::from_token(&self.ident("a process name")?);
                self.expect(&Token::RParen, "closing `)`")?;
                Ok(CtlFormula::final_state(t))
            }
            "cf" | "en" | "wrtn" | "t" | "tf" => {
                self.expect(&Token::LParen, format!("`(` after `{head}`").as_str())?;
                let mut terms = vec![Term::from_token(&self.ident("a term")?)];
                while self.peek() == Some(&Token::Comma) {
                    self.i += 1;
                    terms.push(Term::from_token(&self.ident("a term")?));
                }
                self.expect(&Token::RParen, "closing `)`")?;
                let pat = match (lower.as_str(), terms.len()) {
                    ("cf", 3) => {
                        FluentPattern::Cf(terms[0].clone(), terms[1].clone(), terms[2].clone())
                    }
                    ("en", 2) => FluentPattern::En(terms[0].clone(), terms[1].clone()),
                    ("wrtn", 3) => {
                        FluentPattern::Wrtn(terms[0].clone(), terms[1].clone(), terms[2].clone())
                    }
                    ("t" | "tf", 3) => {
                        FluentPattern::Tf(terms[0].clone(), terms[1].clone(), terms[2].clone())
                    }
                    (p, n) => return Err(self.err(format!("`{p}` does not take {n} argument(s)"))),
                };
                Ok(CtlFormula::atom(pat))
            }
            other => Err(self.err(format!("unknown formula head `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Printing (parse . print . parse is the identity on query values)
// ---------------------------------------------------------------------------

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Select::Boolean => write!(f, "<>"),
            Select::Vars(vs) => {
                let list: Vec<String> = vs.iter().map(|v| format!("?{v}")).collect();
                write!(f, "{}", list.join(" "))
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Pred { name, args } => {
                let rendered: Vec<String> = args
                    .iter()
                    .map(|a| match &a.concept {
                        Some(c) => format!("{}::{c}", a.term),
                        None => a.term.to_string(),
                    })
                    .collect();
                write!(f, "{name}({})", rendered.join(","))
            }
            Atom::Sigma { term, concept } => write!(f, "{term}::{concept}"),
            Atom::Eq(l, r) => write!(f, "{l} = {r}"),
            Atom::Ctl { formula, process } => write!(f, "[{formula} | {process}]"),
        }
    }
}

impl fmt::Display for WhereNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WhereNode::Atom(a) => write!(f, "{a}"),
            WhereNode::Not(inner) => match inner.as_ref() {
                WhereNode::And(_) | WhereNode::Or(_) => write!(f, "NOT ({inner})"),
                _ => write!(f, "NOT {inner}"),
            },
            WhereNode::And(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, " AND ")?;
                    }
                    match x {
                        WhereNode::Or(_) => write!(f, "({x})")?,
                        _ => write!(f, "{x}")?,
                    }
                }
                Ok(())
            }
            WhereNode::Or(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, " OR ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT {} WHERE {}", self.select, self.body)
    }
}

// ---------------------------------------------------------------------------
// Lowering and evaluation
// ---------------------------------------------------------------------------

/// Flatten the body into engine conjunctions, one per disjunct. Inline
/// concept tests desugar into extra positive membership literals.
pub fn lower(q: &Query) -> Result<Vec<Vec<QueryLiteral>>> {
    let groups = dnf(&q.body)?;
    let mut plans = Vec::new();
    for group in groups {
        let mut plan = Vec::new();
        for (positive, atom) in group {
            lower_atom(positive, atom, &mut plan)?;
        }
        plans.push(plan);
    }
    Ok(plans)
}

fn lower_atom(positive: bool, atom: &Atom, out: &mut Vec<QueryLiteral>) -> Result<()> {
    let lit = |positive: bool, atom: QueryAtom| QueryLiteral { positive, atom };
    match atom {
        Atom::Pred { name, args } => {
            let mut terms = Vec::new();
            let mut side = Vec::new();
            for a in args {
                terms.push(a.term.clone());
                if let Some(c) = &a.concept {
                    if !positive {
                        return Err(Error::Other(
                            "inline `::` under NOT is ambiguous; state the membership atom \
                             separately"
                                .to_string(),
                        ));
                    }
                    side.push(lit(
                        true,
                        QueryAtom::Sigma { element: a.term.clone(), concept: c.clone() },
                    ));
                }
            }
            let qa = match (name.as_str(), terms.len()) {
                ("reachable", 3) => QueryAtom::Reachable {
                    from: terms[0].clone(),
                    to: terms[1].clone(),
                    process: terms[2].clone(),
                },
                _ => QueryAtom::Fact { predicate: name.clone(), terms },
            };
            out.push(lit(positive, qa));
            out.extend(side);
        }
        Atom::Sigma { term, concept } => out.push(lit(
            positive,
            QueryAtom::Sigma { element: term.clone(), concept: concept.clone() },
        )),
        Atom::Eq(l, r) => {
            out.push(lit(positive, QueryAtom::Eq { left: l.clone(), right: r.clone() }))
        }
        Atom::Ctl { formula, process } => out.push(lit(
            positive,
            QueryAtom::Holds { formula: formula.clone(), process: process.clone() },
        )),
    }
    Ok(())
}

fn dnf(n: &WhereNode) -> Result<Vec<Vec<(bool, &Atom)>>> {
    match n {
        WhereNode::Atom(a) => Ok(vec![vec![(true, a)]]),
        WhereNode::Not(inner) => match inner.as_ref() {
            WhereNode::Atom(a) => Ok(vec![vec![(false, a)]]),
            _ => Err(Error::Other(
                "NOT applies to a single atom; negated groups are not supported".to_string(),
            )),
        },
        WhereNode::And(xs) => {
            let mut acc: Vec<Vec<(bool, &Atom)>> = vec![Vec::new()];
            for x in xs {
                let child = dnf(x)?;
                let mut next = Vec::new();
                for left in &acc {
                    for right in &child {
                        let mut joined = left.clone();
                        joined.extend(right.iter().cloned());
                        next.push(joined);
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
        WhereNode::Or(xs) => {
            let mut acc = Vec::new();
            for x in xs {
                acc.extend(dnf(x)?);
            }
            Ok(acc)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Boolean(bool),
    Rows { vars: Vec<String>, rows: Vec<Vec<String>> },
}

pub fn evaluate(q: &Query, kb: &KnowledgeBase) -> Result<Outcome> {
    let plans = lower(q)?;
    match &q.select {
        Select::Boolean => {
            for plan in &plans {
                if !kb.retrieve(plan)?.is_empty() {
                    return Ok(Outcome::Boolean(true));
                }
            }
            Ok(Outcome::Boolean(false))
        }
        Select::Vars(vars) => {
            let mut rows = BTreeSet::new();
            for plan in &plans {
                for subst in kb.retrieve(plan)? {
                    let row = vars
                        .iter()
                        .map(|v| {
                            subst.get(v).cloned().ok_or_else(|| {
                                Error::Other(format!(
                                    "select variable ?{v} is unbound in an answer; add an atom \
                                     that binds it"
                                ))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rows.insert(row);
                }
            }
            Ok(Outcome::Rows { vars: vars.clone(), rows: rows.into_iter().collect() })
        }
    }
}
