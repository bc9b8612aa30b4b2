//! Fluents, states, and fluent expressions.
//!
//! A state is a finite set of ground fluents. Fluent expressions are the
//! condition language shared by annotations (preconditions, effect
//! qualifications, guards) and by the elementary layer of temporal formulas:
//! atoms plus `and`, `not`, `true`, and the distinguished `false` atom that
//! holds exactly in ontologically inconsistent states.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Variable-or-constant argument position.
///
/// A token is a variable when it starts with `?` or with an uppercase letter
/// and contains no `:` (prefixed names such as `bro:Carrier` are constants).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn from_token(tok: &str) -> Term {
        if let Some(rest) = tok.strip_prefix('?') {
            return Term::Var(rest.to_string());
        }
        let first = tok.chars().next().unwrap_or('_');
        if first.is_ascii_uppercase() && !tok.contains(':') {
            Term::Var(tok.to_string())
        } else {
            Term::Const(tok.to_string())
        }
    }

    pub fn as_const(&self) -> Option<&str> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }

    pub fn apply(&self, subst: &Subst) -> Term {
        match self {
            Term::Const(_) => self.clone(),
            Term::Var(v) => match subst.get(v) {
                Some(c) => Term::Const(c.clone()),
                None => self.clone(),
            },
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            // Uppercase-initial names re-parse as variables on their own;
            // anything else needs the explicit marker.
            Term::Var(v) if v.chars().next().is_some_and(|c| c.is_ascii_uppercase()) => {
                write!(f, "{v}")
            }
            Term::Var(v) => write!(f, "?{v}"),
        }
    }
}

/// A substitution binding variables to constants.
pub type Subst = BTreeMap<String, String>;

/// Ground fluent. States are `BTreeSet<Fluent>`, so ordering is canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fluent {
    /// cf(e1,e2,p): e1 has been executed, its successor e2 is waiting.
    Cf { from: String, to: String, process: String },
    /// en(a,p): activity a is being enacted in p.
    En { activity: String, process: String },
    /// wrtn(a,it,p): item it was last written by a in p.
    Wrtn { activity: String, item: String, process: String },
    /// tf(s,p,o): an ontology triple holding in the state.
    Tf { subject: String, predicate: String, object: String },
}

impl Fluent {
    pub fn cf(from: &str, to: &str, process: &str) -> Fluent {
        Fluent::Cf { from: from.into(), to: to.into(), process: process.into() }
    }

    pub fn en(activity: &str, process: &str) -> Fluent {
        Fluent::En { activity: activity.into(), process: process.into() }
    }

    pub fn wrtn(activity: &str, item: &str, process: &str) -> Fluent {
        Fluent::Wrtn { activity: activity.into(), item: item.into(), process: process.into() }
    }

    pub fn tf(subject: &str, predicate: &str, object: &str) -> Fluent {
        Fluent::Tf { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }
}

impl fmt::Display for Fluent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fluent::Cf { from, to, process } => write!(f, "cf({from},{to},{process})"),
            Fluent::En { activity, process } => write!(f, "en({activity},{process})"),
            Fluent::Wrtn { activity, item, process } => write!(f, "wrtn({activity},{item},{process})"),
            Fluent::Tf { subject, predicate, object } => write!(f, "tf({subject},{predicate},{object})"),
        }
    }
}

/// A state: finite set of ground fluents, closed-world.
pub type State = BTreeSet<Fluent>;

/// Fluent atom with possibly-variable arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FluentPattern {
    Cf(Term, Term, Term),
    En(Term, Term),
    Wrtn(Term, Term, Term),
    Tf(Term, Term, Term),
}

impl FluentPattern {
    pub fn terms(&self) -> Vec<&Term> {
        match self {
            FluentPattern::Cf(a, b, c) | FluentPattern::Wrtn(a, b, c) | FluentPattern::Tf(a, b, c) => {
                vec![a, b, c]
            }
            FluentPattern::En(a, b) => vec![a, b],
        }
    }

    pub fn vars(&self) -> Vec<String> {
        self.terms()
            .into_iter()
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.clone()),
                Term::Const(_) => None,
            })
            .collect()
    }

    pub fn apply(&self, s: &Subst) -> FluentPattern {
        match self {
            FluentPattern::Cf(a, b, c) => FluentPattern::Cf(a.apply(s), b.apply(s), c.apply(s)),
            FluentPattern::En(a, b) => FluentPattern::En(a.apply(s), b.apply(s)),
            FluentPattern::Wrtn(a, b, c) => FluentPattern::Wrtn(a.apply(s), b.apply(s), c.apply(s)),
            FluentPattern::Tf(a, b, c) => FluentPattern::Tf(a.apply(s), b.apply(s), c.apply(s)),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.terms().iter().all(|t| matches!(t, Term::Const(_)))
    }

    /// Ground pattern to a fluent; None if variables remain.
    pub fn to_fluent(&self) -> Option<Fluent> {
        let f = match self {
            FluentPattern::Cf(a, b, c) => Fluent::Cf {
                from: a.as_const()?.to_string(),
                to: b.as_const()?.to_string(),
                process: c.as_const()?.to_string(),
            },
            FluentPattern::En(a, b) => Fluent::En {
                activity: a.as_const()?.to_string(),
                process: b.as_const()?.to_string(),
            },
            FluentPattern::Wrtn(a, b, c) => Fluent::Wrtn {
                activity: a.as_const()?.to_string(),
                item: b.as_const()?.to_string(),
                process: c.as_const()?.to_string(),
            },
            FluentPattern::Tf(a, b, c) => Fluent::Tf {
                subject: a.as_const()?.to_string(),
                predicate: b.as_const()?.to_string(),
                object: c.as_const()?.to_string(),
            },
        };
        Some(f)
    }

    /// Unify against a ground fluent, extending `env` on success.
    pub fn unify(&self, fluent: &Fluent, env: &Subst) -> Option<Subst> {
        let args: Vec<(&Term, &str)> = match (self, fluent) {
            (FluentPattern::Cf(a, b, c), Fluent::Cf { from, to, process }) => {
                vec![(a, from.as_str()), (b, to.as_str()), (c, process.as_str())]
            }
            (FluentPattern::En(a, b), Fluent::En { activity, process }) => {
                vec![(a, activity.as_str()), (b, process.as_str())]
            }
            (FluentPattern::Wrtn(a, b, c), Fluent::Wrtn { activity, item, process }) => {
                vec![(a, activity.as_str()), (b, item.as_str()), (c, process.as_str())]
            }
            (FluentPattern::Tf(a, b, c), Fluent::Tf { subject, predicate, object }) => {
                vec![(a, subject.as_str()), (b, predicate.as_str()), (c, object.as_str())]
            }
            _ => return None,
        };
        let mut out = env.clone();
        for (term, value) in args {
            match term {
                Term::Const(c) => {
                    if c != value {
                        return None;
                    }
                }
                Term::Var(v) => match out.get(v) {
                    Some(bound) if bound != value => return None,
                    Some(_) => {}
                    None => {
                        out.insert(v.clone(), value.to_string());
                    }
                },
            }
        }
        Some(out)
    }
}

impl fmt::Display for FluentPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluentPattern::Cf(a, b, c) => write!(f, "cf({a},{b},{c})"),
            FluentPattern::En(a, b) => write!(f, "en({a},{b})"),
            FluentPattern::Wrtn(a, b, c) => write!(f, "wrtn({a},{b},{c})"),
            FluentPattern::Tf(a, b, c) => write!(f, "tf({a},{b},{c})"),
        }
    }
}

/// Fluent expression: condition language over states.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FluentExpr {
    /// Holds in every state.
    True,
    /// The distinguished contradiction atom: holds iff the state's ontology
    /// closure is inconsistent.
    False,
    Atom(FluentPattern),
    /// final(P): the end event of P has completed.
    Final(Term),
    Not(Box<FluentExpr>),
    And(Box<FluentExpr>, Box<FluentExpr>),
}

impl FluentExpr {
    pub fn and(a: FluentExpr, b: FluentExpr) -> FluentExpr {
        FluentExpr::And(Box::new(a), Box::new(b))
    }

    pub fn not(a: FluentExpr) -> FluentExpr {
        FluentExpr::Not(Box::new(a))
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            FluentExpr::True | FluentExpr::False => {}
            FluentExpr::Atom(p) => out.extend(p.vars()),
            FluentExpr::Final(t) => {
                if let Term::Var(v) = t {
                    out.insert(v.clone());
                }
            }
            FluentExpr::Not(e) => e.collect_vars(out),
            FluentExpr::And(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Variables that a left-to-right evaluation binds through positive atoms.
    /// Variables occurring only under `not` are never bound.
    pub fn positive_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_positive_vars(&mut out);
        out
    }

    fn collect_positive_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            FluentExpr::True | FluentExpr::False | FluentExpr::Not(_) => {}
            FluentExpr::Atom(p) => out.extend(p.vars()),
            FluentExpr::Final(t) => {
                if let Term::Var(v) = t {
                    out.insert(v.clone());
                }
            }
            FluentExpr::And(a, b) => {
                a.collect_positive_vars(out);
                b.collect_positive_vars(out);
            }
        }
    }

    pub fn apply(&self, s: &Subst) -> FluentExpr {
        match self {
            FluentExpr::True => FluentExpr::True,
            FluentExpr::False => FluentExpr::False,
            FluentExpr::Atom(p) => FluentExpr::Atom(p.apply(s)),
            FluentExpr::Final(t) => FluentExpr::Final(t.apply(s)),
            FluentExpr::Not(e) => FluentExpr::not(e.apply(s)),
            FluentExpr::And(a, b) => FluentExpr::and(a.apply(s), b.apply(s)),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.vars().is_empty()
    }

    /// Positive fluent atoms, left-to-right. These are the only subformulas
    /// that can bind variables.
    pub fn positive_atoms(&self) -> Vec<&FluentPattern> {
        let mut out = Vec::new();
        self.collect_positive_atoms(&mut out);
        out
    }

    fn collect_positive_atoms<'a>(&'a self, out: &mut Vec<&'a FluentPattern>) {
        match self {
            FluentExpr::Atom(p) => out.push(p),
            FluentExpr::And(a, b) => {
                a.collect_positive_atoms(out);
                b.collect_positive_atoms(out);
            }
            _ => {}
        }
    }
}

impl fmt::Display for FluentExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluentExpr::True => write!(f, "true"),
            FluentExpr::False => write!(f, "false"),
            FluentExpr::Atom(p) => write!(f, "{p}"),
            FluentExpr::Final(t) => write!(f, "final({t})"),
            FluentExpr::Not(e) => write!(f, "not({e})"),
            FluentExpr::And(a, b) => write!(f, "and({a},{b})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Tokenizer shared by the fluent-expression, annotation, and formula parsers.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Pipe,
    Eq,
    DoubleColon,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "{s}"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
            Token::LBracket => write!(f, "["),
            Token::RBracket => write!(f, "]"),
            Token::Comma => write!(f, ","),
            Token::Pipe => write!(f, "|"),
            Token::Eq => write!(f, "="),
            Token::DoubleColon => write!(f, "::"),
        }
    }
}

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '?' | '#' | '/')
}

/// Tokenize a single logical line. `:` is part of identifiers (prefixed
/// names) except when doubled (`::`, the inline concept-annotation operator).
pub fn tokenize(file: &str, line_no: usize, text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '[' => {
                out.push(Token::LBracket);
                i += 1;
            }
            ']' => {
                out.push(Token::RBracket);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '|' => {
                out.push(Token::Pipe);
                i += 1;
            }
            '=' => {
                out.push(Token::Eq);
                i += 1;
            }
            ':' if i + 1 < chars.len() && chars[i + 1] == ':' => {
                out.push(Token::DoubleColon);
                i += 2;
            }
            c if ident_char(c) || c == '<' => {
                // <iri> brackets are stripped; the IRI text is the constant.
                if c == '<' {
                    let mut j = i + 1;
                    let mut iri = String::new();
                    while j < chars.len() && chars[j] != '>' {
                        iri.push(chars[j]);
                        j += 1;
                    }
                    if j == chars.len() {
                        return Err(Error::parse(file, line_no, "unterminated IRI"));
                    }
                    out.push(Token::Ident(iri));
                    i = j + 1;
                } else {
                    let mut j = i;
                    let mut id = String::new();
                    while j < chars.len() {
                        let d = chars[j];
                        if ident_char(d) {
                            id.push(d);
                            j += 1;
                        } else if d == ':' && !(j + 1 < chars.len() && chars[j + 1] == ':') {
                            id.push(d);
                            j += 1;
                        } else {
                            break;
                        }
                    }
                    out.push(Token::Ident(id));
                    i = j;
                }
            }
            other => {
                return Err(Error::parse(file, line_no, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(out)
}

/// Recursive-descent parser over a token slice; the cursor is shared with
/// callers that embed fluent expressions in larger grammars.
pub struct Cursor<'a> {
    pub file: &'a str,
    pub line: usize,
    pub toks: &'a [Token],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(file: &'a str, line: usize, toks: &'a [Token]) -> Self {
        Cursor { file, line, toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    pub fn next_tok(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.file, self.line, msg)
    }

    pub fn expect(&mut self, want: &Token) -> Result<()> {
        match self.next_tok() {
            Some(t) if t == want => Ok(()),
            Some(t) => {
                let t = t.clone();
                Err(self.err(format!("expected `{want}`, found `{t}`")))
            }
            None => Err(self.err(format!("expected `{want}`, found end of input"))),
        }
    }

    pub fn expect_ident(&mut self) -> Result<String> {
        match self.next_tok() {
            Some(Token::Ident(s)) => Ok(s.clone()),
            Some(t) => {
                let t = t.clone();
                Err(self.err(format!("expected identifier, found `{t}`")))
            }
            None => Err(self.err("expected identifier, found end of input")),
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn term(&mut self) -> Result<Term> {
        let id = self.expect_ident()?;
        Ok(Term::from_token(&id))
    }

    fn term_list(&mut self, n: usize) -> Result<Vec<Term>> {
        self.expect(&Token::LParen)?;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                self.expect(&Token::Comma)?;
            }
            out.push(self.term()?);
        }
        self.expect(&Token::RParen)?;
        Ok(out)
    }

    /// Parse one fluent expression. `t(s,p,o)` is accepted as a synonym for
    /// `tf(s,p,o)` (the spelling used inside queries).
    pub fn fluent_expr(&mut self) -> Result<FluentExpr> {
        let head = self.expect_ident()?;
        match head.as_str() {
            "true" => Ok(FluentExpr::True),
            "false" => Ok(FluentExpr::False),
            "not" => {
                self.expect(&Token::LParen)?;
                let inner = self.fluent_expr()?;
                self.expect(&Token::RParen)?;
                Ok(FluentExpr::not(inner))
            }
            "and" => {
                self.expect(&Token::LParen)?;
                let mut parts = vec![self.fluent_expr()?];
                while self.peek() == Some(&Token::Comma) {
                    self.next_tok();
                    parts.push(self.fluent_expr()?);
                }
                self.expect(&Token::RParen)?;
                let mut expr = parts.pop().unwrap();
                while let Some(prev) = parts.pop() {
                    expr = FluentExpr::and(prev, expr);
                }
                Ok(expr)
            }
            "cf" => {
                let a = self.term_list(3)?;
                Ok(FluentExpr::Atom(FluentPattern::Cf(a[0].clone(), a[1].clone(), a[2].clone())))
            }
            "en" => {
                let a = self.term_list(2)?;
                Ok(FluentExpr::Atom(FluentPattern::En(a[0].clone(), a[1].clone())))
            }
            "wrtn" => {
                let a = self.term_list(3)?;
                Ok(FluentExpr::Atom(FluentPattern::Wrtn(a[0].clone(), a[1].clone(), a[2].clone())))
            }
            "tf" | "t" => {
                let a = self.term_list(3)?;
                Ok(FluentExpr::Atom(FluentPattern::Tf(a[0].clone(), a[1].clone(), a[2].clone())))
            }
            "final" => {
                let a = self.term_list(1)?;
                Ok(FluentExpr::Final(a[0].clone()))
            }
            other => Err(self.err(format!("unknown fluent constructor `{other}`"))),
        }
    }
}

/// Parse a complete fluent expression from text.
pub fn parse_fluent_expr(file: &str, line: usize, text: &str) -> Result<FluentExpr> {
    let toks = tokenize(file, line, text)?;
    let mut cur = Cursor::new(file, line, &toks);
    let expr = cur.fluent_expr()?;
    if !cur.at_end() {
        return Err(cur.err("trailing tokens after fluent expression"));
    }
    Ok(expr)
}
