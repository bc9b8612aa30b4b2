//! Terminological store: triples, class expressions, schema-level closure.
//!
//! Two input formats load into the same store: line-oriented triples
//! (`subject predicate object .`, `@prefix` declarations, `<iri>` or
//! prefixed-name terms) and a description-logic shorthand (one axiom per
//! line; `subClassOf`, `and`, `some`, `not` spell the connectives).
//!
//! Terms are opaque tokens. Full IRIs in the standard namespaces contract to
//! the canonical prefixed spelling (`rdf:`, `rdfs:`, `owl:`); other prefixed
//! names are kept exactly as written so that fact files, annotation files,
//! and queries agree on spelling without sharing a prefix table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::fluent::{tokenize, Cursor, Token};

pub mod vocab {
    pub const TYPE: &str = "rdf:type";
    pub const SUB_CLASS: &str = "rdfs:subClassOf";
    pub const SUB_PROPERTY: &str = "rdfs:subPropertyOf";
    pub const DOMAIN: &str = "rdfs:domain";
    pub const RANGE: &str = "rdfs:range";
    pub const EQUIVALENT_CLASS: &str = "owl:equivalentClass";
    pub const DISJOINT_WITH: &str = "owl:disjointWith";
    pub const INTERSECTION_OF: &str = "owl:intersectionOf";
    pub const SOME_VALUES_FROM: &str = "owl:someValuesFrom";
    pub const ON_PROPERTY: &str = "owl:onProperty";
    pub const INVERSE_OF: &str = "owl:inverseOf";
    pub const TRANSITIVE_PROPERTY: &str = "owl:TransitiveProperty";
    pub const CLASS: &str = "owl:Class";
    pub const OBJECT_PROPERTY: &str = "owl:ObjectProperty";
    pub const NOTHING: &str = "owl:Nothing";

    /// Predicates accepted in the reserved namespaces.
    pub const SUPPORTED_PREDICATES: &[&str] = &[
        TYPE,
        SUB_CLASS,
        SUB_PROPERTY,
        DOMAIN,
        RANGE,
        EQUIVALENT_CLASS,
        DISJOINT_WITH,
        INTERSECTION_OF,
        SOME_VALUES_FROM,
        ON_PROPERTY,
        INVERSE_OF,
    ];
}

const STD_NAMESPACES: &[(&str, &str)] = &[
    ("http://www.w3.org/1999/02/22-rdf-syntax-ns#", "rdf:"),
    ("http://www.w3.org/2000/01/rdf-schema#", "rdfs:"),
    ("http://www.w3.org/2002/07/owl#", "owl:"),
];

/// Contract standard-namespace IRIs to their canonical prefixed spelling.
pub fn canonical_term(tok: &str) -> String {
    for (ns, prefix) in STD_NAMESPACES {
        if let Some(local) = tok.strip_prefix(ns) {
            return format!("{prefix}{local}");
        }
    }
    tok.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TripleObject {
    Term(String),
    /// Binary list used by `owl:intersectionOf`.
    List(Vec<String>),
}

impl fmt::Display for TripleObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TripleObject::Term(t) => write!(f, "{t}"),
            TripleObject::List(items) => write!(f, "({})", items.join(" ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: TripleObject,
}

impl Triple {
    pub fn term(s: &str, p: &str, o: &str) -> Triple {
        Triple {
            subject: s.to_string(),
            predicate: p.to_string(),
            object: TripleObject::Term(o.to_string()),
        }
    }

    pub fn list(s: &str, p: &str, items: &[&str]) -> Triple {
        Triple {
            subject: s.to_string(),
            predicate: p.to_string(),
            object: TripleObject::List(items.iter().map(|x| x.to_string()).collect()),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    pub triples: BTreeSet<Triple>,
    /// Declared prefixes, recorded for diagnostics; terms stay as written.
    pub prefixes: BTreeMap<String, String>,
}

impl TripleStore {
    pub fn insert(&mut self, t: Triple) {
        self.triples.insert(t);
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    /// All (subject, object) pairs of a predicate with term objects.
    pub fn pairs<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.triples.iter().filter_map(move |t| match (&t.predicate, &t.object) {
            (p, TripleObject::Term(o)) if p == predicate => Some((t.subject.as_str(), o.as_str())),
            _ => None,
        })
    }

    pub fn intersections(&self) -> impl Iterator<Item = (&str, &[String])> + '_ {
        self.triples.iter().filter_map(|t| match (&t.predicate, &t.object) {
            (p, TripleObject::List(items)) if p == vocab::INTERSECTION_OF => {
                Some((t.subject.as_str(), items.as_slice()))
            }
            _ => None,
        })
    }

    /// Restriction classes: (class, property, filler) from paired
    /// someValuesFrom/onProperty triples.
    pub fn restrictions(&self) -> Vec<(String, String, String)> {
        let mut on_prop: BTreeMap<&str, &str> = BTreeMap::new();
        for (c, p) in self.pairs(vocab::ON_PROPERTY) {
            on_prop.insert(c, p);
        }
        let mut out = Vec::new();
        for (c, filler) in self.pairs(vocab::SOME_VALUES_FROM) {
            if let Some(p) = on_prop.get(c) {
                out.push((c.to_string(), p.to_string(), filler.to_string()));
            }
        }
        out
    }

    pub fn is_transitive_property(&self, p: &str) -> bool {
        self.contains(&Triple::term(p, vocab::TYPE, vocab::TRANSITIVE_PROPERTY))
    }

    /// A named term "occurs" when it appears in any triple position.
    pub fn mentions(&self, name: &str) -> bool {
        self.triples.iter().any(|t| {
            t.subject == name
                || t.predicate == name
                || match &t.object {
                    TripleObject::Term(o) => o == name,
                    TripleObject::List(items) => items.iter().any(|i| i == name),
                }
        })
    }

    pub fn merge(&mut self, other: &TripleStore) {
        for t in &other.triples {
            self.triples.insert(t.clone());
        }
    }
}

// ---------------------------------------------------------------------------
// Class expressions
// ---------------------------------------------------------------------------

/// Class expression of the supported fragment: named classes, binary
/// intersection, existential restriction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassExpr {
    Named(String),
    And(Box<ClassExpr>, Box<ClassExpr>),
    Some(String, Box<ClassExpr>),
}

impl ClassExpr {
    pub fn and(a: ClassExpr, b: ClassExpr) -> ClassExpr {
        ClassExpr::And(Box::new(a), Box::new(b))
    }

    pub fn some(p: &str, filler: ClassExpr) -> ClassExpr {
        ClassExpr::Some(p.to_string(), Box::new(filler))
    }

    /// Deterministic name for the normalized class; structural, so equal
    /// expressions share one name.
    pub fn canonical_name(&self) -> String {
        match self {
            ClassExpr::Named(n) => n.clone(),
            ClassExpr::And(a, b) => format!("x:and({},{})", a.canonical_name(), b.canonical_name()),
            ClassExpr::Some(p, c) => format!("x:some({},{})", p, c.canonical_name()),
        }
    }

    /// Named classes and properties mentioned by the expression.
    pub fn named_parts(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_named(&mut out);
        out
    }

    fn collect_named(&self, out: &mut BTreeSet<String>) {
        match self {
            ClassExpr::Named(n) => {
                out.insert(n.clone());
            }
            ClassExpr::And(a, b) => {
                a.collect_named(out);
                b.collect_named(out);
            }
            ClassExpr::Some(p, c) => {
                out.insert(p.clone());
                c.collect_named(out);
            }
        }
    }

    /// Materialize defining triples for the expression and every subexpression;
    /// returns the (canonical) class name.
    pub fn normalize(&self, store: &mut TripleStore) -> String {
        match self {
            ClassExpr::Named(n) => n.clone(),
            ClassExpr::And(a, b) => {
                let na = a.normalize(store);
                let nb = b.normalize(store);
                let name = self.canonical_name();
                store.insert(Triple::list(&name, vocab::INTERSECTION_OF, &[&na, &nb]));
                name
            }
            ClassExpr::Some(p, c) => {
                let nc = c.normalize(store);
                let name = self.canonical_name();
                store.insert(Triple::term(&name, vocab::SOME_VALUES_FROM, &nc));
                store.insert(Triple::term(&name, vocab::ON_PROPERTY, p));
                name
            }
        }
    }

    /// Parse from a token cursor. Grammar (left-associative `and`):
    /// `expr := primary ('and' primary)*`,
    /// `primary := '(' expr ')' | name ['some' primary]`.
    pub fn parse(cur: &mut Cursor<'_>) -> Result<ClassExpr> {
        let mut acc = Self::parse_primary(cur)?;
        while matches!(cur.peek(), Some(Token::Ident(s)) if s == "and") {
            cur.next_tok();
            let rhs = Self::parse_primary(cur)?;
            acc = ClassExpr::and(acc, rhs);
        }
        Ok(acc)
    }

    fn parse_primary(cur: &mut Cursor<'_>) -> Result<ClassExpr> {
        if cur.peek() == Some(&Token::LParen) {
            cur.next_tok();
            let e = Self::parse(cur)?;
            cur.expect(&Token::RParen)?;
            return Ok(e);
        }
        let name = cur.expect_ident()?;
        if matches!(&name as &str, "and" | "some" | "not") {
            return Err(cur.err(format!("`{name}` cannot start a class expression")));
        }
        if matches!(cur.peek(), Some(Token::Ident(s)) if s == "some") {
            cur.next_tok();
            let filler = Self::parse_primary(cur)?;
            return Ok(ClassExpr::some(&name, filler));
        }
        Ok(ClassExpr::Named(canonical_term(&name)))
    }
}

impl fmt::Display for ClassExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassExpr::Named(n) => write!(f, "{n}"),
            ClassExpr::And(a, b) => write!(f, "({a} and {b})"),
            ClassExpr::Some(p, c) => write!(f, "({p} some {c})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing: triple lines
// ---------------------------------------------------------------------------

fn check_vocab(file: &str, line: usize, predicate: &str) -> Result<()> {
    let reserved = predicate.starts_with("rdf:") || predicate.starts_with("rdfs:") || predicate.starts_with("owl:");
    if reserved && !vocab::SUPPORTED_PREDICATES.contains(&predicate) {
        return Err(Error::parse(file, line, format!("unsupported vocabulary predicate `{predicate}`")));
    }
    Ok(())
}

fn push_axiom(store: &mut TripleStore, subject: String, predicate: String, object: TripleObject) {
    // equivalentClass expands to mutual subsumption at load.
    if predicate == vocab::EQUIVALENT_CLASS {
        if let TripleObject::Term(o) = &object {
            store.insert(Triple::term(&subject, vocab::SUB_CLASS, o));
            store.insert(Triple::term(o, vocab::SUB_CLASS, &subject));
            return;
        }
    }
    store.insert(Triple { subject, predicate, object });
}

/// Load line-oriented triples into a store.
pub fn load_triples(file: &str, text: &str) -> Result<TripleStore> {
    let mut store = TripleStore::default();
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
        if let Some(rest) = line.strip_prefix("@prefix") {
            let toks = tokenize(file, line_no, rest)?;
            // `@prefix p: <iri>`: the prefix token keeps its trailing colon.
            match toks.as_slice() {
                [Token::Ident(p), Token::Ident(iri)] if p.ends_with(':') => {
                    store.prefixes.insert(p.clone(), iri.clone());
                }
                _ => return Err(Error::parse(file, line_no, "malformed @prefix declaration")),
            }
            continue;
        }
        let toks = tokenize(file, line_no, line)?;
        let mut cur = Cursor::new(file, line_no, &toks);
        let subject = canonical_term(&cur.expect_ident()?);
        let predicate = canonical_term(&cur.expect_ident()?);
        check_vocab(file, line_no, &predicate)?;
        let object = if cur.peek() == Some(&Token::LParen) {
            cur.next_tok();
            let mut items = Vec::new();
            while let Some(tok) = cur.peek() {
                match tok {
                    Token::RParen => break,
                    Token::Ident(_) => items.push(canonical_term(&cur.expect_ident()?)),
                    other => {
                        let other = other.clone();
                        return Err(cur.err(format!("unexpected `{other}` in list object")));
                    }
                }
            }
            cur.expect(&Token::RParen)?;
            if predicate != vocab::INTERSECTION_OF {
                return Err(Error::parse(file, line_no, format!("`{predicate}` does not take a list object")));
            }
            if items.len() != 2 {
                return Err(Error::parse(file, line_no, "intersection lists are binary"));
            }
            TripleObject::List(items)
        } else {
            TripleObject::Term(canonical_term(&cur.expect_ident()?))
        };
        if !cur.at_end() {
            return Err(Error::parse(file, line_no, "trailing tokens after triple"));
        }
        push_axiom(&mut store, subject, predicate, object);
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Parsing: description-logic shorthand
// ---------------------------------------------------------------------------

/// Load the axiom shorthand. Supported line forms:
///
/// ```text
/// EXPR subClassOf EXPR          EXPR equivalentClass EXPR
/// EXPR disjointWith EXPR        EXPR subClassOf not EXPR
/// EXPR and EXPR subClassOf Nothing
/// p subPropertyOf q             p domain EXPR | p range EXPR
/// transitive p                  class C | property p
/// ```
pub fn load_axioms(file: &str, text: &str) -> Result<TripleStore> {
    let mut store = TripleStore::default();
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

        // Declarations and property-level forms are keyword-led.
        if let Some(Token::Ident(head)) = cur.peek() {
            match head.as_str() {
                "class" | "property" | "transitive" => {
                    let head = head.clone();
                    cur.next_tok();
                    let name = canonical_term(&cur.expect_ident()?);
                    if !cur.at_end() {
                        return Err(Error::parse(file, line_no, "trailing tokens after declaration"));
                    }
                    let t = match head.as_str() {
                        "class" => Triple::term(&name, vocab::TYPE, vocab::CLASS),
                        "property" => Triple::term(&name, vocab::TYPE, vocab::OBJECT_PROPERTY),
                        _ => Triple::term(&name, vocab::TYPE, vocab::TRANSITIVE_PROPERTY),
                    };
                    store.insert(t);
                    continue;
                }
                _ => {}
            }
        }

        let lhs = ClassExpr::parse(&mut cur)?;
        let rel = cur.expect_ident()?;
        match rel.as_str() {
            "subClassOf" => {
                // `subClassOf not D` and `... subClassOf Nothing` encode disjointness.
                if matches!(cur.peek(), Some(Token::Ident(s)) if s == "not") {
                    cur.next_tok();
                    let rhs = ClassExpr::parse(&mut cur)?;
                    let a = lhs.normalize(&mut store);
                    let b = rhs.normalize(&mut store);
                    store.insert(Triple::term(&a, vocab::DISJOINT_WITH, &b));
                } else {
                    let rhs = ClassExpr::parse(&mut cur)?;
                    if rhs == ClassExpr::Named(vocab::NOTHING.into()) || rhs == ClassExpr::Named("Nothing".into()) {
                        match lhs {
                            ClassExpr::And(a, b) => {
                                let na = a.normalize(&mut store);
                                let nb = b.normalize(&mut store);
                                store.insert(Triple::term(&na, vocab::DISJOINT_WITH, &nb));
                            }
                            other => {
                                let n = other.normalize(&mut store);
                                store.insert(Triple::term(&n, vocab::DISJOINT_WITH, &n));
                            }
                        }
                    } else {
                        let a = lhs.normalize(&mut store);
                        let b = rhs.normalize(&mut store);
                        store.insert(Triple::term(&a, vocab::SUB_CLASS, &b));
                    }
                }
            }
            "equivalentClass" => {
                let rhs = ClassExpr::parse(&mut cur)?;
                let a = lhs.normalize(&mut store);
                let b = rhs.normalize(&mut store);
                store.insert(Triple::term(&a, vocab::SUB_CLASS, &b));
                store.insert(Triple::term(&b, vocab::SUB_CLASS, &a));
            }
            "disjointWith" => {
                let rhs = ClassExpr::parse(&mut cur)?;
                let a = lhs.normalize(&mut store);
                let b = rhs.normalize(&mut store);
                store.insert(Triple::term(&a, vocab::DISJOINT_WITH, &b));
            }
            "subPropertyOf" | "domain" | "range" => {
                let ClassExpr::Named(p) = &lhs else {
                    return Err(Error::parse(file, line_no, format!("`{rel}` takes a property name on the left")));
                };
                if rel == "subPropertyOf" {
                    let q = canonical_term(&cur.expect_ident()?);
                    store.insert(Triple::term(p, vocab::SUB_PROPERTY, &q));
                } else {
                    let rhs = ClassExpr::parse(&mut cur)?;
                    let c = rhs.normalize(&mut store);
                    let pred = if rel == "domain" { vocab::DOMAIN } else { vocab::RANGE };
                    store.insert(Triple::term(p, pred, &c));
                }
            }
            other => {
                return Err(Error::parse(file, line_no, format!("unknown axiom connective `{other}`")));
            }
        }
        if !cur.at_end() {
            return Err(Error::parse(file, line_no, "trailing tokens after axiom"));
        }
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Schema-level closure and entailment
// ---------------------------------------------------------------------------

/// Forward closure of the schema-level rules: transitive subsumption,
/// subsumption between existential restrictions over one property, and
/// subsumption of an intersection by its conjuncts. Semi-naive on the
/// subsumption relation.
pub fn tbox_closure(store: &TripleStore) -> TripleStore {
    let mut closed = store.clone();

    // Intersection conjuncts: one shot, no recursion through other rules'
    // heads (intersection triples are never derived).
    let mut new_subs: BTreeSet<(String, String)> = BTreeSet::new();
    for (c, items) in closed.intersections() {
        for d in items {
            new_subs.insert((c.to_string(), d.clone()));
        }
    }
    for (a, b) in new_subs {
        closed.insert(Triple::term(&a, vocab::SUB_CLASS, &b));
    }

    let restrictions = closed.restrictions();
    let mut all: BTreeSet<(String, String)> =
        closed.pairs(vocab::SUB_CLASS).map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let mut delta = all.clone();

    while !delta.is_empty() {
        let mut next: BTreeSet<(String, String)> = BTreeSet::new();

        // Transitivity, seeded by the delta on either side.
        for (a, b) in &delta {
            for (c, d) in &all {
                if b == c && !all.contains(&(a.clone(), d.clone())) {
                    next.insert((a.clone(), d.clone()));
                }
                if d == a && !all.contains(&(c.clone(), b.clone())) {
                    next.insert((c.clone(), b.clone()));
                }
            }
        }
        // Existential subsumption: D1 subClassOf D2 lifts to the restrictions.
        for (c1, p1, d1) in &restrictions {
            for (c2, p2, d2) in &restrictions {
                if p1 == p2 && delta.contains(&(d1.clone(), d2.clone())) && !all.contains(&(c1.clone(), c2.clone()))
                {
                    next.insert((c1.clone(), c2.clone()));
                }
            }
        }

        for pair in &next {
            all.insert(pair.clone());
        }
        delta = next;
    }

    for (a, b) in all {
        closed.insert(Triple::term(&a, vocab::SUB_CLASS, &b));
    }
    closed
}

/// Membership in the closed store. Unasserted reflexive subsumption is not
/// entailed (the rule set has no reflexivity axiom).
pub fn entails(closed: &TripleStore, query: &Triple) -> bool {
    closed.contains(query)
}
