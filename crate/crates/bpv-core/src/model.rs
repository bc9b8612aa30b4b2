//! Process schemas: ground structural facts, well-formedness, reachability.
//!
//! A schema is a set of ground facts over the structural vocabulary
//! (`bp`, `comp_act`, `seq`, `exception`, element classifications, items,
//! participants, assignments). Behavioral semantics lives in `enactment`;
//! this module only knows the graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::fluent::{tokenize, Cursor, Token};

/// Reserved state-marker constants; they never name schema elements.
pub const START_MARKER: &str = "start";
pub const END_MARKER: &str = "end";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKind {
    Task,
    Compound,
    StartEvent,
    IntEvent,
    EndEvent,
    ExcBranch,
    ExcMerge,
    IncBranch,
    IncMerge,
    ParBranch,
    ParMerge,
    Item,
    Participant,
}

impl ElementKind {
    pub fn is_activity(self) -> bool {
        matches!(self, ElementKind::Task | ElementKind::Compound)
    }

    pub fn is_event(self) -> bool {
        matches!(self, ElementKind::StartEvent | ElementKind::IntEvent | ElementKind::EndEvent)
    }

    pub fn is_gateway(self) -> bool {
        matches!(
            self,
            ElementKind::ExcBranch
                | ElementKind::ExcMerge
                | ElementKind::IncBranch
                | ElementKind::IncMerge
                | ElementKind::ParBranch
                | ElementKind::ParMerge
        )
    }

    pub fn is_flow_element(self) -> bool {
        self.is_activity() || self.is_event() || self.is_gateway()
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ElementKind::Task => "task",
            ElementKind::Compound => "comp_act",
            ElementKind::StartEvent => "start_event",
            ElementKind::IntEvent => "int_event",
            ElementKind::EndEvent => "end_event",
            ElementKind::ExcBranch => "exc_branch",
            ElementKind::ExcMerge => "exc_merge",
            ElementKind::IncBranch => "inc_branch",
            ElementKind::IncMerge => "inc_merge",
            ElementKind::ParBranch => "par_branch",
            ElementKind::ParMerge => "par_merge",
            ElementKind::Item => "item",
            ElementKind::Participant => "participant",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SeqEdge {
    pub from: String,
    pub to: String,
    pub process: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessSchema {
    /// bp(p, s, e): top-level processes.
    pub processes: BTreeMap<String, (String, String)>,
    /// comp_act(a, s, e): compound activities with their entry/exit events.
    pub compounds: BTreeMap<String, (String, String)>,
    /// Classifications; well-formedness requires exactly one per element.
    pub kinds: BTreeMap<String, BTreeSet<ElementKind>>,
    pub seq: Vec<SeqEdge>,
    /// exception(e, a, p): event e interrupts activity a in process p.
    pub exceptions: Vec<(String, String, String)>,
    /// input(a, it, p) / output(a, it, p).
    pub inputs: Vec<(String, String, String)>,
    pub outputs: Vec<(String, String, String)>,
    /// assigned(a, part, p).
    pub assignments: Vec<(String, String, String)>,
}

impl Default for ProcessSchema {
    fn default() -> Self {
        ProcessSchema {
            processes: BTreeMap::new(),
            compounds: BTreeMap::new(),
            kinds: BTreeMap::new(),
            seq: Vec::new(),
            exceptions: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            assignments: Vec::new(),
        }
    }
}

/// Well-formedness constraint tags, mirroring the numbered constraints plus
/// the meta-model checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// (1) unique start/end event per process.
    UniqueStartEnd,
    /// (2) every flow element lies on a start-to-end path.
    PathCoverage,
    /// (3) start events have no predecessors, end events no successors.
    StartEndEdges,
    /// (4) branch gateways have one predecessor and >= 2 successors; merges dual.
    GatewayDegree,
    /// (5) activities and intermediate events have exactly one predecessor and
    /// one successor (exception events: trigger is the activity, one successor).
    UnitDegree,
    /// (6) the compound-activity hierarchy is acyclic.
    AcyclicHierarchy,
    /// Meta-model: classifications are mutually exclusive.
    Disjointness,
    /// Referenced element/process missing or classified inappropriately.
    Reference,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::UniqueStartEnd => "unique-start-end",
            Constraint::PathCoverage => "path-coverage",
            Constraint::StartEndEdges => "start-end-edges",
            Constraint::GatewayDegree => "gateway-degree",
            Constraint::UnitDegree => "unit-degree",
            Constraint::AcyclicHierarchy => "acyclic-hierarchy",
            Constraint::Disjointness => "disjointness",
            Constraint::Reference => "reference",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub constraint: Constraint,
    pub subjects: Vec<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.constraint, self.message)
    }
}

/// Violations in canonical order, independent of fact-file ordering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_well_formed(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, constraint: Constraint, subjects: Vec<String>, message: String) {
        self.violations.push(Violation { constraint, subjects, message });
    }

    fn finish(mut self) -> Self {
        self.violations.sort();
        self.violations.dedup();
        self
    }
}

// ---------------------------------------------------------------------------
// Fact parsing
// ---------------------------------------------------------------------------

/// Predicates from the structural vocabulary that are derived, not asserted.
const DERIVED_PREDICATES: &[&str] = &["element", "event", "activity", "relation", "gateway"];

fn classify(schema: &mut ProcessSchema, name: &str, kind: ElementKind) {
    schema.kinds.entry(name.to_string()).or_default().insert(kind);
}

fn check_const(file: &str, line: usize, tok: &str) -> Result<String> {
    if tok.starts_with('?') || (tok.chars().next().is_some_and(|c| c.is_ascii_uppercase()) && !tok.contains(':')) {
        return Err(Error::parse(file, line, format!("variables are not permitted in fact files: `{tok}`")));
    }
    if tok == START_MARKER || tok == END_MARKER {
        return Err(Error::parse(file, line, format!("`{tok}` is a reserved constant")));
    }
    Ok(tok.to_string())
}

/// Parse structural ground facts, one per line, `%` comments, optional
/// trailing period.
pub fn parse_process_facts(file: &str, text: &str) -> Result<ProcessSchema> {
    let mut schema = ProcessSchema::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim().trim_end_matches('.').trim();
        if line.is_empty() {
            continue;
        }
        let toks = tokenize(file, line_no, line)?;
        let mut cur = Cursor::new(file, line_no, &toks);
        let pred = cur.expect_ident()?;
        cur.expect(&Token::LParen)?;
        let mut args = Vec::new();
        loop {
            let id = cur.expect_ident()?;
            args.push(check_const(file, line_no, &id)?);
            match cur.next_tok() {
                Some(Token::Comma) => continue,
                Some(Token::RParen) => break,
                _ => return Err(Error::parse(file, line_no, "expected `,` or `)` in fact")),
            }
        }
        if !cur.at_end() {
            return Err(Error::parse(file, line_no, "trailing tokens after fact"));
        }
        let arity_err = |n: usize| -> Error {
            Error::parse(file, line_no, format!("`{pred}` takes {n} argument(s), found {}", args.len()))
        };
        match pred.as_str() {
            "bp" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                if let Some(prev) = schema.processes.get(&args[0]) {
                    if *prev != (args[1].clone(), args[2].clone()) {
                        return Err(Error::parse(
                            file,
                            line_no,
                            format!("process `{}` redeclared with different start/end", args[0]),
                        ));
                    }
                }
                schema.processes.insert(args[0].clone(), (args[1].clone(), args[2].clone()));
            }
            "comp_act" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                if let Some(prev) = schema.compounds.get(&args[0]) {
                    if *prev != (args[1].clone(), args[2].clone()) {
                        return Err(Error::parse(
                            file,
                            line_no,
                            format!("compound `{}` redeclared with different entry/exit", args[0]),
                        ));
                    }
                }
                schema.compounds.insert(args[0].clone(), (args[1].clone(), args[2].clone()));
                classify(&mut schema, &args[0], ElementKind::Compound);
            }
            "seq" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                let edge = SeqEdge { from: args[0].clone(), to: args[1].clone(), process: args[2].clone() };
                if !schema.seq.contains(&edge) {
                    schema.seq.push(edge);
                }
            }
            "exception" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                schema.exceptions.push((args[0].clone(), args[1].clone(), args[2].clone()));
            }
            "input" | "output" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                let rec = (args[0].clone(), args[1].clone(), args[2].clone());
                if pred == "input" {
                    schema.inputs.push(rec);
                } else {
                    schema.outputs.push(rec);
                }
            }
            "assigned" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                schema.assignments.push((args[0].clone(), args[1].clone(), args[2].clone()));
            }
            "task" | "start_event" | "int_event" | "end_event" | "exc_branch" | "exc_merge"
            | "inc_branch" | "inc_merge" | "par_branch" | "par_merge" | "item" | "participant" => {
                if args.len() != 1 {
                    return Err(arity_err(1));
                }
                let kind = match pred.as_str() {
                    "task" => ElementKind::Task,
                    "start_event" => ElementKind::StartEvent,
                    "int_event" => ElementKind::IntEvent,
                    "end_event" => ElementKind::EndEvent,
                    "exc_branch" => ElementKind::ExcBranch,
                    "exc_merge" => ElementKind::ExcMerge,
                    "inc_branch" => ElementKind::IncBranch,
                    "inc_merge" => ElementKind::IncMerge,
                    "par_branch" => ElementKind::ParBranch,
                    "par_merge" => ElementKind::ParMerge,
                    "item" => ElementKind::Item,
                    _ => ElementKind::Participant,
                };
                classify(&mut schema, &args[0], kind);
            }
            p if DERIVED_PREDICATES.contains(&p) => {
                return Err(Error::parse(
                    file,
                    line_no,
                    format!("`{p}` is a derived predicate; assert a concrete classification instead"),
                ));
            }
            other => {
                return Err(Error::parse(file, line_no, format!("unknown predicate `{other}`")));
            }
        }
    }
    Ok(schema)
}

// ---------------------------------------------------------------------------
// Structure queries
// ---------------------------------------------------------------------------

impl ProcessSchema {
    /// Contexts that own seq edges: top-level processes and compounds,
    /// each with its (start, end) pair.
    pub fn contexts(&self) -> BTreeMap<String, (String, String)> {
        let mut out = self.processes.clone();
        for (c, se) in &self.compounds {
            out.insert(c.clone(), se.clone());
        }
        out
    }

    pub fn kind(&self, el: &str) -> Option<ElementKind> {
        let kinds = self.kinds.get(el)?;
        if kinds.len() == 1 {
            kinds.iter().next().copied()
        } else {
            None
        }
    }

    pub fn is_exception_event(&self, el: &str) -> bool {
        self.exceptions.iter().any(|(e, _, _)| e == el)
    }

    pub fn seq_in<'a>(&'a self, process: &'a str) -> impl Iterator<Item = &'a SeqEdge> + 'a {
        self.seq.iter().filter(move |e| e.process == process)
    }

    pub fn successors(&self, el: &str, process: &str) -> Vec<&str> {
        self.seq
            .iter()
            .filter(|e| e.process == process && e.from == el)
            .map(|e| e.to.as_str())
            .collect()
    }

    pub fn predecessors(&self, el: &str, process: &str) -> Vec<&str> {
        self.seq
            .iter()
            .filter(|e| e.process == process && e.to == el)
            .map(|e| e.from.as_str())
            .collect()
    }

    /// Flow elements occurring in a context: seq endpoints, the declared
    /// start/end, and exception events attached within it.
    pub fn elements_of(&self, process: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some((s, e)) = self.contexts().get(process) {
            out.insert(s.clone());
            out.insert(e.clone());
        }
        for edge in self.seq_in(process) {
            out.insert(edge.from.clone());
            out.insert(edge.to.clone());
        }
        for (ev, act, p) in &self.exceptions {
            if p == process {
                out.insert(ev.clone());
                out.insert(act.clone());
            }
        }
        out
    }

    /// The context plus every compound transitively contained in it.
    pub fn hierarchy(&self, process: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([process.to_string()]);
        while let Some(p) = queue.pop_front() {
            if !out.insert(p.clone()) {
                continue;
            }
            for el in self.elements_of(&p) {
                if self.compounds.contains_key(&el) && !out.contains(&el) {
                    queue.push_back(el);
                }
            }
        }
        out
    }

    /// Activities (tasks and compounds) occurring in the hierarchy of `process`,
    /// paired with the context they occur in.
    pub fn activities_in_hierarchy(&self, process: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for ctx in self.hierarchy(process) {
            for el in self.elements_of(&ctx) {
                if matches!(self.kind(&el), Some(k) if k.is_activity()) {
                    out.push((el, ctx.clone()));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

// ---------------------------------------------------------------------------
// Well-formedness
// ---------------------------------------------------------------------------

/// Check constraints (1)-(6) plus meta-model disjointness and reference
/// integrity. The report is independent of fact ordering.
pub fn well_formedness(schema: &ProcessSchema) -> ViolationReport {
    let mut report = ViolationReport::default();
    let contexts = schema.contexts();

    // Disjointness: exactly one classification per element.
    for (el, kinds) in &schema.kinds {
        if kinds.len() > 1 {
            let list = kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ");
            report.push(
                Constraint::Disjointness,
                vec![el.clone()],
                format!("`{el}` has conflicting classifications: {list}"),
            );
        }
    }

    // Reference integrity.
    let known = |el: &str| schema.kinds.contains_key(el);
    for edge in &schema.seq {
        if !contexts.contains_key(&edge.process) {
            report.push(
                Constraint::Reference,
                vec![edge.process.clone()],
                format!("seq({},{},{}) names unknown process `{}`", edge.from, edge.to, edge.process, edge.process),
            );
        }
        for el in [&edge.from, &edge.to] {
            if !known(el) {
                report.push(
                    Constraint::Reference,
                    vec![el.clone()],
                    format!("`{el}` occurs in seq but has no classification"),
                );
            } else if let Some(k) = schema.kind(el) {
                if !k.is_flow_element() {
                    report.push(
                        Constraint::Reference,
                        vec![el.clone()],
                        format!("`{el}` is classified {k} and cannot occur in seq"),
                    );
                }
            }
        }
    }
    for (ev, act, p) in &schema.exceptions {
        if !contexts.contains_key(p) {
            report.push(Constraint::Reference, vec![p.clone()], format!("exception names unknown process `{p}`"));
        }
        if schema.kind(ev) != Some(ElementKind::IntEvent) && known(ev) {
            report.push(
                Constraint::Reference,
                vec![ev.clone()],
                format!("exception event `{ev}` must be an int_event"),
            );
        }
        if !known(ev) {
            report.push(Constraint::Reference, vec![ev.clone()], format!("`{ev}` occurs in exception but has no classification"));
        }
        if !matches!(schema.kind(act), Some(k) if k.is_activity()) {
            report.push(
                Constraint::Reference,
                vec![act.clone()],
                format!("exception is attached to `{act}`, which is not an activity"),
            );
        }
    }
    for (a, it, p, rel) in schema
        .inputs
        .iter()
        .map(|(a, i, p)| (a, i, p, "input"))
        .chain(schema.outputs.iter().map(|(a, i, p)| (a, i, p, "output")))
    {
        if !contexts.contains_key(p) {
            report.push(Constraint::Reference, vec![p.clone()], format!("{rel} names unknown process `{p}`"));
        }
        if schema.kind(it) != Some(ElementKind::Item) {
            report.push(Constraint::Reference, vec![it.clone()], format!("{rel} names `{it}`, which is not an item"));
        }
        if !matches!(schema.kind(a), Some(k) if k.is_activity()) {
            report.push(Constraint::Reference, vec![a.clone()], format!("{rel} names `{a}`, which is not an activity"));
        }
    }
    for (a, part, p) in &schema.assignments {
        if !contexts.contains_key(p) {
            report.push(Constraint::Reference, vec![p.clone()], format!("assigned names unknown process `{p}`"));
        }
        if schema.kind(part) != Some(ElementKind::Participant) {
            report.push(
                Constraint::Reference,
                vec![part.clone()],
                format!("assigned names `{part}`, which is not a participant"),
            );
        }
        if !matches!(schema.kind(a), Some(k) if k.is_activity()) {
            report.push(Constraint::Reference, vec![a.clone()], format!("assigned names `{a}`, which is not an activity"));
        }
    }

    // Per-context structural constraints. Path edges include the implicit
    // exception trigger (activity -> exception event).
    for (p, (s, e)) in &contexts {
        let elements = schema.elements_of(p);

        // (1) declared start/end are classified as such and unique in context.
        if schema.kind(s) != Some(ElementKind::StartEvent) {
            report.push(
                Constraint::UniqueStartEnd,
                vec![p.clone(), s.clone()],
                format!("process `{p}`: `{s}` is not classified start_event"),
            );
        }
        if schema.kind(e) != Some(ElementKind::EndEvent) {
            report.push(
                Constraint::UniqueStartEnd,
                vec![p.clone(), e.clone()],
                format!("process `{p}`: `{e}` is not classified end_event"),
            );
        }
        for el in &elements {
            if schema.kind(el) == Some(ElementKind::StartEvent) && el != s {
                report.push(
                    Constraint::UniqueStartEnd,
                    vec![p.clone(), el.clone()],
                    format!("process `{p}`: second start event `{el}`"),
                );
            }
            if schema.kind(el) == Some(ElementKind::EndEvent) && el != e {
                report.push(
                    Constraint::UniqueStartEnd,
                    vec![p.clone(), el.clone()],
                    format!("process `{p}`: second end event `{el}`"),
                );
            }
        }

        // Path edges.
        let mut fwd: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut bwd: HashMap<&str, Vec<&str>> = HashMap::new();
        for edge in schema.seq_in(p) {
            fwd.entry(edge.from.as_str()).or_default().push(edge.to.as_str());
            bwd.entry(edge.to.as_str()).or_default().push(edge.from.as_str());
        }
        for (ev, act, ep) in &schema.exceptions {
            if ep == p {
                fwd.entry(act.as_str()).or_default().push(ev.as_str());
                bwd.entry(ev.as_str()).or_default().push(act.as_str());
            }
        }
        let reach = |adj: &HashMap<&str, Vec<&str>>, from: &str| -> HashSet<String> {
            let mut seen: HashSet<String> = HashSet::new();
            let mut queue = VecDeque::from([from.to_string()]);
            while let Some(x) = queue.pop_front() {
                if !seen.insert(x.clone()) {
                    continue;
                }
                if let Some(nexts) = adj.get(x.as_str()) {
                    for n in nexts {
                        if !seen.contains(*n) {
                            queue.push_back(n.to_string());
                        }
                    }
                }
            }
            seen
        };
        let from_start = reach(&fwd, s);
        let to_end = reach(&bwd, e);

        // (2) every flow element lies on a start-to-end path.
        for el in &elements {
            if !from_start.contains(el) || !to_end.contains(el) {
                report.push(
                    Constraint::PathCoverage,
                    vec![p.clone(), el.clone()],
                    format!("process `{p}`: `{el}` is not on a path from `{s}` to `{e}`"),
                );
            }
        }

        // (3) start has no predecessors, end no successors (seq only).
        if !schema.predecessors(s, p).is_empty() {
            report.push(
                Constraint::StartEndEdges,
                vec![p.clone(), s.clone()],
                format!("process `{p}`: start event `{s}` has predecessors"),
            );
        }
        if !schema.successors(e, p).is_empty() {
            report.push(
                Constraint::StartEndEdges,
                vec![p.clone(), e.clone()],
                format!("process `{p}`: end event `{e}` has successors"),
            );
        }

        // (4)/(5) degree constraints, seq edges only.
        for el in &elements {
            let Some(kind) = schema.kind(el) else { continue };
            let ins = schema.predecessors(el, p).len();
            let outs = schema.successors(el, p).len();
            match kind {
                ElementKind::ExcBranch | ElementKind::IncBranch | ElementKind::ParBranch => {
                    if ins != 1 || outs < 2 {
                        report.push(
                            Constraint::GatewayDegree,
                            vec![p.clone(), el.clone()],
                            format!("process `{p}`: branch `{el}` has {ins} predecessor(s) and {outs} successor(s)"),
                        );
                    }
                }
                ElementKind::ExcMerge | ElementKind::IncMerge | ElementKind::ParMerge => {
                    if ins < 2 || outs != 1 {
                        report.push(
                            Constraint::GatewayDegree,
                            vec![p.clone(), el.clone()],
                            format!("process `{p}`: merge `{el}` has {ins} predecessor(s) and {outs} successor(s)"),
                        );
                    }
                }
                ElementKind::Task | ElementKind::Compound => {
                    if ins != 1 || outs != 1 {
                        report.push(
                            Constraint::UnitDegree,
                            vec![p.clone(), el.clone()],
                            format!("process `{p}`: activity `{el}` has {ins} predecessor(s) and {outs} successor(s)"),
                        );
                    }
                }
                ElementKind::IntEvent => {
                    if schema.is_exception_event(el) {
                        if outs != 1 {
                            report.push(
                                Constraint::UnitDegree,
                                vec![p.clone(), el.clone()],
                                format!("process `{p}`: exception event `{el}` has {outs} successor(s)"),
                            );
                        }
                    } else if ins != 1 || outs != 1 {
                        report.push(
                            Constraint::UnitDegree,
                            vec![p.clone(), el.clone()],
                            format!("process `{p}`: intermediate event `{el}` has {ins} predecessor(s) and {outs} successor(s)"),
                        );
                    }
                }
                _ => {}
            }
        }
    }

    // (6) compound hierarchy is acyclic.
    {
        let mut children: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for c in schema.compounds.keys() {
            let kids = schema
                .elements_of(c)
                .into_iter()
                .filter(|el| schema.compounds.contains_key(el))
                .collect::<Vec<_>>();
            children.insert(c.as_str(), kids);
        }
        for c in schema.compounds.keys() {
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            let mut stack = vec![c.as_str()];
            while let Some(x) = stack.pop() {
                if let Some(kids) = children.get(x) {
                    for k in kids {
                        if k == c {
                            report.push(
                                Constraint::AcyclicHierarchy,
                                vec![c.clone()],
                                format!("compound `{c}` contains itself through the hierarchy"),
                            );
                            stack.clear();
                            break;
                        }
                        if seen.insert(k.as_str()) {
                            stack.push(k.as_str());
                        }
                    }
                }
            }
        }
    }

    report.finish()
}

// ---------------------------------------------------------------------------
// Reachability predicates
// ---------------------------------------------------------------------------

/// seq+: transitive closure of seq within one context. At least one edge.
pub fn seq_plus(schema: &ProcessSchema, from: &str, to: &str, process: &str) -> Result<bool> {
    if !schema.contexts().contains_key(process) {
        return Err(Error::UnknownProcess(process.to_string()));
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    for e in schema.seq_in(process) {
        if e.from == from {
            queue.push_back(e.to.as_str());
        }
    }
    while let Some(x) = queue.pop_front() {
        if !seen.insert(x) {
            continue;
        }
        if x == to {
            return Ok(true);
        }
        for e in schema.seq_in(process) {
            if e.from == x && !seen.contains(e.to.as_str()) {
                queue.push_back(e.to.as_str());
            }
        }
    }
    Ok(false)
}

/// Path from `from` to `to` in `process` whose intermediate and final nodes
/// all differ from `avoid` (the start node may equal `avoid`).
pub fn n_reachable(schema: &ProcessSchema, from: &str, to: &str, avoid: &str, process: &str) -> Result<bool> {
    if to == avoid {
        return Ok(false);
    }
    if !schema.contexts().contains_key(process) {
        return Err(Error::UnknownProcess(process.to_string()));
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    for e in schema.seq_in(process) {
        if e.from == from && e.to != avoid {
            queue.push_back(e.to.as_str());
        }
    }
    while let Some(x) = queue.pop_front() {
        if !seen.insert(x) {
            continue;
        }
        if x == to {
            return Ok(true);
        }
        for e in schema.seq_in(process) {
            if e.from == x && e.to != avoid && !seen.contains(e.to.as_str()) {
                queue.push_back(e.to.as_str());
            }
        }
    }
    Ok(false)
}

/// Hierarchy-aware reachability inside the process hierarchy of `process`:
/// seq edges of every contained context, compound boundaries (compound ->
/// its entry event, its exit event -> compound), and exception triggers
/// (activity -> attached event).
pub fn reachable(schema: &ProcessSchema, from: &str, to: &str, process: &str) -> Result<bool> {
    let contexts = schema.contexts();
    if !contexts.contains_key(process) {
        return Err(Error::UnknownProcess(process.to_string()));
    }
    let hierarchy = schema.hierarchy(process);
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for ctx in &hierarchy {
        for e in schema.seq_in(ctx) {
            adj.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
        for (ev, act, p) in &schema.exceptions {
            if p == ctx {
                adj.entry(act.as_str()).or_default().push(ev.as_str());
            }
        }
        if ctx != process {
            if let Some((s, e)) = contexts.get(ctx) {
                adj.entry(ctx.as_str()).or_default().push(s.as_str());
                adj.entry(e.as_str()).or_default().push(ctx.as_str());
            }
        }
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    if let Some(next) = adj.get(from) {
        queue.extend(next.iter().copied());
    }
    while let Some(x) = queue.pop_front() {
        if !seen.insert(x) {
            continue;
        }
        if x == to {
            return Ok(true);
        }
        if let Some(next) = adj.get(x) {
            for n in next {
                if !seen.contains(*n) {
                    queue.push_back(n);
                }
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "bp(p,s,e)\nseq(s,e,p)\nstart_event(s)\nend_event(e)\n";

    fn one_task() -> ProcessSchema {
        parse_process_facts(
            "t",
            "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\nseq(s,a,p)\nseq(a,e,p)\n",
        )
        .unwrap()
    }

    #[test]
    fn minimal_schema_is_well_formed() {
        let schema = parse_process_facts("t", MINIMAL).unwrap();
        let report = well_formedness(&schema);
        assert!(report.is_well_formed(), "{:?}", report.violations);
    }

    #[test]
    fn comments_and_periods_are_accepted() {
        let text = "% a comment\nbp(p,s,e).  % trailing\nseq(s,e,p).\nstart_event(s)\nend_event(e)\n";
        let schema = parse_process_facts("t", text).unwrap();
        assert_eq!(schema.seq.len(), 1);
    }

    #[test]
    fn unknown_predicate_is_an_error() {
        let err = parse_process_facts("t", "floop(a,b)\n").unwrap_err();
        assert!(err.to_string().contains("unknown predicate"));
    }

    #[test]
    fn derived_predicates_are_rejected_with_guidance() {
        let err = parse_process_facts("t", "event(x)\n").unwrap_err();
        assert!(err.to_string().contains("derived predicate"));
    }

    #[test]
    fn variables_are_rejected_in_fact_files() {
        let err = parse_process_facts("t", "task(A)\n").unwrap_err();
        assert!(err.to_string().contains("variables"));
    }

    #[test]
    fn reserved_markers_are_rejected() {
        let err = parse_process_facts("t", "task(start)\n").unwrap_err();
        assert!(err.to_string().contains("reserved"));
    }

    #[test]
    fn arity_is_checked() {
        let err = parse_process_facts("t", "seq(a,b)\n").unwrap_err();
        assert!(err.to_string().contains("3 argument"));
    }

    #[test]
    fn missing_end_classification_violates_constraint_one() {
        let schema = parse_process_facts("t", "bp(p,s,e)\nseq(s,e,p)\nstart_event(s)\n").unwrap();
        let report = well_formedness(&schema);
        assert!(report
            .violations
            .iter()
            .any(|v| v.constraint == Constraint::UniqueStartEnd && v.subjects.contains(&"e".to_string())));
    }

    #[test]
    fn dangling_element_violates_path_coverage() {
        let text = "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\ntask(b)\nseq(s,a,p)\nseq(a,e,p)\nseq(b,e,p)\n";
        let schema = parse_process_facts("t", text).unwrap();
        let report = well_formedness(&schema);
        assert!(report
            .violations
            .iter()
            .any(|v| v.constraint == Constraint::PathCoverage && v.subjects.contains(&"b".to_string())));
    }

    #[test]
    fn conflicting_classification_is_a_disjointness_violation() {
        let text = "bp(p,s,e)\nseq(s,a,p)\nseq(a,e,p)\nstart_event(s)\nend_event(e)\ntask(a)\nint_event(a)\n";
        let schema = parse_process_facts("t", text).unwrap();
        let report = well_formedness(&schema);
        assert!(report.violations.iter().any(|v| v.constraint == Constraint::Disjointness));
    }

    #[test]
    fn gateway_degree_checked() {
        // Branch with a single successor.
        let text = "bp(p,s,e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\nseq(s,g,p)\nseq(g,e,p)\n";
        let schema = parse_process_facts("t", text).unwrap();
        let report = well_formedness(&schema);
        assert!(report.violations.iter().any(|v| v.constraint == Constraint::GatewayDegree));
    }

    #[test]
    fn report_is_order_independent() {
        let a = "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\ntask(b)\nseq(s,a,p)\nseq(a,e,p)\nseq(b,e,p)\n";
        // Same facts, permuted lines.
        let b = "seq(b,e,p)\ntask(b)\nseq(a,e,p)\nseq(s,a,p)\ntask(a)\nend_event(e)\nstart_event(s)\nbp(p,s,e)\n";
        let ra = well_formedness(&parse_process_facts("t", a).unwrap());
        let rb = well_formedness(&parse_process_facts("t", b).unwrap());
        assert_eq!(ra, rb);
    }

    #[test]
    fn seq_plus_follows_edges_transitively() {
        let schema = one_task();
        assert!(seq_plus(&schema, "s", "e", "p").unwrap());
        assert!(seq_plus(&schema, "s", "a", "p").unwrap());
        assert!(!seq_plus(&schema, "e", "s", "p").unwrap());
        assert!(seq_plus(&schema, "x", "y", "missing").is_err());
    }

    #[test]
    fn n_reachable_on_a_single_edge() {
        let schema = parse_process_facts("t", MINIMAL).unwrap();
        // seq(s,e,p): reachable avoiding any node other than the target.
        assert!(n_reachable(&schema, "s", "e", "zzz", "p").unwrap());
        assert!(n_reachable(&schema, "s", "e", "s", "p").unwrap()); // start may equal avoid
        assert!(!n_reachable(&schema, "s", "e", "e", "p").unwrap());
    }

    #[test]
    fn n_reachable_through_cycles() {
        let text = "bp(p,s,e)\nstart_event(s)\nend_event(e)\ntask(a)\ntask(b)\nseq(s,a,p)\nseq(a,b,p)\nseq(b,a,p)\nseq(a,e,p)\n";
        let schema = parse_process_facts("t", text).unwrap();
        assert!(n_reachable(&schema, "a", "a", "c", "p").unwrap());
        assert!(!n_reachable(&schema, "a", "a", "b", "p").unwrap());
    }

    #[test]
    fn hierarchy_reachability_crosses_compound_boundaries() {
        let text = "bp(p,s,e)\nstart_event(s)\nend_event(e)\ncomp_act(c,s1,e1)\nstart_event(s1)\nend_event(e1)\ntask(a)\ntask(b)\nseq(s,c,p)\nseq(c,b,p)\nseq(b,e,p)\nseq(s1,a,c)\nseq(a,e1,c)\n";
        let schema = parse_process_facts("t", text).unwrap();
        assert!(reachable(&schema, "a", "b", "p").unwrap());
        assert!(!reachable(&schema, "b", "a", "p").unwrap());
        // Within the compound context alone, b is out of scope.
        assert!(!reachable(&schema, "a", "b", "c").unwrap());
        // Plain seq_plus never crosses the boundary.
        assert!(!seq_plus(&schema, "a", "b", "p").unwrap());
    }

    #[test]
    fn self_containing_compound_is_cyclic() {
        let text = "comp_act(c,s1,e1)\nstart_event(s1)\nend_event(e1)\nseq(s1,c,c)\nseq(c,e1,c)\n";
        let schema = parse_process_facts("t", text).unwrap();
        let report = well_formedness(&schema);
        assert!(report.violations.iter().any(|v| v.constraint == Constraint::AcyclicHierarchy));
    }
}
