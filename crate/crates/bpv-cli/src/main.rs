//! `bpv`: verify, query, and replay semantically annotated business-process
//! schemas from the command line.
//!
//! Exit codes: 0 when the command succeeds (and a boolean query HOLDS),
//! 1 when checks report violations (or a boolean query FAILS), 2 for
//! input errors of any kind.

mod bpmn;
mod query;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use bpv_core::annotation::{parse_annotations, validate_annotations, AnnotationSet};
use bpv_core::enactment::Action;
use bpv_core::model::{parse_process_facts, well_formedness, ProcessSchema};
use bpv_core::ontology::{load_axioms, load_triples, TripleStore};
use bpv_core::services::{KnowledgeBase, WitnessPath};
use bpv_core::DEFAULT_STATE_BUDGET;

use report::{Format, Sink};

#[derive(Parser)]
#[command(
    name = "bpv",
    version,
    about = "Verify, query, and replay semantically annotated business-process schemas"
)]
struct Cli {
    /// Ground process facts, one fact per line.
    #[arg(long, global = true, value_name = "FILE")]
    bps: Option<PathBuf>,

    /// BPMN 2.0 XML to import instead of --bps.
    #[arg(long, global = true, value_name = "FILE")]
    bpmn: Option<PathBuf>,

    /// Ontology: `.dl` axiom shorthand, or one triple per line otherwise.
    #[arg(long, global = true, value_name = "FILE")]
    triples: Option<PathBuf>,

    /// Terminological and functional annotations.
    #[arg(long, global = true, value_name = "FILE")]
    ann: Option<PathBuf>,

    /// State-space cap per process (default from BPV_STATE_BUDGET if set).
    #[arg(long, global = true, value_name = "N")]
    budget: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Write the report to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check structural well-formedness and annotation validity.
    Validate,
    /// Build the reachable state space and report its size.
    Space {
        /// Restrict to one top-level process.
        #[arg(long, value_name = "NAME")]
        process: Option<String>,
        /// Include the full state graph in the report.
        #[arg(long)]
        dump: bool,
    },
    /// Run the standard checks: option to complete, state consistency,
    /// executability, and effect consistency.
    Verify {
        #[arg(long, value_name = "NAME")]
        process: Option<String>,
    },
    /// Evaluate a SELECT/WHERE query, given inline or as a file path.
    Query {
        /// The query text, or a path to a file containing it.
        query: String,
    },
    /// Replay a recorded trace, one `begin(x)`/`complete(x)` per line.
    TraceCheck {
        trace: PathBuf,
        #[arg(long, value_name = "NAME")]
        process: Option<String>,
    },
    /// Enumerate the complete traces within a length bound.
    TraceGen {
        #[arg(long, value_name = "N")]
        max_len: usize,
        /// `a,b`: keep only traces where `a` completes before every
        /// completion of `b`.
        #[arg(long, value_name = "A,B")]
        before: Option<String>,
        #[arg(long, value_name = "NAME")]
        process: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let budget = resolve_budget(&cli)?;
    let sink = Sink { format: cli.format, out: cli.out.clone() };
    let setup_start = Instant::now();
    let inputs = load_inputs(&cli)?;
    match &cli.command {
        Command::Validate => cmd_validate(inputs, setup_start, &sink),
        Command::Space { process, dump } => {
            cmd_space(inputs, budget, process, *dump, setup_start, &sink)
        }
        Command::Verify { process } => cmd_verify(inputs, budget, process, setup_start, &sink),
        Command::Query { query } => cmd_query(inputs, budget, query, setup_start, &sink),
        Command::TraceCheck { trace, process } => {
            cmd_trace_check(inputs, budget, trace, process, setup_start, &sink)
        }
        Command::TraceGen { max_len, before, process } => {
            cmd_trace_gen(inputs, budget, *max_len, before, process, setup_start, &sink)
        }
    }
}

fn resolve_budget(cli: &Cli) -> anyhow::Result<usize> {
    let b = match cli.budget {
        Some(b) => b,
        None => match std::env::var("BPV_STATE_BUDGET") {
            Ok(v) => v
                .trim()
                .parse()
                .with_context(|| format!("BPV_STATE_BUDGET must be an integer, got `{v}`"))?,
            Err(_) => DEFAULT_STATE_BUDGET,
        },
    };
    if b == 0 {
        bail!("the state budget must be positive");
    }
    Ok(b)
}

struct Inputs {
    schema: ProcessSchema,
    store: TripleStore,
    annotations: AnnotationSet,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_inputs(cli: &Cli) -> anyhow::Result<Inputs> {
    let schema = match (&cli.bps, &cli.bpmn) {
        (Some(_), Some(_)) => bail!("--bps and --bpmn are mutually exclusive"),
        (Some(p), None) => parse_process_facts(&p.display().to_string(), &read(p)?)?,
        (None, Some(p)) => bpmn::import_bpmn_xml(&p.display().to_string(), &read(p)?)?,
        (None, None) => bail!("a model is required: pass --bps FILE or --bpmn FILE"),
    };
    let store = match &cli.triples {
        Some(p) => {
            let name = p.display().to_string();
            let text = read(p)?;
            if p.extension().is_some_and(|e| e == "dl") {
                load_axioms(&name, &text)?
            } else {
                load_triples(&name, &text)?
            }
        }
        None => TripleStore::default(),
    };
    let annotations = match &cli.ann {
        Some(p) => parse_annotations(&p.display().to_string(), &read(p)?, &schema)?,
        None => AnnotationSet::default(),
    };
    Ok(Inputs { schema, store, annotations })
}

/// The processes a command operates on: the named one, or all declared.
fn select_processes(schema: &ProcessSchema, chosen: &Option<String>) -> anyhow::Result<Vec<String>> {
    let declared: Vec<String> = schema.processes.keys().cloned().collect();
    if declared.is_empty() {
        bail!("the model declares no top-level process");
    }
    match chosen {
        Some(p) if declared.contains(p) => Ok(vec![p.clone()]),
        Some(p) => bail!("unknown process `{p}`; the model declares: {}", declared.join(", ")),
        None => Ok(declared),
    }
}

fn single_process(schema: &ProcessSchema, chosen: &Option<String>) -> anyhow::Result<String> {
    let mut ps = select_processes(schema, chosen)?;
    if ps.len() > 1 {
        bail!("--process is required when the model declares several: {}", ps.join(", "));
    }
    Ok(ps.pop().unwrap())
}

fn witness_text(w: &WitnessPath) -> String {
    if w.actions.is_empty() {
        "at the initial state".to_string()
    } else {
        w.actions.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_validate(inputs: Inputs, setup_start: Instant, sink: &Sink) -> anyhow::Result<u8> {
    let report = well_formedness(&inputs.schema);
    let ann_issues = validate_annotations(&inputs.annotations, &inputs.schema, &inputs.store);
    let setup_ms = setup_start.elapsed().as_millis();
    let valid = report.is_well_formed() && ann_issues.is_empty();

    let mut text = vec![format!("well-formedness: {} violation(s)", report.violations.len())];
    text.extend(report.violations.iter().map(|v| format!("  {v}")));
    text.push(format!("annotations: {} issue(s)", ann_issues.len()));
    text.extend(ann_issues.iter().map(|v| format!("  {v}")));
    text.push(format!("result: {}", if valid { "VALID" } else { "INVALID" }));
    text.push(format!("setup: {setup_ms} ms"));

    let json = json!({
        "command": "validate",
        "valid": valid,
        "violations": report.violations.iter().map(|v| json!({
            "constraint": v.constraint.to_string(),
            "subjects": v.subjects,
            "message": v.message,
        })).collect::<Vec<_>>(),
        "annotation_issues": ann_issues.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "timing_ms": {"setup": setup_ms as u64},
    });
    sink.emit(&text.join("\n"), &json)?;
    Ok(if valid { 0 } else { 1 })
}

fn cmd_space(
    inputs: Inputs,
    budget: usize,
    process: &Option<String>,
    dump: bool,
    setup_start: Instant,
    sink: &Sink,
) -> anyhow::Result<u8> {
    let kb = KnowledgeBase::new(inputs.schema, &inputs.store, inputs.annotations)?
        .with_budget(budget);
    let setup_ms = setup_start.elapsed().as_millis();
    let processes = select_processes(kb.schema(), process)?;

    let mut text = Vec::new();
    let mut rows = Vec::new();
    for p in &processes {
        let t = Instant::now();
        let graph = kb.graph(p)?;
        let build_ms = t.elapsed().as_millis();
        text.push(format!(
            "process {p}: {} states, {} transitions ({build_ms} ms)",
            graph.states.len(),
            graph.edges.len()
        ));
        if dump {
            text.push(graph.dump_text());
        }
        let mut row = json!({
            "process": p,
            "states": graph.states.len(),
            "transitions": graph.edges.len(),
            "build_ms": build_ms as u64,
        });
        if dump {
            row["graph"] = graph.to_json();
        }
        rows.push(row);
    }
    text.push(format!("setup: {setup_ms} ms"));
    let json = json!({
        "command": "space",
        "processes": rows,
        "timing_ms": {"setup": setup_ms as u64},
    });
    sink.emit(&text.join("\n"), &json)?;
    Ok(0)
}

fn cmd_verify(
    inputs: Inputs,
    budget: usize,
    process: &Option<String>,
    setup_start: Instant,
    sink: &Sink,
) -> anyhow::Result<u8> {
    let kb = KnowledgeBase::new(inputs.schema, &inputs.store, inputs.annotations)?
        .with_budget(budget);
    let setup_ms = setup_start.elapsed().as_millis();
    let processes = select_processes(kb.schema(), process)?;

    let mut all_pass = true;
    let mut text = Vec::new();
    let mut rows = Vec::new();
    for p in &processes {
        let t = Instant::now();
        let otc = kb.option_to_complete(p)?;
        let inconsistency = kb.inconsistency(p)?;
        let non_exec = kb.non_executable_activities(p)?;
        let graph = kb.graph(p)?;
        let consistency = kb.context().consistency_check(&graph)?;
        let check_ms = t.elapsed().as_millis();

        let lingering = &consistency.lingering_negative_effects;
        let pass = otc.holds
            && !inconsistency.holds
            && non_exec.is_empty()
            && consistency.inconsistent_states.is_empty()
            && lingering.is_empty();
        all_pass &= pass;

        text.push(format!("process {p}:"));
        text.push(format!("  option to complete: {}", if otc.holds { "PASS" } else { "FAIL" }));
        if let Some(w) = &otc.witness {
            text.push(format!("    stuck after: {}", witness_text(w)));
        }
        text.push(format!(
            "  state consistency: {} ({} inconsistent state(s))",
            if consistency.inconsistent_states.is_empty() { "PASS" } else { "FAIL" },
            consistency.inconsistent_states.len()
        ));
        if let Some(w) = &inconsistency.witness {
            text.push(format!("    reached by: {}", witness_text(w)));
        }
        text.push(format!(
            "  executability: {}{}",
            if non_exec.is_empty() { "PASS" } else { "FAIL" },
            if non_exec.is_empty() {
                String::new()
            } else {
                format!(
                    " (non-executable: {})",
                    non_exec.iter().cloned().collect::<Vec<_>>().join(", ")
                )
            }
        ));
        text.push(format!(
            "  effect consistency: {} ({} lingering effect(s))",
            if lingering.is_empty() { "PASS" } else { "FAIL" },
            lingering.len()
        ));
        text.extend(lingering.iter().take(5).map(|l| format!("    {l}")));
        text.push(format!("  checked in {check_ms} ms"));

        rows.push(json!({
            "process": p,
            "pass": pass,
            "option_to_complete": {
                "pass": otc.holds,
                "witness": otc.witness.as_ref().map(|w| w.to_json(&graph)),
            },
            "state_consistency": {
                "pass": consistency.inconsistent_states.is_empty(),
                "inconsistent_states": consistency.inconsistent_states,
                "witness": inconsistency.witness.as_ref().map(|w| w.to_json(&graph)),
            },
            "executability": {
                "pass": non_exec.is_empty(),
                "non_executable": non_exec.iter().cloned().collect::<Vec<_>>(),
            },
            "effect_consistency": {
                "pass": lingering.is_empty(),
                "lingering": lingering.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
            },
            "check_ms": check_ms as u64,
        }));
    }
    text.push(format!("result: {}", if all_pass { "PASS" } else { "FAIL" }));
    text.push(format!("setup: {setup_ms} ms"));
    let json = json!({
        "command": "verify",
        "pass": all_pass,
        "processes": rows,
        "timing_ms": {"setup": setup_ms as u64},
    });
    sink.emit(&text.join("\n"), &json)?;
    Ok(if all_pass { 0 } else { 1 })
}

fn cmd_query(
    inputs: Inputs,
    budget: usize,
    query_arg: &str,
    setup_start: Instant,
    sink: &Sink,
) -> anyhow::Result<u8> {
    // A query argument naming an existing file loads it; anything else is
    // inline query text.
    let path = Path::new(query_arg);
    let (name, text) = if path.is_file() {
        (query_arg.to_string(), read(path)?)
    } else {
        ("<query>".to_string(), query_arg.to_string())
    };
    let parsed = query::parse_query(&name, &text)?;

    let kb = KnowledgeBase::new(inputs.schema, &inputs.store, inputs.annotations)?
        .with_budget(budget);
    let setup_ms = setup_start.elapsed().as_millis();
    let t = Instant::now();
    let outcome = query::evaluate(&parsed, &kb)?;
    let eval_ms = t.elapsed().as_millis();

    let mut text = vec![format!("query: {parsed}")];
    let (payload, code) = match &outcome {
        query::Outcome::Boolean(b) => {
            text.push(format!("result: {}", if *b { "HOLDS" } else { "FAILS" }));
            (json!({"holds": b}), if *b { 0 } else { 1 })
        }
        query::Outcome::Rows { vars, rows } => {
            text.push(vars.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join("\t"));
            for row in rows {
                text.push(row.join("\t"));
            }
            text.push(format!("{} answer(s)", rows.len()));
            (json!({"vars": vars, "rows": rows}), 0)
        }
    };
    text.push(format!("setup: {setup_ms} ms, evaluate: {eval_ms} ms"));
    let json = json!({
        "command": "query",
        "query": parsed.to_string(),
        "result": payload,
        "timing_ms": {"setup": setup_ms as u64, "evaluate": eval_ms as u64},
    });
    sink.emit(&text.join("\n"), &json)?;
    Ok(code)
}

fn cmd_trace_check(
    inputs: Inputs,
    budget: usize,
    trace_path: &Path,
    process: &Option<String>,
    setup_start: Instant,
    sink: &Sink,
) -> anyhow::Result<u8> {
    let mut actions = Vec::new();
    for line in read(trace_path)?.lines() {
        let line = line.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        actions.push(Action::parse(line)?);
    }
    let kb = KnowledgeBase::new(inputs.schema, &inputs.store, inputs.annotations)?
        .with_budget(budget);
    let setup_ms = setup_start.elapsed().as_millis();
    let p = single_process(kb.schema(), process)?;
    let t = Instant::now();
    let accepted = kb.check_trace(&actions, &p)?;
    let check_ms = t.elapsed().as_millis();

    let text = format!(
        "trace: {} action(s)\nresult: {}\nsetup: {setup_ms} ms, check: {check_ms} ms",
        actions.len(),
        if accepted { "ACCEPTED" } else { "REJECTED" }
    );
    let json = json!({
        "command": "trace-check",
        "process": p,
        "actions": actions.len(),
        "accepted": accepted,
        "timing_ms": {"setup": setup_ms as u64, "check": check_ms as u64},
    });
    sink.emit(&text, &json)?;
    Ok(if accepted { 0 } else { 1 })
}

fn cmd_trace_gen(
    inputs: Inputs,
    budget: usize,
    max_len: usize,
    before: &Option<String>,
    process: &Option<String>,
    setup_start: Instant,
    sink: &Sink,
) -> anyhow::Result<u8> {
    let pair = match before {
        Some(s) => match s.split_once(',') {
            Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                Some((a.trim().to_string(), b.trim().to_string()))
            }
            _ => bail!("--before expects two element names `a,b`, got `{s}`"),
        },
        None => None,
    };
    let kb = KnowledgeBase::new(inputs.schema, &inputs.store, inputs.annotations)?
        .with_budget(budget);
    let setup_ms = setup_start.elapsed().as_millis();
    let p = single_process(kb.schema(), process)?;
    let t = Instant::now();
    let traces =
        kb.generate_traces(&p, max_len, pair.as_ref().map(|(a, b)| (a.as_str(), b.as_str())))?;
    let gen_ms = t.elapsed().as_millis();

    let mut text =
        vec![format!("{} complete trace(s) within {max_len} action(s)", traces.len())];
    for tr in &traces {
        text.push(tr.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "));
    }
    text.push(format!("setup: {setup_ms} ms, enumerate: {gen_ms} ms"));
    let json = json!({
        "command": "trace-gen",
        "process": p,
        "max_len": max_len,
        "count": traces.len(),
        "traces": traces.iter().map(|tr| {
            tr.iter().map(|a| a.to_string()).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "timing_ms": {"setup": setup_ms as u64, "enumerate": gen_ms as u64},
    });
    sink.emit(&text.join("\n"), &json)?;
    Ok(0)
}
