//! Command-line front end.

use std::io::Write;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{bounds_report, BoundsReport};
use crate::classify::{classify, Classification, Verdict};
use crate::config::Model;
use crate::error::Error;
use crate::loss::{estimate_loss, partition_sweep, LossMethod, LossOutcome, LossReport, PartitionSweep};
use crate::model::validate;
use crate::numerics::McPlan;
use crate::presets;
use crate::report::{run_report, RunReport, REPORT_PROBES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFINITE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "infoloss", version, about = "Information loss of piecewise maps of continuous random vectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a model's partition, inverses, Jacobians and density.
    Validate(Common),
    /// Estimate the information loss in bits.
    Loss(Common),
    /// Cardinality bounds and the branch-index entropy.
    Bounds(Common),
    /// Decide whether the loss is finite.
    Classify(Common),
    /// Loss of dyadic input partitions at increasing depth.
    Sweep(Common),
    /// Everything above in one document.
    Report(Common),
    /// List bundled presets, or print one.
    Presets {
        name: Option<String>,
        #[arg(long, value_enum)]
        out: Option<OutFormat>,
    },
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Model JSON file or preset name.
    pub path: String,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "direct_mc")]
    pub method: String,
    /// Quadrature nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Inclusive depth range `A:B`, or a single depth.
    #[arg(long)]
    pub depths: Option<String>,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub out: Option<OutFormat>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutFormat {
    Json,
    Csv,
    Text,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_)
        | Error::Model(_)
        | Error::NoBranch { .. }
        | Error::AmbiguousBranch { .. }
        | Error::BoundViolation { .. }
        | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::InfiniteLoss(_) => EXIT_INFINITE,
        _ => EXIT_NUMERIC,
    }
}

fn parse_depths(s: &str) -> Result<Vec<u32>, Error> {
    let bad = || Error::InvalidArgument(format!("--depths expects A:B or a single depth, got `{s}`"));
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let d = s.trim().parse().map_err(|_| bad())?;
            (d, d)
        }
    };
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn json<T: Serialize>(&mut self, v: &T) {
        let s = serde_json::to_string_pretty(v).expect("report serializes");
        let _ = writeln!(self.out, "{s}");
    }

    fn fail(&mut self, code: i32, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        code
    }
}

fn load(c: &Common) -> Result<(Model, McPlan), (i32, String)> {
    let cfg = presets::resolve(&c.path).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let mut model = cfg.build().map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let a = &mut model.analysis;
    if let Some(n) = c.n {
        a.n = n;
    }
    if let Some(s) = c.seed {
        a.seed = s;
    }
    if let Some(nodes) = c.nodes {
        a.nodes_per_dim = nodes;
    }
    if let Some(d) = &c.depths {
        a.depths = parse_depths(d).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    }
    if a.n == 0 {
        return Err((EXIT_CONFIG, "--n must be positive".into()));
    }
    let plan = McPlan::new(a.n, a.seed).with_workers(c.workers.unwrap_or(0));
    Ok((model, plan))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let mut io = Io { out, err };
    let started = Instant::now();
    let code = dispatch(cli.command, &mut io);
    let _ = writeln!(io.err, "elapsed {:.3} s", started.elapsed().as_secs_f64());
    code
}

fn dispatch(cmd: Command, io: &mut Io) -> i32 {
    if let Command::Presets { name, out } = cmd {
        return cmd_presets(name.as_deref(), out.unwrap_or(OutFormat::Text), io);
    }
    let c = match &cmd {
        Command::Validate(c)
        | Command::Loss(c)
        | Command::Bounds(c)
        | Command::Classify(c)
        | Command::Sweep(c)
        | Command::Report(c) => c.clone(),
        Command::Presets { .. } => unreachable!(),
    };
    let (model, plan) = match load(&c) {
        Ok(v) => v,
        Err((code, msg)) => return io.fail(code, msg),
    };
    match cmd {
        Command::Validate(_) => cmd_validate(&model, &plan, c.out.unwrap_or(OutFormat::Json), io),
        Command::Loss(_) => cmd_loss(&model, &plan, &c, io),
        Command::Bounds(_) => cmd_bounds(&model, &plan, c.out.unwrap_or(OutFormat::Json), io),
        Command::Classify(_) => cmd_classify(&model, &plan, c.out.unwrap_or(OutFormat::Json), io),
        Command::Sweep(_) => cmd_sweep(&model, &plan, c.out.unwrap_or(OutFormat::Csv), io),
        Command::Report(_) => cmd_report(&model, &plan, c.out.unwrap_or(OutFormat::Json), io),
        Command::Presets { .. } => unreachable!(),
    }
}

fn cmd_presets(name: Option<&str>, fmt: OutFormat, io: &mut Io) -> i32 {
    if let Some(name) = name {
        return match presets::resolve(name) {
            Ok(c) => {
                let _ = writeln!(io.out, "{}", c.to_json_pretty());
                EXIT_OK
            }
            Err(e) => io.fail(EXIT_CONFIG, e),
        };
    }
    let all = presets::all();
    match fmt {
        OutFormat::Json => {
            let rows: Vec<_> = all
                .iter()
                .map(|c| serde_json::json!({"name": c.name, "aliases": c.aliases, "dim": c.dim, "description": c.description}))
                .collect();
            io.json(&rows);
        }
        OutFormat::Csv => {
            let _ = writeln!(io.out, "name,aliases,dim");
            for c in &all {
                let _ = writeln!(io.out, "{},{},{}", c.name.as_deref().unwrap_or(""), c.aliases.join(" "), c.dim);
            }
        }
        OutFormat::Text => {
            for c in &all {
                let aka = if c.aliases.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", c.aliases.join(", "))
                };
                let _ = writeln!(
                    io.out,
                    "{}{aka}: {}",
                    c.name.as_deref().unwrap_or("?"),
                    c.description.as_deref().unwrap_or("")
                );
            }
        }
    }
    EXIT_OK
}

fn cmd_validate(model: &Model, plan: &McPlan, fmt: OutFormat, io: &mut Io) -> i32 {
    let r = validate(&model.map, &model.density, REPORT_PROBES.min(plan.n), plan.seed);
    match fmt {
        OutFormat::Text => {
            let _ = writeln!(io.out, "{}: {}", model.name, if r.passed { "valid" } else { "INVALID" });
            for f in &r.failures {
                let _ = writeln!(io.out, "  failure: {f}");
            }
            for w in &r.warnings {
                let _ = writeln!(io.out, "  warning: {w}");
            }
        }
        _ => io.json(&r),
    }
    if r.passed {
        EXIT_OK
    } else {
        for f in &r.failures {
            let _ = writeln!(io.err, "validation: {f}");
        }
        EXIT_CONFIG
    }
}

/// Validation gate shared by the numeric commands.
fn require_valid(model: &Model, plan: &McPlan, io: &mut Io) -> Option<i32> {
    let r = validate(&model.map, &model.density, REPORT_PROBES.min(plan.n), plan.seed);
    if r.passed {
        return None;
    }
    for f in &r.failures {
        let _ = writeln!(io.err, "validation: {f}");
    }
    Some(EXIT_CONFIG)
}

fn verdict_code(c: &Classification) -> i32 {
    match c.verdict {
        Verdict::Finite => EXIT_OK,
        Verdict::Infinite => EXIT_INFINITE,
        Verdict::Unknown => EXIT_NUMERIC,
    }
}

fn loss_line(r: &LossReport) -> String {
    let mut s = format!("{}: {:.6} bits (stderr {:.2e})", r.method, r.loss_bits, r.stderr_bits);
    if let Some(b) = r.error_bound_bits {
        s += &format!(", error bound {b:.2e}");
    }
    s
}

fn cmd_loss(model: &Model, plan: &McPlan, c: &Common, io: &mut Io) -> i32 {
    let method: LossMethod = match c.method.parse() {
        Ok(m) => m,
        Err(e) => return io.fail(EXIT_CONFIG, e),
    };
    if let Some(code) = require_valid(model, plan, io) {
        return code;
    }
    let outcome = match estimate_loss(&model.map, &model.density, method, plan, model.analysis.nodes_per_dim) {
        Ok(o) => o,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    let fmt = c.out.unwrap_or(OutFormat::Json);
    match &outcome {
        LossOutcome::Finite(r) => match fmt {
            OutFormat::Json => io.json(&outcome),
            OutFormat::Csv => {
                let _ = writeln!(io.out, "method,loss_bits,stderr_bits\n{},{:?},{:?}", r.method, r.loss_bits, r.stderr_bits);
            }
            OutFormat::Text => {
                let _ = writeln!(io.out, "{}", loss_line(r));
            }
        },
        LossOutcome::Infinite(cl) => {
            match fmt {
                OutFormat::Text | OutFormat::Csv => {
                    let _ = writeln!(io.out, "verdict {} ({})", cl.verdict.as_str(), cl.reason.as_str());
                }
                OutFormat::Json => io.json(&outcome),
            }
            let _ = writeln!(
                io.err,
                "no finite loss: verdict {} ({})",
                cl.verdict.as_str(),
                cl.reason.as_str()
            );
            return verdict_code(cl);
        }
    }
    EXIT_OK
}

fn bounds_text(b: &BoundsReport) -> String {
    let v = |x: f64, inf: bool| if inf { "inf".to_string() } else { format!("{x:.4}") };
    format!(
        "E[log2 |preimage|] <= log2 E[|preimage|] <= log2 max |preimage|\n{} <= {} <= {}\nH(W) = {:.4} bits (stderr {:.2e})\n",
        v(b.e_log_card_bits, b.e_log_card_infinite),
        v(b.log_e_card_bits, b.log_e_card_infinite),
        v(b.max_log_card_bits, b.max_log_card_infinite),
        b.h_w_bits,
        b.h_w_stderr_bits
    )
}

/// Classifies first so infinite-loss models exit 3 instead of failing on
/// a non-bijective sample.
fn finite_gate(model: &Model, plan: &McPlan, io: &mut Io) -> Option<i32> {
    if let Some(code) = require_valid(model, plan, io) {
        return Some(code);
    }
    match classify(&model.map, &model.density, plan) {
        Ok(cl) if cl.verdict == Verdict::Finite => None,
        Ok(cl) => {
            let _ = writeln!(io.err, "no finite loss: verdict {} ({})", cl.verdict.as_str(), cl.reason.as_str());
            Some(verdict_code(&cl))
        }
        Err(e) => Some(io.fail(exit_code(&e), e)),
    }
}

fn cmd_bounds(model: &Model, plan: &McPlan, fmt: OutFormat, io: &mut Io) -> i32 {
    if let Some(code) = finite_gate(model, plan, io) {
        return code;
    }
    let b = match bounds_report(&model.map, &model.density, plan) {
        Ok(b) => b,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    match fmt {
        OutFormat::Json => io.json(&b),
        OutFormat::Text => {
            let _ = write!(io.out, "{}", bounds_text(&b));
        }
        OutFormat::Csv => {
            let _ = writeln!(io.out, "quantity,bits,stderr_bits,infinite");
            let rows = [
                ("e_log_card", b.e_log_card_bits, b.e_log_card_stderr_bits, b.e_log_card_infinite),
                ("log_e_card", b.log_e_card_bits, b.log_e_card_stderr_bits, b.log_e_card_infinite),
                ("max_log_card", b.max_log_card_bits, 0.0, b.max_log_card_infinite),
                ("h_w", b.h_w_bits, b.h_w_stderr_bits, false),
            ];
            for (q, v, s, inf) in rows {
                let _ = writeln!(io.out, "{q},{v:?},{s:?},{inf}");
            }
        }
    }
    EXIT_OK
}

fn cmd_classify(model: &Model, plan: &McPlan, fmt: OutFormat, io: &mut Io) -> i32 {
    if let Some(code) = require_valid(model, plan, io) {
        return code;
    }
    let cl = match classify(&model.map, &model.density, plan) {
        Ok(c) => c,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    match fmt {
        OutFormat::Json => io.json(&cl),
        _ => {
            let _ = writeln!(io.out, "{} ({})", cl.verdict.as_str(), cl.reason.as_str());
            for p in &cl.evidence {
                let _ = writeln!(io.out, "  part {} {}: mass {:.4} (stderr {:.1e})", p.part, p.kind.as_str(), p.mass, p.stderr);
            }
        }
    }
    // an undecided verdict is a numerical failure; a decided one is the answer
    if cl.verdict == Verdict::Unknown {
        EXIT_NUMERIC
    } else {
        EXIT_OK
    }
}

fn sweep_csv(s: &PartitionSweep) -> String {
    let mut t = String::from("depth,loss_bits,stderr_bits\n");
    for ((d, l), e) in s.depths.iter().zip(&s.losses_bits).zip(&s.stderr_bits) {
        t += &format!("{d},{l:?},{e:?}\n");
    }
    t
}

fn cmd_sweep(model: &Model, plan: &McPlan, fmt: OutFormat, io: &mut Io) -> i32 {
    if let Some(code) = finite_gate(model, plan, io) {
        return code;
    }
    let s = match partition_sweep(&model.map, &model.density, &model.analysis.depths, plan) {
        Ok(s) => s,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    match fmt {
        OutFormat::Json => io.json(&s),
        _ => {
            let _ = write!(io.out, "{}", sweep_csv(&s));
        }
    }
    EXIT_OK
}

fn report_text(r: &RunReport) -> String {
    let mut t = format!("model {} ({})\n", r.model, &r.digest[..12]);
    t += &format!(
        "validation: {}\n",
        if r.validation.passed { "passed" } else { "FAILED" }
    );
    t += &format!(
        "classification: {} ({})\n",
        r.classification.verdict.as_str(),
        r.classification.reason.as_str()
    );
    for a in &r.atoms {
        t += &format!("atom at {:?}: mass {:.4} (stderr {:.1e})\n", a.y, a.mass, a.stderr);
    }
    for l in &r.losses {
        t += &loss_line(l);
        t.push('\n');
    }
    if let Some(b) = &r.bounds {
        t += &bounds_text(b);
    }
    if let Some(s) = &r.sweep {
        t += &sweep_csv(s);
    }
    if let Some(n) = &r.output_normalization {
        t += &format!("output density integrates to {:.6}\n", n.integral);
    }
    for w in &r.warnings {
        t += &format!("warning: {w}\n");
    }
    for e in &r.errors {
        t += &format!("error: {e}\n");
    }
    t
}

fn report_csv(r: &RunReport) -> String {
    let mut t = String::from("quantity,value,stderr\n");
    for l in &r.losses {
        t += &format!("loss_{},{:?},{:?}\n", l.method, l.loss_bits, l.stderr_bits);
    }
    if let Some(b) = &r.bounds {
        t += &format!("e_log_card,{:?},{:?}\n", b.e_log_card_bits, b.e_log_card_stderr_bits);
        t += &format!("log_e_card,{:?},{:?}\n", b.log_e_card_bits, b.log_e_card_stderr_bits);
        t += &format!("max_log_card,{:?},0.0\n", b.max_log_card_bits);
        t += &format!("h_w,{:?},{:?}\n", b.h_w_bits, b.h_w_stderr_bits);
    }
    for a in &r.atoms {
        let y: Vec<String> = a.y.iter().map(|v| format!("{v:?}")).collect();
        t += &format!("atom[{}],{:?},{:?}\n", y.join(" "), a.mass, a.stderr);
    }
    if let Some(n) = &r.output_normalization {
        t += &format!("output_normalization,{:?},\n", n.integral);
    }
    t
}

fn cmd_report(model: &Model, plan: &McPlan, fmt: OutFormat, io: &mut Io) -> i32 {
    let r = match run_report(model, plan) {
        Ok(r) => r,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    match fmt {
        OutFormat::Json => io.json(&r),
        OutFormat::Text => {
            let _ = write!(io.out, "{}", report_text(&r));
        }
        OutFormat::Csv => {
            let _ = write!(io.out, "{}", report_csv(&r));
        }
    }
    if !r.validation.passed {
        return EXIT_CONFIG;
    }
    if !r.errors.is_empty() || r.classification.verdict == Verdict::Unknown {
        for e in &r.errors {
            let _ = writeln!(io.err, "{e}");
        }
        return EXIT_NUMERIC;
    }
    EXIT_OK
}
