// SPDX-License-Identifier: Apache-2.0

//! The `numa` command line: `check`, `run`, `explore` and `cost`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cost::{static_cost, trace_cost, CostMatrix, CostReport};
use crate::diag::Diagnostic;
use crate::monitor::{verify_explore, verify_run};
use crate::runtime::{
    self, format_trace, init_config, Config, ExploreError, ExploreOptions, LocationMap, Machine, Mutation, Outcome,
    Scheduler,
};
use crate::syntax::{parse_behaviour, parse_program, Behaviour, Program};
use crate::typer::check_program_report;

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitStatus {
    Success = 0,
    Diagnostics = 1,
    RuntimeFault = 2,
    VerifyFailed = 3,
    Usage = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Parser, Debug)]
#[command(name = "numa", version, about = "Check, run and price programs of a NUMA-aware actor language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Type-and-effect check a program.
    Check {
        file: PathBuf,
        /// Print the per-method report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Execute a program under a seeded random scheduler.
    Run {
        file: PathBuf,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        /// Write the trace here instead of standard output.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Check every step against the global behaviour.
        #[arg(long)]
        verify: bool,
        #[arg(long, hide = true)]
        inject: Option<String>,
    },
    /// Enumerate and verify every interleaving.
    Explore {
        file: PathBuf,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 1000)]
        depth: usize,
        /// Interleave local steps too.
        #[arg(long)]
        no_reduce: bool,
        #[arg(long, hide = true)]
        inject: Option<String>,
    },
    /// Price remote traffic.
    Cost {
        /// Program whose `Main` methods are priced.
        file: Option<PathBuf>,
        /// Price this behaviour instead of a program.
        #[arg(long, conflicts_with = "file")]
        behaviour: Option<String>,
        #[command(flatten)]
        map: MapArgs,
        /// Cost matrix file; defaults to cost 1 between distinct nodes.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Run the program and price its trace as well.
        #[arg(long, requires = "file")]
        dynamic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
struct MapArgs {
    /// Location map, e.g. `L1=0,L2=1,L3=1`.
    #[arg(long)]
    map: Option<String>,
    /// File holding a location map.
    #[arg(long, conflicts_with = "map")]
    map_file: Option<PathBuf>,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Outcome of a command that failed early.
struct Fail(ExitStatus);

type CmdResult = Result<ExitStatus, Fail>;

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {{
        let _ = writeln!($w, $($arg)*);
    }};
}

/// Runs the command line `args` (program name first). Returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => ExitStatus::Usage.code(),
            };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{}", text);
            } else {
                let _ = write!(err, "{}", text);
            }
            return code;
        }
    };
    let mut io = Io { out, err };
    let status = match cli.command {
        Command::Check { file, json } => cmd_check(&mut io, &file, json),
        Command::Run {
            file,
            map,
            seed,
            max_steps,
            trace,
            verify,
            inject,
        } => cmd_run(&mut io, &file, &map, seed, max_steps, trace.as_deref(), verify, inject.as_deref()),
        Command::Explore {
            file,
            map,
            depth,
            no_reduce,
            inject,
        } => cmd_explore(&mut io, &file, &map, depth, !no_reduce, inject.as_deref()),
        Command::Cost {
            file,
            behaviour,
            map,
            matrix,
            dynamic,
            seed,
            max_steps,
            json,
        } => cmd_cost(
            &mut io,
            file.as_deref(),
            behaviour.as_deref(),
            &map,
            matrix.as_deref(),
            dynamic,
            seed,
            max_steps,
            json,
        ),
    };
    status.unwrap_or_else(|Fail(s)| s).code()
}

fn read(io: &mut Io, path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| {
        say!(io.err, "error: cannot read {}: {}", path.display(), e);
        Fail(ExitStatus::Usage)
    })
}

fn print_diags(io: &mut Io, file: &Path, diags: &[Diagnostic]) {
    let name = file.display().to_string();
    for d in diags {
        say!(io.err, "{}", d.render(&name));
    }
}

fn load(io: &mut Io, file: &Path) -> Result<Program, Fail> {
    let src = read(io, file)?;
    parse_program(&src).map_err(|diags| {
        print_diags(io, file, &diags);
        Fail(ExitStatus::Diagnostics)
    })
}

/// Parses and checks; diagnostics end the command with status 1.
fn load_checked(io: &mut Io, file: &Path) -> Result<Program, Fail> {
    let program = load(io, file)?;
    let report = check_program_report(&program);
    if !report.is_ok() {
        print_diags(io, file, &report.diagnostics);
        return Err(Fail(ExitStatus::Diagnostics));
    }
    Ok(program)
}

fn load_map(io: &mut Io, args: &MapArgs, program: Option<&Program>) -> Result<LocationMap, Fail> {
    let text = match (&args.map, &args.map_file) {
        (Some(m), _) => m.clone(),
        (None, Some(f)) => read(io, f)?,
        (None, None) if program.is_none() => String::new(),
        (None, None) => {
            say!(io.err, "error: a location map is required (--map or --map-file)");
            return Err(Fail(ExitStatus::Usage));
        }
    };
    let map: LocationMap = text.parse().map_err(|e| {
        say!(io.err, "error: {}", e);
        Fail(ExitStatus::Usage)
    })?;
    if let Some(p) = program {
        map.validate(p).map_err(|e| {
            say!(io.err, "error: {}", e);
            Fail(ExitStatus::Usage)
        })?;
    }
    Ok(map)
}

fn mutation(io: &mut Io, name: Option<&str>) -> Result<Option<Mutation>, Fail> {
    match name {
        None => Ok(None),
        Some(n) => Mutation::from_name(n).map(Some).ok_or_else(|| {
            say!(io.err, "error: unknown fault `{}`", n);
            Fail(ExitStatus::Usage)
        }),
    }
}

fn init(io: &mut Io, program: &Program, map: &LocationMap) -> Result<Config, Fail> {
    init_config(program, map).map_err(|e| {
        say!(io.err, "error: {}", e);
        Fail(ExitStatus::Usage)
    })
}

fn cmd_check(io: &mut Io, file: &Path, json: bool) -> CmdResult {
    let program = load(io, file)?;
    let report = check_program_report(&program);
    if json {
        say!(io.out, "{}", serde_json::to_string_pretty(&report).expect("serialisable"));
    } else {
        for m in &report.methods {
            if m.ok {
                say!(io.out, "{}.{}: {} ✓", m.class, m.method, m.declared);
            } else {
                match &m.filtered {
                    Some(f) => say!(io.out, "{}.{}: declared {}, inferred {} ✗", m.class, m.method, m.declared, f),
                    None => say!(io.out, "{}.{}: declared {}, ill-typed ✗", m.class, m.method, m.declared),
                }
            }
        }
    }
    print_diags(io, file, &report.diagnostics);
    Ok(if report.is_ok() {
        ExitStatus::Success
    } else {
        ExitStatus::Diagnostics
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    io: &mut Io,
    file: &Path,
    map_args: &MapArgs,
    seed: u64,
    max_steps: usize,
    trace_path: Option<&Path>,
    verify: bool,
    inject: Option<&str>,
) -> CmdResult {
    let program = load_checked(io, file)?;
    let map = load_map(io, map_args, Some(&program))?;
    let mutation = mutation(io, inject)?;
    let cfg = init(io, &program, &map)?;
    let machine = Machine::with_mutation(&program, mutation);
    let scheduler = Scheduler::Random(seed);
    let (result, report) = if verify {
        let (r, rep) = verify_run(&machine, cfg, &scheduler, max_steps);
        (r, Some(rep))
    } else {
        (runtime::run(&machine, cfg, &scheduler, max_steps), None)
    };
    let text = format_trace(&result.trace);
    match trace_path {
        Some(p) => {
            if let Err(e) = fs::write(p, &text) {
                say!(io.err, "error: cannot write {}: {}", p.display(), e);
                return Err(Fail(ExitStatus::Usage));
            }
        }
        None => {
            let _ = write!(io.out, "{}", text);
        }
    }
    let remote = result.trace.iter().filter(|e| e.is_remote()).count();
    let outcome = match &result.outcome {
        Outcome::Quiescent => "quiescent".to_string(),
        Outcome::Fault(f) => format!("fault ({})", f),
        Outcome::StepLimit => "step-limit".to_string(),
        Outcome::Stopped => "stopped".to_string(),
    };
    say!(io.out, "outcome={} steps={} remote={}", outcome, result.trace.len(), remote);
    if let Some(rep) = &report {
        if !rep.passed() {
            say!(io.out, "verify=fail");
            let _ = write!(io.err, "{}", rep.log());
            return Ok(ExitStatus::VerifyFailed);
        }
        say!(io.out, "verify=pass checked={}", rep.steps.len());
    }
    Ok(match result.outcome {
        Outcome::Quiescent => ExitStatus::Success,
        Outcome::Fault(f) => {
            say!(io.err, "runtime fault: {}", f);
            ExitStatus::RuntimeFault
        }
        Outcome::StepLimit => {
            say!(io.err, "runtime: step limit {} reached", max_steps);
            ExitStatus::RuntimeFault
        }
        Outcome::Stopped => ExitStatus::VerifyFailed,
    })
}

fn cmd_explore(io: &mut Io, file: &Path, map_args: &MapArgs, depth: usize, reduce: bool, inject: Option<&str>) -> CmdResult {
    let program = load_checked(io, file)?;
    let map = load_map(io, map_args, Some(&program))?;
    let mutation = mutation(io, inject)?;
    let cfg = init(io, &program, &map)?;
    let machine = Machine::with_mutation(&program, mutation);
    let opts = ExploreOptions {
        depth_limit: depth,
        reduce,
    };
    let (_, report) = match verify_explore(&machine, &cfg, opts) {
        Ok(r) => r,
        Err(ExploreError::DepthExceeded(d)) => {
            say!(io.err, "error: depth limit {} exceeded", d);
            return Err(Fail(ExitStatus::Usage));
        }
    };
    let verdict = if report.passed() { "pass" } else { "fail" };
    say!(
        io.out,
        "interleavings={} steps={} configs={} faults={} verdict={}",
        report.traces,
        report.steps,
        report.configs_checked,
        report.faults.len(),
        verdict
    );
    if !report.passed() {
        let _ = write!(io.err, "{}", report.soundness.log());
        if !report.counterexample.is_empty() {
            say!(io.err, "trace:");
            let _ = write!(io.err, "{}", format_trace(&report.counterexample));
        }
        return Ok(ExitStatus::VerifyFailed);
    }
    if !report.faults.is_empty() {
        for f in &report.faults {
            say!(io.err, "runtime fault: {}", f);
        }
        return Ok(ExitStatus::RuntimeFault);
    }
    Ok(ExitStatus::Success)
}

#[derive(Serialize)]
struct CostRecord {
    subject: String,
    behaviour: String,
    report: CostReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_cost(
    io: &mut Io,
    file: Option<&Path>,
    behaviour: Option<&str>,
    map_args: &MapArgs,
    matrix_path: Option<&Path>,
    dynamic: bool,
    seed: u64,
    max_steps: usize,
    json: bool,
) -> CmdResult {
    let usage = |io: &mut Io, msg: String| {
        say!(io.err, "error: {}", msg);
        Fail(ExitStatus::Usage)
    };
    let (program, subjects): (Option<Program>, Vec<(String, Behaviour)>) = match (file, behaviour) {
        (Some(f), None) => {
            let p = load_checked(io, f)?;
            let main = p.main_class().expect("checked programs have Main");
            let subjects = main
                .methods
                .iter()
                .map(|m| (format!("{}.{}", main.name, m.name), m.behaviour.clone()))
                .collect();
            (Some(p), subjects)
        }
        (None, Some(text)) => {
            let b = parse_behaviour(text).map_err(|d| usage(io, format!("behaviour: {}", d)))?;
            (None, vec![("behaviour".to_string(), b)])
        }
        _ => return Err(usage(io, "give either a program file or --behaviour".into())),
    };
    let map = load_map(io, map_args, program.as_ref())?;
    let matrix = match matrix_path {
        Some(p) => {
            let text = read(io, p)?;
            text.parse::<CostMatrix>().map_err(|e| usage(io, e.to_string()))?
        }
        None => {
            let mut highest = map.nodes().last().copied().unwrap_or(0);
            for (_, b) in &subjects {
                for l in b.locations() {
                    highest = highest.max(l.node().unwrap_or(0));
                }
            }
            CostMatrix::uniform(highest as usize + 1, 1)
        }
    };
    let mut records = Vec::new();
    for (name, b) in &subjects {
        let report = static_cost(b, &map, &matrix).map_err(|e| usage(io, format!("{}: {}", name, e)))?;
        records.push(CostRecord {
            subject: name.clone(),
            behaviour: b.to_string(),
            report,
        });
    }
    if dynamic {
        let program = program.as_ref().expect("clap requires a file");
        let cfg = init(io, program, &map)?;
        let result = runtime::run(&Machine::new(program), cfg, &Scheduler::Random(seed), max_steps);
        if let Outcome::Fault(f) = &result.outcome {
            say!(io.err, "runtime fault: {}", f);
            return Ok(ExitStatus::RuntimeFault);
        }
        let report = trace_cost(&result.trace, &matrix).map_err(|e| usage(io, e.to_string()))?;
        records.push(CostRecord {
            subject: format!("trace(seed={})", seed),
            behaviour: format!("{} remote events", result.trace.iter().filter(|e| e.is_remote()).count()),
            report,
        });
    }
    if json {
        say!(io.out, "{}", serde_json::to_string_pretty(&records).expect("serialisable"));
    } else {
        for r in &records {
            say!(io.out, "{}: {}", r.subject, r.behaviour);
            for line in r.report.table().lines() {
                say!(io.out, "  {}", line);
            }
        }
    }
    Ok(ExitStatus::Success)
}
