//! `sgl`: compile, run, debug and benchmark SGL programs.
//!
//! Exit codes: 0 ok, 1 diagnostics or bad input, 2 I/O or environment,
//! 3 engine invariant violation.

mod bench;
mod debug;
mod run;
mod source;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgl::exec::PlanMode;
use sgl::runtime::{EngineConfig, EngineError, EngineKind};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgl", version, about = "Compile, run, debug and benchmark SGL programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check sources and optionally print plans or the table schema.
    Compile(CompileArgs),
    /// Run a world for a number of ticks.
    Run(run::RunArgs),
    /// Serve the debug API over a world paused at its first tick.
    Debug(debug::DebugArgs),
    /// Time both engines on a bundled scenario.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Source files, analyzed as one unit in the given order.
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    /// Write plan JSON for every scripted class (`-` for stdout).
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    emit_plan: Option<String>,
    /// Write the class-to-table mapping (`-` for stdout).
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    emit_schema: Option<String>,
    /// Plan profiles to emit; all when omitted.
    #[arg(long, value_enum)]
    profile: Vec<PlanId>,
}

/// Engine selected with `--engine`.
#[derive(Clone, Copy, ValueEnum)]
pub enum EngineArg {
    Relational,
    Reference,
}

/// Plan identifiers accepted by `--pin-plan` and `--profile`.
#[derive(Clone, Copy, ValueEnum)]
pub enum PlanId {
    Uniform,
    Clustered,
    Logical,
}

impl PlanId {
    pub fn mode(self) -> PlanMode {
        match self {
            PlanId::Uniform => PlanMode::Uniform,
            PlanId::Clustered => PlanMode::Clustered,
            PlanId::Logical => PlanMode::Logical,
        }
    }

    fn profile(self) -> sgl::exec::plan::Profile {
        use sgl::exec::plan::Profile;
        match self {
            PlanId::Uniform => Profile::Uniform,
            PlanId::Clustered => Profile::Clustered,
            PlanId::Logical => Profile::Logical,
        }
    }
}

/// Engine flags shared by `run` and `debug`. Each one set on the command
/// line overrides the `--config` document.
#[derive(Args)]
pub struct EngineFlags {
    /// Engine configuration document (JSON).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable adaptive switching and use one plan.
    #[arg(long, value_enum, value_name = "ID")]
    pin_plan: Option<PlanId>,
    /// Log incoming effect entries for a class (`*` for all); repeatable.
    #[arg(long, value_name = "CLASS")]
    trace_effects: Vec<String>,
}

impl EngineFlags {
    /// The config document with explicit flags applied on top.
    pub fn resolve(&self, base: EngineConfig) -> Result<EngineConfig, Failure> {
        let mut c = match &self.config {
            None => base,
            Some(path) => {
                let text = source::read(path)?;
                serde_json::from_str(&text).map_err(|e| Failure::Env(format!("{}: {e}", path.display())))?
            }
        };
        if let Some(e) = self.engine {
            c.engine = match e {
                EngineArg::Relational => EngineKind::Relational,
                EngineArg::Reference => EngineKind::Reference,
            };
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(p) = self.pin_plan {
            c.plan.mode = p.mode();
        }
        if !self.trace_effects.is_empty() {
            c.trace.effects = self.trace_effects.clone();
        }
        Ok(c)
    }
}

/// Why a command stopped; each variant has its own exit code.
#[derive(Debug)]
pub enum Failure {
    /// Compiler diagnostics or an invalid world (1).
    Input(String),
    /// Unreadable files, bad configuration, busy ports (2).
    Env(String),
    /// The engine broke one of its own invariants (3).
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Env(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Env(m) => f.write_str(m),
            Failure::Invariant(m) => write!(f, "engine invariant violated: {m}"),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        if e.is_invariant() {
            return Failure::Invariant(e.to_string());
        }
        match e {
            EngineError::Config(_) | EngineError::Checkpoint(_) => Failure::Env(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn compile_cmd(a: &CompileArgs) -> Result<(), Failure> {
    let program = source::compile(&a.sources)?;
    if let Some(dest) = &a.emit_plan {
        let profiles: Vec<PlanId> = if a.profile.is_empty() {
            vec![PlanId::Uniform, PlanId::Clustered, PlanId::Logical]
        } else {
            a.profile.clone()
        };
        let classes: Vec<serde_json::Value> = program
            .classes
            .iter()
            .filter(|c| c.body.is_some())
            .map(|c| {
                let plans: Vec<serde_json::Value> = profiles
                    .iter()
                    .map(|p| sgl::exec::plan::compile_class(&program, c.id, p.profile()).to_json(&program, None))
                    .collect();
                serde_json::json!({"class": c.name, "plans": plans})
            })
            .collect();
        source::write_json(dest, &serde_json::json!({ "classes": classes }))?;
    }
    if let Some(dest) = &a.emit_schema {
        source::write_json(dest, &serde_json::json!(sgl::analyze::derive_schema(&program)))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Compile(a) => compile_cmd(a),
        Cmd::Run(a) => run::run(a),
        Cmd::Debug(a) => debug::debug(a),
        Cmd::Bench(a) => bench::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sgl: {f}");
            ExitCode::from(f.code())
        }
    }
}
