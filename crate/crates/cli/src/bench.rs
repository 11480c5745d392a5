//! `sgl bench`: per-tick timings of both engines on a bundled scenario.

use crate::{source, Failure, PlanId};
use clap::Args;
use serde_json::json;
use sgl::runtime::{EngineConfig, EngineKind};
use sgl::scenarios::{self, median, time_ticks};

#[derive(Args)]
pub struct BenchArgs {
    /// Bundled scenario name.
    #[arg(long, default_value = "fig2-count")]
    scenario: String,
    /// Object counts to run.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10000])]
    sizes: Vec<usize>,
    /// Timed ticks per engine and size.
    #[arg(long, default_value_t = 20)]
    ticks: usize,
    /// Timed ticks for the reference interpreter, which is quadratic on
    /// most scenarios; defaults to `--ticks`.
    #[arg(long)]
    reference_ticks: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, value_name = "ID")]
    pin_plan: Option<PlanId>,
    /// Also write the results as JSON (`-` for stdout).
    #[arg(long, value_name = "PATH")]
    json: Option<String>,
}

pub fn bench(a: &BenchArgs) -> Result<(), Failure> {
    if scenarios::by_name(&a.scenario, 1, a.seed).is_none() {
        return Err(Failure::Input(format!(
            "unknown scenario `{}`; available: {}",
            a.scenario,
            scenarios::NAMES.join(", ")
        )));
    }
    if a.ticks == 0 || a.reference_ticks == Some(0) {
        return Err(Failure::Input("at least one timed tick is needed".into()));
    }
    println!("scenario {}, median seconds per tick, {} worker(s)", a.scenario, a.workers);
    println!("{:>8} {:>14} {:>14} {:>9}", "n", "reference", "relational", "speedup");
    let mut rows = Vec::new();
    for &n in &a.sizes {
        let sc = scenarios::by_name(&a.scenario, n, a.seed).expect("checked above");
        let run = |engine: EngineKind, ticks: usize| -> Result<f64, Failure> {
            let mut w = scenarios::world(&sc, |c| EngineConfig {
                engine,
                workers: a.workers,
                plan: sgl::exec::PlanConfig {
                    mode: a.pin_plan.map_or(c.plan.mode, |p| p.mode()),
                    ..c.plan.clone()
                },
                ..c
            })?;
            Ok(median(&time_ticks(&mut w, ticks)?))
        };
        let reference = run(EngineKind::Reference, a.reference_ticks.unwrap_or(a.ticks))?;
        let relational = run(EngineKind::Relational, a.ticks)?;
        let speedup = reference / relational;
        println!("{n:>8} {reference:>14.6} {relational:>14.6} {speedup:>8.1}x");
        rows.push(json!({"n": n, "reference": reference, "relational": relational, "speedup": speedup}));
    }
    if let Some(dest) = &a.json {
        source::write_json(dest, &json!({"scenario": a.scenario, "workers": a.workers, "rows": rows}))?;
    }
    Ok(())
}
