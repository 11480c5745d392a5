#![allow(dead_code)]

pub mod gen;

use serde_json::Value as Json;
use sgl::analyze::compile;
use sgl::exec::{PlanConfig, PlanMode};
use sgl::runtime::{EngineConfig, EngineKind, TickReport, World};
use sgl::store::load_world;
use sgl::trace::TraceKind;
use sgl::txn::check_constraints;
use std::collections::BTreeSet;
use std::sync::Arc;

/// Objects that faulted in a tick, with the phase they faulted in.
pub fn faulted(r: &TickReport) -> BTreeSet<(String, i64)> {
    r.records
        .iter()
        .filter(|x| x.kind == TraceKind::Fault)
        .map(|x| (x.payload["phase"].as_str().unwrap_or("").to_string(), x.payload["object"].as_i64().unwrap_or(-1)))
        .collect()
}

/// Runs `case` on the reference interpreter and on the relational engine
/// with `mode` and `workers` for `ticks` ticks, comparing state and faulted
/// objects after every tick.
pub fn differential(case: &gen::Case, ticks: u64, mode: PlanMode, workers: usize) -> Result<Stats, String> {
    let p = Arc::new(compile(&case.source).map_err(|d| format!("seed {}: diagnostics\n{d}\n{}", case.seed, case.source))?);
    let make = |engine: EngineKind, mode: PlanMode, workers: usize| -> Result<World, String> {
        let s = load_world(&p, &case.world).map_err(|e| format!("seed {}: world: {e}", case.seed))?;
        let config = EngineConfig {
            engine,
            workers,
            seed: case.seed,
            plan: PlanConfig { mode, ..PlanConfig::default() },
            ..EngineConfig::default()
        };
        World::new(p.clone(), s, config).map_err(|e| format!("seed {}: {e}", case.seed))
    };
    let mut oracle = make(EngineKind::Reference, PlanMode::Logical, 1)?;
    let mut engine = make(EngineKind::Relational, mode, workers)?;
    let mut stats = Stats::default();
    for t in 0..ticks {
        let a = oracle.run_tick();
        let b = engine.run_tick();
        let (a, b) = match (a, b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(x), Err(y)) if x.to_string() == y.to_string() => return Ok(stats),
            (x, y) => {
                return Err(format!(
                    "seed {} tick {t}: outcomes differ: {:?} vs {:?}\n{}",
                    case.seed,
                    x.err().map(|e| e.to_string()),
                    y.err().map(|e| e.to_string()),
                    case.source
                ))
            }
        };
        let (fa, fb) = (faulted(&a), faulted(&b));
        if fa != fb {
            return Err(format!("seed {} tick {t}: faulted objects differ\n  oracle {fa:?}\n  engine {fb:?}\n{}", case.seed, case.source));
        }
        if *oracle.snap != *engine.snap {
            return Err(format!(
                "seed {} tick {t}: state differs\n  oracle {}\n{}",
                case.seed,
                first_difference(&oracle, &engine),
                case.source
            ));
        }
        stats.violations += check_constraints(&engine.program, &engine.snap, case.seed).len();
        stats.faults += fa.len();
        stats.entries += a.entries;
        stats.committed += a.committed;
        stats.aborted += a.aborted;
        stats.max_objects = stats.max_objects.max(oracle.snap.object_count());
        stats.ticks += 1;
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Stats {
    pub ticks: u64,
    pub faults: usize,
    pub entries: usize,
    pub committed: usize,
    pub aborted: usize,
    pub max_objects: usize,
    /// Post-tick constraint violations found by the audit.
    pub violations: usize,
}

fn first_difference(a: &World, b: &World) -> String {
    let (ja, jb) = (a.snap.to_world_json(&a.program), b.snap.to_world_json(&b.program));
    let (oa, ob) = (objects(&ja), objects(&jb));
    for (x, y) in oa.iter().zip(&ob) {
        if x != y {
            return format!("{x}\n  vs     {y}");
        }
    }
    format!("{} objects vs {}", oa.len(), ob.len())
}

fn objects(j: &Json) -> Vec<Json> {
    j["objects"].as_array().cloned().unwrap_or_default()
}
