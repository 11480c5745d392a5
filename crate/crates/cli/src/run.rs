//! `sgl run`.

use crate::{source, EngineFlags, Failure};
use clap::Args;
use serde_json::json;
use sgl::debug::{checkpoint, restore};
use sgl::runtime::{EngineConfig, World};
use sgl::store::load_world;
use sgl::trace::{write_ndjson, TraceKind};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Args)]
pub struct RunArgs {
    /// Source files, analyzed as one unit in the given order.
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    /// World document; an empty world when omitted.
    #[arg(long, value_name = "PATH")]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    ticks: u64,
    #[command(flatten)]
    engine: EngineFlags,
    /// Write the state every K ticks, starting with the initial state.
    #[arg(long, value_name = "K")]
    dump_state_every: Option<u64>,
    /// Directory for state dumps and periodic checkpoints.
    #[arg(long, value_name = "DIR", default_value = ".")]
    dump_dir: PathBuf,
    /// Write the final state (`-` for stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    /// Append trace records (NDJSON), starting with a header record.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Write a checkpoint every K ticks into the dump directory.
    #[arg(long, value_name = "K")]
    checkpoint_every: Option<u64>,
    /// Write a checkpoint after the last tick.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Start from a checkpoint instead of a world document.
    #[arg(long, value_name = "PATH", conflicts_with = "world")]
    resume: Option<PathBuf>,
}

/// Loads the world named by `world` or `resume` with the resolved config.
pub fn open_world(
    sources: &[PathBuf],
    world: Option<&Path>,
    resume: Option<&Path>,
    flags: &EngineFlags,
    defaults: EngineConfig,
) -> Result<World, Failure> {
    let program = Arc::new(source::compile(sources)?);
    if let Some(path) = resume {
        let f = fs::File::open(path).map_err(|e| Failure::Env(format!("{}: {e}", path.display())))?;
        let mut w = restore(std::io::BufReader::new(f), program)
            .map_err(|e| Failure::Env(format!("{}: {e}", path.display())))?;
        // Only flags given explicitly override the checkpointed config.
        let config = flags.resolve(w.config.clone())?;
        if config != w.config {
            let (snap, planner, counters, seq) = (w.snap.clone(), w.planner.states(), w.txn_counters, w.trace.next_seq);
            let same_plans = config.plan == w.config.plan;
            w = World::new(w.program.clone(), (*snap).clone(), config)?;
            if same_plans {
                w.planner.restore_states(planner).map_err(Failure::Env)?;
            }
            w.txn_counters = counters;
            w.trace.next_seq = seq;
        }
        return Ok(w);
    }
    let doc = match world {
        Some(p) => source::read_json(p)?,
        None => json!({}),
    };
    let snap = load_world(&program, &doc).map_err(|e| Failure::Input(e.to_string()))?;
    let config = flags.resolve(defaults)?;
    Ok(World::new(program, snap, config)?)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Env(format!("{}: {e}", path.display()))
}

fn dump(w: &World, dir: &Path) -> Result<(), Failure> {
    let path = dir.join(format!("state-{:06}.json", w.tick()));
    source::write_json(&path.to_string_lossy(), &w.snap.to_world_json(&w.program))
}

fn save_checkpoint(w: &World, path: &Path) -> Result<(), Failure> {
    let f = fs::File::create(path).map_err(io(path))?;
    checkpoint(w, BufWriter::new(f)).map_err(|e| Failure::Env(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn run(a: &RunArgs) -> Result<(), Failure> {
    let mut w = open_world(&a.sources, a.world.as_deref(), a.resume.as_deref(), &a.engine, EngineConfig::default())?;
    if a.dump_state_every.is_some() || a.checkpoint_every.is_some() {
        fs::create_dir_all(&a.dump_dir).map_err(io(&a.dump_dir))?;
    }
    let mut trace = match &a.trace {
        None => None,
        Some(p) => {
            let f = fs::OpenOptions::new().create(true).append(true).open(p).map_err(io(p))?;
            let mut out = BufWriter::new(f);
            let header = json!({
                "config": w.config,
                "unitHash": w.program.unit_hash,
                "sources": a.sources,
                "world": a.world,
                "resume": a.resume,
                "startTick": w.tick(),
                "ticks": a.ticks,
                "version": env!("CARGO_PKG_VERSION"),
            });
            let tick = w.tick();
            w.trace.push(tick, TraceKind::Header, header);
            write_ndjson(&mut out, &w.trace.take()).map_err(io(p))?;
            Some((out, p))
        }
    };
    let every = |k: Option<u64>, t: u64| k.is_some_and(|k| k > 0 && t.is_multiple_of(k));
    if every(a.dump_state_every, w.tick()) {
        dump(&w, &a.dump_dir)?;
    }
    let start = Instant::now();
    for _ in 0..a.ticks {
        let report = w.run_tick()?;
        if let Some((out, p)) = &mut trace {
            write_ndjson(out, &report.records).map_err(io(p))?;
        }
        if every(a.dump_state_every, w.tick()) {
            dump(&w, &a.dump_dir)?;
        }
        if every(a.checkpoint_every, w.tick()) {
            save_checkpoint(&w, &a.dump_dir.join(format!("checkpoint-{:06}.json", w.tick())))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if let Some((out, p)) = &mut trace {
        out.flush().map_err(io(p))?;
    }
    if let Some(dest) = &a.out {
        source::write_json(dest, &w.snap.to_world_json(&w.program))?;
    }
    if let Some(p) = &a.checkpoint {
        save_checkpoint(&w, p)?;
    }
    let rate = if secs > 0.0 { a.ticks as f64 / secs } else { f64::INFINITY };
    eprintln!(
        "ran {} ticks in {secs:.3} s ({rate:.1} ticks/sec); tick {}, {} objects, {} transactions committed, {} aborted",
        a.ticks,
        w.tick(),
        w.snap.object_count(),
        w.txn_counters.committed,
        w.txn_counters.aborted
    );
    Ok(())
}
