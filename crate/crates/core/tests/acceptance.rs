//! Acceptance suite: one PASS or FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is printed in
//! order and timings are not disturbed by parallel tests. Exits non-zero if
//! any criterion fails.

mod common;

use common::{differential, faulted, gen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};
use sgl::analyze::compile;
use sgl::debug::{checkpoint, restore};
use sgl::exec::plan::Profile;
use sgl::exec::{PlanConfig, PlanMode};
use sgl::runtime::{EngineConfig, EngineKind, World};
use sgl::scenarios::{self, median, time_ticks};
use sgl::store::load_world;
use sgl::store::rangetree::{RangeTree, SIZE_CONSTANT};
use sgl::trace::TraceKind;
use sgl::txn::check_constraints;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<String, String>;

/// Snapshots audited with `check_constraints` and violations found, over
/// every run of the suite.
static AUDITED: AtomicUsize = AtomicUsize::new(0);
static VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

fn audit(w: &World) {
    let v = check_constraints(&w.program, &w.snap, w.config.seed);
    AUDITED.fetch_add(1, Ordering::Relaxed);
    VIOLATIONS.fetch_add(v.len(), Ordering::Relaxed);
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs `f` over `items` on all cores, keeping the input order of results.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break mine;
                        }
                        mine.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

const ORACLE_SEEDS: std::ops::Range<u64> = 1000..1100;
const MODES: [PlanMode; 4] = [PlanMode::Adaptive, PlanMode::Uniform, PlanMode::Clustered, PlanMode::Logical];

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = ORACLE_SEEDS.collect();
    let results = par_map(&seeds, |&seed| {
        let case = gen::case(seed, 200);
        let mode = MODES[seed as usize % MODES.len()];
        differential(&case, 50, mode, 1 + seed as usize % 3)
    });
    let secs = start.elapsed().as_secs_f64();
    let mut total = common::Stats::default();
    for r in results {
        let s = r?;
        total.ticks += s.ticks;
        total.faults += s.faults;
        total.entries += s.entries;
        total.committed += s.committed;
        total.aborted += s.aborted;
        total.max_objects = total.max_objects.max(s.max_objects);
        AUDITED.fetch_add(s.ticks as usize, Ordering::Relaxed);
        VIOLATIONS.fetch_add(s.violations, Ordering::Relaxed);
    }
    ensure(total.ticks == 100 * 50, || format!("only {} ticks ran", total.ticks))?;
    ensure(secs < 300.0, || format!("took {secs:.1} s, budget 300 s"))?;
    Ok(format!(
        "100 units x 50 ticks bit-identical (max {} objects, {} entries, {} faults, {} commits, {} aborts) in {secs:.1} s",
        total.max_objects, total.entries, total.faults, total.committed, total.aborted
    ))
}

fn parallel_determinism() -> Outcome {
    let seeds: Vec<u64> = ORACLE_SEEDS.take(20).collect();
    let results = par_map(&seeds, |&seed| -> Result<(), String> {
        let case = gen::case(seed, 200);
        let p = Arc::new(compile(&case.source).map_err(|d| d.to_string())?);
        let mut worlds: Vec<World> = [1usize, 2, 4, 8]
            .iter()
            .map(|&k| {
                let s = load_world(&p, &case.world).unwrap();
                let config = EngineConfig {
                    workers: k,
                    seed,
                    ..EngineConfig::default()
                };
                World::new(p.clone(), s, config).unwrap()
            })
            .collect();
        for t in 0..50 {
            let reports: Vec<_> = worlds.iter_mut().map(|w| w.run_tick().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
            for (k, w) in worlds.iter().enumerate().skip(1) {
                ensure(*w.snap == *worlds[0].snap, || format!("seed {seed} tick {t}: workers {k} state differs"))?;
                ensure(faulted(&reports[k]) == faulted(&reports[0]), || format!("seed {seed} tick {t}: faults differ"))?;
            }
            audit(&worlds[0]);
        }
        Ok(())
    });
    for r in results {
        r?;
    }
    Ok("20 units x 50 ticks identical for workers 1, 2, 4, 8".into())
}

fn fig2_correctness() -> Outcome {
    let p = Arc::new(compile(scenarios::FIG2_SOURCE).map_err(|d| d.to_string())?);
    let unit = p.class_by_name("Unit").unwrap();
    let cnt = unit.field("cnt").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pairs = 0usize;
    for placement in 0..1000 {
        // Half-unit coordinates put many neighbours exactly on box edges.
        let units: Vec<(f64, f64, f64)> = (0..50)
            .map(|_| {
                (
                    rng.gen_range(0..40) as f64 * 0.5,
                    rng.gen_range(0..40) as f64 * 0.5,
                    rng.gen_range(0..12) as f64 * 0.5,
                )
            })
            .collect();
        let objects: Vec<Json> = units
            .iter()
            .enumerate()
            .map(|(i, (x, y, r))| json!({"class": "Unit", "id": i + 1, "fields": {"x": x, "y": y, "range": r}}))
            .collect();
        let s = load_world(&p, &json!({ "objects": objects })).map_err(|e| e.to_string())?;
        let mode = MODES[placement % MODES.len()];
        let config = EngineConfig {
            plan: PlanConfig { mode, ..PlanConfig::default() },
            ..EngineConfig::default()
        };
        let mut w = World::new(p.clone(), s, config).map_err(|e| e.to_string())?;
        w.run_tick().map_err(|e| e.to_string())?;
        let t = w.snap.table(unit.id);
        for (i, (x, y, r)) in units.iter().enumerate() {
            let expect = units
                .iter()
                .enumerate()
                .filter(|(j, (ux, uy, _))| *j != i && *ux >= x - r && *ux <= x + r && *uy >= y - r && *uy <= y + r)
                .count() as i64;
            pairs += expect as usize;
            let row = t.row_of(i as i64 + 1).unwrap();
            let got = t.get(row, cnt).as_f64().map_err(|e| e.to_string())? as i64;
            ensure(got == expect, || format!("placement {placement} unit {}: cnt {got}, brute force {expect}", i + 1))?;
        }
    }
    Ok(format!("1000 placements x 50 units match the O(n^2) count ({pairs} neighbour pairs)"))
}

fn duping_prevention() -> Outcome {
    let seeds: Vec<u64> = (0..1000).collect();
    let results = par_map(&seeds, |&seed| -> Result<(u64, u64), String> {
        let sc = scenarios::duping(10, seed);
        let mut w = scenarios::world(&sc, |c| c).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            w.run_tick().map_err(|e| e.to_string())?;
            audit(&w);
        }
        let item = w.program.class_by_name("Item").unwrap();
        let buyer = w.program.class_by_name("Buyer").unwrap();
        let owners = w.snap.table(item.id).get(0, item.field("owners").unwrap()).as_f64().unwrap() as i64;
        let bt = w.snap.table(buyer.id);
        let has = buyer.field("has").unwrap();
        let holders = (0..bt.len()).filter(|&r| bt.get(r, has).as_f64().unwrap() as i64 > 0).count();
        ensure(owners == 1 && holders == 1, || format!("seed {seed}: owners {owners}, buyers holding {holders}"))?;
        Ok((w.txn_counters.committed, w.txn_counters.aborted))
    });
    let (mut committed, mut aborted) = (0, 0);
    for r in results {
        let (c, a) = r?;
        committed += c;
        aborted += a;
    }
    Ok(format!("1000 seeds x 10 buyers: exactly one owner each ({committed} commits, {aborted} aborts)"))
}

/// User-visible fields of the npc scenarios, per object.
fn npc_view(w: &World) -> Vec<Json> {
    let mut out = Vec::new();
    for class in ["Item", "Npc"] {
        let c = w.program.class_by_name(class).unwrap();
        for mut row in w.snap.rows_json(&w.program, c.id) {
            if let Some(f) = row["fields"].as_object_mut() {
                f.remove("step");
                f.retain(|k, _| !k.starts_with('_'));
            }
            out.push(row);
        }
    }
    out
}

fn multi_tick_lowering() -> Outcome {
    for seed in 0..5 {
        let mut a = scenarios::world(&scenarios::npc_quest(40, seed, false), |c| c).map_err(|e| e.to_string())?;
        let mut b = scenarios::world(&scenarios::npc_quest(40, seed, true), |c| c).map_err(|e| e.to_string())?;
        ensure(npc_view(&a) == npc_view(&b), || "initial states differ".into())?;
        for t in 0..20 {
            a.run_tick().map_err(|e| e.to_string())?;
            b.run_tick().map_err(|e| e.to_string())?;
            ensure(npc_view(&a) == npc_view(&b), || format!("seed {seed}: tick {} differs", t + 1))?;
        }
    }
    Ok("lowered and explicit-counter scripts agree for 20 ticks on 5 worlds of 40 npcs".into())
}

fn index_equivalence_and_growth() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0usize;
    for pair in 0..10_000 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(0..300);
        // A coarse grid forces duplicate coordinates and boundary hits.
        let coords: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0..20) as f64).collect();
        let tree = RangeTree::build(d, coords.clone());
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for _ in 0..d {
            let a = rng.gen_range(-2..22) as f64 - 0.5 * rng.gen_range(0..2) as f64;
            let b = a + rng.gen_range(0..12) as f64;
            lo.push(a);
            hi.push(b);
        }
        let mut got = tree.query(&lo, &hi);
        got.sort_unstable();
        let expect: Vec<u32> = (0..n as u32)
            .filter(|&i| (0..d).all(|k| coords[i as usize * d + k] >= lo[k] && coords[i as usize * d + k] <= hi[k]))
            .collect();
        ensure(got == expect, || format!("pair {pair}: d={d} n={n} box {lo:?}..{hi:?}"))?;
        hits += expect.len();
    }
    let mut ratios = Vec::new();
    for d in [2usize, 3] {
        let mut per_d = Vec::new();
        for n in [1_000usize, 10_000, 100_000] {
            let coords: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>() * 1000.0).collect();
            let tree = RangeTree::build(d, coords);
            let shape = n as f64 * (n as f64).log2().powi(d as i32 - 1);
            let ratio = tree.node_count() as f64 / shape;
            ensure(ratio <= SIZE_CONSTANT, || format!("d={d} n={n}: {} nodes, ratio {ratio:.3}", tree.node_count()))?;
            per_d.push(ratio);
        }
        ratios.push(format!("d={d}: {}", per_d.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")));
    }
    Ok(format!(
        "10^4 (data, box) pairs match the scan ({hits} hits); nodes / n log2(n)^(d-1) at n=10^3,10^4,10^5 {} (bound {SIZE_CONSTANT})",
        ratios.join("; ")
    ))
}

fn adaptive_plans() -> Outcome {
    let battle_at = 10;
    let sc = scenarios::exploration_battle(400, 6, battle_at);
    let with = |mode: PlanMode, workers: usize| {
        scenarios::world(&sc, |c| EngineConfig {
            workers,
            plan: PlanConfig { mode, ..c.plan },
            ..c
        })
    };
    let mut adaptive = with(PlanMode::Adaptive, 2).map_err(|e| e.to_string())?;
    let mut pinned = vec![
        with(PlanMode::Uniform, 1).map_err(|e| e.to_string())?,
        with(PlanMode::Clustered, 1).map_err(|e| e.to_string())?,
    ];
    let window = PlanConfig::default();
    let allowed = (window.hysteresis_ticks + window.decay_window()) as u64;
    let mut switched_at = None;
    for _ in 0..30 {
        let tick = adaptive.tick();
        let r = adaptive.run_tick().map_err(|e| e.to_string())?;
        if switched_at.is_none() && r.records.iter().any(|x| x.kind == TraceKind::PlanSwitch) {
            switched_at = Some(tick);
        }
        for w in &mut pinned {
            w.run_tick().map_err(|e| e.to_string())?;
            ensure(*w.snap == *adaptive.snap, || format!("tick {tick}: pinned run differs"))?;
        }
    }
    let at = switched_at.ok_or("no plan switch")?;
    ensure(at >= battle_at && at <= battle_at + allowed, || {
        format!("switched at tick {at}, phase change at {battle_at}, window {allowed}")
    })?;
    let unit = adaptive.program.class_by_name("Unit").unwrap().id;
    let active = adaptive.planner.state(unit).map(|s| s.active);
    ensure(active == Some(Profile::Clustered), || format!("active plan {active:?} after the battle"))?;
    Ok(format!(
        "switched at tick {at} ({} ticks after the phase change, allowed {allowed}); 30-tick trajectory equals both pinned runs",
        at - battle_at
    ))
}

const REFERENCE_TICKS: usize = 3;

fn speedup() -> Outcome {
    let sc = scenarios::fig2_count(10_000, 1);
    let pin = |engine: EngineKind| {
        move |c: EngineConfig| EngineConfig {
            engine,
            plan: PlanConfig {
                mode: PlanMode::Uniform,
                ..c.plan
            },
            ..c
        }
    };
    let mut rel = scenarios::world(&sc, pin(EngineKind::Relational)).map_err(|e| e.to_string())?;
    let rel_t = median(&time_ticks(&mut rel, 20).map_err(|e| e.to_string())?);
    let mut refw = scenarios::world(&sc, pin(EngineKind::Reference)).map_err(|e| e.to_string())?;
    let ref_t = median(&time_ticks(&mut refw, REFERENCE_TICKS).map_err(|e| e.to_string())?);
    let ratio = ref_t / rel_t;
    let detail = format!(
        "fig2-count n=10^4: relational {:.2} ms/tick (median of 20), reference {:.0} ms/tick (median of {REFERENCE_TICKS}), speedup {ratio:.0}x",
        rel_t * 1e3,
        ref_t * 1e3
    );
    ensure(ratio >= 5.0, || detail.clone())?;
    Ok(detail)
}

fn checkpoint_resume() -> Outcome {
    let cases: [(&str, usize, PlanMode); 5] = [
        ("npc-quest", 40, PlanMode::Adaptive),
        ("duping", 10, PlanMode::Adaptive),
        ("exploration-battle", 64, PlanMode::Adaptive),
        ("fig2-count", 200, PlanMode::Uniform),
        ("three-way-join", 60, PlanMode::Clustered),
    ];
    for (name, n, mode) in cases {
        let sc = scenarios::by_name(name, n, 11).unwrap();
        let make = || {
            scenarios::world(&sc, |c| EngineConfig {
                plan: PlanConfig { mode, ..c.plan },
                ..c
            })
        };
        let mut straight = make().map_err(|e| e.to_string())?;
        straight.run_ticks(100).map_err(|e| e.to_string())?;
        let mut first = make().map_err(|e| e.to_string())?;
        first.run_ticks(50).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        checkpoint(&first, &mut buf).map_err(|e| e.to_string())?;
        drop(first);
        let mut resumed = restore(&buf[..], straight.program.clone()).map_err(|e| e.to_string())?;
        resumed.run_ticks(50).map_err(|e| e.to_string())?;
        audit(&resumed);
        ensure(*resumed.snap == *straight.snap, || format!("{name}: tick-100 state differs"))?;
        ensure(resumed.planner.states() == straight.planner.states(), || format!("{name}: planner state differs"))?;
    }
    Ok("5 scenarios: checkpoint at 50 then resume equals the uninterrupted tick-100 state".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle-equivalence", oracle_equivalence),
        ("parallel-determinism", parallel_determinism),
        ("fig2-correctness", fig2_correctness),
        ("duping-prevention", duping_prevention),
        ("multi-tick-lowering", multi_tick_lowering),
        ("index-equivalence-growth", index_equivalence_and_growth),
        ("adaptive-plans", adaptive_plans),
        ("set-at-a-time-speedup", speedup),
        ("checkpoint-resume", checkpoint_resume),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    let (audited, violations) = (AUDITED.load(Ordering::Relaxed), VIOLATIONS.load(Ordering::Relaxed));
    if violations == 0 {
        println!("PASS constraint-audit: {audited} post-tick snapshots, 0 violations");
    } else {
        failed += 1;
        println!("FAIL constraint-audit: {violations} violations in {audited} post-tick snapshots");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
