//! Bundled workloads used by the benchmarks, the acceptance suite and the
//! guide. Worlds are generated from a seed with a portable RNG, so a
//! (scenario, n, seed) triple always denotes the same world.

use crate::analyze::compile;
use crate::runtime::{EngineConfig, EngineError, World};
use crate::store::load_world;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};
use std::sync::Arc;
use std::time::Instant;

pub struct Scenario {
    pub name: &'static str,
    pub source: &'static str,
    pub world: Json,
    pub config: EngineConfig,
}

pub const NAMES: [&str; 6] = ["fig2-count", "duping", "exploration-battle", "npc-quest", "npc-quest-explicit", "three-way-join"];

/// Builds a scenario by name with `n` objects of its main class.
pub fn by_name(name: &str, n: usize, seed: u64) -> Option<Scenario> {
    Some(match name {
        "fig2-count" => fig2_count(n, seed),
        "duping" => duping(n, seed),
        "exploration-battle" => exploration_battle(n, seed, 10),
        "npc-quest" => npc_quest(n, seed, false),
        "npc-quest-explicit" => npc_quest(n, seed, true),
        "three-way-join" => three_way_join(n, seed),
        _ => return None,
    })
}

/// Neighbour counting with an accum loop and a box predicate.
pub const FIG2_SOURCE: &str = "class Unit {
  state:
    number player = 0;
    number x = 0;
    number y = 0;
    number health = 10;
    number range = 5;
    int cnt = 0;
  effects:
    number vx : avg;
    number vy : avg;
    number damage : sum;
    int seen : sum;
  update:
    health = health - damage;
    cnt = seen;
}

run count(this: Unit) {
  accum int c with sum over Unit u from Unit {
    if (u != this && u.x >= x - range && u.x <= x + range && u.y >= y - range && u.y <= y + range) {
      c <- 1;
    }
  } in {
    seen <- c;
  }
}
";

/// Side of the square world that keeps about `per_cell` units in each
/// range box on average.
fn side_for(n: usize, range: f64, per_cell: f64) -> f64 {
    let box_area = (2.0 * range + 1.0).powi(2);
    (n as f64 * box_area / per_cell).sqrt().max(2.0 * range + 1.0)
}

/// `n` units at uniformly random integer positions; each range box holds a
/// handful of units on average.
pub fn fig2_count(n: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = 5.0;
    let side = side_for(n, range, 4.0).floor() as i64;
    let objects: Vec<Json> = (1..=n)
        .map(|i| {
            json!({"class": "Unit", "id": i, "fields": {
                "x": rng.gen_range(0..side), "y": rng.gen_range(0..side), "range": range
            }})
        })
        .collect();
    Scenario {
        name: "fig2-count",
        source: FIG2_SOURCE,
        world: json!({ "objects": objects }),
        config: EngineConfig::default(),
    }
}

pub const DUPING_SOURCE: &str = "class Item {
  state:
    int owners = 0;
  effects:
    int claims : sum;
  update:
    owners = owners + claims;
  constraints:
    owners <= 1;
}

class Buyer {
  state:
    ref<Item> want = null;
    int gold = 10;
    int has = 0;
  effects:
    int got : sum;
    int spent : sum;
  update:
    has = has + got;
    gold = gold - spent;
}

run buy(this: Buyer) {
  if (has == 0 && rand() < 0.4) {
    atomic {
      want.claims <- 1;
      got <- 1;
      spent <- 5;
    }
  }
}
";

/// `n` buyers competing for one item. The seed drives both the buyer ids
/// and each tick's purchase attempts.
pub fn duping(n: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item = 1;
    let mut objects = vec![json!({"class": "Item", "id": item})];
    let mut next = 2i64;
    for _ in 0..n {
        next += rng.gen_range(1..4);
        objects.push(json!({"class": "Buyer", "id": next, "fields": {"want": item}}));
    }
    let config = EngineConfig {
        seed,
        ..EngineConfig::default()
    };
    Scenario {
        name: "duping",
        source: DUPING_SOURCE,
        world: json!({ "objects": objects }),
        config,
    }
}

pub const EXPLORATION_SOURCE: &str = "class Unit {
  state:
    number x = 0;
    number y = 0;
    number hx = 0;
    number hy = 0;
    number bx = 0;
    number by = 0;
    number range = 3;
    int age = 0;
    int cnt = 0;
    int battleAt = 10;
  effects:
    number tx : avg;
    number ty : avg;
    int seen : sum;
  update:
    x = tx;
    y = ty;
    age = age + 1;
    cnt = seen;
}

run patrol(this: Unit) {
  accum int c with sum over Unit u from Unit {
    if (u.x >= x - range && u.x <= x + range && u.y >= y - range && u.y <= y + range) {
      c <- 1;
    }
  } in {
    seen <- c;
  }
  if (age + 1 >= battleAt) {
    tx <- bx;
    ty <- by;
  } else {
    tx <- hx;
    ty <- hy;
  }
}
";

/// Units spread over a large map until tick `battle_at`, then gathered in
/// a small arena: the range predicate goes from highly selective to
/// selecting almost everything. The first clustered tick is `battle_at`.
pub fn exploration_battle(n: usize, seed: u64, battle_at: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arena = (n as f64).sqrt().max(2.0);
    let range = arena / 2.0;
    let side = side_for(n, range, 4.0);
    let objects: Vec<Json> = (1..=n)
        .map(|i| {
            let (hx, hy) = (rng.gen_range(0.0..side), rng.gen_range(0.0..side));
            let (bx, by) = (rng.gen_range(0.0..arena), rng.gen_range(0.0..arena));
            json!({"class": "Unit", "id": i, "fields": {
                "x": hx, "y": hy, "hx": hx, "hy": hy, "bx": bx, "by": by,
                "range": range, "battleAt": battle_at
            }})
        })
        .collect();
    Scenario {
        name: "exploration-battle",
        source: EXPLORATION_SOURCE,
        world: json!({ "objects": objects }),
        config: EngineConfig::default(),
    }
}

pub const NPC_QUEST_SOURCE: &str = "class Item {
  state:
    number weight = 1;
}

class Npc {
  state:
    number x = 0;
    number y = 0;
    number health = 10;
    ref<Item> item = null;
    ref<Npc> foe = null;
    set<ref<Item>> items;
  effects:
    number moveX : avg;
    number moveY : avg;
    set<ref<Item>> itemsAcquired : setUnion;
    number damage : sum;
  update:
    x = moveX;
    y = moveY;
    items = union(items, itemsAcquired);
    health = health - damage;
}

run quest(this: Npc) {
  moveX <- 2; moveY <- 3;
  waitNextTick;
  itemsAcquired <= item;
  waitNextTick;
  foe.damage <- 1;
}
";

pub const NPC_QUEST_EXPLICIT_SOURCE: &str = "class Item {
  state:
    number weight = 1;
}

class Npc {
  state:
    number x = 0;
    number y = 0;
    number health = 10;
    ref<Item> item = null;
    ref<Npc> foe = null;
    set<ref<Item>> items;
    int step = 0;
  effects:
    number moveX : avg;
    number moveY : avg;
    set<ref<Item>> itemsAcquired : setUnion;
    number damage : sum;
    int nextStep : max;
  update:
    x = moveX;
    y = moveY;
    items = union(items, itemsAcquired);
    health = health - damage;
    step = nextStep;
}

run quest(this: Npc) {
  if (step == 0) {
    moveX <- 2; moveY <- 3;
    nextStep <- 1;
  } else if (step == 1) {
    itemsAcquired <= item;
    nextStep <- 2;
  } else {
    foe.damage <- 1;
    nextStep <- 0;
  }
}
";

/// NPCs running the move, pick up, attack sequence. Every fifth NPC has no
/// foe and faults on its attack step, so it stays on that step.
pub fn npc_quest(n: usize, seed: u64, explicit: bool) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = n.div_ceil(2).max(1);
    let mut objects: Vec<Json> = (1..=items).map(|i| json!({"class": "Item", "id": i})).collect();
    let first = items as i64 + 1;
    for k in 0..n as i64 {
        let id = first + k;
        let foe = if k % 5 == 4 { Json::Null } else { json!(first + rng.gen_range(0..n as i64)) };
        objects.push(json!({"class": "Npc", "id": id, "fields": {
            "item": rng.gen_range(1..=items as i64), "foe": foe,
            "x": rng.gen_range(0..20), "y": rng.gen_range(0..20)
        }}));
    }
    Scenario {
        name: if explicit { "npc-quest-explicit" } else { "npc-quest" },
        source: if explicit { NPC_QUEST_EXPLICIT_SOURCE } else { NPC_QUEST_SOURCE },
        world: json!({ "objects": objects }),
        config: EngineConfig::default(),
    }
}

pub const THREE_WAY_SOURCE: &str = "class Item {
  state:
    number x = 0;
    number y = 0;
    number value = 1;
}

class Unit {
  state:
    number x = 0;
    number y = 0;
    number range = 4;
    number loot = 0;
  effects:
    number found : sum;
  update:
    loot = found;
}

run scout(this: Unit) {
  accum number total with sum over Unit u from Unit {
    accum number probe with sum over Item i from Item {
      if (i.value != 0 && u != this && u.x >= x - range && u.x <= x + range && u.y >= y - range && u.y <= y + range
          && i.x >= u.x - 1 && i.x <= u.x + 1 && i.y >= u.y - 1 && i.y <= u.y + 1) {
        total <- i.value;
      }
    } in { }
  } in {
    found <- total;
  }
}
";

/// Units summing the value of items near their neighbours: a three-way
/// join of each unit with units in range and items near those units.
pub fn three_way_join(n: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = side_for(n, 4.0, 3.0).floor() as i64;
    let mut objects = Vec::new();
    for i in 1..=n as i64 {
        objects.push(json!({"class": "Unit", "id": i, "fields": {"x": rng.gen_range(0..side), "y": rng.gen_range(0..side)}}));
    }
    for i in 1..=n as i64 {
        objects.push(json!({"class": "Item", "id": n as i64 + i, "fields": {
            "x": rng.gen_range(0..side), "y": rng.gen_range(0..side), "value": rng.gen_range(0..3)
        }}));
    }
    Scenario {
        name: "three-way-join",
        source: THREE_WAY_SOURCE,
        world: json!({ "objects": objects }),
        config: EngineConfig::default(),
    }
}

/// Wall-clock seconds of each of `ticks` consecutive ticks.
pub fn time_ticks(world: &mut World, ticks: usize) -> Result<Vec<f64>, EngineError> {
    let mut out = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let start = Instant::now();
        world.run_tick()?;
        out.push(start.elapsed().as_secs_f64());
    }
    Ok(out)
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Compiles and loads a scenario with `config` applied over its own.
pub fn world(sc: &Scenario, config: impl FnOnce(EngineConfig) -> EngineConfig) -> Result<World, EngineError> {
    let p = Arc::new(compile(sc.source).map_err(|d| EngineError::Config(format!("scenario {}: {d}", sc.name)))?);
    let s = load_world(&p, &sc.world)?;
    World::new(p, s, config(sc.config.clone()))
}
