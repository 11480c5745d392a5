use serde_json::json;
use sgl::analyze::compile;
use sgl::exec::{PlanConfig, PlanMode};
use sgl::runtime::{EngineConfig, EngineKind, UpdateComponent, World};
use sgl::scenarios;
use sgl::store::{load_world, Snapshot};
use sgl::value::{ClassId, Value};
use std::sync::Arc;

fn world(src: &str, w: serde_json::Value, config: EngineConfig) -> World {
    let p = Arc::new(compile(src).unwrap());
    let s = load_world(&p, &w).unwrap();
    World::new(p, s, config).unwrap()
}

fn field(w: &World, class: &str, id: i64, name: &str) -> Value {
    let c = w.program.class_by_name(class).unwrap();
    let t = w.snap.table(c.id);
    t.get(t.row_of(id).unwrap(), c.field(name).unwrap())
}

fn with_engine(engine: EngineKind) -> EngineConfig {
    EngineConfig {
        engine,
        ..EngineConfig::default()
    }
}

const DAMAGE: &str = "class Unit {
  state: number health = 10; ref<Unit> target = null; number hit = 0;
  effects: number damage : sum;
  update: health = health - damage;
}
run attack(this: Unit) { if (target != null) { target.damage <- hit; } }";

#[test]
fn damage_three_and_four_leaves_three_health() {
    for engine in [EngineKind::Relational, EngineKind::Reference] {
        let mut w = world(
            DAMAGE,
            json!({"objects": [
                {"class": "Unit", "id": 1},
                {"class": "Unit", "id": 2, "fields": {"target": 1, "hit": 3}},
                {"class": "Unit", "id": 3, "fields": {"target": 1, "hit": 4}}
            ]}),
            with_engine(engine),
        );
        w.run_tick().unwrap();
        assert!(field(&w, "Unit", 1, "health").identical(&Value::Num(3.0)));
        assert!(field(&w, "Unit", 2, "health").identical(&Value::Num(10.0)));
        assert_eq!(w.tick(), 1);
    }
}

#[test]
fn empty_world_only_advances_the_tick() {
    let mut w = world(DAMAGE, json!({"objects": []}), EngineConfig::default());
    let before = (*w.snap).clone();
    w.run_tick().unwrap();
    assert_eq!(w.tick(), 1);
    assert_eq!(w.snap.tables, before.tables);
}

fn states_equal(a: &Snapshot, b: &Snapshot) -> bool {
    a == b
}

#[test]
fn scenarios_agree_across_engines_and_plans() {
    for name in scenarios::NAMES {
        let sc = scenarios::by_name(name, 60, 7).unwrap();
        let p = Arc::new(compile(sc.source).unwrap_or_else(|d| panic!("{name}: {d}")));
        let s = load_world(&p, &sc.world).unwrap();
        let mut runs: Vec<World> = Vec::new();
        for (engine, mode, workers) in [
            (EngineKind::Reference, PlanMode::Adaptive, 1),
            (EngineKind::Relational, PlanMode::Logical, 1),
            (EngineKind::Relational, PlanMode::Uniform, 3),
            (EngineKind::Relational, PlanMode::Clustered, 2),
            (EngineKind::Relational, PlanMode::Adaptive, 1),
        ] {
            let config = EngineConfig {
                engine,
                workers,
                plan: PlanConfig {
                    mode,
                    ..PlanConfig::default()
                },
                ..sc.config.clone()
            };
            runs.push(World::new(p.clone(), s.clone(), config).unwrap());
        }
        for t in 0..15 {
            for w in &mut runs {
                w.run_tick().unwrap();
            }
            for (k, w) in runs.iter().enumerate().skip(1) {
                assert!(
                    states_equal(&runs[0].snap, &w.snap),
                    "{name}: run {k} diverged at tick {}\nref: {}\ngot: {}",
                    t + 1,
                    runs[0].snap.to_world_json(&p),
                    w.snap.to_world_json(&p)
                );
            }
        }
    }
}

#[test]
fn fig2_counts_match_a_direct_count() {
    let sc = scenarios::fig2_count(300, 3);
    let mut w = world(sc.source, sc.world, EngineConfig::default());
    let snap = w.snap.clone();
    w.run_tick().unwrap();
    let t = snap.table(ClassId(0));
    let xs: Vec<f64> = (0..t.len()).map(|r| t.get(r, 1).as_f64().unwrap()).collect();
    let ys: Vec<f64> = (0..t.len()).map(|r| t.get(r, 2).as_f64().unwrap()).collect();
    let cnt = w.program.class(ClassId(0)).field("cnt").unwrap();
    for i in 0..t.len() {
        let expect = (0..t.len())
            .filter(|&j| j != i && (xs[j] - xs[i]).abs() <= 5.0 && (ys[j] - ys[i]).abs() <= 5.0)
            .count() as i64;
        assert!(w.snap.table(ClassId(0)).get(i, cnt).identical(&Value::Int(expect)));
    }
}

struct Claim(&'static str);

impl UpdateComponent for Claim {
    fn name(&self) -> &str {
        self.0
    }
    fn owned(&self) -> Vec<(ClassId, u32)> {
        vec![(ClassId(0), 0)]
    }
    fn update(&self, _: &sgl::analyze::Program, _: &Snapshot, _: &sgl::effects::ReducedEffects) -> Vec<sgl::runtime::FieldUpdate> {
        Vec::new()
    }
}

#[test]
fn overlapping_components_are_rejected() {
    let mut w = world(
        "class Unit { state: number health = 1; number mana = 0; }",
        json!({"objects": []}),
        EngineConfig::default(),
    );
    w.register_update_component(Box::new(Claim("a"))).unwrap();
    let e = w.register_update_component(Box::new(Claim("b"))).unwrap_err();
    assert_eq!(e.code(), Some("E_UNPARTITIONED_STATE"));
}
