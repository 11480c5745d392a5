use super::*;
use crate::analyze::compile;
use serde_json::json;

const SRC: &str = "class Item { state: number weight = 1; }
class Unit {
  state: number player = 0; number x = 0; number y = 0; number health = 10; set<ref<Item>> items; ref<Unit> foe = null;
  effects: number damage : sum;
  update: health = health - damage;
}";

fn program() -> Program {
    compile(SRC).unwrap()
}

#[test]
fn create_tables_is_empty() {
    let p = program();
    let s = Snapshot::create_tables(&p).unwrap();
    assert_eq!(s.tables.len(), 2);
    assert_eq!(s.object_count(), 0);
    let empty = compile("").unwrap();
    assert!(Snapshot::create_tables(&empty).unwrap().tables.is_empty());
}

#[test]
fn load_two_units() {
    let p = program();
    let s = load_world(
        &p,
        &json!({"objects": [
            {"class": "Unit", "id": 2, "fields": {"x": 3, "y": 4}},
            {"class": "Unit", "id": 1, "fields": {}}
        ]}),
    )
    .unwrap();
    let t = s.table(ClassId(1));
    assert_eq!(t.ids, vec![1, 2]);
    assert!(t.get(1, 1).identical(&Value::Num(3.0)));
    assert!(t.get(0, 3).identical(&Value::Num(10.0)));
    assert_eq!(s.next_id, 3);
}

#[test]
fn load_errors_name_the_problem() {
    let p = program();
    let e = load_world(&p, &json!({"objects": [{"class": "Orc", "id": 1}]})).unwrap_err();
    assert!(e.to_string().contains("Orc"), "{e}");
    let e = load_world(&p, &json!({"objects": [{"class": "Unit", "id": 1, "fields": {"x": "a"}}]})).unwrap_err();
    assert!(e.to_string().contains("`x`"), "{e}");
    let e = load_world(&p, &json!({"objects": [{"class": "Unit", "id": 1}, {"class": "Item", "id": 1}]})).unwrap_err();
    assert!(e.to_string().contains("duplicate"), "{e}");
    let e = load_world(&p, &json!({"objects": [{"class": "Unit", "id": 1, "fields": {"foe": 9}}]})).unwrap_err();
    assert!(e.to_string().contains("dangling"), "{e}");
    let e = load_world(&p, &json!({"objects": [{"class": "Item", "id": 1}, {"class": "Unit", "id": 2, "fields": {"foe": 1}}]}))
        .unwrap_err();
    assert!(e.to_string().contains("expected Unit"), "{e}");
}

#[test]
fn class_defaults_can_be_overridden_per_world() {
    let p = program();
    let s = load_world(&p, &json!({"classes": {"Unit": {"health": 50}}, "objects": [{"class": "Unit", "id": 1}]})).unwrap();
    assert!(s.table(ClassId(1)).get(0, 3).identical(&Value::Num(50.0)));
}

#[test]
fn set_fields_roundtrip_through_the_child_relation() {
    let p = program();
    let s = load_world(
        &p,
        &json!({"objects": [
            {"class": "Item", "id": 1}, {"class": "Item", "id": 2},
            {"class": "Unit", "id": 3, "fields": {"items": [2, 1]}}
        ]}),
    )
    .unwrap();
    let pairs = s.table(ClassId(1)).set_pairs(4);
    assert_eq!(pairs, vec![(3, Value::Ref(Some(1))), (3, Value::Ref(Some(2)))]);
    let again = load_world(&p, &s.to_world_json(&p)).unwrap();
    assert_eq!(again, s);
}

#[test]
fn updates_destroys_and_spawns() {
    let p = program();
    let s = load_world(
        &p,
        &json!({"objects": [{"class": "Unit", "id": 1}, {"class": "Unit", "id": 2}]}),
    )
    .unwrap();
    let unit = ClassId(1);
    let mut spawn_row = s.table(unit).row(0);
    spawn_row[1] = Value::Num(9.0);
    let ch = ClassUpdate {
        updates: vec![(1, 3, Value::Num(3.0)), (2, 3, Value::Num(1.0))],
        spawns: vec![(5, spawn_row)],
        destroys: vec![2],
    };
    let (next, report) = s.apply_row_updates(&[(unit, ch)], empty_effects(&p), IndexPolicy::default());
    assert_eq!(report.dropped_updates, vec![(unit, 2, 3)]);
    let t = next.table(unit);
    assert_eq!(t.ids, vec![1, 5]);
    assert!(t.get(0, 3).identical(&Value::Num(3.0)));
    assert!(t.get(1, 1).identical(&Value::Num(9.0)));
    assert_eq!(next.next_id, 6);
    assert_eq!(next.tick, 1);
    // The previous snapshot is untouched.
    assert_eq!(s.table(unit).ids, vec![1, 2]);
    assert!(s.table(unit).get(0, 3).identical(&Value::Num(10.0)));
}

#[test]
fn zero_updates_share_every_table() {
    let p = program();
    let s = load_world(&p, &json!({"objects": [{"class": "Unit", "id": 1}]})).unwrap();
    let (next, _) = s.apply_row_updates(&[], empty_effects(&p), IndexPolicy::default());
    assert!(Arc::ptr_eq(&s.tables[1], &next.tables[1]));
    assert_eq!(next.table(ClassId(1)), s.table(ClassId(1)));
}

fn grid_world(p: &Program, n: i64) -> Snapshot {
    let objects: Vec<_> = (1..=n)
        .map(|i| json!({"class": "Unit", "id": i, "fields": {"x": (i * 7) % 31, "y": (i * 13) % 17}}))
        .collect();
    load_world(p, &json!({ "objects": objects })).unwrap()
}

fn scan_ids(s: &Snapshot, lo: &[f64], hi: &[f64]) -> Vec<ObjId> {
    let t = s.table(ClassId(1));
    (0..t.len())
        .filter(|&r| {
            let x = t.get(r, 1).as_f64().unwrap();
            let y = t.get(r, 2).as_f64().unwrap();
            lo[0] <= x && x <= hi[0] && lo[1] <= y && y <= hi[1]
        })
        .map(|r| t.ids[r])
        .collect()
}

#[test]
fn indexes_are_repaired_or_rebuilt_across_updates() {
    let p = program();
    let s = grid_world(&p, 100);
    let unit = ClassId(1);
    let ix = s.index(unit, &[1, 2]).unwrap();
    let boxes = [([0.0, 0.0], [10.0, 10.0]), ([5.0, 3.0], [30.0, 9.0]), ([-1.0, -1.0], [100.0, 100.0])];
    for (lo, hi) in &boxes {
        assert_eq!(ix.query(lo, hi), scan_ids(&s, lo, hi));
    }

    // Few changes: repaired in place.
    let ch = ClassUpdate {
        updates: vec![(3, 1, Value::Num(1.0)), (4, 2, Value::Num(2.0))],
        destroys: vec![5],
        spawns: vec![(101, {
            let mut r = s.table(unit).row(0);
            r[1] = Value::Num(2.0);
            r
        })],
    };
    let (s2, _) = s.apply_row_updates(&[(unit, ch)], empty_effects(&p), IndexPolicy::default());
    assert_eq!(s2.cached_indexes(), 1);
    let ix2 = s2.index(unit, &[1, 2]).unwrap();
    assert!(ix2.overlay_len() > 0);
    for (lo, hi) in &boxes {
        assert_eq!(ix2.query(lo, hi), scan_ids(&s2, lo, hi));
    }

    // Many changes: dropped and rebuilt on demand.
    let ch = ClassUpdate {
        updates: (1..=60).map(|i| (i, 1, Value::Num(i as f64))).collect(),
        ..Default::default()
    };
    let (s3, _) = s2.apply_row_updates(&[(unit, ch)], empty_effects(&p), IndexPolicy::default());
    assert_eq!(s3.cached_indexes(), 0);
    let ix3 = s3.index(unit, &[1, 2]).unwrap();
    assert_eq!(ix3.overlay_len(), 0);
    for (lo, hi) in &boxes {
        assert_eq!(ix3.query(lo, hi), scan_ids(&s3, lo, hi));
    }
}

#[test]
fn non_numeric_dimensions_are_rejected() {
    let p = program();
    let s = grid_world(&p, 3);
    assert!(matches!(s.index(ClassId(1), &[4]), Err(StoreError::Index(_))));
}
