//! Random well-typed programs and worlds for differential testing.
//!
//! Every program has the same two-class skeleton; scripts, handlers,
//! update rules and initial values are drawn from a seed. Generated
//! programs use effects of every combinator, accum loops over extents and
//! sets, waitNextTick, handlers with and without restart, transactions
//! against a constrained field, spawn and destroy. Expressions may fault
//! (null dereference, integer division by zero).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

pub struct Case {
    pub seed: u64,
    pub source: String,
    pub world: Json,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Ty {
    Num,
    Int,
    Bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cls {
    A,
    B,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Script,
    Rule,
    Cond,
}

#[derive(Clone, Default)]
struct Scope {
    locals: Vec<(String, Ty)>,
    /// Loop variables and the class they range over.
    vars: Vec<(String, Cls)>,
}

#[derive(Clone, Copy, Default)]
struct Ctx {
    accum_depth: u32,
    in_body: bool,
    in_atomic: bool,
    in_handler: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    fresh: u32,
    /// Statements left before blocks stop growing.
    budget: i32,
}

impl Gen {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn num_lit(&mut self) -> String {
        let v = self.rng.gen_range(-8..=8) as f64 * 0.5;
        if v < 0.0 {
            format!("({v:.1})")
        } else {
            format!("{v:.1}")
        }
    }

    fn int_lit(&mut self) -> String {
        let v: i64 = self.rng.gen_range(-2..=5);
        if v < 0 {
            format!("({v})")
        } else {
            v.to_string()
        }
    }

    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        xs.choose(&mut self.rng).unwrap()
    }

    // ---- expressions ----

    fn num(&mut self, c: Cls, m: Mode, s: &Scope, d: u32) -> String {
        if d == 0 || self.chance(0.4) {
            return self.num_atom(c, m, s, d);
        }
        match self.rng.gen_range(0..7) {
            0..=2 => {
                let op = *self.pick(&["+", "-", "*", "/"]);
                format!("({} {op} {})", self.num(c, m, s, d - 1), self.num(c, m, s, d - 1))
            }
            3 => format!("abs({})", self.num(c, m, s, d - 1)),
            4 => {
                let f = *self.pick(&["min", "max"]);
                format!("{f}({}, {})", self.num(c, m, s, d - 1), self.num(c, m, s, d - 1))
            }
            5 => format!("floor({})", self.num(c, m, s, d - 1)),
            _ => format!("(-{})", self.num(c, m, s, d - 1)),
        }
    }

    fn num_atom(&mut self, c: Cls, m: Mode, s: &Scope, d: u32) -> String {
        let mut opts: Vec<String> = vec![self.num_lit()];
        match c {
            Cls::A => {
                opts.extend(["a0", "a1"].map(String::from));
                // Dereferences fault on null or dead targets; keep them rare.
                if m != Mode::Cond && self.chance(0.2) {
                    opts.extend(["peer.a0", "pet.hp"].map(String::from));
                }
                if m == Mode::Rule {
                    opts.extend(["s0", "v0", "lo", "hi"].map(String::from));
                }
            }
            Cls::B => {
                opts.push("hp".into());
                if m != Mode::Cond && self.chance(0.2) {
                    opts.push("owner.a1".into());
                }
                if m == Mode::Rule {
                    opts.extend(["dmg", "heal"].map(String::from));
                }
            }
        }
        if m != Mode::Cond && self.chance(0.15) {
            opts.push("rand()".into());
        }
        for (v, vc) in &s.vars {
            match vc {
                Cls::A => opts.extend([format!("{v}.a0"), format!("{v}.a1")]),
                Cls::B => opts.push(format!("{v}.hp")),
            }
        }
        for (l, t) in &s.locals {
            if *t == Ty::Num {
                opts.push(l.clone());
            }
        }
        if d > 0 && self.chance(0.2) {
            return self.int(c, m, s, d - 1);
        }
        self.pick(&opts).clone()
    }

    fn int(&mut self, c: Cls, m: Mode, s: &Scope, d: u32) -> String {
        if d == 0 || self.chance(0.5) {
            let mut opts: Vec<String> = vec![self.int_lit()];
            match c {
                Cls::A => {
                    opts.extend(["k", "gold", "size(pets)"].map(String::from));
                    if m == Mode::Rule {
                        opts.push("hits".into());
                    }
                }
                Cls::B => opts.push("age".into()),
            }
            for (v, vc) in &s.vars {
                if *vc == Cls::A {
                    opts.push(format!("{v}.k"));
                }
            }
            for (l, t) in &s.locals {
                if *t == Ty::Int {
                    opts.push(l.clone());
                }
            }
            return self.pick(&opts).clone();
        }
        let op = *self.pick(&["+", "-", "+", "-", "+", "/", "%"]);
        format!("({} {op} {})", self.int(c, m, s, d - 1), self.int(c, m, s, d - 1))
    }

    fn boolean(&mut self, c: Cls, m: Mode, s: &Scope, d: u32) -> String {
        if d > 0 && self.chance(0.3) {
            return match self.rng.gen_range(0..3) {
                0 => format!("({} && {})", self.boolean(c, m, s, d - 1), self.boolean(c, m, s, d - 1)),
                1 => format!("({} || {})", self.boolean(c, m, s, d - 1), self.boolean(c, m, s, d - 1)),
                _ => format!("!({})", self.boolean(c, m, s, d - 1)),
            };
        }
        let mut opts: Vec<String> = Vec::new();
        let cmp = *self.pick(&["<", "<=", ">", ">=", "==", "!="]);
        opts.push(format!("{} {cmp} {}", self.num(c, m, s, d.min(1)), self.num(c, m, s, d.min(1))));
        opts.push(format!("{} {cmp} {}", self.int(c, m, s, d.min(1)), self.int(c, m, s, d.min(1))));
        match c {
            Cls::A => {
                opts.extend(["flag", "peer != null", "pet == null"].map(String::from));
                if m != Mode::Cond {
                    opts.push("contains(pets, pet)".into());
                }
                if m == Mode::Rule {
                    opts.extend(["any", "all"].map(String::from));
                }
            }
            Cls::B => opts.push("owner == null".into()),
        }
        for (v, vc) in &s.vars {
            match (vc, c) {
                (Cls::A, Cls::A) => opts.extend([format!("{v} != this"), format!("{v} == peer")]),
                (Cls::B, Cls::A) => opts.extend([format!("{v} == pet"), format!("{v}.owner == this")]),
                (Cls::A, Cls::B) => opts.push(format!("{v} == owner")),
                (Cls::B, Cls::B) => opts.push(format!("{v} != this")),
            }
        }
        for (l, t) in &s.locals {
            if *t == Ty::Bool {
                opts.push(l.clone());
            }
        }
        self.pick(&opts).clone()
    }

    fn expr(&mut self, t: Ty, c: Cls, m: Mode, s: &Scope, d: u32) -> String {
        match t {
            Ty::Num => self.num(c, m, s, d),
            Ty::Int => self.int(c, m, s, d),
            Ty::Bool => self.boolean(c, m, s, d),
        }
    }

    // ---- statements ----

    fn block(&mut self, c: Cls, s: &mut Scope, cx: Ctx, indent: usize, out: &mut String) {
        let mark = s.locals.len();
        let n = self.rng.gen_range(1..=3);
        for _ in 0..n {
            if self.budget <= 0 {
                break;
            }
            self.stmt(c, s, cx, indent, out);
        }
        s.locals.truncate(mark);
    }

    fn line(out: &mut String, indent: usize, text: &str) {
        out.push_str(&"  ".repeat(indent));
        out.push_str(text);
        out.push('\n');
    }

    fn stmt(&mut self, c: Cls, s: &mut Scope, cx: Ctx, indent: usize, out: &mut String) {
        self.budget -= 1;
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=11 => {
                let t = *self.pick(&[Ty::Num, Ty::Int, Ty::Bool]);
                let e = self.expr(t, c, Mode::Script, s, 2);
                let l = self.name("l");
                Self::line(out, indent, &format!("let {l} = {e};"));
                s.locals.push((l, t));
            }
            12..=27 => {
                let cond = self.boolean(c, Mode::Script, s, 2);
                Self::line(out, indent, &format!("if ({cond}) {{"));
                self.block(c, s, cx, indent + 1, out);
                if self.chance(0.4) {
                    Self::line(out, indent, "} else {");
                    self.block(c, s, cx, indent + 1, out);
                }
                Self::line(out, indent, "}");
            }
            28..=45 => self.self_emit(c, s, cx, indent, out),
            46..=59 => self.remote_emit(c, s, cx, indent, out),
            60..=71 if cx.accum_depth < 2 && !cx.in_atomic => self.accum(c, s, cx, indent, out),
            72..=79 if c == Cls::A && !cx.in_atomic && !cx.in_body => {
                Self::line(out, indent, "atomic {");
                let inner = Ctx { in_atomic: true, ..cx };
                let k = self.rng.gen_range(0..4);
                Self::line(out, indent + 1, &format!("spend <- {k};"));
                self.block(c, s, inner, indent + 1, out);
                if self.chance(0.5) {
                    Self::line(out, indent + 1, "peer.spend <- 1;");
                }
                Self::line(out, indent, "}");
            }
            80..=85 if c == Cls::A && !cx.in_atomic && !cx.in_body => {
                let hp = self.num(c, Mode::Script, s, 1);
                let p = self.rng.gen_range(1..=10);
                Self::line(out, indent, &format!("if (rand() < 0.0{p}) {{"));
                if self.chance(0.2) {
                    let g = self.int_lit();
                    Self::line(out, indent + 1, &format!("spawn A {{ gold: {g}, a0: {hp}, peer: this }};"));
                } else {
                    Self::line(out, indent + 1, &format!("spawn B {{ hp: {hp}, owner: this }};"));
                }
                Self::line(out, indent, "}");
            }
            86..=89 if !cx.in_atomic && !cx.in_body => {
                let cond = self.boolean(c, Mode::Script, s, 1);
                let target = match c {
                    Cls::A => *self.pick(&["pet", "pet", "peer"]),
                    Cls::B => *self.pick(&["owner", "this"]),
                };
                Self::line(out, indent, &format!("if ({cond} && rand() < 0.1) {{ destroy {target}; }}"));
            }
            _ => self.self_emit(c, s, cx, indent, out),
        }
    }

    fn self_emit(&mut self, c: Cls, s: &mut Scope, cx: Ctx, indent: usize, out: &mut String) {
        let text = match c {
            Cls::A => match self.rng.gen_range(0..9) {
                0 => format!("s0 <- {};", self.num(c, Mode::Script, s, 2)),
                1 => format!("v0 <- {};", self.num(c, Mode::Script, s, 2)),
                2 => format!("lo <- {};", self.num(c, Mode::Script, s, 2)),
                3 => format!("hi <- {};", self.num(c, Mode::Script, s, 2)),
                4 => "hits <- 1;".into(),
                5 => format!("any <- {};", self.boolean(c, Mode::Script, s, 1)),
                6 => format!("all <- {};", self.boolean(c, Mode::Script, s, 1)),
                7 => "gain <= pet;".into(),
                _ if !cx.in_body => format!("spend <- {};", self.rng.gen_range(0..4)),
                _ => "hits <- 1;".into(),
            },
            Cls::B => match self.rng.gen_range(0..2) {
                0 => format!("dmg <- {};", self.num(c, Mode::Script, s, 2)),
                _ => format!("heal <- {};", self.num(c, Mode::Script, s, 2)),
            },
        };
        Self::line(out, indent, &text);
    }

    fn remote_emit(&mut self, c: Cls, s: &mut Scope, cx: Ctx, indent: usize, out: &mut String) {
        let mut targets: Vec<(String, Cls)> = match c {
            Cls::A => vec![("peer".into(), Cls::A), ("pet".into(), Cls::B)],
            Cls::B => vec![("owner".into(), Cls::A)],
        };
        targets.extend(s.vars.iter().cloned());
        let (t, tc) = self.pick(&targets).clone();
        let text = match tc {
            Cls::A => match self.rng.gen_range(0..5) {
                0 => format!("{t}.s0 <- {};", self.num(c, Mode::Script, s, 2)),
                1 => format!("{t}.lo <- {};", self.num(c, Mode::Script, s, 1)),
                2 => format!("{t}.hits <- 1;"),
                3 if !cx.in_body => format!("{t}.spend <- {};", self.rng.gen_range(0..3)),
                _ => format!("{t}.any <- {};", self.boolean(c, Mode::Script, s, 1)),
            },
            Cls::B => match self.rng.gen_range(0..2) {
                0 => format!("{t}.dmg <- {};", self.num(c, Mode::Script, s, 2)),
                _ => format!("{t}.heal <- {};", self.num(c, Mode::Script, s, 1)),
            },
        };
        // Loop variables are never null; fields usually get a guard.
        if !s.vars.iter().any(|(v, _)| *v == t) && self.chance(0.7) {
            Self::line(out, indent, &format!("if ({t} != null) {{ {text} }}"));
        } else {
            Self::line(out, indent, &text);
        }
    }

    fn accum(&mut self, c: Cls, s: &mut Scope, cx: Ctx, indent: usize, out: &mut String) {
        // Only one extent scan per nest keeps the oracle fast.
        let mut sources: Vec<(&str, Cls)> = Vec::new();
        if cx.accum_depth == 0 {
            sources.extend([("A", Cls::A), ("B", Cls::B)]);
        }
        if c == Cls::A {
            sources.push(("pets", Cls::B));
        }
        if sources.is_empty() {
            return self.self_emit(c, s, cx, indent, out);
        }
        let (src, vc) = *self.pick(&sources);
        // Reading an empty avg, min or max accumulator faults; those mostly
        // scan the extent of A, which holds at least `this` when c is A.
        let partial = self.chance(if src == "A" { 0.5 } else { 0.15 });
        let (aty, comb) = if partial {
            *self.pick(&[(Ty::Num, "avg"), (Ty::Num, "min"), (Ty::Num, "max")])
        } else {
            *self.pick(&[(Ty::Num, "sum"), (Ty::Int, "sum"), (Ty::Int, "count"), (Ty::Bool, "or")])
        };
        let tyname = match aty {
            Ty::Num => "number",
            Ty::Int => "int",
            Ty::Bool => "bool",
        };
        let acc = self.name("c");
        let var = self.name("u");
        let vty = match vc {
            Cls::A => "A",
            Cls::B => "B",
        };
        Self::line(out, indent, &format!("accum {tyname} {acc} with {comb} over {vty} {var} from {src} {{"));
        s.vars.push((var, vc));
        let inner = Ctx {
            accum_depth: cx.accum_depth + 1,
            in_body: true,
            ..cx
        };
        let cond = self.boolean(c, Mode::Script, s, 2);
        let value = match aty {
            Ty::Num => self.num(c, Mode::Script, s, 2),
            Ty::Int => self.int(c, Mode::Script, s, 1),
            Ty::Bool => self.boolean(c, Mode::Script, s, 1),
        };
        if partial && self.chance(0.7) {
            Self::line(out, indent + 1, &format!("{acc} <- {value};"));
        } else {
            Self::line(out, indent + 1, &format!("if ({cond}) {{ {acc} <- {value}; }}"));
        }
        if self.chance(0.5) {
            self.block(c, s, inner, indent + 1, out);
        }
        s.vars.pop();
        Self::line(out, indent, "} in {");
        let mark = s.locals.len();
        s.locals.push((acc.clone(), aty));
        let sink = match (c, aty) {
            (Cls::A, Ty::Num) => *self.pick(&["s0", "v0", "lo", "hi"]),
            (Cls::A, Ty::Int) => "s0",
            (Cls::A, Ty::Bool) => "any",
            (Cls::B, Ty::Bool) => "heal",
            (Cls::B, _) => "dmg",
        };
        let text = match (c, aty) {
            (Cls::B, Ty::Bool) => format!("if ({acc}) {{ heal <- 1.0; }}"),
            _ => format!("{sink} <- {acc};"),
        };
        Self::line(out, indent + 1, &text);
        if self.chance(0.4) {
            self.block(c, s, cx, indent + 1, out);
        }
        s.locals.truncate(mark);
        Self::line(out, indent, "}");
    }

    // ---- program ----

    fn program(&mut self) -> String {
        let mut src = String::new();
        let s = Scope::default();
        let a0 = self.num_lit();
        let a1 = self.num_lit();
        src.push_str(&format!(
            "class A {{\n  state:\n    number a0 = {a0};\n    number a1 = {a1};\n    int k = 0;\n    bool flag = false;\n    \
             ref<A> peer = null;\n    ref<B> pet = null;\n    set<ref<B>> pets;\n    int gold = 10;\n  effects:\n    \
             number s0 : sum;\n    number v0 : avg;\n    number lo : min;\n    number hi : max;\n    int hits : count;\n    \
             bool any : or;\n    bool all : and;\n    set<ref<B>> gain : setUnion;\n    int spend : sum;\n  update:\n"
        ));
        let r0 = self.num(Cls::A, Mode::Rule, &s, 2);
        let r1 = *self.pick(&["v0", "lo", "hi", "max(a1, hi)", "min(a1, lo)"]);
        let rk = *self.pick(&["k + hits", "hits", "k + 1", "(k + hits) % 7"]);
        src.push_str(&format!("    a0 = {r0};\n    a1 = {r1};\n    k = {rk};\n"));
        if self.chance(0.7) {
            let f = self.boolean(Cls::A, Mode::Rule, &s, 1);
            src.push_str(&format!("    flag = {f};\n"));
        }
        src.push_str("    pets = union(pets, gain);\n    gold = gold - spend;\n  constraints:\n    gold >= 0;\n}\n\n");
        let life = self.rng.gen_range(3..=10);
        let hp = *self.pick(&["hp - dmg", "hp - dmg + heal", "max(hp - dmg, heal)"]);
        src.push_str(&format!(
            "class B {{\n  state:\n    number hp = 5;\n    int age = 0;\n    ref<A> owner = null;\n  effects:\n    \
             number dmg : sum;\n    number heal : max;\n  update:\n    hp = {hp};\n    age = age + 1;\n}}\n\n"
        ));

        // Script of A: top-level segments separated by waits.
        src.push_str("run actA(this: A) {\n");
        let waits = self.rng.gen_range(0..=2);
        for seg in 0..=waits {
            if seg > 0 {
                src.push_str("  waitNextTick;\n");
            }
            self.budget = self.rng.gen_range(3..=10);
            let mut scope = Scope::default();
            self.block(Cls::A, &mut scope, Ctx::default(), 1, &mut src);
        }
        src.push_str("}\n\n");

        src.push_str(&format!("run actB(this: B) {{\n  if (age > {life}) {{ destroy this; }}\n"));
        if self.chance(0.7) {
            self.budget = self.rng.gen_range(1..=4);
            let mut scope = Scope::default();
            self.block(Cls::B, &mut scope, Ctx::default(), 1, &mut src);
        }
        src.push_str("}\n\n");

        for _ in 0..self.rng.gen_range(0..=2) {
            let cond = self.boolean(Cls::A, Mode::Cond, &s, 1);
            let restart = if waits > 0 && self.chance(0.5) { " restart" } else { "" };
            src.push_str(&format!("on A when ({cond}){restart} {{\n"));
            self.budget = self.rng.gen_range(1..=3);
            let mut scope = Scope::default();
            let cx = Ctx {
                in_handler: true,
                ..Ctx::default()
            };
            self.block(Cls::A, &mut scope, cx, 1, &mut src);
            src.push_str("}\n\n");
        }
        src
    }

    fn world(&mut self, max_objects: usize) -> Json {
        let total = self.rng.gen_range(2..=max_objects.max(2));
        let na = self.rng.gen_range(1..total);
        let a_ids: Vec<i64> = (1..=na as i64).collect();
        let b_ids: Vec<i64> = (na as i64 + 1..=total as i64).collect();
        let mut objects = Vec::new();
        for &id in &a_ids {
            let peer = if self.chance(0.8) { json!(*self.pick(&a_ids)) } else { Json::Null };
            let pet = if !b_ids.is_empty() && self.chance(0.7) { json!(*self.pick(&b_ids)) } else { Json::Null };
            let mut pets: Vec<i64> = b_ids.iter().copied().filter(|_| self.rng.gen_bool(0.05)).take(4).collect();
            pets.sort();
            objects.push(json!({"class": "A", "id": id, "fields": {
                "a0": self.rng.gen_range(-10..=10) as f64 * 0.5,
                "a1": self.rng.gen_range(-10..=10) as f64 * 0.5,
                "k": self.rng.gen_range(0..5),
                "flag": self.chance(0.5),
                "peer": peer, "pet": pet, "pets": pets,
                "gold": self.rng.gen_range(0..12),
            }}));
        }
        for &id in &b_ids {
            let owner = if self.chance(0.8) { json!(*self.pick(&a_ids)) } else { Json::Null };
            objects.push(json!({"class": "B", "id": id, "fields": {
                "hp": self.rng.gen_range(-2..=10) as f64,
                "age": self.rng.gen_range(0..3),
                "owner": owner,
            }}));
        }
        json!({ "objects": objects })
    }
}

/// Generates the program and world for `seed`. Worlds hold at least two
/// and at most `max_objects` objects.
pub fn case(seed: u64, max_objects: usize) -> Case {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        fresh: 0,
        budget: 0,
    };
    let source = g.program();
    let world = g.world(max_objects);
    Case { seed, source, world }
}
