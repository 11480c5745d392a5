//! Runtime values, resolved types and the primitive operations both
//! executors share.

use crate::lang::ast::{BinOp, Combinator, UnOp};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Object identifier. Unique across all classes of a world.
pub type ObjId = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Type {
    Number,
    Int,
    Bool,
    Str,
    Ref(ClassId),
    Set(Box<Type>),
    /// Type of the `null` literal; assignable to every reference type.
    Null,
}

impl Type {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Type::Number | Type::Int)
    }

    /// Whether a value of type `from` may be stored where `self` is expected.
    pub fn accepts(&self, from: &Type) -> bool {
        match (self, from) {
            (a, b) if a == b => true,
            (Type::Number, Type::Int) => true,
            (Type::Ref(_), Type::Null) => true,
            (Type::Set(a), Type::Set(b)) => a.accepts(b) && (**a == **b || matches!(**b, Type::Null)),
            _ => false,
        }
    }

    pub fn default_value(&self) -> Value {
        match self {
            Type::Number => Value::Num(0.0),
            Type::Int => Value::Int(0),
            Type::Bool => Value::Bool(false),
            Type::Str => Value::Str(Arc::from("")),
            Type::Ref(_) | Type::Null => Value::Ref(None),
            Type::Set(_) => Value::empty_set(),
        }
    }
}

/// A runtime value.
///
/// `Eq`/`Ord` are *identity* relations: floats compare by `total_cmp`, so
/// `-0.0 != 0.0` and `NaN == NaN` when the bits agree. They exist so values
/// can key sets and give reductions a canonical order. Language-level
/// equality is [`binary`] with [`BinOp::Eq`].
#[derive(Clone, Debug)]
pub enum Value {
    Num(f64),
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Ref(Option<ObjId>),
    Set(Arc<BTreeSet<Value>>),
}

impl Value {
    pub fn empty_set() -> Value {
        Value::Set(Arc::new(BTreeSet::new()))
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Num(_) => 0,
            Value::Int(_) => 1,
            Value::Bool(_) => 2,
            Value::Str(_) => 3,
            Value::Ref(_) => 4,
            Value::Set(_) => 5,
        }
    }

    pub fn as_bool(&self) -> Result<bool, Fault> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(Fault::Type(format!("expected bool, found {other}"))),
        }
    }

    pub fn as_f64(&self) -> Result<f64, Fault> {
        match self {
            Value::Num(v) => Ok(*v),
            Value::Int(v) => Ok(*v as f64),
            other => Err(Fault::Type(format!("expected number, found {other}"))),
        }
    }

    pub fn as_ref_id(&self) -> Result<Option<ObjId>, Fault> {
        match self {
            Value::Ref(r) => Ok(*r),
            other => Err(Fault::Type(format!("expected reference, found {other}"))),
        }
    }

    pub fn as_set(&self) -> Result<&BTreeSet<Value>, Fault> {
        match self {
            Value::Set(s) => Ok(s),
            other => Err(Fault::Type(format!("expected set, found {other}"))),
        }
    }

    /// Converts a value to the representation of a declared type
    /// (`int` widens to `number`, element-wise inside sets).
    pub fn coerce(self, ty: &Type) -> Value {
        match (ty, self) {
            (Type::Number, Value::Int(i)) => Value::Num(i as f64),
            (Type::Set(elem), Value::Set(s)) if **elem == Type::Number => {
                if s.iter().any(|v| matches!(v, Value::Int(_))) {
                    Value::Set(Arc::new(s.iter().cloned().map(|v| v.coerce(elem)).collect()))
                } else {
                    Value::Set(s)
                }
            }
            (_, v) => v,
        }
    }

    /// Bitwise identity, the relation trajectories are compared under.
    pub fn identical(&self, other: &Value) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Ref(a), Value::Ref(b)) => a.cmp(b),
            (Value::Set(a), Value::Set(b)) => a.iter().cmp(b.iter()),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Num(v) => v.to_bits().hash(state),
            Value::Int(v) => v.hash(state),
            Value::Bool(v) => v.hash(state),
            Value::Str(v) => v.hash(state),
            Value::Ref(v) => v.hash(state),
            Value::Set(s) => {
                for v in s.iter() {
                    v.hash(state);
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v:?}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::Ref(None) => f.write_str("null"),
            Value::Ref(Some(id)) => write!(f, "#{id}"),
            Value::Set(s) => {
                f.write_str("{")?;
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// A per-object runtime failure. The object's script produces no effects
/// in the tick where it faults.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum Fault {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("read through dead or null reference {0:?}")]
    DeadReference(Option<ObjId>),
    #[error("read of empty {0} accumulator")]
    EmptyAccumulator(Combinator),
    #[error("type error: {0}")]
    Type(String),
}

fn both_int(a: &Value, b: &Value) -> Option<(i64, i64)> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some((*x, *y)),
        _ => None,
    }
}

/// Applies a non-short-circuit binary operator. `And`/`Or` are accepted for
/// already-evaluated operands.
pub fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, Fault> {
    use BinOp::*;
    match op {
        Add | Sub | Mul | Div | Rem => {
            if let Some((x, y)) = both_int(a, b) {
                let r = match op {
                    Add => x.checked_add(y),
                    Sub => x.checked_sub(y),
                    Mul => x.checked_mul(y),
                    Div | Rem if y == 0 => return Err(Fault::DivisionByZero),
                    Div => x.checked_div(y),
                    Rem => x.checked_rem(y),
                    _ => unreachable!(),
                };
                return r.map(Value::Int).ok_or(Fault::Overflow);
            }
            let (x, y) = (a.as_f64()?, b.as_f64()?);
            Ok(Value::Num(match op {
                Add => x + y,
                Sub => x - y,
                Mul => x * y,
                Div | Rem if y == 0.0 => return Err(Fault::DivisionByZero),
                Div => x / y,
                Rem => x % y,
                _ => unreachable!(),
            }))
        }
        Lt | Le | Gt | Ge => {
            let ord = match (a, b) {
                (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
                (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
                _ => a.as_f64()?.partial_cmp(&b.as_f64()?),
            };
            Ok(Value::Bool(match ord {
                None => false,
                Some(o) => match op {
                    Lt => o == Ordering::Less,
                    Le => o != Ordering::Greater,
                    Gt => o == Ordering::Greater,
                    Ge => o != Ordering::Less,
                    _ => unreachable!(),
                },
            }))
        }
        Eq | Ne => {
            let eq = lang_eq(a, b)?;
            Ok(Value::Bool(if op == Eq { eq } else { !eq }))
        }
        And => Ok(Value::Bool(a.as_bool()? && b.as_bool()?)),
        Or => Ok(Value::Bool(a.as_bool()? || b.as_bool()?)),
    }
}

fn lang_eq(a: &Value, b: &Value) -> Result<bool, Fault> {
    Ok(match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Num(_) | Value::Int(_), Value::Num(_) | Value::Int(_)) => a.as_f64()? == b.as_f64()?,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Ref(x), Value::Ref(y)) => x == y,
        (Value::Set(x), Value::Set(y)) => x == y,
        (x, y) => return Err(Fault::Type(format!("cannot compare {x} with {y}"))),
    })
}

pub fn unary(op: UnOp, v: &Value) -> Result<Value, Fault> {
    match (op, v) {
        (UnOp::Neg, Value::Int(i)) => i.checked_neg().map(Value::Int).ok_or(Fault::Overflow),
        (UnOp::Neg, Value::Num(x)) => Ok(Value::Num(-x)),
        (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (op, v) => Err(Fault::Type(format!("cannot apply {op:?} to {v}"))),
    }
}

/// Built-in functions callable from scripts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Builtin {
    Abs,
    Min,
    Max,
    Sqrt,
    Floor,
    Size,
    Contains,
    Union,
    /// Deterministic per (seed, tick, object, call site) uniform in [0, 1).
    Rand,
}

impl Builtin {
    pub fn from_name(s: &str) -> Option<Builtin> {
        Some(match s {
            "abs" => Builtin::Abs,
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "sqrt" => Builtin::Sqrt,
            "floor" => Builtin::Floor,
            "size" => Builtin::Size,
            "contains" => Builtin::Contains,
            "union" => Builtin::Union,
            "rand" => Builtin::Rand,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Abs => "abs",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Sqrt => "sqrt",
            Builtin::Floor => "floor",
            Builtin::Size => "size",
            Builtin::Contains => "contains",
            Builtin::Union => "union",
            Builtin::Rand => "rand",
        }
    }

    /// Whether evaluation can fault given well-typed arguments.
    pub fn infallible(self) -> bool {
        true
    }
}

/// Applies a builtin other than `rand`, whose inputs come from the
/// evaluation context rather than its arguments.
pub fn call(f: Builtin, args: &[Value]) -> Result<Value, Fault> {
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(Fault::Type(format!("{} expects {n} arguments", f.name())))
        }
    };
    match f {
        Builtin::Abs => {
            arity(1)?;
            match &args[0] {
                Value::Int(i) => Ok(Value::Int(i.wrapping_abs())),
                v => Ok(Value::Num(v.as_f64()?.abs())),
            }
        }
        Builtin::Min | Builtin::Max => {
            arity(2)?;
            if let Some((x, y)) = both_int(&args[0], &args[1]) {
                return Ok(Value::Int(if f == Builtin::Min { x.min(y) } else { x.max(y) }));
            }
            let (x, y) = (args[0].as_f64()?, args[1].as_f64()?);
            Ok(Value::Num(if f == Builtin::Min { x.min(y) } else { x.max(y) }))
        }
        Builtin::Sqrt => {
            arity(1)?;
            Ok(Value::Num(args[0].as_f64()?.sqrt()))
        }
        Builtin::Floor => {
            arity(1)?;
            Ok(Value::Num(args[0].as_f64()?.floor()))
        }
        Builtin::Size => {
            arity(1)?;
            Ok(Value::Int(args[0].as_set()?.len() as i64))
        }
        Builtin::Contains => {
            arity(2)?;
            Ok(Value::Bool(args[0].as_set()?.contains(&args[1])))
        }
        Builtin::Union => {
            arity(2)?;
            let (a, b) = (args[0].as_set()?, args[1].as_set()?);
            if b.is_empty() {
                return Ok(args[0].clone());
            }
            let mut out = a.clone();
            out.extend(b.iter().cloned());
            Ok(Value::Set(Arc::new(out)))
        }
        Builtin::Rand => Err(Fault::Type("rand needs an evaluation context".into())),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based random number: a pure function of its inputs, so it does
/// not depend on evaluation order or worker count.
pub fn rand_value(seed: u64, tick: u64, obj: ObjId, site: u32) -> f64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ tick);
    h = splitmix64(h ^ obj as u64);
    h = splitmix64(h ^ site as u64);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Folds a multiset of values with a combinator. The values are sorted by
/// identity order first, so the result depends only on the multiset.
/// Returns `None` for an empty input when the combinator has no identity.
pub fn reduce_values(comb: Combinator, ty: &Type, mut values: Vec<Value>) -> Option<Value> {
    values.sort();
    fold_sorted(comb, ty, &values)
}

/// Folds values that are already in canonical order.
pub fn fold_sorted(comb: Combinator, ty: &Type, values: &[Value]) -> Option<Value> {
    if values.is_empty() {
        return identity(comb, ty);
    }
    let out = match comb {
        Combinator::Sum => match ty {
            Type::Int => Value::Int(
                values
                    .iter()
                    .fold(0i64, |acc, v| acc.wrapping_add(int_of(v))),
            ),
            _ => {
                let mut acc = num_of(&values[0]);
                for v in &values[1..] {
                    acc += num_of(v);
                }
                Value::Num(acc)
            }
        },
        Combinator::Avg => {
            let mut sum = num_of(&values[0]);
            for v in &values[1..] {
                sum += num_of(v);
            }
            Value::Num(sum / values.len() as f64)
        }
        Combinator::Min | Combinator::Max => {
            let pick_min = comb == Combinator::Min;
            let mut best = values[0].clone().coerce(ty);
            for v in &values[1..] {
                let v = v.clone().coerce(ty);
                let better = match binary(BinOp::Lt, &v, &best) {
                    Ok(Value::Bool(lt)) => {
                        if pick_min {
                            lt
                        } else {
                            matches!(binary(BinOp::Gt, &v, &best), Ok(Value::Bool(true)))
                        }
                    }
                    _ => false,
                };
                if better {
                    best = v;
                }
            }
            best
        }
        Combinator::Count => Value::Int(values.len() as i64),
        Combinator::Or => Value::Bool(values.iter().any(|v| matches!(v, Value::Bool(true)))),
        Combinator::And => Value::Bool(values.iter().all(|v| matches!(v, Value::Bool(true)))),
        Combinator::SetUnion => {
            let mut out = BTreeSet::new();
            for v in values {
                match v {
                    Value::Set(s) => out.extend(s.iter().cloned()),
                    other => {
                        out.insert(other.clone());
                    }
                }
            }
            Value::Set(Arc::new(out)).coerce(ty)
        }
    };
    Some(out)
}

/// The value an empty reduction yields, when one exists.
pub fn identity(comb: Combinator, ty: &Type) -> Option<Value> {
    match comb {
        Combinator::Sum => Some(match ty {
            Type::Int => Value::Int(0),
            _ => Value::Num(0.0),
        }),
        Combinator::Count => Some(Value::Int(0)),
        Combinator::Or => Some(Value::Bool(false)),
        Combinator::And => Some(Value::Bool(true)),
        Combinator::SetUnion => Some(Value::empty_set()),
        Combinator::Avg | Combinator::Min | Combinator::Max => None,
    }
}

fn num_of(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn int_of(v: &Value) -> i64 {
    match v {
        Value::Int(i) => *i,
        Value::Num(x) => *x as i64,
        _ => 0,
    }
}

/// JSON encoding of values. Finite floats are JSON numbers (exact under
/// `float_roundtrip`); non-finite floats are strings `"f64:<hex bits>"`.
/// Decoding needs the declared type because JSON does not distinguish
/// `1` from `1.0` reliably across producers.
impl Value {
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Num(v) if v.is_finite() => serde_json::Number::from_f64(*v).map(J::Number).unwrap_or(J::Null),
            Value::Num(v) => J::String(format!("f64:{:016x}", v.to_bits())),
            Value::Int(i) => J::from(*i),
            Value::Bool(b) => J::Bool(*b),
            Value::Str(s) => J::String(s.to_string()),
            Value::Ref(r) => r.map(J::from).unwrap_or(J::Null),
            Value::Set(s) => J::Array(s.iter().map(Value::to_json).collect()),
        }
    }

    pub fn from_json(j: &serde_json::Value, ty: &Type) -> Result<Value, String> {
        use serde_json::Value as J;
        let bad = || format!("cannot read {j} as {ty:?}");
        Ok(match (ty, j) {
            (Type::Number, J::Number(n)) => Value::Num(n.as_f64().ok_or_else(bad)?),
            (Type::Number, J::String(s)) => {
                let hex = s.strip_prefix("f64:").ok_or_else(bad)?;
                Value::Num(f64::from_bits(u64::from_str_radix(hex, 16).map_err(|_| bad())?))
            }
            (Type::Int, J::Number(n)) => Value::Int(n.as_i64().ok_or_else(bad)?),
            (Type::Bool, J::Bool(b)) => Value::Bool(*b),
            (Type::Str, J::String(s)) => Value::Str(Arc::from(s.as_str())),
            (Type::Ref(_) | Type::Null, J::Null) => Value::Ref(None),
            (Type::Ref(_), J::Number(n)) => Value::Ref(Some(n.as_i64().ok_or_else(bad)?)),
            (Type::Set(elem), J::Array(items)) => Value::Set(Arc::new(
                items.iter().map(|x| Value::from_json(x, elem)).collect::<Result<_, _>>()?,
            )),
            _ => return Err(bad()),
        })
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}
