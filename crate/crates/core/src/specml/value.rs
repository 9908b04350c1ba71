use serde::{Serialize, Serializer};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// A runtime value. Functions are sets of pairs, as in set theory; the
/// derived ordering is the lexicographic value order used for enumeration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Elem(Arc<str>),
    Pair(Box<Value>, Box<Value>),
    Set(BTreeSet<Value>),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_set(&self) -> Option<&BTreeSet<Value>> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn elem(name: &str) -> Value {
        Value::Elem(Arc::from(name))
    }

    /// True iff this is a set of pairs with no two pairs sharing a first component.
    pub fn is_function(&self) -> bool {
        let Some(set) = self.as_set() else { return false };
        let mut prev: Option<&Value> = None;
        for v in set {
            let Value::Pair(a, _) = v else { return false };
            if prev == Some(a.as_ref()) {
                return false;
            }
            prev = Some(a.as_ref());
        }
        true
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(true) => write!(f, "TRUE"),
            Value::Bool(false) => write!(f, "FALSE"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Elem(e) => write!(f, "{e}"),
            Value::Pair(a, b) => match **a {
                Value::Pair(..) => write!(f, "({a}) |-> {b}"),
                _ => match **b {
                    Value::Pair(..) => write!(f, "{a} |-> ({b})"),
                    _ => write!(f, "{a} |-> {b}"),
                },
            },
            Value::Set(items) => {
                write!(f, "{{")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A full valuation of a machine's variables, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State(pub Vec<Value>);

impl State {
    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn render(&self, names: &[String]) -> String {
        names
            .iter()
            .zip(&self.0)
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// The finite carrier of a declared type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueDomain {
    Bool,
    Range(i64, i64),
    Enum { name: String, elements: Vec<Value> },
    SetOf(Box<ValueDomain>),
    Map {
        total: bool,
        dom: Box<ValueDomain>,
        ran: Box<ValueDomain>,
    },
}

impl ValueDomain {
    /// Number of values, `None` when it does not fit in a `u128`.
    pub fn cardinality(&self) -> Option<u128> {
        match self {
            ValueDomain::Bool => Some(2),
            ValueDomain::Range(lo, hi) => {
                if hi < lo {
                    Some(0)
                } else {
                    Some((*hi as i128 - *lo as i128 + 1) as u128)
                }
            }
            ValueDomain::Enum { elements, .. } => Some(elements.len() as u128),
            ValueDomain::SetOf(inner) => {
                let n = inner.cardinality()?;
                if n >= 127 {
                    None
                } else {
                    Some(1u128 << n)
                }
            }
            ValueDomain::Map { total, dom, ran } => {
                let d = dom.cardinality()?;
                let r = ran.cardinality()? + if *total { 0 } else { 1 };
                let d = u32::try_from(d).ok()?;
                r.checked_pow(d)
            }
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (ValueDomain::Bool, Value::Bool(_)) => true,
            (ValueDomain::Range(lo, hi), Value::Int(n)) => lo <= n && n <= hi,
            (ValueDomain::Enum { elements, .. }, Value::Elem(_)) => elements.contains(v),
            (ValueDomain::SetOf(inner), Value::Set(items)) => items.iter().all(|x| inner.contains(x)),
            (ValueDomain::Map { total, dom, ran }, Value::Set(items)) => {
                if !v.is_function() {
                    return false;
                }
                let ok = items.iter().all(|p| match p {
                    Value::Pair(a, b) => dom.contains(a) && ran.contains(b),
                    _ => false,
                });
                if !ok {
                    return false;
                }
                if *total {
                    dom.cardinality() == Some(items.len() as u128)
                } else {
                    true
                }
            }
            _ => false,
        }
    }

    /// All values, sorted in value order.
    pub fn enumerate(&self) -> Vec<Value> {
        let mut out = match self {
            ValueDomain::Bool => vec![Value::Bool(false), Value::Bool(true)],
            ValueDomain::Range(lo, hi) => (*lo..=*hi).map(Value::Int).collect(),
            ValueDomain::Enum { elements, .. } => elements.clone(),
            ValueDomain::SetOf(inner) => {
                let items = inner.enumerate();
                let mut subsets = Vec::with_capacity(1 << items.len().min(20));
                let n = items.len();
                for mask in 0u64..(1u64 << n) {
                    let set = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| items[i].clone()).collect();
                    subsets.push(Value::Set(set));
                }
                subsets
            }
            ValueDomain::Map { total, dom, ran } => {
                let keys = dom.enumerate();
                let targets = ran.enumerate();
                // each key maps to one of the targets, or is absent (partial)
                let choices = targets.len() + usize::from(!*total);
                let mut maps = Vec::new();
                let mut digits = vec![0usize; keys.len()];
                loop {
                    let set = keys
                        .iter()
                        .zip(&digits)
                        .filter(|(_, &d)| d < targets.len())
                        .map(|(k, &d)| Value::pair(k.clone(), targets[d].clone()))
                        .collect();
                    maps.push(Value::Set(set));
                    let mut i = 0;
                    loop {
                        if i == digits.len() {
                            maps.sort();
                            return maps;
                        }
                        digits[i] += 1;
                        if digits[i] < choices {
                            break;
                        }
                        digits[i] = 0;
                        i += 1;
                    }
                    if choices == 0 {
                        break;
                    }
                }
                maps
            }
        };
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e3() -> ValueDomain {
        ValueDomain::Enum {
            name: "E".into(),
            elements: vec![Value::elem("a"), Value::elem("b"), Value::elem("c")],
        }
    }

    #[test]
    fn enumeration_matches_cardinality() {
        let doms = [
            ValueDomain::Bool,
            ValueDomain::Range(-1, 3),
            e3(),
            ValueDomain::SetOf(Box::new(e3())),
            ValueDomain::Map {
                total: false,
                dom: Box::new(e3()),
                ran: Box::new(ValueDomain::Range(0, 2)),
            },
            ValueDomain::Map {
                total: true,
                dom: Box::new(ValueDomain::Bool),
                ran: Box::new(ValueDomain::Range(0, 2)),
            },
        ];
        for d in doms {
            let vals = d.enumerate();
            assert_eq!(vals.len() as u128, d.cardinality().unwrap(), "{d:?}");
            let unique: BTreeSet<_> = vals.iter().cloned().collect();
            assert_eq!(unique.len(), vals.len());
            assert!(vals.iter().all(|v| d.contains(v)));
            assert!(vals.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn functions_are_detected() {
        let f = Value::Set([Value::pair(Value::elem("a"), Value::Int(1))].into_iter().collect());
        assert!(f.is_function());
        let r = Value::Set(
            [
                Value::pair(Value::elem("a"), Value::Int(1)),
                Value::pair(Value::elem("a"), Value::Int(2)),
            ]
            .into_iter()
            .collect(),
        );
        assert!(!r.is_function());
    }

    #[test]
    fn empty_total_map_domain() {
        let d = ValueDomain::Map {
            total: true,
            dom: Box::new(ValueDomain::Range(1, 0)),
            ran: Box::new(ValueDomain::Bool),
        };
        assert_eq!(d.enumerate(), vec![Value::Set(BTreeSet::new())]);
        assert_eq!(d.cardinality(), Some(1));
    }
}
