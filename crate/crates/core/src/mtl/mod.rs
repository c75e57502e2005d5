//! Past-time metric temporal logic over discrete-time traces.
//!
//! Satisfaction at index `n` of a trace with times `t_0 < t_1 < ...`:
//!
//! * `pre f` holds iff `n > 0` and `f` held at `n - 1`, regardless of the time gap.
//! * `f since[a:b] g` holds iff some `k <= n` has `t_n - t_k` in `[a, b]`, `g` at `k`,
//!   and `f` at every `j` with `k < j <= n`.
//! * `once[a:b] f` is `true since[a:b] f`; `historically[a:b] f` is
//!   `!once[a:b] !f`.
//!
//! [`Monitor`] evaluates formulas online in amortized constant time per record
//! and operator, independent of the interval bounds. [`oracle_eval`] unfolds
//! the definitions directly and serves as the reference.

mod monitor;
mod oracle;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

pub use monitor::{Monitor, MonitorError};
pub use oracle::{oracle_eval, OracleError};
pub use parser::{parse, ParseError};

use crate::trace::Time;

/// A metric interval `[lo, hi]`; `hi == None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bound {
    pub lo: Time,
    pub hi: Option<Time>,
}

impl Bound {
    pub const UNBOUNDED: Bound = Bound { lo: 0, hi: None };

    /// Returns `None` when `lo > hi`.
    pub fn new(lo: Time, hi: Option<Time>) -> Option<Bound> {
        match hi {
            Some(h) if lo > h => None,
            _ => Some(Bound { lo, hi }),
        }
    }

    pub fn closed(lo: Time, hi: Time) -> Bound {
        Bound::new(lo, Some(hi)).expect("lo <= hi")
    }

    pub fn at_least(lo: Time) -> Bound {
        Bound { lo, hi: None }
    }

    pub fn contains(&self, d: Time) -> bool {
        d >= self.lo && self.hi.is_none_or(|h| d <= h)
    }

    pub fn is_unbounded(&self) -> bool {
        *self == Bound::UNBOUNDED
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(h) => write!(f, "[{}:{}]", self.lo, h),
            None => write!(f, "[{}:*]", self.lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Pre(Box<Formula>),
    Since(Bound, Box<Formula>, Box<Formula>),
    Once(Bound, Box<Formula>),
    Historically(Bound, Box<Formula>),
}

// Constructors read better than nested `Box::new` in tests and generators.
#[allow(clippy::should_implement_trait)]
impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(name.to_string())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(f: Formula, g: Formula) -> Formula {
        Formula::And(Box::new(f), Box::new(g))
    }

    pub fn or(f: Formula, g: Formula) -> Formula {
        Formula::Or(Box::new(f), Box::new(g))
    }

    pub fn implies(f: Formula, g: Formula) -> Formula {
        Formula::Implies(Box::new(f), Box::new(g))
    }

    pub fn pre(f: Formula) -> Formula {
        Formula::Pre(Box::new(f))
    }

    pub fn since(bound: Bound, f: Formula, g: Formula) -> Formula {
        Formula::Since(bound, Box::new(f), Box::new(g))
    }

    pub fn once(bound: Bound, f: Formula) -> Formula {
        Formula::Once(bound, Box::new(f))
    }

    pub fn historically(bound: Bound, f: Formula) -> Formula {
        Formula::Historically(bound, Box::new(f))
    }

    /// Names of all atoms occurring in the formula.
    pub fn free_atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Const(_) => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(f) | Formula::Pre(f) | Formula::Once(_, f) | Formula::Historically(_, f) => {
                f.collect_atoms(out)
            }
            Formula::And(f, g)
            | Formula::Or(f, g)
            | Formula::Implies(f, g)
            | Formula::Since(_, f, g) => {
                f.collect_atoms(out);
                g.collect_atoms(out);
            }
        }
    }

    /// Number of nodes in the syntax tree.
    pub fn size(&self) -> usize {
        match self {
            Formula::Const(_) | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Pre(f) | Formula::Once(_, f) | Formula::Historically(_, f) => {
                1 + f.size()
            }
            Formula::And(f, g)
            | Formula::Or(f, g)
            | Formula::Implies(f, g)
            | Formula::Since(_, f, g) => 1 + f.size() + g.size(),
        }
    }
}

pub fn free_atoms(f: &Formula) -> BTreeSet<String> {
    f.free_atoms()
}

fn fmt_bound(f: &mut fmt::Formatter<'_>, b: &Bound) -> fmt::Result {
    if b.is_unbounded() {
        Ok(())
    } else {
        write!(f, "{b}")
    }
}

/// Fully parenthesized rendering; re-parsing yields an equal tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Const(b) => write!(f, "{b}"),
            Formula::Atom(a) => f.write_str(a),
            Formula::Not(g) => write!(f, "!({g})"),
            Formula::And(a, b) => write!(f, "({a}) && ({b})"),
            Formula::Or(a, b) => write!(f, "({a}) || ({b})"),
            Formula::Implies(a, b) => write!(f, "({a}) -> ({b})"),
            Formula::Pre(g) => write!(f, "pre ({g})"),
            Formula::Since(bound, a, b) => {
                write!(f, "({a}) since")?;
                fmt_bound(f, bound)?;
                write!(f, " ({b})")
            }
            Formula::Once(bound, g) => {
                f.write_str("once")?;
                fmt_bound(f, bound)?;
                write!(f, " ({g})")
            }
            Formula::Historically(bound, g) => {
                f.write_str("historically")?;
                fmt_bound(f, bound)?;
                write!(f, " ({g})")
            }
        }
    }
}
