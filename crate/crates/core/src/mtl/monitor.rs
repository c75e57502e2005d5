use std::collections::VecDeque;

use thiserror::Error;

use super::{Bound, Formula};
use crate::trace::{Record, Time, Verdict};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("non-increasing time {time} (last processed {last})")]
    NonIncreasing { time: Time, last: Time },
    #[error("record at time {time} is missing atom {atom}")]
    MissingAtom { time: Time, atom: String },
}

#[derive(Debug, Clone)]
enum Op {
    Const(bool),
    Atom(usize),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Implies(usize, usize),
    Pre(usize),
    /// `lhs == None` is the constant `true` (the `once` case).
    Since {
        bound: Bound,
        lhs: Option<usize>,
        rhs: usize,
    },
}

#[derive(Debug, Clone)]
enum NodeState {
    Stateless,
    Pre { prev: bool },
    /// Times of candidate `k` positions (rhs held at `k`, lhs held ever
    /// since), ascending. Expired entries are dropped from the front; of the
    /// entries already at least `lo` old only the newest is kept.
    Since { window: VecDeque<Time> },
}

/// Online monitor for a single formula.
///
/// Nodes are stored in post-order so one forward pass evaluates every
/// subformula after its children.
#[derive(Debug, Clone)]
pub struct Monitor {
    formula: Formula,
    strict: bool,
    atoms: Vec<String>,
    ops: Vec<Op>,
    states: Vec<NodeState>,
    values: Vec<bool>,
    last_time: Option<Time>,
    steps: u64,
}

impl Monitor {
    pub fn new(formula: Formula, strict: bool) -> Monitor {
        let atoms: Vec<String> = formula.free_atoms().into_iter().collect();
        let mut ops = Vec::new();
        compile(&formula, &atoms, &mut ops);
        let states = ops
            .iter()
            .map(|op| match op {
                Op::Pre(_) => NodeState::Pre { prev: false },
                Op::Since { .. } => NodeState::Since {
                    window: VecDeque::new(),
                },
                _ => NodeState::Stateless,
            })
            .collect();
        let values = vec![false; ops.len()];
        Monitor {
            formula,
            strict,
            atoms,
            ops,
            states,
            values,
            last_time: None,
            steps: 0,
        }
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn last_time(&self) -> Option<Time> {
        self.last_time
    }

    /// Number of records consumed so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn check(&self, record: &Record) -> Result<(), MonitorError> {
        if let Some(last) = self.last_time {
            if record.time <= last {
                return Err(MonitorError::NonIncreasing {
                    time: record.time,
                    last,
                });
            }
        }
        if self.strict {
            if let Some(atom) = self.atoms.iter().find(|a| !record.fields.contains_key(*a)) {
                return Err(MonitorError::MissingAtom {
                    time: record.time,
                    atom: atom.clone(),
                });
            }
        }
        Ok(())
    }

    fn eval(&self, record: &Record, values: &mut [bool]) {
        let t = record.time;
        for (i, op) in self.ops.iter().enumerate() {
            values[i] = match *op {
                Op::Const(b) => b,
                Op::Atom(a) => record.get(&self.atoms[a]).unwrap_or(false),
                Op::Not(c) => !values[c],
                Op::And(l, r) => values[l] && values[r],
                Op::Or(l, r) => values[l] || values[r],
                Op::Implies(l, r) => !values[l] || values[r],
                Op::Pre(_) => match self.states[i] {
                    NodeState::Pre { prev } => prev && self.steps > 0,
                    _ => unreachable!(),
                },
                Op::Since { bound, lhs, rhs } => {
                    let lhs_now = lhs.is_none_or(|l| values[l]);
                    let NodeState::Since { window } = &self.states[i] else {
                        unreachable!()
                    };
                    since_value(bound, window, t, lhs_now, values[rhs])
                }
            };
        }
    }

    fn commit(&mut self, t: Time) {
        for (i, op) in self.ops.iter().enumerate() {
            match (op, &mut self.states[i]) {
                (Op::Pre(c), NodeState::Pre { prev }) => *prev = self.values[*c],
                (Op::Since { bound, lhs, rhs }, NodeState::Since { window }) => {
                    let lhs_now = lhs.is_none_or(|l| self.values[l]);
                    since_update(*bound, window, t, lhs_now, self.values[*rhs]);
                }
                _ => {}
            }
        }
        self.last_time = Some(t);
        self.steps += 1;
    }

    /// Consumes one record and returns the verdict for the prefix ending at it.
    /// On error the monitor state is left unchanged.
    pub fn step(&mut self, record: &Record) -> Result<Verdict, MonitorError> {
        self.check(record)?;
        let mut values = std::mem::take(&mut self.values);
        self.eval(record, &mut values);
        self.values = values;
        self.commit(record.time);
        Ok(Verdict {
            time: record.time,
            value: *self.values.last().expect("non-empty formula"),
        })
    }

    /// The verdict `step` would return for `record`, without consuming it.
    pub fn peek(&self, record: &Record) -> Result<bool, MonitorError> {
        self.check(record)?;
        let mut values = vec![false; self.ops.len()];
        self.eval(record, &mut values);
        Ok(*values.last().expect("non-empty formula"))
    }

    /// Runs the monitor over every record, stopping at the first error.
    pub fn run<'a>(
        &mut self,
        records: impl IntoIterator<Item = &'a Record>,
    ) -> Result<Vec<Verdict>, MonitorError> {
        records.into_iter().map(|r| self.step(r)).collect()
    }
}

fn since_value(bound: Bound, window: &VecDeque<Time>, t: Time, lhs: bool, rhs: bool) -> bool {
    if rhs && bound.lo == 0 {
        return true;
    }
    if !lhs {
        return false;
    }
    for &k in window {
        if bound.hi.is_some_and(|hi| t - k > hi) {
            continue;
        }
        return t - k >= bound.lo;
    }
    false
}

fn since_update(bound: Bound, window: &mut VecDeque<Time>, t: Time, lhs: bool, rhs: bool) {
    if !lhs {
        window.clear();
    }
    match bound.hi {
        None => {
            // The oldest candidate dominates every later one.
            if rhs && window.is_empty() {
                window.push_back(t);
            }
        }
        Some(hi) => {
            if rhs {
                window.push_back(t);
            }
            while window.front().is_some_and(|&k| t - k > hi) {
                window.pop_front();
            }
            while window.len() >= 2 && t - window[1] >= bound.lo {
                window.pop_front();
            }
        }
    }
}

fn compile(f: &Formula, atoms: &[String], ops: &mut Vec<Op>) -> usize {
    let op = match f {
        Formula::Const(b) => Op::Const(*b),
        Formula::Atom(a) => Op::Atom(atoms.binary_search(a).expect("atom collected")),
        Formula::Not(g) => Op::Not(compile(g, atoms, ops)),
        Formula::And(l, r) => {
            let l = compile(l, atoms, ops);
            Op::And(l, compile(r, atoms, ops))
        }
        Formula::Or(l, r) => {
            let l = compile(l, atoms, ops);
            Op::Or(l, compile(r, atoms, ops))
        }
        Formula::Implies(l, r) => {
            let l = compile(l, atoms, ops);
            Op::Implies(l, compile(r, atoms, ops))
        }
        Formula::Pre(g) => Op::Pre(compile(g, atoms, ops)),
        Formula::Since(bound, l, r) => {
            let l = compile(l, atoms, ops);
            Op::Since {
                bound: *bound,
                lhs: Some(l),
                rhs: compile(r, atoms, ops),
            }
        }
        Formula::Once(bound, g) => Op::Since {
            bound: *bound,
            lhs: None,
            rhs: compile(g, atoms, ops),
        },
        Formula::Historically(bound, g) => {
            let inner = compile(g, atoms, ops);
            ops.push(Op::Not(inner));
            let negated = ops.len() - 1;
            ops.push(Op::Since {
                bound: *bound,
                lhs: None,
                rhs: negated,
            });
            Op::Not(ops.len() - 1)
        }
    };
    ops.push(op);
    ops.len() - 1
}
