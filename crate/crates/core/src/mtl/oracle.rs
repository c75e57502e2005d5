//! Brute-force offline evaluation, a literal unfolding of the semantics.
//! Quadratic in trace length; kept deliberately independent of the monitor.

use thiserror::Error;

use super::Formula;
use crate::trace::{Trace, Verdict};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("record {index} is missing atom {atom}")]
pub struct OracleError {
    pub index: usize,
    pub atom: String,
}

/// Verdict at every index of `trace`. Every atom of `f` must be present in
/// every record.
pub fn oracle_eval(f: &Formula, trace: &Trace) -> Result<Vec<Verdict>, OracleError> {
    for (index, r) in trace.iter().enumerate() {
        for atom in f.free_atoms() {
            if !r.fields.contains_key(&atom) {
                return Err(OracleError { index, atom });
            }
        }
    }
    let sat = satisfaction(f, trace);
    Ok(trace
        .iter()
        .zip(sat)
        .map(|(r, value)| Verdict {
            time: r.time,
            value,
        })
        .collect())
}

/// Truth value of `f` at every index.
fn satisfaction(f: &Formula, trace: &Trace) -> Vec<bool> {
    let n = trace.len();
    let times: Vec<u64> = trace.iter().map(|r| r.time).collect();
    match f {
        Formula::Const(b) => vec![*b; n],
        Formula::Atom(a) => trace.iter().map(|r| r.fields[a]).collect(),
        Formula::Not(g) => satisfaction(g, trace).into_iter().map(|v| !v).collect(),
        Formula::And(a, b) => zip_with(a, b, trace, |x, y| x && y),
        Formula::Or(a, b) => zip_with(a, b, trace, |x, y| x || y),
        Formula::Implies(a, b) => zip_with(a, b, trace, |x, y| !x || y),
        Formula::Pre(g) => {
            let inner = satisfaction(g, trace);
            (0..n).map(|i| i > 0 && inner[i - 1]).collect()
        }
        Formula::Since(bound, a, b) => {
            let lhs = satisfaction(a, trace);
            let rhs = satisfaction(b, trace);
            (0..n)
                .map(|i| {
                    (0..=i).any(|k| {
                        bound.contains(times[i] - times[k])
                            && rhs[k]
                            && (k + 1..=i).all(|j| lhs[j])
                    })
                })
                .collect()
        }
        Formula::Once(bound, g) => {
            let inner = satisfaction(g, trace);
            (0..n)
                .map(|i| (0..=i).any(|k| bound.contains(times[i] - times[k]) && inner[k]))
                .collect()
        }
        Formula::Historically(bound, g) => {
            let inner = satisfaction(g, trace);
            (0..n)
                .map(|i| (0..=i).all(|k| !bound.contains(times[i] - times[k]) || inner[k]))
                .collect()
        }
    }
}

fn zip_with(a: &Formula, b: &Formula, trace: &Trace, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    satisfaction(a, trace)
        .into_iter()
        .zip(satisfaction(b, trace))
        .map(|(x, y)| op(x, y))
        .collect()
}
