//! Timescales-style benchmark properties and trace generation.
//!
//! Ten absence/universality/recurrence/response patterns under global,
//! after-Q, before-R and between-Q-and-R scopes, each instantiated at metric
//! scales 10, 100 and 1000 over atoms `p`, `q`, `r`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mtl::{Bound, Formula, Monitor};
use crate::trace::{Record, Trace};

pub const SCALES: [u64; 3] = [10, 100, 1000];

pub const PROB_P: f64 = 0.5;
pub const PROB_Q: f64 = 0.1;
pub const PROB_R: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyName {
    AbsentAQ,
    AbsentBQR,
    AbsentBR,
    RecurGLB,
    RespondGLB,
    AlwaysAQ,
    AlwaysBR,
    AlwaysBQR,
    RecurBQR,
    RespondBQR,
}

impl FamilyName {
    /// Benchmark table order.
    pub const ALL: [FamilyName; 10] = [
        FamilyName::AbsentAQ,
        FamilyName::AbsentBQR,
        FamilyName::AbsentBR,
        FamilyName::RecurGLB,
        FamilyName::RespondGLB,
        FamilyName::AlwaysAQ,
        FamilyName::AlwaysBR,
        FamilyName::AlwaysBQR,
        FamilyName::RecurBQR,
        FamilyName::RespondBQR,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyName::AbsentAQ => "AbsentAQ",
            FamilyName::AbsentBQR => "AbsentBQR",
            FamilyName::AbsentBR => "AbsentBR",
            FamilyName::RecurGLB => "RecurGLB",
            FamilyName::RespondGLB => "RespondGLB",
            FamilyName::AlwaysAQ => "AlwaysAQ",
            FamilyName::AlwaysBR => "AlwaysBR",
            FamilyName::AlwaysBQR => "AlwaysBQR",
            FamilyName::RecurBQR => "RecurBQR",
            FamilyName::RespondBQR => "RespondBQR",
        }
    }
}

impl fmt::Display for FamilyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FamilyName::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown family `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Family {
    pub name: FamilyName,
    pub scale: u64,
}

impl Family {
    pub fn new(name: FamilyName, scale: u64) -> Family {
        Family { name, scale }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.name, self.scale)
    }
}

/// All 30 family/scale pairs in table order.
pub fn list_families() -> Vec<Family> {
    FamilyName::ALL
        .iter()
        .flat_map(|&name| SCALES.iter().map(move |&scale| Family { name, scale }))
        .collect()
}

pub fn make_formula(family: Family) -> Formula {
    use Formula as F;
    let s = family.scale;
    let (p, q, r) = (F::atom("p"), F::atom("q"), F::atom("r"));
    let within = Bound::closed(0, s);
    let q_and_not_r = || F::and(q.clone(), F::not(r.clone()));
    // (!r) since[bound] (q && !r): inside a Q..R scope opened within the bound
    let between = |b: Bound| F::since(b, F::not(r.clone()), q_and_not_r());
    match family.name {
        FamilyName::AbsentAQ => F::implies(F::once(within, q.clone()), F::not(p)),
        FamilyName::AbsentBR => F::implies(r, F::historically(within, F::not(p))),
        FamilyName::AbsentBQR => F::implies(between(within), F::not(p)),
        FamilyName::AlwaysAQ => F::implies(F::once(within, q.clone()), p),
        FamilyName::AlwaysBR => F::implies(r, F::historically(within, p)),
        FamilyName::AlwaysBQR => F::implies(between(within), p),
        FamilyName::RecurGLB => F::once(within, p),
        FamilyName::RecurBQR => F::implies(
            between(Bound::UNBOUNDED),
            F::once(within, F::or(p, q_and_not_r())),
        ),
        FamilyName::RespondGLB => F::not(F::since(Bound::at_least(s), F::not(p), q)),
        FamilyName::RespondBQR => F::not(F::since(
            Bound::at_least(s),
            F::and(F::not(p), F::not(r.clone())),
            q_and_not_r(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Every prefix satisfies the family formula.
    Satisfying,
    /// Independent Bernoulli draws for each atom.
    Random,
}

impl FromStr for GenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "satisfying" => Ok(GenMode::Satisfying),
            "random" => Ok(GenMode::Random),
            _ => Err(format!("unknown mode `{s}` (expected satisfying|random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSpec {
    pub family: Family,
    pub length: usize,
    pub seed: u64,
    pub mode: GenMode,
}

fn valuation(time: u64, p: bool, q: bool, r: bool) -> Record {
    Record::new(time).with("p", p).with("q", q).with("r", r)
}

/// Generates a trace with times `0..length` over atoms `p`, `q`, `r`.
///
/// In satisfying mode each random candidate record is checked against the
/// online monitor before it is appended; a violating candidate is repaired by
/// flipping `p`, then clearing `r`, then both, then the first satisfying
/// valuation in a fixed order.
pub fn generate_trace(spec: &GenSpec) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut monitor = match spec.mode {
        GenMode::Satisfying => Some(Monitor::new(make_formula(spec.family), true)),
        GenMode::Random => None,
    };
    let mut records = Vec::with_capacity(spec.length);
    for i in 0..spec.length as u64 {
        let p = rng.gen_bool(PROB_P);
        let q = rng.gen_bool(PROB_Q);
        let r = rng.gen_bool(PROB_R);
        let record = match monitor.as_mut() {
            None => valuation(i, p, q, r),
            Some(m) => {
                let repairs = [(p, q, r), (!p, q, r), (p, q, false), (!p, q, false)];
                let exhaustive = (0..8u8).map(|b| (b & 1 != 0, b & 2 != 0, b & 4 != 0));
                let chosen = repairs
                    .into_iter()
                    .chain(exhaustive)
                    .map(|(p, q, r)| valuation(i, p, q, r))
                    .find(|rec| m.peek(rec).expect("well-formed record"))
                    .unwrap_or_else(|| {
                        panic!("{}: no satisfying valuation at step {i}", spec.family)
                    });
                m.step(&chosen).expect("well-formed record");
                chosen
            }
        };
        records.push(record);
    }
    Trace::from_records(records).expect("times are increasing")
}

/// `<family><scale>-<seed>.jsonl`
pub fn trace_file_name(family: Family, seed: u64) -> String {
    format!("{family}-{seed}.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtl::{oracle_eval, parse};
    use crate::trace::encode_record;

    #[test]
    fn family_list_matches_table() {
        let fams = list_families();
        assert_eq!(fams.len(), 30);
        assert_eq!(fams[0], Family::new(FamilyName::AbsentAQ, 10));
        assert_eq!(fams[29], Family::new(FamilyName::RespondBQR, 1000));
        assert_eq!(fams[0].to_string(), "AbsentAQ10");
        assert_eq!(fams[29].to_string(), "RespondBQR1000");
    }

    #[test]
    fn formulas_match_text_table() {
        let table = [
            (FamilyName::AbsentAQ, "(once[0:S] q) -> !p"),
            (FamilyName::AbsentBR, "r -> (historically[0:S] !p)"),
            (FamilyName::AbsentBQR, "((!r) since[0:S] (q && !r)) -> !p"),
            (FamilyName::AlwaysAQ, "(once[0:S] q) -> p"),
            (FamilyName::AlwaysBR, "r -> (historically[0:S] p)"),
            (FamilyName::AlwaysBQR, "((!r) since[0:S] (q && !r)) -> p"),
            (FamilyName::RecurGLB, "once[0:S] p"),
            (
                FamilyName::RecurBQR,
                "((!r) since (q && !r)) -> once[0:S] (p || (q && !r))",
            ),
            (FamilyName::RespondGLB, "!((!p) since[S:*] q)"),
            (FamilyName::RespondBQR, "!(((!p) && (!r)) since[S:*] (q && !r))"),
        ];
        for (name, text) in table {
            for scale in SCALES {
                let expected = parse(&text.replace('S', &scale.to_string())).unwrap();
                assert_eq!(make_formula(Family::new(name, scale)), expected, "{name}{scale}");
            }
        }
    }

    #[test]
    fn spot_formulas() {
        assert_eq!(
            make_formula(Family::new(FamilyName::AbsentAQ, 10)),
            parse("(once[0:10] q) -> !p").unwrap()
        );
        assert_eq!(
            make_formula(Family::new(FamilyName::RecurGLB, 1000)),
            parse("once[0:1000] p").unwrap()
        );
        assert_eq!(
            make_formula(Family::new(FamilyName::RespondGLB, 100)),
            parse("!((!p) since[100:*] q)").unwrap()
        );
    }

    fn all_true(family: Family, trace: &Trace) -> bool {
        oracle_eval(&make_formula(family), trace)
            .unwrap()
            .iter()
            .all(|v| v.value)
    }

    #[test]
    fn recur_glb_satisfying() {
        let fam = Family::new(FamilyName::RecurGLB, 10);
        let spec = GenSpec {
            family: fam,
            length: 50,
            seed: 3,
            mode: GenMode::Satisfying,
        };
        let t = generate_trace(&spec);
        assert_eq!(t.len(), 50);
        // p within every window of width 10
        for (n, rec) in t.iter().enumerate() {
            let lo = n.saturating_sub(10);
            assert!(t.records()[lo..=n].iter().any(|r| r.get("p") == Some(true)), "at {}", rec.time);
        }
        assert!(all_true(fam, &t));
    }

    #[test]
    fn absent_aq_satisfying() {
        let fam = Family::new(FamilyName::AbsentAQ, 10);
        let spec = GenSpec {
            family: fam,
            length: 50,
            seed: 11,
            mode: GenMode::Satisfying,
        };
        let t = generate_trace(&spec);
        for n in 0..t.len() {
            let lo = n.saturating_sub(10);
            let recent_q = t.records()[lo..=n].iter().any(|r| r.get("q") == Some(true));
            if recent_q {
                assert_eq!(t.records()[n].get("p"), Some(false));
            }
        }
        assert!(all_true(fam, &t));
    }

    #[test]
    fn generation_is_deterministic() {
        for mode in [GenMode::Satisfying, GenMode::Random] {
            let spec = GenSpec {
                family: Family::new(FamilyName::RespondBQR, 10),
                length: 200,
                seed: 42,
                mode,
            };
            assert_eq!(generate_trace(&spec), generate_trace(&spec));
        }
    }

    #[test]
    fn generated_records_are_small() {
        let spec = GenSpec {
            family: Family::new(FamilyName::AlwaysBR, 100),
            length: 100,
            seed: 1,
            mode: GenMode::Random,
        };
        for r in &generate_trace(&spec) {
            assert_eq!(r.fields.len(), 3);
            assert!(encode_record(r, false).len() <= 32);
        }
    }

    #[test]
    fn file_naming() {
        assert_eq!(
            trace_file_name(Family::new(FamilyName::AbsentAQ, 10), 7),
            "AbsentAQ10-7.jsonl"
        );
    }
}
