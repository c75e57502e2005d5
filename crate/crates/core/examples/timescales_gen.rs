//! Generates a trace for every timescales family at scale 10 and confirms the
//! family formula holds on each record of the satisfying traces.
//!
//! Run with `cargo run --release --example timescales_gen [length]`.

use rvc::mtl::Monitor;
use rvc::timescales::{generate_trace, list_families, make_formula, GenMode, GenSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let length: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    for family in list_families().into_iter().filter(|f| f.scale == 10) {
        let formula = make_formula(family);
        let trace = generate_trace(&GenSpec {
            family,
            length,
            seed: 7,
            mode: GenMode::Satisfying,
        });
        let mut monitor = Monitor::new(formula.clone(), true);
        let violations = monitor.run(trace.iter())?.iter().filter(|v| !v.value).count();
        println!("{:<16} {length} records, {violations} violations   {formula}", family.to_string());
    }
    Ok(())
}
