//! Parses a past-time formula, monitors a small trace and checks every verdict
//! against the brute-force evaluator.
//!
//! Run with `cargo run --example monitor_trace`.

use rvc::mtl::{oracle_eval, parse, Monitor};
use rvc::trace::{encode_verdict, Record, Trace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // "Every grant was preceded by a request within the last 5 time units."
    let formula = parse("grant -> once[0:5] request")?;
    let trace = Trace::from_records(vec![
        Record::new(0).with("request", true).with("grant", false),
        Record::new(3).with("request", false).with("grant", true),
        Record::new(7).with("request", false).with("grant", false),
        Record::new(12).with("request", false).with("grant", true),
    ])?;

    let mut monitor = Monitor::new(formula.clone(), true);
    let verdicts = monitor.run(trace.iter())?;
    for v in &verdicts {
        println!("{}", encode_verdict(v));
    }
    assert_eq!(verdicts, oracle_eval(&formula, &trace)?);
    println!("formula: {formula}");
    Ok(())
}
