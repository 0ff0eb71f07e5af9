//! Solves the 30-bus SCOPF once per sigmoid and prints the comparison table.

use scopf::casefile::{parse_contingencies, parse_matpower};
use scopf::curves::SigmoidKind;
use scopf::nlp::{compare_sigmoids, sigmoid_table_csv, ScopfProblem, SolverOptions};

fn main() -> scopf::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let doc = parse_matpower(&std::fs::read_to_string(format!("{dir}/case30.m"))?)?;
    let list = parse_contingencies(&std::fs::read_to_string(format!("{dir}/case30_table1.cont"))?)?;
    let problem = ScopfProblem::new(doc.to_network(0.5)?, &list.entries)?;
    let rows = compare_sigmoids(&problem, &SigmoidKind::ALL, &SolverOptions::default());
    print!("{}", sigmoid_table_csv(&rows));
    let objs: Vec<f64> = rows.iter().filter_map(|r| r.objective).collect();
    let (lo, hi) = objs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &o| (a.min(o), b.max(o)));
    println!("spread {:.4} $/h ({:.3}%)", hi - lo, 100.0 * (hi - lo) / lo);
    Ok(())
}
