//! Writes the big-M mixed-integer form of the 30-bus response constraints as
//! an LP file and checks that it parses back.

use scopf::casefile::{parse_contingencies, parse_matpower};
use scopf::milp::{export_bigm_milp, parse_lp, BigMConfig};
use scopf::nlp::ScopfProblem;

fn main() -> scopf::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let doc = parse_matpower(&std::fs::read_to_string(format!("{dir}/case30.m"))?)?;
    let list = parse_contingencies(&std::fs::read_to_string(format!("{dir}/case30_table1.cont"))?)?;
    let problem = ScopfProblem::new(doc.to_network(0.5)?, &list.entries)?;
    let cfg = BigMConfig::for_problem(&problem);
    let text = export_bigm_milp(&problem, &cfg)?;
    let model = parse_lp(&text)?;
    println!("{} rows, {} binaries, {} variables", model.rows.len(), model.binaries.len(), model.variables().len());
    let path = std::env::args().nth(1).unwrap_or_else(|| "case30_bigm.lp".into());
    std::fs::write(&path, text)?;
    println!("wrote {path}");
    Ok(())
}
