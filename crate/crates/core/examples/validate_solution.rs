//! Round-trips a SCOPF solution through its JSON document and audits it
//! against the exact piecewise response model.

use scopf::casefile::{parse_contingencies, parse_matpower, SolutionDocument};
use scopf::curves::curve_gap_bound;
use scopf::nlp::{assemble, solve, ScopfProblem, SolverOptions};
use scopf::powerflow::audit_solution;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let doc = parse_matpower(&std::fs::read_to_string(format!("{dir}/case30.m"))?)?;
    let list = parse_contingencies(&std::fs::read_to_string(format!("{dir}/case30_table1.cont"))?)?;
    let problem = ScopfProblem::new(doc.to_network(0.5)?, &list.entries)?;
    let solution = solve(&assemble(&problem)?, &SolverOptions::default())?;

    let json = serde_json::to_string_pretty(&SolutionDocument::from_solution(&solution))?;
    let reread: SolutionDocument = serde_json::from_str(&json)?;
    let restored = reread.into_solution(&problem.network, &problem.contingencies())?;

    let bound = curve_gap_bound(&problem.active_curve)?.max(curve_gap_bound(&problem.reactive_curve)?);
    let report = audit_solution(&problem, &restored, 1e-6, bound);
    for (name, worst, tol) in report.families() {
        println!("{name:<18} {:.3e} (tol {tol:.1e}) scenario {} element {}", worst.value, worst.scenario, worst.element);
    }
    println!("{}", if report.pass { "feasible" } else { "infeasible" });
    Ok(())
}
