//! The 30-bus SCOPF at half demand with the twelve-outage contingency list,
//! printing the active, reactive and voltage tables.
//!
//! ```text
//! cargo run --release --example scopf_case30 -- [uniform|optimize] [base|sum]
//! ```

use scopf::casefile::{parse_contingencies, parse_matpower, write_tables, TableLayout};
use scopf::nlp::{assemble, solve_report, AlphaPolicy, ObjectiveKind, ScopfProblem, SolverOptions};

fn main() -> scopf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let alpha = match args.first().map(String::as_str) {
        Some("uniform") => AlphaPolicy::Uniform,
        _ => AlphaPolicy::Optimize,
    };
    let objective = match args.get(1).map(String::as_str) {
        Some("base") => ObjectiveKind::BaseCase,
        _ => ObjectiveKind::ScenarioSum,
    };
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let doc = parse_matpower(&std::fs::read_to_string(format!("{dir}/case30.m"))?)?;
    let list = parse_contingencies(&std::fs::read_to_string(format!("{dir}/case30_table1.cont"))?)?;
    let network = doc.to_network(0.5)?;
    let problem = ScopfProblem::new(network, &list.entries)?
        .with_alpha(alpha)
        .with_objective(objective);
    let instance = assemble(&problem)?;
    println!("{} variables, {} equality rows, {} line rows", instance.n_vars(), instance.n_eq(), instance.n_ineq());
    let out = solve_report(&instance, &SolverOptions::default())?;
    let s = &out.solution;
    let base = problem.base_cost(s);
    println!(
        "objective {:.4} $/h (base dispatch {:.4}), converged {}, {} iterations, {:.2} s",
        s.objective, base, s.stats.converged, s.stats.iterations, s.stats.seconds
    );
    for st in &s.stats.stages {
        println!("  h={:<4} iterations {:>3} objective {:.4} exact gap {:.3e}", st.h, st.iterations, st.objective, st.exact_gap);
    }
    println!(
        "audit: hard {:.2e}, coupling {:.3e} (bound {:.3e}), pass {}",
        out.audit.max_hard(),
        out.audit.max_coupling(),
        out.curve_bound,
        out.audit.pass
    );
    for (name, layout) in [("active", TableLayout::Active), ("reactive", TableLayout::Reactive), ("voltage", TableLayout::Voltage)] {
        println!("\n{name}\n{}", write_tables(s, &problem.network, layout));
    }
    Ok(())
}
