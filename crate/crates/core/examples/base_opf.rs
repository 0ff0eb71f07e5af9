//! Base-case AC OPF on the 30-bus case at full and half demand.
//!
//! ```text
//! cargo run --release --example base_opf
//! ```

use scopf::casefile::parse_matpower;
use scopf::nlp::{assemble, solve_report, ScopfProblem, SolverOptions};

fn main() -> scopf::Result<()> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case30.m"))?;
    let doc = parse_matpower(&text)?;
    for scale in [1.0, 0.5] {
        let problem = ScopfProblem::new(doc.to_network(scale)?, &[])?;
        let instance = assemble(&problem)?;
        let out = solve_report(&instance, &SolverOptions::default())?;
        let s = &out.solution;
        println!(
            "demand x{scale}: cost {:.4} $/h, converged {}, {} iterations, {:.3} s, max violation {:.2e}",
            s.objective, s.stats.converged, s.stats.iterations, s.stats.seconds, out.audit.max_hard()
        );
        let p: Vec<String> = s.scenarios[0].state.pg.iter().map(|p| format!("{p:.4}")).collect();
        println!("  dispatch (pu): {}", p.join(" "));
    }
    Ok(())
}
