mod common;

use common::{bus, case30, line, unit};
use scopf::grid::{BusKind, Contingency, CostPolynomial, Network};
use scopf::nlp::{assemble, solve, AlphaPolicy, ScopfProblem, SolverOptions};
use scopf::powerflow::audit_solution;

/// Lossless two-bus grid: G1 and G3 at the reference bus, G2 and the load at
/// bus 2. Losing G3 leaves G1 and G2 to share the shortfall equally.
fn toy() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Reference, 0.0, 0.0), bus(2, BusKind::Pq, 1.5, 0.0)],
        vec![line(1, 2, 0.0, 0.1, 0.0)],
        vec![unit(1, 0.9, 10.0, 5.0), unit(2, 2.0, 30.0, 5.0), unit(1, 1.0, 12.0, 5.0)],
    )
    .unwrap()
}

// Optimum of the reduced problem in (p1, p3) found by grid search and
// Nelder-Mead, with the response solved by bisection on Δ through the
// inverse surrogate curve.
const TOY_OBJECTIVE: f64 = 57.228_858_940_972_33;
const TOY_P1: f64 = 0.428_181_815_1;
const TOY_P3: f64 = 1.0;
const TOY_DELTA: f64 = 1.056_213_177_8;

#[test]
fn two_bus_matches_grid_search() {
    let problem = ScopfProblem::new(toy(), &[Contingency::GeneratorOutage(2)])
        .unwrap()
        .with_alpha(AlphaPolicy::Uniform);
    let sol = solve(&assemble(&problem).unwrap(), &SolverOptions::default()).unwrap();
    assert!(sol.stats.converged);
    assert!((sol.objective - TOY_OBJECTIVE).abs() < 1e-4, "{}", sol.objective);
    let base = &sol.scenarios[0].state;
    let post = &sol.scenarios[1].state;
    assert!((base.pg[0] - TOY_P1).abs() < 1e-3, "{:?}", base.pg);
    assert!((base.pg[2] - TOY_P3).abs() < 1e-3, "{:?}", base.pg);
    assert!((post.delta - TOY_DELTA).abs() < 1e-3, "{}", post.delta);
    // G1 saturates after the outage.
    assert!(post.pg[0] > 0.9 - 1e-5 && post.pg[0] <= 0.9 + 1e-9, "{}", post.pg[0]);
    assert_eq!((post.pg[2], post.qg[2]), (0.0, 0.0));
    assert!(audit_solution(&problem, &sol, 1e-6, 1e-1).max_hard() <= 1e-6);
}

fn scaled(net: &Network, factor: f64) -> Network {
    let mut net = net.clone();
    for g in &mut net.generators {
        g.cost = CostPolynomial::new(g.cost.coeffs.iter().map(|c| c * factor).collect()).unwrap();
    }
    net
}

#[test]
fn cost_scaling_scales_objective_only() {
    let net = case30(0.5);
    let opts = SolverOptions::default();
    let a = solve(&assemble(&ScopfProblem::new(net.clone(), &[]).unwrap()).unwrap(), &opts).unwrap();
    let b = solve(&assemble(&ScopfProblem::new(scaled(&net, 10.0), &[]).unwrap()).unwrap(), &opts).unwrap();
    assert!(a.stats.converged && b.stats.converged);
    assert!((b.objective / a.objective - 10.0).abs() < 1e-5, "{} {}", a.objective, b.objective);
    for (x, y) in a.scenarios[0].state.pg.iter().zip(&b.scenarios[0].state.pg) {
        assert!((x - y).abs() < 1e-4, "{x} {y}");
    }
}
