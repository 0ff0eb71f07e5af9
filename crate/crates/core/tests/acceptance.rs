//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use common::{case30, case30_text, derivative_errors, synthetic, table1};
use rand::{Rng, SeedableRng};
use scopf::casefile::parse_matpower;
use scopf::curves::{
    default_sweep, exact_membership, exact_response_active, exact_response_logical, normalize,
    reactive_minmax_residual, reactive_regime, sample_curve_csv, smooth_curve_g, SigmoidKind, SmoothCurveParams,
};
use scopf::grid::Contingency;
use scopf::milp::{export_units, parse_lp, BigMConfig, ResponseUnit};
use scopf::nlp::{assemble, solve_report, AlphaPolicy, ScopfProblem, ScopfSolution, SolveOutcome, SolverOptions};
use scopf::powerflow::{max_mismatch, solve_contingency_response, PfOptions};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// Base OPF of case30 at half load, then SCOPF runs reused by several criteria.
struct Runs {
    base: SolveOutcome,
    base_seconds: f64,
    optimize: SolveOutcome,
    optimize_seconds: f64,
    uniform: SolveOutcome,
    sigmoids: Vec<(SigmoidKind, SolveOutcome)>,
    problem: ScopfProblem,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn run_all() -> Runs {
    let opts = SolverOptions::default();
    let base_problem = ScopfProblem::new(case30(0.5), &[]).unwrap();
    let (base, base_seconds) = timed(|| solve_report(&assemble(&base_problem).unwrap(), &opts).unwrap());
    let problem = ScopfProblem::new(case30(0.5), &table1()).unwrap();
    let (optimize, optimize_seconds) = timed(|| solve_report(&assemble(&problem).unwrap(), &opts).unwrap());
    let uniform_problem = problem.clone().with_alpha(AlphaPolicy::Uniform);
    let uniform = solve_report(&assemble(&uniform_problem).unwrap(), &opts).unwrap();
    let sigmoids = SigmoidKind::ALL
        .iter()
        .map(|&kind| {
            let p = problem.clone().with_curves(kind, 50.0, 1).unwrap();
            (kind, solve_report(&assemble(&p).unwrap(), &opts).unwrap())
        })
        .collect();
    Runs {
        base,
        base_seconds,
        optimize,
        optimize_seconds,
        uniform,
        sigmoids,
        problem,
    }
}

fn criterion1(r: &mut Report) {
    let (doc, secs) = timed(|| parse_matpower(&case30_text()).unwrap());
    let counts = (doc.bus.len(), doc.branch.len(), doc.gen.len());
    r.line(1, counts == (30, 41, 6) && secs < 1.0, format!("counts {counts:?}, {secs:.3} s"));
}

fn criterion2(r: &mut Report, runs: &Runs) {
    let b = &runs.base;
    let slots = table1().len() as f64;
    let total = slots * b.solution.objective;
    let rel = (total - 2847.8).abs() / 2847.8;
    let feas = b.audit.max_hard();
    let ok = b.solution.stats.converged && feas <= 1e-6 && rel <= 0.01 && runs.base_seconds < 10.0;
    r.line(
        2,
        ok,
        format!(
            "base {:.4} x {slots} = {total:.4} (rel {rel:.2e}), feasibility {feas:.1e}, {:.2} s",
            b.solution.objective, runs.base_seconds
        ),
    );
}

fn outed_units_zero(problem: &ScopfProblem, sol: &ScopfSolution) -> bool {
    problem.scenarios.iter().zip(&sol.scenarios).all(|(sc, s)| {
        (0..problem.network.n_gen())
            .filter(|&g| !sc.gen_in_service[g])
            .all(|g| s.state.pg[g] == 0.0 && s.state.qg[g] == 0.0)
    })
}

fn criterion3(r: &mut Report, runs: &Runs) {
    let reference = table1().len() as f64 * runs.base.solution.objective;
    let describe = |out: &SolveOutcome| {
        let obj = out.solution.objective;
        let increase = 100.0 * (obj - reference) / reference;
        let ok = out.solution.stats.converged
            && (obj - 3167.9).abs() / 3167.9 <= 0.02
            && (increase - 11.24).abs() <= 1.5
            && outed_units_zero(&runs.problem, &out.solution);
        (ok, format!("{obj:.4} (+{increase:.2}%)"))
    };
    let (ok, opt) = describe(&runs.optimize);
    let (_, uni) = describe(&runs.uniform);
    r.line(
        3,
        ok && runs.optimize_seconds < 300.0,
        format!("optimized alpha {opt} in {:.2} s; uniform alpha {uni}", runs.optimize_seconds),
    );
}

fn criterion4(r: &mut Report, runs: &Runs) {
    let objs: Vec<f64> = runs.sigmoids.iter().map(|(_, o)| o.solution.objective).collect();
    let all_converged = runs.sigmoids.iter().all(|(_, o)| o.solution.stats.converged);
    let lo = objs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = objs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    let listing: Vec<String> = runs.sigmoids.iter().map(|(k, o)| format!("{}={:.4}", k.name(), o.solution.objective)).collect();
    r.line(4, all_converged && spread <= 0.005, format!("{} spread {:.3}%", listing.join(" "), 100.0 * spread));
}

fn criterion5(r: &mut Report, runs: &Runs) {
    let mut worst_hard: f64 = 0.0;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut all: Vec<(String, &SolveOutcome)> = vec![("optimized".into(), &runs.optimize), ("uniform".into(), &runs.uniform)];
    all.extend(runs.sigmoids.iter().map(|(k, o)| (k.name().to_string(), o)));
    for (name, out) in all {
        let a = &out.audit;
        ok &= a.pass && a.tol <= 1e-6 && a.curve_tol == out.curve_bound;
        worst_hard = worst_hard.max(a.max_hard());
        lines.push(format!("{name} gap {:.2e}/{:.2e}", a.max_coupling(), out.curve_bound));
    }
    r.line(5, ok, format!("hard {worst_hard:.1e}; {}", lines.join(", ")));
}

fn criterion6(r: &mut Report) {
    let mut rng = rand::rngs::StdRng::seed_from_u64(6);
    let mut logical_mismatch = 0usize;
    for i in 0..1_000_000 {
        let pmin: f64 = rng.gen_range(-1.0..1.0);
        let pmax = pmin + rng.gen_range(0.0..2.0);
        let alpha: f64 = rng.gen_range(0.0..1.0);
        let p0 = rng.gen_range(pmin..=pmax);
        // Every eighth instance lands the desired output exactly on a limit.
        let delta = match i % 8 {
            0 if alpha > 0.0 => (pmax - p0) / alpha,
            1 if alpha > 0.0 => (pmin - p0) / alpha,
            2 => 0.0,
            _ => rng.gen_range(-3.0..3.0),
        };
        let a = exact_response_logical(p0, alpha, delta, pmin, pmax);
        let b = exact_response_active(p0, alpha, delta, pmin, pmax);
        if a.to_bits() != b.to_bits() {
            logical_mismatch += 1;
        }
    }

    let config = BigMConfig {
        delta_bound: 2.0,
        alpha_bound: 1.0,
    };
    let mut bigm_bad = 0usize;
    let mut bigm_cases = 0usize;
    for _ in 0..200 {
        let pmin: f64 = rng.gen_range(0.0..0.5);
        let unit = ResponseUnit {
            scenario: 1,
            gen: 0,
            bus: 0,
            pmin,
            pmax: pmin + rng.gen_range(0.2..1.0),
            qmin: -0.3,
            qmax: 0.5,
            vmin: 0.95,
            vmax: 1.05,
            alpha: rng.gen_range(0.1..1.0),
        };
        let model = parse_lp(&export_units(&[unit], &config).unwrap()).unwrap();
        for _ in 0..10 {
            let p0 = rng.gen_range(unit.pmin..=unit.pmax);
            let delta = rng.gen_range(-2.0..2.0);
            bigm_cases += 1;
            let clip = exact_response_active(p0, unit.alpha, delta, unit.pmin, unit.pmax);
            let y = normalize(p0 + unit.alpha * delta, unit.pmin, unit.pmax).unwrap();
            let mut regions = 0;
            for code in 0..4u8 {
                let vals: BTreeMap<String, f64> = [
                    ("p0_g0", p0),
                    ("d_c1", delta),
                    ("xpp_c1_g0", f64::from(code & 1)),
                    ("xpm_c1_g0", f64::from(code >> 1)),
                    ("xqp_c1_g0", 1.0),
                    ("xqm_c1_g0", 1.0),
                    ("q_c1_g0", 0.0),
                    ("v0_b0", 1.0),
                    ("v_c1_b0", 1.0),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
                if let Some((lo, hi)) = model.interval(&vals, "p_c1_g0", 1e-12) {
                    regions += 1;
                    let x = normalize(lo, unit.pmin, unit.pmax).unwrap();
                    if (hi - lo).abs() > 1e-9 || (lo - clip).abs() > 1e-9 || !exact_membership(FRAC_PI_4, x, y, 1e-9) {
                        bigm_bad += 1;
                    }
                }
            }
            if regions == 0 {
                bigm_bad += 1;
            }
        }
    }

    let mut reactive_bad = 0usize;
    for i in 0..100_000 {
        let qmin: f64 = rng.gen_range(-1.0..0.0);
        let qmax = qmin + rng.gen_range(0.01..2.0);
        let (q, dv) = match i % 3 {
            0 => (rng.gen_range(qmin..qmax), 0.0),
            1 => (qmax, rng.gen_range(0.0..0.1)),
            _ => (qmin, -rng.gen_range(0.0..0.1)),
        };
        let (_, valid) = reactive_regime(q, qmin, qmax, dv, 0.0);
        if !valid || reactive_minmax_residual(q, qmin, qmax, dv) != (0.0, 0.0) {
            reactive_bad += 1;
        }
    }
    r.line(
        6,
        logical_mismatch == 0 && bigm_bad == 0 && reactive_bad == 0,
        format!(
            "logical vs min-max mismatches {logical_mismatch}/1000000, big-M {bigm_bad}/{bigm_cases}, reactive residuals {reactive_bad}/100000"
        ),
    );
}

fn criterion7(r: &mut Report) {
    let errs = derivative_errors();
    let worst = errs.values().copied().fold(0.0, f64::max);
    let listing: Vec<String> = errs.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    r.line(7, errs.len() == 8 && worst <= 1e-6, listing.join(", "));
}

fn grid(n: usize, t_max: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -t_max + 2.0 * t_max * i as f64 / (n - 1) as f64)
}

fn criterion8(r: &mut Report) {
    let mut problems: Vec<String> = Vec::new();
    for kind in SigmoidKind::ALL {
        for theta in [FRAC_PI_4, 0.0] {
            for h in [1.0, 5.0, 10.0, 50.0, 100.0] {
                for k in 0..=3u32 {
                    let p = SmoothCurveParams::new(theta, kind, h, k).unwrap();
                    let tag = format!("{kind} theta={theta:.3} h={h} k={k}");
                    for t in grid(4001, 0.9999) {
                        let (a, _) = smooth_curve_g(&p, t).unwrap();
                        let (b, _) = smooth_curve_g(&p, -t).unwrap();
                        if (a + b).abs() > 1e-12 * a.abs().max(1.0) {
                            problems.push(format!("odd {tag} t={t}"));
                            break;
                        }
                    }
                    if k >= 1 {
                        let (_, d) = smooth_curve_g(&p, 0.0).unwrap();
                        if (d - theta.tan()).abs() > 1e-12 {
                            problems.push(format!("slope {tag}: {d}"));
                        }
                    }
                    // Magnitude keeps growing as t runs to the boundary.
                    let tail: Vec<f64> = (2..=12).map(|j| smooth_curve_g(&p, 1.0 - 10f64.powi(-j)).unwrap().0).collect();
                    if tail.windows(2).any(|w| !(w[1] > w[0])) {
                        problems.push(format!("tail {tag}: {tail:?}"));
                    }
                    for t in [1.0, -1.0, 1.5, f64::NAN] {
                        if smooth_curve_g(&p, t).is_ok() {
                            problems.push(format!("domain {tag} t={t}"));
                        }
                    }
                }
            }
            for h in 1..=100 {
                for k in 0..=3u32 {
                    let p = SmoothCurveParams::new(FRAC_PI_4, kind, f64::from(h), k).unwrap();
                    let mut prev = f64::NEG_INFINITY;
                    for t in grid(2001, 0.999) {
                        let (g, d) = smooth_curve_g(&p, t).unwrap();
                        if !(g > prev && d > 0.0) {
                            problems.push(format!("monotone {kind} h={h} k={k} t={t}"));
                            break;
                        }
                        prev = g;
                    }
                }
            }
        }
    }
    let sweep = default_sweep();
    for (name, params) in &sweep {
        if let Err(e) = sample_curve_csv(params, 2001, 0.999) {
            problems.push(format!("sweep {name}: {e}"));
        }
    }
    let detail = if problems.is_empty() {
        format!("oddness, origin slope, boundary growth, domain, monotonicity; {} sweep curves", sweep.len())
    } else {
        format!("{} issues, first: {}", problems.len(), problems[0])
    };
    r.line(8, problems.is_empty(), detail);
}

fn criterion9(r: &mut Report, runs: &Runs) {
    let problem = &runs.problem;
    let sol = &runs.optimize.solution;
    let base = &sol.scenarios[0].state;
    let net = &problem.network;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut switched = 0;
    for (c, sc) in problem.scenarios.iter().enumerate().skip(1) {
        match solve_contingency_response(net, base, sc, &sol.scenarios[c].alpha, &PfOptions::default()) {
            Ok(rep) => {
                let m = max_mismatch(sc, &rep.state);
                worst = worst.max(m);
                if m > 1e-8 {
                    bad.push(format!("scenario {c} mismatch {m:.1e}"));
                }
                for (g, gen) in net.generators.iter().enumerate() {
                    let Some(bus) = sc.gen_bus[g] else { continue };
                    let dv = base.vm[bus] - rep.state.vm[bus];
                    let (regime, valid) = reactive_regime(rep.state.qg[g], gen.qmin, gen.qmax, dv, 1e-8);
                    if dv.abs() > 1e-8 {
                        switched += 1;
                    }
                    if !valid {
                        bad.push(format!("scenario {c} gen {g} {regime:?}"));
                    }
                }
            }
            Err(e) => bad.push(format!("scenario {c}: {e}")),
        }
    }
    let detail = if bad.is_empty() {
        format!("{} scenarios, max mismatch {worst:.1e}, {switched} switched generator buses", problem.scenarios.len() - 1)
    } else {
        bad.join("; ")
    };
    r.line(9, bad.is_empty(), detail);
}

fn criterion10(r: &mut Report) {
    let mut rows = Vec::new();
    let mut ok = true;
    for (n_bus, outages) in [(118usize, 50usize), (300, 50)] {
        let net = synthetic(n_bus, 2);
        let mut list: Vec<Contingency> = (0..outages).map(Contingency::GeneratorOutage).collect();
        list.extend((0..outages).map(Contingency::BranchOutage));
        let ((nnz, vars), secs) = timed(|| {
            let problem = ScopfProblem::new(net.clone(), &list).unwrap();
            let inst = assemble(&problem).unwrap();
            let ce = inst.constraints(&inst.initial_point()).unwrap();
            let nnz = ce.jac_eq.len() + ce.jac_ineq.len();
            ok &= ce.eq.iter().chain(&ce.ineq).all(|v| v.is_finite());
            (nnz, inst.n_vars())
        });
        let size = (list.len() + 1) * (net.n_bus() + net.n_branch());
        rows.push((n_bus, nnz, vars, nnz as f64 / size as f64, secs));
    }
    let ratio = rows[1].3 / rows[0].3;
    ok &= (0.8..=1.25).contains(&ratio);
    let listing: Vec<String> = rows
        .iter()
        .map(|(n, nnz, vars, per, s)| format!("{n} buses: {vars} vars, {nnz} nnz ({per:.1} per scenario element), {s:.2} s"))
        .collect();
    r.line(10, ok, format!("{}; density ratio {ratio:.3}", listing.join("; ")));
}

fn main() {
    let mut r = Report { failed: 0 };
    criterion1(&mut r);
    let runs = run_all();
    criterion2(&mut r, &runs);
    criterion3(&mut r, &runs);
    criterion4(&mut r, &runs);
    criterion5(&mut r, &runs);
    criterion6(&mut r);
    criterion7(&mut r);
    criterion8(&mut r);
    criterion9(&mut r, &runs);
    criterion10(&mut r);
    if r.failed > 0 {
        println!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
