#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use scopf::casefile::{parse_contingencies, parse_matpower, CaseDocument};
use scopf::grid::{Branch, Bus, BusKind, Contingency, CostPolynomial, Generator, Network};
use scopf::curves::SigmoidKind;
use scopf::nlp::{assemble, NlpInstance, RowFamily, ScopfProblem};
use scopf::sparse::Triplets;

pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

pub fn case30_text() -> String {
    std::fs::read_to_string(format!("{DATA}/case30.m")).unwrap()
}

pub fn case30_doc() -> CaseDocument {
    parse_matpower(&case30_text()).unwrap()
}

pub fn case30(scale: f64) -> Network {
    case30_doc().to_network(scale).unwrap()
}

pub fn table1() -> Vec<Contingency> {
    parse_contingencies(&std::fs::read_to_string(format!("{DATA}/case30_table1.cont")).unwrap())
        .unwrap()
        .entries
}

pub fn bus(id: usize, kind: BusKind, pd: f64, qd: f64) -> Bus {
    Bus {
        id,
        kind,
        base_kv: 135.0,
        vmin: 0.9,
        vmax: 1.1,
        vm: 1.0,
        va: 0.0,
        demand_p: pd,
        demand_q: qd,
        shunt_g: 0.0,
        shunt_b: 0.0,
    }
}

pub fn line(f: usize, t: usize, r: f64, x: f64, b: f64) -> Branch {
    Branch {
        from_bus: f,
        to_bus: t,
        r,
        x,
        b_charging: b,
        tap: 1.0,
        shift: 0.0,
        s_max: f64::INFINITY,
        in_service: true,
    }
}

/// Generator with cost `c1·p + c2·p²` in pu.
pub fn unit(bus: usize, pmax: f64, c1: f64, c2: f64) -> Generator {
    Generator {
        bus,
        pg: 0.0,
        qg: 0.0,
        vg: 1.0,
        pmin: 0.0,
        pmax,
        qmin: -2.0,
        qmax: 2.0,
        cost: CostPolynomial::new(vec![0.0, c1, c2]).unwrap(),
        in_service: true,
    }
}

/// Meshed synthetic grid: a ring with chords every third bus, a generator on
/// every `gen_every`-th bus, uniform load.
pub fn synthetic(n_bus: usize, gen_every: usize) -> Network {
    let buses = (1..=n_bus)
        .map(|i| bus(i, if i == 1 { BusKind::Reference } else { BusKind::Pq }, 0.2, 0.05))
        .collect();
    let mut branches = Vec::new();
    for i in 1..=n_bus {
        let mut l = line(i, i % n_bus + 1, 0.01, 0.05, 0.02);
        l.s_max = 5.0;
        branches.push(l);
    }
    for i in (1..=n_bus).step_by(3) {
        let j = (i + 6) % n_bus + 1;
        if j != i {
            branches.push(line(i, j, 0.02, 0.1, 0.01));
        }
    }
    let gens = (1..=n_bus)
        .step_by(gen_every)
        .enumerate()
        .map(|(k, b)| unit(b, 1.0, 10.0 + k as f64 % 7.0, 2.0))
        .collect();
    Network::new(100.0, buses, branches, gens).unwrap()
}

/// Uniform random point strictly inside every finite box, with a margin of
/// `margin` of the box width; free angles fall in ±0.3 rad.
pub fn random_interior(instance: &NlpInstance, rng: &mut StdRng, margin: f64) -> Vec<f64> {
    instance
        .xmin
        .iter()
        .zip(&instance.xmax)
        .map(|(&lo, &hi)| {
            if lo == hi {
                lo
            } else if lo.is_finite() && hi.is_finite() {
                let u: f64 = rng.gen_range(margin..1.0 - margin);
                lo + u * (hi - lo)
            } else {
                rng.gen_range(-0.3..0.3)
            }
        })
        .collect()
}

fn dense(t: &Triplets, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; cols]; rows];
    for (r, c, v) in t.iter() {
        m[r][c] += v;
    }
    m
}

/// Largest relative error `|a − fd| / max(1, |a|)` per constraint family.
pub type FamilyErrors = BTreeMap<&'static str, f64>;

fn family_name(f: RowFamily) -> &'static str {
    match f {
        RowFamily::ActiveBalance => "active balance",
        RowFamily::ReactiveBalance => "reactive balance",
        RowFamily::ActiveCoupling => "active coupling",
        RowFamily::ReactiveCoupling => "reactive coupling",
        RowFamily::Participation => "participation",
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}

/// Central differences with step `1e-6·max(1, |x_j|)` on every column of
/// the objective gradient, both Jacobians, and the Lagrangian Hessian (with
/// random multipliers), at `x`.
pub fn check_point(instance: &NlpInstance, x: &[f64], rng: &mut StdRng, errs: &mut FamilyErrors) {
    let n = instance.n_vars();
    let (_, grad) = instance.objective(x);
    let ce = instance.constraints(x).unwrap();
    let (neq, nin) = (ce.eq.len(), ce.ineq.len());
    let jeq = dense(&ce.jac_eq, neq, n);
    let jin = dense(&ce.jac_ineq, nin, n);
    let lam: Vec<f64> = (0..neq).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mu: Vec<f64> = (0..nin).map(|_| rng.gen_range(0.0..1.0)).collect();
    let hess = dense(&instance.lagrangian_hessian(x, 1.0, &lam, &mu).unwrap(), n, n);
    let lag_grad = |x: &[f64]| -> Vec<f64> {
        let (_, mut g) = instance.objective(x);
        let ce = instance.constraints(x).unwrap();
        for (r, c, v) in ce.jac_eq.iter() {
            g[c] += lam[r] * v;
        }
        for (r, c, v) in ce.jac_ineq.iter() {
            g[c] += mu[r] * v;
        }
        g
    };
    let families: Vec<&'static str> = (0..neq).map(|r| family_name(instance.eq_family(r))).collect();
    let mut xp = x.to_vec();
    for j in 0..n {
        if instance.xmin[j] == instance.xmax[j] {
            continue;
        }
        let step = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let (fp, _) = instance.objective(&xp);
        let cp = instance.constraints(&xp).unwrap();
        let lp = lag_grad(&xp);
        xp[j] = x[j] - step;
        let (fm, _) = instance.objective(&xp);
        let cm = instance.constraints(&xp).unwrap();
        let lm = lag_grad(&xp);
        xp[j] = x[j];
        let e = errs.entry("objective").or_insert(0.0);
        *e = e.max(rel(grad[j], (fp - fm) / (2.0 * step)));
        for r in 0..neq {
            let e = errs.entry(families[r]).or_insert(0.0);
            *e = e.max(rel(jeq[r][j], (cp.eq[r] - cm.eq[r]) / (2.0 * step)));
        }
        for r in 0..nin {
            let e = errs.entry("line limit").or_insert(0.0);
            *e = e.max(rel(jin[r][j], (cp.ineq[r] - cm.ineq[r]) / (2.0 * step)));
        }
        for i in 0..n {
            let e = errs.entry("lagrangian hessian").or_insert(0.0);
            *e = e.max(rel(hess[i][j], (lp[i] - lm[i]) / (2.0 * step)));
        }
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Runs 100 random interior points spread over every sigmoid and `k ∈ {1, 2}`.
pub fn derivative_errors() -> FamilyErrors {
    let base = ScopfProblem::new(case30(0.5), &[Contingency::GeneratorOutage(4), Contingency::BranchOutage(1)]).unwrap();
    let mut errs = FamilyErrors::new();
    let mut r = rng(7);
    for kind in SigmoidKind::ALL {
        for k in [1, 2] {
            let problem = base.clone().with_curves(kind, 50.0, k).unwrap();
            let instance = assemble(&problem).unwrap();
            for _ in 0..10 {
                let x = random_interior(&instance, &mut r, 0.1);
                check_point(&instance, &x, &mut r, &mut errs);
            }
        }
    }
    errs
}

