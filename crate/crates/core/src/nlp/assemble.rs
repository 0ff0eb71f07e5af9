use rayon::prelude::*;

use super::ipm::Nlp;
use super::layout::{Layout, ScenarioBlock};
use super::{AlphaPolicy, ObjectiveKind, ScenarioSolution, ScopfProblem, ScopfSolution};
use crate::curves::{smooth_coupling_residual_active, smooth_coupling_residual_reactive, SmoothCurveParams};
use crate::error::Result;
use crate::flow::{injection_hessian, injection_jacobian, injections, line_entries, squared_flow, VoltageIndex};
use crate::powerflow::{OperatingState, DEGENERATE_TOL};
use crate::sparse::Triplets;

/// Normalized coupling variables are kept this far inside (−1, 1).
pub const INTERIOR_GUARD: f64 = 1e-6;

/// Weight of the pull toward uniform participation when α is optimized.
/// Without it α is undetermined wherever Δ vanishes. Excluded from the
/// reported cost.
pub const ALPHA_TIE_BREAK: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
enum Coupling {
    Active { c: usize, g: usize },
    Reactive { c: usize, g: usize, bus: usize },
}

#[derive(Debug, Clone, Copy)]
struct LineLimit {
    c: usize,
    row: usize,
    cap2: f64,
}

/// Grouping of the equality rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowFamily {
    ActiveBalance,
    ReactiveBalance,
    ActiveCoupling,
    ReactiveCoupling,
    /// `Σ α = 1` per contingency when weights are optimized.
    Participation,
}

/// Residuals and sparse Jacobians of the nonlinear constraints. Variable
/// bounds (including the reference-angle pins and fixed outputs) are kept
/// separately in [`NlpInstance::xmin`] / [`NlpInstance::xmax`].
#[derive(Debug, Clone)]
pub struct ConstraintEval {
    /// Power balance per scenario (P rows then Q rows), couplings, then
    /// participation sums.
    pub eq: Vec<f64>,
    /// Squared line flows minus squared ratings, from end then to end.
    pub ineq: Vec<f64>,
    pub jac_eq: Triplets,
    pub jac_ineq: Triplets,
}

/// The flattened SCOPF program.
#[derive(Debug, Clone)]
pub struct NlpInstance<'a> {
    problem: &'a ScopfProblem,
    pub layout: Layout,
    pub xmin: Vec<f64>,
    pub xmax: Vec<f64>,
    active: SmoothCurveParams,
    reactive: SmoothCurveParams,
    couplings: Vec<Coupling>,
    alpha_rows: Vec<usize>,
    lines: Vec<LineLimit>,
    fixed_alpha: Vec<Vec<f64>>,
    optimize_alpha: bool,
}

/// Builds the flat program for `problem`.
pub fn assemble(problem: &ScopfProblem) -> Result<NlpInstance<'_>> {
    problem.validate()?;
    let net = &problem.network;
    let (ng, nb, nc) = (net.n_gen(), net.n_bus(), problem.scenarios.len());
    let optimize_alpha = problem.alpha_policy == AlphaPolicy::Optimize;
    let layout = Layout::new(ng, nb, nc, optimize_alpha);
    let mut xmin = vec![f64::NEG_INFINITY; layout.n_vars];
    let mut xmax = vec![f64::INFINITY; layout.n_vars];
    let fix = |i: usize, v: f64, lo: &mut Vec<f64>, hi: &mut Vec<f64>| {
        lo[i] = v;
        hi[i] = v;
    };
    let mut couplings = Vec::new();
    let mut alpha_rows = Vec::new();
    let mut lines = Vec::new();

    for (c, sc) in problem.scenarios.iter().enumerate() {
        let b = layout.blocks[c];
        for (g, gen) in net.generators.iter().enumerate() {
            let (ip, iq) = (b.p + g, b.q + g);
            if !sc.gen_in_service[g] {
                fix(ip, 0.0, &mut xmin, &mut xmax);
                fix(iq, 0.0, &mut xmin, &mut xmax);
                continue;
            }
            let p_free = gen.pmax - gen.pmin > DEGENERATE_TOL;
            let q_free = gen.qmax - gen.qmin > DEGENERATE_TOL;
            let (pe, qe) = if c > 0 {
                (
                    INTERIOR_GUARD * 0.5 * (gen.pmax - gen.pmin),
                    INTERIOR_GUARD * 0.5 * (gen.qmax - gen.qmin),
                )
            } else {
                (0.0, 0.0)
            };
            if p_free {
                xmin[ip] = gen.pmin + pe;
                xmax[ip] = gen.pmax - pe;
            } else {
                fix(ip, gen.pmin, &mut xmin, &mut xmax);
            }
            if q_free {
                xmin[iq] = gen.qmin + qe;
                xmax[iq] = gen.qmax - qe;
            } else {
                fix(iq, gen.qmin, &mut xmin, &mut xmax);
            }
            if c > 0 {
                if p_free {
                    couplings.push(Coupling::Active { c, g });
                }
                if q_free {
                    couplings.push(Coupling::Reactive {
                        c,
                        g,
                        bus: sc.gen_bus[g].unwrap(),
                    });
                }
            }
        }
        for (i, bus) in net.buses.iter().enumerate() {
            xmin[b.vm + i] = bus.vmin;
            xmax[b.vm + i] = bus.vmax;
            if sc.is_isolated(i) {
                fix(b.va + i, 0.0, &mut xmin, &mut xmax);
            }
        }
        let r = sc.reference_bus;
        fix(b.va + r, net.buses[r].va, &mut xmin, &mut xmax);
        if let Some(d) = b.delta {
            xmin[d] = -problem.delta_bound;
            xmax[d] = problem.delta_bound;
        }
        if let Some(a) = b.alpha {
            for g in 0..ng {
                if problem.responds(c, g) {
                    xmin[a + g] = 0.0;
                    xmax[a + g] = 1.0;
                } else {
                    fix(a + g, 0.0, &mut xmin, &mut xmax);
                }
            }
            alpha_rows.push(c);
        }
        for (row, &cap) in sc.line_limits.iter().enumerate() {
            if cap.is_finite() {
                lines.push(LineLimit { c, row, cap2: cap * cap });
            }
        }
    }
    let fixed_alpha = (0..nc).map(|c| problem.fixed_alpha(c)).collect();
    Ok(NlpInstance {
        problem,
        layout,
        xmin,
        xmax,
        active: problem.active_curve,
        reactive: problem.reactive_curve,
        couplings,
        alpha_rows,
        lines,
        fixed_alpha,
        optimize_alpha,
    })
}

struct ScenarioEval {
    eq: Vec<f64>,
    jac_eq: Vec<(usize, usize, f64)>,
    ineq: Vec<f64>,
    jac_ineq: Vec<(usize, usize, f64)>,
}

impl<'a> NlpInstance<'a> {
    pub fn problem(&self) -> &'a ScopfProblem {
        self.problem
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars
    }

    /// Number of nonlinear equality rows.
    pub fn n_eq(&self) -> usize {
        2 * self.layout.n_bus * self.layout.blocks.len() + self.couplings.len() + self.alpha_rows.len()
    }

    pub fn n_ineq(&self) -> usize {
        2 * self.lines.len()
    }

    pub fn n_couplings(&self) -> usize {
        self.couplings.len()
    }

    /// Which constraint family equality row `row` belongs to.
    pub fn eq_family(&self, row: usize) -> RowFamily {
        let nb = self.layout.n_bus;
        let balance = 2 * nb * self.layout.blocks.len();
        if row < balance {
            return if row % (2 * nb) < nb { RowFamily::ActiveBalance } else { RowFamily::ReactiveBalance };
        }
        match self.couplings.get(row - balance) {
            Some(Coupling::Active { .. }) => RowFamily::ActiveCoupling,
            Some(Coupling::Reactive { .. }) => RowFamily::ReactiveCoupling,
            None => RowFamily::Participation,
        }
    }

    /// Same program with both coupling curves sharpened to `h`.
    pub fn with_h(&self, h: f64) -> Self {
        let mut out = self.clone();
        out.active.h = h;
        out.reactive.h = h;
        out
    }

    /// Flat voltages, outputs at the middle of their bounds, `Δ = 0` and
    /// uniform participation.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars()];
        let net = &self.problem.network;
        for (c, b) in self.layout.blocks.iter().enumerate() {
            for g in 0..self.layout.n_gen {
                x[b.p + g] = 0.5 * (self.xmin[b.p + g] + self.xmax[b.p + g]);
                x[b.q + g] = 0.5 * (self.xmin[b.q + g] + self.xmax[b.q + g]);
            }
            for (i, bus) in net.buses.iter().enumerate() {
                x[b.vm + i] = 1.0f64.clamp(bus.vmin, bus.vmax);
                x[b.va + i] = if self.xmin[b.va + i] == self.xmax[b.va + i] { self.xmin[b.va + i] } else { 0.0 };
            }
            if let Some(a) = b.alpha {
                x[a..a + self.layout.n_gen].copy_from_slice(&self.fixed_alpha[c]);
            }
        }
        x
    }

    fn alpha_of(&self, x: &[f64], c: usize, g: usize) -> f64 {
        match self.layout.blocks[c].alpha {
            Some(a) => x[a + g],
            None => self.fixed_alpha[c][g],
        }
    }

    fn cost_scenarios(&self) -> usize {
        match self.problem.objective {
            ObjectiveKind::BaseCase => 1,
            ObjectiveKind::ScenarioSum => self.layout.blocks.len(),
        }
    }

    pub fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_vars()];
        let mut f = 0.0;
        let gens = &self.problem.network.generators;
        for c in 0..self.cost_scenarios() {
            let b = self.layout.blocks[c];
            for (g, gen) in gens.iter().enumerate() {
                if self.problem.scenarios[c].gen_in_service[g] {
                    let p = x[b.p + g];
                    f += gen.cost.eval(p);
                    grad[b.p + g] = gen.cost.derivative(p);
                }
            }
        }
        if self.optimize_alpha {
            for (c, b) in self.layout.blocks.iter().enumerate() {
                if let Some(a) = b.alpha {
                    for (g, &w) in self.fixed_alpha[c].iter().enumerate() {
                        let d = x[a + g] - w;
                        f += ALPHA_TIE_BREAK * d * d;
                        grad[a + g] = 2.0 * ALPHA_TIE_BREAK * d;
                    }
                }
            }
        }
        (f, grad)
    }

    fn scenario_eval(&self, c: usize, x: &[f64]) -> ScenarioEval {
        let sc = &self.problem.scenarios[c];
        let b = self.layout.blocks[c];
        let nb = self.layout.n_bus;
        let vm = &x[b.vm..b.vm + nb];
        let va = &x[b.va..b.va + nb];
        let (p, q) = injections(sc, vm, va);
        let ix = VoltageIndex { vm: b.vm, va: b.va };
        let (jp, jq) = injection_jacobian(sc, vm, va, ix);
        let mut eq: Vec<f64> = (0..nb).map(|i| -sc.demand()[i].re - p[i]).chain((0..nb).map(|i| -sc.demand()[i].im - q[i])).collect();
        let mut jac_eq = Vec::new();
        for i in 0..nb {
            jac_eq.extend(jp[i].iter().map(|&(v, d)| (i, v, -d)));
            jac_eq.extend(jq[i].iter().map(|&(v, d)| (nb + i, v, -d)));
        }
        for (g, bus) in sc.gen_bus.iter().enumerate() {
            if let Some(i) = *bus {
                eq[i] += x[b.p + g];
                eq[nb + i] += x[b.q + g];
                jac_eq.push((i, b.p + g, 1.0));
                jac_eq.push((nb + i, b.q + g, 1.0));
            }
        }
        let mut ineq = Vec::new();
        let mut jac_ineq = Vec::new();
        for (k, lim) in self.lines.iter().filter(|l| l.c == c).enumerate() {
            let (f, t) = sc.line_ends[lim.row];
            let (yff, yft, ytt, ytf) = line_entries(sc, lim.row);
            let from = squared_flow(yff, yft, vm[f], vm[t], va[f], va[t]);
            let to = squared_flow(ytt, ytf, vm[t], vm[f], va[t], va[f]);
            for (end, term, idx) in [
                (0, from, [b.va + f, b.va + t, b.vm + f, b.vm + t]),
                (1, to, [b.va + t, b.va + f, b.vm + t, b.vm + f]),
            ] {
                ineq.push(term.value - lim.cap2);
                jac_ineq.extend((0..4).map(|a| (2 * k + end, idx[a], term.grad[a])));
            }
        }
        ScenarioEval { eq, jac_eq, ineq, jac_ineq }
    }

    pub fn constraints(&self, x: &[f64]) -> Result<ConstraintEval> {
        let per: Vec<ScenarioEval> = (0..self.layout.blocks.len()).into_par_iter().map(|c| self.scenario_eval(c, x)).collect();
        let mut out = ConstraintEval {
            eq: Vec::with_capacity(self.n_eq()),
            ineq: Vec::with_capacity(self.n_ineq()),
            jac_eq: Triplets::new(),
            jac_ineq: Triplets::new(),
        };
        for s in per {
            let (r0, i0) = (out.eq.len(), out.ineq.len());
            out.eq.extend(s.eq);
            out.ineq.extend(s.ineq);
            for (r, v, d) in s.jac_eq {
                out.jac_eq.push(r0 + r, v, d);
            }
            for (r, v, d) in s.jac_ineq {
                out.jac_ineq.push(i0 + r, v, d);
            }
        }
        let net = &self.problem.network;
        let base = self.layout.blocks[0];
        for cp in &self.couplings {
            let row = out.eq.len();
            match *cp {
                Coupling::Active { c, g } => {
                    let b = self.layout.blocks[c];
                    let gen = &net.generators[g];
                    let d = b.delta.unwrap();
                    let alpha = self.alpha_of(x, c, g);
                    let r = smooth_coupling_residual_active(x[b.p + g], x[base.p + g], alpha, x[d], gen.pmin, gen.pmax, &self.active)?;
                    out.eq.push(r.residual);
                    out.jac_eq.push(row, b.p + g, r.grad[0]);
                    out.jac_eq.push(row, base.p + g, r.grad[1]);
                    if let Some(a) = b.alpha {
                        out.jac_eq.push(row, a + g, r.grad[2]);
                    }
                    out.jac_eq.push(row, d, r.grad[3]);
                }
                Coupling::Reactive { c, g, bus } => {
                    let b = self.layout.blocks[c];
                    let gen = &net.generators[g];
                    let r = smooth_coupling_residual_reactive(x[b.q + g], gen.qmin, gen.qmax, x[base.vm + bus], x[b.vm + bus], &self.reactive)?;
                    out.eq.push(r.residual);
                    out.jac_eq.push(row, b.q + g, r.grad[0]);
                    out.jac_eq.push(row, base.vm + bus, r.grad[1]);
                    out.jac_eq.push(row, b.vm + bus, r.grad[2]);
                }
            }
        }
        for &c in &self.alpha_rows {
            let row = out.eq.len();
            let a = self.layout.blocks[c].alpha.unwrap();
            out.eq.push((0..self.layout.n_gen).map(|g| x[a + g]).sum::<f64>() - 1.0);
            for g in 0..self.layout.n_gen {
                out.jac_eq.push(row, a + g, 1.0);
            }
        }
        Ok(out)
    }

    /// Full (both triangles) Hessian of `σ f + λᵀ eq + μᵀ ineq`.
    pub fn lagrangian_hessian(&self, x: &[f64], sigma: f64, lam: &[f64], mu: &[f64]) -> Result<Triplets> {
        let nb = self.layout.n_bus;
        let gens = &self.problem.network.generators;
        let per: Vec<Vec<(usize, usize, f64)>> = (0..self.layout.blocks.len())
            .into_par_iter()
            .map(|c| {
                let sc = &self.problem.scenarios[c];
                let b = self.layout.blocks[c];
                let vm = &x[b.vm..b.vm + nb];
                let va = &x[b.va..b.va + nb];
                let l = &lam[2 * nb * c..2 * nb * (c + 1)];
                let wp: Vec<f64> = l[..nb].iter().map(|v| -v).collect();
                let wq: Vec<f64> = l[nb..].iter().map(|v| -v).collect();
                let mut out = Vec::new();
                injection_hessian(sc, vm, va, VoltageIndex { vm: b.vm, va: b.va }, &wp, &wq, &mut out);
                for (k, lim) in self.lines.iter().enumerate().filter(|(_, l)| l.c == c) {
                    let (f, t) = sc.line_ends[lim.row];
                    let (yff, yft, ytt, ytf) = line_entries(sc, lim.row);
                    let (mf, mt) = (mu[2 * k], mu[2 * k + 1]);
                    for (m, term, idx) in [
                        (mf, squared_flow(yff, yft, vm[f], vm[t], va[f], va[t]), [b.va + f, b.va + t, b.vm + f, b.vm + t]),
                        (mt, squared_flow(ytt, ytf, vm[t], vm[f], va[t], va[f]), [b.va + t, b.va + f, b.vm + t, b.vm + f]),
                    ] {
                        if m == 0.0 {
                            continue;
                        }
                        for a in 0..4 {
                            for bb in 0..4 {
                                out.push((idx[a], idx[bb], m * term.hess[a][bb]));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let mut h = Triplets::new();
        for part in per {
            for (r, c, v) in part {
                h.push(r, c, v);
            }
        }
        if sigma != 0.0 {
            for c in 0..self.cost_scenarios() {
                let b = self.layout.blocks[c];
                for (g, gen) in gens.iter().enumerate() {
                    if self.problem.scenarios[c].gen_in_service[g] {
                        h.push(b.p + g, b.p + g, sigma * gen.cost.second_derivative(x[b.p + g]));
                    }
                }
            }
            if self.optimize_alpha {
                for b in &self.layout.blocks {
                    if let Some(a) = b.alpha {
                        for g in 0..gens.len() {
                            h.push(a + g, a + g, sigma * 2.0 * ALPHA_TIE_BREAK);
                        }
                    }
                }
            }
        }
        let base = self.layout.blocks[0];
        let row0 = 2 * nb * self.layout.blocks.len();
        for (k, cp) in self.couplings.iter().enumerate() {
            let w = lam[row0 + k];
            if w == 0.0 {
                continue;
            }
            match *cp {
                Coupling::Active { c, g } => {
                    let b = self.layout.blocks[c];
                    let gen = &gens[g];
                    let d = b.delta.unwrap();
                    let alpha = self.alpha_of(x, c, g);
                    let r = smooth_coupling_residual_active(x[b.p + g], x[base.p + g], alpha, x[d], gen.pmin, gen.pmax, &self.active)?;
                    h.push(b.p + g, b.p + g, w * r.d2_pc);
                    if let Some(a) = b.alpha {
                        h.push(a + g, d, w * r.d2_alpha_delta);
                        h.push(d, a + g, w * r.d2_alpha_delta);
                    }
                }
                Coupling::Reactive { c, g, bus } => {
                    let b = self.layout.blocks[c];
                    let gen = &gens[g];
                    let r = smooth_coupling_residual_reactive(x[b.q + g], gen.qmin, gen.qmax, x[base.vm + bus], x[b.vm + bus], &self.reactive)?;
                    h.push(b.q + g, b.q + g, w * r.d2_q);
                }
            }
        }
        Ok(h)
    }

    /// Converts a flat point to a solution, snapping fixed variables onto
    /// their bounds.
    pub fn extract(&self, x: &[f64]) -> ScopfSolution {
        let x: Vec<f64> = x
            .iter()
            .zip(self.xmin.iter().zip(&self.xmax))
            .map(|(&v, (&lo, &hi))| if lo == hi { lo } else { v })
            .collect();
        let (ng, nb) = (self.layout.n_gen, self.layout.n_bus);
        let scenarios: Vec<ScenarioSolution> = self
            .layout
            .blocks
            .iter()
            .enumerate()
            .map(|(c, b): (usize, &ScenarioBlock)| ScenarioSolution {
                id: c,
                contingency: self.problem.scenarios[c].contingency,
                state: OperatingState {
                    vm: x[b.vm..b.vm + nb].to_vec(),
                    va: x[b.va..b.va + nb].to_vec(),
                    pg: x[b.p..b.p + ng].to_vec(),
                    qg: x[b.q..b.q + ng].to_vec(),
                    delta: b.delta.map_or(0.0, |d| x[d]),
                },
                alpha: (0..ng).map(|g| self.alpha_of(&x, c, g)).collect(),
            })
            .collect();
        ScopfSolution {
            objective: self.problem.cost(&scenarios),
            scenarios,
            stats: Default::default(),
        }
    }

    /// Whether α is a decision variable.
    pub fn optimizes_alpha(&self) -> bool {
        self.optimize_alpha
    }
}

impl Nlp for NlpInstance<'_> {
    fn n_vars(&self) -> usize {
        self.layout.n_vars
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.xmin, &self.xmax)
    }

    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(NlpInstance::objective(self, x))
    }

    fn constraints(&self, x: &[f64]) -> Result<ConstraintEval> {
        NlpInstance::constraints(self, x)
    }

    fn hessian(&self, x: &[f64], sigma: f64, lam: &[f64], mu: &[f64]) -> Result<Triplets> {
        self.lagrangian_hessian(x, sigma, lam, mu)
    }
}

/// Total generation cost at `x` and its gradient.
pub fn objective_and_gradient(instance: &NlpInstance, x: &[f64]) -> (f64, Vec<f64>) {
    instance.objective(x)
}

/// Nonlinear constraint residuals and Jacobians at `x`. Fails with a domain
/// error when a coupled output sits on or beyond its limits.
pub fn constraints_and_jacobian(instance: &NlpInstance, x: &[f64]) -> Result<ConstraintEval> {
    instance.constraints(x)
}
