//! Newton AC power flow in polar coordinates, the post-contingency response
//! solver with distributed slack and PV/PQ switching, and the exact-model
//! feasibility audit.

use std::collections::HashSet;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curves::{distance_to_exact_set, exact_response_active, normalize, reactive_minmax_residual};
use crate::error::{Error, Result};
use crate::flow::{injection_jacobian, injections, line_flows, VoltageIndex};
use crate::grid::{Network, Scenario};
use crate::nlp::{ScopfProblem, ScopfSolution};
use crate::sparse::{solve_sparse, Triplets};

/// Limits closer than this are treated as a fixed (degenerate) range.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// Voltages and injections of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Distributed-slack redispatch; zero for the base case.
    pub delta: f64,
}

impl OperatingState {
    /// Flat voltages and the case's stored dispatch.
    pub fn from_case(network: &Network) -> Self {
        let mut vm: Vec<f64> = network.buses.iter().map(|b| b.vm).collect();
        for g in network.generators.iter().filter(|g| g.in_service) {
            let i = network.bus_index(g.bus).unwrap();
            vm[i] = g.vg;
        }
        Self {
            vm,
            va: network.buses.iter().map(|b| b.va).collect(),
            pg: network.generators.iter().map(|g| if g.in_service { g.pg } else { 0.0 }).collect(),
            qg: network.generators.iter().map(|g| if g.in_service { g.qg } else { 0.0 }).collect(),
            delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_switch_rounds: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
            max_switch_rounds: 20,
        }
    }
}

/// Active-power regime of a generator in a response solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActiveMode {
    Free,
    AtMax,
    AtMin,
    Out,
}

/// Voltage-control regime of a generator bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusControl {
    /// Voltage held, reactive output free.
    Pv,
    /// Every generator at the bus at its upper reactive limit.
    AtQmax,
    /// Every generator at the bus at its lower reactive limit.
    AtQmin,
    /// No voltage control (load bus or bus without reactive range).
    Pq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PfReport {
    pub state: OperatingState,
    /// Newton iterations summed over all switching rounds.
    pub iterations: usize,
    pub rounds: usize,
    /// Mismatch ∞-norm at each Newton iterate of the final round.
    pub mismatch_history: Vec<f64>,
    pub active_modes: Vec<ActiveMode>,
    pub bus_control: Vec<BusControl>,
}

impl PfReport {
    pub fn final_mismatch(&self) -> f64 {
        self.mismatch_history.last().copied().unwrap_or(0.0)
    }
}

/// `G_cᵀ(p + iq) − s_dem − V∘conj(Y V)` per bus.
pub fn mismatch(scenario: &Scenario, state: &OperatingState) -> Vec<Complex64> {
    let (p, q) = injections(scenario, &state.vm, &state.va);
    let mut out: Vec<Complex64> = scenario
        .demand()
        .iter()
        .zip(p.iter().zip(&q))
        .map(|(d, (&p, &q))| -d - Complex64::new(p, q))
        .collect();
    for (g, bus) in scenario.gen_bus.iter().enumerate() {
        if let Some(i) = bus {
            out[*i] += Complex64::new(state.pg[g], state.qg[g]);
        }
    }
    out
}

pub fn max_mismatch(scenario: &Scenario, state: &OperatingState) -> f64 {
    mismatch(scenario, state)
        .iter()
        .map(|m| m.re.abs().max(m.im.abs()))
        .fold(0.0, f64::max)
}

/// Apparent power at both ends of an in-service branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    /// Index into the network's branch list.
    pub branch: usize,
    pub from: f64,
    pub to: f64,
}

pub fn branch_flows(scenario: &Scenario, state: &OperatingState) -> Vec<BranchFlow> {
    line_flows(scenario, &state.vm, &state.va)
        .into_iter()
        .zip(&scenario.lines)
        .map(|((sf, st), &branch)| BranchFlow {
            branch,
            from: sf.norm(),
            to: st.norm(),
        })
        .collect()
}

/// One Newton system: which voltages are unknown and what is injected.
struct NewtonSystem<'a> {
    scenario: &'a Scenario,
    /// Buses whose magnitude is held.
    vm_fixed: Vec<bool>,
    /// Net specified injections (generation minus demand) per bus.
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    /// `∂p_spec/∂Δ` per bus; `None` for a classic single-slack solve.
    dp_ddelta: Option<Vec<f64>>,
}

struct NewtonOutcome {
    vm: Vec<f64>,
    va: Vec<f64>,
    delta: f64,
    iterations: usize,
    history: Vec<f64>,
}

impl NewtonSystem<'_> {
    fn active_bus(&self, i: usize) -> bool {
        !self.scenario.is_isolated(i)
    }

    fn solve(&self, vm0: &[f64], va0: &[f64], delta0: f64, opts: &PfOptions) -> Result<NewtonOutcome> {
        let sc = self.scenario;
        let n = sc.n_bus();
        let r = sc.reference_bus;
        let distributed = self.dp_ddelta.is_some();

        // Unknown columns in the full [va | vm] space.
        let mut col = vec![None; 2 * n];
        let mut ncol = 0;
        for i in (0..n).filter(|&i| self.active_bus(i) && i != r) {
            col[i] = Some(ncol);
            ncol += 1;
        }
        for i in (0..n).filter(|&i| self.active_bus(i) && !self.vm_fixed[i]) {
            col[n + i] = Some(ncol);
            ncol += 1;
        }
        let delta_col = distributed.then(|| {
            ncol += 1;
            ncol - 1
        });
        // Equation rows: P everywhere (except the slack in classic mode), Q at
        // buses with free magnitude.
        let p_rows: Vec<usize> = (0..n)
            .filter(|&i| self.active_bus(i) && (distributed || i != r))
            .collect();
        let q_rows: Vec<usize> = (0..n).filter(|&i| self.active_bus(i) && !self.vm_fixed[i]).collect();
        let nrow = p_rows.len() + q_rows.len();
        if nrow != ncol {
            return Err(Error::Dimension(format!("{nrow} equations for {ncol} unknowns")));
        }

        let mut vm = vm0.to_vec();
        let mut va = va0.to_vec();
        let mut delta = delta0;
        let mut history = Vec::new();
        let ix = VoltageIndex { va: 0, vm: n };

        for iter in 0..=opts.max_iter {
            let (p, q) = injections(sc, &vm, &va);
            let mut f = Vec::with_capacity(nrow);
            for &i in &p_rows {
                let spec = self.p_spec[i] + self.dp_ddelta.as_ref().map_or(0.0, |d| d[i] * delta);
                f.push(spec - p[i]);
            }
            for &i in &q_rows {
                f.push(self.q_spec[i] - q[i]);
            }
            let norm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            history.push(norm);
            if !norm.is_finite() {
                break;
            }
            if norm <= opts.tol {
                return Ok(NewtonOutcome {
                    vm,
                    va,
                    delta,
                    iterations: iter,
                    history,
                });
            }
            if iter == opts.max_iter {
                break;
            }
            let (jp, jq) = injection_jacobian(sc, &vm, &va, ix);
            let mut jac = Triplets::new();
            for (row, &i) in p_rows.iter().enumerate() {
                for &(v, d) in &jp[i] {
                    if let Some(c) = col[v] {
                        jac.push(row, c, -d);
                    }
                }
                if let (Some(c), Some(dd)) = (delta_col, &self.dp_ddelta) {
                    jac.push(row, c, dd[i]);
                }
            }
            for (k, &i) in q_rows.iter().enumerate() {
                for &(v, d) in &jq[i] {
                    if let Some(c) = col[v] {
                        jac.push(p_rows.len() + k, c, -d);
                    }
                }
            }
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let dx = solve_sparse(ncol, &jac, &rhs)?;
            for i in 0..n {
                if let Some(c) = col[i] {
                    va[i] += dx[c];
                }
                if let Some(c) = col[n + i] {
                    vm[i] += dx[c];
                }
            }
            if let Some(c) = delta_col {
                delta += dx[c];
            }
        }
        Err(Error::NoConvergence {
            iterations: opts.max_iter,
            mismatch: history.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// Reactive output of each generator at a voltage-controlled bus, shared in
/// proportion to the generators' reactive ranges.
fn share_reactive(network: &Network, gens: &[usize], q_bus: f64, qg: &mut [f64]) {
    let lo: f64 = gens.iter().map(|&g| network.generators[g].qmin).sum();
    let hi: f64 = gens.iter().map(|&g| network.generators[g].qmax).sum();
    if hi - lo > DEGENERATE_TOL {
        let frac = (q_bus - lo) / (hi - lo);
        for &g in gens {
            let gen = &network.generators[g];
            qg[g] = gen.qmin + frac * (gen.qmax - gen.qmin);
        }
    } else {
        for &g in gens {
            qg[g] = q_bus / gens.len() as f64;
        }
    }
}

/// In-service generators grouped by bus.
fn gens_by_bus(scenario: &Scenario) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); scenario.n_bus()];
    for (g, bus) in scenario.gen_bus.iter().enumerate() {
        if let Some(i) = bus {
            out[*i].push(g);
        }
    }
    out
}

/// Classic power flow: generator buses hold `state.vm`, active outputs are
/// fixed at `state.pg` and the reference bus absorbs the active imbalance.
/// Reactive limits are not enforced.
pub fn solve_powerflow(network: &Network, scenario: &Scenario, state: &OperatingState, options: &PfOptions) -> Result<PfReport> {
    if !scenario.check_connectivity() {
        return Err(Error::Islanded(scenario.contingency.to_string()));
    }
    let n = scenario.n_bus();
    let by_bus = gens_by_bus(scenario);
    let mut p_spec: Vec<f64> = scenario.demand().iter().map(|d| -d.re).collect();
    let mut q_spec: Vec<f64> = scenario.demand().iter().map(|d| -d.im).collect();
    for (g, bus) in scenario.gen_bus.iter().enumerate() {
        if let Some(i) = bus {
            p_spec[*i] += state.pg[g];
            q_spec[*i] += state.qg[g];
        }
    }
    let vm_fixed: Vec<bool> = (0..n).map(|i| !by_bus[i].is_empty() || i == scenario.reference_bus).collect();
    let sys = NewtonSystem {
        scenario,
        vm_fixed,
        p_spec,
        q_spec,
        dp_ddelta: None,
    };
    let out = sys.solve(&state.vm, &state.va, 0.0, options)?;
    let (p, q) = injections(scenario, &out.vm, &out.va);
    let mut pg = state.pg.clone();
    let mut qg = state.qg.clone();
    for (g, bus) in scenario.gen_bus.iter().enumerate() {
        if bus.is_none() {
            pg[g] = 0.0;
            qg[g] = 0.0;
        }
    }
    let r = scenario.reference_bus;
    let slack_gens = &by_bus[r];
    if !slack_gens.is_empty() {
        let fixed: f64 = slack_gens.iter().map(|&g| state.pg[g]).sum();
        let need = p[r] + scenario.demand()[r].re - fixed;
        let cap: f64 = slack_gens.iter().map(|&g| network.generators[g].pmax.abs().max(1e-9)).sum();
        for &g in slack_gens {
            pg[g] += need * network.generators[g].pmax.abs().max(1e-9) / cap;
        }
    }
    for (i, gens) in by_bus.iter().enumerate() {
        if !gens.is_empty() {
            share_reactive(network, gens, q[i] + scenario.demand()[i].im, &mut qg);
        }
    }
    let bus_control = (0..n)
        .map(|i| if by_bus[i].is_empty() { BusControl::Pq } else { BusControl::Pv })
        .collect();
    Ok(PfReport {
        state: OperatingState {
            vm: out.vm,
            va: out.va,
            pg,
            qg,
            delta: 0.0,
        },
        iterations: out.iterations,
        rounds: 1,
        mismatch_history: out.history,
        active_modes: scenario
            .gen_in_service
            .iter()
            .map(|&s| if s { ActiveMode::Free } else { ActiveMode::Out })
            .collect(),
        bus_control,
    })
}

/// Post-contingency operating point under the exact response model.
///
/// Active outputs follow `clip(p0 + αΔ)` with `Δ` a Newton unknown. Each
/// generator bus holds its base voltage until its reactive range is
/// exhausted, then switches to PQ at the violated limit; a switched bus
/// returns to PV when its voltage crosses back over the base value. Both
/// regimes are re-evaluated after every Newton solve until nothing changes.
pub fn solve_contingency_response(
    network: &Network,
    base: &OperatingState,
    scenario: &Scenario,
    alpha: &[f64],
    options: &PfOptions,
) -> Result<PfReport> {
    let ng = network.n_gen();
    let n = scenario.n_bus();
    if alpha.len() != ng || base.pg.len() != ng || base.vm.len() != n {
        return Err(Error::Dimension("base state or alpha does not match the network".into()));
    }
    if !scenario.check_connectivity() {
        return Err(Error::Islanded(scenario.contingency.to_string()));
    }
    let by_bus = gens_by_bus(scenario);
    let gens = &network.generators;
    let v0 = &base.vm;

    let mut active: Vec<ActiveMode> = (0..ng)
        .map(|g| {
            if !scenario.gen_in_service[g] {
                ActiveMode::Out
            } else if gens[g].pmax - gens[g].pmin <= DEGENERATE_TOL {
                ActiveMode::AtMax
            } else {
                ActiveMode::Free
            }
        })
        .collect();
    let mut control: Vec<BusControl> = (0..n)
        .map(|i| {
            let range: f64 = by_bus[i].iter().map(|&g| gens[g].qmax - gens[g].qmin).sum();
            if by_bus[i].is_empty() || range <= DEGENERATE_TOL {
                BusControl::Pq
            } else {
                BusControl::Pv
            }
        })
        .collect();

    let mut vm: Vec<f64> = base.vm.clone();
    let mut va = base.va.clone();
    let mut delta = 0.0;
    let mut visited = HashSet::new();
    let mut total_iter = 0;

    for round in 1..=options.max_switch_rounds {
        if !visited.insert((active.clone(), control.clone())) {
            return Err(Error::SwitchingCycle(round));
        }
        let mut p_spec: Vec<f64> = scenario.demand().iter().map(|d| -d.re).collect();
        let mut q_spec: Vec<f64> = scenario.demand().iter().map(|d| -d.im).collect();
        let mut dpd = vec![0.0; n];
        let mut qg = vec![0.0; ng];
        for (g, bus) in scenario.gen_bus.iter().enumerate() {
            let Some(i) = *bus else { continue };
            match active[g] {
                ActiveMode::Free => {
                    p_spec[i] += base.pg[g];
                    dpd[i] += alpha[g];
                }
                ActiveMode::AtMax => p_spec[i] += gens[g].pmax,
                ActiveMode::AtMin => p_spec[i] += gens[g].pmin,
                ActiveMode::Out => {}
            }
            qg[g] = match control[i] {
                BusControl::AtQmax => gens[g].qmax,
                BusControl::AtQmin | BusControl::Pq => gens[g].qmin,
                BusControl::Pv => 0.0,
            };
            if control[i] != BusControl::Pv {
                q_spec[i] += qg[g];
            }
        }
        if dpd.iter().all(|&d| d == 0.0) {
            return Err(Error::Solver("no generator left to absorb the redispatch".into()));
        }
        let vm_fixed: Vec<bool> = (0..n).map(|i| control[i] == BusControl::Pv).collect();
        for i in 0..n {
            if vm_fixed[i] {
                vm[i] = v0[i];
            }
        }
        let sys = NewtonSystem {
            scenario,
            vm_fixed,
            p_spec,
            q_spec,
            dp_ddelta: Some(dpd),
        };
        let out = sys.solve(&vm, &va, delta, options)?;
        total_iter += out.iterations;
        vm = out.vm;
        va = out.va;
        delta = out.delta;
        debug!("response round {round}: {} iterations, delta {delta:.6}", out.iterations);

        // Re-evaluate both regimes at the new point.
        let (_, q) = injections(scenario, &vm, &va);
        let eps = options.tol;
        let mut changed = false;
        for g in 0..ng {
            if active[g] == ActiveMode::Out || gens[g].pmax - gens[g].pmin <= DEGENERATE_TOL {
                continue;
            }
            let desired = base.pg[g] + alpha[g] * delta;
            let next = if desired > gens[g].pmax {
                ActiveMode::AtMax
            } else if desired < gens[g].pmin {
                ActiveMode::AtMin
            } else {
                ActiveMode::Free
            };
            changed |= next != active[g];
            active[g] = next;
        }
        for i in 0..n {
            if by_bus[i].is_empty() || control[i] == BusControl::Pq {
                continue;
            }
            let lo: f64 = by_bus[i].iter().map(|&g| gens[g].qmin).sum();
            let hi: f64 = by_bus[i].iter().map(|&g| gens[g].qmax).sum();
            let q_bus = q[i] + scenario.demand()[i].im;
            let next = match control[i] {
                BusControl::Pv if q_bus > hi + eps => BusControl::AtQmax,
                BusControl::Pv if q_bus < lo - eps => BusControl::AtQmin,
                BusControl::AtQmax if vm[i] > v0[i] + eps => BusControl::Pv,
                BusControl::AtQmin if vm[i] < v0[i] - eps => BusControl::Pv,
                c => c,
            };
            changed |= next != control[i];
            control[i] = next;
        }
        if !changed {
            let mut pg = vec![0.0; ng];
            for g in 0..ng {
                pg[g] = match active[g] {
                    ActiveMode::Out => 0.0,
                    _ => exact_response_active(base.pg[g], alpha[g], delta, gens[g].pmin, gens[g].pmax),
                };
            }
            for (i, list) in by_bus.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                if control[i] == BusControl::Pv {
                    share_reactive(network, list, q[i] + scenario.demand()[i].im, &mut qg);
                }
            }
            return Ok(PfReport {
                state: OperatingState { vm, va, pg, qg, delta },
                iterations: total_iter,
                rounds: round,
                mismatch_history: out.history,
                active_modes: active,
                bus_control: control,
            });
        }
    }
    Err(Error::SwitchingCycle(options.max_switch_rounds))
}

/// Largest violation in one constraint family and where it occurred.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Worst {
    pub value: f64,
    pub scenario: usize,
    /// Bus, branch or generator index, depending on the family.
    pub element: usize,
}

impl Worst {
    fn update(&mut self, value: f64, scenario: usize, element: usize) {
        if value > self.value || value.is_nan() {
            *self = Worst {
                value,
                scenario,
                element,
            };
        }
    }
}

/// Exact-model feasibility audit of a SCOPF solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub balance: Worst,
    pub line: Worst,
    pub p_box: Worst,
    pub q_box: Worst,
    pub v_box: Worst,
    /// Distance to the exact active response set in normalized coordinates.
    pub active_coupling: Worst,
    /// Distance to the exact reactive/voltage response set.
    pub reactive_coupling: Worst,
    /// Largest reactive min-max complementarity product.
    pub reactive_minmax: Worst,
    pub tol: f64,
    pub curve_tol: f64,
    pub pass: bool,
}

impl ViolationReport {
    /// Name and value of every family in report order.
    pub fn families(&self) -> [(&'static str, Worst, f64); 7] {
        [
            ("balance", self.balance, self.tol),
            ("line", self.line, self.tol),
            ("p_box", self.p_box, self.tol),
            ("q_box", self.q_box, self.tol),
            ("v_box", self.v_box, self.tol),
            ("active_coupling", self.active_coupling, self.curve_tol),
            ("reactive_coupling", self.reactive_coupling, self.curve_tol),
        ]
    }

    /// Families whose violation exceeds their tolerance.
    pub fn failures(&self) -> Vec<&'static str> {
        self.families()
            .into_iter()
            .filter(|(_, w, tol)| !(w.value <= *tol))
            .map(|(name, _, _)| name)
            .collect()
    }

    /// Largest violation among balance, line and box families.
    pub fn max_hard(&self) -> f64 {
        [self.balance, self.line, self.p_box, self.q_box, self.v_box]
            .iter()
            .map(|w| w.value)
            .fold(0.0, f64::max)
    }

    pub fn max_coupling(&self) -> f64 {
        self.active_coupling.value.max(self.reactive_coupling.value)
    }
}

/// Checks a solution against the exact piecewise model. Balance, line and box
/// families are compared with `tol`; the coupling gaps with `curve_tol`.
pub fn audit_solution(problem: &ScopfProblem, solution: &ScopfSolution, tol: f64, curve_tol: f64) -> ViolationReport {
    let net = &problem.network;
    let mut rep = ViolationReport {
        tol,
        curve_tol,
        ..Default::default()
    };
    let base = &solution.scenarios[0].state;
    for (c, (sc, sol)) in problem.scenarios.iter().zip(&solution.scenarios).enumerate() {
        let st = &sol.state;
        for (i, m) in mismatch(sc, st).iter().enumerate() {
            rep.balance.update(m.re.abs().max(m.im.abs()), c, i);
        }
        for (flow, &lim) in branch_flows(sc, st).iter().zip(&sc.line_limits) {
            if lim.is_finite() {
                rep.line.update((flow.from.max(flow.to) - lim).max(0.0), c, flow.branch);
            }
        }
        for (i, bus) in net.buses.iter().enumerate() {
            rep.v_box.update((bus.vmin - st.vm[i]).max(st.vm[i] - bus.vmax).max(0.0), c, i);
        }
        for (g, gen) in net.generators.iter().enumerate() {
            let Some(bus) = sc.gen_bus[g] else {
                rep.p_box.update(st.pg[g].abs(), c, g);
                rep.q_box.update(st.qg[g].abs(), c, g);
                continue;
            };
            rep.p_box.update((gen.pmin - st.pg[g]).max(st.pg[g] - gen.pmax).max(0.0), c, g);
            rep.q_box.update((gen.qmin - st.qg[g]).max(st.qg[g] - gen.qmax).max(0.0), c, g);
            if c == 0 {
                continue;
            }
            let desired = base.pg[g] + sol.alpha[g] * st.delta;
            if gen.pmax - gen.pmin > DEGENERATE_TOL {
                let x = normalize(st.pg[g], gen.pmin, gen.pmax).unwrap();
                let y = normalize(desired, gen.pmin, gen.pmax).unwrap();
                rep.active_coupling.update(distance_to_exact_set(std::f64::consts::FRAC_PI_4, x, y), c, g);
            } else {
                rep.active_coupling.update((st.pg[g] - gen.pmin).abs(), c, g);
            }
            let dv = base.vm[bus] - st.vm[bus];
            if gen.qmax - gen.qmin > DEGENERATE_TOL {
                let x = normalize(st.qg[g], gen.qmin, gen.qmax).unwrap();
                rep.reactive_coupling.update(distance_to_exact_set(0.0, x, dv), c, g);
                let (rp, rm) = reactive_minmax_residual(st.qg[g], gen.qmin, gen.qmax, dv);
                rep.reactive_minmax.update(rp.max(rm), c, g);
            }
        }
    }
    rep.pass = rep.failures().is_empty();
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::test_networks::*;
    use crate::grid::{build_scenario, BusKind, Contingency};

    fn two_bus_x05() -> Network {
        Network::new(
            100.0,
            vec![bus(1, BusKind::Reference, 0.0, 0.0), bus(2, BusKind::Pq, 0.0, 0.0)],
            vec![line(1, 2, 0.0, 0.5, 0.0)],
            vec![gen(1, 2.0, 10.0)],
        )
        .unwrap()
    }

    #[test]
    fn flat_zero_network_is_balanced() {
        let net = two_bus();
        let sc = build_scenario(&net, Contingency::Base).unwrap();
        let st = OperatingState::from_case(&net);
        assert!(max_mismatch(&sc, &st) == 0.0);
        let rep = solve_powerflow(&net, &sc, &st, &PfOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn single_injection_shows_in_mismatch() {
        let net = two_bus();
        let sc = build_scenario(&net, Contingency::Base).unwrap();
        let mut st = OperatingState::from_case(&net);
        st.pg[0] = 1.0;
        let m = mismatch(&sc, &st);
        assert!((m[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(m[1].norm() < 1e-15);
    }

    #[test]
    fn two_bus_flow_closed_form() {
        let net = two_bus_x05();
        let sc = build_scenario(&net, Contingency::Base).unwrap();
        let mut st = OperatingState::from_case(&net);
        st.va = vec![0.0, -0.1];
        let sf = line_flows(&sc, &st.vm, &st.va)[0].0;
        assert!((sf.re - 0.199_666_833_293_656_3).abs() < 1e-15);
        assert!((sf.re - 2.0 * 0.1f64.sin()).abs() < 1e-15);
        assert!((sf.im - 0.009_991_669_443_948_359).abs() < 1e-15);
        st.va = vec![0.0, 0.0];
        assert_eq!(branch_flows(&sc, &st)[0].from, 0.0);
    }

    #[test]
    fn outed_branch_excluded_from_flows() {
        let net = ring3();
        let sc = build_scenario(&net, Contingency::BranchOutage(1)).unwrap();
        let st = OperatingState::from_case(&net);
        let flows = branch_flows(&sc, &st);
        assert_eq!(flows.iter().map(|f| f.branch).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn ring_power_flow_converges_quadratically() {
        let net = ring3();
        let sc = build_scenario(&net, Contingency::Base).unwrap();
        let mut st = OperatingState::from_case(&net);
        st.pg = vec![0.5, 0.3];
        let rep = solve_powerflow(&net, &sc, &st, &PfOptions::default()).unwrap();
        assert!(max_mismatch(&sc, &rep.state) < 1e-8);
        let h = &rep.mismatch_history;
        assert!(h.len() >= 3);
        let n = h.len();
        assert!(h[n - 1] <= 10.0 * h[n - 2] * h[n - 2] + 1e-15);
    }

    #[test]
    fn islanded_scenario_rejected() {
        let net = two_bus();
        assert!(build_scenario(&net, Contingency::BranchOutage(0)).is_err());
    }

    #[test]
    fn lossless_base_response_has_zero_delta() {
        let mut net = ring3();
        for br in &mut net.branches {
            br.r = 0.0;
            br.b_charging = 0.0;
        }
        let sc = build_scenario(&net, Contingency::Base).unwrap();
        let mut st = OperatingState::from_case(&net);
        st.pg = vec![0.2, 0.0];
        st.pg[1] = 0.8 - st.pg[0];
        let base = solve_powerflow(&net, &sc, &st, &PfOptions::default()).unwrap().state;
        let rep = solve_contingency_response(&net, &base, &sc, &[0.5, 0.5], &PfOptions::default()).unwrap();
        assert!(rep.state.delta.abs() < 1e-9);
    }

    #[test]
    fn generator_outage_redispatches_remaining_units() {
        let net = ring3();
        let sc0 = build_scenario(&net, Contingency::Base).unwrap();
        let mut st = OperatingState::from_case(&net);
        st.pg = vec![0.5, 0.3];
        let base = solve_powerflow(&net, &sc0, &st, &PfOptions::default()).unwrap().state;
        let sc = build_scenario(&net, Contingency::GeneratorOutage(1)).unwrap();
        let rep = solve_contingency_response(&net, &base, &sc, &[1.0, 0.0], &PfOptions::default()).unwrap();
        assert_eq!(rep.state.pg[1], 0.0);
        assert_eq!(rep.state.qg[1], 0.0);
        assert!(max_mismatch(&sc, &rep.state) < 1e-8);
        assert!((rep.state.pg[0] - base.pg[0] - rep.state.delta).abs() < 1e-12);
    }
}
