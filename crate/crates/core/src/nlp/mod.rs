//! The SCOPF nonlinear program with smooth contingency-response couplings.
//!
//! [`ScopfProblem`] describes the model, [`assemble`] flattens it into an
//! [`NlpInstance`] with analytic derivatives, and [`solve`] runs a
//! primal-dual interior-point method with continuation on the curve
//! sharpness `h`.

mod assemble;
pub mod ipm;
mod layout;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble, constraints_and_jacobian, objective_and_gradient, ConstraintEval, NlpInstance, RowFamily};
pub use ipm::{IpmOptions, IterationRecord, Nlp};
pub use layout::{Layout, ScenarioBlock};

use crate::curves::{curve_gap_bound, SigmoidKind, SmoothCurveParams};
use crate::error::{Error, Result};
use crate::grid::{build_scenario, Contingency, Network, Scenario};
use crate::powerflow::{audit_solution, OperatingState, ViolationReport, DEGENERATE_TOL};

/// How post-contingency redispatch is shared among generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlphaPolicy {
    /// Equal weights over the units that can respond in each scenario.
    Uniform,
    /// Fixed per-generator weights, renormalized over responding units.
    Fixed(Vec<f64>),
    /// Weights are decision variables with `α ≥ 0`, `Σα = 1`.
    Optimize,
}

/// Which generation cost is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Cost of the base-case dispatch only.
    BaseCase,
    /// Cost summed over the base case and every contingency scenario.
    ScenarioSum,
}

/// A SCOPF model: the network, its scenarios (index 0 is the base case) and
/// the coupling surrogates.
#[derive(Debug, Clone)]
pub struct ScopfProblem {
    pub network: Network,
    pub scenarios: Vec<Scenario>,
    /// Active-power coupling curve, `θ = π/4`.
    pub active_curve: SmoothCurveParams,
    /// Reactive/voltage coupling curve, `θ = 0`.
    pub reactive_curve: SmoothCurveParams,
    pub alpha_policy: AlphaPolicy,
    /// Symmetric bound on every `Δ_c`.
    pub delta_bound: f64,
    pub objective: ObjectiveKind,
}

impl ScopfProblem {
    /// Base case plus one scenario per contingency, `atanh` curves with
    /// `h = 50, k = 1`, optimized participation, the cost summed over all
    /// scenarios and `|Δ| ≤ Σ pmax`.
    pub fn new(network: Network, contingencies: &[Contingency]) -> Result<Self> {
        let mut scenarios = vec![build_scenario(&network, Contingency::Base)?];
        for &c in contingencies {
            if c == Contingency::Base {
                return Err(Error::InvalidParameter("the base case is implicit".into()));
            }
            scenarios.push(build_scenario(&network, c)?);
        }
        let delta_bound = network.total_pmax();
        Ok(Self {
            network,
            scenarios,
            active_curve: SmoothCurveParams::active(SigmoidKind::Atanh, 50.0, 1),
            reactive_curve: SmoothCurveParams::reactive(SigmoidKind::Atanh, 50.0, 1),
            alpha_policy: AlphaPolicy::Optimize,
            delta_bound,
            objective: ObjectiveKind::ScenarioSum,
        })
    }

    /// Uses sigmoid `kind` with sharpness `h` and order `k` for both couplings.
    pub fn with_curves(mut self, kind: SigmoidKind, h: f64, k: u32) -> Result<Self> {
        self.active_curve = SmoothCurveParams::active(kind, h, k);
        self.reactive_curve = SmoothCurveParams::reactive(kind, h, k);
        self.active_curve.validate()?;
        Ok(self)
    }

    pub fn with_alpha(mut self, policy: AlphaPolicy) -> Self {
        self.alpha_policy = policy;
        self
    }

    pub fn with_objective(mut self, objective: ObjectiveKind) -> Self {
        self.objective = objective;
        self
    }

    pub fn contingencies(&self) -> Vec<Contingency> {
        self.scenarios.iter().map(|s| s.contingency).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.active_curve.validate()?;
        self.reactive_curve.validate()?;
        if self.scenarios.first().map(|s| s.contingency) != Some(Contingency::Base) {
            return Err(Error::InvalidParameter("scenario 0 must be the base case".into()));
        }
        if !(self.delta_bound > 0.0 && self.delta_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta bound must be finite and positive, got {}", self.delta_bound)));
        }
        if let AlphaPolicy::Fixed(w) = &self.alpha_policy {
            if w.len() != self.network.n_gen() || w.iter().any(|&a| !(a >= 0.0)) {
                return Err(Error::InvalidParameter("fixed alpha needs one non-negative weight per generator".into()));
            }
        }
        Ok(())
    }

    /// Whether generator `g` takes part in the couplings of scenario `c`.
    pub fn responds(&self, c: usize, g: usize) -> bool {
        let gen = &self.network.generators[g];
        self.scenarios[c].gen_in_service[g] && gen.pmax - gen.pmin > DEGENERATE_TOL
    }

    /// Participation weights of scenario `c` under a non-optimized policy.
    pub fn fixed_alpha(&self, c: usize) -> Vec<f64> {
        let ng = self.network.n_gen();
        if c == 0 {
            return vec![0.0; ng];
        }
        let raw: Vec<f64> = (0..ng)
            .map(|g| {
                if !self.responds(c, g) {
                    0.0
                } else {
                    match &self.alpha_policy {
                        AlphaPolicy::Fixed(w) => w[g],
                        _ => 1.0,
                    }
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|a| a / total).collect()
        } else {
            raw
        }
    }

    /// Generation cost of a full solution under this problem's objective.
    pub fn cost(&self, scenarios: &[ScenarioSolution]) -> f64 {
        let gens = &self.network.generators;
        let used = match self.objective {
            ObjectiveKind::BaseCase => &scenarios[..1],
            ObjectiveKind::ScenarioSum => scenarios,
        };
        used.iter()
            .zip(&self.scenarios)
            .map(|(s, sc)| {
                (0..gens.len())
                    .filter(|&g| sc.gen_in_service[g])
                    .map(|g| gens[g].cost.eval(s.state.pg[g]))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Cost of the base-case dispatch alone.
    pub fn base_cost(&self, solution: &ScopfSolution) -> f64 {
        let base = &solution.scenarios[0].state;
        self.network
            .generators
            .iter()
            .enumerate()
            .filter(|(g, _)| self.scenarios[0].gen_in_service[*g])
            .map(|(g, gen)| gen.cost.eval(base.pg[g]))
            .sum()
    }
}

/// Solved state of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSolution {
    /// 0 for the base case, then 1.. in contingency order.
    pub id: usize,
    pub contingency: Contingency,
    pub state: OperatingState,
    pub alpha: Vec<f64>,
}

/// Per-stage summary of the continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub h: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Largest exact-model coupling gap at the end of the stage.
    pub exact_gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub converged: bool,
    pub feasibility: f64,
    pub gradient: f64,
    pub complementarity: f64,
    pub seconds: f64,
    pub stages: Vec<StageStats>,
    #[serde(skip)]
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopfSolution {
    /// Objective value in $/h.
    pub objective: f64,
    pub scenarios: Vec<ScenarioSolution>,
    pub stats: SolverStats,
}

impl ScopfSolution {
    /// Iteration log serialized as one JSON object per line.
    pub fn iteration_log(&self) -> String {
        self.stats
            .records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute constraint violation accepted at convergence.
    pub feas_tol: f64,
    /// Scaled gradient, complementarity and cost-change tolerance.
    pub opt_tol: f64,
    /// Iteration limit per continuation stage.
    pub max_iter: usize,
    /// Sharpness values tried before the problem's own `h`; only entries
    /// below the target are used.
    pub h_schedule: Vec<f64>,
    /// Warm-start every stage from the previous primal-dual point.
    pub warm_start: bool,
    /// Worker threads for per-scenario evaluation; 1 is sequential.
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            max_iter: 300,
            h_schedule: vec![5.0, 15.0, 50.0],
            warm_start: true,
            threads: 1,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.feas_tol > 0.0 && self.opt_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.h_schedule.windows(2).any(|w| !(w[0] < w[1])) || self.h_schedule.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidParameter("h schedule must be positive and increasing".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Continuation stages ending at `target`.
    pub fn schedule_for(&self, target: f64) -> Vec<f64> {
        let mut s: Vec<f64> = self.h_schedule.iter().copied().filter(|&h| h < target).collect();
        s.push(target);
        s
    }
}

/// A solve that may have stopped early; `solution.stats.converged` tells.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: ScopfSolution,
    pub audit: ViolationReport,
    /// Largest smooth-vs-exact distance of the final curves.
    pub curve_bound: f64,
}

/// Solves the instance and audits the result against the exact model.
/// Returns the last iterate even when the solver did not converge.
pub fn solve_report(instance: &NlpInstance, options: &SolverOptions) -> Result<SolveOutcome> {
    options.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| Error::Solver(e.to_string()))?;
    pool.install(|| solve_inner(instance, options))
}

/// Like [`solve_report`] but fails unless the solver converged.
pub fn solve(instance: &NlpInstance, options: &SolverOptions) -> Result<ScopfSolution> {
    let out = solve_report(instance, options)?;
    if !out.solution.stats.converged {
        let s = &out.solution.stats;
        return Err(Error::Solver(format!(
            "no convergence after {} iterations (feasibility {:.3e}, gradient {:.3e}, complementarity {:.3e})",
            s.iterations, s.feasibility, s.gradient, s.complementarity
        )));
    }
    Ok(out.solution)
}

fn solve_inner(instance: &NlpInstance, options: &SolverOptions) -> Result<SolveOutcome> {
    let start = Instant::now();
    let problem = instance.problem();
    let target = problem.active_curve.h;
    let mut x = instance.initial_point();
    let mut warm: Option<ipm::DualState> = None;
    let mut stats = SolverStats::default();
    let ipm_opts = IpmOptions {
        feas_tol: options.feas_tol,
        opt_tol: options.opt_tol,
        max_iter: options.max_iter,
    };
    let last_h = *options.schedule_for(target).last().unwrap();
    for h in options.schedule_for(target) {
        let stage = instance.with_h(h);
        let mut res = ipm::solve(&stage, &x, warm.as_ref(), &ipm_opts, h)?;
        if !res.converged && warm.is_some() {
            log::info!("warm-started stage h={h} failed, retrying cold");
            res = ipm::solve(&stage, &x, None, &ipm_opts, h)?;
        }
        stats.iterations += res.iterations;
        stats.records.extend(res.records.iter().cloned());
        stats.converged = res.converged;
        stats.feasibility = res.feasibility;
        stats.gradient = res.gradient;
        stats.complementarity = res.complementarity;
        x = res.x.clone();
        let sol = stage.extract(&x);
        let gap = audit_solution(problem, &sol, f64::INFINITY, f64::INFINITY).max_coupling();
        stats.stages.push(StageStats {
            h,
            iterations: res.iterations,
            converged: res.converged,
            objective: sol.objective,
            exact_gap: gap,
        });
        if !res.converged && h < last_h {
            log::warn!("stage h={h} did not converge; continuing from its last iterate");
        }
        warm = options.warm_start.then_some(res.duals);
    }
    stats.seconds = start.elapsed().as_secs_f64();
    let mut solution = instance.extract(&x);
    solution.stats = stats;
    let curve_bound = curve_gap_bound(&problem.active_curve)?.max(curve_gap_bound(&problem.reactive_curve)?);
    let audit = audit_solution(problem, &solution, options.feas_tol, curve_bound);
    Ok(SolveOutcome {
        solution,
        audit,
        curve_bound,
    })
}

/// Result of one sigmoid in a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidRow {
    pub kind: SigmoidKind,
    pub objective: Option<f64>,
    pub seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Solves the same problem once per sigmoid kind with identical options.
pub fn compare_sigmoids(problem: &ScopfProblem, kinds: &[SigmoidKind], options: &SolverOptions) -> Vec<SigmoidRow> {
    kinds
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let run = problem
                .clone()
                .with_curves(kind, problem.active_curve.h, problem.active_curve.k)
                .and_then(|p| {
                    let inst = assemble(&p)?;
                    solve_report(&inst, options)
                });
            let seconds = start.elapsed().as_secs_f64();
            match run {
                Ok(out) => SigmoidRow {
                    kind,
                    objective: Some(out.solution.objective),
                    seconds,
                    iterations: out.solution.stats.iterations,
                    converged: out.solution.stats.converged,
                    error: None,
                },
                Err(e) => SigmoidRow {
                    kind,
                    objective: None,
                    seconds,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// CSV with columns `function,objective,time_s,iterations,converged`.
pub fn sigmoid_table_csv(rows: &[SigmoidRow]) -> String {
    let mut out = String::from("function,objective,time_s,iterations,converged\n");
    for r in rows {
        let obj = r.objective.map_or_else(|| "nan".to_string(), |o| format!("{o:.4}"));
        out.push_str(&format!("{},{},{:.3},{},{}\n", r.kind.label(), obj, r.seconds, r.iterations, r.converged));
    }
    out
}
