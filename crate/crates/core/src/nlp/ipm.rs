//! Primal-dual interior-point method for
//! `min f(x)  s.t.  g(x) = 0, h(x) ≤ 0, xmin ≤ x ≤ xmax`
//! with exact second derivatives.
//!
//! Each iteration solves the condensed Newton system
//!
//! ```text
//! [ Lxx + Jhᵀ Z⁻¹M Jh   Jgᵀ ] [dx]   [ −(Lx + Jhᵀ Z⁻¹(γe + M h)) ]
//! [ Jg                  0   ] [dλ] = [ −g                         ]
//! ```
//!
//! for the primal and equality-dual steps; slacks `z` and inequality
//! multipliers `μ` follow in closed form. Variable bounds become linear
//! inequality rows (or equality rows when `xmin == xmax`), and their slacks
//! are started at `z = −h` so that every iterate stays strictly inside its
//! bounds.

use serde::{Deserialize, Serialize};

use super::assemble::ConstraintEval;
use crate::error::{Error, Result};
use crate::sparse::{solve_sparse, Triplets};

/// A smooth nonlinear program with sparse derivatives.
pub trait Nlp {
    fn n_vars(&self) -> usize;
    fn bounds(&self) -> (&[f64], &[f64]);
    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn constraints(&self, x: &[f64]) -> Result<ConstraintEval>;
    /// Full symmetric Hessian of `σ f + λᵀ g + μᵀ h`.
    fn hessian(&self, x: &[f64], sigma: f64, lam: &[f64], mu: &[f64]) -> Result<Triplets>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            max_iter: 300,
        }
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Curve sharpness of the stage.
    pub h: f64,
    /// Barrier parameter.
    pub mu: f64,
    pub step: f64,
    pub feas: f64,
    pub opt: f64,
    pub comp: f64,
    pub cost: f64,
}

/// Multipliers and slacks carried between continuation stages.
#[derive(Debug, Clone)]
pub struct DualState {
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: Vec<f64>,
    pub duals: DualState,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute constraint violation.
    pub feasibility: f64,
    pub gradient: f64,
    pub complementarity: f64,
    pub records: Vec<IterationRecord>,
}

const XI: f64 = 0.99995;
const SIGMA: f64 = 0.1;
const Z0: f64 = 1.0;
/// Accepted ratio of actual to predicted barrier-Lagrangian change when a
/// full step has to be cut back.
const RHO: (f64, f64) = (0.95, 1.05);
const MAX_REDUCTIONS: usize = 20;

/// Bound handling derived once from `xmin` / `xmax`.
struct BoundRows {
    /// `(variable, value)` for fixed variables.
    fixed: Vec<(usize, f64)>,
    /// `(variable, sign, value)` meaning `sign·(x − value) ≤ 0`.
    rows: Vec<(usize, f64, f64)>,
}

impl BoundRows {
    fn new(xmin: &[f64], xmax: &[f64]) -> Self {
        let mut fixed = Vec::new();
        let mut rows = Vec::new();
        for (i, (&lo, &hi)) in xmin.iter().zip(xmax).enumerate() {
            if lo == hi {
                fixed.push((i, lo));
                continue;
            }
            if hi.is_finite() {
                rows.push((i, 1.0, hi));
            }
            if lo.is_finite() {
                rows.push((i, -1.0, lo));
            }
        }
        Self { fixed, rows }
    }
}

/// Everything evaluated at one primal point.
struct Point {
    f: f64,
    df: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    jg: Vec<Vec<(usize, f64)>>,
    jh: Vec<Vec<(usize, f64)>>,
}

fn rows_of(t: &Triplets, m: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); m];
    for (r, c, v) in t.iter() {
        out[r].push((c, v));
    }
    out
}

fn evaluate<P: Nlp + ?Sized>(nlp: &P, b: &BoundRows, x: &[f64]) -> Result<Point> {
    let (f, df) = nlp.objective(x)?;
    let ce = nlp.constraints(x)?;
    let (neq, nin) = (ce.eq.len(), ce.ineq.len());
    let mut jg = rows_of(&ce.jac_eq, neq);
    let mut jh = rows_of(&ce.jac_ineq, nin);
    let mut g = ce.eq;
    let mut h = ce.ineq;
    for &(i, v) in &b.fixed {
        g.push(x[i] - v);
        jg.push(vec![(i, 1.0)]);
    }
    for &(i, s, v) in &b.rows {
        h.push(s * (x[i] - v));
        jh.push(vec![(i, s)]);
    }
    Ok(Point { f, df, g, h, jg, jh })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `Lx = ∇f + Jgᵀλ + Jhᵀμ`.
fn lagrangian_gradient(pt: &Point, lam: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = pt.df.clone();
    for (row, &l) in pt.jg.iter().zip(lam) {
        for &(c, v) in row {
            lx[c] += v * l;
        }
    }
    for (row, &m) in pt.jh.iter().zip(mu) {
        for &(c, v) in row {
            lx[c] += v * m;
        }
    }
    lx
}

/// Runs the interior-point method from `x0`, optionally reusing the duals of
/// a previous solve. `h` is only recorded in the log.
pub fn solve<P: Nlp + ?Sized>(nlp: &P, x0: &[f64], warm: Option<&DualState>, opts: &IpmOptions, h_tag: f64) -> Result<IpmResult> {
    let n = nlp.n_vars();
    let (xmin, xmax) = nlp.bounds();
    let bounds = BoundRows::new(xmin, xmax);
    // Strictly interior start for every bounded variable.
    let mut x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (xmin[i], xmax[i]);
            if lo == hi {
                return lo;
            }
            let margin = if lo.is_finite() && hi.is_finite() { 1e-8 * (hi - lo) } else { 1e-8 };
            let mut v = v;
            if lo.is_finite() && v < lo + margin {
                v = lo + margin.min(0.5 * (hi - lo));
            }
            if hi.is_finite() && v > hi - margin {
                v = hi - margin.min(0.5 * (hi - lo));
            }
            v
        })
        .collect();
    let mut pt = evaluate(nlp, &bounds, &x)?;
    let (neq, niq) = (pt.g.len(), pt.h.len());
    let n_nl_ineq = niq - bounds.rows.len();

    let (mut lam, mut mu, mut z) = match warm {
        Some(d) if d.lam.len() == neq && d.mu.len() == niq => {
            let mut z = d.z.clone();
            for (k, zk) in z.iter_mut().enumerate() {
                if k >= n_nl_ineq {
                    *zk = -pt.h[k];
                } else {
                    *zk = zk.max(1e-10);
                }
            }
            let mu: Vec<f64> = d.mu.iter().map(|m| m.max(1e-10)).collect();
            (d.lam.clone(), mu, z)
        }
        _ => {
            let mut z = vec![Z0; niq];
            for k in 0..niq {
                if k >= n_nl_ineq || pt.h[k] < -Z0 {
                    z[k] = -pt.h[k];
                }
            }
            let gamma0 = 1.0;
            let mu: Vec<f64> = z.iter().map(|&zk| if gamma0 / zk > Z0 { gamma0 / zk } else { Z0 }).collect();
            (vec![0.0; neq], mu, z)
        }
    };
    if z.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Solver("initial point violates a bound".into()));
    }
    let mut gamma = if niq > 0 { SIGMA * dot(&z, &mu) / niq as f64 } else { 0.0 };
    let mut records = Vec::new();
    let mut f_prev = pt.f;
    let mut converged = false;
    let mut iterations = 0;
    let (mut feas, mut grad, mut comp);

    loop {
        let lx = lagrangian_gradient(&pt, &lam, &mu);
        let maxh = pt.h.iter().fold(0.0f64, |m, &v| m.max(v));
        feas = inf_norm(&pt.g).max(maxh);
        let scale_x = 1.0 + inf_norm(&x);
        grad = inf_norm(&lx) / (1.0 + inf_norm(&lam).max(inf_norm(&mu)));
        comp = dot(&z, &mu) / scale_x;
        let cost = (pt.f - f_prev).abs() / (1.0 + f_prev.abs());
        records.push(IterationRecord {
            iter: iterations,
            h: h_tag,
            mu: gamma,
            step: records.last().map_or(0.0, |r: &IterationRecord| r.step),
            feas,
            opt: grad,
            comp,
            cost: pt.f,
        });
        if feas <= 0.1 * opts.feas_tol && grad <= opts.opt_tol && comp <= opts.opt_tol && (iterations == 0 || cost <= opts.opt_tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter || !feas.is_finite() {
            break;
        }
        iterations += 1;

        // Condensed KKT system.
        let lxx = nlp.hessian(&x, 1.0, &lam[..neq - bounds.fixed.len()], &mu[..n_nl_ineq])?;
        let mut kkt = lxx.clone();
        let mut rhs = vec![0.0; n + neq];
        for (i, v) in lx.iter().enumerate() {
            rhs[i] = -v;
        }
        for (k, row) in pt.jh.iter().enumerate() {
            let w = mu[k] / z[k];
            let s = (gamma + mu[k] * pt.h[k]) / z[k];
            for &(a, va) in row {
                rhs[a] -= va * s;
                for &(b, vb) in row {
                    kkt.push(a, b, w * va * vb);
                }
            }
        }
        for (r, row) in pt.jg.iter().enumerate() {
            for &(c, v) in row {
                kkt.push(n + r, c, v);
                kkt.push(c, n + r, v);
            }
            rhs[n + r] = -pt.g[r];
        }
        let sol = match solve_regularized(n, neq, &kkt, &rhs) {
            Ok(s) => s,
            Err(Error::Singular) => {
                log::warn!("KKT system singular at iteration {iterations}; stopping");
                break;
            }
            Err(e) => return Err(e),
        };
        let (dx, dlam) = sol.split_at(n);

        let mut dz = vec![0.0; niq];
        let mut dmu = vec![0.0; niq];
        for k in 0..niq {
            let jdx: f64 = pt.jh[k].iter().map(|&(c, v)| v * dx[c]).sum();
            dz[k] = -pt.h[k] - z[k] - jdx;
            dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
        }
        let mut alpha_p: f64 = 1.0;
        let mut alpha_d: f64 = 1.0;
        for k in 0..niq {
            if dz[k] < 0.0 {
                alpha_p = alpha_p.min(XI * -z[k] / dz[k]);
            }
            if dmu[k] < 0.0 {
                alpha_d = alpha_d.min(XI * -mu[k] / dmu[k]);
            }
        }

        // Back off if the trial point leaves the domain of the curves.
        let mut accepted = None;
        while accepted.is_none() {
            let trial = x.iter().zip(dx).map(|(a, b)| a + alpha_p * b).collect::<Vec<_>>();
            match evaluate(nlp, &bounds, &trial) {
                Ok(p) if p.f.is_finite() && p.g.iter().all(|v| v.is_finite()) => accepted = Some((trial, p)),
                Ok(_) | Err(Error::Domain(_)) => {
                    alpha_p *= 0.5;
                    if alpha_p < 1e-12 {
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let Some((mut trial, mut p)) = accepted else {
            log::warn!("step size collapsed at a domain boundary");
            break;
        };

        // A step that worsens both feasibility and stationarity is cut back
        // until the barrier Lagrangian follows its quadratic model.
        let feas_cond = |q: &Point, x: &[f64]| {
            let maxh = q.h.iter().fold(0.0f64, |m, &v| m.max(v));
            inf_norm(&q.g).max(maxh) / (1.0 + inf_norm(x).max(inf_norm(&z)))
        };
        let grad_cond = |q: &Point| inf_norm(&lagrangian_gradient(q, &lam, &mu)) / (1.0 + inf_norm(&lam).max(inf_norm(&mu)));
        if feas_cond(&p, &trial) > feas_cond(&pt, &x) && grad_cond(&p) > grad_cond(&pt) {
            let barrier = |q: &Point| {
                q.f + dot(&lam, &q.g) + q.h.iter().zip(&z).zip(&mu).map(|((h, z), m)| m * (h + z)).sum::<f64>()
                    - gamma * z.iter().map(|v| v.ln()).sum::<f64>()
            };
            let l0 = barrier(&pt);
            let mut hx = vec![0.0; n];
            for (r, c, v) in lxx.iter() {
                hx[r] += v * dx[c];
            }
            let slope = dot(&lx, dx);
            let curvature = 0.5 * dot(dx, &hx);
            let mut a = alpha_p;
            for _ in 0..MAX_REDUCTIONS {
                let predicted = a * slope + a * a * curvature;
                let rho = (barrier(&p) - l0) / predicted;
                if rho > RHO.0 && rho < RHO.1 {
                    break;
                }
                let candidate = a * 0.5;
                let t: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + candidate * b).collect();
                match evaluate(nlp, &bounds, &t) {
                    Ok(q) if q.f.is_finite() && q.g.iter().all(|v| v.is_finite()) => {
                        a = candidate;
                        trial = t;
                        p = q;
                    }
                    Ok(_) | Err(Error::Domain(_)) => a = candidate,
                    Err(e) => return Err(e),
                }
            }
            let cut = a / alpha_p;
            alpha_p = a;
            alpha_d *= cut;
        }
        pt = p;
        x = trial;
        for k in 0..niq {
            z[k] += alpha_p * dz[k];
            mu[k] += alpha_d * dmu[k];
        }
        for (l, d) in lam.iter_mut().zip(dlam) {
            *l += alpha_d * d;
        }
        gamma = if niq > 0 { SIGMA * dot(&z, &mu) / niq as f64 } else { 0.0 };
        f_prev = records.last().unwrap().cost;
        if let Some(r) = records.last_mut() {
            r.step = alpha_p;
        }
    }
    Ok(IpmResult {
        objective: pt.f,
        x,
        duals: DualState { lam, mu, z },
        converged,
        iterations,
        feasibility: feas,
        gradient: grad,
        complementarity: comp,
        records,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the KKT system, adding primal and dual regularization if the
/// factorization breaks down.
fn solve_regularized(n: usize, neq: usize, kkt: &Triplets, rhs: &[f64]) -> Result<Vec<f64>> {
    match solve_sparse(n + neq, kkt, rhs) {
        Ok(x) => return Ok(x),
        Err(Error::Singular) => {}
        Err(e) => return Err(e),
    }
    let mut delta = 1e-8;
    while delta <= 1e4 {
        let mut t = kkt.clone();
        for i in 0..n {
            t.push(i, i, delta);
        }
        for r in 0..neq {
            t.push(n + r, n + r, -1e-10);
        }
        if let Ok(x) = solve_sparse(n + neq, &t, rhs) {
            return Ok(x);
        }
        delta *= 100.0;
    }
    Err(Error::Singular)
}
