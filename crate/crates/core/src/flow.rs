//! Polar-coordinate power injections and branch flows with exact first and
//! second derivatives. Shared by the Newton power flow and the NLP.
//!
//! Every quantity is a sum of terms `Vi·Vk·(a·cos θ + b·sin θ)` with
//! `θ = θi − θk`, plus diagonal terms `c·Vi²`. Local variable order of a
//! term is `[θi, θk, Vi, Vk]`.

use num_complex::Complex64;

use crate::grid::Scenario;

/// One off-diagonal term with its local gradient and Hessian.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

/// `Vi·Vk·(a·cos θ + b·sin θ)`.
#[inline]
pub fn term(a: f64, b: f64, vi: f64, vk: f64, ti: f64, tk: f64) -> Term {
    let (sin, cos) = (ti - tk).sin_cos();
    let c = a * cos + b * sin;
    let s = -a * sin + b * cos;
    let vv = vi * vk;
    Term {
        value: vv * c,
        grad: [vv * s, -vv * s, vk * c, vi * c],
        hess: [
            [-vv * c, vv * c, vk * s, vi * s],
            [vv * c, -vv * c, -vk * s, -vi * s],
            [vk * s, -vk * s, 0.0, c],
            [vi * s, -vi * s, c, 0.0],
        ],
    }
}

/// Variable indices of the voltage block of one scenario.
#[derive(Debug, Clone, Copy)]
pub struct VoltageIndex {
    pub vm: usize,
    pub va: usize,
}

impl VoltageIndex {
    #[inline]
    fn local(&self, i: usize, k: usize) -> [usize; 4] {
        [self.va + i, self.va + k, self.vm + i, self.vm + k]
    }
}

/// Real and reactive injections `S_i = V_i·conj((Y V)_i)` at every bus.
pub fn injections(scenario: &Scenario, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = scenario.n_bus();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for (k, y) in scenario.ybus.row(i) {
            if k == i {
                p[i] += vm[i] * vm[i] * y.re;
                q[i] -= vm[i] * vm[i] * y.im;
            } else {
                p[i] += term(y.re, y.im, vm[i], vm[k], va[i], va[k]).value;
                q[i] += term(-y.im, y.re, vm[i], vm[k], va[i], va[k]).value;
            }
        }
    }
    (p, q)
}

/// Sparse gradient of the injections: one list of `(variable, ∂)` for P and Q
/// per bus, indices given by `ix`.
pub fn injection_jacobian(
    scenario: &Scenario,
    vm: &[f64],
    va: &[f64],
    ix: VoltageIndex,
) -> (Vec<Vec<(usize, f64)>>, Vec<Vec<(usize, f64)>>) {
    let n = scenario.n_bus();
    let mut jp = vec![Vec::new(); n];
    let mut jq = vec![Vec::new(); n];
    for i in 0..n {
        for (k, y) in scenario.ybus.row(i) {
            if k == i {
                jp[i].push((ix.vm + i, 2.0 * vm[i] * y.re));
                jq[i].push((ix.vm + i, -2.0 * vm[i] * y.im));
                continue;
            }
            let idx = ix.local(i, k);
            let tp = term(y.re, y.im, vm[i], vm[k], va[i], va[k]);
            let tq = term(-y.im, y.re, vm[i], vm[k], va[i], va[k]);
            for a in 0..4 {
                jp[i].push((idx[a], tp.grad[a]));
                jq[i].push((idx[a], tq.grad[a]));
            }
        }
    }
    (jp, jq)
}

/// Adds `Σ_i (wp_i ∇²P_i + wq_i ∇²Q_i)` to `out` as `(row, col, value)`.
pub fn injection_hessian(
    scenario: &Scenario,
    vm: &[f64],
    va: &[f64],
    ix: VoltageIndex,
    wp: &[f64],
    wq: &[f64],
    out: &mut Vec<(usize, usize, f64)>,
) {
    for i in 0..scenario.n_bus() {
        if wp[i] == 0.0 && wq[i] == 0.0 {
            continue;
        }
        for (k, y) in scenario.ybus.row(i) {
            if k == i {
                let d = 2.0 * (wp[i] * y.re - wq[i] * y.im);
                out.push((ix.vm + i, ix.vm + i, d));
                continue;
            }
            let idx = ix.local(i, k);
            let tp = term(y.re, y.im, vm[i], vm[k], va[i], va[k]);
            let tq = term(-y.im, y.re, vm[i], vm[k], va[i], va[k]);
            for a in 0..4 {
                for b in 0..4 {
                    let h = wp[i] * tp.hess[a][b] + wq[i] * tq.hess[a][b];
                    if h != 0.0 {
                        out.push((idx[a], idx[b], h));
                    }
                }
            }
        }
    }
}

/// Squared apparent flow at one end of a line with gradient and Hessian in
/// the local order `[θi, θk, Vi, Vk]`, where `i` is the measuring end.
/// `yii` and `yik` are the self and mutual entries of that end's row.
pub fn squared_flow(yii: Complex64, yik: Complex64, vi: f64, vk: f64, ti: f64, tk: f64) -> Term {
    let tp = term(yik.re, yik.im, vi, vk, ti, tk);
    let tq = term(-yik.im, yik.re, vi, vk, ti, tk);
    let p = vi * vi * yii.re + tp.value;
    let q = -vi * vi * yii.im + tq.value;
    let mut gp = tp.grad;
    let mut gq = tq.grad;
    gp[2] += 2.0 * vi * yii.re;
    gq[2] -= 2.0 * vi * yii.im;
    let mut hp = tp.hess;
    let mut hq = tq.hess;
    hp[2][2] += 2.0 * yii.re;
    hq[2][2] -= 2.0 * yii.im;
    let mut grad = [0.0; 4];
    let mut hess = [[0.0; 4]; 4];
    for a in 0..4 {
        grad[a] = 2.0 * (p * gp[a] + q * gq[a]);
        for b in 0..4 {
            hess[a][b] = 2.0 * (gp[a] * gp[b] + p * hp[a][b] + gq[a] * gq[b] + q * hq[a][b]);
        }
    }
    Term {
        value: p * p + q * q,
        grad,
        hess,
    }
}

/// Complex power entering each in-service line at its from and to end.
pub fn line_flows(scenario: &Scenario, vm: &[f64], va: &[f64]) -> Vec<(Complex64, Complex64)> {
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let i_f = scenario.yf.mul_vec(&v);
    let i_t = scenario.yt.mul_vec(&v);
    scenario
        .line_ends
        .iter()
        .enumerate()
        .map(|(r, &(f, t))| (v[f] * i_f[r].conj(), v[t] * i_t[r].conj()))
        .collect()
}

/// Self and mutual admittance entries for each end of line row `r`:
/// `(y_ff, y_ft, y_tt, y_tf)`.
pub fn line_entries(scenario: &Scenario, r: usize) -> (Complex64, Complex64, Complex64, Complex64) {
    let (f, t) = scenario.line_ends[r];
    (
        scenario.yf.get(r, f),
        scenario.yf.get(r, t),
        scenario.yt.get(r, t),
        scenario.yt.get(r, f),
    )
}
