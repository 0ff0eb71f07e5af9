//! Generator contingency-response curves.
//!
//! The exact response of a generator is a piecewise set `F_θ` in normalized
//! coordinates `(x, y)`: on `-1 < x < 1` the point lies on the line
//! `y = tan(θ)·x`, at `x = 1` any `y ≥ tan θ` is allowed and at `x = -1` any
//! `y ≤ -tan θ`. With `θ = π/4` this is the clipped active-power redispatch
//! (`x` normalized post-contingency output, `y` normalized desired output
//! `p0 + αΔ`). With `θ = 0` it is PV/PQ switching (`x` normalized reactive
//! output, `y = |v0| - |vc|`).
//!
//! The smooth surrogate replaces `F_θ` by the curve `{(t, g(t)) : |t| < 1}`
//! with
//!
//! ```text
//! g(t) = (a(t) - t) / h · t^(2k) + tan(θ)·t
//! ```
//!
//! where `a` is one of five odd sigmoid inverses diverging at ±1.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SigmoidKind {
    /// `(ln(1+x) - ln(1-x)) / 2`
    Atanh,
    /// `(2/π)·tan(πx/2)`
    TanScaled,
    /// `x / sqrt(1 - x²)`
    Algebraic,
    /// `(2/√π)·erf⁻¹(x)`
    InvErf,
    /// `x / (1 - |x|)`
    InvAbs,
}

impl SigmoidKind {
    pub const ALL: [SigmoidKind; 5] = [
        SigmoidKind::Atanh,
        SigmoidKind::TanScaled,
        SigmoidKind::Algebraic,
        SigmoidKind::InvErf,
        SigmoidKind::InvAbs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SigmoidKind::Atanh => "atanh",
            SigmoidKind::TanScaled => "tan",
            SigmoidKind::Algebraic => "algebraic",
            SigmoidKind::InvErf => "inverf",
            SigmoidKind::InvAbs => "invabs",
        }
    }

    /// Human-readable label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            SigmoidKind::Atanh => "Inverse hyperbolic tangent",
            SigmoidKind::TanScaled => "Inverse arctangent",
            SigmoidKind::Algebraic => "Inverse algebraic",
            SigmoidKind::InvErf => "Inverse error",
            SigmoidKind::InvAbs => "Inverse absolute value",
        }
    }
}

impl fmt::Display for SigmoidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SigmoidKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SigmoidKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sigmoid `{s}`")))
    }
}

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

fn inverse_erf(x: f64) -> f64 {
    let mut y = erf_inv(x);
    // One Newton polish keeps full precision close to ±1.
    let slope = 2.0 / PI.sqrt() * (-y * y).exp();
    if slope > 0.0 && slope.is_finite() {
        y -= (erf(y) - x) / slope;
    }
    y
}

/// Evaluates `a(x)` with its first and second derivatives.
pub fn sigmoid_jet(kind: SigmoidKind, x: f64) -> Result<Jet> {
    if !(x.abs() < 1.0) {
        return Err(Error::Domain(x));
    }
    let jet = match kind {
        SigmoidKind::Atanh => {
            let w = 1.0 - x * x;
            Jet {
                value: x.atanh(),
                d1: 1.0 / w,
                d2: 2.0 * x / (w * w),
            }
        }
        SigmoidKind::TanScaled => {
            let u = FRAC_PI_2 * x;
            let (tan, sec2) = (u.tan(), 1.0 / u.cos().powi(2));
            Jet {
                value: tan / FRAC_PI_2,
                d1: sec2,
                d2: PI * sec2 * tan,
            }
        }
        SigmoidKind::Algebraic => {
            let w = 1.0 - x * x;
            let s = w.sqrt();
            Jet {
                value: x / s,
                d1: 1.0 / (w * s),
                d2: 3.0 * x / (w * w * s),
            }
        }
        SigmoidKind::InvErf => {
            let y = inverse_erf(x);
            let e = (y * y).exp();
            Jet {
                value: 2.0 / PI.sqrt() * y,
                d1: e,
                d2: PI.sqrt() * y * e * e,
            }
        }
        SigmoidKind::InvAbs => {
            let w = 1.0 - x.abs();
            Jet {
                value: x / w,
                d1: 1.0 / (w * w),
                d2: 2.0 * x.signum() / (w * w * w),
            }
        }
    };
    Ok(jet)
}

/// `a(x)` and `a'(x)`.
pub fn sigmoid_eval(kind: SigmoidKind, x: f64) -> Result<(f64, f64)> {
    sigmoid_jet(kind, x).map(|j| (j.value, j.d1))
}

/// Parameters of one smooth surrogate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurveParams {
    /// Slope angle of the middle segment, in `[0, π/2)`.
    pub theta: f64,
    pub kind: SigmoidKind,
    /// Sharpness; larger values hug the exact set more closely.
    pub h: f64,
    /// Order of contact at the origin.
    pub k: u32,
}

impl SmoothCurveParams {
    pub fn new(theta: f64, kind: SigmoidKind, h: f64, k: u32) -> Result<Self> {
        let p = Self { theta, kind, h, k };
        p.validate()?;
        Ok(p)
    }

    /// The active-power coupling curve (`θ = π/4`).
    pub fn active(kind: SigmoidKind, h: f64, k: u32) -> Self {
        Self {
            theta: PI / 4.0,
            kind,
            h,
            k,
        }
    }

    /// The reactive-power / voltage coupling curve (`θ = 0`).
    pub fn reactive(kind: SigmoidKind, h: f64, k: u32) -> Self {
        Self {
            theta: 0.0,
            kind,
            h,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("h must be positive, got {}", self.h)));
        }
        if !(self.theta >= 0.0 && self.theta < FRAC_PI_2 && self.theta.tan().is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must lie in [0, π/2), got {}", self.theta)));
        }
        Ok(())
    }

    pub fn slope(&self) -> f64 {
        // tan(π/4) is 0.9999999999999999 in floating point.
        if (self.theta - PI / 4.0).abs() < 1e-15 {
            1.0
        } else {
            self.theta.tan()
        }
    }
}

/// `g(t)` with first and second derivatives.
pub fn smooth_curve_jet(params: &SmoothCurveParams, t: f64) -> Result<Jet> {
    let a = sigmoid_jet(params.kind, t)?;
    let h = params.h;
    let k = params.k as i32;
    let m = params.slope();
    let core = a.value - t;
    let core1 = a.d1 - 1.0;
    let core2 = a.d2;
    // w(t) = t^(2k) and its derivatives; guard against 0^(negative).
    let pw = |e: i32| if e < 0 { 0.0 } else { t.powi(e) };
    let w = pw(2 * k);
    let w1 = (2 * k) as f64 * pw(2 * k - 1);
    let w2 = (2 * k * (2 * k - 1)) as f64 * pw(2 * k - 2);
    Ok(Jet {
        value: core / h * w + m * t,
        d1: (core1 * w + core * w1) / h + m,
        d2: (core2 * w + 2.0 * core1 * w1 + core * w2) / h,
    })
}

/// `g(t)` and `g'(t)`.
pub fn smooth_curve_g(params: &SmoothCurveParams, t: f64) -> Result<(f64, f64)> {
    smooth_curve_jet(params, t).map(|j| (j.value, j.d1))
}

fn slope_of(theta: f64) -> f64 {
    if (theta - PI / 4.0).abs() < 1e-15 {
        1.0
    } else {
        theta.tan()
    }
}

/// Membership test for the exact set `F_θ`, with the two min-max products
/// allowed to deviate from zero by `tol`.
pub fn exact_membership(theta: f64, x: f64, y: f64, tol: f64) -> bool {
    let m = slope_of(theta);
    let upper = (y - m * x).max(0.0).min((1.0 - x).max(0.0));
    let lower = (m * x - y).max(0.0).min((1.0 + x).max(0.0));
    x >= -1.0 - tol && x <= 1.0 + tol && upper <= tol && lower <= tol
}

/// Euclidean distance from `(x, y)` to `F_θ`.
pub fn distance_to_exact_set(theta: f64, x: f64, y: f64) -> f64 {
    let m = slope_of(theta);
    let s = ((x + m * y) / (1.0 + m * m)).clamp(-1.0, 1.0);
    let seg = (x - s).hypot(y - m * s);
    let up = (x - 1.0).hypot(y - y.max(m));
    let down = (x + 1.0).hypot(y - y.min(-m));
    seg.min(up).min(down)
}

/// Clipped redispatch `max(pmin, min(p0 + αΔ, pmax))`.
pub fn exact_response_active(p0: f64, alpha: f64, delta: f64, pmin: f64, pmax: f64) -> f64 {
    pmin.max((p0 + alpha * delta).min(pmax))
}

/// The same response written as a three-way case split. Exact-boundary
/// desired values fall through to the interior branch.
pub fn exact_response_logical(p0: f64, alpha: f64, delta: f64, pmin: f64, pmax: f64) -> f64 {
    let desired = p0 + alpha * delta;
    if pmax < desired {
        pmax
    } else if pmin > desired {
        pmin
    } else {
        desired
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReactiveRegime {
    /// Reactive output inside its limits, voltage held at the base value.
    Interior,
    /// At the upper limit; voltage may sag below the base value.
    AtMaxVoltageDrop,
    /// At the lower limit; voltage may rise above the base value.
    AtMinVoltageRise,
    /// `qmin == qmax`: output fixed, voltage free.
    Degenerate,
}

/// Classifies a reactive operating point and checks it against the PV/PQ
/// switching rules. `dv = |v0| - |vc|`.
pub fn reactive_regime(q: f64, qmin: f64, qmax: f64, dv: f64, tol: f64) -> (ReactiveRegime, bool) {
    if qmax - qmin <= tol {
        return (ReactiveRegime::Degenerate, (q - qmin).abs() <= tol || (q - qmax).abs() <= tol);
    }
    if q >= qmax - tol {
        (ReactiveRegime::AtMaxVoltageDrop, q <= qmax + tol && dv >= -tol)
    } else if q <= qmin + tol {
        (ReactiveRegime::AtMinVoltageRise, q >= qmin - tol && dv <= tol)
    } else {
        (ReactiveRegime::Interior, dv.abs() <= tol)
    }
}

/// The two complementarity products of the min-max reactive rule; both vanish
/// exactly on valid points.
pub fn reactive_minmax_residual(q: f64, qmin: f64, qmax: f64, dv: f64) -> (f64, f64) {
    let plus = dv.max(0.0).min((qmax - q).max(0.0));
    let minus = (-dv).max(0.0).min((q - qmin).max(0.0));
    (plus, minus)
}

/// Affine map of `[lo, hi]` onto `[-1, 1]`.
pub fn normalize(value: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("degenerate limits [{lo}, {hi}]")));
    }
    Ok(((value - lo) - (hi - value)) / (hi - lo))
}

/// Inverse of [`normalize`].
pub fn denormalize(t: f64, lo: f64, hi: f64) -> f64 {
    0.5 * (t * (hi - lo) + hi + lo)
}

pub fn normalize_active(p: f64, pmin: f64, pmax: f64) -> Result<f64> {
    normalize(p, pmin, pmax)
}

/// Residual of the smooth active coupling and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveCoupling {
    /// `normalize(p0 + αΔ) - g(normalize(p_c))`
    pub residual: f64,
    /// Gradient with respect to `[p_c, p0, alpha, delta]`.
    pub grad: [f64; 4],
    /// `∂²/∂p_c²`
    pub d2_pc: f64,
    /// `∂²/∂α∂Δ`
    pub d2_alpha_delta: f64,
}

pub fn smooth_coupling_residual_active(
    p_c: f64,
    p0: f64,
    alpha: f64,
    delta: f64,
    pmin: f64,
    pmax: f64,
    params: &SmoothCurveParams,
) -> Result<ActiveCoupling> {
    let scale = 2.0 / (pmax - pmin);
    let t = normalize(p_c, pmin, pmax)?;
    let desired = normalize(p0 + alpha * delta, pmin, pmax)?;
    let g = smooth_curve_jet(params, t)?;
    Ok(ActiveCoupling {
        residual: desired - g.value,
        grad: [-g.d1 * scale, scale, scale * delta, scale * alpha],
        d2_pc: -g.d2 * scale * scale,
        d2_alpha_delta: scale,
    })
}

/// Residual of the smooth reactive / voltage coupling and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactiveCoupling {
    /// `(|v0| - |vc|) - g(normalize(q))`
    pub residual: f64,
    /// Gradient with respect to `[q, v0_mag, vc_mag]`.
    pub grad: [f64; 3],
    /// `∂²/∂q²`
    pub d2_q: f64,
}

pub fn smooth_coupling_residual_reactive(
    q: f64,
    qmin: f64,
    qmax: f64,
    v0_mag: f64,
    vc_mag: f64,
    params: &SmoothCurveParams,
) -> Result<ReactiveCoupling> {
    let scale = 2.0 / (qmax - qmin);
    let t = normalize(q, qmin, qmax)?;
    let g = smooth_curve_jet(params, t)?;
    Ok(ReactiveCoupling {
        residual: (v0_mag - vc_mag) - g.value,
        grad: [-g.d1 * scale, 1.0, -1.0],
        d2_q: -g.d2 * scale * scale,
    })
}

/// Samples `(t, g(t))` on a uniform grid over `[-t_max, t_max]`.
pub fn sample_curve(params: &SmoothCurveParams, n: usize, t_max: f64) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    if !(t_max > 0.0 && t_max < 1.0) {
        return Err(Error::InvalidParameter(format!("t_max must lie in (0, 1), got {t_max}")));
    }
    (0..n)
        .map(|i| {
            let t = if 2 * i + 1 == n {
                0.0
            } else {
                -t_max + 2.0 * t_max * i as f64 / (n - 1) as f64
            };
            smooth_curve_g(params, t).map(|(g, _)| (t, g))
        })
        .collect()
}

/// CSV form of [`sample_curve`] with columns `t,g` at 9 significant digits.
pub fn sample_curve_csv(params: &SmoothCurveParams, n: usize, t_max: f64) -> Result<String> {
    let rows = sample_curve(params, n, t_max)?;
    let mut out = String::from("t,g\n");
    for (t, g) in rows {
        out.push_str(&format!("{t:.8e},{g:.8e}\n"));
    }
    Ok(out)
}

/// Largest distance between the smooth curve and the exact set `F_θ`,
/// measured on a dense grid over the open interval. This bounds how far an
/// exactly-satisfied smooth coupling can sit from the exact model.
pub fn curve_gap_bound(params: &SmoothCurveParams) -> Result<f64> {
    params.validate()?;
    let n = 200_001;
    let t_max = 1.0 - 1e-9;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let t = -t_max + 2.0 * t_max * i as f64 / (n - 1) as f64;
        let (g, _) = smooth_curve_g(params, t)?;
        worst = worst.max(distance_to_exact_set(params.theta, t, g));
    }
    Ok(worst)
}

/// Parameter sweeps for curve-family plots: for both slopes (`π/4`, `0`) and
/// every sigmoid, an `h` sweep at `k = 1`, a `k` sweep at `h = 50`, and the
/// simulation setting `h = 50, k = 1`.
pub fn default_sweep() -> Vec<(String, SmoothCurveParams)> {
    let mut out = Vec::new();
    for (tag, theta) in [("pi4", PI / 4.0), ("zero", 0.0)] {
        for kind in SigmoidKind::ALL {
            for h in [1.0, 5.0, 10.0, 50.0, 100.0] {
                out.push((format!("h_sweep_{tag}_{kind}_h{h}_k1"), SmoothCurveParams { theta, kind, h, k: 1 }));
            }
            for k in [0u32, 1, 2, 3] {
                out.push((format!("k_sweep_{tag}_{kind}_h50_k{k}"), SmoothCurveParams { theta, kind, h: 50.0, k }));
            }
        }
    }
    out
}
