//! Big-M mixed-integer encoding of the exact contingency response, written
//! in CPLEX LP format, plus a small reader for that format.
//!
//! Per responding generator and contingency the model has four binaries and
//! eight rows:
//!
//! ```text
//! p0 + αΔ − pc ≤ M(1 − xP+)        |v0| − |vc| ≤ Vr(1 − xQ+)
//! pc − p0 − αΔ ≤ M(1 − xP−)        |vc| − |v0| ≤ Vr(1 − xQ−)
//! pmax − pc ≤ (pmax − pmin) xP+    qmax − qc ≤ (qmax − qmin) xQ+
//! pc − pmin ≤ (pmax − pmin) xP−    qc − qmin ≤ (qmax − qmin) xQ−
//! ```
//!
//! with `Vr = vmax − vmin`. `α` is fixed per generator, so every row is
//! linear.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nlp::ScopfProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigMConfig {
    /// Bound on `|Δ_c|`.
    pub delta_bound: f64,
    /// Bound on every participation weight.
    pub alpha_bound: f64,
}

impl BigMConfig {
    /// `|Δ| ≤ Σ pmax`, `α ≤ 1`.
    pub fn for_problem(problem: &ScopfProblem) -> Self {
        Self {
            delta_bound: problem.delta_bound,
            alpha_bound: 1.0,
        }
    }

    /// Smallest multiplier covering every regime of the active rows.
    pub fn m_active(&self, pmin: f64, pmax: f64) -> f64 {
        (pmax - pmin) + self.alpha_bound.abs() * self.delta_bound
    }
}

/// Data of one generator in one contingency scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseUnit {
    pub scenario: usize,
    pub gen: usize,
    /// Internal index of the generator's bus.
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub alpha: f64,
}

/// Every in-service generator of every contingency scenario. Participation
/// weights come from the problem's fixed policy (uniform when optimized).
pub fn response_units(problem: &ScopfProblem) -> Vec<ResponseUnit> {
    let net = &problem.network;
    let mut out = Vec::new();
    for c in 1..problem.scenarios.len() {
        let alpha = problem.fixed_alpha(c);
        for (g, gen) in net.generators.iter().enumerate() {
            let Some(bus) = problem.scenarios[c].gen_bus[g] else { continue };
            out.push(ResponseUnit {
                scenario: c,
                gen: g,
                bus,
                pmin: gen.pmin,
                pmax: gen.pmax,
                qmin: gen.qmin,
                qmax: gen.qmax,
                vmin: net.buses[bus].vmin,
                vmax: net.buses[bus].vmax,
                alpha: alpha[g],
            });
        }
    }
    out
}

pub fn export_bigm_milp(problem: &ScopfProblem, config: &BigMConfig) -> Result<String> {
    export_units(&response_units(problem), config)
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// `+ 3 x` / `- 3 x` with a leading sign always present.
fn lin(coef: f64, var: &str) -> String {
    if coef < 0.0 {
        format!(" - {} {var}", num(-coef))
    } else {
        format!(" + {} {var}", num(coef))
    }
}

/// Writes the big-M model for the given units.
pub fn export_units(units: &[ResponseUnit], config: &BigMConfig) -> Result<String> {
    if !config.delta_bound.is_finite() || !config.alpha_bound.is_finite() {
        return Err(Error::InvalidParameter("big-M bounds must be finite".into()));
    }
    for u in units {
        let vals = [u.pmin, u.pmax, u.qmin, u.qmax, u.vmin, u.vmax, u.alpha];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "generator {} in scenario {} has an infinite bound",
                u.gen + 1,
                u.scenario
            )));
        }
    }
    let mut rows = String::new();
    let mut bounds: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut binaries = Vec::new();
    for u in units {
        let (c, g, i) = (u.scenario, u.gen, u.bus);
        let p0 = format!("p0_g{g}");
        let pc = format!("p_c{c}_g{g}");
        let qc = format!("q_c{c}_g{g}");
        let v0 = format!("v0_b{i}");
        let vc = format!("v_c{c}_b{i}");
        let d = format!("d_c{c}");
        let [xpp, xpm, xqp, xqm] = ["xpp", "xpm", "xqp", "xqm"].map(|k| format!("{k}_c{c}_g{g}"));
        let m = config.m_active(u.pmin, u.pmax);
        let pr = u.pmax - u.pmin;
        let qr = u.qmax - u.qmin;
        let vr = u.vmax - u.vmin;
        let tag = format!("c{c}_g{g}");
        let _ = writeln!(rows, " ap_{tag}:{}{}{}{} <= {}", lin(1.0, &p0), lin(u.alpha, &d), lin(-1.0, &pc), lin(m, &xpp), num(m));
        let _ = writeln!(rows, " am_{tag}:{}{}{}{} <= {}", lin(1.0, &pc), lin(-1.0, &p0), lin(-u.alpha, &d), lin(m, &xpm), num(m));
        let _ = writeln!(rows, " au_{tag}:{}{} <= {}", lin(-1.0, &pc), lin(-pr, &xpp), num(-u.pmax));
        let _ = writeln!(rows, " al_{tag}:{}{} <= {}", lin(1.0, &pc), lin(-pr, &xpm), num(u.pmin));
        let _ = writeln!(rows, " rp_{tag}:{}{}{} <= {}", lin(1.0, &v0), lin(-1.0, &vc), lin(vr, &xqp), num(vr));
        let _ = writeln!(rows, " rm_{tag}:{}{}{} <= {}", lin(1.0, &vc), lin(-1.0, &v0), lin(vr, &xqm), num(vr));
        let _ = writeln!(rows, " ru_{tag}:{}{} <= {}", lin(-1.0, &qc), lin(-qr, &xqp), num(-u.qmax));
        let _ = writeln!(rows, " rl_{tag}:{}{} <= {}", lin(1.0, &qc), lin(-qr, &xqm), num(u.qmin));
        bounds.insert(p0, (u.pmin, u.pmax));
        bounds.insert(pc, (u.pmin, u.pmax));
        bounds.insert(qc, (u.qmin, u.qmax));
        bounds.insert(v0, (u.vmin, u.vmax));
        bounds.insert(vc, (u.vmin, u.vmax));
        bounds.insert(d, (-config.delta_bound, config.delta_bound));
        binaries.extend([xpp, xpm, xqp, xqm]);
    }
    let mut out = String::from("\\ Big-M contingency response model\nMinimize\n obj:");
    let objective_var = bounds.keys().find(|k| k.starts_with("d_c")).cloned();
    match objective_var {
        Some(v) => {
            let _ = write!(out, " 0 {v}");
        }
        None => out.push_str(" 0"),
    }
    out.push_str("\nSubject To\n");
    out.push_str(&rows);
    out.push_str("Bounds\n");
    for (v, (lo, hi)) in &bounds {
        let _ = writeln!(out, " {} <= {v} <= {}", num(*lo), num(*hi));
    }
    out.push_str("Binaries\n");
    for b in &binaries {
        let _ = writeln!(out, " {b}");
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A parsed LP-format model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel {
    pub minimize: bool,
    pub objective: Vec<(String, f64)>,
    pub rows: Vec<LpRow>,
    /// Default bounds are `[0, +∞)`.
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub binaries: Vec<String>,
}

impl LpModel {
    pub fn bound(&self, var: &str) -> (f64, f64) {
        if self.binaries.iter().any(|b| b == var) {
            return (0.0, 1.0);
        }
        self.bounds.get(var).copied().unwrap_or((0.0, f64::INFINITY))
    }

    pub fn variables(&self) -> HashSet<&str> {
        let mut out: HashSet<&str> = HashSet::new();
        for r in &self.rows {
            out.extend(r.terms.iter().map(|(v, _)| v.as_str()));
        }
        out.extend(self.objective.iter().map(|(v, _)| v.as_str()));
        out.extend(self.bounds.keys().map(String::as_str));
        out.extend(self.binaries.iter().map(String::as_str));
        out
    }

    /// Feasible interval of `free` when every other variable is fixed by
    /// `values`; `None` if the rows are inconsistent.
    pub fn interval(&self, values: &BTreeMap<String, f64>, free: &str, tol: f64) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = self.bound(free);
        for r in &self.rows {
            let mut a = 0.0;
            let mut rest = 0.0;
            for (v, c) in &r.terms {
                if v == free {
                    a += c;
                } else {
                    rest += c * values.get(v).copied().unwrap_or(0.0);
                }
            }
            let b = r.rhs - rest;
            let senses: &[RowSense] = match r.sense {
                RowSense::Eq => &[RowSense::Le, RowSense::Ge],
                RowSense::Le => &[RowSense::Le],
                RowSense::Ge => &[RowSense::Ge],
            };
            for &s in senses {
                // a·x ≤ b  or  a·x ≥ b
                let (a, b) = if s == RowSense::Ge { (-a, -b) } else { (a, b) };
                if a.abs() < 1e-15 {
                    if b < -tol {
                        return None;
                    }
                } else if a > 0.0 {
                    hi = hi.min(b / a);
                } else {
                    lo = lo.max(b / a);
                }
            }
        }
        (lo <= hi + tol).then_some((lo, hi))
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("expected a number, found `{tok}`"),
        }),
    }
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || "_!\"#$%&()/,;?@{}~'".contains(c))
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "_!\"#$%&()/,.;?@{}~'".contains(c))
        && s.len() <= 255
}

/// Parses `[+|-] [coef] var ...` into terms.
fn parse_terms(text: &str, line: usize) -> Result<Vec<(String, f64)>> {
    let mut terms = Vec::new();
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        if toks[i] == "+" || toks[i] == "-" {
            if toks[i] == "-" {
                sign = -1.0;
            }
            i += 1;
        }
        let Some(&tok) = toks.get(i) else {
            return Err(Error::Parse {
                line,
                message: "dangling sign".into(),
            });
        };
        let (coef, var) = if let Ok(c) = tok.parse::<f64>() {
            i += 1;
            let Some(&v) = toks.get(i) else {
                // A bare constant (e.g. an empty objective).
                if c == 0.0 {
                    break;
                }
                return Err(Error::Parse {
                    line,
                    message: "constant term without variable".into(),
                });
            };
            (c, v)
        } else {
            (1.0, tok)
        };
        if !valid_name(var) {
            return Err(Error::Parse {
                line,
                message: format!("invalid variable name `{var}`"),
            });
        }
        terms.push((var.to_string(), sign * coef));
        i += 1;
    }
    Ok(terms)
}

#[derive(PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

/// Reads the LP-format subset written by [`export_units`] and checks its
/// grammar: section order, row syntax, variable names, and that every row
/// variable has a declared bound or is binary.
pub fn parse_lp(text: &str) -> Result<LpModel> {
    let mut model = LpModel::default();
    let mut section = Section::None;
    let mut seen_objective = false;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('\\').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let next = match lower.as_str() {
            "minimize" | "minimum" | "min" => Some((Section::Objective, Some(true))),
            "maximize" | "maximum" | "max" => Some((Section::Objective, Some(false))),
            "subject to" | "such that" | "st" | "s.t." => Some((Section::Constraints, None)),
            "bounds" | "bound" => Some((Section::Bounds, None)),
            "binaries" | "binary" | "bin" => Some((Section::Binaries, None)),
            "end" => Some((Section::End, None)),
            _ => None,
        };
        if let Some((s, dir)) = next {
            let order = |s: &Section| match s {
                Section::None => 0,
                Section::Objective => 1,
                Section::Constraints => 2,
                Section::Bounds => 3,
                Section::Binaries => 4,
                Section::End => 5,
            };
            if order(&s) <= order(&section) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("section `{line}` out of order"),
                });
            }
            if let Some(d) = dir {
                model.minimize = d;
                seen_objective = true;
            }
            section = s;
            continue;
        }
        match section {
            Section::None | Section::End => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "content outside a section".into(),
                })
            }
            Section::Objective => {
                let body = line.split_once(':').map_or(line, |(_, b)| b);
                model.objective.extend(parse_terms(body, line_no)?);
            }
            Section::Constraints => {
                let (name, body) = line.split_once(':').ok_or(Error::Parse {
                    line: line_no,
                    message: "constraint without a name".into(),
                })?;
                let name = name.trim();
                if !valid_name(name) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("invalid row name `{name}`"),
                    });
                }
                let (op, sense) = if body.contains("<=") {
                    ("<=", RowSense::Le)
                } else if body.contains(">=") {
                    (">=", RowSense::Ge)
                } else if body.contains('=') {
                    ("=", RowSense::Eq)
                } else {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "constraint without relational operator".into(),
                    });
                };
                let (lhs, rhs) = body.split_once(op).unwrap();
                model.rows.push(LpRow {
                    name: name.to_string(),
                    terms: parse_terms(lhs, line_no)?,
                    sense,
                    rhs: parse_number(rhs.trim(), line_no)?,
                });
            }
            Section::Bounds => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                match toks.as_slice() {
                    [lo, "<=", v, "<=", hi] => {
                        model.bounds.insert(v.to_string(), (parse_number(lo, line_no)?, parse_number(hi, line_no)?));
                    }
                    [v, ">=", lo] => {
                        let e = model.bounds.entry(v.to_string()).or_insert((0.0, f64::INFINITY));
                        e.0 = parse_number(lo, line_no)?;
                    }
                    [v, "<=", hi] => {
                        let e = model.bounds.entry(v.to_string()).or_insert((0.0, f64::INFINITY));
                        e.1 = parse_number(hi, line_no)?;
                    }
                    [v, free] if free.eq_ignore_ascii_case("free") => {
                        model.bounds.insert(v.to_string(), (f64::NEG_INFINITY, f64::INFINITY));
                    }
                    _ => {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("malformed bound `{line}`"),
                        })
                    }
                }
            }
            Section::Binaries => {
                for v in line.split_whitespace() {
                    if !valid_name(v) {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("invalid binary name `{v}`"),
                        });
                    }
                    model.binaries.push(v.to_string());
                }
            }
        }
    }
    if section != Section::End {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "missing End".into(),
        });
    }
    if !seen_objective {
        return Err(Error::Parse {
            line: 1,
            message: "missing objective section".into(),
        });
    }
    for r in &model.rows {
        for (v, _) in &r.terms {
            if !model.bounds.contains_key(v) && !model.binaries.contains(v) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("variable `{v}` in row `{}` has no declared bound", r.name),
                });
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{exact_membership, exact_response_active, normalize};
    use std::f64::consts::FRAC_PI_4;

    fn toy_unit() -> ResponseUnit {
        ResponseUnit {
            scenario: 1,
            gen: 0,
            bus: 0,
            pmin: 0.2,
            pmax: 1.0,
            qmin: -0.3,
            qmax: 0.5,
            vmin: 0.95,
            vmax: 1.05,
            alpha: 0.5,
        }
    }

    fn config() -> BigMConfig {
        BigMConfig {
            delta_bound: 2.0,
            alpha_bound: 1.0,
        }
    }

    #[test]
    fn one_generator_one_contingency_counts() {
        let text = export_units(&[toy_unit()], &config()).unwrap();
        let m = parse_lp(&text).unwrap();
        assert_eq!(m.binaries.len(), 4);
        assert_eq!(m.rows.len(), 8);
        assert!(m.minimize);
    }

    #[test]
    fn infinite_bound_rejected() {
        let mut u = toy_unit();
        u.vmax = f64::INFINITY;
        assert!(export_units(&[u], &config()).is_err());
        let cfg = BigMConfig {
            delta_bound: f64::INFINITY,
            alpha_bound: 1.0,
        };
        assert!(export_units(&[toy_unit()], &cfg).is_err());
    }

    #[test]
    fn reader_rejects_malformed_models() {
        assert!(parse_lp("Minimize\n obj: 0 x\nSubject To\n c1: x <= 1\n").is_err());
        assert!(parse_lp("Subject To\n c1: x <= 1\nMinimize\n obj: x\nEnd\n").is_err());
        assert!(parse_lp("Minimize\n obj: x\nSubject To\n c1: x + y 1\nBounds\n 0 <= x <= 1\n 0 <= y <= 1\nEnd\n").is_err());
        assert!(parse_lp("Minimize\n obj: x\nSubject To\n c1: x + y <= 1\nBounds\n 0 <= x <= 1\nEnd\n").is_err());
        assert!(parse_lp("Minimize\n obj: x\nSubject To\n 1c: x <= 1\nBounds\n 0 <= x <= 1\nEnd\n").is_err());
    }

    /// Enumerates the four active binaries at a fixed (p0, Δ) and returns the
    /// union of feasible `pc` values, each region being a single point or
    /// interval.
    fn active_regions(model: &LpModel, p0: f64, delta: f64) -> Vec<(u8, (f64, f64))> {
        let mut out = Vec::new();
        for code in 0..4u8 {
            let mut vals = BTreeMap::new();
            vals.insert("p0_g0".to_string(), p0);
            vals.insert("d_c1".to_string(), delta);
            vals.insert("xpp_c1_g0".to_string(), f64::from(code & 1));
            vals.insert("xpm_c1_g0".to_string(), f64::from(code >> 1));
            // Reactive part set to a trivially valid interior point.
            vals.insert("xqp_c1_g0".to_string(), 1.0);
            vals.insert("xqm_c1_g0".to_string(), 1.0);
            vals.insert("q_c1_g0".to_string(), 0.0);
            vals.insert("v0_b0".to_string(), 1.0);
            vals.insert("v_c1_b0".to_string(), 1.0);
            if let Some(iv) = model.interval(&vals, "p_c1_g0", 1e-12) {
                out.push((code, iv));
            }
        }
        out
    }

    #[test]
    fn enumeration_reproduces_exact_response() {
        let u = toy_unit();
        let model = parse_lp(&export_units(&[u], &config()).unwrap()).unwrap();
        for &(p0, delta) in &[(0.6, 0.2), (0.9, 1.0), (0.3, -0.8), (1.0, 0.0), (0.2, 0.0), (0.7, -1.0)] {
            let regions = active_regions(&model, p0, delta);
            let clip = exact_response_active(p0, u.alpha, delta, u.pmin, u.pmax);
            assert!(!regions.is_empty());
            for (code, (lo, hi)) in regions {
                // Every region is a single point equal to the clipped value.
                assert!((hi - lo).abs() < 1e-12, "code {code}: [{lo}, {hi}]");
                assert!((lo - clip).abs() < 1e-12, "code {code}: {lo} vs {clip}");
                let x = normalize(lo, u.pmin, u.pmax).unwrap();
                let y = normalize(p0 + u.alpha * delta, u.pmin, u.pmax).unwrap();
                assert!(exact_membership(FRAC_PI_4, x, y, 1e-9));
            }
        }
    }

    #[test]
    fn binary_assignments_select_the_four_regimes() {
        let u = toy_unit();
        let model = parse_lp(&export_units(&[u], &config()).unwrap()).unwrap();
        // Desired output 1.4 > pmax: only the upper-clip assignment survives.
        let r = active_regions(&model, 0.9, 1.0);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, 0b10);
        // Desired output below pmin: only the lower-clip assignment.
        let r = active_regions(&model, 0.3, -0.8);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, 0b01);
        // Interior: only both-active.
        let r = active_regions(&model, 0.6, 0.2);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, 0b11);
        // Both zero pins pc to pmax and pmin at once: infeasible here.
        assert!(active_regions(&model, 0.6, 0.2).iter().all(|(c, _)| *c != 0));
    }
}
