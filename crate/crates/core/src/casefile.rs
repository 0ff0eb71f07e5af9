//! MATPOWER case files, contingency lists and result documents.
//!
//! The reader accepts the subset of MATPOWER's `.m` syntax that stock case
//! files use: `mpc.baseMVA = <number>;` and bracketed numeric matrices for
//! `mpc.bus`, `mpc.gen`, `mpc.branch` and `mpc.gencost`. Comments (`%`) are
//! stripped and any other assignment is skipped with a warning.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, BusKind, Contingency, CostPolynomial, Generator, Network};
use crate::nlp::{ScenarioSolution, ScopfSolution};
use crate::powerflow::OperatingState;

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 13;
const GENCOST_COLS: usize = 4;

/// Raw MATPOWER tables, row-major, with MATPOWER column conventions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseDocument {
    pub base_mva: f64,
    pub bus: Vec<Vec<f64>>,
    pub gen: Vec<Vec<f64>>,
    pub branch: Vec<Vec<f64>>,
    pub gencost: Vec<Vec<f64>>,
    /// Assignments that were recognised but skipped.
    pub warnings: Vec<String>,
}

fn strip_comment(line: &str) -> &str {
    // `%` never appears inside the numeric subset we accept, and strings in
    // skipped assignments only need to survive up to the terminating `;`.
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric entry `{tok}`"),
        }),
    }
}

fn parse_matrix(body: &str, first_line: usize, name: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (offset, raw) in body.split('\n').enumerate() {
        let line_no = first_line + offset;
        for chunk in raw.split(';') {
            let toks: Vec<&str> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if toks.is_empty() {
                continue;
            }
            let row = toks
                .iter()
                .map(|t| parse_number(t, line_no))
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("ragged row in mpc.{name}: expected {w} columns, found {}", row.len()),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Parses the MATPOWER subset described in the module docs.
pub fn parse_matpower(text: &str) -> Result<CaseDocument> {
    let cleaned: Vec<&str> = text.lines().map(strip_comment).collect();
    let joined = cleaned.join("\n");
    let line_of = |pos: usize| joined[..pos].matches('\n').count() + 1;

    let mut doc = CaseDocument::default();
    let mut base = None;
    let (mut bus, mut gen, mut branch, mut gencost) = (None, None, None, None);

    let mut pos = 0;
    while let Some(found) = joined[pos..].find("mpc.") {
        let start = pos + found;
        let rest = &joined[start + 4..];
        let name_len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let name = &rest[..name_len];
        let after = rest[name_len..].trim_start();
        if !after.starts_with('=') {
            pos = start + 4 + name_len;
            continue;
        }
        let eq = start + 4 + name_len + (rest[name_len..].len() - after.len());
        let value = joined[eq + 1..].trim_start();
        let value_start = joined.len() - value.len();
        if value.starts_with('[') {
            let close = value.find(']').ok_or_else(|| Error::Parse {
                line: line_of(value_start),
                message: format!("unterminated matrix for mpc.{name}"),
            })?;
            let body = &value[1..close];
            let end = value_start + close + 1;
            match name {
                "bus" | "gen" | "branch" | "gencost" => {
                    let m = parse_matrix(body, line_of(value_start), name)?;
                    match name {
                        "bus" => bus = Some(m),
                        "gen" => gen = Some(m),
                        "branch" => branch = Some(m),
                        _ => gencost = Some(m),
                    }
                }
                _ => doc.warnings.push(format!("ignored assignment mpc.{name}")),
            }
            pos = end;
        } else {
            let end = value.find(';').map(|k| value_start + k + 1).unwrap_or(joined.len());
            if name == "baseMVA" {
                let tok = joined[value_start..end].trim_end_matches(';').trim();
                base = Some(parse_number(tok, line_of(value_start))?);
            } else if value.starts_with('{') {
                let close = value.find('}').map(|k| value_start + k + 1).unwrap_or(joined.len());
                doc.warnings.push(format!("ignored assignment mpc.{name}"));
                pos = close;
                continue;
            } else {
                doc.warnings.push(format!("ignored assignment mpc.{name}"));
            }
            pos = end;
        }
    }

    doc.base_mva = base.ok_or(Error::MissingTable("baseMVA"))?;
    doc.bus = bus.ok_or(Error::MissingTable("bus"))?;
    doc.gen = gen.ok_or(Error::MissingTable("gen"))?;
    doc.branch = branch.ok_or(Error::MissingTable("branch"))?;
    doc.gencost = gencost.unwrap_or_default();
    doc.validate()?;
    Ok(doc)
}

impl CaseDocument {
    /// Checks column counts and cross references.
    pub fn validate(&self) -> Result<()> {
        let check = |rows: &Vec<Vec<f64>>, min: usize, name: &str| -> Result<()> {
            if let Some(r) = rows.iter().find(|r| r.len() < min) {
                return Err(Error::InvalidCase(format!(
                    "mpc.{name} needs at least {min} columns, found {}",
                    r.len()
                )));
            }
            Ok(())
        };
        check(&self.bus, BUS_COLS, "bus")?;
        check(&self.gen, GEN_COLS, "gen")?;
        check(&self.branch, BRANCH_COLS, "branch")?;
        check(&self.gencost, GENCOST_COLS, "gencost")?;
        let ids: HashSet<i64> = self.bus.iter().map(|r| r[0] as i64).collect();
        for (k, g) in self.gen.iter().enumerate() {
            if !ids.contains(&(g[0] as i64)) {
                return Err(Error::InvalidCase(format!("gen row {} references unknown bus {}", k + 1, g[0])));
            }
        }
        for (k, b) in self.branch.iter().enumerate() {
            for end in [b[0], b[1]] {
                if !ids.contains(&(end as i64)) {
                    return Err(Error::InvalidCase(format!("branch row {} references unknown bus {}", k + 1, end)));
                }
            }
        }
        if !self.gencost.is_empty() && self.gencost.len() < self.gen.len() {
            return Err(Error::InvalidCase(format!(
                "mpc.gencost has {} rows for {} generators",
                self.gencost.len(),
                self.gen.len()
            )));
        }
        Ok(())
    }

    /// Writes the tables back in the same MATPOWER subset.
    pub fn to_matpower(&self) -> String {
        let mut out = String::from("function mpc = case\nmpc.version = '2';\n");
        let _ = writeln!(out, "mpc.baseMVA = {};", self.base_mva);
        for (name, rows) in [
            ("bus", &self.bus),
            ("gen", &self.gen),
            ("branch", &self.branch),
            ("gencost", &self.gencost),
        ] {
            if name == "gencost" && rows.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\nmpc.{name} = [");
            for r in rows {
                let cells: Vec<String> = r.iter().map(|v| fmt_number(*v)).collect();
                let _ = writeln!(out, "\t{};", cells.join("\t"));
            }
            out.push_str("];\n");
        }
        out
    }

    /// Builds the per-unit network. Active and reactive demands are multiplied
    /// by `demand_scale`.
    pub fn to_network(&self, demand_scale: f64) -> Result<Network> {
        if !(demand_scale.is_finite() && demand_scale >= 0.0) {
            return Err(Error::InvalidParameter(format!("demand scale {demand_scale} must be finite and >= 0")));
        }
        let base = self.base_mva;
        let buses = self
            .bus
            .iter()
            .map(|r| Bus {
                id: r[0] as usize,
                kind: match r[1] as i64 {
                    2 => BusKind::Pv,
                    3 => BusKind::Reference,
                    4 => BusKind::Isolated,
                    _ => BusKind::Pq,
                },
                demand_p: r[2] * demand_scale / base,
                demand_q: r[3] * demand_scale / base,
                shunt_g: r[4] / base,
                shunt_b: r[5] / base,
                vm: r[7],
                va: r[8] * PI / 180.0,
                base_kv: r[9],
                vmax: r[11],
                vmin: r[12],
            })
            .collect();
        let branches = self
            .branch
            .iter()
            .map(|r| Branch {
                from_bus: r[0] as usize,
                to_bus: r[1] as usize,
                r: r[2],
                x: r[3],
                b_charging: r[4],
                s_max: if r[5] == 0.0 { f64::INFINITY } else { r[5] / base },
                tap: if r[8] == 0.0 { 1.0 } else { r[8] },
                shift: r[9] * PI / 180.0,
                in_service: r[10] > 0.0,
            })
            .collect();
        let mut generators = Vec::with_capacity(self.gen.len());
        for (k, r) in self.gen.iter().enumerate() {
            let cost = match self.gencost.get(k) {
                Some(c) => cost_from_row(c, base)?,
                None => CostPolynomial::new(vec![0.0])?,
            };
            generators.push(Generator {
                bus: r[0] as usize,
                pg: r[1] / base,
                qg: r[2] / base,
                qmax: r[3] / base,
                qmin: r[4] / base,
                vg: r[5],
                in_service: r[7] > 0.0,
                pmax: r[8] / base,
                pmin: r[9] / base,
                cost,
            });
        }
        Network::new(base, buses, branches, generators)
    }
}

/// MATPOWER polynomial rows list coefficients highest order first in $/h per
/// MW^k; rescale to pu and store constant first.
fn cost_from_row(row: &[f64], base: f64) -> Result<CostPolynomial> {
    let model = row[0] as u32;
    if model != 2 {
        return Err(Error::UnsupportedCostModel(model));
    }
    let n = row[3] as usize;
    if row.len() < 4 + n {
        return Err(Error::InvalidCase(format!("gencost row declares {n} coefficients but has {}", row.len() - 4)));
    }
    let mut coeffs: Vec<f64> = row[4..4 + n].iter().rev().copied().collect();
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c *= base.powi(k as i32);
    }
    if coeffs.is_empty() {
        coeffs.push(0.0);
    }
    CostPolynomial::new(coeffs)
}

fn fmt_number(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

/// Ordered contingency scenarios; scenario 0 (base) is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContingencyList {
    pub entries: Vec<Contingency>,
}

impl ContingencyList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks indices against a network.
    pub fn validate(&self, network: &Network) -> Result<()> {
        for c in &self.entries {
            match *c {
                Contingency::GeneratorOutage(g) if g >= network.n_gen() => {
                    return Err(Error::UnknownElement {
                        kind: "generator",
                        index: g + 1,
                        count: network.n_gen(),
                    })
                }
                Contingency::BranchOutage(l) if l >= network.n_branch() => {
                    return Err(Error::UnknownElement {
                        kind: "branch",
                        index: l + 1,
                        count: network.n_branch(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// The line-oriented text form accepted by [`parse_contingencies`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.entries {
            match c {
                Contingency::GeneratorOutage(g) => {
                    let _ = writeln!(out, "gen {}", g + 1);
                }
                Contingency::BranchOutage(l) => {
                    let _ = writeln!(out, "branch {}", l + 1);
                }
                Contingency::Base => {}
            }
        }
        out
    }
}

/// Parses `gen <idx>` / `branch <idx>` lines (1-based case row indices, `#`
/// comments).
pub fn parse_contingencies(text: &str) -> Result<ContingencyList> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let mut gen = None;
        let mut branch = None;
        let mut it = toks.iter();
        while let Some(tok) = it.next() {
            let slot = match tok.to_ascii_lowercase().as_str() {
                "gen" | "generator" => &mut gen,
                "branch" | "line" => &mut branch,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected `gen` or `branch`, found `{other}`"),
                    })
                }
            };
            let idx = it.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("`{tok}` needs an index"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "indices are 1-based".into(),
                });
            }
            *slot = Some(idx - 1);
        }
        let c = match (gen, branch) {
            (Some(g), None) => Contingency::GeneratorOutage(g),
            (None, Some(l)) => Contingency::BranchOutage(l),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "exactly one of gen/branch must be set".into(),
                })
            }
        };
        if !seen.insert(c) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate contingency `{c}`"),
            });
        }
        entries.push(c);
    }
    Ok(ContingencyList { entries })
}

/// Which quantity a result table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    Active,
    Reactive,
    Voltage,
}

/// Voltage deviation treated as a PV/PQ switch in the voltage table.
pub const SWITCH_FLAG_TOL: f64 = 5e-5;

/// One row per generator, one column per scenario, 4 decimals. The voltage
/// layout appends `switch_<c>` flag columns for scenarios 1..|C|.
pub fn write_tables(solution: &ScopfSolution, network: &Network, layout: TableLayout) -> String {
    let nsc = solution.scenarios.len();
    let mut out = String::from("bus");
    for s in &solution.scenarios {
        let _ = write!(out, ",{}", s.id);
    }
    if layout == TableLayout::Voltage {
        for s in solution.scenarios.iter().skip(1) {
            let _ = write!(out, ",switch_{}", s.id);
        }
    }
    out.push('\n');
    for (g, gen) in network.generators.iter().enumerate() {
        let bus = network.gen_bus_index(g);
        let _ = write!(out, "{}", gen.bus);
        for s in &solution.scenarios {
            let v = match layout {
                TableLayout::Active => s.state.pg[g],
                TableLayout::Reactive => s.state.qg[g],
                TableLayout::Voltage => s.state.vm[bus],
            };
            // Avoid printing "-0.0000".
            let v = if v.abs() < 5e-5 { 0.0 } else { v };
            let _ = write!(out, ",{v:.4}");
        }
        if layout == TableLayout::Voltage && nsc > 0 {
            let v0 = solution.scenarios[0].state.vm[bus];
            for s in solution.scenarios.iter().skip(1) {
                let switched = (s.state.vm[bus] - v0).abs() > SWITCH_FLAG_TOL;
                let _ = write!(out, ",{switched}");
            }
        }
        out.push('\n');
    }
    out
}

/// JSON solution document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub objective: f64,
    pub scenarios: Vec<ScenarioRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: usize,
    pub delta: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl SolutionDocument {
    pub fn from_solution(solution: &ScopfSolution) -> Self {
        Self {
            objective: solution.objective,
            scenarios: solution
                .scenarios
                .iter()
                .map(|s| ScenarioRecord {
                    id: s.id,
                    delta: s.state.delta,
                    p: s.state.pg.clone(),
                    q: s.state.qg.clone(),
                    vm: s.state.vm.clone(),
                    va: s.state.va.clone(),
                    alpha: s.alpha.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a solution for the given scenario contingencies (index 0 is
    /// the base case), checking dimensions against the network.
    pub fn into_solution(self, network: &Network, contingencies: &[Contingency]) -> Result<ScopfSolution> {
        if self.scenarios.len() != contingencies.len() {
            return Err(Error::Dimension(format!(
                "solution has {} scenarios, problem has {}",
                self.scenarios.len(),
                contingencies.len()
            )));
        }
        let (nb, ng) = (network.n_bus(), network.n_gen());
        let mut scenarios = Vec::with_capacity(self.scenarios.len());
        for (rec, &c) in self.scenarios.into_iter().zip(contingencies) {
            if rec.p.len() != ng || rec.q.len() != ng || rec.alpha.len() != ng || rec.vm.len() != nb || rec.va.len() != nb {
                return Err(Error::Dimension(format!(
                    "scenario {} vectors do not match {} buses / {} generators",
                    rec.id, nb, ng
                )));
            }
            scenarios.push(ScenarioSolution {
                id: rec.id,
                contingency: c,
                state: OperatingState {
                    vm: rec.vm,
                    va: rec.va,
                    pg: rec.p,
                    qg: rec.q,
                    delta: rec.delta,
                },
                alpha: rec.alpha,
            });
        }
        Ok(ScopfSolution {
            objective: self.objective,
            scenarios,
            stats: Default::default(),
        })
    }
}
