//! Static network description and per-contingency derived matrices.
//!
//! All electrical quantities are per-unit on the case MVA base and angles are
//! in radians. A [`Scenario`] is the network as seen under one contingency:
//! in-service masks, generator incidence and the bus/branch admittance
//! matrices built with the standard π branch model.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::ComplexCsr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Pq,
    Pv,
    Reference,
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub base_kv: f64,
    pub vmin: f64,
    pub vmax: f64,
    /// Voltage magnitude and angle from the case file (initial guess).
    pub vm: f64,
    pub va: f64,
    pub demand_p: f64,
    pub demand_q: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// Off-nominal turns ratio; 1 for lines.
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Apparent-power rating; `f64::INFINITY` means unlimited.
    pub s_max: f64,
    pub in_service: bool,
}

/// Polynomial generation cost, constant term first, in $/h of output in pu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPolynomial {
    pub coeffs: Vec<f64>,
}

impl CostPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidCase("cost polynomial needs at least one coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn eval(&self, p: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * p + c)
    }

    pub fn derivative(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * p + k as f64 * c)
    }

    pub fn second_derivative(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * p + (k * (k - 1)) as f64 * c)
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// Dispatch from the case file.
    pub pg: f64,
    pub qg: f64,
    /// Voltage set-point from the case file.
    pub vg: f64,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub cost: CostPolynomial,
    pub in_service: bool,
}

/// Static grid description.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    bus_lookup: HashMap<usize, usize>,
}

impl Network {
    /// Validates the invariants and builds the bus id lookup.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let mut bus_lookup = HashMap::with_capacity(buses.len());
        for (k, b) in buses.iter().enumerate() {
            if bus_lookup.insert(b.id, k).is_some() {
                return Err(Error::InvalidCase(format!("duplicate bus id {}", b.id)));
            }
            if !(b.vmin > 0.0 && b.vmin <= b.vmax) {
                return Err(Error::InvalidCase(format!(
                    "bus {}: voltage bounds must satisfy 0 < vmin <= vmax",
                    b.id
                )));
            }
        }
        for (k, br) in branches.iter().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !bus_lookup.contains_key(&end) {
                    return Err(Error::InvalidCase(format!("branch {}: unknown bus {}", k + 1, end)));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidCase(format!("branch {} is a self-loop", k + 1)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::InvalidCase(format!("branch {} has zero impedance", k + 1)));
            }
            if !(br.s_max > 0.0) {
                return Err(Error::InvalidCase(format!("branch {} has a non-positive rating", k + 1)));
            }
        }
        for (k, g) in generators.iter().enumerate() {
            if !bus_lookup.contains_key(&g.bus) {
                return Err(Error::InvalidCase(format!("generator {}: unknown bus {}", k + 1, g.bus)));
            }
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(Error::InvalidCase(format!("generator {}: inverted limits", k + 1)));
            }
        }
        Ok(Self {
            base_mva,
            buses,
            branches,
            generators,
            bus_lookup,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.bus_lookup.get(&id).copied()
    }

    /// Internal bus index of each generator.
    pub fn gen_bus_index(&self, g: usize) -> usize {
        self.bus_lookup[&self.generators[g].bus]
    }

    /// The designated reference bus (first `Reference` bus, else the first bus
    /// with an in-service generator).
    pub fn reference_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Reference)
            .or_else(|| {
                self.generators
                    .iter()
                    .position(|g| g.in_service)
                    .map(|g| self.gen_bus_index(g))
            })
            .unwrap_or(0)
    }

    pub fn total_demand(&self) -> Complex64 {
        self.buses
            .iter()
            .map(|b| Complex64::new(b.demand_p, b.demand_q))
            .sum()
    }

    /// Sum of active capacity of in-service generators.
    pub fn total_pmax(&self) -> f64 {
        self.generators
            .iter()
            .filter(|g| g.in_service)
            .map(|g| g.pmax)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Contingency {
    /// Scenario 0, no outage.
    Base,
    /// Outage of the generator at this 0-based row index.
    GeneratorOutage(usize),
    /// Outage of the branch at this 0-based row index.
    BranchOutage(usize),
}

impl fmt::Display for Contingency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contingency::Base => write!(f, "base"),
            Contingency::GeneratorOutage(g) => write!(f, "gen {}", g + 1),
            Contingency::BranchOutage(l) => write!(f, "branch {}", l + 1),
        }
    }
}

/// The four entries of a branch's 2×2 admittance block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

impl BranchAdmittance {
    /// π-model with the tap and phase shift on the from end.
    pub fn of(branch: &Branch) -> Self {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(branch.r, branch.x);
        let bc = Complex64::new(0.0, branch.b_charging / 2.0);
        let ratio = if branch.tap == 0.0 { 1.0 } else { branch.tap };
        let t = Complex64::from_polar(ratio, branch.shift);
        let ytt = ys + bc;
        Self {
            yff: ytt / (t * t.conj()),
            yft: -ys / t.conj(),
            ytf: -ys / t,
            ytt,
        }
    }
}

/// The network under one contingency.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub contingency: Contingency,
    pub gen_in_service: Vec<bool>,
    pub branch_in_service: Vec<bool>,
    /// Internal bus index of every in-service generator, `None` if outed.
    pub gen_bus: Vec<Option<usize>>,
    pub ybus: ComplexCsr,
    /// Rows follow `lines`: from-end and to-end line-admittance matrices.
    pub yf: ComplexCsr,
    pub yt: ComplexCsr,
    /// In-service branch indices in row order of `yf` / `yt`.
    pub lines: Vec<usize>,
    /// From and to bus index of each row of `yf` / `yt`.
    pub line_ends: Vec<(usize, usize)>,
    /// Rating of each in-service line.
    pub line_limits: Vec<f64>,
    pub reference_bus: usize,
    admittances: Vec<Option<BranchAdmittance>>,
    demand: Vec<Complex64>,
    isolated: Vec<bool>,
}

impl Scenario {
    pub fn n_bus(&self) -> usize {
        self.ybus.nrows()
    }

    pub fn n_gen(&self) -> usize {
        self.gen_in_service.len()
    }

    pub fn demand(&self) -> &[Complex64] {
        &self.demand
    }

    /// True for buses of type 4 (no branches and no unknowns).
    pub fn is_isolated(&self, bus: usize) -> bool {
        self.isolated[bus]
    }

    /// Dense 0/1 generator incidence `G_c` (|G|×|N|).
    pub fn gen_incidence(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.n_bus()]; self.n_gen()];
        for (k, bus) in self.gen_bus.iter().enumerate() {
            if let Some(i) = bus {
                g[k][*i] = 1.0;
            }
        }
        g
    }

    /// Branch admittance block of an in-service branch.
    pub fn admittance_row(&self, branch: usize) -> Result<BranchAdmittance> {
        match self.admittances.get(branch) {
            None => Err(Error::UnknownElement {
                kind: "branch",
                index: branch + 1,
                count: self.admittances.len(),
            }),
            Some(None) => Err(Error::InvalidParameter(format!("branch {} is out of service", branch + 1))),
            Some(Some(y)) => Ok(*y),
        }
    }

    /// True iff the in-service branches connect every non-isolated bus and the
    /// connected grid holds at least one in-service generator.
    pub fn check_connectivity(&self) -> bool {
        let n = self.n_bus();
        let mut adj = vec![Vec::new(); n];
        for &(f, t) in &self.line_ends {
            adj[f].push(t);
            adj[t].push(f);
        }
        let Some(start) = (0..n).find(|&i| !self.isolated[i]) else {
            return true;
        };
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let spans = (0..n).all(|i| seen[i] || self.isolated[i]);
        let has_source = self.gen_bus.iter().flatten().any(|&i| seen[i]);
        spans && has_source
    }
}

fn assemble(network: &Network, branch_in_service: &[bool]) -> (ComplexCsr, ComplexCsr, ComplexCsr, Vec<usize>, Vec<(usize, usize)>, Vec<Option<BranchAdmittance>>) {
    let n = network.n_bus();
    let mut ybus = Vec::new();
    let mut yf = Vec::new();
    let mut yt = Vec::new();
    let mut lines = Vec::new();
    let mut ends = Vec::new();
    let mut admittances = vec![None; network.n_branch()];
    for (l, br) in network.branches.iter().enumerate() {
        if !branch_in_service[l] {
            continue;
        }
        let y = BranchAdmittance::of(br);
        let f = network.bus_index(br.from_bus).unwrap();
        let t = network.bus_index(br.to_bus).unwrap();
        let row = lines.len();
        ybus.extend([(f, f, y.yff), (f, t, y.yft), (t, f, y.ytf), (t, t, y.ytt)]);
        yf.extend([(row, f, y.yff), (row, t, y.yft)]);
        yt.extend([(row, f, y.ytf), (row, t, y.ytt)]);
        lines.push(l);
        ends.push((f, t));
        admittances[l] = Some(y);
    }
    for (i, b) in network.buses.iter().enumerate() {
        // Structural diagonal even for buses without shunts or branches.
        ybus.push((i, i, Complex64::new(b.shunt_g, b.shunt_b)));
    }
    let m = lines.len();
    (
        ComplexCsr::from_triplets(n, n, ybus),
        ComplexCsr::from_triplets(m, n, yf),
        ComplexCsr::from_triplets(m, n, yt),
        lines,
        ends,
        admittances,
    )
}

/// Builds the scenario for `contingency`, rejecting unknown elements and
/// islanding outages.
pub fn build_scenario(network: &Network, contingency: Contingency) -> Result<Scenario> {
    let mut gen_in_service: Vec<bool> = network.generators.iter().map(|g| g.in_service).collect();
    let mut branch_in_service: Vec<bool> = network.branches.iter().map(|b| b.in_service).collect();
    match contingency {
        Contingency::Base => {}
        Contingency::GeneratorOutage(g) => {
            if g >= network.n_gen() {
                return Err(Error::UnknownElement {
                    kind: "generator",
                    index: g + 1,
                    count: network.n_gen(),
                });
            }
            gen_in_service[g] = false;
        }
        Contingency::BranchOutage(l) => {
            if l >= network.n_branch() {
                return Err(Error::UnknownElement {
                    kind: "branch",
                    index: l + 1,
                    count: network.n_branch(),
                });
            }
            branch_in_service[l] = false;
        }
    }
    let gen_bus = (0..network.n_gen())
        .map(|g| gen_in_service[g].then(|| network.gen_bus_index(g)))
        .collect::<Vec<_>>();
    let (ybus, yf, yt, lines, line_ends, admittances) = assemble(network, &branch_in_service);
    let line_limits = lines.iter().map(|&l| network.branches[l].s_max).collect();

    let base_ref = network.reference_bus();
    let reference_bus = if gen_bus.iter().flatten().any(|&i| i == base_ref) {
        base_ref
    } else {
        gen_bus.iter().flatten().copied().min().unwrap_or(base_ref)
    };
    let demand = network
        .buses
        .iter()
        .map(|b| Complex64::new(b.demand_p, b.demand_q))
        .collect();
    let isolated = network.buses.iter().map(|b| b.kind == BusKind::Isolated).collect();

    let sc = Scenario {
        contingency,
        gen_in_service,
        branch_in_service,
        gen_bus,
        ybus,
        yf,
        yt,
        lines,
        line_ends,
        line_limits,
        reference_bus,
        admittances,
        demand,
        isolated,
    };
    if !sc.check_connectivity() {
        return Err(Error::Islanded(contingency.to_string()));
    }
    Ok(sc)
}

/// Free-function form of [`Scenario::check_connectivity`].
pub fn check_connectivity(scenario: &Scenario) -> bool {
    scenario.check_connectivity()
}

/// Free-function form of [`Scenario::admittance_row`].
pub fn admittance_row(scenario: &Scenario, branch: usize) -> Result<BranchAdmittance> {
    scenario.admittance_row(branch)
}


#[cfg(test)]
mod tests {
    use super::test_networks::*;
    use super::*;

    const J: Complex64 = Complex64::new(0.0, 1.0);

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn pure_reactance_block() {
        let y = BranchAdmittance::of(&line(1, 2, 0.0, 1.0, 0.0));
        assert!(close(y.yff, -J) && close(y.ytt, -J));
        assert!(close(y.yft, J) && close(y.ytf, J));
    }

    #[test]
    fn charging_splits_between_ends() {
        let y = BranchAdmittance::of(&line(1, 2, 0.0, 0.5, 0.2));
        assert!(close(y.yff, -2.0 * J + 0.1 * J));
        assert!(close(y.ytt, -2.0 * J + 0.1 * J));
        assert!(close(y.yft, 2.0 * J) && close(y.ytf, 2.0 * J));
    }

    #[test]
    fn tap_scales_from_end() {
        let mut br = line(1, 2, 0.0, 1.0, 0.0);
        br.tap = 2.0;
        let y = BranchAdmittance::of(&br);
        assert!(close(y.yff, -J / 4.0));
        assert!(close(y.yft, J / 2.0));
        assert!(close(y.ytt, -J));
    }

    #[test]
    fn ring_survives_any_single_branch_outage() {
        let net = ring3();
        for l in 0..3 {
            let sc = build_scenario(&net, Contingency::BranchOutage(l)).unwrap();
            assert!(sc.check_connectivity());
            assert_eq!(sc.lines.len(), 2);
        }
    }

    #[test]
    fn two_bus_outage_islands() {
        let net = two_bus();
        assert!(matches!(
            build_scenario(&net, Contingency::BranchOutage(0)),
            Err(Error::Islanded(_))
        ));
    }

    #[test]
    fn unknown_elements_rejected() {
        let net = ring3();
        assert!(matches!(
            build_scenario(&net, Contingency::BranchOutage(3)),
            Err(Error::UnknownElement { kind: "branch", .. })
        ));
        assert!(matches!(
            build_scenario(&net, Contingency::GeneratorOutage(7)),
            Err(Error::UnknownElement { kind: "generator", .. })
        ));
    }

    #[test]
    fn generator_outage_zeroes_incidence_row() {
        let net = ring3();
        let sc = build_scenario(&net, Contingency::GeneratorOutage(1)).unwrap();
        assert_eq!(sc.gen_in_service, vec![true, false]);
        let g = sc.gen_incidence();
        assert_eq!(g[1].iter().sum::<f64>(), 0.0);
        assert_eq!(g[0].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn reference_moves_when_its_generator_is_outed() {
        let net = ring3();
        let sc = build_scenario(&net, Contingency::GeneratorOutage(0)).unwrap();
        assert_eq!(sc.reference_bus, 2);
    }

    #[test]
    fn cost_polynomial_derivatives() {
        let c = CostPolynomial::new(vec![3.0, 2.0, 0.5, 0.1]).unwrap();
        let p = 1.3;
        assert!((c.eval(p) - (3.0 + 2.0 * p + 0.5 * p * p + 0.1 * p * p * p)).abs() < 1e-14);
        assert!((c.derivative(p) - (2.0 + p + 0.3 * p * p)).abs() < 1e-14);
        assert!((c.second_derivative(p) - (1.0 + 0.6 * p)).abs() < 1e-14);
    }

    #[test]
    fn invalid_networks_rejected() {
        let bad = Network::new(
            100.0,
            vec![bus(1, BusKind::Reference, 0.0, 0.0), bus(1, BusKind::Pq, 0.0, 0.0)],
            vec![],
            vec![],
        );
        assert!(bad.is_err());
        let self_loop = Network::new(
            100.0,
            vec![bus(1, BusKind::Reference, 0.0, 0.0), bus(2, BusKind::Pq, 0.0, 0.0)],
            vec![line(1, 1, 0.0, 1.0, 0.0)],
            vec![],
        );
        assert!(self_loop.is_err());
    }
}
