//! Command-line front end: `scopf <command> [flags]`.
//!
//! Every flag may also be given as `key = value` in a file passed with
//! `--config`; flags on the command line win.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use scopf::casefile::{parse_contingencies, parse_matpower, write_tables, SolutionDocument, TableLayout};
use scopf::curves::{curve_gap_bound, default_sweep, sample_curve_csv, SigmoidKind, SmoothCurveParams};
use scopf::grid::{build_scenario, Contingency, Network};
use scopf::milp::{export_bigm_milp, parse_lp, BigMConfig};
use scopf::nlp::{assemble, compare_sigmoids, sigmoid_table_csv, solve_report, AlphaPolicy, ScopfProblem, SolverOptions};
use scopf::powerflow::{audit_solution, solve_contingency_response, solve_powerflow, BusControl, OperatingState, PfOptions};
use scopf::Error;

#[derive(Parser, Debug)]
#[command(name = "scopf", version, about = "Security-constrained AC OPF with smooth contingency response")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value file supplying defaults for any flag below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// MATPOWER case file.
    #[arg(long, global = true)]
    case: Option<PathBuf>,
    /// Contingency list, one `gen <i>` or `branch <i>` per line.
    #[arg(long, global = true)]
    contingencies: Option<PathBuf>,
    #[arg(long, global = true)]
    demand_scale: Option<f64>,
    #[arg(long, global = true)]
    sigmoid: Option<String>,
    /// Curve sharpness.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Curve order.
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long, global = true, value_enum)]
    alpha: Option<AlphaMode>,
    #[arg(long, global = true)]
    feas_tol: Option<f64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Also solve once per sigmoid and write the comparison table.
    #[arg(long, global = true)]
    compare_sigmoids: bool,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Base-case optimal power flow.
    Opf,
    /// Security-constrained OPF over the contingency list.
    Scopf,
    /// Base power flow, then every contingency under the exact response rules.
    Pf {
        /// Take the base dispatch and participation weights from a solution file.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Audit a solution file against the exact model.
    Validate {
        #[arg(long)]
        solution: PathBuf,
    },
    /// Sample smooth response curves to CSV. Without --sigmoid/--h/--k the
    /// standard sweep is written.
    Curves {
        #[arg(long, value_enum, default_value = "pi4")]
        theta: Slope,
        #[arg(long, default_value_t = 0.999)]
        t_max: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Write the big-M mixed-integer response model as an LP file.
    ExportMilp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum AlphaMode {
    Uniform,
    Optimize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Slope {
    Pi4,
    Zero,
}

/// Resolved settings after merging the config file with the flags.
#[derive(Debug)]
struct RunConfig {
    case: Option<PathBuf>,
    contingencies: Option<PathBuf>,
    demand_scale: f64,
    sigmoid: Option<SigmoidKind>,
    h: Option<f64>,
    k: Option<u32>,
    alpha: AlphaMode,
    feas_tol: f64,
    out_dir: PathBuf,
    compare_sigmoids: bool,
    threads: usize,
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_config(path: &Path) -> std::result::Result<HashMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(table
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                toml::Value::String(s) => s,
                other => other.to_string(),
            };
            (k.replace('_', "-"), v)
        })
        .collect())
}

fn pick<T: FromStr>(flag: Option<T>, file: &HashMap<String, String>, key: &str) -> std::result::Result<Option<T>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|v| v.parse().map_err(|_| usage(format!("config: invalid value `{v}` for `{key}`"))))
        .transpose()
}

impl RunConfig {
    fn resolve(cli: &Cli) -> std::result::Result<Self, Failure> {
        let file = match &cli.config {
            Some(p) => read_config(p)?,
            None => HashMap::new(),
        };
        const KEYS: [&str; 11] = [
            "case",
            "contingencies",
            "demand-scale",
            "sigmoid",
            "h",
            "k",
            "alpha",
            "feas-tol",
            "out-dir",
            "compare-sigmoids",
            "threads",
        ];
        if let Some(k) = file.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(usage(format!("config: unknown key `{k}`")));
        }
        let sigmoid = pick(cli.sigmoid.clone(), &file, "sigmoid")?
            .map(|s: String| s.parse::<SigmoidKind>())
            .transpose()?;
        let alpha = match pick(cli.alpha.map(|a| format!("{a:?}")), &file, "alpha")? {
            None => AlphaMode::Optimize,
            Some(s) => AlphaMode::from_str(&s, true).map_err(|_| usage(format!("unknown alpha mode `{s}`")))?,
        };
        let cfg = RunConfig {
            case: pick(cli.case.clone(), &file, "case")?,
            contingencies: pick(cli.contingencies.clone(), &file, "contingencies")?,
            demand_scale: pick(cli.demand_scale, &file, "demand-scale")?.unwrap_or(1.0),
            sigmoid,
            h: pick(cli.h, &file, "h")?,
            k: pick(cli.k, &file, "k")?,
            alpha,
            feas_tol: pick(cli.feas_tol, &file, "feas-tol")?.unwrap_or(1e-6),
            out_dir: pick(cli.out_dir.clone(), &file, "out-dir")?.unwrap_or_else(|| PathBuf::from(".")),
            compare_sigmoids: cli.compare_sigmoids || pick(None, &file, "compare-sigmoids")?.unwrap_or(false),
            threads: pick(cli.threads, &file, "threads")?.unwrap_or(1),
        };
        if !(cfg.demand_scale > 0.0 && cfg.demand_scale.is_finite()) {
            return Err(usage("--demand-scale must be positive"));
        }
        if !(cfg.feas_tol > 0.0) {
            return Err(usage("--feas-tol must be positive"));
        }
        if cfg.threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        Ok(cfg)
    }

    fn curves(&self) -> (SigmoidKind, f64, u32) {
        (self.sigmoid.unwrap_or(SigmoidKind::Atanh), self.h.unwrap_or(50.0), self.k.unwrap_or(1))
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            feas_tol: self.feas_tol,
            threads: self.threads,
            ..SolverOptions::default()
        }
    }

    fn read(path: &Path) -> std::result::Result<String, Failure> {
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    fn network(&self) -> std::result::Result<Network, Failure> {
        let path = self.case.as_ref().ok_or_else(|| usage("--case is required"))?;
        let doc = parse_matpower(&Self::read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(doc.to_network(self.demand_scale)?)
    }

    fn contingency_list(&self, network: &Network, required: bool) -> std::result::Result<Vec<Contingency>, Failure> {
        let Some(path) = &self.contingencies else {
            return if required { Err(usage("--contingencies is required")) } else { Ok(Vec::new()) };
        };
        let list = parse_contingencies(&Self::read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        list.validate(network)?;
        Ok(list.entries)
    }

    fn problem(&self, network: Network, contingencies: &[Contingency]) -> std::result::Result<ScopfProblem, Failure> {
        let (kind, h, k) = self.curves();
        let alpha = match self.alpha {
            AlphaMode::Uniform => AlphaPolicy::Uniform,
            AlphaMode::Optimize => AlphaPolicy::Optimize,
        };
        Ok(ScopfProblem::new(network, contingencies)?.with_curves(kind, h, k)?.with_alpha(alpha))
    }

    fn write(&self, name: &str, contents: &str) -> std::result::Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| usage(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

fn cmd_opf(cfg: &RunConfig) -> Outcome {
    let network = cfg.network()?;
    let slots = cfg.contingency_list(&network, false)?.len();
    let problem = cfg.problem(network, &[])?;
    let out = solve_report(&assemble(&problem)?, &cfg.solver())?;
    let s = &out.solution;
    cfg.write("solution.json", &json(&SolutionDocument::from_solution(s)))?;
    cfg.write("iterations.jsonl", &s.iteration_log())?;
    println!(
        "objective {:.4} $/h, feasibility {:.2e}, {} iterations, {:.2} s",
        s.objective, s.stats.feasibility, s.stats.iterations, s.stats.seconds
    );
    if slots > 0 {
        println!("base cost over {slots} contingency slots {:.4} $/h", slots as f64 * s.objective);
    }
    if !s.stats.converged {
        return Err(Failure::Solver(format!(
            "no convergence (feasibility {:.3e}, gradient {:.3e})",
            s.stats.feasibility, s.stats.gradient
        )));
    }
    Ok(())
}

fn cmd_scopf(cfg: &RunConfig) -> Outcome {
    let network = cfg.network()?;
    let list = cfg.contingency_list(&network, true)?;
    let problem = cfg.problem(network.clone(), &list)?;
    let instance = assemble(&problem)?;
    let out = solve_report(&instance, &cfg.solver())?;
    let s = &out.solution;
    cfg.write("solution.json", &json(&SolutionDocument::from_solution(s)))?;
    cfg.write("iterations.jsonl", &s.iteration_log())?;
    cfg.write("audit.json", &json(&out.audit))?;
    for (name, layout) in [("active.csv", TableLayout::Active), ("reactive.csv", TableLayout::Reactive), ("voltage.csv", TableLayout::Voltage)] {
        cfg.write(name, &write_tables(s, &network, layout))?;
    }
    println!(
        "objective {:.4} $/h, {} scenarios, {} iterations, {:.2} s, converged {}",
        s.objective,
        s.scenarios.len(),
        s.stats.iterations,
        s.stats.seconds,
        s.stats.converged
    );
    let base = solve_report(&assemble(&cfg.problem(network, &[])?)?, &cfg.solver())?;
    if base.solution.stats.converged {
        let reference = list.len() as f64 * base.solution.objective;
        println!(
            "base OPF {:.4} $/h, over {} contingency slots {:.4} $/h, increase {:.2}%",
            base.solution.objective,
            list.len(),
            reference,
            100.0 * (s.objective - reference) / reference
        );
    }
    println!(
        "audit: max hard violation {:.3e} (tol {:.1e}), max coupling gap {:.3e} (bound {:.3e})",
        out.audit.max_hard(),
        out.audit.tol,
        out.audit.max_coupling(),
        out.audit.curve_tol
    );
    if cfg.compare_sigmoids {
        let rows = compare_sigmoids(&problem, &SigmoidKind::ALL, &cfg.solver());
        let table = sigmoid_table_csv(&rows);
        cfg.write("sigmoids.csv", &table)?;
        print!("{table}");
    }
    if !s.stats.converged {
        return Err(Failure::Solver(format!(
            "no convergence (feasibility {:.3e}, gradient {:.3e}, complementarity {:.3e})",
            s.stats.feasibility, s.stats.gradient, s.stats.complementarity
        )));
    }
    if !out.audit.pass {
        return Err(Failure::Solver(format!("exact-model audit failed: {}", out.audit.failures().join(", "))));
    }
    Ok(())
}

fn cmd_pf(cfg: &RunConfig, solution: Option<&Path>) -> Outcome {
    let network = cfg.network()?;
    let list = cfg.contingency_list(&network, false)?;
    let problem = cfg.problem(network.clone(), &list)?.with_alpha(AlphaPolicy::Uniform);
    let opts = PfOptions::default();
    let (base, alphas): (OperatingState, Vec<Vec<f64>>) = match solution {
        Some(path) => {
            let doc: SolutionDocument = serde_json::from_str(&RunConfig::read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let sol = doc.into_solution(&network, &problem.contingencies())?;
            let alphas = sol.scenarios.iter().map(|s| s.alpha.clone()).collect();
            (sol.scenarios[0].state.clone(), alphas)
        }
        None => {
            let report = solve_powerflow(&network, &problem.scenarios[0], &OperatingState::from_case(&network), &opts)?;
            println!("base,{} iterations,mismatch {:.2e}", report.iterations, report.final_mismatch());
            let alphas = (0..problem.scenarios.len()).map(|c| problem.fixed_alpha(c)).collect();
            (report.state, alphas)
        }
    };
    let mut rows = String::from("scenario,contingency,delta,iterations,rounds,mismatch,switched\n");
    for (c, &cont) in list.iter().enumerate() {
        let scenario = build_scenario(&network, cont)?;
        let r = solve_contingency_response(&network, &base, &scenario, &alphas[c + 1], &opts)?;
        let switched: Vec<String> = r
            .bus_control
            .iter()
            .enumerate()
            .filter_map(|(i, b)| match b {
                BusControl::AtQmax => Some(format!("{}+", network.buses[i].id)),
                BusControl::AtQmin => Some(format!("{}-", network.buses[i].id)),
                _ => None,
            })
            .collect();
        rows.push_str(&format!(
            "{},{},{:.6},{},{},{:.3e},{}\n",
            c + 1,
            cont,
            r.state.delta,
            r.iterations,
            r.rounds,
            r.final_mismatch(),
            switched.join(" ")
        ));
    }
    cfg.write("pf.csv", &rows)?;
    print!("{rows}");
    Ok(())
}

fn cmd_validate(cfg: &RunConfig, solution: &Path) -> Outcome {
    let network = cfg.network()?;
    let list = cfg.contingency_list(&network, false)?;
    let problem = cfg.problem(network.clone(), &list)?;
    let doc: SolutionDocument = serde_json::from_str(&RunConfig::read(solution)?).map_err(|e| usage(format!("{}: {e}", solution.display())))?;
    let sol = doc.into_solution(&network, &problem.contingencies())?;
    let bound = curve_gap_bound(&problem.active_curve)?.max(curve_gap_bound(&problem.reactive_curve)?);
    let report = audit_solution(&problem, &sol, cfg.feas_tol, bound);
    let text = json(&report);
    cfg.write("audit.json", &text)?;
    print!("{text}");
    if !report.pass {
        return Err(Failure::Solver(format!("infeasible: {}", report.failures().join(", "))));
    }
    Ok(())
}

fn cmd_curves(cfg: &RunConfig, theta: Slope, t_max: f64, points: usize) -> Outcome {
    let sweep = if cfg.sigmoid.is_none() && cfg.h.is_none() && cfg.k.is_none() {
        default_sweep()
    } else {
        let (kind, h, k) = cfg.curves();
        let (tag, theta) = match theta {
            Slope::Pi4 => ("pi4", FRAC_PI_4),
            Slope::Zero => ("zero", 0.0),
        };
        vec![(format!("curve_{tag}_{kind}_h{h}_k{k}"), SmoothCurveParams::new(theta, kind, h, k)?)]
    };
    for (name, params) in &sweep {
        cfg.write(&format!("{name}.csv"), &sample_curve_csv(params, points, t_max)?)?;
    }
    println!("wrote {} curve files to {}", sweep.len(), cfg.out_dir.display());
    Ok(())
}

fn cmd_export_milp(cfg: &RunConfig) -> Outcome {
    let network = cfg.network()?;
    let list = cfg.contingency_list(&network, true)?;
    let problem = cfg.problem(network, &list)?;
    let text = export_bigm_milp(&problem, &BigMConfig::for_problem(&problem))?;
    let model = parse_lp(&text)?;
    let path = cfg.write("scopf_bigm.lp", &text)?;
    println!("{}: {} rows, {} binaries", path.display(), model.rows.len(), model.binaries.len());
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let cfg = RunConfig::resolve(cli)?;
    match &cli.command {
        Command::Opf => cmd_opf(&cfg),
        Command::Scopf => cmd_scopf(&cfg),
        Command::Pf { solution } => cmd_pf(&cfg, solution.as_deref()),
        Command::Validate { solution } => cmd_validate(&cfg, solution),
        Command::Curves { theta, t_max, points } => cmd_curves(&cfg, *theta, *t_max, *points),
        Command::ExportMilp => cmd_export_milp(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
