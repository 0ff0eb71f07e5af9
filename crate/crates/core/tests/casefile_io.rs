mod common;

use common::{case30, case30_doc, case30_text, table1};
use scopf::casefile::{parse_contingencies, parse_matpower, write_tables, SolutionDocument, TableLayout};
use scopf::grid::{build_scenario, Contingency};
use scopf::nlp::{assemble, solve, ScopfProblem, SolverOptions};

#[test]
fn case30_counts() {
    let doc = case30_doc();
    assert_eq!((doc.bus.len(), doc.branch.len(), doc.gen.len()), (30, 41, 6));
    let net = case30(1.0);
    assert_eq!((net.n_bus(), net.n_branch(), net.n_gen()), (30, 41, 6));
    assert!(build_scenario(&net, Contingency::Base).unwrap().check_connectivity());
}

#[test]
fn case30_reserializes_to_the_same_network() {
    let doc = case30_doc();
    let again = parse_matpower(&doc.to_matpower()).unwrap();
    assert_eq!(again.to_network(1.0).unwrap(), doc.to_network(1.0).unwrap());
    assert_eq!(again.to_matpower(), doc.to_matpower());
}

#[test]
fn demand_scale_halves_total_demand() {
    let full = case30(1.0).total_demand();
    let half = case30(0.5).total_demand();
    assert!((half.re - 0.5 * full.re).abs() < 1e-15 && (half.im - 0.5 * full.im).abs() < 1e-15);
    // 189.2 MW in the stock case.
    assert!((full.re - 1.892).abs() < 1e-12);
}

#[test]
fn table1_list() {
    let list = table1();
    assert_eq!(list.len(), 12);
    let gens = list.iter().filter(|c| matches!(c, Contingency::GeneratorOutage(_))).count();
    assert_eq!(gens, 6);
    assert!(parse_contingencies("").unwrap().is_empty());
    let text = parse_contingencies("gen 5\ngen 6\nbranch 2\n").unwrap();
    assert_eq!(
        text.entries,
        vec![Contingency::GeneratorOutage(4), Contingency::GeneratorOutage(5), Contingency::BranchOutage(1)]
    );
    assert_eq!(parse_contingencies(&text.to_text()).unwrap(), text);
}

#[test]
fn outages_on_case30() {
    let net = case30(1.0);
    let sc = build_scenario(&net, Contingency::BranchOutage(0)).unwrap();
    assert_eq!(sc.branch_in_service.iter().filter(|&&b| b).count(), 40);
    let g = net.generators.iter().position(|g| g.bus == 1).unwrap();
    let sc = build_scenario(&net, Contingency::GeneratorOutage(g)).unwrap();
    assert_eq!(sc.gen_in_service.iter().filter(|&&b| b).count(), 5);
    assert!(sc.gen_incidence()[g].iter().all(|&v| v == 0.0));
    for c in table1() {
        assert!(build_scenario(&net, c).unwrap().check_connectivity(), "{c}");
    }
}

#[test]
fn missing_branch_table_is_named() {
    let text: String = case30_text()
        .lines()
        .scan(false, |skip, l| {
            if l.starts_with("mpc.branch") {
                *skip = true;
            }
            let keep = !*skip;
            if *skip && l.trim_start().starts_with("];") {
                *skip = false;
            }
            Some(if keep { format!("{l}\n") } else { String::new() })
        })
        .collect();
    let err = parse_matpower(&text).unwrap_err().to_string();
    assert!(err.contains("branch"), "{err}");
}

#[test]
fn tables_and_json_for_scopf_solution() {
    let problem = ScopfProblem::new(case30(0.5), &table1()).unwrap();
    let sol = solve(&assemble(&problem).unwrap(), &SolverOptions::default()).unwrap();
    for layout in [TableLayout::Active, TableLayout::Reactive] {
        let csv = write_tables(&sol, &problem.network, layout);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.split(',').count() == 14));
    }
    // Gen 1 sits at bus 1 and is the third outage.
    let active = write_tables(&sol, &problem.network, TableLayout::Active);
    let bus1: Vec<&str> = active.lines().find(|l| l.starts_with("1,")).unwrap().split(',').collect();
    assert_eq!(bus1[4].parse::<f64>().unwrap(), 0.0);

    let json = serde_json::to_string(&SolutionDocument::from_solution(&sol)).unwrap();
    let doc: SolutionDocument = serde_json::from_str(&json).unwrap();
    let back = doc.clone().into_solution(&problem.network, &problem.contingencies()).unwrap();
    assert_eq!(SolutionDocument::from_solution(&back), doc);
    assert!(doc.into_solution(&problem.network, &problem.contingencies()[..3]).is_err());
}

#[test]
fn base_only_table_has_one_column() {
    let problem = ScopfProblem::new(case30(0.5), &[]).unwrap();
    let sol = solve(&assemble(&problem).unwrap(), &SolverOptions::default()).unwrap();
    let csv = write_tables(&sol, &problem.network, TableLayout::Voltage);
    assert_eq!(csv.lines().next().unwrap(), "bus,0");
}
