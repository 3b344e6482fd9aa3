use dagreserve_core::analysis::miss_probabilities;
use dagreserve_core::dag::longest_path;
use dagreserve_core::optimizer::{is_feasible, optimize_distribution};
use dagreserve_core::sim::run;
use dagreserve_core::{
    analyze_distribution, check_constraints, ConditionalDag, JointAtom, JointDistribution,
    MissConstraint, Node, OptimizerOptions, ReservationConfig, SimConfig, SupplyPattern, TaskSpec,
    Workload,
};
use proptest::prelude::*;

/// Raw material for a random conditional DAG over ids `1..=n`. Edges and
/// branch targets always point from a smaller to a larger id, so the graph
/// is acyclic by construction. Branch targets are subjobs only, so no
/// condition is nested inside another.
#[derive(Clone, Debug)]
struct RawGraph {
    kinds: Vec<bool>,
    execs: Vec<u8>,
    edge_bits: Vec<bool>,
    weights: Vec<Vec<u8>>,
}

fn raw_graph() -> impl Strategy<Value = RawGraph> {
    (2usize..9).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::bool::weighted(0.3), n),
            prop::collection::vec(0u8..12, n),
            prop::collection::vec(prop::bool::weighted(0.35), n * (n - 1) / 2),
            prop::collection::vec(prop::collection::vec(1u8..10, 1..4), n),
        )
            .prop_map(|(kinds, execs, edge_bits, weights)| RawGraph {
                kinds,
                execs,
                edge_bits,
                weights,
            })
    })
}

/// Builds the graph and returns it with the branch count of each condition.
fn build(raw: &RawGraph) -> (ConditionalDag, Vec<usize>) {
    build_with(raw, 0.0)
}

fn build_with(raw: &RawGraph, min_exec: f64) -> (ConditionalDag, Vec<usize>) {
    let n = raw.kinds.len();
    let mut is_target = vec![false; n];
    let mut conditions: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        if !raw.kinds[i] || is_target[i] {
            continue;
        }
        let candidates: Vec<usize> = (i + 1..n)
            .filter(|&j| !raw.kinds[j] && !is_target[j])
            .collect();
        let targets: Vec<usize> = candidates.into_iter().take(raw.weights[i].len()).collect();
        if targets.is_empty() {
            continue;
        }
        for &t in &targets {
            is_target[t] = true;
        }
        conditions.push((i, targets));
    }
    let mut nodes: Vec<Node> = (0..n)
        .map(|i| Node::subjob(i as u64 + 1, min_exec + f64::from(raw.execs[i]) * 0.5))
        .collect();
    let mut counts = Vec::new();
    for (i, targets) in &conditions {
        let w = &raw.weights[*i][..targets.len()];
        let total: f64 = w.iter().map(|&x| f64::from(x)).sum();
        let branches: Vec<(f64, u64)> = targets
            .iter()
            .zip(w)
            .map(|(&t, &x)| (f64::from(x) / total, t as u64 + 1))
            .collect();
        nodes[*i] = Node::condition(*i as u64 + 1, &branches);
        counts.push(targets.len());
    }
    let mut edges = Vec::new();
    let mut bit = 0;
    for a in 0..n {
        for b in a + 1..n {
            if raw.edge_bits[bit] {
                edges.push((a as u64 + 1, b as u64 + 1));
            }
            bit += 1;
        }
    }
    (ConditionalDag::new(nodes, edges), counts)
}

fn config() -> impl Strategy<Value = ReservationConfig> {
    (1u32..6, 0.05f64..1.0, 0.5f64..50.0)
        .prop_map(|(m, frac, p)| ReservationConfig::new(m, frac * p, p).unwrap())
}

fn distribution(max_atoms: usize) -> impl Strategy<Value = JointDistribution> {
    prop::collection::vec((1u32..20, 0.0f64..30.0, 0.0f64..=1.0), 1..=max_atoms).prop_map(|raw| {
        let total: f64 = raw.iter().map(|r| f64::from(r.0)).sum();
        let atoms = raw.iter().map(|&(w, vol, frac)| JointAtom {
            probability: f64::from(w) / total,
            volume: vol,
            length: vol * frac,
        });
        JointDistribution::new(atoms).unwrap()
    })
}

fn task(
    d: JointDistribution,
    deadline: f64,
    rho: f64,
    constraints: Vec<MissConstraint>,
    omega: u32,
) -> TaskSpec {
    TaskSpec {
        workload: Workload::Distribution(d),
        deadline,
        period: deadline,
        tardiness_bound: rho,
        constraints,
        omega,
        replenishment: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn realization_probabilities_sum_to_one(raw in raw_graph()) {
        let (dag, counts) = build(&raw);
        prop_assert!(dag.validate().is_empty(), "{:?}", dag.validate());
        let rs = dag.enumerate_realizations().unwrap();
        let total: f64 = rs.iter().map(|r| r.probability).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert_eq!(rs.len(), counts.iter().product::<usize>());
    }

    #[test]
    fn realization_measures(raw in raw_graph()) {
        let (dag, _) = build(&raw);
        for r in dag.enumerate_realizations().unwrap() {
            let vol: f64 = r.subjobs.iter().map(|s| s.1).sum();
            prop_assert_eq!(r.volume, vol);
            prop_assert!(r.length <= r.volume + 1e-12);
            prop_assert_eq!(longest_path(&r.subjobs, &r.edges).unwrap(), r.length);
            for skip in 0..r.edges.len() {
                let mut fewer = r.edges.clone();
                fewer.remove(skip);
                prop_assert!(longest_path(&r.subjobs, &fewer).unwrap() <= r.length);
            }
        }
    }

    #[test]
    fn enumeration_is_deterministic(raw in raw_graph()) {
        let (dag, _) = build(&raw);
        prop_assert_eq!(dag.enumerate_realizations().unwrap(), dag.enumerate_realizations().unwrap());
    }

    #[test]
    fn sbf_inverts_service_time(cfg in config(), w in 1e-3f64..1e4) {
        let g = cfg.inverse_sbf(w);
        prop_assert!((cfg.sbf(g) - w).abs() <= 1e-9 * w.max(1.0), "sbf(g({})) = {}", w, cfg.sbf(g));
        prop_assert!(cfg.sbf(g - 1e-6 * cfg.period()) < w);
    }

    #[test]
    fn sbf_shape(cfg in config(), t in 0.0f64..500.0, dt in 0.0f64..50.0) {
        let m = f64::from(cfg.parallelism());
        prop_assert!(cfg.sbf(t + dt) >= cfg.sbf(t));
        prop_assert!(cfg.sbf(t) <= m * t + 1e-9);
        let gap = cfg.period() - cfg.budget();
        let t = t + 2.0 * gap;
        let lhs = cfg.sbf(t + cfg.period());
        prop_assert!(lhs >= cfg.sbf(t) + m * cfg.budget() - 1e-9 * lhs.max(1.0));
    }

    #[test]
    fn response_bound_monotone(
        cfg in config(),
        vol in 0.0f64..100.0,
        frac in 0.0f64..=1.0,
        backlog in 0.0f64..50.0,
        bump in 0.0f64..10.0,
        shrink in 0.1f64..1.0,
    ) {
        let len = vol * frac;
        let base = cfg.response_time_bound(vol, len, backlog).unwrap();
        prop_assert!(cfg.response_time_bound(vol + bump, len, backlog).unwrap() >= base);
        prop_assert!(cfg.response_time_bound(vol + bump, (len + bump).min(vol + bump), backlog).unwrap() >= base);
        prop_assert!(cfg.response_time_bound(vol, len, backlog + bump).unwrap() >= base);
        let smaller = ReservationConfig::new(cfg.parallelism(), cfg.budget() * shrink, cfg.period()).unwrap();
        prop_assert!(smaller.response_time_bound(vol, len, backlog).unwrap() >= base - 1e-9 * base.max(1.0));
    }

    #[test]
    fn cdf_formula_matches_enumeration(d in distribution(8), cfg in config(), backlog in 0.0f64..20.0, us in prop::collection::vec(0.0f64..400.0, 10)) {
        let rv = d.response_time_rv(&cfg, backlog);
        let mut points = us;
        points.extend(rv.atoms().iter().map(|a| a.1));
        for u in points {
            let formula = d.response_time_cdf_formula(&cfg, backlog, u);
            prop_assert!((formula - (1.0 - rv.exceedance(u))).abs() <= 1e-9, "u = {}: {} vs {}", u, formula, 1.0 - rv.exceedance(u));
        }
    }

    #[test]
    fn distribution_monotonicity(d in distribution(8), cfg in config(), a in 0.0f64..40.0, b in 0.0f64..40.0, backlog in 0.0f64..20.0, more in 0.0f64..20.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        let rv = d.response_time_rv(&cfg, backlog);
        prop_assert!(rv.exceedance(hi) <= rv.exceedance(lo));
        prop_assert!(d.joint_cdf(lo, lo) <= d.joint_cdf(hi, lo));
        prop_assert!(d.joint_cdf(lo, lo) <= d.joint_cdf(lo, hi));
        let w0 = d.workload_rv(cfg.parallelism(), backlog);
        let w1 = d.workload_rv(cfg.parallelism(), backlog + more);
        prop_assert_eq!(w0.atoms().len(), w1.atoms().len());
        for (x, y) in w0.atoms().iter().zip(w1.atoms()) {
            prop_assert!(x.1 >= 0.0 && y.1 >= x.1);
        }
        for atom in d.atoms() {
            let r0 = cfg.response_time_bound(atom.volume, atom.length, backlog).unwrap();
            let r1 = cfg.response_time_bound(atom.volume, atom.length, backlog + more).unwrap();
            prop_assert!(r0 >= 0.0 && r1 >= r0);
        }
    }

    #[test]
    fn workload_marginal_with_one_server(d in distribution(8)) {
        let w = d.workload_rv(1, 0.0);
        for a in d.atoms() {
            let mass: f64 = d.atoms().iter().filter(|b| b.volume == a.volume).map(|b| b.probability).sum();
            let got = w.atoms().iter().find(|x| x.1 == a.volume).map(|x| x.0);
            prop_assert_eq!(got, Some(mass));
        }
    }

    #[test]
    fn miss_probability_monotone(d in distribution(6), m in 1u32..5, p in 5.0f64..40.0, f1 in 0.05f64..1.0, f2 in 0.05f64..1.0, rho in 0.1f64..10.0, more in 0.0f64..10.0) {
        let deadline = p;
        let (e1, e2) = ((f1.min(f2)) * p, (f1.max(f2)) * p);
        let c1 = ReservationConfig::new(m, e1, p).unwrap();
        let c2 = ReservationConfig::new(m, e2, p).unwrap();
        let (cold1, hot1) = miss_probabilities(&d, deadline, rho, &c1);
        let (cold2, hot2) = miss_probabilities(&d, deadline, rho, &c2);
        prop_assert!(hot2 <= hot1 && cold2 <= cold1);
        prop_assert!(cold1 <= hot1);
        let (_, hot_more) = miss_probabilities(&d, deadline, rho + more, &c1);
        prop_assert!(hot_more >= hot1);
        let t = task(d.clone(), deadline, rho, vec![], 1);
        let report = analyze_distribution(&d, &t, &c1).unwrap();
        for k in [1, 2, 3, 10, 100] {
            prop_assert!(report.tight_bound(k) <= report.simple_bound(k));
            prop_assert!((0.0..=1.0).contains(&report.simple_bound(k)));
        }
        if report.stable {
            prop_assert!(report.simple_bound(100) <= report.simple_bound(10));
            prop_assert!(report.simple_bound(10) <= report.simple_bound(1));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimizer_entries_are_feasible_and_near_minimal(
        d in distribution(5),
        deadline in 10.0f64..60.0,
        rho in 0.5f64..5.0,
        k in 1u32..4,
        theta in 0.01f64..0.6,
        probes in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let t = task(d.clone(), deadline, rho, vec![MissConstraint { k, theta }], 3);
        let opts = OptimizerOptions::default();
        let eps = opts.eps_rel * deadline;
        let menu = optimize_distribution(&d, &t, &opts).unwrap();
        prop_assert!(menu.windows(2).all(|w| w[0].m < w[1].m));
        for o in &menu {
            prop_assert!(o.budget > 0.0 && o.budget <= deadline);
            let report = analyze_distribution(&d, &t, &o.config()).unwrap();
            prop_assert!(check_constraints(&t, &report).pass);
            let below = o.budget - 2.0 * eps;
            if below > 0.0 {
                let cfg = ReservationConfig::new(o.m, below, o.period).unwrap();
                prop_assert!(!is_feasible(&d, &t, &cfg, opts.bound));
            }
            for &f in &probes {
                let e = o.budget + f * (deadline - o.budget);
                let cfg = ReservationConfig::new(o.m, e, o.period).unwrap();
                prop_assert!(is_feasible(&d, &t, &cfg, opts.bound), "E = {} above E_min = {}", e, o.budget);
            }
        }
        let mut wider = t.clone();
        wider.omega = 5;
        let more = optimize_distribution(&d, &wider, &opts).unwrap();
        for o in &menu {
            prop_assert_eq!(more.iter().find(|x| x.m == o.m), Some(o));
        }
    }
}

fn supply() -> impl Strategy<Value = SupplyPattern> {
    prop_oneof![
        Just(SupplyPattern::Front),
        Just(SupplyPattern::Back),
        Just(SupplyPattern::WorstCase)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulation_respects_analytic_bounds(
        raw in raw_graph(),
        m in 1u32..4,
        p in 2.0f64..12.0,
        frac in 0.2f64..1.0,
        deadline in 5.0f64..40.0,
        slack in 1.0f64..1.5,
        rho in 0.5f64..8.0,
        seed in any::<u64>(),
        pattern in supply(),
    ) {
        let (dag, _) = build_with(&raw, 0.5);
        let task = TaskSpec {
            workload: Workload::Dag(dag),
            deadline,
            period: deadline * slack,
            tardiness_bound: rho,
            constraints: vec![],
            omega: 1,
            replenishment: None,
        };
        let cfg = ReservationConfig::new(m, frac * p, p).unwrap();
        let sim = SimConfig { task, cfg, num_jobs: 200, seed, supply: pattern, record_lemma: true };
        let trace = run(&sim).unwrap();
        let check = trace.check_bounds();
        prop_assert!(check.is_clean(), "{:?}", check);
        prop_assert_eq!(trace.check_work_service_lemma(), Some(Ok(())));
        prop_assert_eq!(trace.aggregate.work_conservation_violations, 0);
        prop_assert_eq!(&run(&sim).unwrap(), &trace);
    }
}
