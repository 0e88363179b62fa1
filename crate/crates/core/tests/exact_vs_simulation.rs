//! Exact laws against each other and against simulation.

use std::collections::BTreeMap;

use allelic::coalescent_sim::{tree_allelic_oracle, SimMode, Simulator};
use allelic::exact_solver::{absorption_oracle, enumerate_configs, ewens_q, AlleleConfig, MoehleSolver};
use allelic::experiments::{allele_count_sweep, exact_vs_mc, GridSpec, Reference};
use allelic::seeding::derive_seed;
use allelic::LambdaModel;

fn models() -> Vec<LambdaModel> {
    vec![
        LambdaModel::Kingman,
        LambdaModel::BolthausenSznitman,
        LambdaModel::beta(1.5).unwrap(),
        LambdaModel::Star,
    ]
}

#[test]
fn recursion_matches_absorption_chain() {
    for model in models() {
        for rho in [0.25, 0.5, 2.0] {
            let mut solver = MoehleSolver::new(model.clone(), rho).unwrap();
            for n in 1..=7 {
                let rec = solver.distribution(n).unwrap();
                let chain = absorption_oracle(&model, rho, n).unwrap();
                assert!((rec.total() - 1.0).abs() < 1e-9);
                for cfg in enumerate_configs(n).unwrap() {
                    let (a, b) = (rec.prob(&cfg), chain.prob(&cfg));
                    assert!((a - b).abs() <= 1e-8, "{model} rho={rho} {cfg}: {a} vs {b}");
                }
                if model == LambdaModel::Kingman {
                    for cfg in enumerate_configs(n).unwrap() {
                        let e = ewens_q(2.0 * rho, &cfg).unwrap();
                        assert!((rec.prob(&cfg) - e).abs() <= 1e-9, "rho={rho} {cfg}");
                    }
                }
            }
        }
    }
}

fn frequencies(configs: impl Iterator<Item = AlleleConfig>) -> (BTreeMap<AlleleConfig, u64>, u64) {
    let mut counts = BTreeMap::new();
    let mut total = 0;
    for c in configs {
        *counts.entry(c).or_insert(0) += 1;
        total += 1;
    }
    (counts, total)
}

#[test]
fn kingman_simulation_matches_ewens_within_four_sigma() {
    let (n, rho, reps) = (6u64, 0.5, 100_000u64);
    let sim = Simulator::new(LambdaModel::Kingman, rho, SimMode::Full).unwrap();
    let runs = sim.run_replicates(n, 21, reps, None).unwrap();
    let (counts, total) = frequencies(runs.iter().map(|r| r.spectrum.to_config().unwrap()));
    for cfg in enumerate_configs(n as u32).unwrap() {
        let p = ewens_q(2.0 * rho, &cfg).unwrap();
        let observed = counts.get(&cfg).copied().unwrap_or(0) as f64 / total as f64;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        assert!((observed - p).abs() <= 4.0 * sigma + 1e-12, "{cfg}: {observed} vs {p}");
    }
    assert!(counts.keys().all(|c| c.n() == n as u32));
}

#[test]
fn tree_oracle_matches_absorption_chain() {
    let (n, rho, reps) = (5usize, 0.5, 100_000u64);
    let model = LambdaModel::BolthausenSznitman;
    let (counts, total) = frequencies(
        (0..reps).map(|r| tree_allelic_oracle(&model, rho, n, derive_seed(5, r)).unwrap().to_config().unwrap()),
    );
    let exact = absorption_oracle(&model, rho, n as u32).unwrap();
    let tv: f64 = 0.5
        * enumerate_configs(n as u32)
            .unwrap()
            .iter()
            .map(|c| (exact.prob(c) - counts.get(c).copied().unwrap_or(0) as f64 / total as f64).abs())
            .sum::<f64>();
    assert!(tv <= 0.01, "tv = {tv}");
}

#[test]
fn kingman_against_ewens_reference() {
    let grid = GridSpec::new(vec![5], 100_000u64, 8);
    let report = exact_vs_mc(&LambdaModel::Kingman, 0.5, Reference::Ewens, &grid).unwrap();
    assert!(report.row(5).unwrap().get("tv").unwrap().mean <= 0.01);
    assert!(report.passed());
}

#[test]
fn total_variation_halves_when_replicates_quadruple() {
    let model = LambdaModel::BolthausenSznitman;
    let mean_tv = |reps: u64| {
        (0..16u64)
            .map(|seed| {
                let grid = GridSpec::new(vec![4], reps, 100 + seed);
                exact_vs_mc(&model, 0.5, Reference::Oracle, &grid).unwrap().row(4).unwrap().get("tv").unwrap().mean
            })
            .sum::<f64>()
            / 16.0
    };
    let ratio = mean_tv(2_000) / mean_tv(8_000);
    assert!((1.5..=2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn half_widths_scale_as_inverse_root_replicates() {
    let small = allele_count_sweep(0.5, 2, &GridSpec::new(vec![1_000], 400u64, 3)).unwrap();
    let large = allele_count_sweep(0.5, 2, &GridSpec::new(vec![1_000], 1_600u64, 4)).unwrap();
    for name in ["n1", "n2", "n_total", "s"] {
        let a = small.row(1_000).unwrap().get(name).unwrap().half_width.unwrap();
        let b = large.row(1_000).unwrap().get(name).unwrap().half_width.unwrap();
        let ratio = a / b / 2.0;
        assert!((0.8..=1.2).contains(&ratio), "{name}: {a} vs {b}");
    }
}
