// Temporary exactness probe for the samplers against the enumerated
// posterior on 3 nodes. Superseded by the acceptance suite.

use std::collections::HashMap;

use gwmcmc::chain::{run_chain, Algorithm, ChainConfig, ClInner};
use gwmcmc::graph::{Graph, GraphPrior};
use gwmcmc::gwishart::{log_i_decomposable, GWishartParams, PosteriorParams};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn enumerate_posterior(
    p: usize,
    prior: &GWishartParams,
    post: &PosteriorParams,
    graph_prior: &GraphPrior,
) -> HashMap<String, f64> {
    let m = p * (p - 1) / 2;
    let pairs: Vec<_> = Graph::all_pairs(p).collect();
    let mut logps = Vec::new();
    let mut keys = Vec::new();
    for mask in 0u32..1 << m {
        let edges = pairs
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &e)| e);
        let g = Graph::from_edges(p, edges).unwrap();
        let lp = graph_prior.log_prior(&g) + log_i_decomposable(&g, &post.0).unwrap()
            - log_i_decomposable(&g, prior).unwrap();
        logps.push(lp);
        keys.push(g.to_hex());
    }
    let mx = logps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logps.iter().map(|l| (l - mx).exp()).sum();
    keys.into_iter()
        .zip(logps)
        .map(|(k, l)| (k, (l - mx).exp() / total))
        .collect()
}

fn tv_distance(exact: &HashMap<String, f64>, counts: &HashMap<String, usize>, n: usize) -> f64 {
    let mut tv = 0.0;
    for (k, &pe) in exact {
        let pf = counts.get(k).map(|&c| c as f64 / n as f64).unwrap_or(0.0);
        tv += (pe - pf).abs();
    }
    0.5 * tv
}

#[test]
fn samplers_hit_enumerated_posterior_p3() {
    let p = 3;
    let n = 10;
    let prior = GWishartParams::identity_scaled(3.0, p, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    let k_true = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0]);
    // crude N(0, K⁻¹) draws via Cholesky solve
    let chol = gwmcmc::linalg::cholesky_upper(&k_true).unwrap();
    let mut y = DMatrix::zeros(n, p);
    for r in 0..n {
        let mut z: Vec<f64> = (0..p)
            .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
            .collect();
        gwmcmc::linalg::solve_upper_in_place(chol.factor(), &mut z);
        for c in 0..p {
            y[(r, c)] = z[c];
        }
    }
    let post = PosteriorParams::from_data(&prior, &y).unwrap();
    let graph_prior = GraphPrior::Uniform;
    let exact = enumerate_posterior(p, &prior, &post, &graph_prior);
    eprintln!("exact posterior: {exact:?}");

    for algo in [
        Algorithm::Wwa,
        Algorithm::WwaNoInformed,
        Algorithm::WwaNoDa,
        Algorithm::ExchangePlain,
        Algorithm::Dcbf,
        Algorithm::Cl,
    ] {
        let cfg = ChainConfig {
            algorithm: algo,
            iterations: 50_000,
            burn_in: 1000,
            seed: 2718,
            cl_inner: ClInner::Direct,
            prior: graph_prior,
            ..ChainConfig::default()
        };
        let run = run_chain(&cfg, &prior, &post, &Graph::empty(p)).unwrap();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for r in &run.records {
            *counts.entry(r.edges_hex.clone()).or_default() += 1;
        }
        let tv = tv_distance(&exact, &counts, run.records.len());
        eprintln!("{:>16}: TV = {tv:.4}", algo.name());
        assert!(tv < 0.05, "{algo:?} TV {tv}");
    }
}
