//! Trace post-processing: integrated autocorrelation time, effective sample
//! size, cost of an independent sample, edge-inclusion probabilities,
//! precision-matrix accuracy measures and a basic split-R̂.
//!
//! Burn-in is assumed to have been dropped before records reach this module;
//! every estimator uses the full series it is given.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::TraceRow;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{cholesky_upper, SymMatrix};

/// Integrated autocorrelation time with a degeneracy flag for constant
/// series.
#[derive(Debug, Clone, Copy)]
pub struct Iact {
    pub tau: f64,
    /// Set when the series was (numerically) constant and `tau` defaulted
    /// to one.
    pub constant_series: bool,
}

/// Geyer initial monotone positive sequence estimator of the integrated
/// autocorrelation time `τ = 1 + 2 Σ ρ_k`: adjacent-pair sums of the
/// autocovariance are accumulated while positive and non-increasing.
pub fn iact(series: &[f64]) -> Result<Iact> {
    let n = series.len();
    if n < 100 {
        return Err(Error::Config(format!(
            "iact needs at least 100 points, got {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let gamma = |k: usize| -> f64 {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let g0 = gamma(0);
    if g0 <= 1e-300 {
        return Ok(Iact {
            tau: 1.0,
            constant_series: true,
        });
    }
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    loop {
        let k = 2 * m;
        if k + 1 >= n {
            break;
        }
        let pair = gamma(k) + gamma(k + 1);
        if pair <= 0.0 {
            break;
        }
        let capped = pair.min(prev_pair);
        sum += capped;
        prev_pair = capped;
        m += 1;
    }
    let tau = (2.0 * sum - g0) / g0;
    Ok(Iact {
        tau: tau.max(1e-3),
        constant_series: false,
    })
}

/// Effective sample size `n / τ`.
pub fn ess(series: &[f64]) -> Result<f64> {
    Ok(series.len() as f64 / iact(series)?.tau)
}

/// Cost of an independent sample in seconds: the integrated autocorrelation
/// time of the edge-count series times the mean per-iteration wall time.
pub fn cost_independent_sample(trace: &[TraceRow]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Config("empty trace".into()));
    }
    let series: Vec<f64> = trace.iter().map(|r| r.n_edges as f64).collect();
    let tau = iact(&series)?.tau;
    let mean_nanos = trace.iter().map(|r| r.nanos as f64).sum::<f64>() / trace.len() as f64;
    Ok(tau * mean_nanos * 1e-9)
}

/// Posterior edge-inclusion probabilities: entry `(i, j)` is the fraction of
/// recorded iterations whose graph contains the edge. Symmetric with zero
/// diagonal.
pub fn inclusion_probabilities(trace: &[TraceRow], p: usize) -> Result<SymMatrix> {
    if trace.is_empty() {
        return Err(Error::Config("empty trace".into()));
    }
    let m = p * (p - 1) / 2;
    let mut counts = vec![0u64; m];
    for row in trace {
        let g = Graph::from_hex(p, &row.edges_hex)?;
        for (i, j) in g.edges() {
            counts[Graph::edge_index(p, i, j)] += 1;
        }
    }
    let n = trace.len() as f64;
    let mut out = DMatrix::zeros(p, p);
    for (c, (i, j)) in Graph::all_pairs(p).enumerate() {
        let v = counts[c] as f64 / n;
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// Kullback-Leibler divergence
/// `0.5 { tr(K_true⁻¹ K̂) − p − log(|K̂| / |K_true|) }`
/// from the generating Gaussian to the one defined by `k_hat`, plus the
/// Frobenius norm of `K̂ − K_true`. Both evaluated via Cholesky
/// log-determinants.
pub fn precision_summaries(k_hat: &SymMatrix, k_true: &SymMatrix) -> Result<(f64, f64)> {
    let p = k_true.nrows();
    if k_hat.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: k_hat.nrows(),
        });
    }
    let chol_true = cholesky_upper(k_true)?;
    let chol_hat = cholesky_upper(k_hat)?;
    let mut trace_term = 0.0;
    for c in 0..p {
        let col: Vec<f64> = (0..p).map(|r| k_hat[(r, c)]).collect();
        let solved = chol_true.solve_vec(&col); // K_true⁻¹ K̂ column c
        trace_term += solved[c];
    }
    let kl = 0.5 * (trace_term - p as f64 - (chol_hat.log_det() - chol_true.log_det()));
    let frob = (k_hat - k_true).map(|v| v * v).sum().sqrt();
    Ok((kl, frob))
}

/// Two-half split-R̂: the potential scale reduction factor across the first
/// and second half of a single series. This is the classic split statistic,
/// not the rank-normalized refinement.
pub fn split_rhat(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 100 {
        return Err(Error::Config(format!(
            "split_rhat needs at least 100 points, got {n}"
        )));
    }
    let half = n / 2;
    let chains = [&series[..half], &series[n - half..]];
    let len = half as f64;
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / len)
        .collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (len - 1.0))
        .collect();
    let w = 0.5 * (vars[0] + vars[1]);
    if w <= 1e-300 {
        return Ok(1.0);
    }
    let grand = 0.5 * (means[0] + means[1]);
    let b = len * ((means[0] - grand).powi(2) + (means[1] - grand).powi(2));
    let var_plus = (len - 1.0) / len * w + b / len;
    Ok((var_plus / w).sqrt())
}

/// Summary emitted by the `diagnose` subcommand. Optional measures are
/// omitted from the JSON when their inputs were not supplied.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub iact: f64,
    pub ess: f64,
    pub cis_seconds: f64,
    /// Row-major `p × p` inclusion-probability matrix.
    pub inclusion: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frobenius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_rhat: Option<f64>,
}

/// Computes every measure the inputs allow: trace-only measures always,
/// KL and Frobenius only when both the posterior-mean and true precision
/// matrices are available.
pub fn build_report(
    trace: &[TraceRow],
    p: usize,
    k_hat: Option<&SymMatrix>,
    k_true: Option<&SymMatrix>,
) -> Result<DiagnosticsReport> {
    let series: Vec<f64> = trace.iter().map(|r| r.n_edges as f64).collect();
    let tau = iact(&series)?.tau;
    let inclusion = inclusion_probabilities(trace, p)?;
    let (kl, frobenius) = match (k_hat, k_true) {
        (Some(kh), Some(kt)) => {
            let (kl, fr) = precision_summaries(kh, kt)?;
            (Some(kl), Some(fr))
        }
        _ => (None, None),
    };
    Ok(DiagnosticsReport {
        iact: tau,
        ess: series.len() as f64 / tau,
        cis_seconds: cost_independent_sample(trace)?,
        inclusion: {
            let mut flat = Vec::with_capacity(p * p);
            for i in 0..p {
                for j in 0..p {
                    flat.push(inclusion[(i, j)]);
                }
            }
            flat
        },
        kl,
        frobenius,
        split_rhat: Some(split_rhat(&series)?),
    })
}

/// Writes the inclusion matrix as a dense CSV without header.
pub fn write_inclusion_csv<W: std::io::Write>(mut w: W, m: &SymMatrix) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iact_of_iid_is_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let series: Vec<f64> = (0..100_000)
            .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            .collect();
        let tau = iact(&series).unwrap().tau;
        assert!((0.8..1.2).contains(&tau), "tau {tau}");
    }

    #[test]
    fn iact_of_ar1_matches_analytic() {
        // φ = 0.9: τ = (1+φ)/(1−φ) = 19
        let phi = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = 0.0;
        let series: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                x = phi * x + z;
                x
            })
            .collect();
        let tau = iact(&series).unwrap().tau;
        assert_relative_eq!(tau, 19.0, max_relative = 0.15);
    }

    #[test]
    fn iact_constant_series_flags_warning() {
        let series = vec![0.0; 1000];
        let r = iact(&series).unwrap();
        assert_eq!(r.tau, 1.0);
        assert!(r.constant_series);
    }

    #[test]
    fn iact_rejects_short_series() {
        assert!(iact(&[1.0; 50]).is_err());
    }

    #[test]
    fn iact_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = 0.0;
        let series: Vec<f64> = (0..50_000)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                x = 0.5 * x + z;
                x
            })
            .collect();
        let shifted: Vec<f64> = series.iter().map(|v| 3.0 + 2.5 * v).collect();
        let a = iact(&series).unwrap().tau;
        let b = iact(&shifted).unwrap().tau;
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    fn fake_rows(edge_counts: &[usize], nanos: u64) -> Vec<TraceRow> {
        edge_counts
            .iter()
            .enumerate()
            .map(|(i, &e)| TraceRow {
                iter: i as u64 + 1,
                edges_hex: String::new(),
                n_edges: e,
                nanos,
                promotions: 0,
                accepts: 0,
            })
            .collect()
    }

    #[test]
    fn cis_composes_iact_and_mean_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let counts: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..5)).collect();
        let rows = fake_rows(&counts, 1_000_000); // 1 ms per iteration
        let series: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let tau = iact(&series).unwrap().tau;
        let cis = cost_independent_sample(&rows).unwrap();
        assert_relative_eq!(cis, tau * 1e-3, max_relative = 1e-12);
        // scaling all timings scales the cost linearly
        let rows2 = fake_rows(&counts, 2_000_000);
        assert_relative_eq!(
            cost_independent_sample(&rows2).unwrap(),
            2.0 * cis,
            max_relative = 1e-12
        );
    }

    #[test]
    fn inclusion_of_repeated_graph_is_indicator() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let rows: Vec<TraceRow> = (0..10)
            .map(|i| TraceRow {
                iter: i + 1,
                edges_hex: g.to_hex(),
                n_edges: g.n_edges(),
                nanos: 1,
                promotions: 0,
                accepts: 0,
            })
            .collect();
        let m = inclusion_probabilities(&rows, 4).unwrap();
        for (i, j) in Graph::all_pairs(4) {
            let want = if g.has_edge(i, j) { 1.0 } else { 0.0 };
            assert_eq!(m[(i, j)], want);
            assert_eq!(m[(j, i)], want);
        }
        for i in 0..4 {
            assert_eq!(m[(i, i)], 0.0);
        }
    }

    #[test]
    fn inclusion_concatenation_is_weighted_average() {
        let g1 = Graph::from_edges(3, [(0, 1)]).unwrap();
        let g2 = Graph::from_edges(3, [(1, 2), (0, 2)]).unwrap();
        let mk = |g: &Graph, n: usize| -> Vec<TraceRow> {
            (0..n)
                .map(|i| TraceRow {
                    iter: i as u64 + 1,
                    edges_hex: g.to_hex(),
                    n_edges: g.n_edges(),
                    nanos: 1,
                    promotions: 0,
                    accepts: 0,
                })
                .collect()
        };
        let a = mk(&g1, 30);
        let b = mk(&g2, 10);
        let ma = inclusion_probabilities(&a, 3).unwrap();
        let mb = inclusion_probabilities(&b, 3).unwrap();
        let mut both = a.clone();
        both.extend(b.clone());
        let mab = inclusion_probabilities(&both, 3).unwrap();
        let want = ma * 0.75 + mb * 0.25;
        assert!((mab - want).abs().max() < 1e-12);
    }

    #[test]
    fn precision_summaries_examples() {
        let i2 = DMatrix::identity(2, 2);
        let (kl, fr) = precision_summaries(&i2, &i2).unwrap();
        assert_relative_eq!(kl, 0.0, epsilon = 1e-12);
        assert_relative_eq!(fr, 0.0, epsilon = 1e-12);

        let two = &i2 * 2.0;
        let (kl, fr) = precision_summaries(&two, &i2).unwrap();
        assert_relative_eq!(kl, 1.0 - 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(fr, 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let y = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let a = &x * x.transpose() + DMatrix::identity(3, 3);
            let b = &y * y.transpose() + DMatrix::identity(3, 3);
            let (kl, _) = precision_summaries(&a, &b).unwrap();
            assert!(kl >= -1e-10, "kl {kl}");
        }
    }

    #[test]
    fn split_rhat_near_one_for_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let series: Vec<f64> = (0..100_000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let r = split_rhat(&series).unwrap();
        assert!((r - 1.0).abs() < 0.01, "rhat {r}");
        assert!(r >= 1.0 - 0.01);
    }
}
