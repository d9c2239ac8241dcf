//! Synthetic data generators for the experiments, multivariate normal
//! sampling, CSV ingestion and quantile normalization.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::{sample_decomposed, GWishartParams, SamplerConfig};
use crate::linalg::{cholesky_upper, solve_upper_in_place, SymMatrix};

/// A data matrix with the generating truth attached when it is synthetic.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n × p` observations, one row per sample.
    pub y: DMatrix<f64>,
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone)]
pub struct Truth {
    pub graph: Graph,
    pub k_true: SymMatrix,
}

/// The cycle precision matrix: unit diagonal, 0.5 on first off-diagonals and
/// 0.4 linking the first and last nodes.
pub fn cycle_precision(p: usize) -> SymMatrix {
    let mut k = DMatrix::identity(p, p);
    for i in 0..p - 1 {
        k[(i, i + 1)] = 0.5;
        k[(i + 1, i)] = 0.5;
    }
    k[(0, p - 1)] = 0.4;
    k[(p - 1, 0)] = 0.4;
    k
}

/// Cycle-graph data: `n = ⌊3p/2⌋` rows from `N(0, K⁻¹)` with the cycle
/// precision pattern as the truth.
pub fn gen_cycle_dataset<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<Dataset> {
    if p < 3 {
        return Err(Error::Config(format!("cycle data needs p ≥ 3, got {p}")));
    }
    let k_true = cycle_precision(p);
    let n = 3 * p / 2;
    let y = mvn_sample(n, &k_true, rng)?;
    Ok(Dataset {
        y,
        truth: Some(Truth {
            graph: Graph::cycle(p),
            k_true,
        }),
    })
}

/// Model-generated data: a uniform random graph, `K ~ W_G(δ, I_p)` and
/// `n = 2p` Gaussian rows.
pub fn gen_model_dataset<R: Rng + ?Sized>(p: usize, delta: f64, rng: &mut R) -> Result<Dataset> {
    if p < 2 {
        return Err(Error::Config(format!("model data needs p ≥ 2, got {p}")));
    }
    let mut g = Graph::empty(p);
    for (i, j) in Graph::all_pairs(p) {
        if rng.random::<bool>() {
            g.flip_in_place(i, j);
        }
    }
    let params = GWishartParams::identity_scaled(delta, p, 1.0)?;
    let k_true = sample_decomposed(&g, &params, &SamplerConfig::default(), rng)?;
    let y = mvn_sample(2 * p, &k_true, rng)?;
    Ok(Dataset {
        y,
        truth: Some(Truth { graph: g, k_true }),
    })
}

/// Graph families of the sampler benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchGraphKind {
    /// Cycle plus the chords `(1, i)` for `i = 3..p−1`: `2p − 3` edges and
    /// an all-triangle decomposition.
    ChordedCycle,
    /// Independent edges with the given inclusion probability.
    Er(f64),
}

pub fn gen_bench_graph<R: Rng + ?Sized>(
    kind: BenchGraphKind,
    p: usize,
    rng: &mut R,
) -> Result<Graph> {
    match kind {
        BenchGraphKind::ChordedCycle => {
            if p < 4 {
                return Err(Error::Config(format!(
                    "chorded cycle needs p ≥ 4, got {p}"
                )));
            }
            let mut g = Graph::cycle(p);
            for i in 2..p - 1 {
                g.flip_in_place(0, i);
            }
            Ok(g)
        }
        BenchGraphKind::Er(rho) => {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!(
                    "edge probability must lie in [0,1], got {rho}"
                )));
            }
            let mut g = Graph::empty(p);
            for (i, j) in Graph::all_pairs(p) {
                if rng.random::<f64>() < rho {
                    g.flip_in_place(i, j);
                }
            }
            Ok(g)
        }
    }
}

/// `n` iid rows from `N(0, K⁻¹)`, generated by back-solving against the
/// upper Cholesky factor of `K`; no explicit inverse is formed.
pub fn mvn_sample<R: Rng + ?Sized>(n: usize, k: &SymMatrix, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = k.nrows();
    let chol = cholesky_upper(k)?;
    let mut y = DMatrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for r in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        solve_upper_in_place(chol.factor(), &mut z);
        for c in 0..p {
            y[(r, c)] = z[c];
        }
    }
    Ok(y)
}

/// Quantile-normalizes each column to marginally follow a standard Gaussian:
/// average ranks (ties share their mean rank) are mapped to the normal
/// quantiles at `(r − 0.5)/n`.
pub fn quantile_normalize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    assert!(n >= 2, "quantile normalization needs at least two rows");
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out = DMatrix::zeros(n, p);
    let mut order: Vec<usize> = (0..n).collect();
    for c in 0..p {
        order.sort_by(|&a, &b| x[(a, c)].partial_cmp(&x[(b, c)]).unwrap());
        let mut pos = 0;
        while pos < n {
            let mut end = pos + 1;
            while end < n && x[(order[end], c)] == x[(order[pos], c)] {
                end += 1;
            }
            // 1-based ranks pos+1 ..= end averaged over the tie group
            let avg_rank = (pos + 1 + end) as f64 / 2.0;
            let q = normal.inverse_cdf((avg_rank - 0.5) / n as f64);
            for &row in &order[pos..end] {
                out[(row, c)] = q;
            }
            pos = end;
        }
        order.sort_unstable();
    }
    out
}

/// Loads a rectangular numeric CSV, auto-detecting an optional single header
/// row by its first line failing to parse as numbers. With `demean` each
/// column is centered to mean zero.
pub fn load_matrix_csv<P: AsRef<Path>>(path: P, demean: bool) -> Result<Dataset> {
    let path_str = path.as_ref().display().to_string();
    let content = std::fs::read_to_string(&path)?;
    parse_matrix_csv(&content, &path_str, demean)
}

pub fn parse_matrix_csv(content: &str, path_str: &str, demean: bool) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, usize> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| s.trim().parse::<f64>().map_err(|_| c))
            .collect();
        match parsed {
            Ok(nums) => {
                if let Some(w) = width {
                    if nums.len() != w {
                        return Err(Error::Parse {
                            path: path_str.into(),
                            line: lineno + 1,
                            msg: format!("ragged row: expected {w} columns, got {}", nums.len()),
                        });
                    }
                } else {
                    width = Some(nums.len());
                }
                rows.push(nums);
            }
            Err(col) => {
                if lineno == 0 && rows.is_empty() {
                    continue; // header row
                }
                return Err(Error::Parse {
                    path: path_str.into(),
                    line: lineno + 1,
                    msg: format!("non-numeric cell in column {}", col + 1),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path_str.into(),
            line: 1,
            msg: "no numeric rows".into(),
        });
    }
    let n = rows.len();
    let p = rows[0].len();
    let mut y = DMatrix::zeros(n, p);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            y[(r, c)] = v;
        }
    }
    if demean {
        for c in 0..p {
            let mean = y.column(c).sum() / n as f64;
            for r in 0..n {
                y[(r, c)] -= mean;
            }
        }
    }
    Ok(Dataset { y, truth: None })
}

/// Writes a dense matrix as a bare numeric CSV.
pub fn write_matrix_csv<W: std::io::Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cycle_dataset_shapes_and_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = gen_cycle_dataset(10, &mut rng).unwrap();
        assert_eq!(ds.y.nrows(), 15);
        assert_eq!(ds.y.ncols(), 10);
        let truth = ds.truth.unwrap();
        assert_eq!(truth.graph.n_edges(), 10);
        assert_eq!(truth.k_true[(0, 9)], 0.4);
        assert_eq!(truth.k_true[(3, 4)], 0.5);
        assert_eq!(truth.k_true[(2, 2)], 1.0);
        // positive definiteness via smallest eigenvalue
        let eig = truth.k_true.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
        assert!(gen_cycle_dataset(2, &mut rng).is_err());
    }

    #[test]
    fn model_dataset_edge_count_is_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = 6;
        let reps = 600;
        let mut total_edges = 0usize;
        for _ in 0..reps {
            let ds = gen_model_dataset(p, 3.0, &mut rng).unwrap();
            assert_eq!(ds.y.nrows(), 2 * p);
            total_edges += ds.truth.unwrap().graph.n_edges();
        }
        let m = (p * (p - 1) / 2) as f64;
        let mean = total_edges as f64 / reps as f64;
        let se = (m * 0.25 / reps as f64).sqrt();
        assert!(
            (mean - m / 2.0).abs() < 3.0 * se,
            "mean edges {mean} vs {}",
            m / 2.0
        );
    }

    #[test]
    fn model_dataset_truth_conforms_to_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = gen_model_dataset(5, 3.0, &mut rng).unwrap();
        let truth = ds.truth.unwrap();
        for (i, j) in Graph::all_pairs(5) {
            if !truth.graph.has_edge(i, j) {
                assert_eq!(truth.k_true[(i, j)], 0.0);
            }
        }
        assert!(cholesky_upper(&truth.k_true).is_ok());
    }

    #[test]
    fn bench_graph_edge_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = gen_bench_graph(BenchGraphKind::ChordedCycle, 10, &mut rng).unwrap();
        assert_eq!(g.n_edges(), 17); // 2p − 3

        let p = 9;
        let rho = 2.0 / (p as f64 - 1.0);
        let reps = 2000;
        let mut total = 0usize;
        for _ in 0..reps {
            total += gen_bench_graph(BenchGraphKind::Er(rho), p, &mut rng)
                .unwrap()
                .n_edges();
        }
        let m = (p * (p - 1) / 2) as f64;
        let mean = total as f64 / reps as f64;
        let se = (m * rho * (1.0 - rho) / reps as f64).sqrt();
        assert!((mean - p as f64).abs() < 3.0 * se, "mean {mean} vs {p}");
    }

    #[test]
    fn mvn_covariance_matches_inverse_precision() {
        let k = cycle_precision(4);
        let sigma = crate::linalg::pd_inverse(&k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let y = mvn_sample(n, &k, &mut rng).unwrap();
        for a in 0..4 {
            let mean_a = y.column(a).sum() / n as f64;
            assert!(mean_a.abs() < 4.0 / (n as f64).sqrt() * sigma[(a, a)].sqrt() + 0.01);
            for b in 0..4 {
                let mut cov = 0.0;
                for r in 0..n {
                    cov += y[(r, a)] * y[(r, b)];
                }
                cov /= n as f64;
                // se of a covariance entry is O(1/√n); 3 s.e. with a crude bound
                let se = ((sigma[(a, a)] * sigma[(b, b)] + sigma[(a, b)].powi(2)) / n as f64)
                    .sqrt();
                assert!(
                    (cov - sigma[(a, b)]).abs() < 3.0 * se,
                    "cov({a},{b}) {cov} vs {}",
                    sigma[(a, b)]
                );
            }
        }
    }

    #[test]
    fn mvn_is_reproducible() {
        let k = cycle_precision(3);
        let mut r1 = ChaCha8Rng::seed_from_u64(6);
        let mut r2 = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(
            mvn_sample(5, &k, &mut r1).unwrap(),
            mvn_sample(5, &k, &mut r2).unwrap()
        );
    }

    #[test]
    fn quantile_normalize_sorted_distinct_column() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let out = quantile_normalize(&x);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for k in 0..4 {
            let want = normal.inverse_cdf((k as f64 + 0.5) / 4.0);
            assert_relative_eq!(out[(k, 0)], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_normalize_is_rank_equivariant() {
        let x = DMatrix::from_column_slice(5, 1, &[0.3, -2.0, 10.0, 0.5, 0.4]);
        let out = quantile_normalize(&x);
        let perm = [4usize, 2, 0, 1, 3];
        let xp = DMatrix::from_fn(5, 1, |r, c| x[(perm[r], c)]);
        let outp = quantile_normalize(&xp);
        for r in 0..5 {
            assert_eq!(outp[(r, 0)], out[(perm[r], 0)]);
        }
    }

    #[test]
    fn quantile_normalize_averages_ties() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 2.0, 5.0]);
        let out = quantile_normalize(&x);
        let normal = Normal::new(0.0, 1.0).unwrap();
        // tied entries share ranks 2 and 3 -> average rank 2.5
        let tied = normal.inverse_cdf((2.5 - 0.5) / 4.0);
        assert_relative_eq!(out[(1, 0)], tied, epsilon = 1e-12);
        assert_eq!(out[(1, 0)], out[(2, 0)]);
        assert_relative_eq!(out[(0, 0)], normal.inverse_cdf(0.5 / 4.0), epsilon = 1e-12);
    }

    #[test]
    fn quantile_normalize_idempotent_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(20, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let once = quantile_normalize(&x);
        let twice = quantile_normalize(&once);
        assert!((&twice - &once).abs().max() < 1e-12);
    }

    #[test]
    fn csv_parsing_cases() {
        let ds = parse_matrix_csv("1,2\n3,4\n", "<t>", false).unwrap();
        assert_eq!(ds.y, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));

        let ds = parse_matrix_csv("a,b\n1,2\n3,4\n", "<t>", true).unwrap();
        assert!(ds.y.column(0).sum().abs() < 1e-12);
        assert!(ds.y.column(1).sum().abs() < 1e-12);

        match parse_matrix_csv("1,2\n3\n", "<t>", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ragged-row error, got {other:?}"),
        }
        match parse_matrix_csv("1,2\n3,x\n", "<t>", false) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("column 2"));
            }
            other => panic!("expected cell error, got {other:?}"),
        }
    }

    #[test]
    fn iris_fixture_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris_virginica.csv");
        let ds = load_matrix_csv(path, true).unwrap();
        assert_eq!(ds.y.nrows(), 50);
        assert_eq!(ds.y.ncols(), 4);
        for c in 0..4 {
            assert!(ds.y.column(c).sum().abs() < 1e-10);
        }
    }
}
