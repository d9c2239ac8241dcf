//! Single-edge MCMC machinery shared by the samplers: the analytically
//! available `N` quantity, Cholesky-level conditional updates of the
//! precision matrix, approximate and exact exchange ratios, and the base and
//! informed proposals over the graph neighborhood.
//!
//! All ratios are composed and compared in log space.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{EdgeContext, FlipDirection, Graph, GraphPrior};
use crate::gwishart::{approx_log_ratio, ApproxVariant};
use crate::linalg::{chol_upper_in_place, permute_symmetric_into, SymMatrix};

/// Precision-matrix state for one edge move: the matrix in original node
/// order plus the upper Cholesky factor of the edge-reordered matrix.
/// Non-edge entries of `k` are exactly zero.
#[derive(Debug, Clone)]
pub struct PrecisionState {
    pub k: SymMatrix,
    pub ctx: EdgeContext,
    pub phi: DMatrix<f64>,
}

impl PrecisionState {
    /// Permutes `k` for the context's edge and factors it.
    pub fn for_edge(k: &SymMatrix, ctx: EdgeContext) -> Result<Self> {
        let p = k.nrows();
        let mut phi = DMatrix::zeros(p, p);
        permute_symmetric_into(k, &ctx.perm, &mut phi);
        chol_upper_in_place(&mut phi)?;
        Ok(PrecisionState {
            k: k.clone(),
            ctx,
            phi,
        })
    }
}

/// Sum `Σ_{l≤p−2} Φ_{l,p−1} Φ_{l,p}` (1-based) over the fixed part of the
/// factor's last two columns.
fn phi_cross_sum(phi: &DMatrix<f64>) -> f64 {
    let p = phi.nrows();
    let mut s = 0.0;
    for l in 0..p.saturating_sub(2) {
        s += phi[(l, p - 2)] * phi[(l, p - 1)];
    }
    s
}

/// `log N(Φ_{−f}, D)` given the permuted factor and the relevant entries of
/// the matching permuted rate matrix (`d_pp = D_pp`, `d_p1p = D_{p−1,p}`).
/// Evaluated fully in log space so extreme rate entries stay finite.
pub fn log_n_from_parts(phi: &DMatrix<f64>, d_pp: f64, d_p1p: f64) -> Result<f64> {
    if !(d_pp > 0.0) {
        return Err(Error::NonPositiveRate(d_pp));
    }
    let p = phi.nrows();
    let phi_prev = phi[(p - 2, p - 2)];
    let m = phi_prev * d_p1p / d_pp - phi_cross_sum(phi) / phi_prev;
    Ok(phi_prev.ln() + 0.5 * ((2.0 * std::f64::consts::PI).ln() - d_pp.ln()) + 0.5 * d_pp * m * m)
}

/// `log N` with the permuted rate matrix supplied whole.
pub fn compute_log_n(phi: &DMatrix<f64>, d_perm: &SymMatrix) -> Result<f64> {
    let p = phi.nrows();
    log_n_from_parts(phi, d_perm[(p - 1, p - 1)], d_perm[(p - 2, p - 1)])
}

/// Conditional update of `Φ_{p−1,p}` for the proposed graph: a Gaussian draw
/// when the flipped edge is present in the proposal, the deterministic value
/// that zeroes the reconstructed `K̃_{p−1,p}` otherwise. Returns the new
/// entry and writes it into the factor.
pub fn sample_phi_edge<R: Rng + ?Sized>(
    phi: &mut DMatrix<f64>,
    edge_present: bool,
    d_star_pp: f64,
    d_star_p1p: f64,
    rng: &mut R,
) -> f64 {
    let p = phi.nrows();
    let phi_prev = phi[(p - 2, p - 2)];
    let value = if edge_present {
        let mean = -phi_prev * d_star_p1p / d_star_pp;
        let z: f64 = rng.sample(StandardNormal);
        mean + z / d_star_pp.sqrt()
    } else {
        -phi_cross_sum(phi) / phi_prev
    };
    phi[(p - 2, p - 1)] = value;
    value
}

/// Gibbs update of the last diagonal entry: `D*_pp Φ_pp² ~ χ²(δ*)`. Returns
/// the new entry and writes it into the factor.
pub fn resample_phi_pp<R: Rng + ?Sized>(
    phi: &mut DMatrix<f64>,
    delta_star: f64,
    d_star_pp: f64,
    rng: &mut R,
) -> f64 {
    let p = phi.nrows();
    let x: f64 = rng.sample(ChiSquared::new(delta_star).expect("positive dof"));
    let value = (x / d_star_pp).sqrt();
    phi[(p - 1, p - 1)] = value;
    value
}

/// `log R̂`: prior ratio, `N` raised to the move direction, and the
/// approximate prior-constant ratio.
#[allow(clippy::too_many_arguments)]
pub fn log_rhat(
    g: &Graph,
    ctx: &EdgeContext,
    log_n_current: f64,
    prior: &GraphPrior,
    delta: f64,
    variant: ApproxVariant,
) -> Result<f64> {
    let g_tilde = g.flip_edge(ctx.edge.0, ctx.edge.1)?;
    Ok(prior.log_prior_ratio(g, &g_tilde)
        + ctx.direction.sign() * log_n_current
        + approx_log_ratio(g, ctx.edge, ctx.direction, delta, variant)?)
}

/// `log R_exchange`: prior ratio and the ratio of `N` values at the current
/// state and at a fresh prior draw, raised to the move direction.
pub fn log_r_exchange(
    prior: &GraphPrior,
    g: &Graph,
    g_tilde: &Graph,
    direction: FlipDirection,
    log_n_current: f64,
    log_n_prior_draw: f64,
) -> f64 {
    prior.log_prior_ratio(g, g_tilde) + direction.sign() * (log_n_current - log_n_prior_draw)
}

/// `log g(t)` for the balancing function `g(t) = t/(1+t)`, applied to
/// `x = log t` via the stable logistic transform.
pub fn log_balancing(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `log q(G̃ | G)` of the balanced base proposal: uniform over all pairs at
/// the empty and complete graphs, otherwise removals and additions each get
/// half the mass spread uniformly over their candidates.
pub fn log_base_q(g: &Graph, direction: FlipDirection) -> f64 {
    let e = g.n_edges();
    let m = g.m_max();
    if e == 0 || e == m {
        -(m as f64).ln()
    } else {
        match direction {
            FlipDirection::Remove => -(2.0 * e as f64).ln(),
            FlipDirection::Add => -(2.0 * (m - e) as f64).ln(),
        }
    }
}

/// Samples a single-edge move from the base proposal. Returns the candidate
/// index in canonical pair order and its log proposal probability.
pub fn sample_base_q<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> (usize, f64) {
    let p = g.p();
    let e = g.n_edges();
    let m = g.m_max();
    if e == 0 || e == m {
        let cand = rng.random_range(0..m);
        return (cand, -(m as f64).ln());
    }
    let remove = rng.random::<f64>() < 0.5;
    let count = if remove { e } else { m - e };
    let target = rng.random_range(0..count);
    let mut seen = 0;
    for (cand, (i, j)) in Graph::all_pairs(p).enumerate() {
        if g.has_edge(i, j) == remove {
            if seen == target {
                let dir = if remove {
                    FlipDirection::Remove
                } else {
                    FlipDirection::Add
                };
                return (cand, log_base_q(g, dir));
            }
            seen += 1;
        }
    }
    unreachable!("edge counts out of sync");
}

/// Deterministic evaluation of the informed proposal over the full
/// neighborhood of `g`: per-candidate `log R̂`, `log N`, balanced weights and
/// their log normalizer. No randomness is consumed.
#[derive(Debug, Clone)]
pub struct NeighborhoodScan {
    pub log_rhat: Vec<f64>,
    pub log_n: Vec<f64>,
    /// `log g(R̂) + log q` per candidate in canonical pair order.
    pub weights: Vec<f64>,
    pub log_z: f64,
}

impl NeighborhoodScan {
    /// Log proposal probability of a candidate under the informed proposal.
    pub fn log_q(&self, candidate: usize) -> f64 {
        self.weights[candidate] - self.log_z
    }

    /// Normalized probabilities; they exponentiate to a unit sum.
    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.iter().map(|w| (w - self.log_z).exp()).collect()
    }

    /// Draws one candidate by inverse CDF over the normalized weights,
    /// consuming a single uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, w) in self.weights.iter().enumerate() {
            acc += (w - self.log_z).exp();
            if u < acc {
                return c;
            }
        }
        self.weights.len() - 1
    }
}

/// Per-chain inputs to the neighborhood scan, with the gamma-function terms
/// of the constant-ratio approximation tabulated by common-neighbor count.
#[derive(Debug, Clone)]
pub struct ScanContext<'a> {
    pub prior: &'a GraphPrior,
    pub delta: f64,
    pub d_star: &'a SymMatrix,
    pub variant: ApproxVariant,
    approx_add: Vec<f64>,
    log_odds: f64,
}

impl<'a> ScanContext<'a> {
    pub fn new(
        prior: &'a GraphPrior,
        delta: f64,
        d_star: &'a SymMatrix,
        variant: ApproxVariant,
    ) -> Self {
        let p = d_star.nrows();
        let approx_add: Vec<f64> = (0..p.max(2))
            .map(|d| {
                let d = d as f64;
                statrs::function::gamma::ln_gamma((delta + d) / 2.0)
                    - (2.0 * std::f64::consts::PI.sqrt()).ln()
                    - statrs::function::gamma::ln_gamma((delta + d + 1.0) / 2.0)
            })
            .collect();
        let log_odds = match prior {
            GraphPrior::Uniform => 0.0,
            GraphPrior::Bernoulli(rho) => rho.ln() - (1.0 - rho).ln(),
        };
        ScanContext {
            prior,
            delta,
            d_star,
            variant,
            approx_add,
            log_odds,
        }
    }

    fn approx_term(&self, d_common: usize, sign: f64) -> f64 {
        match self.variant {
            ApproxVariant::Unit => 0.0,
            ApproxVariant::Mohammadi => sign * self.approx_add[d_common],
        }
    }
}

/// Scratch buffers for one candidate evaluation.
struct ScanScratch {
    inv_perm: Vec<usize>,
    work: DMatrix<f64>,
}

impl ScanScratch {
    fn new(p: usize) -> Self {
        ScanScratch {
            inv_perm: vec![0; p],
            work: DMatrix::zeros(p, p),
        }
    }
}

fn eval_candidate(
    g: &Graph,
    k: &SymMatrix,
    ctx: &ScanContext,
    pair: (usize, usize),
    scratch: &mut ScanScratch,
) -> Result<(f64, f64, f64)> {
    let (i, j) = pair;
    let p = g.p();
    // stable-shift reordering applied as a gather: position t reads source
    // node inv[t], with (i, j) moved to the last two positions
    let inv = &mut scratch.inv_perm;
    let mut t = 0;
    for v in 0..p {
        if v != i && v != j {
            inv[t] = v;
            t += 1;
        }
    }
    inv[p - 2] = i;
    inv[p - 1] = j;
    let src = k.as_slice();
    let dst = scratch.work.as_mut_slice();
    for jd in 0..p {
        let sj = inv[jd] * p;
        let col = &mut dst[jd * p..jd * p + p];
        for (id, c) in col.iter_mut().enumerate() {
            *c = src[sj + inv[id]];
        }
    }
    chol_upper_in_place(&mut scratch.work)?;
    let log_n = log_n_from_parts(&scratch.work, ctx.d_star[(j, j)], ctx.d_star[(i, j)])?;

    let sign = if g.has_edge(i, j) { -1.0 } else { 1.0 };
    let d_common = g.common_neighbor_count(i, j)?;
    let log_rhat = sign * ctx.log_odds + sign * log_n + ctx.approx_term(d_common, sign);
    let direction = if sign < 0.0 {
        FlipDirection::Remove
    } else {
        FlipDirection::Add
    };
    let weight = log_balancing(log_rhat) + log_base_q(g, direction);
    Ok((log_rhat, log_n, weight))
}

/// Evaluates the informed proposal weights for every graph in the
/// neighborhood of `g`. Each candidate uses its own edge-specific reordering
/// and Cholesky factor of `k`. Candidates are processed independently and
/// combined in canonical order, so the result is identical for any worker
/// count.
pub fn scan_neighborhood(
    g: &Graph,
    k: &SymMatrix,
    ctx: &ScanContext,
    pool: Option<&rayon::ThreadPool>,
) -> Result<NeighborhoodScan> {
    let p = g.p();
    let pairs: Vec<(usize, usize)> = Graph::all_pairs(p).collect();
    let results: Vec<Result<(f64, f64, f64)>> = match pool {
        Some(pool) if pool.current_num_threads() > 1 => {
            use rayon::prelude::*;
            pool.install(|| {
                pairs
                    .par_iter()
                    .map_init(
                        || ScanScratch::new(p),
                        |scratch, &pair| eval_candidate(g, k, ctx, pair, scratch),
                    )
                    .collect()
            })
        }
        _ => {
            let mut scratch = ScanScratch::new(p);
            pairs
                .iter()
                .map(|&pair| eval_candidate(g, k, ctx, pair, &mut scratch))
                .collect()
        }
    };
    let mut log_rhat = Vec::with_capacity(pairs.len());
    let mut log_n = Vec::with_capacity(pairs.len());
    let mut weights = Vec::with_capacity(pairs.len());
    for r in results {
        let (lr, ln_v, w) = r?;
        log_rhat.push(lr);
        log_n.push(ln_v);
        weights.push(w);
    }
    let log_z = log_sum_exp(&weights);
    Ok(NeighborhoodScan {
        log_rhat,
        log_n,
        weights,
        log_z,
    })
}

/// Numerically stable `ln Σ exp(w)`.
pub fn log_sum_exp(w: &[f64]) -> f64 {
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + w.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// One evaluated informed proposal: candidate weights, the sampled move and
/// the log ratios attached to it as the surrounding step fills them in.
#[derive(Debug, Clone)]
pub struct ProposalEvaluation {
    pub scan: NeighborhoodScan,
    pub chosen: usize,
    pub log_rhat: f64,
    pub log_n_current: f64,
    pub log_rhat_da: Option<f64>,
    pub log_r_exchange: Option<f64>,
    pub log_r_da: Option<f64>,
}

/// Scans the neighborhood and samples one candidate. Weight evaluation is
/// deterministic given `(g, k)`; exactly one uniform draw selects the move.
pub fn informed_proposal<R: Rng + ?Sized>(
    g: &Graph,
    k: &SymMatrix,
    ctx: &ScanContext,
    pool: Option<&rayon::ThreadPool>,
    rng: &mut R,
) -> Result<ProposalEvaluation> {
    let scan = scan_neighborhood(g, k, ctx, pool)?;
    let chosen = scan.sample(rng);
    Ok(ProposalEvaluation {
        log_rhat: scan.log_rhat[chosen],
        log_n_current: scan.log_n[chosen],
        scan,
        chosen,
        log_rhat_da: None,
        log_r_exchange: None,
        log_r_da: None,
    })
}
