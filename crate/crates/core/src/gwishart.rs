//! Sampling from the G-Wishart distribution `W_G(δ, D)` for arbitrary
//! graphs: the direct fixed-point sampler, the decomposition-accelerated
//! sampler, maximum-clique block Gibbs sweeps, the normalizing-constant
//! ratio approximation and the exact decomposable constant.
//!
//! The density convention throughout is
//! `p(K | G) ∝ |K|^{δ/2−1} exp(−tr(K D)/2)` on the cone `M⁺(G)`, which for
//! the complete graph equals a standard Wishart with shape `δ + p − 1` and
//! scale `D⁻¹`.

use nalgebra::DMatrix;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::decompose::{atom_decomposition, connected_components};
use crate::error::{Error, Result};
use crate::graph::{FlipDirection, Graph};
use crate::linalg::{
    self, cholesky_upper, pd_inverse, wishart_complete_draw, SymMatrix, MIN_CHOL_DIAG,
};

/// Prior parameters of `W_G(δ, D)`.
#[derive(Debug, Clone)]
pub struct GWishartParams {
    pub delta: f64,
    pub d: SymMatrix,
}

impl GWishartParams {
    pub fn new(delta: f64, d: SymMatrix) -> Result<Self> {
        if !(delta > 2.0) {
            return Err(Error::BadDegreesOfFreedom(delta));
        }
        cholesky_upper(&d)?;
        Ok(GWishartParams { delta, d })
    }

    /// `δ I_p` prior shorthand with `D = scale · I`.
    pub fn identity_scaled(delta: f64, p: usize, scale: f64) -> Result<Self> {
        Self::new(delta, DMatrix::identity(p, p) * scale)
    }
}

/// Conjugate posterior parameters `δ* = δ + n`, `D* = D + YᵀY`.
#[derive(Debug, Clone)]
pub struct PosteriorParams(pub GWishartParams);

impl PosteriorParams {
    pub fn from_data(prior: &GWishartParams, y: &DMatrix<f64>) -> Result<Self> {
        if y.ncols() != prior.d.nrows() {
            return Err(Error::DimensionMismatch {
                expected: prior.d.nrows(),
                got: y.ncols(),
            });
        }
        let n = y.nrows() as f64;
        let mut d_star = y.transpose() * y;
        d_star += &prior.d;
        linalg::symmetrize(&mut d_star);
        Ok(PosteriorParams(GWishartParams {
            delta: prior.delta + n,
            d: d_star,
        }))
    }

    pub fn delta_star(&self) -> f64 {
        self.0.delta
    }

    pub fn d_star(&self) -> &SymMatrix {
        &self.0.d
    }
}

/// Whether the sampler may exploit graph structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Decomposition {
    /// Connected components plus atom-by-atom sampling within components.
    Enabled,
    /// Always run the fixed-point sampler on the full matrix.
    Disabled,
    /// Split into connected components only.
    ComponentsOnly,
}

/// Fixed-point sampler configuration.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    /// Convergence tolerance on the max-abs entry change per sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub decomposition: Decomposition,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            tol: 1e-8,
            max_sweeps: 1000,
            decomposition: Decomposition::Enabled,
        }
    }
}

fn submatrix(a: &SymMatrix, idx: &[usize]) -> SymMatrix {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

/// In-place Cholesky (lower, row-major `k×k` in `a`) followed by the two
/// triangular solves of `A x = b`. Small-system workhorse of the fixed point.
fn spd_solve_small(a: &mut [f64], k: usize, b: &mut [f64]) -> Result<()> {
    for r in 0..k {
        for c in 0..=r {
            let mut s = a[r * k + c];
            for t in 0..c {
                s -= a[r * k + t] * a[c * k + t];
            }
            if r == c {
                if !(s > MIN_CHOL_DIAG * MIN_CHOL_DIAG) {
                    return Err(Error::NotPositiveDefinite(r + 1));
                }
                a[r * k + c] = s.sqrt();
            } else {
                a[r * k + c] = s / a[c * k + c];
            }
        }
    }
    for r in 0..k {
        let mut s = b[r];
        for t in 0..r {
            s -= a[r * k + t] * b[t];
        }
        b[r] = s / a[r * k + r];
    }
    for r in (0..k).rev() {
        let mut s = b[r];
        for t in r + 1..k {
            s -= a[t * k + r] * b[t];
        }
        b[r] = s / a[r * k + r];
    }
    Ok(())
}

/// Direct G-Wishart sampler: a complete-Wishart draw is completed to the
/// graph pattern by iterating block updates of the covariance-scale matrix
/// to convergence, then inverted and clamped to exact zeros on non-edges.
pub fn sample_direct<R: Rng + ?Sized>(
    g: &Graph,
    params: &GWishartParams,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SymMatrix> {
    let p = g.p();
    if params.d.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: params.d.nrows(),
        });
    }
    let draw = wishart_complete_draw(params.delta, &params.d, rng)?;
    if g.n_edges() == g.m_max() {
        return Ok(draw); // complete graph: nothing to complete
    }
    let sigma = pd_inverse(&draw)?;
    let mut w = sigma.clone();
    let mut prev = w.clone();

    let neighbors: Vec<Vec<usize>> = (0..p).map(|j| g.neighbors(j)).collect();
    let mut a_buf = vec![0.0; p * p];
    let mut b_buf = vec![0.0; p];

    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    loop {
        if sweeps >= cfg.max_sweeps {
            return Err(Error::NoConvergence { sweeps, residual });
        }
        prev.copy_from(&w);
        for j in 0..p {
            let nb = &neighbors[j];
            if nb.is_empty() {
                for i in 0..p {
                    if i != j {
                        w[(i, j)] = 0.0;
                        w[(j, i)] = 0.0;
                    }
                }
                continue;
            }
            let k = nb.len();
            for (r, &nr) in nb.iter().enumerate() {
                b_buf[r] = sigma[(nr, j)];
                for (c, &nc) in nb.iter().enumerate() {
                    a_buf[r * k + c] = w[(nr, nc)];
                }
            }
            spd_solve_small(&mut a_buf[..k * k], k, &mut b_buf[..k])?;
            for i in 0..p {
                if i == j {
                    continue;
                }
                let mut v = 0.0;
                for (t, &nt) in nb.iter().enumerate() {
                    v += w[(i, nt)] * b_buf[t];
                }
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        sweeps += 1;
        residual = (&w - &prev).abs().max();
        if residual < cfg.tol {
            let mut k_mat = pd_inverse(&w)?;
            // converged draws must have near-zero non-edge entries before
            // the exact clamp; otherwise keep sweeping
            let mut guard_ok = true;
            for (i, j) in Graph::all_pairs(p) {
                if !g.has_edge(i, j) && k_mat[(i, j)].abs() >= 100.0 * cfg.tol {
                    guard_ok = false;
                    break;
                }
            }
            if guard_ok {
                for (i, j) in Graph::all_pairs(p) {
                    if !g.has_edge(i, j) {
                        k_mat[(i, j)] = 0.0;
                        k_mat[(j, i)] = 0.0;
                    }
                }
                return Ok(k_mat);
            }
        }
    }
}

/// Samples `W_G(δ, D)` exploiting graph structure. Connected components are
/// sampled independently; with [`Decomposition::Enabled`] each component is
/// assembled atom by atom in perfect order, conditioning every atom on its
/// (complete) separator via the covariance-scale exchange identities. The
/// output law is identical to [`sample_direct`].
pub fn sample_decomposed<R: Rng + ?Sized>(
    g: &Graph,
    params: &GWishartParams,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SymMatrix> {
    let p = g.p();
    if params.d.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: params.d.nrows(),
        });
    }
    if cfg.decomposition == Decomposition::Disabled {
        return sample_direct(g, params, cfg, rng);
    }
    let mut k_out = DMatrix::zeros(p, p);
    match cfg.decomposition {
        Decomposition::ComponentsOnly => {
            for comp in connected_components(g) {
                let k_sub = sample_vertex_set(g, &comp, params, cfg, rng)?;
                scatter_add(&mut k_out, &comp, &k_sub);
            }
        }
        Decomposition::Enabled => {
            let dec = atom_decomposition(g)?;
            for comp in &dec.components {
                for (t, atom) in comp.atoms.iter().enumerate() {
                    let k_atom = sample_vertex_set(g, &atom.vertices, params, cfg, rng)?;
                    if t == 0 {
                        scatter_add(&mut k_out, &atom.vertices, &k_atom);
                        continue;
                    }
                    // Split the fresh atom draw into separator/residual
                    // blocks; the separator's own marginal cancels against
                    // the already-fixed separator, leaving the innovation
                    //   [[K_SR K_RR⁻¹ K_RS, K_SR], [K_RS, K_RR]]
                    let sep_local: Vec<usize> = atom
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| atom.separator.contains(v))
                        .map(|(l, _)| l)
                        .collect();
                    let res_local: Vec<usize> = (0..atom.vertices.len())
                        .filter(|l| !sep_local.contains(l))
                        .collect();
                    let ns = sep_local.len();
                    let nr = res_local.len();
                    let k_rr = DMatrix::from_fn(nr, nr, |r, c| {
                        k_atom[(res_local[r], res_local[c])]
                    });
                    let k_rs = DMatrix::from_fn(nr, ns, |r, c| {
                        k_atom[(res_local[r], sep_local[c])]
                    });
                    let chol_rr = cholesky_upper(&k_rr)?;
                    // M = K_RR⁻¹ K_RS column by column
                    let mut m = DMatrix::zeros(nr, ns);
                    for c in 0..ns {
                        let col = chol_rr.solve_vec(k_rs.column(c).as_slice());
                        for r in 0..nr {
                            m[(r, c)] = col[r];
                        }
                    }
                    let mut innov = k_rs.transpose() * &m; // |S|×|S|
                    linalg::symmetrize(&mut innov);

                    let sep_global: Vec<usize> =
                        sep_local.iter().map(|&l| atom.vertices[l]).collect();
                    let res_global: Vec<usize> =
                        res_local.iter().map(|&l| atom.vertices[l]).collect();
                    scatter_add(&mut k_out, &sep_global, &innov);
                    scatter_add(&mut k_out, &res_global, &k_rr);
                    for (r, &gr) in res_global.iter().enumerate() {
                        for (c, &gc) in sep_global.iter().enumerate() {
                            k_out[(gr, gc)] += k_rs[(r, c)];
                            k_out[(gc, gr)] += k_rs[(r, c)];
                        }
                    }
                }
            }
        }
        Decomposition::Disabled => unreachable!(),
    }
    Ok(k_out)
}

/// Draws the G-Wishart restricted to `vs`: Bartlett when the induced
/// subgraph is complete, the fixed-point sampler otherwise.
fn sample_vertex_set<R: Rng + ?Sized>(
    g: &Graph,
    vs: &[usize],
    params: &GWishartParams,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SymMatrix> {
    let d_sub = submatrix(&params.d, vs);
    let n = vs.len();
    let mut complete = true;
    'outer: for a in 0..n {
        for b in a + 1..n {
            if !g.has_edge(vs[a], vs[b]) {
                complete = false;
                break 'outer;
            }
        }
    }
    if complete {
        wishart_complete_draw(params.delta, &d_sub, rng)
    } else {
        let mut local = vec![usize::MAX; g.p()];
        for (l, &v) in vs.iter().enumerate() {
            local[v] = l;
        }
        let mut edges = Vec::new();
        for (a, &va) in vs.iter().enumerate() {
            for nb in g.neighbors(va) {
                let b = local[nb];
                if b != usize::MAX && b > a {
                    edges.push((a, b));
                }
            }
        }
        let g_sub = Graph::from_edges(n, edges)?;
        let sub_params = GWishartParams {
            delta: params.delta,
            d: d_sub,
        };
        sample_direct(&g_sub, &sub_params, cfg, rng)
    }
}

fn scatter_add(k: &mut SymMatrix, idx: &[usize], block: &SymMatrix) {
    for (r, &gr) in idx.iter().enumerate() {
        for (c, &gc) in idx.iter().enumerate() {
            k[(gr, gc)] += block[(r, c)];
        }
    }
}

/// One maximum-clique block Gibbs sweep targeting `W_G(δ, D)`: for each
/// clique the Schur complement towards the rest of the matrix is replaced by
/// a fresh complete-Wishart draw. Entries outside the clique blocks are not
/// touched, so the non-edge zero pattern is preserved bit-exactly.
pub fn block_gibbs_sweep<R: Rng + ?Sized>(
    k: &mut SymMatrix,
    g: &Graph,
    params: &GWishartParams,
    cliques: &[Vec<usize>],
    rng: &mut R,
) -> Result<()> {
    let p = g.p();
    for (i, j) in Graph::all_pairs(p) {
        if !g.has_edge(i, j) && k[(i, j)] != 0.0 {
            return Err(Error::PatternViolation(i, j));
        }
    }
    for clique in cliques {
        let rest: Vec<usize> = (0..p).filter(|v| !clique.contains(v)).collect();
        let d_cc = submatrix(&params.d, clique);
        let fresh = wishart_complete_draw(params.delta, &d_cc, rng)?;
        if rest.is_empty() {
            for (r, &gr) in clique.iter().enumerate() {
                for (c, &gc) in clique.iter().enumerate() {
                    k[(gr, gc)] = fresh[(r, c)];
                }
            }
            continue;
        }
        let k_rr = submatrix(k, &rest);
        let chol_rr = cholesky_upper(&k_rr)?;
        let nc = clique.len();
        let nr = rest.len();
        // X = K_RR⁻¹ K_RC, then Schur part K_CR X
        let mut x = DMatrix::zeros(nr, nc);
        let mut col = vec![0.0; nr];
        for c in 0..nc {
            for (r, &gr) in rest.iter().enumerate() {
                col[r] = k[(gr, clique[c])];
            }
            let solved = chol_rr.solve_vec(&col);
            for r in 0..nr {
                x[(r, c)] = solved[r];
            }
        }
        let k_cr = DMatrix::from_fn(nc, nr, |r, c| k[(clique[r], rest[c])]);
        let mut schur = k_cr * x;
        linalg::symmetrize(&mut schur);
        for (r, &gr) in clique.iter().enumerate() {
            for (c, &gc) in clique.iter().enumerate() {
                k[(gr, gc)] = fresh[(r, c)] + schur[(r, c)];
            }
        }
    }
    Ok(())
}

/// Which approximation to use for the intractable prior-constant ratio
/// `I_G(δ, D) / I_G̃(δ, D)` of a single-edge move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ApproxVariant {
    /// Gamma-function ratio driven by the number of common neighbors of the
    /// flipped edge's endpoints.
    Mohammadi,
    /// Treat the ratio as one.
    Unit,
}

/// Log of the approximate constant ratio for flipping edge `e`; antisymmetric
/// in the flip direction by construction.
pub fn approx_log_ratio(
    g: &Graph,
    e: (usize, usize),
    direction: FlipDirection,
    delta: f64,
    variant: ApproxVariant,
) -> Result<f64> {
    match variant {
        ApproxVariant::Unit => Ok(0.0),
        ApproxVariant::Mohammadi => {
            let d = g.common_neighbor_count(e.0, e.1)? as f64;
            let log_term = ln_gamma((delta + d) / 2.0)
                - (2.0 * std::f64::consts::PI.sqrt()).ln()
                - ln_gamma((delta + d + 1.0) / 2.0);
            Ok(direction.sign() * log_term)
        }
    }
}

/// Log normalizing constant of the complete-graph density
/// `|K|^{δ/2−1} e^{−tr(KD)/2}` over the PD cone.
fn log_i_complete(delta: f64, d_sub: &SymMatrix) -> Result<f64> {
    let k = d_sub.nrows() as f64;
    let nu = delta + k - 1.0;
    let log_det = cholesky_upper(d_sub)?.log_det();
    let mut log_gamma_k = k * (k - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 0..d_sub.nrows() {
        log_gamma_k += ln_gamma(nu / 2.0 - j as f64 / 2.0);
    }
    Ok(nu * k / 2.0 * 2f64.ln() - nu / 2.0 * log_det + log_gamma_k)
}

/// Exact `log I_G(δ, D)` for decomposable graphs via the clique/separator
/// factorization of the atom decomposition. Errors when some atom is
/// incomplete.
pub fn log_i_decomposable(g: &Graph, params: &GWishartParams) -> Result<f64> {
    let dec = atom_decomposition(g)?;
    let mut total = 0.0;
    for comp in &dec.components {
        for atom in &comp.atoms {
            if !atom.complete {
                return Err(Error::NotDecomposable(atom.vertices.clone()));
            }
            total += log_i_complete(params.delta, &submatrix(&params.d, &atom.vertices))?;
            if !atom.separator.is_empty() {
                total -= log_i_complete(params.delta, &submatrix(&params.d, &atom.separator))?;
            }
        }
    }
    Ok(total)
}
