//! Undirected simple graphs on `p` labeled nodes, the MCMC state of interest,
//! together with graph priors and the edge-specific node reordering used by
//! the single-edge kernels.
//!
//! Node indices are 0-based in memory. All serialized formats (edge lists,
//! the hex trace encoding) are 1-based as documented on the methods below.

use crate::error::{Error, Result};

/// Undirected simple graph stored as per-node adjacency bit rows plus an
/// upper-triangular edge count.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    p: usize,
    words: usize,
    rows: Vec<u64>,
    n_edges: usize,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Graph(p={}, edges={:?})", self.p, self.edges())
    }
}

impl Graph {
    /// The empty graph on `p` nodes.
    pub fn empty(p: usize) -> Self {
        assert!(p >= 1, "graph needs at least one node");
        let words = p.div_ceil(64);
        Graph {
            p,
            words,
            rows: vec![0; p * words],
            n_edges: 0,
        }
    }

    pub fn complete(p: usize) -> Self {
        let mut g = Graph::empty(p);
        for i in 0..p {
            for j in i + 1..p {
                g.set_edge(i, j, true);
            }
        }
        g
    }

    /// Cycle 1–2–…–p–1 (requires `p ≥ 3`).
    pub fn cycle(p: usize) -> Self {
        assert!(p >= 3);
        let mut g = Graph::empty(p);
        for i in 0..p - 1 {
            g.set_edge(i, i + 1, true);
        }
        g.set_edge(0, p - 1, true);
        g
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(p: usize, edges: I) -> Result<Self> {
        let mut g = Graph::empty(p);
        for (i, j) in edges {
            let (i, j) = g.check_pair(i, j)?;
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Maximum number of edges `p(p−1)/2`.
    pub fn m_max(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<(usize, usize)> {
        if i == j {
            return Err(Error::SelfLoop(i, j));
        }
        if i >= self.p || j >= self.p {
            return Err(Error::NodeOutOfRange(i.max(j), self.p));
        }
        Ok((i.min(j), i.max(j)))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        debug_assert!(i != j && i < self.p && j < self.p);
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        let had = self.has_edge(i, j);
        if had == on {
            return;
        }
        self.rows[i * self.words + j / 64] ^= 1 << (j % 64);
        self.rows[j * self.words + i / 64] ^= 1 << (i % 64);
        if on {
            self.n_edges += 1;
        } else {
            self.n_edges -= 1;
        }
    }

    /// Returns the graph differing from `self` exactly at pair `(i, j)`.
    pub fn flip_edge(&self, i: usize, j: usize) -> Result<Graph> {
        let (i, j) = self.check_pair(i, j)?;
        let mut g = self.clone();
        g.set_edge(i, j, !g.has_edge(i, j));
        Ok(g)
    }

    pub(crate) fn flip_in_place(&mut self, i: usize, j: usize) {
        let on = !self.has_edge(i, j);
        self.set_edge(i, j, on);
    }

    /// Number of common neighbors of `i` and `j`: the count of length-two
    /// paths linking the endpoints. The value is the same on `G` and on
    /// `flip_edge(G, (i,j))` since the pair itself contributes no such path.
    pub fn common_neighbor_count(&self, i: usize, j: usize) -> Result<usize> {
        let (i, j) = self.check_pair(i, j)?;
        let ri = &self.rows[i * self.words..(i + 1) * self.words];
        let rj = &self.rows[j * self.words..(j + 1) * self.words];
        Ok(ri
            .iter()
            .zip(rj)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.rows[i * self.words..(i + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.degree(i));
        for (w, &word) in self.rows[i * self.words..(i + 1) * self.words].iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(w * 64 + b);
                bits &= bits - 1;
            }
        }
        out
    }

    /// All node pairs `(i, j)` with `i < j` in row-major order, the canonical
    /// candidate enumeration.
    pub fn all_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
    }

    /// Edges present in the graph, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        Self::all_pairs(self.p)
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    /// Canonical bit position of pair `(i, j)`: bit 0 = (0,1), bit 1 = (0,2),
    /// …, row-major over the upper triangle.
    pub fn edge_index(p: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < p);
        i * (2 * p - i - 1) / 2 + (j - i - 1)
    }

    /// Inverse of [`Graph::edge_index`].
    pub fn pair_from_index(p: usize, mut idx: usize) -> (usize, usize) {
        debug_assert!(idx < p * (p - 1) / 2);
        let mut i = 0;
        loop {
            let row = p - 1 - i;
            if idx < row {
                return (i, i + 1 + idx);
            }
            idx -= row;
            i += 1;
        }
    }

    /// Compact trace form: the upper-triangular bit vector encoded as a
    /// hexadecimal integer (bit k of the integer = pair with `edge_index` k),
    /// zero-padded to `⌈m_max/4⌉` digits, most significant digit first.
    pub fn to_hex(&self) -> String {
        let m = self.m_max();
        let digits = m.div_ceil(4);
        let mut nibbles = vec![0u8; digits];
        for (i, j) in self.edges() {
            let bit = Self::edge_index(self.p, i, j);
            nibbles[bit / 4] |= 1 << (bit % 4);
        }
        // nibble 0 is least significant -> printed last
        nibbles
            .iter()
            .rev()
            .map(|n| char::from_digit(*n as u32, 16).unwrap())
            .collect()
    }

    pub fn from_hex(p: usize, hex: &str) -> Result<Graph> {
        let m = p * (p - 1) / 2;
        let digits = m.div_ceil(4);
        if hex.len() != digits {
            return Err(Error::Config(format!(
                "hex graph encoding for p={p} needs {digits} digits, got {}",
                hex.len()
            )));
        }
        let mut g = Graph::empty(p);
        let nibbles: Vec<u8> = hex
            .chars()
            .rev()
            .map(|c| {
                c.to_digit(16)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Config(format!("invalid hex digit '{c}'")))
            })
            .collect::<Result<_>>()?;
        for (i, j) in Self::all_pairs(p) {
            let bit = Self::edge_index(p, i, j);
            if nibbles[bit / 4] >> (bit % 4) & 1 == 1 {
                g.set_edge(i, j, true);
            }
        }
        Ok(g)
    }

    /// Edge-list text, one `i j` pair per line, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in self.edges() {
            s.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        s
    }

    /// Parses 1-based edge-list text. Blank lines and `#` comments are
    /// skipped; `p` must be supplied since the format does not carry it.
    pub fn from_edge_list(p: usize, text: &str) -> Result<Graph> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse {
                        path: "<edge list>".into(),
                        line: lineno + 1,
                        msg: format!("expected two 1-based node indices, got '{line}'"),
                    })
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if i == 0 || j == 0 {
                return Err(Error::Parse {
                    path: "<edge list>".into(),
                    line: lineno + 1,
                    msg: "node indices are 1-based".into(),
                });
            }
            edges.push((i - 1, j - 1));
        }
        Graph::from_edges(p, edges)
    }
}

/// Direction of a single-edge move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipDirection {
    Add,
    Remove,
}

impl FlipDirection {
    /// `|Ẽ| − |E|` as a sign.
    pub fn sign(self) -> f64 {
        match self {
            FlipDirection::Add => 1.0,
            FlipDirection::Remove => -1.0,
        }
    }
}

/// The edge-specific node reordering: `σ` maps the flipped pair to the last
/// two positions while all other nodes keep their relative order.
#[derive(Debug, Clone)]
pub struct EdgeContext {
    pub edge: (usize, usize),
    pub direction: FlipDirection,
    /// `perm[v]` is the position of node `v` after reordering.
    pub perm: Vec<usize>,
}

/// Builds the stable-shift reordering for pair `(i, j)`: `σ(i) = p−2`,
/// `σ(j) = p−1` (0-based), remaining nodes shifted down preserving order.
/// The direction records whether flipping `(i, j)` adds or removes the edge.
pub fn reorder_for_edge(g: &Graph, i: usize, j: usize) -> Result<EdgeContext> {
    let p = g.p();
    if i == j {
        return Err(Error::SelfLoop(i, j));
    }
    if i >= p || j >= p {
        return Err(Error::NodeOutOfRange(i.max(j), p));
    }
    let (i, j) = (i.min(j), i.max(j));
    let mut perm = vec![0; p];
    let mut next = 0;
    for v in 0..p {
        if v != i && v != j {
            perm[v] = next;
            next += 1;
        }
    }
    perm[i] = p - 2;
    perm[j] = p - 1;
    let direction = if g.has_edge(i, j) {
        FlipDirection::Remove
    } else {
        FlipDirection::Add
    };
    Ok(EdgeContext {
        edge: (i, j),
        direction,
        perm,
    })
}

/// Prior over graphs: uniform, or independent edges with inclusion
/// probability `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum GraphPrior {
    Uniform,
    Bernoulli(f64),
}

impl GraphPrior {
    pub fn validate(&self) -> Result<()> {
        if let GraphPrior::Bernoulli(rho) = self {
            if !(*rho > 0.0 && *rho < 1.0) {
                return Err(Error::Config(format!(
                    "bernoulli edge probability must lie in (0,1), got {rho}"
                )));
            }
        }
        Ok(())
    }

    /// Unnormalized log-mass for the uniform prior; exact log-mass for the
    /// bernoulli prior: `|E| ln ρ + (m_max − |E|) ln(1−ρ)`.
    pub fn log_prior(&self, g: &Graph) -> f64 {
        match self {
            GraphPrior::Uniform => 0.0,
            GraphPrior::Bernoulli(rho) => {
                let e = g.n_edges() as f64;
                let m = g.m_max() as f64;
                e * rho.ln() + (m - e) * (1.0 - rho).ln()
            }
        }
    }

    /// `log p(G̃) − log p(G)` for a single-edge flip, computed from the edge
    /// counts so it is exact for both priors.
    pub fn log_prior_ratio(&self, g: &Graph, g_tilde: &Graph) -> f64 {
        match self {
            GraphPrior::Uniform => 0.0,
            GraphPrior::Bernoulli(rho) => {
                let diff = g_tilde.n_edges() as f64 - g.n_edges() as f64;
                diff * (rho.ln() - (1.0 - rho).ln())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flip_adds_and_removes() {
        let g = Graph::empty(3);
        let g1 = g.flip_edge(0, 1).unwrap();
        assert_eq!(g1.edges(), vec![(0, 1)]);
        assert_eq!(g1.n_edges(), 1);

        let tri = Graph::complete(3);
        let path = tri.flip_edge(0, 2).unwrap();
        assert_eq!(path.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn flip_twice_is_identity() {
        let g = Graph::cycle(5);
        for (i, j) in Graph::all_pairs(5) {
            let back = g.flip_edge(i, j).unwrap().flip_edge(i, j).unwrap();
            assert_eq!(g, back);
        }
    }

    #[test]
    fn flip_rejects_bad_pairs() {
        let g = Graph::empty(3);
        assert!(g.flip_edge(0, 3).is_err());
        assert!(g.flip_edge(1, 1).is_err());
    }

    #[test]
    fn common_neighbors_examples() {
        let tri = Graph::complete(3);
        assert_eq!(tri.common_neighbor_count(0, 1).unwrap(), 1);

        // path 1–3, 3–2 with (1,2) absent
        let g = Graph::from_edges(3, [(0, 2), (2, 1)]).unwrap();
        assert_eq!(g.common_neighbor_count(0, 1).unwrap(), 1);

        let empty = Graph::empty(4);
        assert_eq!(empty.common_neighbor_count(1, 3).unwrap(), 0);
    }

    #[test]
    fn common_neighbors_flip_invariant() {
        let g = Graph::cycle(6).flip_edge(0, 3).unwrap();
        for (i, j) in Graph::all_pairs(6) {
            let flipped = g.flip_edge(i, j).unwrap();
            assert_eq!(
                g.common_neighbor_count(i, j).unwrap(),
                flipped.common_neighbor_count(i, j).unwrap()
            );
        }
    }

    #[test]
    fn reorder_last_pair_is_identity() {
        let g = Graph::empty(4);
        let ctx = reorder_for_edge(&g, 2, 3).unwrap();
        assert_eq!(ctx.perm, vec![0, 1, 2, 3]);
        assert_eq!(ctx.direction, FlipDirection::Add);
    }

    #[test]
    fn reorder_first_pair_shifts_stably() {
        // 1-based (1,2) on p=4 maps nodes (1,2,3,4) to positions (3,4,1,2).
        let g = Graph::complete(4);
        let ctx = reorder_for_edge(&g, 0, 1).unwrap();
        assert_eq!(ctx.perm, vec![2, 3, 0, 1]);
        assert_eq!(ctx.direction, FlipDirection::Remove);
    }

    #[test]
    fn prior_examples() {
        let g = Graph::empty(3);
        let g1 = g.flip_edge(0, 1).unwrap();
        assert_eq!(GraphPrior::Uniform.log_prior_ratio(&g, &g1), 0.0);
        assert_eq!(GraphPrior::Bernoulli(0.5).log_prior_ratio(&g, &g1), 0.0);
        let rho = 0.2_f64;
        let r = GraphPrior::Bernoulli(rho).log_prior_ratio(&g, &g1);
        assert!((r - (rho / (1.0 - rho)).ln()).abs() < 1e-15);
        let r_rm = GraphPrior::Bernoulli(rho).log_prior_ratio(&g1, &g);
        assert!((r + r_rm).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_prior_sums_to_one_small_p() {
        // brute-force over all 2^m_max graphs for p ≤ 4
        for p in 2..=4 {
            let m = p * (p - 1) / 2;
            let pairs: Vec<_> = Graph::all_pairs(p).collect();
            let prior = GraphPrior::Bernoulli(0.3);
            let mut total = 0.0;
            for mask in 0u32..1 << m {
                let edges = pairs
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &e)| e);
                let g = Graph::from_edges(p, edges).unwrap();
                total += prior.log_prior(&g).exp();
            }
            assert!((total - 1.0).abs() < 1e-12, "p={p}: total {total}");
        }
    }

    #[test]
    fn hex_examples() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert_eq!(g.to_hex(), "1");
        let g = Graph::complete(3);
        assert_eq!(g.to_hex(), "7");
        // p=10 has m_max=45 -> 12 hex digits
        let g = Graph::cycle(10);
        assert_eq!(g.to_hex().len(), 12);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::cycle(5).flip_edge(1, 3).unwrap();
        let text = g.to_edge_list();
        assert!(text.contains("2 4"));
        let back = Graph::from_edge_list(5, &text).unwrap();
        assert_eq!(g, back);
    }

    proptest! {
        #[test]
        fn hex_round_trip(p in 2usize..12, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::empty(p);
            for (i, j) in Graph::all_pairs(p) {
                if rng.random::<bool>() {
                    g = g.flip_edge(i, j).unwrap();
                }
            }
            let back = Graph::from_hex(p, &g.to_hex()).unwrap();
            prop_assert_eq!(g, back);
        }

        #[test]
        fn edge_index_is_dense(p in 2usize..12) {
            let idx: Vec<_> = Graph::all_pairs(p)
                .map(|(i, j)| Graph::edge_index(p, i, j))
                .collect();
            let m = p * (p - 1) / 2;
            prop_assert_eq!(idx.clone(), (0..m).collect::<Vec<_>>());
            for (c, (i, j)) in Graph::all_pairs(p).enumerate() {
                prop_assert_eq!(Graph::pair_from_index(p, c), (i, j));
            }
        }
    }
}
