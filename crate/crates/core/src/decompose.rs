//! Graph decomposition: connected components, maximal clique enumeration
//! (Bron–Kerbosch with pivoting) and the clique minimal separator
//! decomposition into atoms, computed from an MCS-M minimal triangulation.

use crate::error::Result;
use crate::graph::Graph;

/// Partition of the vertices into connected components, each sorted, ordered
/// by smallest member.
pub fn connected_components(g: &Graph) -> Vec<Vec<usize>> {
    let p = g.p();
    let mut seen = vec![false; p];
    let mut out = Vec::new();
    for start in 0..p {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// All maximal cliques, each sorted, the list sorted lexicographically.
/// Isolated vertices are reported as singletons.
pub fn maximal_cliques(g: &Graph) -> Vec<Vec<usize>> {
    let p = g.p();
    let mut cliques = Vec::new();
    let mut r = Vec::new();
    let mut pset: Vec<usize> = (0..p).collect();
    let mut xset = Vec::new();
    bron_kerbosch(g, &mut r, &mut pset, &mut xset, &mut cliques);
    for c in &mut cliques {
        c.sort_unstable();
    }
    cliques.sort();
    cliques
}

fn bron_kerbosch(
    g: &Graph,
    r: &mut Vec<usize>,
    p: &mut Vec<usize>,
    x: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    // pivot: vertex of max degree within P ∪ X
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&v| v != u && g.has_edge(u, v)).count())
        .unwrap();
    let todo: Vec<usize> = p
        .iter()
        .copied()
        .filter(|&v| v == pivot || !g.has_edge(pivot, v))
        .collect();
    for v in todo {
        r.push(v);
        let mut np: Vec<usize> = p
            .iter()
            .copied()
            .filter(|&u| u != v && g.has_edge(u, v))
            .collect();
        let mut nx: Vec<usize> = x.iter().copied().filter(|&u| g.has_edge(u, v)).collect();
        bron_kerbosch(g, r, &mut np, &mut nx, out);
        r.pop();
        p.retain(|&u| u != v);
        x.push(v);
    }
}

/// One atom of the clique minimal separator decomposition. The separator is
/// empty for the first atom of each component; every other separator is
/// complete in the original graph and contained in the union of earlier atoms.
#[derive(Debug, Clone)]
pub struct Atom {
    pub vertices: Vec<usize>,
    pub separator: Vec<usize>,
    pub complete: bool,
}

/// Atoms of one connected component, in an order satisfying the running
/// intersection property.
#[derive(Debug, Clone)]
pub struct ComponentAtoms {
    pub vertices: Vec<usize>,
    pub atoms: Vec<Atom>,
}

/// Clique minimal separator decomposition of the whole graph.
#[derive(Debug, Clone)]
pub struct AtomDecomposition {
    pub components: Vec<ComponentAtoms>,
}

impl AtomDecomposition {
    /// True when every atom is complete, i.e. the graph is decomposable
    /// (chordal).
    pub fn is_decomposable(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.atoms.iter().all(|a| a.complete))
    }

    /// Size of the largest incomplete ("prime") atom, or 0 when the graph is
    /// decomposable.
    pub fn largest_prime_size(&self) -> usize {
        self.components
            .iter()
            .flat_map(|c| c.atoms.iter())
            .filter(|a| !a.complete)
            .map(|a| a.vertices.len())
            .max()
            .unwrap_or(0)
    }

    /// Size of the largest atom, complete or not.
    pub fn largest_atom_size(&self) -> usize {
        self.components
            .iter()
            .flat_map(|c| c.atoms.iter())
            .map(|a| a.vertices.len())
            .max()
            .unwrap_or(0)
    }
}

/// Computes a perfectly ordered clique minimal separator decomposition:
/// connected components first, then per component the atoms obtained by
/// splitting at clique minimal separators of an MCS-M minimal triangulation.
pub fn atom_decomposition(g: &Graph) -> Result<AtomDecomposition> {
    let comps = connected_components(g);
    let mut components = Vec::with_capacity(comps.len());
    for comp in comps {
        let atoms = component_atoms(g, &comp);
        components.push(ComponentAtoms {
            vertices: comp,
            atoms,
        });
    }
    Ok(AtomDecomposition { components })
}

fn is_clique(g: &Graph, vs: &[usize]) -> bool {
    for (a, &i) in vs.iter().enumerate() {
        for &j in &vs[a + 1..] {
            if !g.has_edge(i, j) {
                return false;
            }
        }
    }
    true
}

/// MCS-M on the subgraph induced by `comp` (local indices). Returns the fill
/// edges of a minimal triangulation and the selection numbering (the vertex
/// selected first gets the highest number).
fn mcs_m(adj: &[Vec<bool>]) -> (Vec<Vec<bool>>, Vec<usize>) {
    let n = adj.len();
    let mut fill = vec![vec![false; n]; n];
    let mut weight = vec![0usize; n];
    let mut number = vec![usize::MAX; n];
    for num in (0..n).rev() {
        // max weight, ties broken by smallest index for reproducibility
        let x = (0..n)
            .filter(|&v| number[v] == usize::MAX)
            .max_by_key(|&v| (weight[v], usize::MAX - v))
            .expect("unnumbered vertex");
        number[x] = num;

        // minimax intermediate weight over paths through unnumbered vertices
        let mut best = vec![usize::MAX; n];
        let mut settled = vec![false; n];
        for y in 0..n {
            if number[y] == usize::MAX && adj[x][y] {
                best[y] = 0; // direct neighbor: no intermediate
            }
        }
        loop {
            let mut pick = usize::MAX;
            for v in 0..n {
                if !settled[v]
                    && number[v] == usize::MAX
                    && best[v] != usize::MAX
                    && (pick == usize::MAX || best[v] < best[pick])
                {
                    pick = v;
                }
            }
            if pick == usize::MAX {
                break;
            }
            settled[pick] = true;
            // extend paths through `pick`: it becomes an intermediate of
            // weight `weight[pick] + 1` (shift by one so 0 means "none")
            let through = best[pick].max(weight[pick] + 1);
            for z in 0..n {
                if number[z] == usize::MAX && z != x && adj[pick][z] && through < best[z] {
                    best[z] = through;
                }
            }
        }
        for y in 0..n {
            if number[y] == usize::MAX && best[y] != usize::MAX && best[y] < weight[y] + 1 {
                weight[y] += 1;
                if !adj[x][y] {
                    fill[x][y] = true;
                    fill[y][x] = true;
                }
            }
        }
    }
    (fill, number)
}

/// Atoms of one connected component via the triangulation: process vertices
/// in elimination order, split at higher-numbered triangulation neighborhoods
/// that are clique minimal separators of the original graph.
fn component_atoms(g: &Graph, comp: &[usize]) -> Vec<Atom> {
    let n = comp.len();
    if n == 1 {
        return vec![Atom {
            vertices: comp.to_vec(),
            separator: Vec::new(),
            complete: true,
        }];
    }
    let mut local = vec![usize::MAX; g.p()];
    for (l, &v) in comp.iter().enumerate() {
        local[v] = l;
    }
    let mut adj = vec![vec![false; n]; n];
    for (a, &va) in comp.iter().enumerate() {
        for vb in g.neighbors(va) {
            if local[vb] != usize::MAX {
                adj[a][local[vb]] = true;
            }
        }
    }

    let (fill, number) = mcs_m(&adj);
    // elimination order: increasing number
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by_key(|&v| number[v]);

    let mut alive = vec![true; n];
    let mut atoms_local: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for &x in &order {
        if !alive[x] {
            continue;
        }
        let sep: Vec<usize> = (0..n)
            .filter(|&y| (adj[x][y] || fill[x][y]) && number[y] > number[x])
            .collect();
        if sep.is_empty() || !sep.iter().all(|&s| alive[s]) {
            continue;
        }
        let sep_global: Vec<usize> = sep.iter().map(|&s| comp[s]).collect();
        if !is_clique(g, &sep_global) {
            continue;
        }
        // components of G[alive \ sep]
        let in_sep = |v: usize| sep.contains(&v);
        let mut comp_id = vec![usize::MAX; n];
        let mut n_comps = 0;
        for start in 0..n {
            if !alive[start] || in_sep(start) || comp_id[start] != usize::MAX {
                continue;
            }
            comp_id[start] = n_comps;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for w in 0..n {
                    if adj[v][w] && alive[w] && !in_sep(w) && comp_id[w] == usize::MAX {
                        comp_id[w] = n_comps;
                        stack.push(w);
                    }
                }
            }
            n_comps += 1;
        }
        if n_comps < 2 {
            continue; // not a separator of the remaining subgraph
        }
        // minimality: a component is "full" when every separator vertex has a
        // neighbor in it; need x's component full plus one more full component
        let full: Vec<bool> = (0..n_comps)
            .map(|c| {
                sep.iter().all(|&s| {
                    (0..n).any(|v| comp_id[v] == c && adj[s][v])
                })
            })
            .collect();
        let cx = comp_id[x];
        if !full[cx] || !(0..n_comps).any(|c| c != cx && full[c]) {
            continue;
        }
        let c: Vec<usize> = (0..n).filter(|&v| comp_id[v] == cx).collect();
        let mut atom: Vec<usize> = sep.iter().chain(c.iter()).copied().collect();
        atom.sort_unstable();
        atoms_local.push((atom, sep));
        for v in c {
            alive[v] = false;
        }
    }
    let last: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    atoms_local.push((last, Vec::new()));

    // reverse so the separator-free atom comes first and every separator is
    // contained in the union of earlier atoms
    atoms_local.reverse();
    atoms_local
        .into_iter()
        .map(|(vs, sep)| {
            let vertices: Vec<usize> = vs.iter().map(|&v| comp[v]).collect();
            let mut separator: Vec<usize> = sep.iter().map(|&v| comp[v]).collect();
            separator.sort_unstable();
            let complete = is_clique(g, &vertices);
            Atom {
                vertices,
                separator,
                complete,
            }
        })
        .collect()
}
