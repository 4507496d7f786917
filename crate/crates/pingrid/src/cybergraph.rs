//! Cyber layer: undirected communication graphs over the DGs, small-world
//! generation, Laplacian/spectral computations and stochastic disruption.
//!
//! Node `k` of a [`CommGraph`] is DG `k` (the k-th entry of the network
//! model's DG list). Graphs are immutable; every randomized operation takes
//! an explicit RNG so results are reproducible.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

/// Undirected communication graph over `m` DG nodes.
///
/// Edges are stored as ordered pairs `(u, v)` with `u < v`; no self-loops,
/// no duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CommGraph {
    /// Build a graph from an edge list, validating node bounds and rejecting
    /// self-loops. Duplicate edges (in either orientation) collapse.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::Graph(format!("self-loop at node {u}")));
            }
            if u >= m || v >= m {
                return Err(Error::Graph(format!(
                    "edge ({u}, {v}) out of range for m = {m}"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(CommGraph { m, edges: set })
    }

    /// Graph with no edges.
    pub fn empty(m: usize) -> Self {
        CommGraph {
            m,
            edges: BTreeSet::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical `(u, v)`, `u < v`, sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == u || b == u)
            .count()
    }

    /// Per-node neighbor lists (each list sorted ascending).
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Adjacency matrix `A` with `A[u, v] = 1` iff `{u, v}` is an edge.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.m, self.m);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// Degree (valency) matrix `D`.
    pub fn degree_matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m, self.m);
        for &(u, v) in &self.edges {
            d[(u, u)] += 1.0;
            d[(v, v)] += 1.0;
        }
        d
    }

    /// Graph Laplacian `L = D - A`; symmetric with zero row sums.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.m, self.m);
        for &(u, v) in &self.edges {
            l[(u, u)] += 1.0;
            l[(v, v)] += 1.0;
            l[(u, v)] -= 1.0;
            l[(v, u)] -= 1.0;
        }
        l
    }

    /// Connected components as sorted node lists, sorted by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.neighbor_lists();
        let mut seen = vec![false; self.m];
        let mut out = Vec::new();
        for start in 0..self.m {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.m <= 1 || self.components().len() == 1
    }

    /// Canonical edge-set key, used for dataset deduplication and hashing.
    pub fn canonical_key(&self) -> Vec<(u32, u32)> {
        self.edges
            .iter()
            .map(|&(u, v)| (u as u32, v as u32))
            .collect()
    }

    /// FNV-1a hash of the canonical `m` + edge list, for decision reports.
    pub fn content_hash(&self) -> u64 {
        let mut text = format!("{}", self.m);
        for (u, v) in self.edges() {
            let _ = write!(text, ";{u}-{v}");
        }
        crate::seed::fnv1a64(text.as_bytes())
    }

    /// Parse the line-oriented graph format: a node-count header line
    /// followed by one `u v` pair per line. `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut m: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            if m.is_none() {
                m = Some(line.parse().map_err(|_| {
                    Error::parse(origin, lineno, format!("bad node count {line:?}"))
                })?);
                continue;
            }
            let mut it = line.split_whitespace();
            let (u, v) = (it.next(), it.next());
            match (u, v, it.next()) {
                (Some(u), Some(v), None) => {
                    let u = u.parse().map_err(|_| {
                        Error::parse(origin, lineno, format!("bad node index {u:?}"))
                    })?;
                    let v = v.parse().map_err(|_| {
                        Error::parse(origin, lineno, format!("bad node index {v:?}"))
                    })?;
                    edges.push((u, v));
                }
                _ => {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        "expected exactly two node indices",
                    ))
                }
            }
        }
        let m = m.ok_or_else(|| Error::parse(origin, 0, "missing node-count header"))?;
        CommGraph::new(m, edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, path)
    }

    /// Serialize in the same line-oriented format accepted by [`parse`].
    ///
    /// [`parse`]: CommGraph::parse
    pub fn to_file_string(&self) -> String {
        let mut s = format!("{}\n", self.m);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }
}

/// Boolean pin indicator over the `m` DGs (the diagonal of the pinning
/// matrix).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinningSet {
    pins: Vec<bool>,
}

impl PinningSet {
    pub fn none(m: usize) -> Self {
        PinningSet {
            pins: vec![false; m],
        }
    }

    pub fn all(m: usize) -> Self {
        PinningSet {
            pins: vec![true; m],
        }
    }

    pub fn from_flags(pins: Vec<bool>) -> Self {
        PinningSet { pins }
    }

    pub fn from_indices(m: usize, indices: &[usize]) -> Result<Self> {
        let mut pins = vec![false; m];
        for &i in indices {
            *pins.get_mut(i).ok_or_else(|| {
                Error::Graph(format!("pin index {i} out of range for m = {m}"))
            })? = true;
        }
        Ok(PinningSet { pins })
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    pub fn is_pinned(&self, k: usize) -> bool {
        self.pins[k]
    }

    pub fn flags(&self) -> &[bool] {
        &self.pins
    }

    /// Number of pinned DGs (the rank of the pinning matrix).
    pub fn cardinality(&self) -> usize {
        self.pins.iter().filter(|&&p| p).count()
    }

    /// Sorted indices of the pinned DGs.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.pins.len()).filter(|&k| self.pins[k]).collect()
    }

    pub fn with_pin(&self, k: usize) -> Self {
        let mut pins = self.pins.clone();
        pins[k] = true;
        PinningSet { pins }
    }
}

/// `L + c·diag(pins)`, the matrix whose smallest eigenvalue sets the
/// consensus convergence rate.
pub fn pinned_laplacian(g: &CommGraph, pins: &PinningSet, c_pin: f64) -> DMatrix<f64> {
    let mut l = g.laplacian();
    for k in 0..g.node_count() {
        if pins.is_pinned(k) {
            l[(k, k)] += c_pin;
        }
    }
    l
}

/// Watts-Strogatz small-world graph: ring lattice with `mean_degree`
/// neighbors, each edge rewired with probability `rewire_prob`; resampled
/// until connected. The edge count is always `m * mean_degree / 2`.
pub fn small_world(
    m: usize,
    mean_degree: usize,
    rewire_prob: f64,
    rng: &mut impl Rng,
) -> Result<CommGraph> {
    if mean_degree == 0 || mean_degree % 2 != 0 || mean_degree >= m {
        return Err(Error::Graph(format!(
            "mean degree {mean_degree} must be even, positive and < m = {m}"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(Error::Graph(format!(
            "rewire probability {rewire_prob} outside [0, 1]"
        )));
    }
    const MAX_ATTEMPTS: usize = 1000;
    for _ in 0..MAX_ATTEMPTS {
        let mut edges = BTreeSet::new();
        for u in 0..m {
            for j in 1..=mean_degree / 2 {
                let v = (u + j) % m;
                edges.insert((u.min(v), u.max(v)));
            }
        }
        // Rewire lattice edges in canonical scan order, keeping one endpoint.
        let lattice: Vec<(usize, usize)> = edges.iter().copied().collect();
        for (u, v) in lattice {
            if rng.gen::<f64>() >= rewire_prob {
                continue;
            }
            let candidates: Vec<usize> = (0..m)
                .filter(|&w| w != u && w != v && !edges.contains(&(u.min(w), u.max(w))))
                .collect();
            if let Some(&w) = candidates.as_slice().choose(rng) {
                edges.remove(&(u.min(v), u.max(v)));
                edges.insert((u.min(w), u.max(w)));
            }
        }
        let g = CommGraph { m, edges };
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Graph(format!(
        "failed to draw a connected small-world graph (m = {m}, degree = {mean_degree}) \
         in {MAX_ATTEMPTS} attempts"
    )))
}

/// Edge-removal policy for [`disrupt`].
#[derive(Debug, Clone)]
pub enum Removal {
    /// Remove exactly the listed edges; error if any is absent.
    Edges(Vec<(usize, usize)>),
    /// Remove `count` uniformly random distinct edges.
    RandomCount(usize),
    /// Remove uniformly random edges until the graph disconnects, then stop.
    UntilDisconnected,
}

/// Result of a [`disrupt`] run.
#[derive(Debug, Clone)]
pub struct DisruptOutcome {
    /// The disrupted graph. For `UntilDisconnected` this is the last graph
    /// that was still connected.
    pub graph: CommGraph,
    /// Edges actually removed from `graph`, in removal order.
    pub removed: Vec<(usize, usize)>,
    /// For `UntilDisconnected`: the edge whose removal would disconnect the
    /// graph (not removed from `graph`).
    pub disconnecting: Option<(usize, usize)>,
}

/// Remove communication links from `g`; the input graph is untouched.
pub fn disrupt(g: &CommGraph, removal: Removal, rng: &mut impl Rng) -> Result<DisruptOutcome> {
    let mut edges = g.edges.clone();
    let mut removed = Vec::new();
    match removal {
        Removal::Edges(list) => {
            for (u, v) in list {
                let key = (u.min(v), u.max(v));
                if !edges.remove(&key) {
                    return Err(Error::Graph(format!(
                        "cannot remove edge ({u}, {v}): not present"
                    )));
                }
                removed.push(key);
            }
            Ok(DisruptOutcome {
                graph: CommGraph { m: g.m, edges },
                removed,
                disconnecting: None,
            })
        }
        Removal::RandomCount(count) => {
            if count > edges.len() {
                return Err(Error::Graph(format!(
                    "cannot remove {count} edges from a graph with {}",
                    edges.len()
                )));
            }
            for _ in 0..count {
                let pool: Vec<(usize, usize)> = edges.iter().copied().collect();
                let &e = pool.as_slice().choose(rng).expect("count checked above");
                edges.remove(&e);
                removed.push(e);
            }
            Ok(DisruptOutcome {
                graph: CommGraph { m: g.m, edges },
                removed,
                disconnecting: None,
            })
        }
        Removal::UntilDisconnected => {
            loop {
                let pool: Vec<(usize, usize)> = edges.iter().copied().collect();
                let Some(&e) = pool.as_slice().choose(rng) else {
                    // No edges left; an edgeless graph with m > 1 is already
                    // disconnected, so report the last removal as the cut.
                    let disconnecting = removed.pop();
                    let mut graph = CommGraph {
                        m: g.m,
                        edges: BTreeSet::new(),
                    };
                    if let Some(e) = disconnecting {
                        graph.edges.insert(e);
                    }
                    return Ok(DisruptOutcome {
                        graph,
                        removed,
                        disconnecting,
                    });
                };
                edges.remove(&e);
                let candidate = CommGraph {
                    m: g.m,
                    edges: edges.clone(),
                };
                if candidate.is_connected() {
                    removed.push(e);
                } else {
                    edges.insert(e);
                    return Ok(DisruptOutcome {
                        graph: CommGraph { m: g.m, edges },
                        removed,
                        disconnecting: Some(e),
                    });
                }
            }
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Inputs with asymmetry above 1e-10 are rejected; below that the matrix is
/// symmetrized as `(M + M')/2` before solving.
pub fn lambda_min(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            what: "lambda_min input",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.is_empty() {
        return Err(Error::Dimension {
            what: "lambda_min input",
            expected: 1,
            got: 0,
        });
    }
    let mut max_asym = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asym > 1e-10 {
        return Err(Error::Asymmetric(max_asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Guaranteed consensus convergence rate `G_c * lambda_min(L + c_pin * Psi)`.
pub fn convergence_rate(
    g: &CommGraph,
    pins: &PinningSet,
    g_c: f64,
    c_pin: f64,
) -> Result<f64> {
    if g_c <= 0.0 || c_pin <= 0.0 {
        return Err(Error::InvalidModel(format!(
            "gains must be positive (G_c = {g_c}, c_pin = {c_pin})"
        )));
    }
    if pins.len() != g.node_count() {
        return Err(Error::Dimension {
            what: "pinning set",
            expected: g.node_count(),
            got: pins.len(),
        });
    }
    // L + c*Psi is positive semidefinite, so a negative lambda_min is
    // eigensolver noise; clamp it so rate targets of exactly 0 stay feasible.
    Ok(g_c * lambda_min(&pinned_laplacian(g, pins, c_pin))?.max(0.0))
}
