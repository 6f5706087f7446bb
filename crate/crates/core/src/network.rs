//! Communication graphs, Laplacian spectra and consensus weights.
//!
//! Everything here is immutable once built and can be shared freely
//! between worker threads.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues closer to zero than this are treated as exactly zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-10;

/// Resample budget for random geometric graphs.
pub const RGG_MAX_ATTEMPTS: usize = 10_000;

/// Simple undirected graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Duplicates collapse; self-loops
    /// and out-of-range endpoints are rejected.
    pub fn new(n_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidTopology("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop at agent {i}")));
            }
            if i >= n_agents || j >= n_agents {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i},{j}) out of range for {n_agents} agents"
                )));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n_agents];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self { n_agents, edges, neighbors })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_agents;
        let mut l = DMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// Edge-list text: a `# n=<N>` header followed by one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# n={}\n", self.n_agents);
        for (i, j) in &self.edges {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }

    /// Parses the edge-list format. Without a `# n=` header the agent count
    /// is one more than the largest index seen.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut n_header = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("n=") {
                    let n = v.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidInput(format!("line {}: bad agent count", lineno + 1))
                    })?;
                    n_header = Some(n);
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|x| x.parse().ok()).ok_or_else(|| {
                    Error::InvalidInput(format!("line {}: expected `i j`", lineno + 1))
                })
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::InvalidInput(format!("line {}: trailing tokens", lineno + 1)));
            }
            edges.push((i, j));
        }
        let n = match n_header {
            Some(n) => n,
            None => edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0),
        };
        Self::new(n, edges)
    }
}

/// Cycle on `n >= 3` agents.
pub fn build_ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidTopology(format!("ring needs n >= 3, got {n}")));
    }
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
}

pub fn build_complete(n: usize) -> Result<Graph> {
    Graph::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
}

pub fn build_path(n: usize) -> Result<Graph> {
    Graph::new(n, (1..n).map(|i| (i - 1, i)))
}

/// Random geometric graph on the unit square, resampled until connected.
pub fn build_random_geometric(n: usize, radius: f64, seed: u64) -> Result<Graph> {
    build_random_geometric_with_budget(n, radius, seed, RGG_MAX_ATTEMPTS)
}

pub fn build_random_geometric_with_budget(
    n: usize,
    radius: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidTopology(format!("random geometric graph needs n >= 2, got {n}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                if (dx * dx + dy * dy).sqrt() <= radius {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(n, edges)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::Resource(format!(
        "no connected graph after {max_attempts} resamples (n={n}, radius={radius})"
    )))
}

/// Breadth-first connectivity test.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.n_agents();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in g.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Laplacian with its sorted eigenvalues.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub laplacian: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 1 || self.lambda2() > ZERO_EIGEN_TOL
    }
}

pub fn spectrum(g: &Graph) -> Spectrum {
    let laplacian = g.laplacian();
    let mut eigenvalues = linalg::sym_eigenvalues(&laplacian);
    eigenvalues[0] = 0.0;
    for v in eigenvalues.iter_mut() {
        if v.abs() < ZERO_EIGEN_TOL {
            *v = 0.0;
        }
    }
    Spectrum { laplacian, eigenvalues }
}

/// `W = I - delta L` and its spectral gap `r = ||W - J||`.
#[derive(Debug, Clone)]
pub struct ConsensusWeights {
    pub w: DMatrix<f64>,
    pub delta: f64,
    pub r: f64,
}

impl ConsensusWeights {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// `W^k` by repeated squaring.
    pub fn power(&self, k: usize) -> DMatrix<f64> {
        linalg::matrix_power(&self.w, k)
    }
}

/// Weights with the default step `delta = 2 / (lambda_2 + lambda_N)`.
pub fn make_weights(s: &Spectrum) -> Result<ConsensusWeights> {
    let n = s.n();
    if n == 1 {
        return Ok(ConsensusWeights { w: DMatrix::identity(1, 1), delta: 0.0, r: 0.0 });
    }
    let (l2, ln) = (s.lambda2(), s.lambda_max());
    if l2 <= ZERO_EIGEN_TOL {
        return Err(Error::NotConnected { lambda2: l2 });
    }
    let delta = 2.0 / (l2 + ln);
    let w = DMatrix::identity(n, n) - &s.laplacian * delta;
    Ok(ConsensusWeights { w, delta, r: (ln - l2) / (ln + l2) })
}

/// Weights with an explicit step in `(0, 2/lambda_N)`.
pub fn make_weights_with_delta(s: &Spectrum, delta: f64) -> Result<ConsensusWeights> {
    let n = s.n();
    let (l2, ln) = (s.lambda2(), s.lambda_max());
    if n > 1 && l2 <= ZERO_EIGEN_TOL {
        return Err(Error::NotConnected { lambda2: l2 });
    }
    if !(delta > 0.0) || (n > 1 && delta >= 2.0 / ln) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 2/lambda_N) = (0, {}), got {delta}",
            2.0 / ln
        )));
    }
    let w = DMatrix::identity(n, n) - &s.laplacian * delta;
    let r = if n == 1 { 0.0 } else { (1.0 - delta * l2).abs().max((1.0 - delta * ln).abs()) };
    Ok(ConsensusWeights { w, delta, r })
}

/// `||W - J||_2` by eigendecomposition, used to cross-check `r`.
pub fn deviation_from_average(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    linalg::sym_norm(&(w - j))
}

/// Smallest number of consensus rounds, `1 + floor(-3 ln N / (2 ln r))`.
pub fn min_consensus_rounds(n: usize, r: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("r must lie in (0,1), got {r}")));
    }
    let q = -3.0 * (n as f64).ln() / (2.0 * r.ln());
    Ok(1 + q.floor().max(0.0) as usize)
}
