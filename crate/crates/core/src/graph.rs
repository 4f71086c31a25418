//! Undirected agent networks and the spectral quantities the step-size
//! conditions depend on.

use std::collections::VecDeque;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;

/// Number of Erdős–Rényi samples drawn before giving up on connectivity.
pub const CONNECTIVITY_RETRY_BUDGET: usize = 10_000;

/// A connected, simple, undirected graph on `n_agents` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<bool>>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct GraphSpectrum {
    pub laplacian: Array2<f64>,
    /// `λ_min(D + W)`, clamped to exactly zero inside eigensolver noise.
    pub lambda_min_d_plus_w: f64,
    pub lambda_max_d_plus_w: f64,
    pub bipartite: bool,
}

impl Graph {
    /// Builds a graph from an edge list and checks it is connected.
    pub fn from_edges(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n_agents, edges)?;
        if !g.is_connected() {
            return Err(Error::Graph(format!("graph on {n_agents} agents is not connected")));
        }
        Ok(g)
    }

    /// Like [`Graph::from_edges`] but allows disconnected graphs. Only the
    /// validators accept such graphs meaningfully.
    pub fn from_edges_unchecked(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Graph("graph needs at least one agent".into()));
        }
        let mut adjacency = vec![vec![false; n_agents]; n_agents];
        for &(i, j) in edges {
            if i >= n_agents || j >= n_agents {
                return Err(Error::Graph(format!("edge ({i}, {j}) out of range for {n_agents} agents")));
            }
            if i == j {
                return Err(Error::Graph(format!("self-loop at agent {i}")));
            }
            adjacency[i][j] = true;
            adjacency[j][i] = true;
        }
        Ok(Self::from_adjacency(adjacency))
    }

    fn from_adjacency(adjacency: Vec<Vec<bool>>) -> Self {
        let neighbors = adjacency
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j).collect())
            .collect();
        Self { adjacency, neighbors }
    }

    pub fn complete(n_agents: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n_agents)
            .flat_map(|i| ((i + 1)..n_agents).map(move |j| (i, j)))
            .collect();
        Self::from_edges(n_agents, &edges)
    }

    pub fn cycle(n_agents: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n_agents).map(|i| (i, (i + 1) % n_agents)).collect();
        Self::from_edges(n_agents, &edges)
    }

    pub fn path(n_agents: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n_agents).map(|i| (i - 1, i)).collect();
        Self::from_edges(n_agents, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    /// Edges with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_agents())
            .flat_map(|i| self.neighbors[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == n
    }

    /// Breadth-first 2-colouring; `None` when an odd cycle exists.
    pub fn two_coloring(&self) -> Option<Vec<bool>> {
        let n = self.n_agents();
        let mut color: Vec<Option<bool>> = vec![None; n];
        for root in 0..n {
            if color[root].is_some() {
                continue;
            }
            color[root] = Some(false);
            let mut queue = VecDeque::from([root]);
            while let Some(i) = queue.pop_front() {
                let ci = color[i].expect("queued nodes are coloured");
                for &j in &self.neighbors[i] {
                    match color[j] {
                        None => {
                            color[j] = Some(!ci);
                            queue.push_back(j);
                        }
                        Some(cj) if cj == ci => return None,
                        Some(_) => {}
                    }
                }
            }
        }
        Some(color.into_iter().map(|c| c.expect("all nodes visited")).collect())
    }

    pub fn is_bipartite(&self) -> bool {
        self.two_coloring().is_some()
    }

    pub fn laplacian(&self) -> Array2<f64> {
        let n = self.n_agents();
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                self.degree(i) as f64
            } else if self.adjacency[i][j] {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn degree_plus_adjacency(&self) -> Array2<f64> {
        let n = self.n_agents();
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                self.degree(i) as f64
            } else if self.adjacency[i][j] {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn spectrum(&self) -> GraphSpectrum {
        let eig = symmetric_eigenvalues(&self.degree_plus_adjacency());
        let lambda_max = *eig.last().expect("non-empty graph");
        let mut lambda_min = eig[0];
        if lambda_min.abs() <= 1e-10 * lambda_max.max(1.0) {
            lambda_min = 0.0;
        }
        GraphSpectrum {
            laplacian: self.laplacian(),
            lambda_min_d_plus_w: lambda_min,
            lambda_max_d_plus_w: lambda_max,
            bipartite: self.is_bipartite(),
        }
    }

    /// Edge-list text: a header `agents N`, then one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("agents {}\n", self.n_agents());
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}").expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n_agents = header
            .strip_prefix("agents")
            .map(str::trim)
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("bad edge-list header {header:?}, expected `agents N`")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let parse = |p: Option<&str>| {
                p.and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!("bad edge line {line:?}")));
            }
            edges.push((i, j));
        }
        Self::from_edges(n_agents, &edges)
    }
}

/// Samples a symmetric Erdős–Rényi graph until it is connected. With
/// `force_non_bipartite`, a bipartite sample gets one chord between two
/// same-coloured nodes, which closes an odd cycle.
pub fn generate_connected_graph(
    n_agents: usize,
    edge_probability: f64,
    seed: u64,
    force_non_bipartite: bool,
) -> Result<Graph> {
    if n_agents < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 agents, got {n_agents}")));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge probability must lie in (0, 1], got {edge_probability}"
        )));
    }
    if force_non_bipartite && n_agents < 3 {
        return Err(Error::InvalidArgument(
            "a non-bipartite graph needs at least 3 agents".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CONNECTIVITY_RETRY_BUDGET {
        let mut adjacency = vec![vec![false; n_agents]; n_agents];
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                if rng.random::<f64>() < edge_probability {
                    adjacency[i][j] = true;
                    adjacency[j][i] = true;
                }
            }
        }
        let mut g = Graph::from_adjacency(adjacency);
        if !g.is_connected() {
            continue;
        }
        if force_non_bipartite {
            if let Some(color) = g.two_coloring() {
                let side = color.iter().filter(|&&c| c).count() >= 2;
                let members: Vec<usize> = (0..n_agents).filter(|&i| color[i] == side).collect();
                let a = members[rng.random_range(0..members.len())];
                let others: Vec<usize> = members.iter().copied().filter(|&b| b != a).collect();
                let b = others[rng.random_range(0..others.len())];
                let mut adjacency = g.adjacency.clone();
                adjacency[a][b] = true;
                adjacency[b][a] = true;
                g = Graph::from_adjacency(adjacency);
            }
        }
        return Ok(g);
    }
    Err(Error::RetryBudgetExhausted {
        n_agents,
        edge_probability,
        budget: CONNECTIVITY_RETRY_BUDGET,
    })
}
