//! Interaction graphs and the classical constants of the velocity bound.
//!
//! A [`Graph`] is a simple undirected graph on `n_sites` vertices. Hopping in
//! the Hamiltonian runs along its edges, and the speed-of-sound bound depends
//! on the graph only through two numbers: the maximal vertex degree `D` and
//! half the spectral norm of the adjacency matrix, `Δ = ‖M‖/2`.
//!
//! The absolute constant `χ` is the root of `χ ln χ = χ + 1` above `e`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this size the spectral norm switches from dense diagonalization to
/// power iteration.
pub const DENSE_SPECTRAL_LIMIT: usize = 512;

/// Simple undirected graph with sorted edge list `(j, k)`, `j < k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Graph {
    n_sites: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n_sites: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphJson> for Graph {
    type Error = Error;
    fn try_from(raw: GraphJson) -> Result<Self> {
        Graph::from_edges(raw.n_sites, raw.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for GraphJson {
    fn from(g: Graph) -> Self {
        GraphJson {
            n_sites: g.n_sites,
            edges: g.edges.iter().map(|&(j, k)| [j, k]).collect(),
        }
    }
}

impl Graph {
    /// Builds a graph from an explicit edge list, rejecting self-loops,
    /// duplicates (in either orientation) and out-of-range endpoints.
    pub fn from_edges<I>(n_sites: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n_sites == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut seen = BTreeSet::new();
        for (a, b) in edges {
            for v in [a, b] {
                if v >= n_sites {
                    return Err(Error::VertexOutOfRange { vertex: v, n_sites });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::DuplicateEdge(a, b));
            }
        }
        let edges: Vec<_> = seen.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n_sites];
        for &(j, k) in &edges {
            neighbors[j].push(k);
            neighbors[k].push(j);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph {
            n_sites,
            edges,
            neighbors,
        })
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|j| (j - 1, j)))
    }

    /// Ring on `n ≥ 3` vertices.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::BadDescriptor(format!(
                "cycle:{n} needs at least 3 sites"
            )));
        }
        Self::from_edges(n, (0..n).map(|j| (j, (j + 1) % n)))
    }

    /// Open `rows × cols` square grid, vertex `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::from_edges(rows * cols, edges)
    }

    /// Center vertex 0 joined to `n - 1` leaves.
    pub fn star(n: usize) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|j| (0, j)))
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn degree(&self, j: usize) -> usize {
        self.neighbors[j].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_sites, self.n_sites);
        for &(j, k) in &self.edges {
            m[(j, k)] = 1.0;
            m[(k, j)] = 1.0;
        }
        m
    }

    /// Breadth-first distances from `source`; `None` marks unreachable vertices.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        self.distances_from_set(&[source])
    }

    /// Multi-source distances `dist(j, R) = min_{r ∈ R} dist(j, r)`.
    pub fn distances_from_set(&self, sources: &[usize]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_sites];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("queued vertices have a distance");
            for &w in &self.neighbors[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Shortest-path length, or `None` if `j` and `k` lie in different components.
    pub fn distance(&self, j: usize, k: usize) -> Result<Option<usize>> {
        for v in [j, k] {
            if v >= self.n_sites {
                return Err(Error::VertexOutOfRange {
                    vertex: v,
                    n_sites: self.n_sites,
                });
            }
        }
        Ok(self.distances_from(j)[k])
    }

    pub fn n_components(&self) -> usize {
        let mut seen = vec![false; self.n_sites];
        let mut count = 0;
        for v in 0..self.n_sites {
            if seen[v] {
                continue;
            }
            count += 1;
            for (w, d) in self.distances_from(v).into_iter().enumerate() {
                if d.is_some() {
                    seen[w] = true;
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.n_components() == 1
    }

    /// `Δ = ‖M‖/2`.
    pub fn spectral_half_norm(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        let norm = if self.n_sites <= DENSE_SPECTRAL_LIMIT {
            let eig = SymmetricEigen::new(self.adjacency());
            eig.eigenvalues
                .iter()
                .fold(0.0f64, |acc, e| acc.max(e.abs()))
        } else {
            self.power_norm(1e-12, 100_000)
        };
        norm / 2.0
    }

    /// Largest |eigenvalue| of the adjacency by power iteration on `M²`, which
    /// avoids the ±λ oscillation on bipartite graphs.
    pub fn power_norm(&self, tol: f64, max_iter: usize) -> f64 {
        let n = self.n_sites;
        let apply = |x: &DVector<f64>| {
            let mut y = DVector::zeros(n);
            for &(j, k) in &self.edges {
                y[j] += x[k];
                y[k] += x[j];
            }
            y
        };
        // Non-symmetric start so no eigenvector is orthogonal by accident.
        let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
        x /= x.norm();
        let mut lambda_sq = 0.0;
        for _ in 0..max_iter {
            let y = apply(&apply(&x));
            let next = x.dot(&y);
            let norm = y.norm();
            if norm == 0.0 {
                return 0.0;
            }
            x = y / norm;
            if (next - lambda_sq).abs() <= tol * next.abs() {
                lambda_sq = next;
                break;
            }
            lambda_sq = next;
        }
        lambda_sq.max(0.0).sqrt()
    }
}

/// Textual generator descriptor: `path:4`, `cycle:6`, `grid:3x3`, `star:5`,
/// `edgeless:3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphDescriptor {
    Path(usize),
    Cycle(usize),
    Grid(usize, usize),
    Star(usize),
    Edgeless(usize),
}

impl GraphDescriptor {
    pub fn build(&self) -> Result<Graph> {
        match *self {
            GraphDescriptor::Path(n) => Graph::path(n),
            GraphDescriptor::Cycle(n) => Graph::cycle(n),
            GraphDescriptor::Grid(a, b) => Graph::grid(a, b),
            GraphDescriptor::Star(n) => Graph::star(n),
            GraphDescriptor::Edgeless(n) => Graph::edgeless(n),
        }
    }
}

impl FromStr for GraphDescriptor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadDescriptor(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match kind.trim() {
            "path" => Ok(GraphDescriptor::Path(num(arg)?)),
            "cycle" => Ok(GraphDescriptor::Cycle(num(arg)?)),
            "star" => Ok(GraphDescriptor::Star(num(arg)?)),
            "edgeless" => Ok(GraphDescriptor::Edgeless(num(arg)?)),
            "grid" => {
                let (a, b) = arg.split_once('x').ok_or_else(bad)?;
                Ok(GraphDescriptor::Grid(num(a)?, num(b)?))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for GraphDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphDescriptor::Path(n) => write!(f, "path:{n}"),
            GraphDescriptor::Cycle(n) => write!(f, "cycle:{n}"),
            GraphDescriptor::Grid(a, b) => write!(f, "grid:{a}x{b}"),
            GraphDescriptor::Star(n) => write!(f, "star:{n}"),
            GraphDescriptor::Edgeless(n) => write!(f, "edgeless:{n}"),
        }
    }
}

/// A graph as it appears in configs: a generator string or an explicit
/// `{n_sites, edges}` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Descriptor(String),
    Explicit(Graph),
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSpec::Descriptor(s) => s.parse::<GraphDescriptor>()?.build(),
            GraphSpec::Explicit(g) => Ok(g.clone()),
        }
    }
}

/// `f(χ) = χ ln χ − χ − 1`.
pub fn chi_residual(chi: f64) -> f64 {
    chi * chi.ln() - chi - 1.0
}

/// Root of `χ ln χ = χ + 1` on `[e, 4]`, by bisection-safeguarded Newton.
///
/// `f' = ln χ > 0` on the bracket, so the root is unique there.
pub fn solve_chi() -> f64 {
    let (mut lo, mut hi) = (std::f64::consts::E, 4.0);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi_residual(x);
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / x.ln();
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-16 * x {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// `C = 2χ²/(χ − 1)`.
pub fn c_constant(chi: f64) -> f64 {
    2.0 * chi * chi / (chi - 1.0)
}

/// The constants of the ballistic bound for a given graph and hopping rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityBound {
    pub tau: f64,
    pub delta: f64,
    pub max_degree: usize,
    pub chi: f64,
    pub v0: f64,
    pub v: f64,
    pub c_const: f64,
}

impl VelocityBound {
    pub fn new(graph: &Graph, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::NonPositiveTau(tau));
        }
        let chi = solve_chi();
        let delta = graph.spectral_half_norm();
        let max_degree = graph.max_degree();
        let v0 = chi * delta * tau;
        Ok(VelocityBound {
            tau,
            delta,
            max_degree,
            chi,
            v0,
            v: v0 + max_degree as f64,
            c_const: c_constant(chi),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators() {
        assert_eq!(Graph::path(4).unwrap().edges(), &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(Graph::cycle(3).unwrap().edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(Graph::grid(2, 3).unwrap().edges().len(), 7);
        assert_eq!(Graph::star(5).unwrap().max_degree(), 4);
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(Graph::from_edges(2, [(0, 0)]), Err(Error::SelfLoop(0)));
        assert_eq!(
            Graph::from_edges(3, [(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge(1, 0))
        );
        assert!(matches!(
            Graph::from_edges(2, [(0, 2)]),
            Err(Error::VertexOutOfRange { vertex: 2, .. })
        ));
        assert_eq!(Graph::from_edges(0, []), Err(Error::EmptyGraph));
        assert!(Graph::cycle(2).is_err());
    }

    #[test]
    fn distances() {
        let p = Graph::path(4).unwrap();
        assert_eq!(p.distance(0, 3).unwrap(), Some(3));
        assert_eq!(p.distance(2, 2).unwrap(), Some(0));
        assert_eq!(Graph::cycle(4).unwrap().distance(0, 3).unwrap(), Some(1));
        let iso = Graph::edgeless(2).unwrap();
        assert_eq!(iso.distance(0, 1).unwrap(), None);
        assert!(!iso.is_connected());
        assert_eq!(iso.n_components(), 2);
        assert!(p.distance(0, 9).is_err());
    }

    #[test]
    fn degrees() {
        assert_eq!(Graph::path(4).unwrap().max_degree(), 2);
        assert_eq!(Graph::edgeless(3).unwrap().max_degree(), 0);
    }

    #[test]
    fn descriptor_parsing() {
        for s in ["path:4", "cycle:6", "grid:3x3", "star:5", "edgeless:2"] {
            let d: GraphDescriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        for s in ["path", "ring:3", "grid:3", "path:x"] {
            assert!(s.parse::<GraphDescriptor>().is_err(), "{s}");
        }
    }

    #[test]
    fn json_round_trip() {
        let g = Graph::cycle(4).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"n_sites":4,"edges":[[0,1],[0,3],[1,2],[2,3]]}"#);
        let back: Graph = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n_sites":2,"edges":[[1,1]]}"#).is_err());
    }

    #[test]
    fn spectral_half_norm_values() {
        assert!((Graph::path(2).unwrap().spectral_half_norm() - 0.5).abs() < 1e-12);
        assert!((Graph::cycle(4).unwrap().spectral_half_norm() - 1.0).abs() < 1e-12);
        let golden = (std::f64::consts::PI / 5.0).cos();
        assert!((Graph::path(4).unwrap().spectral_half_norm() - golden).abs() < 1e-12);
        assert_eq!(Graph::edgeless(3).unwrap().spectral_half_norm(), 0.0);
    }

    #[test]
    fn power_method_agrees_with_dense() {
        for g in [
            Graph::path(7).unwrap(),
            Graph::cycle(6).unwrap(),
            Graph::grid(3, 4).unwrap(),
            Graph::star(6).unwrap(),
        ] {
            let dense = 2.0 * g.spectral_half_norm();
            let iter = g.power_norm(1e-14, 200_000);
            assert!((dense - iter).abs() < 1e-6 * dense, "{dense} vs {iter}");
        }
    }

    #[test]
    fn chi_root() {
        assert_eq!(chi_residual(std::f64::consts::E), -1.0);
        assert!((chi_residual(4.0) - (4.0 * 4f64.ln() - 5.0)).abs() < 1e-15);
        assert!(chi_residual(4.0) > 0.5);
        let chi = solve_chi();
        assert!(chi_residual(chi).abs() < 1e-12);
        assert!(chi > 3.5 && chi < 3.7);
        assert!((c_constant(chi) - 9.95411).abs() < 1e-4);
    }

    #[test]
    fn velocity_bound_values() {
        let chi = solve_chi();
        let vb = VelocityBound::new(&Graph::edgeless(3).unwrap(), 2.0).unwrap();
        assert_eq!((vb.delta, vb.max_degree, vb.v), (0.0, 0, 0.0));
        let vb = VelocityBound::new(&Graph::cycle(4).unwrap(), 1.0).unwrap();
        assert!((vb.v0 - chi).abs() < 1e-12);
        assert!((vb.v - (chi + 2.0)).abs() < 1e-12);
        assert!((vb.v0 - 3.591121).abs() < 1e-6);
        let vb = VelocityBound::new(&Graph::path(4).unwrap(), 1.0).unwrap();
        assert!((vb.v0 - 2.9053).abs() < 1e-4);
        assert!((vb.v - 4.9053).abs() < 1e-4);
        assert!(VelocityBound::new(&Graph::path(2).unwrap(), 0.0).is_err());
        assert!(VelocityBound::new(&Graph::path(2).unwrap(), -1.0).is_err());
    }
}
