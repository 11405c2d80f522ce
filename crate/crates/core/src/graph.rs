//! Undirected graphs, the symmetric normalization `M^{-1/2}(I+A)M^{-1/2}`,
//! duplicate-row removal and the fixture graphs used throughout the crate.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, EPS};

/// Simple undirected graph on nodes `0..node_count`. Self-loops are never
/// stored; normalization adds them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        Graph::new(f.nodes, f.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        GraphFile { nodes: g.node_count, edges: g.edges.iter().map(|&(i, j)| [i, j]).collect() }
    }
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges (in either
    /// orientation) and out-of-range indices.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= node_count || j >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {node_count} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self { node_count, edges: set })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(i, j)| i == node || j == node).count()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Normalized adjacency operator together with its deduplicated form.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizedAdjacency {
    pub a_hat: Matrix,
    /// Diagonal of `M`, the degree matrix of `I + A`.
    pub degrees: Vec<f64>,
    pub a_tilde: Matrix,
    pub d_star: usize,
}

impl NormalizedAdjacency {
    pub fn node_count(&self) -> usize {
        self.a_hat.rows()
    }

    /// Numeric rank of `Â` itself (relative threshold `EPS`).
    pub fn rank(&self) -> usize {
        self.a_hat.numeric_rank(EPS)
    }

    /// `M^{1/2} 1`, the eigenvector of `Â` with eigenvalue one.
    pub fn sqrt_degrees(&self) -> Vec<f64> {
        self.degrees.iter().map(|m| m.sqrt()).collect()
    }

    /// `‖Â v − v‖∞` for `v = M^{1/2} 1`.
    pub fn eigen_residual(&self) -> f64 {
        let v = self.sqrt_degrees();
        self.a_hat.matvec(&v).iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Warns when the deduplicated rows are not linearly independent, i.e.
    /// when `D*` overstates the rank.
    pub fn rank_warning(&self) -> Option<String> {
        let r = self.a_tilde.numeric_rank(EPS);
        (r != self.d_star).then(|| {
            format!("deduplicated adjacency has {} rows but numeric rank {r}", self.d_star)
        })
    }
}

pub fn normalize(graph: &Graph) -> NormalizedAdjacency {
    let d = graph.node_count();
    let mut adj = Matrix::identity(d);
    for (i, j) in graph.edges() {
        adj[(i, j)] = 1.0;
        adj[(j, i)] = 1.0;
    }
    let degrees: Vec<f64> = (0..d).map(|i| adj.row(i).iter().sum()).collect();
    let a_hat = Matrix::from_fn(d, d, |i, j| adj[(i, j)] / (degrees[i] * degrees[j]).sqrt());
    let (a_tilde, d_star) = dedup_rows(&a_hat, EPS);
    NormalizedAdjacency { a_hat, degrees, a_tilde, d_star }
}

/// Drops every row within `tol` (max absolute difference) of an earlier
/// retained row. Keeps first occurrences in order.
pub fn dedup_rows(a: &Matrix, tol: f64) -> (Matrix, usize) {
    let mut kept: Vec<&[f64]> = Vec::new();
    for i in 0..a.rows() {
        let row = a.row(i);
        let dup = kept
            .iter()
            .any(|k| k.iter().zip(row).all(|(x, y)| (x - y).abs() <= tol));
        if !dup {
            kept.push(row);
        }
    }
    let n = kept.len();
    (Matrix::from_rows(&kept).unwrap_or_else(|| Matrix::zeros(0, a.cols())), n)
}

/// Named graphs used by the examples, tables and figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Path3,
    Star3,
    Fig2Graph4,
    Triangle3,
    Single1,
}

impl Fixture {
    pub const ALL: [Fixture; 5] =
        [Fixture::Path3, Fixture::Star3, Fixture::Fig2Graph4, Fixture::Triangle3, Fixture::Single1];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Path3 => "path3",
            Fixture::Star3 => "star3",
            Fixture::Fig2Graph4 => "fig2_graph4",
            Fixture::Triangle3 => "triangle3",
            Fixture::Single1 => "single1",
        }
    }

    pub fn graph(self) -> Graph {
        // 1-based edge lists, shifted below.
        let (nodes, edges): (usize, &[(usize, usize)]) = match self {
            Fixture::Path3 => (3, &[(1, 2), (2, 3)]),
            Fixture::Star3 => (3, &[(1, 2), (1, 3)]),
            Fixture::Fig2Graph4 => (4, &[(1, 2), (1, 3), (2, 4)]),
            Fixture::Triangle3 => (3, &[(1, 2), (2, 3), (1, 3)]),
            Fixture::Single1 => (1, &[]),
        };
        Graph::new(nodes, edges.iter().map(|&(i, j)| (i - 1, j - 1))).expect("fixture graphs are valid")
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| Error::UnknownFixture {
            name: s.to_string(),
            available: Fixture::ALL.map(|f| f.name()).join(", "),
        })
    }
}

pub fn fixture(name: &str) -> Result<Graph> {
    Ok(name.parse::<Fixture>()?.graph())
}

/// Resolves a CLI graph argument: a fixture name, or else a JSON file path.
pub fn load_graph(arg: &str) -> Result<Graph> {
    match arg.parse::<Fixture>() {
        Ok(f) => Ok(f.graph()),
        Err(e) => {
            let path = Path::new(arg);
            if path.exists() {
                Graph::from_json_file(path)
            } else {
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S6: f64 = 0.408_248_290_463_863; // 1/sqrt(6)

    fn assert_matrix(m: &Matrix, expected: &[&[f64]]) {
        let e = Matrix::from_rows(expected).unwrap();
        assert!(m.max_abs_diff(&e) < 1e-12, "{m:?} != {e:?}");
    }

    #[test]
    fn path3_normalization() {
        let adj = normalize(&Fixture::Path3.graph());
        assert_matrix(&adj.a_hat, &[&[0.5, S6, 0.0], &[S6, 1.0 / 3.0, S6], &[0.0, S6, 0.5]]);
        assert_eq!(adj.degrees, vec![2.0, 3.0, 2.0]);
        assert_eq!(adj.d_star, 3);
    }

    #[test]
    fn star3_normalization() {
        let adj = normalize(&Fixture::Star3.graph());
        assert_matrix(&adj.a_hat, &[&[1.0 / 3.0, S6, S6], &[S6, 0.5, 0.0], &[S6, 0.0, 0.5]]);
    }

    #[test]
    fn fig2_graph_normalization() {
        let g = fixture("fig2_graph4").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 3));
        let adj = normalize(&g);
        assert_matrix(
            &adj.a_hat,
            &[
                &[1.0 / 3.0, 1.0 / 3.0, S6, 0.0],
                &[1.0 / 3.0, 1.0 / 3.0, 0.0, S6],
                &[S6, 0.0, 0.5, 0.0],
                &[0.0, S6, 0.0, 0.5],
            ],
        );
        assert_eq!(adj.d_star, 4);
    }

    #[test]
    fn single_node_and_triangle() {
        let adj = normalize(&fixture("single1").unwrap());
        assert_matrix(&adj.a_hat, &[&[1.0]]);
        assert_eq!(adj.degrees, vec![1.0]);

        let tri = normalize(&Fixture::Triangle3.graph());
        assert!(tri.a_hat.as_slice().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(tri.d_star, 1);
        assert_eq!(tri.rank(), 1);
    }

    #[test]
    fn fixtures_have_expected_eigenvector_and_rank() {
        for f in Fixture::ALL {
            let adj = normalize(&f.graph());
            assert!(adj.a_hat.is_symmetric(0.0), "{f}");
            assert!(adj.a_hat.as_slice().iter().all(|&x| x >= 0.0), "{f}");
            assert!(adj.eigen_residual() <= 1e-9, "{f}");
            assert_eq!(adj.a_tilde.numeric_rank(1e-9), adj.d_star, "{f}");
            assert!(adj.rank_warning().is_none());
            let (again, d) = dedup_rows(&adj.a_tilde, EPS);
            assert_eq!(again, adj.a_tilde);
            assert_eq!(d, adj.d_star);
        }
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(Graph::new(0, []).is_err());
        assert!(Graph::new(2, [(0, 0)]).is_err());
        assert!(Graph::new(2, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(2, [(0, 2)]).is_err());
    }

    #[test]
    fn unknown_fixture_lists_names() {
        let err = fixture("cube8").unwrap_err().to_string();
        assert!(err.contains("path3") && err.contains("single1"), "{err}");
    }

    #[test]
    fn json_graph_file() {
        let g = Graph::from_json_str(r#"{"nodes": 3, "edges": [[0, 1], [1, 2]]}"#).unwrap();
        assert_eq!(g, Fixture::Path3.graph());
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"nodes":3,"edges":[[0,1],[1,2]]}"#);
        assert!(Graph::from_json_str(r#"{"nodes": 2, "edges": [[0, 5]]}"#).is_err());
    }
}
