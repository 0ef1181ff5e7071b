//! Finite connected metric graphs with unit-length edges.
//!
//! Vertices and edges are 1-based in the public constructor (matching the
//! config files) and 0-based everywhere else.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// An oriented edge; the parameter interval is `[0, 1]` with `tail` at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricGraph {
    n_vertices: usize,
    edges: Vec<Edge>,
}

/// Incidence matrices with `phi_plus[(v, e)] = 1` iff `v` is the start `e(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrices<T: Real> {
    pub phi_plus: DMatrix<T>,
    pub phi_minus: DMatrix<T>,
    pub phi: DMatrix<T>,
}

impl MetricGraph {
    /// Validates and builds a graph from 1-based `(tail, head)` pairs.
    pub fn new(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_vertices < 2 {
            return Err(Error::TooFewVertices(n_vertices));
        }
        if edges.is_empty() {
            return Err(Error::EmptyEdgeList);
        }
        let mut out = Vec::with_capacity(edges.len());
        for (i, &(a, b)) in edges.iter().enumerate() {
            for v in [a, b] {
                if v == 0 || v > n_vertices {
                    return Err(Error::InvalidVertexIndex { index: v, n_vertices });
                }
            }
            if a == b {
                return Err(Error::SelfLoop { edge: i + 1, vertex: a });
            }
            out.push(Edge { tail: a - 1, head: b - 1 });
        }
        let g = Self { n_vertices, edges: out };
        g.check_connected()?;
        Ok(g)
    }

    /// Path graph `1 - 2 - ... - n` with edges oriented left to right.
    pub fn path(n_vertices: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n_vertices).map(|v| (v, v + 1)).collect();
        Self::new(n_vertices, &edges)
    }

    /// Star with center 1 and `leaves` outward-oriented edges.
    pub fn star(leaves: usize) -> Result<Self> {
        let edges: Vec<_> = (2..=leaves + 1).map(|v| (1, v)).collect();
        Self::new(leaves + 1, &edges)
    }

    fn check_connected(&self) -> Result<()> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for e in &self.edges {
            adj[e.tail].push(e.head);
            adj[e.head].push(e.tail);
        }
        let mut seen = vec![false; self.n_vertices];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(v) => Err(Error::DisconnectedGraph { vertex: v + 1 }),
            None => Ok(()),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incidence<T: Real>(&self) -> IncidenceMatrices<T> {
        let (n, m) = (self.n_vertices, self.edges.len());
        let mut phi_plus = DMatrix::zeros(n, m);
        let mut phi_minus = DMatrix::zeros(n, m);
        for (i, e) in self.edges.iter().enumerate() {
            phi_plus[(e.tail, i)] = T::one();
            phi_minus[(e.head, i)] = T::one();
        }
        let phi = &phi_plus - &phi_minus;
        IncidenceMatrices { phi_plus, phi_minus, phi }
    }

    /// Edges incident to `vertex` (0-based), in increasing edge order.
    pub fn incident_edges(&self, vertex: usize) -> Result<Vec<usize>> {
        if vertex >= self.n_vertices {
            return Err(Error::InvalidVertexIndex { index: vertex + 1, n_vertices: self.n_vertices });
        }
        Ok(self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.tail == vertex || e.head == vertex)
            .map(|(i, _)| i)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_small_graphs() {
        let p3 = MetricGraph::new(3, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(p3.n_edges(), 2);
        let one = MetricGraph::new(2, &[(1, 2)]).unwrap();
        assert_eq!(one.n_edges(), 1);
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert_eq!(
            MetricGraph::new(4, &[(1, 2), (3, 4)]),
            Err(Error::DisconnectedGraph { vertex: 3 })
        );
        assert_eq!(MetricGraph::new(3, &[]), Err(Error::EmptyEdgeList));
        assert!(matches!(
            MetricGraph::new(3, &[(1, 4)]),
            Err(Error::InvalidVertexIndex { index: 4, .. })
        ));
        assert!(matches!(MetricGraph::new(3, &[(1, 2), (2, 2)]), Err(Error::SelfLoop { .. })));
        assert!(matches!(MetricGraph::new(1, &[(1, 1)]), Err(Error::TooFewVertices(1))));
    }

    #[test]
    fn parallel_edges_are_allowed() {
        let g = MetricGraph::new(2, &[(1, 2), (1, 2)]).unwrap();
        assert_eq!(g.incident_edges(0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn incidence_signs() {
        let p3 = MetricGraph::path(3).unwrap();
        let inc = p3.incidence::<f64>();
        assert_eq!(inc.phi[(0, 0)], 1.0);
        assert_eq!(inc.phi[(1, 0)], -1.0);
        assert_eq!(inc.phi[(2, 0)], 0.0);

        let one = MetricGraph::new(2, &[(1, 2)]).unwrap();
        assert_eq!(one.incidence::<f64>().phi, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));

        let star = MetricGraph::star(3).unwrap();
        let inc = star.incidence::<f64>();
        assert!(inc.phi_plus.row(0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn incident_edge_sets() {
        let p3 = MetricGraph::path(3).unwrap();
        assert_eq!(p3.incident_edges(1).unwrap(), vec![0, 1]);
        assert_eq!(p3.incident_edges(0).unwrap(), vec![0]);
        assert!(p3.incident_edges(3).is_err());
        let star = MetricGraph::star(3).unwrap();
        assert_eq!(star.incident_edges(0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn incidence_column_invariants_on_random_graphs() {
        use proptest::prelude::*;
        let strategy = (2usize..8).prop_flat_map(|n| {
            let extra = proptest::collection::vec((1..=n, 1..=n), 0..6);
            (Just(n), extra)
        });
        proptest!(|((n, extra) in strategy)| {
            // a spanning path keeps the graph connected
            let mut edges: Vec<_> = (1..n).map(|v| (v + 1, v)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            let g = MetricGraph::new(n, &edges).unwrap();
            let inc = g.incidence::<f64>();
            for i in 0..g.n_edges() {
                prop_assert_eq!(inc.phi_plus.column(i).sum(), 1.0);
                prop_assert_eq!(inc.phi_minus.column(i).sum(), 1.0);
                prop_assert_eq!(inc.phi.column(i).sum(), 0.0);
            }
            for v in 0..n {
                let from_phi: Vec<_> = (0..g.n_edges()).filter(|&i| inc.phi[(v, i)] != 0.0).collect();
                prop_assert_eq!(g.incident_edges(v).unwrap(), from_phi);
            }
        });
    }
}
