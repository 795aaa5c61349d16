//! K-SAT factor graphs and negation-configurations.
//!
//! Edge ids are dense and clause-major: the edges of clause `a` are
//! `a*K .. (a+1)*K` in the order the clause lists its variables. Every other
//! module addresses per-edge state (messages, populations, negations) by
//! edge id.

mod dimacs;
mod generate;
mod instance;
mod negations;

pub use dimacs::{from_dimacs, to_dimacs, DimacsError};
pub use generate::{generate_poisson, generate_regular, MAX_LOCAL_REPAIRS, MAX_REGULAR_RESTARTS};
pub use instance::{GeneratorSpec, Instance, InstanceError};
pub use negations::{assign_negations, balanced_completion, NegationMode, Negations};

use thiserror::Error;

pub type VarId = usize;
pub type ClauseId = usize;
pub type EdgeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("L*N = {product} is not divisible by K = {k}")]
    Divisibility { product: usize, k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("clause size K = {k} exceeds the number of variables N = {n}")]
    ClauseLargerThanFormula { k: usize, n: usize },
    #[error("could not remove repeated variables after {restarts} restarts")]
    CollisionsUnresolved { restarts: usize },
    #[error("clause {clause} has {got} variables, expected {expected}")]
    ClauseSize { clause: usize, got: usize, expected: usize },
    #[error("clause {clause} repeats variable {var}")]
    RepeatedVariable { clause: usize, var: usize },
    #[error("clause {clause} refers to variable {var} but N = {n}")]
    VariableOutOfRange { clause: usize, var: usize, n: usize },
    #[error("negations cover {got} edges, graph has {expected}")]
    NegationLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Edge {
    pub clause: ClauseId,
    pub var: VarId,
}

/// Bipartite variable/clause incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    n_vars: usize,
    clause_size: usize,
    edges: Vec<Edge>,
    var_edges: Vec<Vec<EdgeId>>,
}

impl FactorGraph {
    /// Builds a graph from clause variable lists (0-based variables).
    pub fn from_clauses(n_vars: usize, clause_size: usize, clauses: &[Vec<VarId>]) -> Result<Self, FormulaError> {
        let mut edges = Vec::with_capacity(clauses.len() * clause_size);
        let mut var_edges = vec![Vec::new(); n_vars];
        for (a, clause) in clauses.iter().enumerate() {
            if clause.len() != clause_size {
                return Err(FormulaError::ClauseSize { clause: a, got: clause.len(), expected: clause_size });
            }
            for (p, &v) in clause.iter().enumerate() {
                if v >= n_vars {
                    return Err(FormulaError::VariableOutOfRange { clause: a, var: v, n: n_vars });
                }
                if clause[..p].contains(&v) {
                    return Err(FormulaError::RepeatedVariable { clause: a, var: v });
                }
                var_edges[v].push(edges.len());
                edges.push(Edge { clause: a, var: v });
            }
        }
        Ok(Self { n_vars, clause_size, edges, var_edges })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_clauses(&self) -> usize {
        self.edges.len().checked_div(self.clause_size).unwrap_or(0)
    }

    pub fn clause_size(&self) -> usize {
        self.clause_size
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Clause density `M/N`.
    pub fn alpha(&self) -> f64 {
        self.n_clauses() as f64 / self.n_vars as f64
    }

    pub fn edge(&self, e: EdgeId) -> Edge {
        self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges of `∂i`, in the order the clauses were created.
    pub fn var_edges(&self, i: VarId) -> &[EdgeId] {
        &self.var_edges[i]
    }

    /// Edge ids of `∂a`.
    pub fn clause_edges(&self, a: ClauseId) -> std::ops::Range<EdgeId> {
        a * self.clause_size..(a + 1) * self.clause_size
    }

    pub fn clause_vars(&self, a: ClauseId) -> impl Iterator<Item = VarId> + '_ {
        self.clause_edges(a).map(move |e| self.edges[e].var)
    }

    pub fn degree(&self, i: VarId) -> usize {
        self.var_edges[i].len()
    }

    /// Common variable degree, if every variable has the same one.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.var_edges.first()?.len();
        self.var_edges.iter().all(|v| v.len() == d).then_some(d)
    }

    pub fn clauses(&self) -> Vec<Vec<VarId>> {
        (0..self.n_clauses()).map(|a| self.clause_vars(a).collect()).collect()
    }

    /// Graph diameter in factor-graph edges (variables and clauses are both
    /// nodes). `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let n = self.n_vars + self.n_clauses();
        if n == 0 {
            return Some(0);
        }
        let mut best = 0;
        for src in 0..n {
            let dist = self.bfs(src);
            for d in dist {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let nv = self.n_vars;
        let n = nv + self.n_clauses();
        let mut dist = vec![None; n];
        let mut queue = std::collections::VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            let next: Vec<usize> = if u < nv {
                self.var_edges[u].iter().map(|&e| nv + self.edges[e].clause).collect()
            } else {
                self.clause_vars(u - nv).collect()
            };
            for w in next {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_is_consistent() {
        let g = FactorGraph::from_clauses(4, 3, &[vec![0, 1, 2], vec![1, 2, 3]]).unwrap();
        assert_eq!(g.n_clauses(), 2);
        assert_eq!(g.n_edges(), 6);
        for i in 0..g.n_vars() {
            for &e in g.var_edges(i) {
                assert_eq!(g.edge(e).var, i);
                assert!(g.clause_edges(g.edge(e).clause).contains(&e));
            }
        }
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 2);
        assert_eq!(g.regular_degree(), None);
        assert_eq!(g.diameter(), Some(4));
    }

    #[test]
    fn rejects_bad_clauses() {
        assert_eq!(
            FactorGraph::from_clauses(3, 3, &[vec![0, 1, 1]]),
            Err(FormulaError::RepeatedVariable { clause: 0, var: 1 })
        );
        assert!(matches!(FactorGraph::from_clauses(3, 3, &[vec![0, 1]]), Err(FormulaError::ClauseSize { .. })));
        assert!(matches!(
            FactorGraph::from_clauses(3, 3, &[vec![0, 1, 3]]),
            Err(FormulaError::VariableOutOfRange { .. })
        ));
    }
}
