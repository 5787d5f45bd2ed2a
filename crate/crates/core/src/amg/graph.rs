use crate::sparsekit::CsrMatrix;

use super::AmgError;

/// Undirected graph of surviving matrix couplings. Each neighbor carries the
/// symmetric scaled weight `w_ij = a_ij / sqrt(a_ii a_jj)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl FilteredGraph {
    /// Graph from explicit adjacency lists (neighbor, weight); lists are
    /// sorted by neighbor index.
    pub fn from_adjacency(mut adj: Vec<Vec<(usize, f64)>>) -> Self {
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
        }
        Self { adj }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search_by_key(&j, |&(k, _)| k).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n_nodes()).all(|i| self.adj[i].iter().all(|&(j, _)| self.has_edge(j, i)))
    }
}

/// Keeps edge `(i, j)`, `i != j`, iff `a_ij != 0` and `|w_ij| >= threshold`.
pub fn filter_graph(a: &CsrMatrix, threshold: f64) -> Result<FilteredGraph, AmgError> {
    let diag = a.diagonal();
    if let Some((i, &d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(AmgError::NonPositiveDiagonal { row: i, value: d });
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut adj = Vec::with_capacity(a.n_rows());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let row: Vec<(usize, f64)> = cols
            .iter()
            .zip(vals)
            .filter(|(&j, &v)| j != i && v != 0.0)
            .map(|(&j, &v)| (j, v * scale[i] * scale[j]))
            .filter(|&(_, w)| w.abs() >= threshold)
            .collect();
        adj.push(row);
    }
    Ok(FilteredGraph { adj })
}

#[cfg(test)]
pub(crate) mod tests_support {
    use crate::sparsekit::CsrMatrix;

    pub fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }
}
