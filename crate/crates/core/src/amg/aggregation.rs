//! Smoothed aggregation: greedy MIS seeds, clusters, and the tentative and
//! smoothed prolongators.

use crate::sparsekit::CsrMatrix;

use super::eig::estimate_lambda_max;
use super::graph::FilteredGraph;
use super::AmgError;

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    /// Maximal independent set of the filtered graph, ascending.
    pub seeds: Vec<usize>,
    /// Cluster id per node; clusters `0..seeds.len()` are seeded in seed order,
    /// any further ids are singleton clusters of stranded nodes.
    pub cluster_of: Vec<usize>,
    pub n_clusters: usize,
}

impl Aggregation {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &c in &self.cluster_of {
            s[c] += 1;
        }
        s
    }
}

/// Greedy MIS in ascending node order, then every non-seed joins the
/// adjacent seed with the largest `|w_ij|` (ties go to the lower seed).
pub fn mis_aggregate(g: &FilteredGraph) -> Aggregation {
    let n = g.n_nodes();
    let mut is_seed = vec![false; n];
    let mut covered = vec![false; n];
    let mut seeds = Vec::new();
    for i in 0..n {
        if covered[i] {
            continue;
        }
        is_seed[i] = true;
        covered[i] = true;
        seeds.push(i);
        for &(j, _) in g.neighbors(i) {
            covered[j] = true;
        }
    }
    let mut seed_cluster = vec![usize::MAX; n];
    for (c, &s) in seeds.iter().enumerate() {
        seed_cluster[s] = c;
    }
    let mut cluster_of = vec![usize::MAX; n];
    let mut n_clusters = seeds.len();
    for i in 0..n {
        if is_seed[i] {
            cluster_of[i] = seed_cluster[i];
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for &(j, w) in g.neighbors(i) {
            if is_seed[j] && best.is_none_or(|(_, bw)| w.abs() > bw) {
                best = Some((j, w.abs()));
            }
        }
        cluster_of[i] = match best {
            Some((j, _)) => seed_cluster[j],
            None => {
                n_clusters += 1;
                n_clusters - 1
            }
        };
    }
    Aggregation {
        seeds,
        cluster_of,
        n_clusters,
    }
}

/// `P_ij = |C_j|^{-1/2}` for `i ∈ C_j`: one entry per row, unit column norms.
pub fn build_tentative_prolongator(cluster_of: &[usize], n_clusters: usize) -> Result<CsrMatrix, AmgError> {
    let mut sizes = vec![0usize; n_clusters];
    for (i, &c) in cluster_of.iter().enumerate() {
        if c >= n_clusters {
            return Err(AmgError::InvalidPartition(format!(
                "node {i} assigned to cluster {c} of {n_clusters}"
            )));
        }
        sizes[c] += 1;
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(AmgError::InvalidPartition(format!("cluster {c} is empty")));
    }
    let n = cluster_of.len();
    let vals = cluster_of.iter().map(|&c| 1.0 / (sizes[c] as f64).sqrt()).collect();
    CsrMatrix::new(n, n_clusters, (0..=n).collect(), cluster_of.to_vec(), vals)
        .map_err(|e| AmgError::InvalidPartition(e.to_string()))
}

/// Applies `steps` rounds of `P <- (I - ω D^{-1} A) P` with
/// `ω = 4 / (3 λ̂)`, `λ̂` a Lanczos estimate of `λ_max(D^{-1} A)`.
pub fn smooth_prolongator(
    a: &CsrMatrix,
    p_tent: &CsrMatrix,
    steps: usize,
    esteig_iters: usize,
) -> Result<CsrMatrix, AmgError> {
    if steps == 0 {
        return Ok(p_tent.clone());
    }
    let diag = a.diagonal();
    let mut inv_diag = Vec::with_capacity(diag.len());
    for (i, &d) in diag.iter().enumerate() {
        if d == 0.0 || !d.is_finite() {
            return Err(AmgError::NonPositiveDiagonal { row: i, value: d });
        }
        inv_diag.push(1.0 / d);
    }
    let lambda = estimate_lambda_max(a, &inv_diag, esteig_iters)?;
    let omega = 4.0 / (3.0 * lambda);
    let scaled_a = {
        let mut s = a.clone();
        let rp = s.row_ptr().to_vec();
        let vals = s.vals_mut();
        for i in 0..rp.len() - 1 {
            for v in &mut vals[rp[i]..rp[i + 1]] {
                *v *= omega * inv_diag[i];
            }
        }
        s
    };
    let mut p = p_tent.clone();
    for _ in 0..steps {
        let ap = scaled_a.matmul(&p).map_err(AmgError::Sparse)?;
        p = p.lin_comb(1.0, &ap, -1.0).map_err(AmgError::Sparse)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amg::graph::filter_graph;

    fn path_graph(n: usize) -> FilteredGraph {
        let adj = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push((i - 1, -0.5));
                }
                if i + 1 < n {
                    r.push((i + 1, -0.5));
                }
                r
            })
            .collect();
        FilteredGraph::from_adjacency(adj)
    }

    #[test]
    fn empty_graph_gives_singletons() {
        let g = FilteredGraph::from_adjacency(vec![Vec::new(); 5]);
        let agg = mis_aggregate(&g);
        assert_eq!(agg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(agg.cluster_of, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn three_node_path() {
        let agg = mis_aggregate(&path_graph(3));
        assert_eq!(agg.seeds, vec![0, 2]);
        // equal weights: node 1 joins the lower seed
        assert_eq!(agg.cluster_of, vec![0, 0, 1]);
    }

    #[test]
    fn stronger_edge_wins() {
        let g = FilteredGraph::from_adjacency(vec![vec![(1, -0.2)], vec![(0, -0.2), (2, -0.7)], vec![(1, -0.7)]]);
        assert_eq!(mis_aggregate(&g).cluster_of, vec![0, 1, 1]);
    }

    #[test]
    fn singleton_clusters_give_identity() {
        let p = build_tentative_prolongator(&[0, 1, 2], 3).unwrap();
        assert_eq!(p, CsrMatrix::identity(3));
    }

    #[test]
    fn cluster_of_four_has_half_entries() {
        let p = build_tentative_prolongator(&[0, 0, 0, 0], 1).unwrap();
        assert_eq!(p.to_dense(), vec![0.5; 4]);
    }

    #[test]
    fn non_partition_rejected() {
        assert!(build_tentative_prolongator(&[0, 2], 3).is_err());
        assert!(build_tentative_prolongator(&[0, 5], 2).is_err());
    }

    #[test]
    fn zero_steps_is_identity_map() {
        let a = crate::amg::graph::tests_support::tridiag(6);
        let p = build_tentative_prolongator(&[0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(smooth_prolongator(&a, &p, 0, 10).unwrap(), p);
    }

    #[test]
    fn identity_operator_scales_prolongator() {
        let a = CsrMatrix::identity(4);
        let p = build_tentative_prolongator(&[0, 0, 1, 1], 2).unwrap();
        let ps = smooth_prolongator(&a, &p, 1, 10).unwrap();
        // λ̂ = 1, ω = 4/3
        for (x, y) in ps.to_dense().iter().zip(p.to_dense()) {
            assert!((x - (1.0 - 4.0 / 3.0) * y).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_aggregation_covers_line() {
        let a = crate::amg::graph::tests_support::tridiag(9);
        let g = filter_graph(&a, 0.0).unwrap();
        let agg = mis_aggregate(&g);
        assert_eq!(agg.seeds, vec![0, 2, 4, 6, 8]);
        assert!(agg.cluster_sizes().iter().all(|&s| s >= 1));
    }
}
