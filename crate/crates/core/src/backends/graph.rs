use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Embeddings;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.7;
pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 10_000;
const BLOCK: usize = 512;

/// Undirected weighted graph over embedding rows; adjacency lists are sorted
/// by neighbour index and never contain self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub edge_threshold: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SimilarityGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Each undirected edge once, as `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |(j, _)| *j > i).map(move |&(j, w)| (i, j, w)))
    }

    /// Graph from explicit weighted edges; duplicates keep the last weight.
    pub fn from_edges(n: usize, edge_threshold: f64, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::Precondition(format!("invalid edge ({i}, {j}) in a {n}-node graph")));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for nb in &mut adjacency {
            nb.sort_by_key(|e| e.0);
            nb.dedup_by(|later, earlier| {
                if later.0 == earlier.0 {
                    earlier.1 = later.1;
                    true
                } else {
                    false
                }
            });
        }
        Ok(Self { edge_threshold, adjacency })
    }
}

/// Exhaustive pairwise graph: an edge joins `i != j` whenever their cosine
/// strictly exceeds `edge_threshold`.
pub fn build_graph(emb: &Embeddings, edge_threshold: f64) -> Result<SimilarityGraph> {
    if !emb.all_unit() {
        return Err(Error::Precondition("graph construction needs unit-norm rows".into()));
    }
    let n = emb.n_rows();
    let all = emb.to_dmatrix();
    let mut adjacency = vec![Vec::new(); n];
    for start in (0..n).step_by(BLOCK) {
        let len = BLOCK.min(n - start);
        let block: DMatrix<f64> = all.rows(start, len) * all.transpose();
        for r in 0..len {
            let i = start + r;
            // upper triangle only, so (i, j) and (j, i) share one weight
            for j in i + 1..n {
                let w = block[(r, j)];
                if w > edge_threshold {
                    adjacency[i].push((j, w.min(1.0)));
                    adjacency[j].push((i, w.min(1.0)));
                }
            }
        }
    }
    for nb in &mut adjacency {
        nb.sort_by_key(|e| e.0);
    }
    Ok(SimilarityGraph { edge_threshold, adjacency })
}

/// Stationary vector of `p = (1 - damping) seed + damping W p`, where `W`
/// spreads each node's mass over its edges in proportion to weight. Mass
/// sitting on nodes without edges returns to the seed distribution.
pub fn personalized_pagerank(g: &SimilarityGraph, seed: &[f64], damping: f64, tol: f64) -> Result<Vec<f64>> {
    let n = g.n_nodes();
    if n == 0 {
        return Err(Error::Precondition("PageRank needs a nonempty graph".into()));
    }
    if seed.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: seed.len() });
    }
    if seed.iter().any(|&s| !(s >= 0.0)) || (seed.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition("seed distribution must be nonnegative and sum to 1".into()));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::Domain(format!("damping must lie in [0, 1) (got {damping})")));
    }
    let degree: Vec<f64> = g.adjacency.iter().map(|nb| nb.iter().map(|e| e.1).sum()).collect();
    let mut p = seed.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITER {
        let dangling: f64 = p.iter().zip(&degree).filter(|(_, &d)| d <= 0.0).map(|(x, _)| x).sum();
        for (x, s) in next.iter_mut().zip(seed) {
            *x = ((1.0 - damping) + damping * dangling) * s;
        }
        for (i, nb) in g.adjacency.iter().enumerate() {
            if degree[i] > 0.0 && p[i] != 0.0 {
                let share = damping * p[i] / degree[i];
                for &(j, w) in nb {
                    next[j] += share * w;
                }
            }
        }
        let change: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if change < tol {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, residual: p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum() })
}

/// Seed distribution from per-node query scores: every node scoring at
/// least `threshold`, weighted by score, or the single best node (lowest
/// index on ties) when none qualifies.
pub fn seed_from_scores(scores: &[f64], threshold: f64) -> Vec<f64> {
    let mut seed: Vec<f64> = scores.iter().map(|&s| if s >= threshold && s > 0.0 { s } else { 0.0 }).collect();
    let total: f64 = seed.iter().sum();
    if total > 0.0 {
        seed.iter_mut().for_each(|s| *s /= total);
    } else if let Some(best) = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))) {
        seed[best] = 1.0;
    }
    seed
}

/// Node with the highest personalised PageRank for a query whose per-node
/// scores are given; ties go to the lowest index.
pub fn graph_retrieve(g: &SimilarityGraph, scores: &[f64], seed_threshold: f64, damping: f64) -> Result<usize> {
    let pr = personalized_pagerank(g, &seed_from_scores(scores, seed_threshold), damping, DEFAULT_TOL)?;
    Ok((0..pr.len()).max_by(|&a, &b| pr[a].total_cmp(&pr[b]).then(b.cmp(&a))).expect("nonempty graph"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn emb(rows: &[Vec<f64>]) -> Embeddings {
        Embeddings::from_rows(rows).unwrap()
    }

    #[test]
    fn orthogonal_pair_has_no_edge() {
        let g = build_graph(&emb(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 0.7).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn duplicates_get_unit_weight() {
        let g = build_graph(&emb(&[vec![0.6, 0.8], vec![0.6, 0.8]]), 0.7).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1, 1.0)]);
    }

    #[test]
    fn three_vectors_with_known_cosines() {
        // cos(0,1) = 0.8, cos(0,2) = 0.6, cos(1,2) = 0.9 up to the construction
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.8, 0.6, 0.0];
        let cy = (0.9 - 0.8 * 0.6) / 0.6;
        let c = vec![0.6, cy, (1.0f64 - 0.36 - cy * cy).sqrt()];
        let g = build_graph(&emb(&[a, b, c]), 0.7).unwrap();
        let pairs: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn single_node_and_symmetric_pair() {
        let one = SimilarityGraph::from_edges(1, 0.7, &[]).unwrap();
        assert_eq!(personalized_pagerank(&one, &[1.0], 0.85, 1e-12).unwrap(), vec![1.0]);
        let two = SimilarityGraph::from_edges(2, 0.7, &[(0, 1, 0.9)]).unwrap();
        let p = personalized_pagerank(&two, &[0.5, 0.5], 0.85, 1e-12).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn path_graph_matches_linear_solve() {
        let g = SimilarityGraph::from_edges(3, 0.0, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let seed = [1.0, 0.0, 0.0];
        let p = personalized_pagerank(&g, &seed, 0.85, 1e-14).unwrap();
        // column-stochastic transition: T[j][i] = w_ij / deg_i
        let t = nalgebra::Matrix3::new(0.0, 0.5, 0.0, 1.0, 0.0, 1.0, 0.0, 0.5, 0.0);
        let a = nalgebra::Matrix3::identity() - t * 0.85;
        let exact = a.lu().solve(&(nalgebra::Vector3::new(1.0, 0.0, 0.0) * 0.15)).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(p[i], exact[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn dangling_mass_returns_to_seed() {
        let g = SimilarityGraph::from_edges(3, 0.0, &[(0, 1, 1.0)]).unwrap();
        let p = personalized_pagerank(&g, &[0.0, 0.0, 1.0], 0.85, 1e-12).unwrap();
        assert_abs_diff_eq!(p[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn seeding_rule() {
        assert_eq!(seed_from_scores(&[0.9, 0.1, 0.7], 0.7), vec![0.9 / 1.6, 0.0, 0.7 / 1.6]);
        assert_eq!(seed_from_scores(&[0.3, 0.5, 0.5], 0.7), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn bad_seed_rejected() {
        let g = SimilarityGraph::from_edges(2, 0.0, &[(0, 1, 1.0)]).unwrap();
        assert!(personalized_pagerank(&g, &[0.5, 0.6], 0.85, 1e-10).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (2usize..9).prop_flat_map(|n| {
            let edge = (0..n, 0..n, 0.1f64..1.0).prop_filter("no loops", |(i, j, _)| i != j);
            (Just(n), proptest::collection::vec(edge, 0..20))
        })
    }

    proptest! {
        #[test]
        fn scores_form_a_distribution((n, edges) in arb_graph(), s in 0usize..8) {
            let g = SimilarityGraph::from_edges(n, 0.0, &edges).unwrap();
            let mut seed = vec![0.0; n];
            seed[s % n] = 1.0;
            let p = personalized_pagerank(&g, &seed, 0.85, 1e-12).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }

        #[test]
        fn relabeling_is_equivariant((n, edges) in arb_graph(), rot in 1usize..8) {
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let g = SimilarityGraph::from_edges(n, 0.0, &edges).unwrap();
            let moved: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j, w)| (perm[i], perm[j], w)).collect();
            let h = SimilarityGraph::from_edges(n, 0.0, &moved).unwrap();
            let seed: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
            let total: f64 = seed.iter().sum();
            let seed: Vec<f64> = seed.iter().map(|x| x / total).collect();
            let mut moved_seed = vec![0.0; n];
            for i in 0..n {
                moved_seed[perm[i]] = seed[i];
            }
            let p = personalized_pagerank(&g, &seed, 0.85, 1e-13).unwrap();
            let q = personalized_pagerank(&h, &moved_seed, 0.85, 1e-13).unwrap();
            for i in 0..n {
                prop_assert!((p[i] - q[perm[i]]).abs() < 1e-9);
            }
        }
    }
}
