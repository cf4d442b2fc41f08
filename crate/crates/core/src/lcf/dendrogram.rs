//! Agglomerative clustering of weight rows and the size-bounded cut.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One merge of the agglomeration; node ids: leaves are `0..n`, the merge at
/// step `s` creates node `n + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge<S: Scalar> {
    /// Child with the smaller minimum leaf index.
    pub left: usize,
    pub right: usize,
    pub height: S,
}

/// Complete-linkage merge tree over the rows of a weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram<S: Scalar> {
    n_leaves: usize,
    merges: Vec<Merge<S>>,
}

impl<S: Scalar> Dendrogram<S> {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge<S>] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        if self.n_leaves == 1 {
            0
        } else {
            self.n_leaves + self.merges.len() - 1
        }
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        if self.is_leaf(node) {
            None
        } else {
            let m = self.merges[node - self.n_leaves];
            Some((m.left, m.right))
        }
    }

    /// Number of leaves under a node.
    pub fn size(&self, node: usize) -> usize {
        if self.is_leaf(node) {
            1
        } else {
            let (a, b) = self.children(node).unwrap();
            self.size(a) + self.size(b)
        }
    }

    /// Leaf indices under a node, ascending.
    pub fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if self.is_leaf(v) {
                out.push(v);
            } else {
                let (a, b) = self.children(v).unwrap();
                stack.push(a);
                stack.push(b);
            }
        }
        out.sort_unstable();
        out
    }

    /// Directly assembles a tree from merge steps; used by tests that need
    /// a specific topology.
    pub fn from_merges(n_leaves: usize, merges: Vec<Merge<S>>) -> Result<Self> {
        if n_leaves == 0 {
            return Err(Error::Dimension("dendrogram needs at least one leaf".into()));
        }
        if merges.len() + 1 != n_leaves && !(n_leaves == 1 && merges.is_empty()) {
            return Err(Error::Dimension(format!(
                "{} merges cannot cover {n_leaves} leaves",
                merges.len()
            )));
        }
        Ok(Self { n_leaves, merges })
    }
}

/// Builds the complete-linkage dendrogram of the rows of `w0` under the l1
/// distance. Ties in the merge distance break to the pair with the smallest
/// (minimum leaf index, other minimum leaf index), so the construction is
/// deterministic.
pub fn build_dendrogram<S: Scalar>(w0: ArrayView2<'_, S>) -> Result<Dendrogram<S>> {
    let n = w0.nrows();
    if n == 0 {
        return Err(Error::Dimension("cannot cluster zero rows".into()));
    }
    if n == 1 {
        return Dendrogram::from_merges(1, Vec::new());
    }

    // Active clusters: node id and minimum leaf index.
    let mut ids: Vec<usize> = (0..n).collect();
    let mut min_leaf: Vec<usize> = (0..n).collect();
    // Dense symmetric distance matrix over active positions.
    let mut dist: Vec<Vec<S>> = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = l1_distance(w0, i, j);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    let mut active = n;
    for step in 0..(n - 1) {
        // Globally closest active pair with the deterministic tie-break.
        let mut best: Option<(usize, usize, S, (usize, usize))> = None;
        for a in 0..active {
            for b in (a + 1)..active {
                let d = dist[a][b];
                let key = ordered_key(min_leaf[a], min_leaf[b]);
                let better = match &best {
                    None => true,
                    Some((_, _, bd, bkey)) => d < *bd || (d == *bd && key < *bkey),
                };
                if better {
                    best = Some((a, b, d, key));
                }
            }
        }
        let (a, b, height, _) = best.expect("at least two active clusters");

        let (left, right) = if min_leaf[a] <= min_leaf[b] {
            (ids[a], ids[b])
        } else {
            (ids[b], ids[a])
        };
        merges.push(Merge {
            left,
            right,
            height,
        });

        // Complete linkage: distance to the merged cluster is the max.
        for c in 0..active {
            if c != a && c != b {
                let d = dist[a][c].max(dist[b][c]);
                dist[a][c] = d;
                dist[c][a] = d;
            }
        }
        ids[a] = n + step;
        min_leaf[a] = min_leaf[a].min(min_leaf[b]);

        // Swap-remove position b.
        let last = active - 1;
        if b != last {
            ids[b] = ids[last];
            min_leaf[b] = min_leaf[last];
            for c in 0..active {
                dist[c][b] = dist[c][last];
            }
            let row = std::mem::take(&mut dist[last]);
            dist[b] = row;
            dist[b][b] = S::zero();
        }
        active -= 1;
    }

    Dendrogram::from_merges(n, merges)
}

fn ordered_key(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn l1_distance<S: Scalar>(m: ArrayView2<'_, S>, i: usize, j: usize) -> S {
    m.row(i)
        .iter()
        .zip(m.row(j).iter())
        .map(|(x, y)| (*x - *y).abs())
        .sum()
}

/// Disjoint series clusters produced by the dendrogram cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    /// Clusters in emission order; each cluster lists leaf indices ascending.
    pub clusters: Vec<Vec<usize>>,
    /// The size bound the cut was run with.
    pub max_size: usize,
}

impl ClusterPartition {
    /// Checks that the clusters exactly partition `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for cluster in &self.clusters {
            for &i in cluster {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.iter().all(|&v| v)
    }

    pub fn largest_cluster(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Top-down cut of the dendrogram: a child of size at most `d` is emitted as
/// a cluster, a larger child is descended into. At a node where both
/// children fit, both are emitted.
pub fn exploring_dendrogram<S: Scalar>(
    dendro: &Dendrogram<S>,
    d: usize,
) -> Result<ClusterPartition> {
    if d == 0 {
        return Err(Error::Config("cluster size bound must be >= 1".into()));
    }
    let mut clusters = Vec::new();
    explore(dendro, dendro.root(), d, &mut clusters);
    Ok(ClusterPartition {
        clusters,
        max_size: d,
    })
}

fn explore<S: Scalar>(dendro: &Dendrogram<S>, node: usize, d: usize, out: &mut Vec<Vec<usize>>) {
    match dendro.children(node) {
        None => out.push(vec![node]),
        Some((left, right)) => {
            for child in [left, right] {
                if dendro.size(child) <= d {
                    out.push(dendro.leaves(child));
                } else {
                    explore(dendro, child, d, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_pair_merges_first_at_height_zero() {
        let w = array![[1.0, 0.0], [0.5, 0.5], [1.0, 0.0]];
        let d = build_dendrogram(w.view()).unwrap();
        let first = d.merges()[0];
        assert_eq!((first.left, first.right), (0, 2));
        assert_eq!(first.height, 0.0);
    }

    #[test]
    fn single_leaf_tree_has_no_internal_nodes() {
        let w = array![[0.3, 0.7]];
        let d = build_dendrogram(w.view()).unwrap();
        assert_eq!(d.n_leaves(), 1);
        assert!(d.merges().is_empty());
        assert_eq!(d.root(), 0);
    }

    #[test]
    fn zero_rows_is_error() {
        let w = Array2::<f64>::zeros((0, 3));
        assert!(build_dendrogram(w.view()).is_err());
    }

    #[test]
    fn heights_are_non_decreasing_under_complete_linkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w = Array2::from_shape_fn((8, 3), |_| rng.random_range(0.0..1.0));
            let d = build_dendrogram(w.view()).unwrap();
            for pair in d.merges().windows(2) {
                assert!(pair[1].height >= pair[0].height - 1e-12);
            }
        }
    }

    /// Brute-force agglomeration: recompute the complete-linkage distance of
    /// every cluster pair from the leaf sets at every step.
    fn oracle_merges(w: &Array2<f64>) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
        let n = w.nrows();
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = Vec::new();
        while clusters.len() > 1 {
            let mut best: Option<(usize, usize, f64, (usize, usize))> = None;
            for a in 0..clusters.len() {
                for b in (a + 1)..clusters.len() {
                    let mut dmax: f64 = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            let d: f64 = (0..w.ncols())
                                .map(|c| (w[[i, c]] - w[[j, c]]).abs())
                                .sum();
                            dmax = dmax.max(d);
                        }
                    }
                    let ka = *clusters[a].iter().min().unwrap();
                    let kb = *clusters[b].iter().min().unwrap();
                    let key = if ka <= kb { (ka, kb) } else { (kb, ka) };
                    let better = match &best {
                        None => true,
                        Some((_, _, bd, bkey)) => {
                            dmax < *bd || (dmax == *bd && key < *bkey)
                        }
                    };
                    if better {
                        best = Some((a, b, dmax, key));
                    }
                }
            }
            let (a, b, d, _) = best.unwrap();
            let mut left = clusters[a].clone();
            let mut right = clusters[b].clone();
            if right.iter().min() < left.iter().min() {
                std::mem::swap(&mut left, &mut right);
            }
            left.sort_unstable();
            right.sort_unstable();
            out.push((left.clone(), right.clone(), d));
            let mut merged = left;
            merged.extend(right);
            merged.sort_unstable();
            let (hi, lo) = (a.max(b), a.min(b));
            clusters.remove(hi);
            clusters.remove(lo);
            clusters.push(merged);
        }
        out
    }

    #[test]
    fn merge_order_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let w = Array2::from_shape_fn((6, 3), |_| rng.random_range(0.0..1.0));
            let dendro = build_dendrogram(w.view()).unwrap();
            let want = oracle_merges(&w);
            assert_eq!(dendro.merges().len(), want.len());
            for (m, (left, right, d)) in dendro.merges().iter().zip(want.iter()) {
                assert_eq!(&dendro.leaves(m.left), left);
                assert_eq!(&dendro.leaves(m.right), right);
                assert!((m.height - d).abs() < 1e-12);
            }
        }
    }

    fn balanced_eight() -> Dendrogram<f64> {
        // Leaves 0..8; pairs, then quads, then the root.
        let merges = vec![
            Merge { left: 0, right: 1, height: 1.0 },
            Merge { left: 2, right: 3, height: 1.0 },
            Merge { left: 4, right: 5, height: 1.0 },
            Merge { left: 6, right: 7, height: 1.0 },
            Merge { left: 8, right: 9, height: 2.0 },
            Merge { left: 10, right: 11, height: 2.0 },
            Merge { left: 12, right: 13, height: 3.0 },
        ];
        Dendrogram::from_merges(8, merges).unwrap()
    }

    #[test]
    fn generous_bound_emits_the_two_root_children() {
        let t = balanced_eight();
        let p = exploring_dendrogram(&t, 8).unwrap();
        assert_eq!(p.clusters.len(), 2);
        assert_eq!(p.clusters[0], vec![0, 1, 2, 3]);
        assert_eq!(p.clusters[1], vec![4, 5, 6, 7]);
    }

    #[test]
    fn unit_bound_gives_singletons() {
        let t = balanced_eight();
        let p = exploring_dendrogram(&t, 1).unwrap();
        assert_eq!(p.clusters.len(), 8);
        assert!(p.clusters.iter().all(|c| c.len() == 1));
        assert!(p.is_partition_of(8));
    }

    #[test]
    fn balanced_eight_with_bound_two_gives_four_pairs() {
        let t = balanced_eight();
        let p = exploring_dendrogram(&t, 2).unwrap();
        assert_eq!(
            p.clusters,
            vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]
        );
    }

    #[test]
    fn caterpillar_tree_hand_executed() {
        // ((((0,1),2),3),4): sizes force descent down the spine.
        let merges = vec![
            Merge { left: 0, right: 1, height: 1.0 },
            Merge { left: 5, right: 2, height: 2.0 },
            Merge { left: 6, right: 3, height: 3.0 },
            Merge { left: 7, right: 4, height: 4.0 },
        ];
        let t = Dendrogram::from_merges(5, merges).unwrap();
        // d = 2: root children are {0,1,2,3} (size 4) and {4}. The big child
        // splits into {0,1,2} (size 3) and {3}; then {0,1} and {2}.
        let p = exploring_dendrogram(&t, 2).unwrap();
        assert_eq!(p.clusters, vec![vec![0, 1], vec![2], vec![3], vec![4]]);
        assert!(p.is_partition_of(5));
        assert!(p.largest_cluster() <= 2);
    }

    #[test]
    fn partitions_hold_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..20);
            let w = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..1.0));
            let t = build_dendrogram(w.view()).unwrap();
            let d = rng.random_range(1..=n);
            let p = exploring_dendrogram(&t, d).unwrap();
            assert!(p.is_partition_of(n));
            assert!(p.largest_cluster() <= d.max(1));
        }
    }
}
