use serde::{Deserialize, Serialize};

use super::{ClusterError, Linkage};
use crate::flows::{weighted_cosine_distance, FeatureVector};

/// One merge step. Leaves are `0..n`; the cluster created by merge `i`
/// gets id `n + i`. `left` is the side holding the smaller point index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// `[[left, right, height, size], ...]` in merge order.
    pub fn to_nested_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.merges.iter().map(|m| serde_json::json!([m.left, m.right, m.height, m.size])).collect(),
        )
    }

    /// Labels `1..=k` per point after undoing the last `k - 1` merges.
    /// Label 1 is the largest cluster; equal sizes order by smallest member.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let n = self.n;
        if k == 0 || k > n {
            return Err(ClusterError::KOutOfRange { k, n });
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        // representative point of every cluster id
        let mut rep: Vec<usize> = (0..n).collect();
        for m in &self.merges[..n - k] {
            let (a, b) = (rep[m.left], rep[m.right]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
            rep.push(lo);
        }
        let mut size = vec![0usize; n];
        let mut min_member = vec![usize::MAX; n];
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        for (i, r) in roots.iter().enumerate() {
            size[*r] += 1;
            min_member[*r] = min_member[*r].min(i);
        }
        let mut order: Vec<usize> = (0..n).filter(|r| size[*r] > 0).collect();
        order.sort_by_key(|r| (std::cmp::Reverse(size[*r]), min_member[*r]));
        let mut label = vec![0usize; n];
        for (i, r) in order.iter().enumerate() {
            label[*r] = i + 1;
        }
        Ok(roots.iter().map(|r| label[*r]).collect())
    }
}

/// Symmetric distance matrix stored as the strict upper triangle.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                data.push(f(i, j));
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

struct Active {
    id: usize,
    min_member: usize,
    size: usize,
}

/// Merge loop over `clusters` starting clusters. Each pick is the smallest
/// linkage distance; ties go to the lexicographically smallest pair of
/// minimum member indices. Appends merges with ids starting at `next_id`.
fn merge_loop(
    mut d: DistanceMatrix,
    mut act: Vec<Option<Active>>,
    linkage: Linkage,
    next_id: usize,
    out: &mut Vec<Merge>,
) {
    let m = act.len();
    let mut next_id = next_id;
    for _ in 1..m {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..m {
            let Some(ai) = &act[i] else { continue };
            for j in i + 1..m {
                let Some(aj) = &act[j] else { continue };
                let dist = d.get(i, j);
                let (lo, hi) = if ai.min_member < aj.min_member {
                    (ai.min_member, aj.min_member)
                } else {
                    (aj.min_member, ai.min_member)
                };
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => dist < bd || (dist == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((dist, lo, hi, i, j));
                }
            }
        }
        let (height, _, _, i, j) = best.expect("at least two active clusters");
        let ai = act[i].take().unwrap();
        let aj = act[j].take().unwrap();
        let (first, second) = if ai.min_member < aj.min_member { (&ai, &aj) } else { (&aj, &ai) };
        let size = ai.size + aj.size;
        out.push(Merge { left: first.id, right: second.id, height, size });
        for k in 0..m {
            if k == i || k == j || act[k].is_none() {
                continue;
            }
            let (dik, djk) = (d.get(i, k), d.get(j, k));
            let v = match linkage {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => (ai.size as f64 * dik + aj.size as f64 * djk) / size as f64,
            };
            d.set(i, k, v);
        }
        act[i] = Some(Active { id: next_id, min_member: first.min_member, size });
        next_id += 1;
    }
}

/// Agglomerative clustering of `n` points given their pairwise distances.
pub fn ahc_matrix(d: DistanceMatrix, linkage: Linkage) -> Result<Dendrogram, ClusterError> {
    let n = d.len();
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    let act = (0..n).map(|i| Some(Active { id: i, min_member: i, size: 1 })).collect();
    let mut merges = Vec::with_capacity(n - 1);
    merge_loop(d, act, linkage, n, &mut merges);
    Ok(Dendrogram { n, merges })
}

/// Agglomerative clustering of feature vectors under weighted cosine distance.
///
/// Identical vectors are the only pairs at distance zero, so they are merged
/// first, in the order the tie rule dictates; the remaining work runs over one
/// representative per distinct bit pattern (at most 256).
pub fn ahc(features: &[FeatureVector], linkage: Linkage) -> Result<Dendrogram, ClusterError> {
    let n = features.len();
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    let w = features[0].weights();
    if features.iter().any(|f| f.weights() != w) {
        return Err(ClusterError::Flow(crate::flows::FlowError::WeightMismatch));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = [usize::MAX; 256];
    for (i, f) in features.iter().enumerate() {
        let b = f.bits() as usize;
        if slot[b] == usize::MAX {
            slot[b] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[b]].push(i);
    }
    // groups are already ordered by first member
    let mut merges = Vec::with_capacity(n - 1);
    let mut group_id = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut id = g[0];
        for (k, &p) in g.iter().enumerate().skip(1) {
            merges.push(Merge { left: id, right: p, height: 0.0, size: k + 1 });
            id = n + merges.len() - 1;
        }
        group_id.push(id);
    }
    let u = groups.len();
    let d = DistanceMatrix::from_fn(u, |i, j| {
        weighted_cosine_distance(&features[groups[i][0]], &features[groups[j][0]]).expect("weights checked")
    });
    let act =
        groups.iter().zip(&group_id).map(|(g, id)| Some(Active { id: *id, min_member: g[0], size: g.len() })).collect();
    let next = n + merges.len();
    merge_loop(d, act, linkage, next, &mut merges);
    Ok(Dendrogram { n, merges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::Weights;

    fn fvs(bits: &[u8]) -> Vec<FeatureVector> {
        bits.iter().map(|b| FeatureVector::from_bits(*b, Weights::uniform())).collect()
    }

    /// Textbook single linkage over explicit member sets.
    fn naive_single(points: &[FeatureVector]) -> Vec<f64> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        let mut heights = Vec::new();
        while clusters.len() > 1 {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut d = f64::INFINITY;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            d = d.min(weighted_cosine_distance(&points[i], &points[j]).unwrap());
                        }
                    }
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
            let (h, a, b) = best;
            let moved = clusters.remove(b);
            clusters[a].extend(moved);
            heights.push(h);
        }
        heights
    }

    #[test]
    fn identical_vectors_merge_at_zero() {
        let d = ahc(&fvs(&[3, 3, 3]), Linkage::Single).unwrap();
        assert_eq!(d.heights(), vec![0.0, 0.0]);
        assert_eq!(d.merges[0], Merge { left: 0, right: 1, height: 0.0, size: 2 });
        assert_eq!(d.merges[1], Merge { left: 3, right: 2, height: 0.0, size: 3 });
    }

    #[test]
    fn duplicates_merge_within_group_first() {
        let d = ahc(&fvs(&[1, 2, 1, 2, 1]), Linkage::Single).unwrap();
        assert_eq!(d.heights()[..3], [0.0, 0.0, 0.0]);
        assert_eq!(d.merges[3].height, 1.0);
        assert_eq!(d.cut(2).unwrap(), vec![1, 2, 1, 2, 1]);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(ahc(&fvs(&[1]), Linkage::Single), Err(ClusterError::TooFewPoints(1))));
    }

    #[test]
    fn cut_extremes() {
        let d = ahc(&fvs(&[1, 2, 4, 8, 3]), Linkage::Average).unwrap();
        let all = d.cut(5).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5]);
        assert_eq!(d.cut(1).unwrap(), vec![1; 5]);
        assert!(matches!(d.cut(0), Err(ClusterError::KOutOfRange { .. })));
        assert!(matches!(d.cut(6), Err(ClusterError::KOutOfRange { .. })));
    }

    #[test]
    fn random_sets_match_naive_single_linkage() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let bits: Vec<u8> = (0..10).map(|_| rng.gen()).collect();
            let pts = fvs(&bits);
            let d = ahc(&pts, Linkage::Single).unwrap();
            assert_eq!(d.heights(), naive_single(&pts));
            assert!(d.heights().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn matrix_and_feature_paths_agree() {
        let pts = fvs(&[5, 9, 5, 17, 130, 9, 0]);
        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            let a = ahc(&pts, linkage).unwrap();
            let m = DistanceMatrix::from_fn(pts.len(), |i, j| weighted_cosine_distance(&pts[i], &pts[j]).unwrap());
            let b = ahc_matrix(m, linkage).unwrap();
            for (x, y) in a.heights().iter().zip(b.heights()) {
                assert!((x - y).abs() < 1e-12);
            }
            for k in 1..=pts.len() {
                assert_eq!(a.cut(k).unwrap(), b.cut(k).unwrap());
            }
        }
    }

    #[test]
    fn nested_json_shape() {
        let d = ahc(&fvs(&[1, 1]), Linkage::Single).unwrap();
        assert_eq!(d.to_nested_json().to_string(), "[[0,1,0.0,2]]");
    }
}
