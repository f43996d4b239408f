use std::collections::BTreeMap;

use super::ClusterError;
use crate::flows::{weighted_cosine_distance, FeatureVector};

/// Check that `labels` uses exactly `1..=k` with `k >= 2` and return `k`.
pub(crate) fn label_count(labels: &[usize]) -> Result<usize, ClusterError> {
    let k = labels.iter().copied().max().unwrap_or(0);
    if k < 2 {
        return Err(ClusterError::DegenerateClustering(format!("{k} cluster(s); need at least 2")));
    }
    let mut seen = vec![false; k + 1];
    for l in labels {
        seen[*l] = true;
    }
    if let Some(missing) = (1..=k).find(|l| !seen[*l]) {
        return Err(ClusterError::DegenerateClustering(format!("cluster {missing} is empty")));
    }
    Ok(k)
}

/// Mean silhouette coefficient. Points in singleton clusters score 0 and a
/// zero denominator counts as 0.
///
/// Points sharing both bit pattern and label are interchangeable, so the
/// work is quadratic in the number of such groups rather than in points.
pub fn silhouette(features: &[FeatureVector], labels: &[usize]) -> Result<f64, ClusterError> {
    if features.len() != labels.len() {
        return Err(ClusterError::DegenerateClustering("labels and features differ in length".into()));
    }
    let k = label_count(labels)?;
    let mut groups: BTreeMap<(usize, u8), (usize, usize)> = BTreeMap::new();
    let mut cluster_size = vec![0usize; k + 1];
    for (i, (f, l)) in features.iter().zip(labels).enumerate() {
        groups.entry((*l, f.bits())).or_insert((i, 0)).1 += 1;
        cluster_size[*l] += 1;
    }
    let groups: Vec<(usize, usize, usize)> = groups.into_iter().map(|((l, _), (rep, c))| (l, rep, c)).collect();
    let mut total = 0.0;
    for &(l, rep, count) in &groups {
        if cluster_size[l] == 1 {
            continue;
        }
        let mut sums = vec![0.0f64; k + 1];
        for &(l2, rep2, c2) in &groups {
            let d = weighted_cosine_distance(&features[rep], &features[rep2]).map_err(ClusterError::Flow)?;
            sums[l2] += d * c2 as f64;
        }
        let a = sums[l] / (cluster_size[l] - 1) as f64;
        let b = (1..=k).filter(|m| *m != l).map(|m| sums[m] / cluster_size[m] as f64).fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        let s = if denom == 0.0 { 0.0 } else { (b - a) / denom };
        total += s * count as f64;
    }
    Ok(total / features.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::Weights;

    fn fvs(bits: &[u8]) -> Vec<FeatureVector> {
        bits.iter().map(|b| FeatureVector::from_bits(*b, Weights::uniform())).collect()
    }

    fn direct(points: &[FeatureVector], labels: &[usize]) -> f64 {
        let n = points.len();
        let d = |i: usize, j: usize| weighted_cosine_distance(&points[i], &points[j]).unwrap();
        let k = *labels.iter().max().unwrap();
        let mut total = 0.0;
        for i in 0..n {
            let own: Vec<usize> = (0..n).filter(|j| *j != i && labels[*j] == labels[i]).collect();
            if own.is_empty() {
                continue;
            }
            let a = own.iter().map(|j| d(i, *j)).sum::<f64>() / own.len() as f64;
            let mut b = f64::INFINITY;
            for m in 1..=k {
                if m == labels[i] {
                    continue;
                }
                let other: Vec<usize> = (0..n).filter(|j| labels[*j] == m).collect();
                b = b.min(other.iter().map(|j| d(i, *j)).sum::<f64>() / other.len() as f64);
            }
            let den = a.max(b);
            total += if den == 0.0 { 0.0 } else { (b - a) / den };
        }
        total / n as f64
    }

    #[test]
    fn separated_duplicate_groups_score_one() {
        let s = silhouette(&fvs(&[1, 1, 1, 2, 2]), &[1, 1, 1, 2, 2]).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn identical_points_split_score_zero() {
        assert_eq!(silhouette(&fvs(&[4, 4, 4, 4]), &[1, 1, 2, 2]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_labels() {
        assert!(silhouette(&fvs(&[1, 2]), &[1, 1]).is_err());
        assert!(silhouette(&fvs(&[1, 2, 3]), &[1, 3, 3]).is_err());
    }

    #[test]
    fn twelve_points_three_groups_match_direct_formula() {
        let bits = [1, 1, 3, 1, 6, 4, 4, 12, 48, 32, 32, 16];
        let labels = [1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3];
        let pts = fvs(&bits);
        let s = silhouette(&pts, &labels).unwrap();
        assert!((s - direct(&pts, &labels)).abs() < 1e-9);
        let mixed = [1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3];
        assert!((silhouette(&pts, &mixed).unwrap() - direct(&pts, &mixed)).abs() < 1e-9);
    }
}
