//! Cross-layer tag correlation mining and soft score inference.
//!
//! For a target layer, co-occurrence and mutual-exclusion rates are counted
//! between each target tag and every tag of the more specific layers. Samples
//! with no positive tag anywhere in the target layer get per-tag positive and
//! negative confidence scores accumulated from their labelled subordinate
//! tags, normalised into `[0, 1]` by the global maximum of each score family.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{TagHierarchy, TagMatrix};
use crate::{Error, Result};

/// Rate at which tag `i` accompanies tag `j`: `co_{i,j} / o_j`.
///
/// Zero when `j` never occurs.
pub fn cooccurrence(tags: &TagMatrix, i: usize, j: usize) -> f64 {
    let mut co = 0usize;
    let mut o = 0usize;
    for s in 0..tags.n() {
        if tags.get(s, j) {
            o += 1;
            if tags.get(s, i) {
                co += 1;
            }
        }
    }
    if o == 0 {
        0.0
    } else {
        co as f64 / o as f64
    }
}

/// Relative increase in tag `i`'s absence rate given tag `j` is present:
/// `max(0, r^{-+}_{i,j} - r^-_i) / (1 - r^-_i)`.
///
/// Zero when `j` never occurs or `i` is never positive (the denominator
/// vanishes and an always-absent tag carries no exclusion signal).
pub fn mutual_exclusion(tags: &TagMatrix, i: usize, j: usize) -> f64 {
    let n = tags.n();
    let neg_i = (0..n).filter(|&s| !tags.get(s, i)).count();
    let r_neg = neg_i as f64 / n as f64;
    if neg_i == n {
        return 0.0;
    }
    let mut o = 0usize;
    let mut neg_i_pos_j = 0usize;
    for s in 0..n {
        if tags.get(s, j) {
            o += 1;
            if !tags.get(s, i) {
                neg_i_pos_j += 1;
            }
        }
    }
    if o == 0 {
        return 0.0;
    }
    let r_neg_pos = neg_i_pos_j as f64 / o as f64;
    (r_neg_pos - r_neg).max(0.0) / (1.0 - r_neg)
}

/// Correlation tables between one target layer and all subordinate layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTables {
    pub target_layer: usize,
    pub target_tags: Vec<usize>,
    pub subordinate_tags: Vec<usize>,
    /// `cooccurrence[ti][sj]` pairs `target_tags[ti]` with `subordinate_tags[sj]`.
    pub cooccurrence: Vec<Vec<f64>>,
    pub exclusion: Vec<Vec<f64>>,
}

/// Computes both correlation tables for `target_layer` (0 = most abstract).
pub fn correlation_tables(
    tags: &TagMatrix,
    hierarchy: &TagHierarchy,
    target_layer: usize,
) -> Result<CorrelationTables> {
    check_target_layer(hierarchy, target_layer)?;
    let target_tags = hierarchy.layer(target_layer).to_vec();
    let subordinate_tags = hierarchy.subordinate_tags(target_layer);
    let mut co = Vec::with_capacity(target_tags.len());
    let mut ex = Vec::with_capacity(target_tags.len());
    for &i in &target_tags {
        co.push(
            subordinate_tags
                .iter()
                .map(|&j| cooccurrence(tags, i, j))
                .collect(),
        );
        ex.push(
            subordinate_tags
                .iter()
                .map(|&j| mutual_exclusion(tags, i, j))
                .collect(),
        );
    }
    Ok(CorrelationTables {
        target_layer,
        target_tags,
        subordinate_tags,
        cooccurrence: co,
        exclusion: ex,
    })
}

/// Soft positive/negative confidences for the target-layer tags of every
/// sample with an all-zero target-layer row.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTagScores {
    pub target_layer: usize,
    pub target_tags: Vec<usize>,
    /// Samples of the missing set, ascending.
    pub samples: Vec<usize>,
    rows: HashMap<usize, usize>,
    positive: Vec<f64>,
    negative: Vec<f64>,
}

impl SoftTagScores {
    /// `(positive, negative)` for a missing sample and a target-tag position
    /// (index into `target_tags`); `None` if the sample is not missing.
    pub fn get(&self, sample: usize, tag_pos: usize) -> Option<(f64, f64)> {
        self.rows.get(&sample).map(|&r| {
            let idx = r * self.target_tags.len() + tag_pos;
            (self.positive[idx], self.negative[idx])
        })
    }

    pub fn is_missing(&self, sample: usize) -> bool {
        self.rows.contains_key(&sample)
    }
}

/// Accumulates per Eq.-style sums `sum_j rho_{i,j} y_{.,j}` and
/// `sum_j eps_{i,j} y_{.,j}` over the subordinate tags, then divides each
/// family by its global maximum (all-zero families stay zero).
pub fn soft_scores(
    tags: &TagMatrix,
    hierarchy: &TagHierarchy,
    target_layer: usize,
    corr: &CorrelationTables,
) -> Result<SoftTagScores> {
    check_target_layer(hierarchy, target_layer)?;
    if corr.target_layer != target_layer {
        return Err(Error::InvalidInput(format!(
            "correlation tables built for layer {} but layer {} requested",
            corr.target_layer, target_layer
        )));
    }
    let target_tags = corr.target_tags.clone();
    let samples: Vec<usize> = (0..tags.n())
        .filter(|&s| target_tags.iter().all(|&i| !tags.get(s, i)))
        .collect();
    let width = target_tags.len();
    let mut positive = vec![0.0; samples.len() * width];
    let mut negative = vec![0.0; samples.len() * width];
    for (r, &s) in samples.iter().enumerate() {
        for ti in 0..width {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for (sj, &j) in corr.subordinate_tags.iter().enumerate() {
                if tags.get(s, j) {
                    pos += corr.cooccurrence[ti][sj];
                    neg += corr.exclusion[ti][sj];
                }
            }
            positive[r * width + ti] = pos;
            negative[r * width + ti] = neg;
        }
    }
    normalize_by_max(&mut positive);
    normalize_by_max(&mut negative);
    let rows = samples.iter().enumerate().map(|(r, &s)| (s, r)).collect();
    Ok(SoftTagScores {
        target_layer,
        target_tags,
        samples,
        rows,
        positive,
        negative,
    })
}

fn normalize_by_max(values: &mut [f64]) {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in values.iter_mut() {
            *v /= max;
        }
    }
}

fn check_target_layer(hierarchy: &TagHierarchy, target_layer: usize) -> Result<()> {
    let layer_count = hierarchy.layer_count();
    if target_layer >= layer_count {
        return Err(Error::InvalidInput(format!(
            "target layer {target_layer} out of range ({layer_count} layers)"
        )));
    }
    if target_layer + 1 == layer_count {
        return Err(Error::InvalidInput(format!(
            "target layer {target_layer} has no subordinate layers"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag_matrix(m: usize, rows: &[&[u8]]) -> TagMatrix {
        let names: Vec<String> = (0..m).map(|j| format!("t{j}")).collect();
        let values: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        TagMatrix::new(rows.len(), names, values).unwrap()
    }

    #[test]
    fn cooccurrence_direct_counts() {
        // j positive in 4 samples, i co-positive in 2 of them.
        let tags = tag_matrix(
            2,
            &[&[1, 1], &[1, 1], &[0, 1], &[0, 1], &[1, 0], &[0, 0]],
        );
        assert_eq!(cooccurrence(&tags, 0, 1), 0.5);
    }

    #[test]
    fn cooccurrence_extremes() {
        let tags = tag_matrix(2, &[&[1, 0], &[0, 1], &[0, 1]]);
        assert_eq!(cooccurrence(&tags, 0, 1), 0.0);
        let tags = tag_matrix(2, &[&[1, 1], &[1, 1], &[1, 0]]);
        assert_eq!(cooccurrence(&tags, 0, 1), 1.0);
    }

    #[test]
    fn mutual_exclusion_full_strength() {
        // 10 samples; i positive in 4 (r^- = 0.6); every j-positive sample
        // lacks i, so the exclusion saturates at 1.
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for k in 0..10 {
            let i = u8::from(k < 4);
            let j = u8::from(k >= 5);
            rows.push(vec![i, j]);
        }
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let tags = tag_matrix(2, &refs);
        assert_eq!(mutual_exclusion(&tags, 0, 1), 1.0);
    }

    #[test]
    fn mutual_exclusion_partial() {
        // r^-_i = 0.5, r^{-+}_{i,j} = 0.75 -> 0.25 / 0.5 = 0.5.
        let rows: Vec<Vec<u8>> = vec![
            vec![1, 1],
            vec![0, 1],
            vec![0, 1],
            vec![0, 1],
            vec![1, 0],
            vec![1, 0],
            vec![1, 0],
            vec![0, 0],
        ];
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let tags = tag_matrix(2, &refs);
        assert_eq!(mutual_exclusion(&tags, 0, 1), 0.5);
    }

    #[test]
    fn mutual_exclusion_clamped_to_zero() {
        // i positive wherever j is: r^{-+} = 0 <= r^-.
        let tags = tag_matrix(2, &[&[1, 1], &[1, 1], &[0, 0], &[1, 0]]);
        assert_eq!(mutual_exclusion(&tags, 0, 1), 0.0);
    }

    #[test]
    fn always_negative_tag_yields_zero_exclusion() {
        let tags = tag_matrix(2, &[&[0, 1], &[0, 1], &[0, 0]]);
        assert_eq!(mutual_exclusion(&tags, 0, 1), 0.0);
    }

    #[test]
    fn soft_scores_accumulate_and_normalize() {
        // Hierarchy: layer 0 = {0 (a), 1}, layer 1 = {2 (b), 3 (c)}.
        // Sample 4 misses the whole target layer and carries b and c.
        let rows: Vec<Vec<u8>> = vec![
            vec![1, 0, 1, 0],
            vec![1, 0, 1, 1],
            vec![0, 1, 0, 1],
            vec![1, 0, 0, 1],
            vec![0, 0, 1, 1],
        ];
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let tags = tag_matrix(4, &refs);
        let hierarchy = TagHierarchy::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let corr = correlation_tables(&tags, &hierarchy, 0).unwrap();
        let scores = soft_scores(&tags, &hierarchy, 0, &corr).unwrap();
        assert_eq!(scores.samples, vec![4]);
        // Raw positive for tag a: rho(a,b) + rho(a,c) = 2/3 + 2/4.
        let raw_a = 2.0 / 3.0 + 0.5;
        let raw_other = corr.cooccurrence[1][0] + corr.cooccurrence[1][1];
        let max = raw_a.max(raw_other);
        let (pos_a, _) = scores.get(4, 0).unwrap();
        assert!((pos_a - raw_a / max).abs() < 1e-15);
        assert!(scores.get(0, 0).is_none());
    }

    #[test]
    fn sample_without_subordinate_tags_scores_zero() {
        let rows: Vec<Vec<u8>> = vec![vec![1, 1, 0], vec![0, 1, 1], vec![0, 0, 0]];
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let tags = tag_matrix(3, &refs);
        let hierarchy = TagHierarchy::new(vec![vec![0, 1], vec![2]], 3).unwrap();
        let corr = correlation_tables(&tags, &hierarchy, 0).unwrap();
        let scores = soft_scores(&tags, &hierarchy, 0, &corr).unwrap();
        assert_eq!(scores.samples, vec![2]);
        assert_eq!(scores.get(2, 0), Some((0.0, 0.0)));
        assert_eq!(scores.get(2, 1), Some((0.0, 0.0)));
    }

    #[test]
    fn last_layer_has_no_subordinates() {
        let tags = tag_matrix(2, &[&[1, 0], &[0, 1]]);
        let hierarchy = TagHierarchy::new(vec![vec![0], vec![1]], 2).unwrap();
        let err = correlation_tables(&tags, &hierarchy, 1).unwrap_err();
        assert!(err.to_string().contains("no subordinate layers"), "{err}");
    }
}
