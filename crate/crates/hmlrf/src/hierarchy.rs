//! Tag-hierarchy estimation for flat tag sets.
//!
//! Tags are tf-idf weighted, samples are grouped into topic clusters with
//! K-means, and each cluster contributes its highest-scoring tags to the
//! current abstractness layer. The procedure repeats on the remaining tags,
//! taking more tags per cluster at each lower layer, until the requested
//! number of layers is formed.

use std::collections::BTreeSet;

use crate::data::{TagHierarchy, TagMatrix};
use crate::kmeans::kmeans;
use crate::{Error, Result};

/// Non-negative tf-idf weighted tag vectors; zeros stay zero.
#[derive(Debug, Clone)]
pub struct WeightedTagMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl WeightedTagMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, sample: usize, tag: usize) -> f64 {
        self.values[sample * self.m + tag]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.values[sample * self.m..(sample + 1) * self.m]
    }
}

/// Weights each positive entry by `ln(n / o_j)`, with `o_j` the number of
/// samples carrying tag `j`. Tags present everywhere get weight zero, as do
/// tags never observed.
pub fn tfidf_weight(tags: &TagMatrix) -> WeightedTagMatrix {
    let n = tags.n();
    let m = tags.m();
    let idf: Vec<f64> = (0..m)
        .map(|j| {
            let o = tags.occurrences(j);
            if o == 0 {
                0.0
            } else {
                (n as f64 / o as f64).ln()
            }
        })
        .collect();
    let mut values = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            if tags.get(i, j) {
                values[i * m + j] = idf[j];
            }
        }
    }
    WeightedTagMatrix { n, m, values }
}

/// Topic clusters over weighted tag vectors.
#[derive(Debug, Clone)]
pub struct TopicClustering {
    pub cluster_count: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

/// K-means over the weighted tag rows; deterministic for a given seed.
pub fn kmeans_topics(
    weighted: &WeightedTagMatrix,
    topic_count: usize,
    seed: u64,
) -> Result<TopicClustering> {
    let result = kmeans(&weighted.values, weighted.n, weighted.m, topic_count, seed)?;
    Ok(TopicClustering {
        cluster_count: topic_count,
        assignments: result.assignments,
        centroids: result.centroids,
    })
}

/// Estimates an abstract-to-specific hierarchy with `layer_count` layers.
///
/// For layer `i` (1-based, up to `layer_count - 1`) the remaining tags are
/// re-weighted and re-clustered, each topic cluster scores tag `j` as the sum
/// of its members' weights, and the top `3 * i` tags per cluster (score
/// descending, tag index ascending on ties; zero scores are not eligible)
/// join the layer. Whatever remains forms the final layer.
pub fn build_hierarchy(
    tags: &TagMatrix,
    topic_count: usize,
    layer_count: usize,
    seed: u64,
) -> Result<TagHierarchy> {
    if layer_count == 0 {
        return Err(Error::InvalidInput("layer count must be positive".into()));
    }
    if topic_count == 0 {
        return Err(Error::InvalidInput("topic count must be positive".into()));
    }
    let m = tags.m();
    if layer_count == 1 {
        return TagHierarchy::flat(m);
    }

    let mut remaining: Vec<usize> = (0..m).collect();
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(layer_count);

    for layer_idx in 1..layer_count {
        if remaining.is_empty() {
            return Err(Error::InvalidHierarchy(format!(
                "cannot form {layer_count} non-empty layers from {m} tags"
            )));
        }
        let sub = tags.select_tags(&remaining)?;
        let weighted = tfidf_weight(&sub);
        let topics = kmeans_topics(&weighted, topic_count, seed.wrapping_add(layer_idx as u64 - 1))?;

        let take = 3 * layer_idx;
        let mut selected = BTreeSet::new();
        for cluster in 0..topics.cluster_count {
            // sigma_j: total weight of tag j over this cluster's members.
            let mut scores = vec![0.0f64; remaining.len()];
            for (i, &assignment) in topics.assignments.iter().enumerate() {
                if assignment != cluster {
                    continue;
                }
                for (j, score) in scores.iter_mut().enumerate() {
                    *score += weighted.get(i, j);
                }
            }
            let mut ranked: Vec<usize> = (0..remaining.len()).filter(|&j| scores[j] > 0.0).collect();
            ranked.sort_by(|&a, &b| {
                scores[b]
                    .partial_cmp(&scores[a])
                    .unwrap()
                    .then(remaining[a].cmp(&remaining[b]))
            });
            for &j in ranked.iter().take(take) {
                selected.insert(remaining[j]);
            }
        }
        if selected.is_empty() || selected.len() == remaining.len() {
            return Err(Error::InvalidHierarchy(format!(
                "cannot form {layer_count} non-empty layers from {m} tags"
            )));
        }
        remaining.retain(|t| !selected.contains(t));
        layers.push(selected.into_iter().collect());
    }
    layers.push(remaining);
    TagHierarchy::new(layers, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tag_matrix(names: &[&str], rows: &[&[u8]]) -> TagMatrix {
        let values: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        TagMatrix::new(
            rows.len(),
            names.iter().map(|s| s.to_string()).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn idf_value_matches_direct_evaluation() {
        // 100 samples, tag held by 10 of them: weight ln(10) on positives.
        let mut rows: Vec<Vec<u8>> = vec![vec![0]; 100];
        for row in rows.iter_mut().take(10) {
            row[0] = 1;
        }
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let tags = tag_matrix(&["t"], &refs);
        let w = tfidf_weight(&tags);
        assert!((w.get(0, 0) - 10f64.ln()).abs() < 1e-12);
        assert!((w.get(0, 0) - 2.302585092994046).abs() < 1e-12);
        assert_eq!(w.get(99, 0), 0.0);
    }

    #[test]
    fn ubiquitous_tag_weighted_to_zero() {
        let tags = tag_matrix(&["a", "b"], &[&[1, 1], &[1, 0], &[1, 1]]);
        let w = tfidf_weight(&tags);
        for i in 0..3 {
            assert_eq!(w.get(i, 0), 0.0);
        }
        assert!(w.get(0, 1) > 0.0);
    }

    #[test]
    fn flat_hierarchy_for_single_layer() {
        let tags = tag_matrix(&["a", "b", "c", "d"], &[&[1, 0, 1, 0], &[0, 1, 0, 1]]);
        let h = build_hierarchy(&tags, 2, 1, 0).unwrap();
        assert_eq!(h.layer_count(), 1);
        assert_eq!(h.layer(0), &[0, 1, 2, 3]);
    }

    #[test]
    fn top_eta_selection_single_cluster() {
        // One topic cluster, two layers: the three highest-sigma tags form
        // layer 0 and the rest drop to layer 1. Tag frequencies (and thus
        // sigma = o_j * ln(n/o_j)) are picked so the ranking is unambiguous:
        // o = 4, 4, 1, 8 of 9 samples -> sigma ~ 3.24, 3.24, 2.20, 0.94.
        let rows: Vec<Vec<u8>> = (0..9)
            .map(|i| {
                vec![
                    u8::from(i < 4),
                    u8::from((2..6).contains(&i)),
                    u8::from(i == 6),
                    u8::from(i < 8),
                ]
            })
            .collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let tags = tag_matrix(&["a", "b", "c", "d"], &refs);
        let h = build_hierarchy(&tags, 1, 2, 5).unwrap();
        assert_eq!(h.layer_count(), 2);
        assert_eq!(h.layer(0), &[0, 1, 2]);
        assert_eq!(h.layer(1), &[3]);
    }

    #[test]
    fn too_few_tags_for_layers_rejected() {
        let tags = tag_matrix(&["a", "b"], &[&[1, 0], &[0, 1], &[1, 1]]);
        let err = build_hierarchy(&tags, 1, 3, 0).unwrap_err();
        assert!(err.to_string().contains("non-empty layers"), "{err}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<u8>> = (0..30)
            .map(|_| (0..12).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect())
            .collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let names: Vec<String> = (0..12).map(|j| format!("t{j}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let tags = tag_matrix(&name_refs, &refs);
        let a = build_hierarchy(&tags, 3, 2, 17).unwrap();
        let b = build_hierarchy(&tags, 3, 2, 17).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        // The output is always a partition of the tag set.
        #[test]
        fn output_partitions_tags(
            seed in 0u64..1000,
            bits in proptest::collection::vec(proptest::bool::ANY, 8 * 20),
        ) {
            let rows: Vec<Vec<u8>> = bits
                .chunks(8)
                .map(|c| c.iter().map(|&b| u8::from(b)).collect())
                .collect();
            let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
            let names: Vec<String> = (0..8).map(|j| format!("t{j}")).collect();
            let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let tags = tag_matrix(&name_refs, &refs);
            if let Ok(h) = build_hierarchy(&tags, 2, 2, seed) {
                let mut seen: Vec<usize> = h.layers().iter().flatten().copied().collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..8).collect::<Vec<_>>());
            }
        }
    }
}
