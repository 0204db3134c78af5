//! Core dataset types: visual feature matrix, binary tag matrix, tag
//! hierarchy, and the file formats tying them together.
//!
//! Files are plain CSV (features: headerless reals; tags: a name header then
//! 0/1 rows; cluster labels: one integer per row) plus a small JSON document
//! for the hierarchy. Numeric CSV output uses the shortest decimal
//! representation that round-trips, so `load(save(x)) == x` bit-exactly.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major matrix of `n` visual descriptors with `d` components each.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Validates finiteness and minimum shape (`n >= 2`, `d >= 1`).
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 1 {
            return Err(Error::InvalidInput(format!(
                "feature matrix requires n >= 2 and d >= 1, got n={n}, d={d}"
            )));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix expects {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "feature matrix entry ({}, {}) is not finite",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, sample: usize, feature: usize) -> f64 {
        self.values[sample * self.d + feature]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.values[sample * self.d..(sample + 1) * self.d]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (rows, cols, values) = load_matrix(path)?;
        Self::new(rows, cols, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_matrix(path, self.n, self.d, &self.values)
    }
}

/// Binary tag observations for `n` samples over `m` named tags.
///
/// A `1` means "labelled positive"; a `0` means "not labelled positive",
/// which downstream consumers interpret as negative or missing depending on
/// context.
#[derive(Debug, Clone, PartialEq)]
pub struct TagMatrix {
    n: usize,
    m: usize,
    values: Vec<u8>,
    tag_names: Vec<String>,
}

impl TagMatrix {
    pub fn new(n: usize, tag_names: Vec<String>, values: Vec<u8>) -> Result<Self> {
        let m = tag_names.len();
        if n < 1 || m < 1 {
            return Err(Error::InvalidInput(format!(
                "tag matrix requires n >= 1 and m >= 1, got n={n}, m={m}"
            )));
        }
        if values.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "tag matrix expects {} values, got {}",
                n * m,
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput(
                "tag entries are exactly 0 or 1".to_string(),
            ));
        }
        let mut seen = HashMap::new();
        for (idx, name) in tag_names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidInput(format!("tag {idx} has an empty name")));
            }
            if seen.insert(name.clone(), idx).is_some() {
                return Err(Error::InvalidInput(format!("duplicate tag name '{name}'")));
            }
        }
        Ok(Self {
            n,
            m,
            values,
            tag_names,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tag_names
    }

    /// True iff sample `i` is labelled positive on tag `j`.
    pub fn get(&self, sample: usize, tag: usize) -> bool {
        self.values[sample * self.m + tag] == 1
    }

    pub fn row(&self, sample: usize) -> &[u8] {
        &self.values[sample * self.m..(sample + 1) * self.m]
    }

    /// Occurrence count `o_j`: number of samples labelled positive on `tag`.
    pub fn occurrences(&self, tag: usize) -> usize {
        (0..self.n).filter(|&i| self.get(i, tag)).count()
    }

    /// Copies the given columns into a new matrix (names follow along).
    pub fn select_tags(&self, tags: &[usize]) -> Result<TagMatrix> {
        let names = tags.iter().map(|&j| self.tag_names[j].clone()).collect();
        let mut values = Vec::with_capacity(self.n * tags.len());
        for i in 0..self.n {
            for &j in tags {
                values.push(self.values[i * self.m + j]);
            }
        }
        TagMatrix::new(self.n, names, values)
    }

    /// Returns a copy with the given positive entries cleared to 0.
    pub fn without_positives(&self, removed: &[(usize, usize)]) -> TagMatrix {
        let mut values = self.values.clone();
        for &(i, j) in removed {
            values[i * self.m + j] = 0;
        }
        TagMatrix {
            n: self.n,
            m: self.m,
            values,
            tag_names: self.tag_names.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing tag name header"))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let m = names.len();
        let mut values = Vec::new();
        let mut n = 0;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<&str> = line.split(',').collect();
            if row.len() != m {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("expected {m} tag values, found {}", row.len()),
                ));
            }
            for field in row {
                match field.trim() {
                    "0" => values.push(0),
                    "1" => values.push(1),
                    other => {
                        return Err(Error::parse(
                            path,
                            idx + 1,
                            format!("entries are exactly 0 or 1, found '{other}'"),
                        ))
                    }
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::parse(path, 1, "tag matrix has no sample rows"));
        }
        TagMatrix::new(n, names, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.tag_names.join(",");
        out.push('\n');
        for i in 0..self.n {
            let row: Vec<&str> = self
                .row(i)
                .iter()
                .map(|&v| if v == 1 { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Ordered partition of tag indices into abstractness layers, layer 0 being
/// the most abstract and the last the most specific.
#[derive(Debug, Clone, PartialEq)]
pub struct TagHierarchy {
    layers: Vec<Vec<usize>>,
    layer_of: Vec<usize>,
}

impl TagHierarchy {
    /// Validates that `layers` partitions `0..tag_count` with no empty layer.
    pub fn new(layers: Vec<Vec<usize>>, tag_count: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidHierarchy("at least one layer required".into()));
        }
        let mut layer_of = vec![usize::MAX; tag_count];
        for (k, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::InvalidHierarchy(format!("layer {k} is empty")));
            }
            for &tag in layer {
                if tag >= tag_count {
                    return Err(Error::InvalidHierarchy(format!(
                        "tag index {tag} out of range (m={tag_count})"
                    )));
                }
                if layer_of[tag] != usize::MAX {
                    return Err(Error::InvalidHierarchy(format!(
                        "layers pairwise disjoint: tag {tag} appears more than once"
                    )));
                }
                layer_of[tag] = k;
            }
        }
        if let Some(tag) = layer_of.iter().position(|&k| k == usize::MAX) {
            return Err(Error::InvalidHierarchy(format!(
                "union of layers must cover all tags: tag {tag} unassigned"
            )));
        }
        let mut layers = layers;
        for layer in &mut layers {
            layer.sort_unstable();
        }
        Ok(Self { layers, layer_of })
    }

    /// Single-layer hierarchy holding every tag.
    pub fn flat(tag_count: usize) -> Result<Self> {
        Self::new(vec![(0..tag_count).collect()], tag_count)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, k: usize) -> &[usize] {
        &self.layers[k]
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn layer_of(&self, tag: usize) -> usize {
        self.layer_of[tag]
    }

    pub fn tag_count(&self) -> usize {
        self.layer_of.len()
    }

    /// Tag indices of all layers below `k`, ascending.
    pub fn subordinate_tags(&self, k: usize) -> Vec<usize> {
        let mut tags: Vec<usize> = self.layers[k + 1..].iter().flatten().copied().collect();
        tags.sort_unstable();
        tags
    }

    pub fn load(path: &Path, tag_names: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: HierarchyFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        let index: HashMap<&str, usize> = tag_names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.as_str(), i))
            .collect();
        let mut layers = Vec::with_capacity(file.layers.len());
        for names in &file.layers {
            let mut layer = Vec::with_capacity(names.len());
            for name in names {
                let &tag = index.get(name.as_str()).ok_or_else(|| {
                    Error::InvalidHierarchy(format!("unknown tag name '{name}'"))
                })?;
                layer.push(tag);
            }
            layers.push(layer);
        }
        Self::new(layers, tag_names.len())
    }

    pub fn save(&self, path: &Path, tag_names: &[String]) -> Result<()> {
        let file = HierarchyFile {
            layers: self
                .layers
                .iter()
                .map(|layer| layer.iter().map(|&t| tag_names[t].clone()).collect())
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::InvalidInput(format!("hierarchy serialization: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    layers: Vec<Vec<String>>,
}

/// A validated bundle of features, tags, hierarchy, and optional ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub tags: TagMatrix,
    pub hierarchy: TagHierarchy,
    pub ground_truth_clusters: Option<Vec<usize>>,
    pub ground_truth_tags: Option<TagMatrix>,
}

impl Dataset {
    /// Cross-validates component shapes; construction is all-or-nothing.
    pub fn new(
        features: FeatureMatrix,
        tags: TagMatrix,
        hierarchy: TagHierarchy,
        ground_truth_clusters: Option<Vec<usize>>,
        ground_truth_tags: Option<TagMatrix>,
    ) -> Result<Self> {
        if features.n() != tags.n() {
            return Err(Error::DimensionMismatch(format!(
                "feature rows ({}) and tag rows ({}) disagree",
                features.n(),
                tags.n()
            )));
        }
        if hierarchy.tag_count() != tags.m() {
            return Err(Error::DimensionMismatch(format!(
                "hierarchy covers {} tags but tag matrix has {}",
                hierarchy.tag_count(),
                tags.m()
            )));
        }
        if let Some(truth) = &ground_truth_clusters {
            if truth.len() != features.n() {
                return Err(Error::DimensionMismatch(format!(
                    "ground-truth clusters have {} rows, expected {}",
                    truth.len(),
                    features.n()
                )));
            }
        }
        if let Some(truth) = &ground_truth_tags {
            if truth.n() != tags.n() || truth.m() != tags.m() {
                return Err(Error::DimensionMismatch(format!(
                    "ground-truth tags are {}x{}, expected {}x{}",
                    truth.n(),
                    truth.m(),
                    tags.n(),
                    tags.m()
                )));
            }
        }
        Ok(Self {
            features,
            tags,
            hierarchy,
            ground_truth_clusters,
            ground_truth_tags,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }
}

/// Optional ground-truth file locations for [`load_dataset`].
#[derive(Debug, Clone, Default)]
pub struct TruthPaths {
    pub clusters: Option<PathBuf>,
    pub tags: Option<PathBuf>,
}

/// Loads and cross-validates a dataset from its component files.
pub fn load_dataset(
    features_path: &Path,
    tags_path: &Path,
    hierarchy_path: &Path,
    truth: &TruthPaths,
) -> Result<Dataset> {
    let features = FeatureMatrix::load(features_path)?;
    let tags = TagMatrix::load(tags_path)?;
    let hierarchy = TagHierarchy::load(hierarchy_path, tags.tag_names())?;
    let clusters = truth
        .clusters
        .as_ref()
        .map(|p| load_labels(p))
        .transpose()?;
    let truth_tags = truth.tags.as_ref().map(|p| TagMatrix::load(p)).transpose()?;
    Dataset::new(features, tags, hierarchy, clusters, truth_tags)
}

/// Writes a row-major real matrix as headerless CSV.
///
/// Values are rendered with the shortest decimal form that parses back to the
/// identical `f64`, so a save/load round trip is exact.
pub fn save_matrix(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), rows * cols, "matrix shape mismatch");
    let mut out = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&values[r * cols + c].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a headerless CSV of reals; returns `(rows, cols, row-major values)`.
pub fn load_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("expected {c} columns, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, idx + 1, format!("not a real number: '{field}'"))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse(path, 1, "matrix file is empty"))?;
    Ok((rows, cols, values))
}

/// Loads one integer label per row (ground-truth or predicted clusters).
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: usize = line.trim().parse().map_err(|_| {
            Error::parse(path, idx + 1, format!("not a cluster id: '{line}'"))
        })?;
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(Error::parse(path, 1, "label file is empty"));
    }
    Ok(labels)
}

/// Writes one integer label per row.
pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for &l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    #[test]
    fn load_minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let t = dir.path().join("tags.csv");
        let h = dir.path().join("hierarchy.json");
        write(&f, "0.5,1.0\n1.5,2.0\n2.5,3.0\n");
        write(&t, "cat,dog\n1,0\n0,1\n1,1\n");
        write(&h, r#"{"layers": [["cat", "dog"]]}"#);
        let ds = load_dataset(&f, &t, &h, &TruthPaths::default()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.features.d(), 2);
        assert_eq!(ds.tags.m(), 2);
        assert_eq!(ds.hierarchy.layer_count(), 1);
    }

    #[test]
    fn tag_value_out_of_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("tags.csv");
        write(&t, "cat,dog\n1,2\n");
        let err = TagMatrix::load(&t).unwrap_err();
        assert!(err.to_string().contains("exactly 0 or 1"), "{err}");
    }

    #[test]
    fn duplicate_tag_across_layers_rejected() {
        let err = TagHierarchy::new(vec![vec![0, 1], vec![1]], 2).unwrap_err();
        assert!(err.to_string().contains("pairwise disjoint"), "{err}");
    }

    #[test]
    fn hierarchy_must_cover_all_tags() {
        let err = TagHierarchy::new(vec![vec![0]], 2).unwrap_err();
        assert!(err.to_string().contains("cover all tags"), "{err}");
    }

    #[test]
    fn empty_layer_rejected() {
        let err = TagHierarchy::new(vec![vec![0, 1], vec![]], 2).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn identity_matrix_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        save_matrix(&p, 2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "1,0\n0,1\n");
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let err = save_matrix(Path::new("/nonexistent-dir/m.csv"), 1, 1, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn nonfinite_feature_rejected() {
        let err = FeatureMatrix::new(2, 1, vec![0.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("not finite"), "{err}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f = FeatureMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        let t = TagMatrix::new(3, vec!["a".into()], vec![0, 1, 0]).unwrap();
        let h = TagHierarchy::flat(1).unwrap();
        let err = Dataset::new(f, t, h, None, None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    proptest! {
        // Round-trip is exact for arbitrary finite values.
        #[test]
        fn matrix_roundtrip_exact(values in proptest::collection::vec(-1e12f64..1e12, 15)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.csv");
            save_matrix(&p, 5, 3, &values).unwrap();
            let (rows, cols, loaded) = load_matrix(&p).unwrap();
            prop_assert_eq!((rows, cols), (5, 3));
            prop_assert_eq!(loaded, values);
        }
    }
}
