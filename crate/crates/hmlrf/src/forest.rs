//! Forest training with a layered multi-label Gini gain.
//!
//! Trees split on visual features but are scored against tag purity: at each
//! node the most abstract tag layer that is still impure over the node's
//! samples becomes the target, and the split gain is the sum of per-tag Gini
//! gains over that layer. Samples lacking every target-layer tag can join the
//! gain with fractional class masses inferred from cross-layer tag
//! correlations, which is what makes training robust to sparse tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::data::{Dataset, FeatureMatrix, TagHierarchy, TagMatrix};
use crate::tag_stats::{correlation_tables, soft_scores, SoftTagScores};
use crate::{Error, Result};

/// Which parts of the gain machinery a forest uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Layered gain plus correlation-derived soft masses for missing rows.
    Full,
    /// Every tag in every node; no hierarchy, no correlations.
    FlatTags,
    /// Layered gain, but missing rows are excluded instead of soft-weighted.
    NoCorr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Number of trees (tau).
    pub tree_count: usize,
    /// A node with at most this many samples becomes a leaf (phi).
    pub min_leaf: usize,
    /// Features sampled per split; `None` means `floor(sqrt(d))`.
    pub feature_tries: Option<usize>,
    pub mode: TrainingMode,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 1000,
            min_leaf: 3,
            feature_tries: None,
            mode: TrainingMode::Full,
        }
    }
}

impl ForestConfig {
    pub fn resolved_tries(&self, d: usize) -> usize {
        self.feature_tries
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d)
    }
}

/// Binary split: route left iff `x[feature] < threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub feature: usize,
    pub threshold: f64,
}

impl SplitParams {
    pub fn goes_right(&self, row: &[f64]) -> bool {
        row[self.feature] >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        split: SplitParams,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        samples: Vec<usize>,
    },
}

impl TreeNode {
    /// Sample sets of every leaf, left to right.
    pub fn leaves(&self) -> Vec<&[usize]> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a [usize]>) {
        match self {
            TreeNode::Leaf { samples } => out.push(samples),
            TreeNode::Internal { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// A trained ensemble of HML trees.
#[derive(Debug, Clone, PartialEq)]
pub struct HmlForest {
    pub trees: Vec<TreeNode>,
    pub sample_count: usize,
    pub seed: u64,
    pub config: ForestConfig,
}

/// Positive/negative class mass accumulated for one tag over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMass {
    pub pos: f64,
    pub neg: f64,
}

impl ClassMass {
    pub fn total(&self) -> f64 {
        self.pos + self.neg
    }
}

/// Gini impurity `1 - p^2 - (1-p)^2` of a two-class mass.
///
/// Panics on an empty node (zero total mass).
pub fn gini(pos: f64, neg: f64) -> f64 {
    let total = pos + neg;
    assert!(total > 0.0, "gini impurity of an empty node");
    let p = pos / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Mass-weighted Gini gain of one tag for a candidate split.
///
/// Children with zero mass contribute nothing; a tag with zero parent mass
/// yields zero gain.
pub fn single_tag_gain(parent: ClassMass, left: ClassMass, right: ClassMass) -> f64 {
    let total = parent.total();
    if total <= 0.0 {
        return 0.0;
    }
    let mut gain = gini(parent.pos, parent.neg);
    if left.total() > 0.0 {
        gain -= left.total() / total * gini(left.pos, left.neg);
    }
    if right.total() > 0.0 {
        gain -= right.total() / total * gini(right.pos, right.neg);
    }
    gain
}

/// Most abstract layer whose tags are not all identical over `samples`;
/// `None` when every layer is pure (the node cannot be improved).
pub fn target_layer(
    tags: &TagMatrix,
    hierarchy: &TagHierarchy,
    samples: &[usize],
) -> Option<usize> {
    (0..hierarchy.layer_count()).find(|&k| layer_impure(tags, hierarchy.layer(k), samples))
}

fn layer_impure(tags: &TagMatrix, layer: &[usize], samples: &[usize]) -> bool {
    layer.iter().any(|&tag| tag_impure(tags, tag, samples))
}

fn tag_impure(tags: &TagMatrix, tag: usize, samples: &[usize]) -> bool {
    let first = tags.get(samples[0], tag);
    samples[1..].iter().any(|&s| tags.get(s, tag) != first)
}

/// Chosen split and the induced child partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub params: SplitParams,
    pub gain: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

enum NodeTarget {
    Layer(usize),
    AllTags,
}

/// Immutable per-forest training state: the dataset views plus, for every
/// layer that has subordinate layers, the missing-row set and (in full mode)
/// the soft scores inferred from tag correlations.
pub struct TrainingInputs<'a> {
    features: &'a FeatureMatrix,
    tags: &'a TagMatrix,
    hierarchy: &'a TagHierarchy,
    mode: TrainingMode,
    missing: Vec<Vec<bool>>,
    soft: Vec<Option<SoftTagScores>>,
}

impl<'a> TrainingInputs<'a> {
    pub fn prepare(
        features: &'a FeatureMatrix,
        tags: &'a TagMatrix,
        hierarchy: &'a TagHierarchy,
        mode: TrainingMode,
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
        let layer_count = hierarchy.layer_count();
        let mut missing = vec![Vec::new(); layer_count];
        let mut soft = Vec::with_capacity(layer_count);
        for k in 0..layer_count {
            // The last layer has no subordinate tags to borrow evidence from,
            // so its all-zero rows stay ordinary hard samples.
            if k + 1 == layer_count || mode == TrainingMode::FlatTags {
                soft.push(None);
                continue;
            }
            let layer = hierarchy.layer(k);
            missing[k] = (0..tags.n())
                .map(|s| layer.iter().all(|&tag| !tags.get(s, tag)))
                .collect();
            if mode == TrainingMode::Full {
                let corr = correlation_tables(tags, hierarchy, k)?;
                soft.push(Some(soft_scores(tags, hierarchy, k, &corr)?));
            } else {
                soft.push(None);
            }
        }
        Ok(Self {
            features,
            tags,
            hierarchy,
            mode,
            missing,
            soft,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.features.n()
    }

    fn select_target(&self, samples: &[usize]) -> Option<NodeTarget> {
        match self.mode {
            TrainingMode::FlatTags => {
                let any_impure = (0..self.tags.m()).any(|t| tag_impure(self.tags, t, samples));
                any_impure.then_some(NodeTarget::AllTags)
            }
            TrainingMode::Full | TrainingMode::NoCorr => {
                target_layer(self.tags, self.hierarchy, samples).map(NodeTarget::Layer)
            }
        }
    }

    /// Per-sample class masses for each target tag, in `samples` order.
    /// Excluded entries carry zero total mass.
    fn build_masses(&self, samples: &[usize], target: &NodeTarget) -> NodeMasses {
        let (layer, tag_list): (Option<usize>, Vec<usize>) = match target {
            NodeTarget::AllTags => (None, (0..self.tags.m()).collect()),
            NodeTarget::Layer(k) => (Some(*k), self.hierarchy.layer(*k).to_vec()),
        };
        let len = samples.len();
        let width = tag_list.len();
        let mut pos = vec![0.0; width * len];
        let mut tot = vec![0.0; width * len];
        let soft = layer.and_then(|k| self.soft[k].as_ref());
        let miss = layer.map(|k| &self.missing[k]);
        for (si, &sample) in samples.iter().enumerate() {
            let is_missing = miss.map_or(false, |m| !m.is_empty() && m[sample]);
            for (ti, &tag) in tag_list.iter().enumerate() {
                let idx = ti * len + si;
                if !is_missing {
                    tot[idx] = 1.0;
                    pos[idx] = f64::from(u8::from(self.tags.get(sample, tag)));
                } else if self.mode == TrainingMode::Full {
                    let (p, q) = soft
                        .and_then(|s| s.get(sample, ti))
                        .unwrap_or((0.0, 0.0));
                    if p + q > 0.0 {
                        tot[idx] = 1.0;
                        pos[idx] = p / (p + q);
                    }
                }
                // NoCorr leaves missing rows excluded.
            }
        }
        let mut parent_pos = vec![0.0; width];
        let mut parent_tot = vec![0.0; width];
        for ti in 0..width {
            for si in 0..len {
                parent_pos[ti] += pos[ti * len + si];
                parent_tot[ti] += tot[ti * len + si];
            }
        }
        NodeMasses {
            len,
            width,
            pos,
            tot,
            parent_pos,
            parent_tot,
        }
    }

    /// Gain of a specific candidate partition of `samples`; `None` when every
    /// relevant tag is already pure over the node.
    pub fn hml_gain(&self, samples: &[usize], left: &[usize]) -> Option<f64> {
        let target = self.select_target(samples)?;
        let masses = self.build_masses(samples, &target);
        let mut left_pos = vec![0.0; masses.width];
        let mut left_tot = vec![0.0; masses.width];
        for (si, sample) in samples.iter().enumerate() {
            if left.contains(sample) {
                for ti in 0..masses.width {
                    left_pos[ti] += masses.pos[ti * masses.len + si];
                    left_tot[ti] += masses.tot[ti * masses.len + si];
                }
            }
        }
        Some(masses.gain(&left_pos, &left_tot))
    }

    /// Exhaustive cut-point search over randomly sampled features.
    ///
    /// Candidate thresholds are the midpoints between consecutive distinct
    /// sorted values of each feature; the best strictly positive gain wins,
    /// first candidate in scan order on ties. `None` when no candidate
    /// improves on the parent.
    pub fn optimise_split(
        &self,
        samples: &[usize],
        feature_tries: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<SplitOutcome> {
        let target = self.select_target(samples)?;
        let masses = self.build_masses(samples, &target);
        let d = self.features.d();
        let tries = feature_tries.clamp(1, d);
        let chosen = rand::seq::index::sample(rng, d, tries);

        let len = samples.len();
        let mut best_gain = 0.0f64;
        let mut best: Option<SplitParams> = None;
        let mut order: Vec<usize> = Vec::with_capacity(len);
        let mut left_pos = vec![0.0; masses.width];
        let mut left_tot = vec![0.0; masses.width];

        for feature in chosen {
            order.clear();
            order.extend(0..len);
            let value = |si: usize| self.features.get(samples[si], feature);
            order.sort_by(|&a, &b| value(a).partial_cmp(&value(b)).unwrap().then(a.cmp(&b)));

            left_pos.fill(0.0);
            left_tot.fill(0.0);
            for cut in 1..len {
                let si = order[cut - 1];
                for ti in 0..masses.width {
                    left_pos[ti] += masses.pos[ti * len + si];
                    left_tot[ti] += masses.tot[ti * len + si];
                }
                let prev = value(order[cut - 1]);
                let cur = value(order[cut]);
                if cur <= prev {
                    continue;
                }
                let gain = masses.gain(&left_pos, &left_tot);
                if gain > best_gain {
                    let mut threshold = prev + (cur - prev) / 2.0;
                    if threshold <= prev {
                        // Adjacent representable values; the upper one still
                        // separates the two groups.
                        threshold = cur;
                    }
                    best_gain = gain;
                    best = Some(SplitParams { feature, threshold });
                }
            }
        }

        best.map(|params| {
            let (left, right): (Vec<usize>, Vec<usize>) = samples
                .iter()
                .copied()
                .partition(|&s| !params.goes_right(self.features.row(s)));
            debug_assert!(!left.is_empty() && !right.is_empty());
            SplitOutcome {
                params,
                gain: best_gain,
                left,
                right,
            }
        })
    }

    /// Grows one tree over the full sample set, deterministically for `seed`.
    pub fn train_tree(&self, config: &ForestConfig, seed: u64) -> TreeNode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tries = config.resolved_tries(self.features.d());
        self.grow((0..self.sample_count()).collect(), config.min_leaf, tries, &mut rng)
    }

    fn grow(
        &self,
        samples: Vec<usize>,
        min_leaf: usize,
        tries: usize,
        rng: &mut ChaCha8Rng,
    ) -> TreeNode {
        if samples.len() <= min_leaf {
            return TreeNode::Leaf { samples };
        }
        match self.optimise_split(&samples, tries, rng) {
            None => TreeNode::Leaf { samples },
            Some(outcome) => TreeNode::Internal {
                split: outcome.params,
                left: Box::new(self.grow(outcome.left, min_leaf, tries, rng)),
                right: Box::new(self.grow(outcome.right, min_leaf, tries, rng)),
            },
        }
    }
}

struct NodeMasses {
    len: usize,
    width: usize,
    pos: Vec<f64>,
    tot: Vec<f64>,
    parent_pos: Vec<f64>,
    parent_tot: Vec<f64>,
}

impl NodeMasses {
    fn gain(&self, left_pos: &[f64], left_tot: &[f64]) -> f64 {
        let mut total = 0.0;
        for ti in 0..self.width {
            let parent = ClassMass {
                pos: self.parent_pos[ti],
                neg: self.parent_tot[ti] - self.parent_pos[ti],
            };
            let left = ClassMass {
                pos: left_pos[ti],
                neg: left_tot[ti] - left_pos[ti],
            };
            let right = ClassMass {
                pos: parent.pos - left.pos,
                neg: (self.parent_tot[ti] - left_tot[ti]) - (parent.pos - left.pos),
            };
            total += single_tag_gain(parent, left, right);
        }
        total
    }
}

/// Trains `config.tree_count` trees over the full sample set; tree `t` uses
/// seed `seed + t`, so the forest is reproducible and independent of how the
/// trees are scheduled across threads.
pub fn train_forest(dataset: &Dataset, config: &ForestConfig, seed: u64) -> Result<HmlForest> {
    if config.tree_count == 0 {
        return Err(Error::InvalidInput("tree count must be positive".into()));
    }
    if config.min_leaf == 0 {
        return Err(Error::InvalidInput("leaf size must be positive".into()));
    }
    let inputs = TrainingInputs::prepare(
        &dataset.features,
        &dataset.tags,
        &dataset.hierarchy,
        config.mode,
    )?;
    let trees: Vec<TreeNode> = (0..config.tree_count)
        .into_par_iter()
        .map(|t| inputs.train_tree(config, seed.wrapping_add(t as u64)))
        .collect();
    Ok(HmlForest {
        trees,
        sample_count: dataset.n(),
        seed,
        config: config.clone(),
    })
}

/// Convenience wrapper training a single tree.
pub fn train_tree(dataset: &Dataset, config: &ForestConfig, seed: u64) -> Result<TreeNode> {
    let inputs = TrainingInputs::prepare(
        &dataset.features,
        &dataset.tags,
        &dataset.hierarchy,
        config.mode,
    )?;
    Ok(inputs.train_tree(config, seed))
}

const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    version: u32,
    sample_count: usize,
    seed: u64,
    config: ForestConfig,
    trees: Vec<Vec<FlatNode>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FlatNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        samples: Vec<usize>,
    },
}

fn flatten(node: &TreeNode, out: &mut Vec<FlatNode>) -> usize {
    match node {
        TreeNode::Leaf { samples } => {
            out.push(FlatNode::Leaf {
                samples: samples.clone(),
            });
            out.len() - 1
        }
        TreeNode::Internal { split, left, right } => {
            let idx = out.len();
            out.push(FlatNode::Internal {
                feature: split.feature,
                threshold: split.threshold,
                left: 0,
                right: 0,
            });
            let l = flatten(left, out);
            let r = flatten(right, out);
            if let FlatNode::Internal { left, right, .. } = &mut out[idx] {
                *left = l;
                *right = r;
            }
            idx
        }
    }
}

fn unflatten(nodes: &[FlatNode], idx: usize) -> Result<TreeNode> {
    match nodes.get(idx) {
        None => Err(Error::InvalidInput(format!(
            "forest file references missing node {idx}"
        ))),
        Some(FlatNode::Leaf { samples }) => Ok(TreeNode::Leaf {
            samples: samples.clone(),
        }),
        Some(FlatNode::Internal {
            feature,
            threshold,
            left,
            right,
        }) => {
            if *left <= idx || *right <= idx {
                return Err(Error::InvalidInput(
                    "forest file contains a node cycle".into(),
                ));
            }
            Ok(TreeNode::Internal {
                split: SplitParams {
                    feature: *feature,
                    threshold: *threshold,
                },
                left: Box::new(unflatten(nodes, *left)?),
                right: Box::new(unflatten(nodes, *right)?),
            })
        }
    }
}

impl HmlForest {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Versioned JSON dump: each tree is a preorder node list.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ForestFile {
            version: FOREST_FORMAT_VERSION,
            sample_count: self.sample_count,
            seed: self.seed,
            config: self.config.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| {
                    let mut nodes = Vec::new();
                    flatten(t, &mut nodes);
                    nodes
                })
                .collect(),
        };
        let mut text = serde_json::to_string(&file)
            .map_err(|e| Error::InvalidInput(format!("forest serialization: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ForestFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if file.version != FOREST_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported forest format version {}",
                file.version
            )));
        }
        let trees = file
            .trees
            .iter()
            .map(|nodes| unflatten(nodes, 0))
            .collect::<Result<Vec<_>>>()?;
        let forest = HmlForest {
            trees,
            sample_count: file.sample_count,
            seed: file.seed,
            config: file.config,
        };
        forest.validate_partitions()?;
        Ok(forest)
    }

    /// Every tree's leaves must partition `0..sample_count`.
    pub fn validate_partitions(&self) -> Result<()> {
        for (t, tree) in self.trees.iter().enumerate() {
            let mut seen = vec![false; self.sample_count];
            for leaf in tree.leaves() {
                if leaf.is_empty() {
                    return Err(Error::InvalidInput(format!("tree {t} has an empty leaf")));
                }
                for &s in leaf {
                    if s >= self.sample_count || seen[s] {
                        return Err(Error::InvalidInput(format!(
                            "tree {t} leaves do not partition the sample set"
                        )));
                    }
                    seen[s] = true;
                }
            }
            if seen.iter().any(|&b| !b) {
                return Err(Error::InvalidInput(format!(
                    "tree {t} leaves do not cover the sample set"
                )));
            }
        }
        Ok(())
    }
}
