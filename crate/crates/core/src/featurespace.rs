//! Structural-path feature space: vocabulary construction, binary
//! feature extraction, per-subtree index ranges, and distance metrics.
//!
//! Paths are sorted component-wise, so every root-child subtree owns one
//! contiguous index range and the ranges partition `[0, dim)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::doctree::{DocTree, StructuralPath};

pub type Result<T> = std::result::Result<T, FeatError>;

#[derive(Debug, thiserror::Error)]
pub enum FeatError {
    #[error("no structural path meets the document-frequency threshold {0}")]
    EmptyVocabulary(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("bad vocabulary file: {0}")]
    BadVocabularyFile(String),
}

/// Structural-path vocabulary with per-subtree contiguous index ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    paths: Vec<StructuralPath>,
    index: BTreeMap<StructuralPath, usize>,
    ranges: BTreeMap<String, (usize, usize)>,
    subtree_of: Vec<String>,
}

impl Vocabulary {
    /// Builds the vocabulary from a corpus: all structural paths occurring
    /// in at least `min_df` trees, sorted, with ranges derived from the
    /// root-child prefix.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a DocTree>, min_df: usize) -> Result<Self> {
        let min_df = min_df.max(1);
        let mut df: BTreeMap<StructuralPath, usize> = BTreeMap::new();
        for tree in corpus {
            for path in tree.path_set() {
                *df.entry(path).or_insert(0) += 1;
            }
        }
        let paths: Vec<StructuralPath> = df
            .into_iter()
            .filter(|(_, n)| *n >= min_df)
            .map(|(p, _)| p)
            .collect();
        Self::from_paths(paths, min_df)
    }

    fn from_paths(mut paths: Vec<StructuralPath>, min_df: usize) -> Result<Self> {
        paths.sort();
        paths.dedup();
        if paths.is_empty() {
            return Err(FeatError::EmptyVocabulary(min_df));
        }
        let mut ranges: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut subtree_of = Vec::with_capacity(paths.len());
        for (i, p) in paths.iter().enumerate() {
            let name = p
                .subtree_name()
                .expect("vocabulary paths are non-root")
                .to_string();
            let entry = ranges.entry(name.clone()).or_insert((i, i));
            entry.1 = i + 1;
            subtree_of.push(name);
        }
        let index = paths.iter().cloned().zip(0..).collect();
        Ok(Vocabulary {
            paths,
            index,
            ranges,
            subtree_of,
        })
    }

    pub fn dim(&self) -> usize {
        self.paths.len()
    }

    /// Number of root-child subtree slots in the feature space.
    pub fn n_subtrees(&self) -> usize {
        self.ranges.len()
    }

    pub fn paths(&self) -> &[StructuralPath] {
        &self.paths
    }

    pub fn index_of(&self, path: &StructuralPath) -> Option<usize> {
        self.index.get(path).copied()
    }

    /// `[start, end)` index range of a root-child subtree.
    pub fn range(&self, subtree: &str) -> Option<(usize, usize)> {
        self.ranges.get(subtree).copied()
    }

    /// Subtree names in index order (also lexicographic).
    pub fn subtree_names(&self) -> Vec<&str> {
        self.ranges.keys().map(String::as_str).collect()
    }

    pub fn subtree_of_index(&self, i: usize) -> &str {
        &self.subtree_of[i]
    }

    /// Serializes to the vocabulary file format: a header with the
    /// dimension and subtree count, then one path per line in index order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "dim={} n_subtrees={}\n",
            self.dim(),
            self.n_subtrees()
        ));
        for p in &self.paths {
            out.push_str(&p.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the vocabulary file format. Lines starting with `#` are
    /// ignored (provenance comments).
    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| FeatError::BadVocabularyFile("empty file".into()))?;
        let mut dim = None;
        let mut n_subtrees = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("dim=") {
                dim = v.parse::<usize>().ok();
            }
            if let Some(v) = field.strip_prefix("n_subtrees=") {
                n_subtrees = v.parse::<usize>().ok();
            }
        }
        let (dim, n_subtrees) = match (dim, n_subtrees) {
            (Some(d), Some(n)) => (d, n),
            _ => {
                return Err(FeatError::BadVocabularyFile(format!(
                    "bad header line: {header}"
                )))
            }
        };
        let mut paths = Vec::with_capacity(dim);
        for line in lines {
            let p: StructuralPath = line
                .trim()
                .parse()
                .map_err(|e| FeatError::BadVocabularyFile(format!("{e}")))?;
            paths.push(p);
        }
        if paths.len() != dim {
            return Err(FeatError::BadVocabularyFile(format!(
                "header says dim={dim} but {} paths listed",
                paths.len()
            )));
        }
        if !paths.windows(2).all(|w| w[0] < w[1]) {
            return Err(FeatError::BadVocabularyFile(
                "paths are not strictly sorted".into(),
            ));
        }
        let vocab = Self::from_paths(paths, 1)?;
        if vocab.n_subtrees() != n_subtrees {
            return Err(FeatError::BadVocabularyFile(format!(
                "header says n_subtrees={n_subtrees} but ranges give {}",
                vocab.n_subtrees()
            )));
        }
        Ok(vocab)
    }

    /// Stable content hash, recorded in model metadata.
    pub fn content_hash(&self) -> String {
        crate::util::sha256_hex(self.to_file_string().as_bytes())
    }
}

/// Dense binary feature vector backed by 64-bit blocks.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FeatureVector {
    len: usize,
    blocks: Vec<u64>,
}

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        FeatureVector {
            len,
            blocks: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            v.set(i, true);
        }
        v
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in indices {
            v.set(i, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.blocks[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        if value {
            self.blocks[i / 64] |= 1 << (i % 64);
        } else {
            self.blocks[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Indices of the set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|i| self.get(*i))
    }

    /// Sets every bit in `[start, end)` to `value`.
    pub fn fill_range(&mut self, start: usize, end: usize, value: bool) {
        for i in start..end {
            self.set(i, value);
        }
    }

    pub fn with_range(&self, start: usize, end: usize, value: bool) -> FeatureVector {
        let mut v = self.clone();
        v.fill_range(start, end, value);
        v
    }

    pub fn with_bit(&self, i: usize, value: bool) -> FeatureVector {
        let mut v = self.clone();
        v.set(i, value);
        v
    }

    /// Elementwise `self <= other`.
    pub fn le(&self, other: &FeatureVector) -> bool {
        self.len == other.len
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a & !b == 0)
    }

    /// Sparse line form: set-bit indices separated by spaces.
    pub fn to_sparse_string(&self) -> String {
        self.iter_ones()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Sparse {
            len: usize,
            ones: Vec<usize>,
        }
        Sparse {
            len: self.len,
            ones: self.iter_ones().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Sparse {
            len: usize,
            ones: Vec<usize>,
        }
        let s = Sparse::deserialize(d)?;
        if let Some(&bad) = s.ones.iter().find(|i| **i >= s.len) {
            return Err(serde::de::Error::custom(format!(
                "bit index {bad} out of range for len {}",
                s.len
            )));
        }
        Ok(FeatureVector::from_indices(s.len, s.ones))
    }
}

/// Binary bag-of-path features: bit `i` is set iff the vocabulary's
/// `i`-th path occurs in the tree. Out-of-vocabulary paths are ignored.
pub fn extract_features(tree: &DocTree, vocab: &Vocabulary) -> FeatureVector {
    let mut v = FeatureVector::zeros(vocab.dim());
    for path in tree.path_set() {
        if let Some(i) = vocab.index_of(&path) {
            v.set(i, true);
        }
    }
    v
}

/// Subtree distance: the number of root-child slots at which the two
/// trees' full subtrees are not structurally identical. A subtree present
/// on one side only counts as different. Insertions, deletions, and
/// modifications within one slot each count that slot once.
pub fn subtree_distance(a: &DocTree, b: &DocTree) -> usize {
    let fp = |tree: &DocTree, name: &str| -> Option<String> {
        tree.node(tree.root())
            .and_then(|n| n.dict_get(name))
            .map(|id| tree.fingerprint(id))
    };
    let names: BTreeSet<String> = a
        .root_child_names()
        .into_iter()
        .chain(b.root_child_names())
        .collect();
    names
        .iter()
        .filter(|name| fp(a, name) != fp(b, name))
        .count()
}

/// Hamming distance between two feature vectors of the same vocabulary.
pub fn l0_distance(x: &FeatureVector, y: &FeatureVector) -> Result<usize> {
    if x.len != y.len {
        return Err(FeatError::DimensionMismatch(x.len, y.len));
    }
    Ok(x.blocks
        .iter()
        .zip(&y.blocks)
        .map(|(a, b)| (a ^ b).count_ones() as usize)
        .sum())
}
