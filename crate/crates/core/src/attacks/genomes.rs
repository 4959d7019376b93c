//! Prefix index over benign-donor subtrees ("external genomes").
//! Insertions and replacements draw genomes that share the mutation
//! point's path prefix so they actually move vocabulary features.

use std::collections::BTreeMap;

use crate::doctree::{DetachedSubtree, DocTree, StructuralPath};
use crate::featurespace::Vocabulary;

/// One donor subtree, keyed by the structural path it came from.
#[derive(Clone, Debug)]
pub struct Genome {
    pub path: StructuralPath,
    pub subtree: DetachedSubtree,
    pub size: usize,
}

/// Trie-style index: genomes by exact path and by parent path. Only
/// subtrees whose source path is a prefix of some vocabulary path are
/// stored.
#[derive(Clone, Debug, Default)]
pub struct GenomeTrie {
    genomes: Vec<Genome>,
    by_path: BTreeMap<StructuralPath, Vec<usize>>,
    by_parent: BTreeMap<StructuralPath, Vec<usize>>,
}

impl GenomeTrie {
    pub fn build(donors: &[DocTree], vocab: &Vocabulary) -> Self {
        let mut trie = GenomeTrie::default();
        for tree in donors {
            for id in &tree.span().order {
                let path = tree.path_of(*id).expect("span order is reachable").clone();
                if path.is_root() || !vocab_has_prefix(vocab, &path) {
                    continue;
                }
                let key = path.last().map(str::to_string);
                let subtree = tree
                    .detach_subtree(*id, key)
                    .expect("span order is reachable");
                let idx = trie.genomes.len();
                let size = subtree.size();
                trie.by_path.entry(path.clone()).or_default().push(idx);
                if let Some(parent) = path.parent() {
                    trie.by_parent.entry(parent).or_default().push(idx);
                }
                trie.genomes.push(Genome {
                    path,
                    subtree,
                    size,
                });
            }
        }
        trie
    }

    pub fn len(&self) -> usize {
        self.genomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genomes.is_empty()
    }

    pub fn genome(&self, idx: usize) -> &Genome {
        &self.genomes[idx]
    }

    /// Genomes whose source path equals `path`.
    pub fn exact(&self, path: &StructuralPath) -> &[usize] {
        self.by_path.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Genomes insertable directly under a node at `path`.
    pub fn children_of(&self, path: &StructuralPath) -> &[usize] {
        self.by_parent.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Donor at `path` with the fewest nodes (realization prefers the
    /// object with the minimal number of children).
    pub fn min_size_at(&self, path: &StructuralPath) -> Option<&Genome> {
        self.exact(path)
            .iter()
            .map(|i| &self.genomes[*i])
            .min_by_key(|g| g.size)
    }
}

fn vocab_has_prefix(vocab: &Vocabulary, path: &StructuralPath) -> bool {
    // vocabulary paths are sorted; the first path >= `path` starts with
    // it iff any does
    let paths = vocab.paths();
    let at = paths.partition_point(|p| p < path);
    paths.get(at).map(|p| p.starts_with(path)).unwrap_or(false)
}
