//! Realization: converting an evasive feature vector back into a
//! concrete document by deleting objects and grafting donor objects.

use crate::doctree::DocTree;
use crate::featurespace::{extract_features, l0_distance, FeatureVector, Vocabulary};

use super::{AttackError, GenomeTrie, Result};

pub struct Realization {
    pub tree: DocTree,
    /// Hamming distance between the target vector and the features the
    /// realized document actually extracts to.
    pub residual_l0: usize,
}

/// Realizes `target` from `seed_tree`: paths whose bit drops are
/// deleted; paths whose bit rises are grafted from the donor object with
/// the minimal node count at that path. Errors when a needed path has no
/// donor.
pub fn realize_vector(
    seed_tree: &DocTree,
    target: &FeatureVector,
    vocab: &Vocabulary,
    donors: &GenomeTrie,
) -> Result<Realization> {
    let mut tree = seed_tree.clone();
    // deletions first: clearing a parent clears its descendants too
    for (i, path) in vocab.paths().iter().enumerate() {
        if target.get(i) {
            continue;
        }
        if !tree.nodes_at(path).is_empty() {
            tree = tree.delete_subtree(path)?;
        }
    }
    // insertions by ascending path length so parents are planted first
    let mut wanted: Vec<usize> = (0..vocab.dim()).filter(|i| target.get(*i)).collect();
    wanted.sort_by_key(|i| vocab.paths()[*i].len());
    for i in wanted {
        let path = &vocab.paths()[i];
        if !tree.nodes_at(path).is_empty() {
            continue;
        }
        let genome = donors
            .min_size_at(path)
            .ok_or_else(|| AttackError::NoDonorForPath(path.clone()))?;
        tree = tree.graft_at(path, &genome.subtree)?;
    }
    let achieved = extract_features(&tree, vocab);
    let residual_l0 = l0_distance(target, &achieved).expect("same vocabulary");
    Ok(Realization { tree, residual_l0 })
}
