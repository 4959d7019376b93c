//! Genetic evasion engine. Each generation mutates every variant with
//! delete/insert/replace operations (donor genomes drawn from the trie
//! by path prefix), filters variants that lose proxy maliciousness, and
//! refills dead slots from three equal shares of historical variants.
//! Rounds restart the population from the seed until the budget runs
//! out. Adaptive policies add the move-exploit mutation and/or scatter
//! subtree weighting on top of the same engine.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doctree::{is_malicious_proxy, DocTree, ExploitMarker, StructuralPath};
use crate::featurespace::{extract_features, l0_distance, FeatureVector, Vocabulary};

use super::{AttackResult, GenomeTrie, Result, TargetModel, TraceOp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    /// Variants per generation.
    pub population: usize,
    /// Generations per round.
    pub max_generations: usize,
    /// Attack succeeds when the fitness score reaches this threshold.
    pub fitness_threshold: f64,
    /// Per-node mutation probability.
    pub mutation_rate: f64,
    pub seed: u64,
    /// Random-share replacement pool covers this many recent generations.
    pub pool_window: usize,
    /// Rounds (population restarts) before giving up.
    pub max_rounds: usize,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population: 48,
            max_generations: 20,
            fitness_threshold: 0.0,
            mutation_rate: 0.1,
            seed: 0,
            pool_window: 4,
            max_rounds: 3,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum MutKind {
    Delete,
    Insert,
    Replace,
    Move,
}

#[derive(Clone, Debug)]
struct MutationPolicy {
    ops: Vec<MutKind>,
    scatter: bool,
}

#[derive(Clone)]
struct Variant {
    tree: DocTree,
    trace: Vec<TraceOp>,
    features: FeatureVector,
    fitness: f64,
    malicious: bool,
}

/// Enhanced evolutionary attack with the base mutation set.
pub fn evolutionary_attack(
    model: &dyn TargetModel,
    vocab: &Vocabulary,
    seed_tree: &DocTree,
    donors: &GenomeTrie,
    cfg: &EvoConfig,
    marker: &ExploitMarker,
) -> Result<AttackResult> {
    run_evolution(
        model,
        vocab,
        seed_tree,
        donors,
        cfg,
        marker,
        MutationPolicy {
            ops: vec![MutKind::Delete, MutKind::Insert, MutKind::Replace],
            scatter: false,
        },
        "evolutionary",
    )
}

/// Adaptive variant: combines the move-exploit mutation with deletion.
pub fn move_exploit_attack(
    model: &dyn TargetModel,
    vocab: &Vocabulary,
    seed_tree: &DocTree,
    donors: &GenomeTrie,
    cfg: &EvoConfig,
    marker: &ExploitMarker,
) -> Result<AttackResult> {
    run_evolution(
        model,
        vocab,
        seed_tree,
        donors,
        cfg,
        marker,
        MutationPolicy {
            ops: vec![MutKind::Delete, MutKind::Move],
            scatter: false,
        },
        "move-exploit",
    )
}

/// Adaptive variant: prioritizes insertions and deletions that target a
/// subtree not yet touched by the same kind of operation.
pub fn scatter_attack(
    model: &dyn TargetModel,
    vocab: &Vocabulary,
    seed_tree: &DocTree,
    donors: &GenomeTrie,
    cfg: &EvoConfig,
    marker: &ExploitMarker,
) -> Result<AttackResult> {
    run_evolution(
        model,
        vocab,
        seed_tree,
        donors,
        cfg,
        marker,
        MutationPolicy {
            ops: vec![MutKind::Delete, MutKind::Insert, MutKind::Replace],
            scatter: true,
        },
        "scatter",
    )
}

/// Adaptive variant: both the move-exploit mutation and scatter
/// weighting are active.
pub fn move_scatter_attack(
    model: &dyn TargetModel,
    vocab: &Vocabulary,
    seed_tree: &DocTree,
    donors: &GenomeTrie,
    cfg: &EvoConfig,
    marker: &ExploitMarker,
) -> Result<AttackResult> {
    run_evolution(
        model,
        vocab,
        seed_tree,
        donors,
        cfg,
        marker,
        MutationPolicy {
            ops: vec![MutKind::Delete, MutKind::Insert, MutKind::Replace, MutKind::Move],
            scatter: true,
        },
        "move-scatter",
    )
}

#[allow(clippy::too_many_arguments)]
fn run_evolution(
    model: &dyn TargetModel,
    vocab: &Vocabulary,
    seed_tree: &DocTree,
    donors: &GenomeTrie,
    cfg: &EvoConfig,
    marker: &ExploitMarker,
    policy: MutationPolicy,
    name: &str,
) -> Result<AttackResult> {
    if !is_malicious_proxy(seed_tree, marker) {
        return Err(super::AttackError::SeedNotMalicious);
    }
    let seed_features = extract_features(seed_tree, vocab);
    let seed_fitness = model.fitness(&seed_features);
    if model.is_benign(&seed_features) && seed_fitness >= cfg.fitness_threshold {
        // already evasive: trivial success at zero distance
        return Ok(AttackResult {
            attack: name.to_string(),
            seed_id: None,
            success: true,
            evasive_features: Some(seed_features),
            evasive_tree: Some(seed_tree.clone()),
            l0_distance: Some(0),
            iterations: 0,
            mutation_trace: Vec::new(),
            still_malicious: Some(true),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed_variant = Variant {
        tree: seed_tree.clone(),
        trace: Vec::new(),
        features: seed_features.clone(),
        fitness: seed_fitness,
        malicious: true,
    };
    let mut evaluations = 0usize;
    for _round in 0..cfg.max_rounds {
        let mut population: Vec<Variant> = vec![seed_variant.clone(); cfg.population];
        let mut history: Vec<Variant> = Vec::new();
        let mut recent: Vec<Vec<Variant>> = Vec::new();
        for _generation in 1..=cfg.max_generations {
            let mut offspring = Vec::with_capacity(cfg.population);
            for parent in &population {
                let (tree, trace) =
                    mutate(parent, vocab, donors, marker, &policy, cfg.mutation_rate, &mut rng);
                let features = extract_features(&tree, vocab);
                let fitness = model.fitness(&features);
                let malicious = is_malicious_proxy(&tree, marker);
                evaluations += 1;
                let variant = Variant {
                    tree,
                    trace,
                    features,
                    fitness,
                    malicious,
                };
                if variant.malicious
                    && model.is_benign(&variant.features)
                    && variant.fitness >= cfg.fitness_threshold
                {
                    let l0 = l0_distance(&seed_features, &variant.features)
                        .expect("same vocabulary");
                    return Ok(AttackResult {
                        attack: name.to_string(),
                        seed_id: None,
                        success: true,
                        evasive_features: Some(variant.features),
                        evasive_tree: Some(variant.tree),
                        l0_distance: Some(l0),
                        iterations: evaluations,
                        mutation_trace: variant.trace,
                        still_malicious: Some(true),
                    });
                }
                offspring.push(variant);
            }
            let survivors: Vec<Variant> = offspring
                .iter()
                .filter(|v| v.malicious)
                .cloned()
                .collect();
            history.extend(survivors.iter().cloned());
            recent.push(survivors.clone());
            if recent.len() > cfg.pool_window {
                recent.remove(0);
            }
            let dead = cfg.population - survivors.len();
            let replacements =
                replacements_by_shares(dead, &history, &recent, &seed_variant, &mut rng);
            population = survivors;
            population.extend(replacements);
        }
    }
    let mut result = AttackResult::failure(name);
    result.iterations = evaluations;
    result.still_malicious = Some(true);
    Ok(result)
}

/// Dead slots are refilled equally by three shares: the best historical
/// variant, historical variants with distinct highest fitness scores,
/// and random picks from the recent-generation pool plus the seed.
fn replacements_by_shares(
    dead: usize,
    history: &[Variant],
    recent: &[Vec<Variant>],
    seed_variant: &Variant,
    rng: &mut ChaCha8Rng,
) -> Vec<Variant> {
    let mut out = Vec::with_capacity(dead);
    if dead == 0 {
        return out;
    }
    let s1 = dead / 3;
    let s2 = dead / 3;
    let s3 = dead - s1 - s2;
    let best = history
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.fitness
                .partial_cmp(&b.fitness)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib)) // tie: most recent wins
        })
        .map(|(_, v)| v)
        .unwrap_or(seed_variant);
    for _ in 0..s1 {
        out.push(best.clone());
    }
    // distinct fitness scores, highest first, recency breaking ties
    let mut ranked: Vec<&Variant> = history.iter().collect();
    ranked.reverse(); // recency first, stable sort keeps it within equal fitness
    ranked.sort_by(|a, b| {
        b.fitness
            .partial_cmp(&a.fitness)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut distinct: Vec<&Variant> = Vec::new();
    let mut seen = BTreeSet::new();
    for v in ranked {
        if seen.insert(v.fitness.to_bits()) {
            distinct.push(v);
        }
    }
    if distinct.is_empty() {
        distinct.push(seed_variant);
    }
    for k in 0..s2 {
        out.push(distinct[k % distinct.len()].clone());
    }
    let mut pool: Vec<&Variant> = recent.iter().flatten().collect();
    pool.push(seed_variant);
    for _ in 0..s3 {
        let pick = rng.random_range(0..pool.len());
        out.push(pool[pick].clone());
    }
    out
}

/// Subtrees already touched by insert-like and delete-like operations,
/// recomputed from the variant's trace for the scatter policy.
fn touched_subtrees(trace: &[TraceOp]) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ins = BTreeSet::new();
    let mut del = BTreeSet::new();
    for op in trace {
        match op {
            TraceOp::Insert { subtree, .. } => {
                ins.insert(subtree.clone());
            }
            TraceOp::Replace { subtree, .. } => {
                ins.insert(subtree.clone());
                del.insert(subtree.clone());
            }
            TraceOp::Delete { path } => {
                if let Some(name) = path.subtree_name() {
                    del.insert(name.to_string());
                }
            }
            _ => {}
        }
    }
    (ins, del)
}

/// One mutation sweep over a variant: every non-root node of its tree is
/// mutated independently with probability `mutation_rate`. Decisions are
/// made against a snapshot of the tree; operations apply sequentially
/// and silently skip targets that earlier operations removed.
#[allow(clippy::too_many_arguments)]
fn mutate(
    parent: &Variant,
    vocab: &Vocabulary,
    donors: &GenomeTrie,
    marker: &ExploitMarker,
    policy: &MutationPolicy,
    mutation_rate: f64,
    rng: &mut ChaCha8Rng,
) -> (DocTree, Vec<TraceOp>) {
    let subtree_count = vocab.n_subtrees();
    let (mut ins_touched, mut del_touched) = touched_subtrees(&parent.trace);
    let mut planned: Vec<(StructuralPath, MutKind)> = Vec::new();
    let snapshot = &parent.tree;
    for id in &snapshot.span().order {
        if !rng.random_bool(mutation_rate) {
            continue;
        }
        let op = policy.ops[rng.random_range(0..policy.ops.len())];
        let path = snapshot.path_of(*id).expect("span order").clone();
        planned.push((path, op));
    }
    // strict scatter rule: while some subtree is untouched by this kind
    // of operation, skip operations that would re-touch one
    let blocked = |touched: &BTreeSet<String>, name: &str| {
        touched.contains(name) && touched.len() < subtree_count
    };
    let mut tree = parent.tree.clone();
    let mut trace = parent.trace.clone();
    for (path, op) in planned {
        match op {
            MutKind::Delete => {
                if policy.scatter {
                    match path.subtree_name() {
                        Some(name) if blocked(&del_touched, name) => continue,
                        _ => {}
                    }
                }
                if tree.delete_subtree(&path).map(|t| tree = t).is_ok() {
                    if let Some(name) = path.subtree_name() {
                        del_touched.insert(name.to_string());
                    }
                    trace.push(TraceOp::Delete { path });
                }
            }
            MutKind::Insert => {
                let host_ok = tree.nodes_at(&path).iter().any(|id| {
                    let n = tree.node(*id).expect("indexed node");
                    n.is_dict_like()
                        || matches!(n.payload, crate::doctree::NodePayload::Array(_))
                });
                if !host_ok {
                    continue;
                }
                if policy.scatter {
                    match path.subtree_name() {
                        Some(name) if blocked(&ins_touched, name) => continue,
                        _ => {}
                    }
                }
                let mut candidates: Vec<usize> = donors.children_of(&path).to_vec();
                if candidates.is_empty() && !donors.is_empty() {
                    candidates = (0..donors.len()).collect();
                }
                if policy.scatter && path.is_root() && ins_touched.len() < subtree_count {
                    // at the root the affected subtree is the genome key:
                    // prefer genomes opening an untouched subtree
                    let fresh: Vec<usize> = candidates
                        .iter()
                        .copied()
                        .filter(|i| {
                            donors.genome(*i)
                                .subtree
                                .key
                                .as_deref()
                                .map(|k| !ins_touched.contains(k))
                                .unwrap_or(false)
                        })
                        .collect();
                    if fresh.is_empty() {
                        continue;
                    }
                    candidates = fresh;
                }
                if candidates.is_empty() {
                    continue;
                }
                let idx = candidates[rng.random_range(0..candidates.len())];
                let genome = donors.genome(idx);
                let affected = path
                    .subtree_name()
                    .map(str::to_string)
                    .or_else(|| genome.subtree.key.clone())
                    .unwrap_or_default();
                if tree
                    .insert_subtree(&path, &genome.subtree)
                    .map(|t| tree = t)
                    .is_ok()
                {
                    ins_touched.insert(affected.clone());
                    trace.push(TraceOp::Insert {
                        parent: path,
                        genome: idx,
                        subtree: affected,
                    });
                }
            }
            MutKind::Replace => {
                if policy.scatter {
                    match path.subtree_name() {
                        Some(name)
                            if blocked(&ins_touched, name) || blocked(&del_touched, name) =>
                        {
                            continue
                        }
                        _ => {}
                    }
                }
                let candidates = donors.exact(&path);
                if candidates.is_empty() {
                    continue;
                }
                let idx = candidates[rng.random_range(0..candidates.len())];
                let genome = donors.genome(idx);
                let affected = path.subtree_name().map(str::to_string).unwrap_or_default();
                if tree
                    .replace_subtree(&path, &genome.subtree)
                    .map(|t| tree = t)
                    .is_ok()
                {
                    ins_touched.insert(affected.clone());
                    del_touched.insert(affected.clone());
                    trace.push(TraceOp::Replace {
                        path,
                        genome: idx,
                        subtree: affected,
                    });
                }
            }
            MutKind::Move => {
                let from = marker
                    .trigger_points
                    .iter()
                    .find(|p| {
                        tree.nodes_at(p)
                            .iter()
                            .any(|id| tree.fingerprint(*id) == marker.payload_fingerprint)
                    })
                    .cloned();
                let Some(from) = from else { continue };
                let targets: Vec<&StructuralPath> = marker
                    .trigger_points
                    .iter()
                    .filter(|p| **p != from)
                    .collect();
                if targets.is_empty() {
                    continue;
                }
                let to = targets[rng.random_range(0..targets.len())].clone();
                if tree.move_exploit(&from, &to).map(|t| tree = t).is_ok() {
                    trace.push(TraceOp::MoveExploit { from, to });
                }
            }
        }
    }
    (tree, trace)
}

/// Replays a recorded mutation trace against the seed tree. Bit-level
/// ops are ignored (they do not apply to trees).
pub fn apply_trace(
    seed_tree: &DocTree,
    donors: &GenomeTrie,
    trace: &[TraceOp],
) -> Result<DocTree> {
    let mut tree = seed_tree.clone();
    for op in trace {
        match op {
            TraceOp::Delete { path } => tree = tree.delete_subtree(path)?,
            TraceOp::Insert { parent, genome, .. } => {
                tree = tree.insert_subtree(parent, &donors.genome(*genome).subtree)?
            }
            TraceOp::Replace { path, genome, .. } => {
                tree = tree.replace_subtree(path, &donors.genome(*genome).subtree)?
            }
            TraceOp::MoveExploit { from, to } => tree = tree.move_exploit(from, to)?,
            TraceOp::SetBit { .. } | TraceOp::ClearBit { .. } => {}
        }
    }
    Ok(tree)
}
