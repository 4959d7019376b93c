//! Whitebox gradient-guided bit-flip attacks. Both variants greedily
//! flip the feature whose gradient most increases the benign margin,
//! locking each flipped index, until evasion or exhaustion.

use crate::featurespace::{l0_distance, FeatureVector, Vocabulary};
use crate::mlp::{self, MlpModel, CLASS_BENIGN, CLASS_MALICIOUS};
use crate::properties::{regions_for, IntervalRegion, PropertySpec};

use super::{AttackResult, Result, TraceOp};

fn benign_gradient(model: &MlpModel, x: &FeatureVector) -> Vec<f64> {
    // gradient of the benign-minus-malicious logit margin
    let mut d = vec![0.0; 2];
    d[CLASS_BENIGN] = 1.0;
    d[CLASS_MALICIOUS] = -1.0;
    mlp::input_gradient(model, &mlp::features_to_array(x).view(), &d)
        .expect("dimensions checked by caller")
        .to_vec()
}

fn is_benign(model: &MlpModel, x: &FeatureVector) -> bool {
    mlp::fitness_score(model, &mlp::features_to_array(x).view())
        .expect("dimensions checked by caller")
        >= 0.0
}

struct GreedyOutcome {
    success: bool,
    vector: FeatureVector,
    iterations: usize,
    trace: Vec<TraceOp>,
}

/// Greedy flip loop restricted to a region: insertions where the upper
/// bound allows, deletions where the lower bound allows. Every step
/// flips the remaining candidate with the highest benign-gradient gain,
/// locks it, and re-checks the verdict, until the region is exhausted.
fn greedy_in_region(model: &MlpModel, x: &FeatureVector, region: &IntervalRegion) -> GreedyOutcome {
    let mut cur = x.clone();
    let mut locked = vec![false; x.len()];
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    loop {
        if is_benign(model, &cur) {
            return GreedyOutcome {
                success: true,
                vector: cur,
                iterations,
                trace,
            };
        }
        let grad = benign_gradient(model, &cur);
        let mut best: Option<(f64, usize, bool)> = None;
        for i in 0..cur.len() {
            if locked[i] {
                continue;
            }
            let candidate = if !cur.get(i) && region.upper.get(i) {
                Some((grad[i], i, true))
            } else if cur.get(i) && !region.lower.get(i) {
                Some((-grad[i], i, false))
            } else {
                None
            };
            if let Some(c) = candidate {
                let better = match &best {
                    None => true,
                    Some(b) => c.0 > b.0,
                };
                if better {
                    best = Some(c);
                }
            }
        }
        match best {
            Some((_, i, set)) => {
                cur.set(i, set);
                locked[i] = true;
                trace.push(if set {
                    TraceOp::SetBit { index: i }
                } else {
                    TraceOp::ClearBit { index: i }
                });
                iterations += 1;
            }
            None => {
                return GreedyOutcome {
                    success: false,
                    vector: cur,
                    iterations,
                    trace,
                }
            }
        }
    }
}

/// Bounded gradient attack: for each subtree choice of the property, run
/// the greedy flip loop inside that region until evasion or the region
/// is exhausted. Succeeds if any subtree choice succeeds; the resulting
/// vector always lies inside one region of the property.
pub fn bounded_gradient_attack(
    model: &MlpModel,
    x: &FeatureVector,
    vocab: &Vocabulary,
    spec: &PropertySpec,
) -> Result<AttackResult> {
    let regions = regions_for(x, vocab, spec).map_err(|_| crate::mlp::MlpError::DimensionMismatch {
        expected: model.input_dim(),
        got: x.len(),
    })?;
    let name = format!("bounded-gradient-{}", spec.label());
    let mut iterations = 0usize;
    let mut last: Option<GreedyOutcome> = None;
    for region in &regions {
        let outcome = greedy_in_region(model, x, region);
        iterations += outcome.iterations;
        if outcome.success {
            let l0 = l0_distance(x, &outcome.vector).expect("same vocabulary");
            return Ok(AttackResult {
                attack: name,
                seed_id: None,
                success: true,
                evasive_features: Some(outcome.vector),
                evasive_tree: None,
                l0_distance: Some(l0),
                iterations,
                mutation_trace: outcome.trace,
                still_malicious: None,
            });
        }
        last = Some(outcome);
    }
    let mut result = AttackResult::failure(&name);
    result.iterations = iterations;
    if let Some(outcome) = last {
        // on failure the vector sits at the last region's boundary
        result.l0_distance = Some(l0_distance(x, &outcome.vector).expect("same vocabulary"));
        result.evasive_features = Some(outcome.vector);
        result.mutation_trace = outcome.trace;
    }
    Ok(result)
}

/// Unbounded gradient attack: every bit in either direction is fair
/// game. Each iteration flips the not-yet-locked bit with the largest
/// benign-gradient gain; stops on evasion, `max_iters`, or exhaustion.
pub fn unbounded_gradient_attack(
    model: &MlpModel,
    x: &FeatureVector,
    max_iters: usize,
) -> Result<AttackResult> {
    model.check_input(x.len())?;
    let name = "unbounded-gradient";
    let mut cur = x.clone();
    let mut locked = vec![false; x.len()];
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut success = is_benign(model, &cur);
    while !success && iterations < max_iters {
        let grad = benign_gradient(model, &cur);
        let mut best: Option<(f64, usize)> = None;
        for i in 0..cur.len() {
            if locked[i] {
                continue;
            }
            let gain = if cur.get(i) { -grad[i] } else { grad[i] };
            let better = match &best {
                None => true,
                Some(b) => gain > b.0,
            };
            if better {
                best = Some((gain, i));
            }
        }
        let Some((_, i)) = best else { break };
        let set = !cur.get(i);
        cur.set(i, set);
        locked[i] = true;
        trace.push(if set {
            TraceOp::SetBit { index: i }
        } else {
            TraceOp::ClearBit { index: i }
        });
        iterations += 1;
        success = is_benign(model, &cur);
    }
    let l0 = l0_distance(x, &cur).expect("same vocabulary");
    Ok(AttackResult {
        attack: name.to_string(),
        seed_id: None,
        success,
        evasive_features: Some(cur),
        evasive_tree: None,
        l0_distance: Some(l0),
        iterations,
        mutation_trace: trace,
        still_malicious: None,
    })
}
