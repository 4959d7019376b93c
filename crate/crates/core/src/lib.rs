//! Workbench for training, formally verifying, and attacking robust
//! classifiers over structured documents.
//!
//! The pipeline is organized in layers:
//!
//! * [`doctree`] — parse, represent, mutate, and serialize PDF-like
//!   document trees, plus the static maliciousness proxy oracle.
//! * [`featurespace`] — structural-path vocabularies, binary feature
//!   vectors, and the subtree distance metric.
//! * [`properties`] — robustness properties expressed as box regions
//!   over feature vectors.
//! * [`mlp`] — from-scratch feed-forward ReLU network with analytic
//!   gradients and an Adam optimizer.
//! * [`verify`] — sound output-bound propagation (naive interval and
//!   symbolic linear relaxation), region verification, and the
//!   differentiable worst-case loss.
//! * [`train`] — regular, verifiably robust, and adversarial training,
//!   plus evaluation metrics.
//! * [`baselines`] — monotone gradient-boosted ensembles, ensemble
//!   wrappers, their specialized verification procedures, and the exact
//!   minimal-deletion evasion solver.
//! * [`attacks`] — the bounded/unbounded attacker hierarchy: gradient,
//!   evolutionary (plus adaptive variants), reverse mimicry, and
//!   vector-to-document realization.
//! * [`synth`] — seeded synthetic corpus generation for desk-scale
//!   experiments.

pub mod attacks;
// pub mod baselines;
pub mod doctree;
pub mod featurespace;
pub mod mlp;
pub mod properties;
// pub mod synth;
pub mod train;
pub mod util;
pub mod verify;
