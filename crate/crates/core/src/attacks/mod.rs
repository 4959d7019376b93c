//! The attacker hierarchy: bounded and unbounded gradient attacks,
//! the enhanced evolutionary attack and its adaptive variants, reverse
//! mimicry, and feature-vector-to-document realization.

mod evolution;
mod genomes;
mod gradient;
mod mimicry;
mod realize;
mod report;

use serde::{Deserialize, Serialize};

use crate::doctree::{DocTree, StructuralPath};
use crate::featurespace::FeatureVector;
use crate::mlp::{self, MlpModel};

pub use evolution::{
    apply_trace, evolutionary_attack, move_exploit_attack, move_scatter_attack, scatter_attack,
    EvoConfig,
};
pub use genomes::{Genome, GenomeTrie};
pub use gradient::{bounded_gradient_attack, unbounded_gradient_attack};
pub use mimicry::{extract_payload, reverse_mimicry, ExtractedPayload};
pub use realize::{realize_vector, Realization};
pub use report::{attack_report, curves_to_csv, era_vs_l0, era_vs_trace_len, render_svg, EraCurve};

pub type Result<T> = std::result::Result<T, AttackError>;

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("no donor object available for path {0}")]
    NoDonorForPath(StructuralPath),
    #[error("trigger path unavailable: {0}")]
    TriggerPathUnavailable(StructuralPath),
    #[error("seed document is not proxy-malicious")]
    SeedNotMalicious,
    #[error(transparent)]
    Doc(#[from] crate::doctree::DocError),
    #[error(transparent)]
    Model(#[from] crate::mlp::MlpError),
}

/// Model surface the black-box attacks drive: a fitness margin (benign
/// minus malicious) and the benign verdict derived from it.
pub trait TargetModel: Sync {
    /// log(prob benign) - log(prob malicious); higher is more benign.
    fn fitness(&self, x: &FeatureVector) -> f64;
    /// Whether the model classifies `x` as benign.
    fn is_benign(&self, x: &FeatureVector) -> bool;
}

impl TargetModel for MlpModel {
    fn fitness(&self, x: &FeatureVector) -> f64 {
        mlp::fitness_score(self, &mlp::features_to_array(x).view())
            .expect("attack feature vectors match the model input dimension")
    }

    fn is_benign(&self, x: &FeatureVector) -> bool {
        // ties broken toward benign, matching the fitness stop rule
        self.fitness(x) >= 0.0
    }
}

/// One recorded attack operation; traces replay deterministically via
/// [`apply_trace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TraceOp {
    SetBit {
        index: usize,
    },
    ClearBit {
        index: usize,
    },
    Delete {
        path: StructuralPath,
    },
    Insert {
        parent: StructuralPath,
        genome: usize,
        subtree: String,
    },
    Replace {
        path: StructuralPath,
        genome: usize,
        subtree: String,
    },
    MoveExploit {
        from: StructuralPath,
        to: StructuralPath,
    },
}

/// Outcome of one attack run against one seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: String,
    pub seed_id: Option<String>,
    pub success: bool,
    pub evasive_features: Option<FeatureVector>,
    #[serde(skip)]
    pub evasive_tree: Option<DocTree>,
    pub l0_distance: Option<usize>,
    pub iterations: usize,
    pub mutation_trace: Vec<TraceOp>,
    pub still_malicious: Option<bool>,
}

impl AttackResult {
    pub fn failure(attack: &str) -> Self {
        AttackResult {
            attack: attack.to_string(),
            seed_id: None,
            success: false,
            evasive_features: None,
            evasive_tree: None,
            l0_distance: None,
            iterations: 0,
            mutation_trace: Vec::new(),
            still_malicious: None,
        }
    }

    pub fn with_seed_id(mut self, id: &str) -> Self {
        self.seed_id = Some(id.to_string());
        self
    }
}
