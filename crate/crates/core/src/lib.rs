//! Interval-based Bayesian generative networks (IBGN) for complex activity
//! recognition.
//!
//! A complex activity instance is a canonically ordered sequence of atomic
//! action intervals. Each activity class gets its own generative model:
//! nodes pick tables through a Chinese restaurant process and draw actions
//! from per-table multinomials, then links between nodes draw forward Allen
//! relations restricted to constraints that keep the whole network
//! temporally consistent. Classification picks the class whose model scores
//! an instance highest.
//!
//! Module map:
//!
//! - [`algebra`]: the seven forward relations, composition, constraint classes
//! - [`network`]: interval networks, consistency checks, link constraints
//! - [`generative`]: the generative process and timestamp realization
//! - [`learning`]: Gibbs sampling, hyperparameter updates, structure learning
//! - [`classifier`]: per-class scoring and prediction
//! - [`dataset`]: JSONL corpora, folds, perturbations, synthetic corpora
//! - [`bundle`] / [`eval`]: model files and cross-validation reports

pub mod algebra;
pub mod bundle;
pub mod classifier;
pub mod dataset;
pub mod eval;
pub mod generative;
pub mod learning;
pub mod network;
pub mod special;

mod error;

pub use algebra::{
    brute_force_compose, classify_constraint, compose, compose_sets, composition_classes,
    enumerate_composition_classes, intersect, relation_of, BaseRelation, CompositionClass,
    RelationSet,
};
pub use bundle::ModelBundle;
pub use classifier::{predict, score_instance, Prediction};
pub use dataset::{kfold_split, perturb_durations, perturb_labels, Corpus};
pub use error::{Error, Result};
pub use eval::{cross_validate, EvalOptions, EvalReport};
pub use generative::{sample_network, ClassModel, PhiKey};
pub use learning::{fit_class_model, train_class_model, StructureMode, TrainConfig, TrainStats};
pub use network::{
    check_consistency, resolve_links, compute_constraint, instance_to_network, pad_nulls, ActionId, Instance,
    Interval, IntervalNetwork, RelationMatrix, StructureMask,
};
