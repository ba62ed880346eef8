//! Parameter and structure learning for one class.

mod estimate;
mod gibbs;
mod structure;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use estimate::{estimate_phi, estimate_theta, RelationCounts};
pub use gibbs::{
    crp_factor,
    geweke_z, gibbs_conditional, run_gibbs, table_weights, update_factors, update_hyperparams, GibbsOutput,
    SampleHistory, SamplerState,
};
pub use structure::{bic_family_score, family_counts, learn_structure, BicFamilyCounts, RELATION_VALUES};

use crate::generative::{ClassModel, PhiKey};
use crate::network::{instance_to_network, resolve_links, Instance, StructureMask};
use crate::{Error, Result};

/// How the link structure of a class model is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureMode {
    #[default]
    Learned,
    Chain,
    Full,
}

impl fmt::Display for StructureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureMode::Learned => "learned",
            StructureMode::Chain => "chain",
            StructureMode::Full => "full",
        })
    }
}

impl FromStr for StructureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(StructureMode::Learned),
            "chain" => Ok(StructureMode::Chain),
            "full" => Ok(StructureMode::Full),
            other => Err(Error::ConfigInvalid(format!("unknown structure mode `{other}`"))),
        }
    }
}

/// Which draws the `alpha` fixed-point update treats as
/// Dirichlet-multinomial samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaUpdate {
    /// One draw per sweep: table occupancy summed over the whole corpus.
    Corpus,
    /// One draw per instance and sweep.
    Instance,
    /// Shared concentration fitted to the per-instance CRP partitions.
    #[default]
    Crp,
    /// Keep `alpha` at its initial value.
    Fixed,
}

impl fmt::Display for AlphaUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaUpdate::Corpus => "corpus",
            AlphaUpdate::Instance => "instance",
            AlphaUpdate::Crp => "crp",
            AlphaUpdate::Fixed => "fixed",
        })
    }
}

impl FromStr for AlphaUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corpus" => Ok(AlphaUpdate::Corpus),
            "instance" => Ok(AlphaUpdate::Instance),
            "crp" => Ok(AlphaUpdate::Crp),
            "fixed" => Ok(AlphaUpdate::Fixed),
            other => Err(Error::ConfigInvalid(format!("unknown alpha update `{other}`"))),
        }
    }
}

/// How the fixed-point update treats `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaUpdate {
    /// One parameter per table and action, each table's counts one draw.
    Cell,
    /// One symmetric value shared by every cell, fitted to all tables.
    #[default]
    Symmetric,
    /// Keep `beta` at its initial value.
    Fixed,
}

impl fmt::Display for BetaUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaUpdate::Cell => "cell",
            BetaUpdate::Symmetric => "symmetric",
            BetaUpdate::Fixed => "fixed",
        })
    }
}

impl FromStr for BetaUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(BetaUpdate::Cell),
            "symmetric" => Ok(BetaUpdate::Symmetric),
            "fixed" => Ok(BetaUpdate::Fixed),
            other => Err(Error::ConfigInvalid(format!("unknown beta update `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total Gibbs sweeps.
    pub iterations: usize,
    pub burn_in: usize,
    /// Sweeps after burn-in whose counts are averaged.
    pub avg_window: usize,
    pub structure: StructureMode,
    /// Relation smoothing constant.
    pub rho: f64,
    pub seed: u64,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub alpha_update: AlphaUpdate,
    pub beta_update: BetaUpdate,
    /// Report a Geweke z-score on the occupied-table trace.
    pub geweke: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            burn_in: 500,
            avg_window: 1000,
            structure: StructureMode::Learned,
            rho: 1e-5,
            seed: 0,
            alpha_init: 1.0,
            beta_init: 0.5,
            clamp_min: 1e-6,
            clamp_max: 1e6,
            alpha_update: AlphaUpdate::default(),
            beta_update: BetaUpdate::default(),
            geweke: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::ConfigInvalid(msg.to_string()));
        if self.avg_window == 0 {
            return fail("averaging window must be positive");
        }
        if self.iterations < self.burn_in + self.avg_window {
            return fail("iterations must cover burn-in plus the averaging window");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return fail("rho must be positive");
        }
        if !(self.clamp_min > 0.0 && self.clamp_min < self.clamp_max && self.clamp_max.is_finite()) {
            return fail("clamp bounds must satisfy 0 < min < max < inf");
        }
        let in_clamp = |x: f64| x >= self.clamp_min && x <= self.clamp_max;
        if !in_clamp(self.alpha_init) || !in_clamp(self.beta_init) {
            return fail("initial hyperparameters must lie within the clamp bounds");
        }
        Ok(())
    }
}

/// Relation counts on structure links, keyed by endpoint actions and the
/// link's constraint. Fails if an observed relation falls outside its
/// constraint.
pub fn relation_counts(corpus: &[Instance], structure: &StructureMask) -> Result<RelationCounts> {
    let mut counts = RelationCounts::new();
    for instance in corpus {
        let network = instance_to_network(instance)?;
        resolve_links(instance.len(), structure, |from, to, constraint| {
            let relation = network.relation(from, to).ok_or(Error::EmptyConstraint { from, to })?;
            if !constraint.contains(relation) {
                return Err(Error::RelationOutsideConstraint { from, to });
            }
            let key = PhiKey {
                from_action: network.actions[from],
                to_action: network.actions[to],
                constraint,
            };
            counts.entry(key).or_insert([0; 7])[relation.index()] += 1;
            Ok(relation)
        })?;
    }
    Ok(counts)
}

/// Trains the model of one class from its instances.
///
/// Actions must be non-null indices into `vocab`. The table budget equals
/// the longest instance.
pub fn train_class_model<R: Rng + ?Sized>(
    corpus: &[Instance],
    vocab: &[String],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<ClassModel> {
    fit_class_model(corpus, vocab, config, rng).map(|(model, _)| model)
}

/// Sampler diagnostics of one trained class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    /// Occupied tables after the last sweep.
    pub occupied_tables: usize,
    /// Mean occupied-table count over the averaging window.
    pub mean_occupied_tables: f64,
    pub geweke_z: Option<f64>,
}

/// [`train_class_model`] plus sampler diagnostics.
pub fn fit_class_model<R: Rng + ?Sized>(
    corpus: &[Instance],
    vocab: &[String],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(ClassModel, TrainStats)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let m = vocab.len();
    if m == 0 {
        return Err(Error::ConfigInvalid("empty action vocabulary".into()));
    }
    let actions = corpus
        .iter()
        .map(|inst| {
            inst.actions()
                .map(|a| a.vocab_index().filter(|&i| i < m))
                .collect::<Option<Vec<usize>>>()
                .ok_or_else(|| Error::ConfigInvalid("instance action outside the vocabulary".into()))
        })
        .collect::<Result<Vec<_>>>()?;

    let k_star = corpus.iter().map(Instance::len).max().unwrap_or(0);
    let ell = k_star.max(1);
    let structure = match config.structure {
        StructureMode::Learned => learn_structure(corpus, m)?,
        StructureMode::Chain => StructureMask::chain(k_star),
        StructureMode::Full => StructureMask::full(k_star),
    };

    let gibbs = run_gibbs(&actions, m, ell, config, rng)?;
    let theta = estimate_theta(&gibbs.averaged_na, &gibbs.beta);
    let phi = estimate_phi(&relation_counts(corpus, &structure)?, config.rho);

    let mut size_histogram = BTreeMap::new();
    for inst in corpus {
        *size_histogram.entry(inst.len()).or_insert(0) += 1;
    }
    let window = &gibbs.occupied_trace[config.burn_in..config.burn_in + config.avg_window];
    let stats = TrainStats {
        occupied_tables: gibbs.occupied_trace.last().copied().unwrap_or(0),
        mean_occupied_tables: window.iter().sum::<usize>() as f64 / window.len() as f64,
        geweke_z: gibbs.geweke_z,
    };
    let model = ClassModel {
        k_star,
        ell,
        alpha: gibbs.alpha,
        beta: gibbs.beta,
        theta,
        structure,
        phi,
        action_vocab: vocab.to_vec(),
        size_histogram,
    };
    Ok((model, stats))
}
