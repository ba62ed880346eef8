//! Serialized collection of per-class models.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{predict, Prediction};
use crate::dataset::Corpus;
use crate::generative::ClassModel;
use crate::learning::{fit_class_model, TrainConfig, TrainStats};
use crate::network::Instance;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Trained models for every class of a corpus, with the shared name tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub vocab: Vec<String>,
    pub classes: Vec<String>,
    pub config: TrainConfig,
    pub models: Vec<ClassModel>,
}

/// Random source for one class: the configured seed, one stream per class,
/// so results do not depend on training order.
pub fn class_rng(seed: u64, label: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rng
}

/// Trains the model of class `label` from the matching instances.
pub fn train_class(corpus: &Corpus, label: usize, config: &TrainConfig) -> Result<ClassModel> {
    fit_class(corpus, label, config).map(|(model, _)| model)
}

/// [`train_class`] plus sampler diagnostics.
pub fn fit_class(corpus: &Corpus, label: usize, config: &TrainConfig) -> Result<(ClassModel, TrainStats)> {
    let instances = corpus.class_instances(label);
    if instances.is_empty() {
        return Err(Error::InsufficientClassInstances {
            class: corpus.classes.get(label).cloned().unwrap_or_default(),
            count: 0,
            folds: 1,
        });
    }
    fit_class_model(&instances, &corpus.vocab, config, &mut class_rng(config.seed, label))
}

impl ModelBundle {
    /// Trains every class in order.
    pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<ModelBundle> {
        let models = (0..corpus.classes.len())
            .map(|label| train_class(corpus, label, config))
            .collect::<Result<Vec<_>>>()?;
        ModelBundle::from_models(corpus, config, models)
    }

    pub fn from_models(corpus: &Corpus, config: &TrainConfig, models: Vec<ClassModel>) -> Result<ModelBundle> {
        if models.is_empty() {
            return Err(Error::NoModels);
        }
        if !corpus.is_labeled() {
            return Err(Error::ConfigInvalid("training needs labeled instances".into()));
        }
        Ok(ModelBundle {
            schema_version: SCHEMA_VERSION,
            vocab: corpus.vocab.clone(),
            classes: corpus.classes.clone(),
            config: config.clone(),
            models,
        })
    }

    /// Renumbers a corpus against this bundle's vocabulary and classes.
    pub fn align(&self, corpus: &Corpus) -> Corpus {
        corpus.remap(&self.vocab, &self.classes)
    }

    /// Predicts an instance whose ids already follow this bundle's tables.
    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        predict(&self.models, instance)
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes.iter().position(|c| c == name).ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<ModelBundle> {
        let bundle: ModelBundle = serde_json::from_reader(std::io::BufReader::new(reader))?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(Error::ConfigInvalid(format!("unsupported schema version {}", bundle.schema_version)));
        }
        if bundle.models.len() != bundle.classes.len() {
            return Err(Error::ConfigInvalid("one model per class expected".into()));
        }
        for (class, model) in bundle.classes.iter().zip(&bundle.models) {
            model.validate().map_err(|e| Error::ConfigInvalid(format!("class `{class}`: {e}")))?;
        }
        Ok(bundle)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle> {
        ModelBundle::from_reader(std::fs::File::open(path)?)
    }
}
