//! Stratified cross-validation with optional corpus perturbation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::dataset::{kfold_split, perturb_durations, perturb_labels, Corpus};
use crate::learning::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbKind {
    Labels,
    Durations,
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbKind::Labels => "labels",
            PerturbKind::Durations => "durations",
        })
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(PerturbKind::Labels),
            "durations" => Ok(PerturbKind::Durations),
            other => Err(Error::ConfigInvalid(format!("unknown perturbation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbKind,
    pub rate: f64,
}

impl Perturbation {
    pub fn apply(&self, corpus: &Corpus, seed: u64) -> Result<Corpus> {
        match self.kind {
            PerturbKind::Labels => perturb_labels(corpus, self.rate, seed),
            PerturbKind::Durations => perturb_durations(corpus, self.rate, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub folds: usize,
    /// Seed of the fold assignment and of the perturbation.
    pub seed: u64,
    pub perturbation: Option<Perturbation>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { folds: 5, seed: 0, perturbation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub fold_accuracies: Vec<f64>,
    pub mean_fold_accuracy: f64,
    /// Correct predictions over all test instances.
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub options: EvalOptions,
    pub config: TrainConfig,
}

impl EvalReport {
    /// Confusion matrix as CSV with a header row of predicted classes.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(c);
            for n in row {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs k-fold cross-validation. The perturbation, if any, is applied to the
/// whole corpus before splitting, so both training and test folds carry
/// noise. `train` builds a bundle from each training fold.
pub fn cross_validate<F>(corpus: &Corpus, options: &EvalOptions, config: &TrainConfig, mut train: F) -> Result<EvalReport>
where
    F: FnMut(&Corpus, &TrainConfig) -> Result<ModelBundle>,
{
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let corpus = match &options.perturbation {
        Some(p) => p.apply(corpus, options.seed)?,
        None => corpus.clone(),
    };
    let n = corpus.classes.len();
    let mut confusion = vec![vec![0u64; n]; n];
    let mut fold_accuracies = Vec::with_capacity(options.folds);
    for (fold, (train_set, test_set)) in kfold_split(&corpus, options.folds, options.seed)?.into_iter().enumerate() {
        let bundle = train(&train_set, config)?;
        let mut correct = 0;
        for inst in &test_set.instances {
            let truth = inst.label.expect("cross-validation corpora are labeled");
            let predicted = bundle.predict(inst)?.label;
            confusion[truth][predicted] += 1;
            correct += usize::from(truth == predicted);
        }
        let accuracy = correct as f64 / test_set.len() as f64;
        log::info!("fold {}: accuracy {accuracy:.4}", fold + 1);
        fold_accuracies.push(accuracy);
    }
    let total: u64 = confusion.iter().flatten().sum();
    let diagonal: u64 = (0..n).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        classes: corpus.classes.clone(),
        mean_fold_accuracy: fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64,
        fold_accuracies,
        accuracy: diagonal as f64 / total as f64,
        confusion,
        options: options.clone(),
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ActionId, Instance, Interval};

    fn separable() -> Corpus {
        let mut corpus = Corpus {
            vocab: vec!["a".into(), "b".into()],
            classes: vec!["p".into(), "q".into()],
            ..Corpus::default()
        };
        for i in 0..10 {
            let t = i as f64;
            for label in 0..2 {
                let a = ActionId::from_vocab_index(label);
                let intervals = vec![Interval::new(a, t, t + 1.0), Interval::new(a, t + 2.0, t + 3.0)];
                corpus.instances.push(Instance::new(Some(label), intervals));
            }
        }
        corpus
    }

    fn quick() -> TrainConfig {
        TrainConfig { iterations: 30, burn_in: 10, avg_window: 20, ..TrainConfig::default() }
    }

    #[test]
    fn perfect_classifier() {
        let report = cross_validate(&separable(), &EvalOptions::default(), &quick(), ModelBundle::train).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.confusion, vec![vec![10, 0], vec![0, 10]]);
        assert_eq!(report.fold_accuracies.len(), 5);
        assert_eq!(report.confusion_csv(), "true\\predicted,p,q\np,10,0\nq,0,10\n");
    }

    #[test]
    fn accuracy_matches_confusion() {
        let options = EvalOptions {
            perturbation: Some(Perturbation { kind: PerturbKind::Labels, rate: 0.4 }),
            ..EvalOptions::default()
        };
        let report = cross_validate(&separable(), &options, &quick(), ModelBundle::train).unwrap();
        let total: u64 = report.confusion.iter().flatten().sum();
        let diagonal = report.confusion[0][0] + report.confusion[1][1];
        assert_eq!(total, 20);
        assert_eq!(report.accuracy, diagonal as f64 / total as f64);
    }
}
