//! Corpus files, cross-validation splits, perturbations and synthetic
//! corpora.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"label": "cook", "intervals": [{"action": "grab", "start": 0, "end": 2}, ...]}
//! ```
//!
//! The label may be omitted for unlabeled data.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generative::{generate_instance, sample_size, ClassModel};
use crate::network::{ActionId, Instance, Interval};
use crate::{Error, Result};

/// Labeled instances with their action and class name tables. Actions are
/// stored as [`ActionId`]s into `vocab` and labels as indices into
/// `classes`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub instances: Vec<Instance>,
    pub vocab: Vec<String>,
    pub classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RecordInterval {
    action: String,
    start: f64,
    end: f64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    intervals: Vec<RecordInterval>,
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&i) = index.get(name) {
        return i;
    }
    names.push(name.to_string());
    index.insert(name.to_string(), names.len() - 1);
    names.len() - 1
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Parses JSON Lines. Blank lines are skipped; each instance is sorted
    /// canonically; names are numbered in order of first appearance.
    pub fn from_reader<R: Read>(reader: R) -> Result<Corpus> {
        let mut corpus = Corpus::default();
        let mut vocab_index = HashMap::new();
        let mut class_index = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            let label = record.label.map(|l| intern(&mut corpus.classes, &mut class_index, &l));
            let mut intervals = Vec::with_capacity(record.intervals.len());
            for iv in record.intervals {
                if !iv.start.is_finite() || !iv.end.is_finite() {
                    return Err(Error::Parse { line: line_no, message: "non-finite time".into() });
                }
                if iv.start >= iv.end {
                    return Err(Error::DegenerateIntervalAt { line: line_no, start: iv.start, end: iv.end });
                }
                let action = intern(&mut corpus.vocab, &mut vocab_index, &iv.action);
                intervals.push(Interval::new(ActionId::from_vocab_index(action), iv.start, iv.end));
            }
            let mut instance = Instance::new(label, intervals);
            instance.sort_canonical();
            corpus.instances.push(instance);
        }
        Ok(corpus)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Corpus> {
        Corpus::from_reader(std::fs::File::open(path)?)
    }

    /// Writes JSON Lines with intervals in canonical order. Null intervals
    /// are dropped.
    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        for instance in &self.instances {
            let mut instance = instance.clone();
            instance.sort_canonical();
            let record = Record {
                label: instance.label.map(|l| self.class_name(l)),
                intervals: instance
                    .intervals
                    .iter()
                    .filter(|iv| !iv.is_null())
                    .map(|iv| RecordInterval { action: self.action_name(iv.action), start: iv.start, end: iv.end })
                    .collect(),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    fn action_name(&self, action: ActionId) -> String {
        action
            .vocab_index()
            .and_then(|i| self.vocab.get(i).cloned())
            .unwrap_or_else(|| format!("#{}", action.0))
    }

    fn class_name(&self, label: usize) -> String {
        self.classes.get(label).cloned().unwrap_or_else(|| format!("#{label}"))
    }

    /// Renumbers actions and labels against fixed name tables. Names absent
    /// from the tables are appended after them, so unknown actions get ids
    /// past the end of `vocab`.
    pub fn remap(&self, vocab: &[String], classes: &[String]) -> Corpus {
        let mut out = Corpus { instances: Vec::with_capacity(self.len()), vocab: vocab.to_vec(), classes: classes.to_vec() };
        let mut vocab_index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut class_index: HashMap<String, usize> = classes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        for instance in &self.instances {
            let label = instance.label.map(|l| intern(&mut out.classes, &mut class_index, &self.class_name(l)));
            let intervals = instance
                .intervals
                .iter()
                .map(|iv| {
                    if iv.is_null() {
                        return *iv;
                    }
                    let a = intern(&mut out.vocab, &mut vocab_index, &self.action_name(iv.action));
                    Interval::new(ActionId::from_vocab_index(a), iv.start, iv.end)
                })
                .collect();
            out.instances.push(Instance::new(label, intervals));
        }
        out
    }

    /// The instances at `indices`, sharing the name tables.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            vocab: self.vocab.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Instances carrying the given label.
    pub fn class_instances(&self, label: usize) -> Vec<Instance> {
        self.instances.iter().filter(|inst| inst.label == Some(label)).cloned().collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.instances.iter().all(|inst| inst.label.is_some())
    }
}

/// Stratified k-fold assignment: the test indices of every fold.
///
/// Each class is shuffled with a seeded source and dealt round-robin, the
/// starting fold rotating from class to class so fold sizes stay within one
/// of each other overall.
pub fn kfold_indices(corpus: &Corpus, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::ConfigInvalid("at least two folds are required".into()));
    }
    if !corpus.is_labeled() {
        return Err(Error::ConfigInvalid("cross-validation needs labeled instances".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.classes.len()];
    for (i, inst) in corpus.instances.iter().enumerate() {
        by_class[inst.label.expect("checked labeled")].push(i);
    }
    let mut tests = vec![Vec::new(); folds];
    let mut offset = 0;
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::InsufficientClassInstances {
                class: corpus.classes[class].clone(),
                count: members.len(),
                folds,
            });
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            tests[(offset + j) % folds].push(i);
        }
        offset = (offset + members.len()) % folds;
    }
    tests.iter_mut().for_each(|t| t.sort_unstable());
    Ok(tests)
}

/// Stratified k-fold `(train, test)` corpora.
pub fn kfold_split(corpus: &Corpus, folds: usize, seed: u64) -> Result<Vec<(Corpus, Corpus)>> {
    let tests = kfold_indices(corpus, folds, seed)?;
    Ok(tests
        .iter()
        .map(|test| {
            let train: Vec<usize> = (0..corpus.len()).filter(|i| test.binary_search(i).is_err()).collect();
            (corpus.subset(&train), corpus.subset(test))
        })
        .collect())
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("rate {rate} outside [0, 1]")))
    }
}

/// Replaces each interval's action, with probability `rate`, by a different
/// vocabulary action chosen uniformly.
pub fn perturb_labels(corpus: &Corpus, rate: f64, seed: u64) -> Result<Corpus> {
    check_rate(rate)?;
    let m = corpus.vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for iv in out.instances.iter_mut().flat_map(|inst| inst.intervals.iter_mut()) {
        if iv.is_null() || !rng.random_bool(rate) || m < 2 {
            continue;
        }
        let original = iv.action.vocab_index();
        let mut replacement = rng.random_range(0..m - 1);
        if original.is_some_and(|o| replacement >= o) {
            replacement += 1;
        }
        iv.action = ActionId::from_vocab_index(replacement);
    }
    Ok(out)
}

/// Fraction of an interval's length by which a degenerate perturbed
/// interval is widened.
pub const REPAIR_STEP: f64 = 1e-3;

/// Shifts each endpoint by uniform noise in `[-rate * len, rate * len]`,
/// with `len` the interval's original length, then re-sorts every instance.
/// Intervals that end up with `start >= end` are swapped and widened by
/// `REPAIR_STEP * len`.
pub fn perturb_durations(corpus: &Corpus, rate: f64, seed: u64) -> Result<Corpus> {
    check_rate(rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for inst in &mut out.instances {
        for iv in inst.intervals.iter_mut().filter(|iv| !iv.is_null()) {
            let len = iv.end - iv.start;
            let mut start = iv.start + (2.0 * rng.random::<f64>() - 1.0) * rate * len;
            let mut end = iv.end + (2.0 * rng.random::<f64>() - 1.0) * rate * len;
            if start >= end {
                std::mem::swap(&mut start, &mut end);
                end += REPAIR_STEP * len;
            }
            iv.start = start;
            iv.end = end;
        }
        inst.sort_canonical();
    }
    Ok(out)
}

/// How many instances to draw from each class model, and at what size.
#[derive(Debug, Clone)]
pub struct SyntheticClass {
    pub name: String,
    pub model: ClassModel,
    /// Fixed network size, or `None` to draw from the size histogram.
    pub size: Option<usize>,
}

/// Samples `per_class` realized instances from every class, classes in
/// order. All models must share one action vocabulary.
pub fn build_synthetic_corpus(classes: &[SyntheticClass], per_class: usize, seed: u64) -> Result<Corpus> {
    let Some(first) = classes.first() else {
        return Err(Error::NoModels);
    };
    let vocab = first.model.action_vocab.clone();
    if classes.iter().any(|c| c.model.action_vocab != vocab) {
        return Err(Error::ConfigInvalid("class models disagree on the action vocabulary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(classes.len() * per_class);
    for (label, class) in classes.iter().enumerate() {
        for _ in 0..per_class {
            let k = class.size.unwrap_or_else(|| sample_size(&class.model, &mut rng));
            let mut instance = generate_instance(&class.model, k, &mut rng)?;
            instance.label = Some(label);
            instances.push(instance);
        }
    }
    Ok(Corpus { instances, vocab, classes: classes.iter().map(|c| c.name.clone()).collect() })
}
