//! Step and episode accuracy with TF-IDF gated response matching.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Category, Episode};
use crate::model::{gold_response, predict_response, ModelShape, ParamVector};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("EmptyCorpus: idf needs at least one document")]
    EmptyCorpus,
    #[error("EmptyTestSet: nothing to evaluate")]
    EmptyTestSet,
    #[error("prediction count {got} does not match {expected} test steps")]
    PredictionCount { expected: usize, got: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Lowercase, split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Idf {
    pub n_docs: usize,
    pub weights: HashMap<String, f64>,
}

impl Idf {
    /// `ln((1+N)/(1+df)) + 1`; tokens outside the corpus have `df = 0`.
    pub fn get(&self, token: &str) -> f64 {
        self.weights
            .get(token)
            .copied()
            .unwrap_or_else(|| (1.0 + self.n_docs as f64).ln() + 1.0)
    }
}

pub fn build_idf<S: AsRef<str>>(corpus: &[S]) -> Result<Idf> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        let uniq: HashSet<String> = tokenize(doc.as_ref()).into_iter().collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n = corpus.len() as f64;
    Ok(Idf {
        n_docs: corpus.len(),
        weights: df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect(),
    })
}

fn tfidf(text: &str, idf: &Idf) -> BTreeMap<String, f64> {
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_insert(0.0) += 1.0;
    }
    tf.into_iter().map(|(t, c)| {
        let w = c * idf.get(&t);
        (t, w)
    }).collect()
}

/// Cosine similarity of tf·idf vectors, clamped to `[0, 1]`; zero when either
/// side has no tokens.
pub fn tfidf_similarity(a: &str, b: &str, idf: &Idf) -> f64 {
    let va = tfidf(a, idf);
    let vb = tfidf(b, idf);
    let na = va.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = vb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = va.iter().filter_map(|(t, x)| vb.get(t).map(|y| x * y)).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub episode_id: String,
    pub step_index: usize,
    pub predicted: String,
    pub gold: String,
    pub similarity: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub n_steps: usize,
    pub n_correct: usize,
    pub step_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step_accuracy: f64,
    pub episode_accuracy: f64,
    pub n_steps: usize,
    pub n_episodes: usize,
    pub by_app: BTreeMap<String, GroupAccuracy>,
    pub by_category: BTreeMap<Category, GroupAccuracy>,
    #[serde(skip)]
    pub steps: Vec<StepResult>,
}

impl EvalReport {
    /// Per-step results as CSV.
    pub fn write_steps_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.steps {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The action type is the first whitespace-delimited field; `tokenize` would
/// split `navigate_home` and `navigate_back` to the same leading token.
fn action_field(text: &str) -> Option<String> {
    text.split_whitespace().next().map(str::to_lowercase)
}

/// Scores pre-computed predictions, one per test step in dataset order.
/// A step is correct when the leading (action type) tokens agree and the
/// full-response similarity reaches `threshold`. The idf table is built from
/// the gold responses of `test`.
pub fn evaluate_predictions(
    test: &[Episode],
    predictions: &[String],
    golds: &[String],
    threshold: f64,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let n_steps: usize = test.iter().map(Episode::len).sum();
    for got in [predictions.len(), golds.len()] {
        if got != n_steps {
            return Err(EvalError::PredictionCount { expected: n_steps, got });
        }
    }
    let idf = build_idf(golds).map_err(|_| EvalError::EmptyTestSet)?;

    let mut steps = Vec::with_capacity(n_steps);
    let mut by_app: BTreeMap<String, GroupAccuracy> = BTreeMap::new();
    let mut by_category: BTreeMap<Category, GroupAccuracy> = BTreeMap::new();
    let mut episodes_correct = 0;
    let mut k = 0;
    for e in test {
        let mut all = true;
        for s in &e.steps {
            let (pred, gold) = (&predictions[k], &golds[k]);
            k += 1;
            let similarity = tfidf_similarity(pred, gold, &idf);
            let correct = action_field(pred) == action_field(gold) && similarity >= threshold;
            all &= correct;
            for g in [by_app.entry(e.app.clone()).or_default(), by_category.entry(e.category).or_default()] {
                g.n_steps += 1;
                g.n_correct += usize::from(correct);
            }
            steps.push(StepResult {
                episode_id: e.episode_id.clone(),
                step_index: s.index,
                predicted: pred.clone(),
                gold: gold.clone(),
                similarity,
                correct,
            });
        }
        episodes_correct += usize::from(all);
    }
    for g in by_app.values_mut().chain(by_category.values_mut()) {
        g.step_accuracy = g.n_correct as f64 / g.n_steps as f64;
    }
    let n_correct = steps.iter().filter(|s| s.correct).count();
    Ok(EvalReport {
        step_accuracy: if n_steps == 0 { 0.0 } else { n_correct as f64 / n_steps as f64 },
        episode_accuracy: episodes_correct as f64 / test.len() as f64,
        n_steps,
        n_episodes: test.len(),
        by_app,
        by_category,
        steps,
    })
}

/// Runs the model on every test step and scores it.
pub fn evaluate(
    params: &ParamVector,
    test: &[Episode],
    low_level: bool,
    threshold: f64,
    shape: &ModelShape,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for e in test {
        for s in &e.steps {
            preds.push(predict_response(params, e, s, low_level, shape));
            golds.push(gold_response(s, shape));
        }
    }
    evaluate_predictions(test, &preds, &golds, threshold)
}
