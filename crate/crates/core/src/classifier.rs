//! Logistic classifier over hashed character n-grams.
//!
//! Desk-scale stand-in for a fine-tuned encoder: n-grams (3..=5 chars by
//! default) are hashed into 2^18 buckets, counts are L2-normalized, and a
//! logistic model is fit by SGD with class-balanced updates. Training is
//! deterministic given the seed and independent of training-set order
//! (examples are canonicalized before the seeded shuffle).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dedup::fnv1a;
use crate::error::{Error, Result};

/// Feature hashing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default = "default_ngram_min")]
    pub ngram_min: usize,
    #[serde(default = "default_ngram_max")]
    pub ngram_max: usize,
    #[serde(default = "default_num_buckets")]
    pub num_buckets: usize,
}

fn default_ngram_min() -> usize {
    3
}
fn default_ngram_max() -> usize {
    5
}
fn default_num_buckets() -> usize {
    1 << 18
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ngram_min: default_ngram_min(),
            ngram_max: default_ngram_max(),
            num_buckets: default_num_buckets(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::invalid(
                "FeatureConfig",
                "need 1 <= ngram_min <= ngram_max",
            ));
        }
        if self.num_buckets == 0 {
            return Err(Error::invalid("FeatureConfig", "num_buckets must be >= 1"));
        }
        Ok(())
    }

    /// Sparse L2-normalized hashed n-gram counts for `text`.
    pub fn features(&self, text: &str) -> Vec<(usize, f64)> {
        let chars: Vec<char> = text.chars().collect();
        let mut counts: HashMap<usize, f64> = HashMap::new();
        let mut buf = String::new();
        for n in self.ngram_min..=self.ngram_max {
            if chars.len() < n {
                continue;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.push((b'0' + (n as u8 % 10)) as char);
                buf.extend(window.iter());
                let bucket = (fnv1a(buf.as_bytes()) as usize) % self.num_buckets;
                *counts.entry(bucket).or_insert(0.0) += 1.0;
            }
        }
        let norm: f64 = counts.values().map(|v| v * v).sum::<f64>().sqrt();
        let mut features: Vec<(usize, f64)> = if norm > 0.0 {
            counts.into_iter().map(|(k, v)| (k, v / norm)).collect()
        } else {
            Vec::new()
        };
        features.sort_unstable_by_key(|&(k, _)| k);
        features
    }
}

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    3
}
fn default_learning_rate() -> f64 {
    1.0
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            seed: 0,
        }
    }
}

/// A trained logistic model over hashed n-gram features.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityClassifier {
    pub feature_config: FeatureConfig,
    weights: Vec<f64>,
    bias: f64,
}

impl QualityClassifier {
    /// Fit on `(text, is_positive)` pairs. Needs at least one example of
    /// each class.
    pub fn train(examples: &[(&str, bool)], options: TrainOptions) -> Result<QualityClassifier> {
        Self::train_with_features(examples, FeatureConfig::default(), options)
    }

    pub fn train_with_features(
        examples: &[(&str, bool)],
        feature_config: FeatureConfig,
        options: TrainOptions,
    ) -> Result<QualityClassifier> {
        feature_config.validate()?;
        let positives = examples.iter().filter(|(_, y)| *y).count();
        let negatives = examples.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(Error::SingleClass);
        }

        // canonical order first, then seeded shuffles: training-set order
        // cannot influence the model
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.sort_by_key(|&i| (examples[i].0, examples[i].1));

        let features: Vec<Vec<(usize, f64)>> = order
            .iter()
            .map(|&i| feature_config.features(examples[i].0))
            .collect();
        let labels: Vec<bool> = order.iter().map(|&i| examples[i].1).collect();

        let total = examples.len() as f64;
        let weight_pos = total / (2.0 * positives as f64);
        let weight_neg = total / (2.0 * negatives as f64);

        let mut weights = vec![0.0f64; feature_config.num_buckets];
        let mut bias = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut visit: Vec<usize> = (0..features.len()).collect();
        for _ in 0..options.epochs {
            visit.shuffle(&mut rng);
            for &i in &visit {
                let z: f64 = bias
                    + features[i]
                        .iter()
                        .map(|&(k, v)| weights[k] * v)
                        .sum::<f64>();
                let p = sigmoid(z);
                let y = if labels[i] { 1.0 } else { 0.0 };
                let class_weight = if labels[i] { weight_pos } else { weight_neg };
                let step = options.learning_rate * class_weight * (y - p);
                for &(k, v) in &features[i] {
                    weights[k] += step * v;
                }
                bias += step;
            }
        }
        Ok(QualityClassifier {
            feature_config,
            weights,
            bias,
        })
    }

    /// Log-probability of the positive class; finite for any input.
    pub fn score(&self, text: &str) -> f64 {
        let z: f64 = self.bias
            + self
                .feature_config
                .features(text)
                .iter()
                .map(|&(k, v)| self.weights[k] * v)
                .sum::<f64>();
        log_sigmoid(z)
    }

    pub fn predict_positive(&self, text: &str) -> bool {
        self.score(text) > log_sigmoid(0.0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let sparse: Vec<(usize, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        serde_json::json!({
            "feature_config": self.feature_config,
            "bias": self.bias,
            "weights": sparse,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<QualityClassifier> {
        #[derive(Deserialize)]
        struct Stored {
            feature_config: FeatureConfig,
            bias: f64,
            weights: Vec<(usize, f64)>,
        }
        let stored: Stored = serde_json::from_value(value.clone())?;
        stored.feature_config.validate()?;
        let mut weights = vec![0.0f64; stored.feature_config.num_buckets];
        for (idx, w) in stored.weights {
            if idx >= weights.len() {
                return Err(Error::invalid(
                    "QualityClassifier",
                    format!("weight index {idx} out of range"),
                ));
            }
            weights[idx] = w;
        }
        Ok(QualityClassifier {
            feature_config: stored.feature_config,
            weights,
            bias: stored.bias,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_json())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<QualityClassifier> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log(sigmoid(z)).
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kdoc_positive(i: usize) -> String {
        format!(
            "/**\n * Sorts the input list in O(n log n).\n * @param items input\n */\nfun algo{i}(items: List<Int>): List<Int> = items.sorted()\n"
        )
    }

    fn plain_negative(i: usize) -> String {
        format!("val handler{i} = {{ x: Int -> x + {i} }}\nfun helper{i}() = handler{i}({i})\n")
    }

    fn corpus() -> Vec<(String, bool)> {
        let mut examples = Vec::new();
        for i in 0..12 {
            examples.push((kdoc_positive(i), true));
        }
        for i in 0..48 {
            examples.push((plain_negative(i), false));
        }
        examples
    }

    fn as_refs(examples: &[(String, bool)]) -> Vec<(&str, bool)> {
        examples.iter().map(|(t, y)| (t.as_str(), *y)).collect()
    }

    #[test]
    fn separable_corpus_reaches_full_training_accuracy() {
        let examples = corpus();
        let clf = QualityClassifier::train(&as_refs(&examples), TrainOptions::default()).unwrap();
        for (text, y) in &examples {
            assert_eq!(clf.predict_positive(text), *y, "misclassified: {text}");
        }
    }

    #[test]
    fn score_is_finite_for_arbitrary_text() {
        let examples = corpus();
        let clf = QualityClassifier::train(&as_refs(&examples), TrainOptions::default()).unwrap();
        for text in ["", "a", "\u{1F600}\u{1F600}", "val x = 1", &"x".repeat(10_000)] {
            let s = clf.score(text);
            assert!(s.is_finite(), "score({text:?}) = {s}");
            assert!(s <= 0.0, "log-prob must be <= 0");
        }
    }

    #[test]
    fn training_order_does_not_change_predictions() {
        let examples = corpus();
        let mut reversed = examples.clone();
        reversed.reverse();
        let a = QualityClassifier::train(&as_refs(&examples), TrainOptions::default()).unwrap();
        let b = QualityClassifier::train(&as_refs(&reversed), TrainOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_input_is_rejected() {
        let examples: Vec<(String, bool)> = (0..5).map(|i| (plain_negative(i), false)).collect();
        let err = QualityClassifier::train(&as_refs(&examples), TrainOptions::default());
        assert!(matches!(err, Err(Error::SingleClass)));
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let examples = corpus();
        let clf = QualityClassifier::train(&as_refs(&examples), TrainOptions::default()).unwrap();
        let back = QualityClassifier::from_json(&clf.to_json()).unwrap();
        for (text, _) in examples.iter().take(5) {
            assert_eq!(clf.score(text), back.score(text));
        }
    }
}
