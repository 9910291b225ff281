//! Binary and one-against-all logistic regression over count features
//! (optionally tf-idf weighted), trained by seeded stochastic gradient
//! descent with deterministic shuffling.

use serde::{Deserialize, Serialize};

use super::{ClassifyError, LabeledCorpus};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight counts by smoothed inverse document frequency.
    pub tfidf: bool,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { l2: 1e-4, epochs: 30, learning_rate: 0.1, seed: 1, tfidf: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticTask {
    /// The modality this task scores positively.
    pub positive: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// One task for two modalities, one per modality beyond that.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub target: String,
    pub modalities: Vec<String>,
    pub vocab: Vec<String>,
    /// Per-feature idf factors when trained with tf-idf, absent for raw
    /// counts.
    pub idf: Option<Vec<f64>>,
    pub tasks: Vec<LogisticTask>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sparse feature values of one document: plain counts or tf-idf.
fn feature_values(counts: &[(u32, u32)], idf: Option<&[f64]>) -> Vec<(u32, f64)> {
    counts
        .iter()
        .map(|&(col, count)| {
            let value = match idf {
                Some(idf) => count as f64 * idf[col as usize],
                None => count as f64,
            };
            (col, value)
        })
        .collect()
}

fn margin(weights: &[f64], bias: f64, values: &[(u32, f64)]) -> f64 {
    bias + values.iter().map(|&(col, v)| v * weights[col as usize]).sum::<f64>()
}

/// Full-batch loss and gradient of
/// `mean_i ln(1 + exp(-y_i z_i)) + l2 ||w||^2` (bias unregularized).
/// `samples` pairs sparse feature values with labels in {-1, +1}.
pub fn logistic_loss_grad(
    weights: &[f64],
    bias: f64,
    samples: &[(&[(u32, f64)], f64)],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = samples.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0f64; weights.len()];
    let mut grad_b = 0.0;
    for (values, y) in samples {
        let z = margin(weights, bias, values);
        let yz = y * z;
        // ln(1+exp(-yz)) computed stably.
        loss += if yz > 0.0 { (-yz).exp().ln_1p() } else { -yz + yz.exp().ln_1p() };
        let coef = -y * sigmoid(-yz);
        for &(col, v) in values.iter() {
            grad_w[col as usize] += coef * v / n;
        }
        grad_b += coef / n;
    }
    loss /= n;
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g += 2.0 * l2 * w;
    }
    loss += l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Smoothed idf: `ln((1+n) / (1+df)) + 1`.
fn idf_of(train: &LabeledCorpus) -> Vec<f64> {
    let mut df = vec![0u32; train.features.len()];
    for doc in &train.docs {
        for &(col, _) in &doc.counts {
            df[col as usize] += 1;
        }
    }
    let n = train.docs.len() as f64;
    df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect()
}

fn train_task(
    values: &[Vec<(u32, f64)>],
    labels: &[u32],
    dim: usize,
    positive_label: u32,
    positive_name: &str,
    params: &LogisticParams,
    task_seed: u64,
) -> Result<LogisticTask, ClassifyError> {
    let mut weights = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let n = values.len() as f64;
    let mut order: Vec<usize> = (0..values.len()).collect();
    let mut rng = SplitMix64::new(task_seed);

    for epoch in 0..params.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        for &i in &order {
            let y = if labels[i] == positive_label { 1.0 } else { -1.0 };
            let z = margin(&weights, bias, &values[i]);
            let yz = y * z;
            epoch_loss +=
                if yz > 0.0 { (-yz).exp().ln_1p() } else { -yz + yz.exp().ln_1p() };
            let coef = -y * sigmoid(-yz);
            for &(col, v) in &values[i] {
                weights[col as usize] -= params.learning_rate * coef * v;
            }
            bias -= params.learning_rate * coef;
            if params.l2 > 0.0 {
                let decay = 1.0 - 2.0 * params.learning_rate * params.l2 / n;
                for w in weights.iter_mut() {
                    *w *= decay;
                }
            }
        }
        epoch_loss /= n;
        if !epoch_loss.is_finite()
            || !bias.is_finite()
            || weights.iter().any(|w| !w.is_finite())
        {
            return Err(ClassifyError::Diverged { epoch, loss: epoch_loss });
        }
    }
    Ok(LogisticTask { positive: positive_name.to_string(), weights, bias })
}

pub fn train_logreg(
    train: &LabeledCorpus,
    params: &LogisticParams,
) -> Result<LogisticModel, ClassifyError> {
    let k = train.modalities.len();
    if k < 2 {
        return Err(ClassifyError::NotEnoughModalities(train.target.clone()));
    }
    let idf = params.tfidf.then(|| idf_of(train));
    let values: Vec<Vec<(u32, f64)>> =
        train.docs.iter().map(|d| feature_values(&d.counts, idf.as_deref())).collect();
    let labels: Vec<u32> = train.docs.iter().map(|d| d.label).collect();
    let dim = train.features.len();
    let rng = SplitMix64::new(params.seed);

    let positives: Vec<u32> = if k == 2 { vec![1] } else { (0..k as u32).collect() };
    let tasks = positives
        .into_iter()
        .map(|c| {
            train_task(
                &values,
                &labels,
                dim,
                c,
                &train.modalities[c as usize],
                params,
                rng.fork(c as u64).next_u64(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LogisticModel {
        target: train.target.clone(),
        modalities: train.modalities.clone(),
        vocab: train.features.vocab.clone(),
        idf,
        tasks,
    })
}

/// Binary: sigmoid above 0.5 picks the positive modality, exactly 0.5 falls
/// back to the lexicographically smallest. One-against-all: argmax task
/// score, ties to the lowest (lexicographically smallest) modality. The
/// returned score is the chosen label's sigmoid confidence.
pub fn predict_logreg(model: &LogisticModel, counts: &[(u32, u32)]) -> (u32, f64) {
    let values = feature_values(counts, model.idf.as_deref());
    if model.tasks.len() == 1 {
        let task = &model.tasks[0];
        let p = sigmoid(margin(&task.weights, task.bias, &values));
        if p > 0.5 {
            (1, p)
        } else {
            (0, 1.0 - p)
        }
    } else {
        let scores: Vec<f64> = model
            .tasks
            .iter()
            .map(|t| margin(&t.weights, t.bias, &values))
            .collect();
        let mut best = 0usize;
        for (c, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = c;
            }
        }
        (best as u32, sigmoid(scores[best]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{FeatureSpace, LabeledDoc};
    use crate::rng::SplitMix64;

    fn separable_corpus(n_per_class: usize, seed: u64) -> LabeledCorpus {
        // Disjoint signal features 0..3 (class neg) and 3..6 (class pos),
        // shared noise features 6..10.
        let features = FeatureSpace::from_vocab(
            (0..10).map(|i| format!("f{i:02}")).collect(),
        );
        let mut rng = SplitMix64::new(seed);
        let mut docs = Vec::new();
        for label in 0..2u32 {
            for _ in 0..n_per_class {
                let mut counts: Vec<(u32, u32)> = Vec::new();
                for _ in 0..6 {
                    let col = if rng.next_f64() < 0.7 {
                        (label * 3 + rng.next_below(3) as u32) % 10
                    } else {
                        6 + rng.next_below(4) as u32
                    };
                    match counts.iter_mut().find(|(c, _)| *c == col) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((col, 1)),
                    }
                }
                counts.sort_unstable();
                docs.push(LabeledDoc {
                    doc_id: docs.len(),
                    label,
                    tokens: Vec::new(),
                    counts,
                });
            }
        }
        LabeledCorpus {
            target: "t".to_string(),
            modalities: vec!["neg".to_string(), "pos".to_string()],
            features,
            docs,
        }
    }

    #[test]
    fn separable_data_reaches_high_training_accuracy() {
        let corpus = separable_corpus(60, 7);
        let model = train_logreg(&corpus, &LogisticParams::default()).unwrap();
        let correct = corpus
            .docs
            .iter()
            .filter(|d| predict_logreg(&model, &d.counts).0 == d.label)
            .count();
        assert!(
            correct as f64 / corpus.docs.len() as f64 >= 0.99,
            "training accuracy {correct}/{}",
            corpus.docs.len()
        );
    }

    #[test]
    fn tfidf_variant_also_separates_and_stores_idf() {
        let corpus = separable_corpus(60, 7);
        let params = LogisticParams { tfidf: true, ..Default::default() };
        let model = train_logreg(&corpus, &params).unwrap();
        assert_eq!(model.idf.as_ref().unwrap().len(), 10);
        let correct = corpus
            .docs
            .iter()
            .filter(|d| predict_logreg(&model, &d.counts).0 == d.label)
            .count();
        assert!(correct as f64 / corpus.docs.len() as f64 >= 0.95);
    }

    #[test]
    fn stronger_l2_shrinks_weights_monotonically() {
        let corpus = separable_corpus(40, 3);
        let mut norms = Vec::new();
        for l2 in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let params = LogisticParams { l2, ..Default::default() };
            let model = train_logreg(&corpus, &params).unwrap();
            let norm: f64 =
                model.tasks[0].weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            norms.push(norm);
        }
        for pair in norms.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "norms not decreasing: {norms:?}");
        }
        assert!(
            norms.last().unwrap() < &(norms[0] * 0.7),
            "heavy l2 barely shrank the weights: {norms:?}"
        );
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = SplitMix64::new(99);
        for instance in 0..20 {
            let dim = 3 + (instance % 4);
            let n = 4 + (instance % 5);
            let samples_owned: Vec<(Vec<(u32, f64)>, f64)> = (0..n)
                .map(|_| {
                    let mut values = Vec::new();
                    for col in 0..dim {
                        if rng.next_f64() < 0.6 {
                            values.push((col as u32, rng.next_range_f64(0.5, 3.0)));
                        }
                    }
                    let y = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                    (values, y)
                })
                .collect();
            let samples: Vec<(&[(u32, f64)], f64)> =
                samples_owned.iter().map(|(c, y)| (c.as_slice(), *y)).collect();
            let weights: Vec<f64> =
                (0..dim).map(|_| rng.next_range_f64(-1.0, 1.0)).collect();
            let bias = rng.next_range_f64(-0.5, 0.5);
            let l2 = 0.05;

            let (_, grad_w, grad_b) = logistic_loss_grad(&weights, bias, &samples, l2);
            let h = 1e-6;
            for d in 0..dim {
                let mut plus = weights.clone();
                plus[d] += h;
                let mut minus = weights.clone();
                minus[d] -= h;
                let (lp, _, _) = logistic_loss_grad(&plus, bias, &samples, l2);
                let (lm, _, _) = logistic_loss_grad(&minus, bias, &samples, l2);
                let numeric = (lp - lm) / (2.0 * h);
                let denom = numeric.abs().max(grad_w[d].abs()).max(1e-8);
                assert!(
                    ((grad_w[d] - numeric) / denom).abs() < 1e-5,
                    "instance {instance} dim {d}: analytic {} numeric {numeric}",
                    grad_w[d]
                );
            }
            let (lp, _, _) = logistic_loss_grad(&weights, bias + h, &samples, l2);
            let (lm, _, _) = logistic_loss_grad(&weights, bias - h, &samples, l2);
            let numeric = (lp - lm) / (2.0 * h);
            let denom = numeric.abs().max(grad_b.abs()).max(1e-8);
            assert!(((grad_b - numeric) / denom).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_model_ties_to_first_modality() {
        let model = LogisticModel {
            target: "t".to_string(),
            modalities: vec!["neg".to_string(), "pos".to_string()],
            vocab: vec!["a".to_string()],
            idf: None,
            tasks: vec![LogisticTask {
                positive: "pos".to_string(),
                weights: vec![0.0],
                bias: 0.0,
            }],
        };
        let (label, score) = predict_logreg(&model, &[(0, 5)]);
        assert_eq!(label, 0);
        assert!((score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_weight_vector_sigmoid() {
        let model = LogisticModel {
            target: "t".to_string(),
            modalities: vec!["neg".to_string(), "pos".to_string()],
            vocab: vec!["a".to_string(), "b".to_string()],
            idf: None,
            tasks: vec![LogisticTask {
                positive: "pos".to_string(),
                weights: vec![0.5, -1.0],
                bias: 0.25,
            }],
        };
        // z = 0.25 + 2*0.5 - 1*1.0 = 0.25
        let (label, score) = predict_logreg(&model, &[(0, 2), (1, 1)]);
        assert_eq!(label, 1);
        let want = 1.0 / (1.0 + (-0.25f64).exp());
        assert!((score - want).abs() < 1e-12);
    }

    #[test]
    fn constant_bias_shift_preserves_multiclass_argmax() {
        let corpus3 = {
            let mut c = separable_corpus(20, 5);
            c.modalities.push("zed".to_string());
            // relabel a third of the docs
            for (i, d) in c.docs.iter_mut().enumerate() {
                if i % 3 == 0 {
                    d.label = 2;
                }
            }
            c
        };
        let mut model = train_logreg(&corpus3, &LogisticParams::default()).unwrap();
        assert_eq!(model.tasks.len(), 3);
        let doc = &corpus3.docs[4].counts;
        let (before, _) = predict_logreg(&model, doc);
        for t in model.tasks.iter_mut() {
            t.bias += 3.5;
        }
        let (after, _) = predict_logreg(&model, doc);
        assert_eq!(before, after);
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let corpus = separable_corpus(30, 11);
        let params = LogisticParams {
            learning_rate: 1e12,
            epochs: 30,
            l2: 0.01,
            seed: 2,
            tfidf: false,
        };
        match train_logreg(&corpus, &params) {
            Err(ClassifyError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_model() {
        let corpus = separable_corpus(25, 13);
        let params = LogisticParams::default();
        let a = train_logreg(&corpus, &params).unwrap();
        let b = train_logreg(&corpus, &params).unwrap();
        assert_eq!(a.tasks[0].weights, b.tasks[0].weights);
        assert_eq!(a.tasks[0].bias, b.tasks[0].bias);
    }
}
