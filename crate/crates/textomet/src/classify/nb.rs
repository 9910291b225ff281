//! Multinomial naive Bayes over count features.

use serde::{Deserialize, Serialize};

use super::{ClassifyError, LabeledCorpus};

/// Log priors and Laplace-smoothed log conditionals per modality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub target: String,
    pub modalities: Vec<String>,
    pub vocab: Vec<String>,
    pub alpha: f64,
    pub log_priors: Vec<f64>,
    /// `[modality][feature]`, each row normalizing to 1 before log.
    pub log_cond: Vec<Vec<f64>>,
}

/// `prior(c) = n_c / n`, `P(w|c) = (count(w,c) + alpha) / (count(.,c) + alpha |V|)`.
pub fn train_nb(train: &LabeledCorpus, alpha: f64) -> Result<NaiveBayesModel, ClassifyError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(ClassifyError::BadSmoothing(alpha));
    }
    let n_classes = train.modalities.len();
    let n_features = train.features.len();
    let class_counts = train.class_counts();
    for (c, &count) in class_counts.iter().enumerate() {
        if count == 0 {
            return Err(ClassifyError::EmptyModality(train.modalities[c].clone()));
        }
    }

    let mut word_counts = vec![vec![0.0f64; n_features]; n_classes];
    let mut totals = vec![0.0f64; n_classes];
    for doc in &train.docs {
        let row = &mut word_counts[doc.label as usize];
        for &(col, count) in &doc.counts {
            row[col as usize] += count as f64;
            totals[doc.label as usize] += count as f64;
        }
    }

    let n = train.docs.len() as f64;
    let log_priors =
        class_counts.iter().map(|&c| (c as f64 / n).ln()).collect();
    let log_cond = word_counts
        .iter()
        .zip(&totals)
        .map(|(row, &total)| {
            let denom = total + alpha * n_features as f64;
            row.iter().map(|&c| ((c + alpha) / denom).ln()).collect()
        })
        .collect();

    Ok(NaiveBayesModel {
        target: train.target.clone(),
        modalities: train.modalities.clone(),
        vocab: train.features.vocab.clone(),
        alpha,
        log_priors,
        log_cond,
    })
}

/// Argmax of `log prior + sum count(w) log P(w|c)`; out-of-vocabulary forms
/// are already absent from `counts`. Returns the winning label index and the
/// log-posterior margin over the runner-up. Ties keep the lexicographically
/// smallest modality.
pub fn predict_nb(model: &NaiveBayesModel, counts: &[(u32, u32)]) -> (u32, f64) {
    let scores: Vec<f64> = model
        .log_priors
        .iter()
        .zip(&model.log_cond)
        .map(|(&prior, cond)| {
            prior
                + counts
                    .iter()
                    .map(|&(col, count)| count as f64 * cond[col as usize])
                    .sum::<f64>()
        })
        .collect();
    let mut best = 0usize;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    (best as u32, scores[best] - runner_up)
}
