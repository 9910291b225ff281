//! Stratified train/test splitting, confusion-matrix metrics and predicted
//! composition reports.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::classify::{LabeledCorpus, PredictionSet};
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("train_fraction must be strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("stratified split impossible: modality `{0}` has fewer than 2 documents")]
    StratificationImpossible(String),
    #[error("too few documents to split")]
    TooFewDocuments,
    #[error("predicted label `{0}` is outside the gold modality set")]
    UnknownLabel(String),
    #[error("predictions and gold cover different document counts: {got} vs {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("no predicted documents")]
    EmptyPredictions,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7, seed: 0, stratified: true }
    }
}

fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Deterministic seeded split. Stratified mode preserves modality
/// proportions within one document per modality.
pub fn split(
    corpus: &LabeledCorpus,
    spec: &SplitSpec,
) -> Result<(LabeledCorpus, LabeledCorpus), EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::BadFraction(spec.train_fraction));
    }
    let mut train_idx: Vec<usize> = Vec::new();
    let mut test_idx: Vec<usize> = Vec::new();
    let root = SplitMix64::new(spec.seed);

    if spec.stratified {
        for (m, modality) in corpus.modalities.iter().enumerate() {
            let mut indices: Vec<usize> = corpus
                .docs
                .iter()
                .enumerate()
                .filter(|(_, d)| d.label == m as u32)
                .map(|(i, _)| i)
                .collect();
            if indices.len() < 2 {
                return Err(EvalError::StratificationImpossible(modality.clone()));
            }
            root.fork(m as u64).shuffle(&mut indices);
            let n_train = train_count(indices.len(), spec.train_fraction);
            train_idx.extend_from_slice(&indices[..n_train]);
            test_idx.extend_from_slice(&indices[n_train..]);
        }
    } else {
        if corpus.docs.len() < 2 {
            return Err(EvalError::TooFewDocuments);
        }
        let mut indices: Vec<usize> = (0..corpus.docs.len()).collect();
        root.fork(0).shuffle(&mut indices);
        let n_train = train_count(indices.len(), spec.train_fraction);
        train_idx.extend_from_slice(&indices[..n_train]);
        test_idx.extend_from_slice(&indices[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((corpus.subset(&train_idx), corpus.subset(&test_idx)))
}

/// Harmonic mean of precision and recall, 0 when both vanish.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Confusion matrix with per-class and macro precision/recall/F.
///
/// The macro F-measure is the unweighted mean of per-class F1 scores, not
/// the harmonic mean of macro precision and macro recall; only this scheme
/// can produce reports whose F falls below the harmonic mean of P and R.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub modalities: Vec<String>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
    /// Count of zero-denominator metrics reported as 0.
    pub zero_denominator_warnings: usize,
}

/// Documentation emitted at the top of evaluation CSVs.
pub const EVAL_CSV_NOTE: &str = "\
# averaging: macro (unweighted mean of per-class precision, recall, F1);\n\
# macro-F is the mean of per-class F1, not the harmonic mean of macro-P and macro-R.\n\
# micro-averaging is excluded: with one prediction per document it forces\n\
# precision = recall = F, and cannot describe a result like P=0.680 R=0.609\n\
# F=0.589 where F falls below the harmonic mean (~0.643) of P and R.\n";

/// Aggregate per-class metrics into a report. `macro_from_per_class` is the
/// single aggregation path used everywhere.
pub fn macro_from_per_class(per_class: &[ClassMetrics]) -> (f64, f64, f64) {
    let k = per_class.len().max(1) as f64;
    let p = per_class.iter().map(|m| m.precision).sum::<f64>() / k;
    let r = per_class.iter().map(|m| m.recall).sum::<f64>() / k;
    let f = per_class.iter().map(|m| m.f1).sum::<f64>() / k;
    (p, r, f)
}

/// Compare predicted labels against gold labels over the same documents.
pub fn evaluate(
    modalities: &[String],
    gold: &[u32],
    predicted: &[String],
) -> Result<EvalReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { got: predicted.len(), want: gold.len() });
    }
    let k = modalities.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (&g, p) in gold.iter().zip(predicted) {
        let p_idx = modalities
            .iter()
            .position(|m| m == p)
            .ok_or_else(|| EvalError::UnknownLabel(p.clone()))?;
        confusion[g as usize][p_idx] += 1;
    }

    let mut warnings = 0usize;
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let fp: f64 = (0..k).filter(|&g| g != c).map(|g| confusion[g][c] as f64).sum();
            let fn_: f64 = (0..k).filter(|&p| p != c).map(|p| confusion[c][p] as f64).sum();
            let support = confusion[c].iter().sum();
            let precision = if tp + fp == 0.0 {
                warnings += 1;
                0.0
            } else {
                tp / (tp + fp)
            };
            let recall = if tp + fn_ == 0.0 {
                warnings += 1;
                0.0
            } else {
                tp / (tp + fn_)
            };
            ClassMetrics { precision, recall, f1: f_measure(precision, recall), support }
        })
        .collect();

    let (macro_precision, macro_recall, macro_f) = macro_from_per_class(&per_class);
    Ok(EvalReport {
        modalities: modalities.to_vec(),
        confusion,
        per_class,
        macro_precision,
        macro_recall,
        macro_f,
        zero_denominator_warnings: warnings,
    })
}

impl EvalReport {
    /// Rows `class,precision,recall,f1,support` plus a trailing MACRO row.
    /// `prefix` cells (e.g. target and classifier) are prepended verbatim.
    pub fn csv_rows(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (modality, m) in self.modalities.iter().zip(&self.per_class) {
            out.push_str(&format!(
                "{prefix}{modality},{},{},{},{}\n",
                m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!(
            "{prefix}MACRO,{},{},{},{}\n",
            self.macro_precision,
            self.macro_recall,
            self.macro_f,
            self.per_class.iter().map(|m| m.support).sum::<u64>()
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_CSV_NOTE);
        out.push_str("class,precision,recall,f1,support\n");
        out.push_str(&self.csv_rows(""));
        out
    }
}

/// Percentage of predicted documents per modality, one decimal, per target.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionReport {
    /// (target, modality, percent), sorted by target then modality.
    pub entries: Vec<(String, String, f64)>,
}

pub fn composition(predictions: &[PredictionSet]) -> Result<CompositionReport, EvalError> {
    let mut entries = Vec::new();
    for set in predictions {
        if set.rows.is_empty() {
            return Err(EvalError::EmptyPredictions);
        }
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for row in &set.rows {
            *counts.entry(row.vote.as_str()).or_insert(0) += 1;
        }
        let total = set.rows.len() as f64;
        for (modality, count) in counts {
            let percent = (1000.0 * count as f64 / total).round() / 10.0;
            entries.push((set.target.clone(), modality.to_string(), percent));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(CompositionReport { entries })
}

impl CompositionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,modality,percent\n");
        for (target, modality, percent) in &self.entries {
            out.push_str(&format!("{target},{modality},{percent:.1}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{DocPrediction, FeatureSpace, LabeledDoc, VoteDecision};

    fn corpus_with_labels(labels: &[u32], modalities: &[&str]) -> LabeledCorpus {
        LabeledCorpus {
            target: "t".to_string(),
            modalities: modalities.iter().map(|s| s.to_string()).collect(),
            features: FeatureSpace::from_vocab(vec!["x".to_string()]),
            docs: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| LabeledDoc {
                    doc_id: i,
                    label,
                    tokens: vec!["x".to_string()],
                    counts: vec![(0, 1)],
                })
                .collect(),
        }
    }

    #[test]
    fn split_ten_docs_seventy_thirty() {
        let corpus = corpus_with_labels(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], &["a", "b"]);
        let spec = SplitSpec { stratified: false, ..Default::default() };
        let (train, test) = split(&corpus, &spec).unwrap();
        assert_eq!(train.docs.len(), 7);
        assert_eq!(test.docs.len(), 3);
    }

    #[test]
    fn stratified_split_preserves_proportions() {
        // 6 A, 4 B at 0.7: round(4.2)=4 A (or 5 within +-1), round(2.8)=3 B.
        let corpus = corpus_with_labels(&[0, 0, 0, 0, 0, 0, 1, 1, 1, 1], &["a", "b"]);
        let (train, test) = split(&corpus, &SplitSpec::default()).unwrap();
        let a_train = train.docs.iter().filter(|d| d.label == 0).count();
        let b_train = train.docs.iter().filter(|d| d.label == 1).count();
        assert!((4..=5).contains(&a_train), "a_train={a_train}");
        assert!((2..=3).contains(&b_train), "b_train={b_train}");
        assert_eq!(train.docs.len() + test.docs.len(), 10);
        // Disjoint cover.
        let mut all: Vec<usize> = train.docs.iter().chain(&test.docs).map(|d| d.doc_id).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_split() {
        let corpus = corpus_with_labels(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1], &["a", "b"]);
        let spec = SplitSpec { seed: 42, ..Default::default() };
        let (t1, _) = split(&corpus, &spec).unwrap();
        let (t2, _) = split(&corpus, &spec).unwrap();
        let ids = |c: &LabeledCorpus| c.docs.iter().map(|d| d.doc_id).collect::<Vec<_>>();
        assert_eq!(ids(&t1), ids(&t2));
        let other = SplitSpec { seed: 43, ..Default::default() };
        let (t3, _) = split(&corpus, &other).unwrap();
        assert_ne!(ids(&t1), ids(&t3), "different seeds should shuffle differently");
    }

    #[test]
    fn split_errors() {
        let corpus = corpus_with_labels(&[0, 0, 1], &["a", "b"]);
        assert_eq!(
            split(&corpus, &SplitSpec { train_fraction: 1.0, ..Default::default() })
                .unwrap_err(),
            EvalError::BadFraction(1.0)
        );
        assert_eq!(
            split(&corpus, &SplitSpec::default()).unwrap_err(),
            EvalError::StratificationImpossible("b".to_string())
        );
    }

    #[test]
    fn perfect_predictions_score_one() {
        let modalities = vec!["a".to_string(), "b".to_string()];
        let gold = vec![0u32, 1, 0, 1];
        let pred: Vec<String> =
            gold.iter().map(|&g| modalities[g as usize].clone()).collect();
        let report = evaluate(&modalities, &gold, &pred).unwrap();
        assert_eq!(report.macro_precision, 1.0);
        assert_eq!(report.macro_recall, 1.0);
        assert_eq!(report.macro_f, 1.0);
        assert_eq!(report.zero_denominator_warnings, 0);
    }

    #[test]
    fn macro_f_is_mean_of_per_class_f1() {
        // Balanced two-class case with p=r per class: macro-F equals the
        // harmonic-mean value.
        let per_class = [
            ClassMetrics { precision: 0.664, recall: 0.667, f1: f_measure(0.664, 0.667), support: 100 },
            ClassMetrics { precision: 0.664, recall: 0.667, f1: f_measure(0.664, 0.667), support: 100 },
        ];
        let (p, r, f) = macro_from_per_class(&per_class);
        assert!((p - 0.664).abs() < 1e-12);
        assert!((r - 0.667).abs() < 1e-12);
        assert!((f - 0.665).abs() < 1e-3);
    }

    #[test]
    fn three_class_hand_confusion_matrix() {
        // gold: 3 a, 3 b, 2 c; predictions scramble some.
        let modalities: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let gold = vec![0u32, 0, 0, 1, 1, 1, 2, 2];
        let pred: Vec<String> = ["a", "a", "b", "b", "b", "c", "c", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let report = evaluate(&modalities, &gold, &pred).unwrap();
        // Hand-computed: confusion rows a:[2,1,0], b:[0,2,1], c:[1,0,1].
        assert_eq!(report.confusion, vec![vec![2, 1, 0], vec![0, 2, 1], vec![1, 0, 1]]);
        // precision: a=2/3, b=2/3, c=1/2 ; recall: a=2/3, b=2/3, c=1/2.
        let want_p = [2.0 / 3.0, 2.0 / 3.0, 0.5];
        for (m, want) in report.per_class.iter().zip(want_p) {
            assert!((m.precision - want).abs() < 1e-12);
            assert!((m.recall - want).abs() < 1e-12);
        }
        let want_macro = (2.0 / 3.0 + 2.0 / 3.0 + 0.5) / 3.0;
        assert!((report.macro_precision - want_macro).abs() < 1e-12);
        assert!((report.macro_f - want_macro).abs() < 1e-12);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let modalities = vec!["a".to_string()];
        assert_eq!(
            evaluate(&modalities, &[0], &["z".to_string()]).unwrap_err(),
            EvalError::UnknownLabel("z".to_string())
        );
    }

    #[test]
    fn document_order_does_not_matter() {
        let modalities: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let gold = vec![0u32, 0, 1, 1, 0];
        let pred: Vec<String> =
            ["a", "b", "b", "a", "a"].iter().map(|s| s.to_string()).collect();
        let r1 = evaluate(&modalities, &gold, &pred).unwrap();
        let perm = [4usize, 2, 0, 3, 1];
        let gold2: Vec<u32> = perm.iter().map(|&i| gold[i]).collect();
        let pred2: Vec<String> = perm.iter().map(|&i| pred[i].clone()).collect();
        let r2 = evaluate(&modalities, &gold2, &pred2).unwrap();
        assert_eq!(r1.confusion, r2.confusion);
        assert_eq!(r1.macro_f, r2.macro_f);
    }

    #[test]
    fn relabeling_preserves_metric_multiset() {
        let modalities: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let gold = vec![0u32, 0, 1, 1, 0];
        let pred: Vec<String> =
            ["a", "b", "b", "a", "a"].iter().map(|s| s.to_string()).collect();
        let r1 = evaluate(&modalities, &gold, &pred).unwrap();
        // Swap both gold labels and predictions consistently under the same
        // modality catalog.
        let gold2: Vec<u32> = gold.iter().map(|&g| 1 - g).collect();
        let pred2: Vec<String> = pred
            .iter()
            .map(|p| if p == "a" { "b".to_string() } else { "a".to_string() })
            .collect();
        let r2 = evaluate(&modalities, &gold2, &pred2).unwrap();
        let mut f1a: Vec<f64> = r1.per_class.iter().map(|m| m.f1).collect();
        let mut f1b: Vec<f64> = r2.per_class.iter().map(|m| m.f1).collect();
        f1a.sort_by(|a, b| a.partial_cmp(b).unwrap());
        f1b.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(f1a, f1b);
        assert_eq!(r1.macro_f, r2.macro_f);
    }

    #[test]
    fn macro_f_bounded_by_per_class_f1() {
        let modalities: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let gold = vec![0u32, 0, 1, 1, 2, 2, 2, 0];
        let pred: Vec<String> = ["a", "b", "b", "c", "c", "c", "a", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let r = evaluate(&modalities, &gold, &pred).unwrap();
        let min = r.per_class.iter().map(|m| m.f1).fold(f64::INFINITY, f64::min);
        let max = r.per_class.iter().map(|m| m.f1).fold(f64::NEG_INFINITY, f64::max);
        assert!(r.macro_f >= min - 1e-12 && r.macro_f <= max + 1e-12);
    }

    #[test]
    fn zero_denominator_counts_warnings() {
        let modalities: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        // Nothing predicted as b: precision(b) has zero denominator.
        let gold = vec![0u32, 1];
        let pred: Vec<String> = ["a", "a"].iter().map(|s| s.to_string()).collect();
        let r = evaluate(&modalities, &gold, &pred).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.zero_denominator_warnings, 1);
    }

    fn prediction_set(target: &str, votes: &[&str]) -> PredictionSet {
        PredictionSet {
            target: target.to_string(),
            rows: votes
                .iter()
                .enumerate()
                .map(|(i, v)| DocPrediction {
                    doc_id: i,
                    nb: (v.to_string(), 0.0),
                    logreg: (v.to_string(), 0.0),
                    centroid: None,
                    vote: v.to_string(),
                    decided_by: VoteDecision::Majority,
                })
                .collect(),
        }
    }

    #[test]
    fn composition_hand_percentages() {
        let set = prediction_set("gj", &["soutient", "soutient", "ne-soutient-pas"]);
        let report = composition(&[set]).unwrap();
        assert_eq!(
            report.entries,
            vec![
                ("gj".to_string(), "ne-soutient-pas".to_string(), 33.3),
                ("gj".to_string(), "soutient".to_string(), 66.7),
            ]
        );
        let sum: f64 = report.entries.iter().map(|e| e.2).sum();
        assert!((sum - 100.0).abs() <= 0.1);
    }

    #[test]
    fn composition_single_modality_is_hundred() {
        let set = prediction_set("sexe", &["homme", "homme"]);
        let report = composition(&[set]).unwrap();
        assert_eq!(report.entries, vec![("sexe".to_string(), "homme".to_string(), 100.0)]);
    }

    #[test]
    fn composition_four_modalities_hand_counts() {
        let set = prediction_set(
            "age",
            &["jeune", "jeune", "jeune", "actif", "actif", "senior", "jeune-actif", "jeune"],
        );
        let report = composition(&[set]).unwrap();
        let get = |m: &str| {
            report.entries.iter().find(|(_, modality, _)| modality == m).unwrap().2
        };
        assert_eq!(get("jeune"), 50.0);
        assert_eq!(get("actif"), 25.0);
        assert_eq!(get("senior"), 12.5);
        assert_eq!(get("jeune-actif"), 12.5);
        let csv = report.to_csv();
        assert!(csv.starts_with("target,modality,percent\n"));
        assert!(csv.contains("age,jeune,50.0\n"));
    }

    #[test]
    fn composition_empty_is_an_error() {
        let set = PredictionSet { target: "gj".to_string(), rows: vec![] };
        assert_eq!(composition(&[set]).unwrap_err(), EvalError::EmptyPredictions);
    }
}
