//! Label transfer: three classifiers over document text (multinomial naive
//! Bayes, one-against-all logistic regression, skip-gram embeddings + DoCoV
//! descriptors + nearest centroid) combined by majority vote.

mod docov;
mod logreg;
mod nb;
mod sgns;

pub use docov::{descriptor_len, docov, predict_centroid, train_centroid, CentroidModel};
pub use logreg::{
    logistic_loss_grad, predict_logreg, train_logreg, LogisticModel, LogisticParams, LogisticTask,
};
pub use nb::{predict_nb, train_nb, NaiveBayesModel};
pub use sgns::{train_skipgram, EmbeddingModel, SkipgramParams};

use std::collections::HashMap;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::prep::{self, PrepConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("target variable `{0}` has fewer than two modalities")]
    NotEnoughModalities(String),
    #[error("modality `{0}` has no training document")]
    EmptyModality(String),
    #[error("smoothing must be positive, got {0}")]
    BadSmoothing(f64),
    #[error("training diverged at epoch {epoch}: loss {loss}; lower the learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("embedding vocabulary is empty after min_count filtering")]
    EmptyVocabulary,
    #[error("unrepresentable document: no in-vocabulary form")]
    UnrepresentableDocument,
    #[error("undefined cosine: zero descriptor or zero centroid")]
    UndefinedCosine,
    #[error("modality `{0}` has no representable training document")]
    UnrepresentableModality(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelIoError {
    #[error("missing model header line")]
    MissingHeader,
    #[error("malformed model header: {0}")]
    MalformedHeader(String),
    #[error("unexpected model format `{0}`")]
    WrongFormat(String),
    #[error("expected model kind `{expected}`, found `{found}`")]
    WrongKind { expected: String, found: String },
    #[error("unsupported model version {0}")]
    WrongVersion(u32),
    #[error("checksum mismatch: model file is corrupted")]
    ChecksumMismatch,
    #[error("malformed model payload: {0}")]
    MalformedPayload(String),
    #[error("truncated model payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Count features over a fixed vocabulary; out-of-vocabulary forms vanish.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl FeatureSpace {
    /// Vocabulary of lemmas reaching `min_form_freq` across the documents,
    /// sorted lexicographically.
    pub fn build(token_streams: &[Vec<String>], min_form_freq: usize) -> FeatureSpace {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for tokens in token_streams {
            for t in tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut vocab: Vec<String> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_form_freq as u64)
            .map(|(t, _)| t.to_string())
            .collect();
        vocab.sort();
        FeatureSpace::from_vocab(vocab)
    }

    pub fn from_vocab(vocab: Vec<String>) -> FeatureSpace {
        let index = vocab.iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect();
        FeatureSpace { vocab, index }
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Sparse sorted counts of the in-vocabulary tokens.
    pub fn featurize(&self, tokens: &[String]) -> Vec<(u32, u32)> {
        let mut cols: Vec<u32> =
            tokens.iter().filter_map(|t| self.index.get(t.as_str()).copied()).collect();
        cols.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::new();
        for col in cols {
            match out.last_mut() {
                Some((c, n)) if *c == col => *n += 1,
                _ => out.push((col, 1)),
            }
        }
        out
    }
}

/// A document ready for training: dense label index, lemma stream, count
/// features.
#[derive(Debug, Clone)]
pub struct LabeledDoc {
    pub doc_id: usize,
    pub label: u32,
    pub tokens: Vec<String>,
    pub counts: Vec<(u32, u32)>,
}

/// The subset of a corpus carrying one modality of the target variable,
/// with per-classifier feature representations.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub target: String,
    /// Sorted; label indices point here.
    pub modalities: Vec<String>,
    pub features: FeatureSpace,
    pub docs: Vec<LabeledDoc>,
}

impl LabeledCorpus {
    /// Keep the documents that carry `target`, tokenize and featurize them.
    pub fn from_corpus(
        corpus: &Corpus,
        target: &str,
        config: &PrepConfig,
    ) -> Result<LabeledCorpus, ClassifyError> {
        let mut modalities: Vec<String> = corpus
            .variable_catalog
            .get(target)
            .map(|set| set.iter().cloned().collect())
            .unwrap_or_default();
        modalities.sort();
        if modalities.len() < 2 {
            return Err(ClassifyError::NotEnoughModalities(target.to_string()));
        }

        let mut streams = Vec::new();
        let mut meta = Vec::new();
        for doc in &corpus.documents {
            let Some(modality) = doc.variables.get(target) else { continue };
            let label = modalities.binary_search(modality).expect("modality in catalog") as u32;
            streams.push(prep::lemmatize(&prep::tokenize(&doc.text, config), config));
            meta.push((doc.id, label));
        }
        let features = FeatureSpace::build(&streams, config.min_form_freq);
        let docs = meta
            .into_iter()
            .zip(streams)
            .map(|((doc_id, label), tokens)| {
                let counts = features.featurize(&tokens);
                LabeledDoc { doc_id, label, tokens, counts }
            })
            .collect();
        Ok(LabeledCorpus {
            target: target.to_string(),
            modalities,
            features,
            docs,
        })
    }

    /// Number of documents per modality.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.modalities.len()];
        for d in &self.docs {
            counts[d.label as usize] += 1;
        }
        counts
    }

    /// A copy holding only the given documents (indices into `docs`).
    pub fn subset(&self, indices: &[usize]) -> LabeledCorpus {
        LabeledCorpus {
            target: self.target.clone(),
            modalities: self.modalities.clone(),
            features: self.features.clone(),
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
        }
    }
}

/// Lemma streams for every document of a corpus, in document order.
pub fn prepare_documents(corpus: &Corpus, config: &PrepConfig) -> Vec<Vec<String>> {
    corpus
        .documents
        .iter()
        .map(|d| prep::lemmatize(&prep::tokenize(&d.text, config), config))
        .collect()
}

/// How the final label of a document was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteDecision {
    /// At least two of the three voters agreed.
    Majority,
    /// Three-way disagreement, resolved by the highest within-classifier
    /// score percentile.
    Percentile,
    /// The centroid voter abstained; the two remaining voters decided
    /// (naive Bayes wins a disagreement).
    Reduced,
}

/// Majority vote over exactly three (label, within-classifier percentile)
/// votes. On three-way disagreement the vote with the highest percentile
/// wins; equal percentiles fall back to voter order.
pub fn majority_vote(votes: &[(u32, f64); 3]) -> (u32, VoteDecision) {
    for (i, &(label, _)) in votes.iter().enumerate() {
        for &(other, _) in votes.iter().skip(i + 1) {
            if label == other {
                return (label, VoteDecision::Majority);
            }
        }
    }
    let mut best = votes[0];
    for &(label, pct) in &votes[1..] {
        if pct > best.1 {
            best = (label, pct);
        }
    }
    (best.0, VoteDecision::Percentile)
}

/// Per-document predictions of the three classifiers plus the final vote.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPrediction {
    pub doc_id: usize,
    pub nb: (String, f64),
    pub logreg: (String, f64),
    /// None when the document is unrepresentable for the centroid voter.
    pub centroid: Option<(String, f64)>,
    pub vote: String,
    pub decided_by: VoteDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub target: String,
    pub rows: Vec<DocPrediction>,
}

/// Midrank percentile of each score within its own classifier's batch.
pub fn percentiles(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    scores
        .iter()
        .map(|&s| {
            let less = sorted.partition_point(|&x| x < s);
            let leq = sorted.partition_point(|&x| x <= s);
            (less as f64 + 0.5 * (leq - less) as f64) / n as f64
        })
        .collect()
}

/// Combine per-classifier predictions into the final vote. All three vectors
/// are aligned with `doc_ids`.
pub fn combine_predictions(
    target: &str,
    modalities: &[String],
    doc_ids: &[usize],
    nb: &[(u32, f64)],
    logreg: &[(u32, f64)],
    centroid: &[Option<(u32, f64)>],
) -> PredictionSet {
    assert_eq!(doc_ids.len(), nb.len());
    assert_eq!(doc_ids.len(), logreg.len());
    assert_eq!(doc_ids.len(), centroid.len());

    let nb_pct = percentiles(&nb.iter().map(|&(_, s)| s).collect::<Vec<_>>());
    let lr_pct = percentiles(&logreg.iter().map(|&(_, s)| s).collect::<Vec<_>>());
    let cent_scores: Vec<f64> = centroid.iter().flatten().map(|&(_, s)| s).collect();
    let cent_pct_values = percentiles(&cent_scores);
    let mut cent_pct_iter = cent_pct_values.iter();

    let rows = doc_ids
        .iter()
        .enumerate()
        .map(|(i, &doc_id)| {
            let cent = centroid[i].map(|(label, score)| {
                (label, score, *cent_pct_iter.next().expect("percentile per prediction"))
            });
            let (vote_idx, decided_by) = match cent {
                Some((c_label, _, c_pct)) => majority_vote(&[
                    (nb[i].0, nb_pct[i]),
                    (logreg[i].0, lr_pct[i]),
                    (c_label, c_pct),
                ]),
                // Two voters left: on agreement the common label, on
                // disagreement naive Bayes wins. Both cases yield nb's label.
                None => (nb[i].0, VoteDecision::Reduced),
            };
            DocPrediction {
                doc_id,
                nb: (modalities[nb[i].0 as usize].clone(), nb[i].1),
                logreg: (modalities[logreg[i].0 as usize].clone(), logreg[i].1),
                centroid: cent
                    .map(|(label, score, _)| (modalities[label as usize].clone(), score)),
                vote: modalities[vote_idx as usize].clone(),
                decided_by,
            }
        })
        .collect();
    PredictionSet { target: target.to_string(), rows }
}

impl PredictionSet {
    /// `doc,target,nb_label,nb_score,lr_label,lr_score,cent_label,cent_score,vote`
    /// with empty centroid cells for abstentions. Header emitted once for a
    /// slice of sets via [`predictions_csv`].
    fn push_csv(&self, out: &mut String) {
        for row in &self.rows {
            let (cl, cs) = match &row.centroid {
                Some((l, s)) => (l.clone(), format!("{s}")),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.doc_id,
                self.target,
                row.nb.0,
                row.nb.1,
                row.logreg.0,
                row.logreg.1,
                cl,
                cs,
                row.vote
            ));
        }
    }
}

pub const PREDICTIONS_CSV_HEADER: &str =
    "doc,target,nb_label,nb_score,lr_label,lr_score,cent_label,cent_score,vote";

pub fn predictions_csv(sets: &[PredictionSet]) -> String {
    let mut out = String::from(PREDICTIONS_CSV_HEADER);
    out.push('\n');
    for set in sets {
        set.push_csv(&mut out);
    }
    out
}

/// Reparse a predictions CSV into one set per target (votes and labels only
/// carry through; scores are kept as written).
pub fn parse_predictions_csv(text: &str) -> Result<Vec<PredictionSet>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == PREDICTIONS_CSV_HEADER => {}
        other => return Err(format!("unexpected predictions header: {other:?}")),
    }
    let mut sets: Vec<PredictionSet> = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(format!("line {}: expected 9 cells, found {}", no + 2, cells.len()));
        }
        let doc_id: usize =
            cells[0].parse().map_err(|e| format!("line {}: bad doc id: {e}", no + 2))?;
        let target = cells[1].to_string();
        let parse_score = |s: &str, what: &str| -> Result<f64, String> {
            s.parse().map_err(|e| format!("line {}: bad {what} score: {e}", no + 2))
        };
        let centroid = if cells[6].is_empty() {
            None
        } else {
            Some((cells[6].to_string(), parse_score(cells[7], "centroid")?))
        };
        let row = DocPrediction {
            doc_id,
            nb: (cells[2].to_string(), parse_score(cells[3], "nb")?),
            logreg: (cells[4].to_string(), parse_score(cells[5], "logreg")?),
            centroid,
            vote: cells[8].to_string(),
            decided_by: VoteDecision::Majority,
        };
        match sets.iter_mut().find(|s| s.target == target) {
            Some(set) => set.rows.push(row),
            None => sets.push(PredictionSet { target, rows: vec![row] }),
        }
    }
    Ok(sets)
}

// ---------------------------------------------------------------------------
// Model files: a JSON header line carrying a checksum, then the payload.
// ---------------------------------------------------------------------------

pub const MODEL_FORMAT: &str = "textomet-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    kind: String,
    version: u32,
    sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialize a model as header line + JSON payload line.
pub fn save_json_model<T: Serialize>(kind: &str, model: &T) -> String {
    let payload = serde_json::to_string(model).expect("model serialization cannot fail");
    let header = ModelHeader {
        format: MODEL_FORMAT.to_string(),
        kind: kind.to_string(),
        version: MODEL_VERSION,
        sha256: sha256_hex(payload.as_bytes()),
    };
    format!("{}\n{payload}\n", serde_json::to_string(&header).expect("header serialization"))
}

/// Load a model saved by [`save_json_model`], verifying kind, version and
/// checksum. Any corrupted byte fails loudly.
pub fn load_json_model<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, ModelIoError> {
    let mut lines = text.splitn(2, '\n');
    let header_line = lines.next().ok_or(ModelIoError::MissingHeader)?;
    let payload = lines.next().ok_or(ModelIoError::MissingHeader)?;
    let payload = payload.strip_suffix('\n').unwrap_or(payload);
    let header: ModelHeader = serde_json::from_str(header_line)
        .map_err(|e| ModelIoError::MalformedHeader(e.to_string()))?;
    if header.format != MODEL_FORMAT {
        return Err(ModelIoError::WrongFormat(header.format));
    }
    if header.kind != kind {
        return Err(ModelIoError::WrongKind { expected: kind.to_string(), found: header.kind });
    }
    if header.version != MODEL_VERSION {
        return Err(ModelIoError::WrongVersion(header.version));
    }
    if sha256_hex(payload.as_bytes()) != header.sha256 {
        return Err(ModelIoError::ChecksumMismatch);
    }
    serde_json::from_str(payload).map_err(|e| ModelIoError::MalformedPayload(e.to_string()))
}
