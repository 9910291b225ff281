//! Skip-gram word embeddings with negative sampling, single-threaded and
//! fully deterministic for a fixed seed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, ClassifyError, ModelIoError};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SkipgramParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramParams {
    fn default() -> Self {
        SkipgramParams {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            learning_rate: 0.05,
            seed: 1,
        }
    }
}

/// Map from forms to vectors (the input matrix of the skip-gram model).
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub dim: usize,
    /// Sorted by descending corpus frequency, then form.
    pub vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// Row-major, `vocab.len() * dim`.
    pub vectors: Vec<f32>,
    pub params: SkipgramParams,
    /// Mean training loss per epoch, for convergence checks.
    pub epoch_loss: Vec<f64>,
}

impl EmbeddingModel {
    pub fn vector(&self, form: &str) -> Option<&[f32]> {
        self.index.get(form).map(|&id| self.vector_of(id))
    }

    pub fn vector_of(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn id_of(&self, form: &str) -> Option<u32> {
        self.index.get(form).copied()
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (va, vb) = (self.vector(a)?, self.vector(b)?);
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = va.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return None;
        }
        Some(dot / (na * nb))
    }
}

fn sigmoid(z: f32) -> f32 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cumulative unigram^0.75 table for negative sampling.
struct NegativeTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl NegativeTable {
    fn new(counts: &[u64]) -> NegativeTable {
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut acc = 0.0;
        for &c in counts {
            acc += (c as f64).powf(0.75);
            cumulative.push(acc);
        }
        NegativeTable { cumulative, total: acc }
    }

    fn sample(&self, rng: &mut SplitMix64) -> u32 {
        let x = rng.next_f64() * self.total;
        self.cumulative.partition_point(|&c| c <= x) as u32
    }
}

/// Train skip-gram with negative sampling on lemma streams.
pub fn train_skipgram(
    documents: &[Vec<String>],
    params: &SkipgramParams,
) -> Result<EmbeddingModel, ClassifyError> {
    assert!(params.dim >= 1 && params.window >= 1 && params.epochs >= 1);
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in documents {
        for t in doc {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut vocab: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count as u64)
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if vocab.is_empty() {
        return Err(ClassifyError::EmptyVocabulary);
    }
    let index: HashMap<String, u32> =
        vocab.iter().enumerate().map(|(i, (t, _))| (t.clone(), i as u32)).collect();
    let freq: Vec<u64> = vocab.iter().map(|&(_, c)| c).collect();
    let table = NegativeTable::new(&freq);

    let n_words = vocab.len();
    let dim = params.dim;
    let mut rng = SplitMix64::new(params.seed);
    let mut input: Vec<f32> = (0..n_words * dim)
        .map(|_| rng.next_range_f64(-0.5 / dim as f64, 0.5 / dim as f64) as f32)
        .collect();
    let mut output: Vec<f32> = vec![0.0; n_words * dim];

    // Token streams as ids, out-of-vocabulary forms dropped.
    let id_streams: Vec<Vec<u32>> = documents
        .iter()
        .map(|doc| doc.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();
    let total_positions: u64 =
        id_streams.iter().map(|s| s.len() as u64).sum::<u64>() * params.epochs as u64;

    let mut processed: u64 = 0;
    let mut grad_center = vec![0.0f32; dim];
    let mut epoch_loss = Vec::with_capacity(params.epochs);

    for _epoch in 0..params.epochs {
        let mut loss_acc = 0.0f64;
        let mut loss_pairs = 0u64;
        for stream in &id_streams {
            for (pos, &center) in stream.iter().enumerate() {
                processed += 1;
                let progress = processed as f64 / (total_positions.max(1)) as f64;
                let alpha =
                    (params.learning_rate * (1.0 - progress)).max(params.learning_rate * 1e-4)
                        as f32;
                let span = 1 + rng.next_below(params.window as u64) as usize;
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(stream.len() - 1);
                for (ctx_pos, &context) in
                    stream.iter().enumerate().take(hi + 1).skip(lo)
                {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad_center.iter_mut().for_each(|g| *g = 0.0);
                    let center_row = center as usize * dim;

                    // Positive pair plus sampled negatives.
                    for neg in 0..=params.negatives {
                        let (target, label) = if neg == 0 {
                            (context, 1.0f32)
                        } else {
                            let sampled = table.sample(&mut rng);
                            if sampled == context {
                                continue;
                            }
                            (sampled, 0.0f32)
                        };
                        let target_row = target as usize * dim;
                        let mut dot = 0.0f32;
                        for d in 0..dim {
                            dot += input[center_row + d] * output[target_row + d];
                        }
                        let pred = sigmoid(dot);
                        let g = (label - pred) * alpha;
                        loss_acc += -f64::from(if label > 0.5 {
                            pred.max(1e-7).ln()
                        } else {
                            (1.0 - pred).max(1e-7).ln()
                        });
                        loss_pairs += 1;
                        for d in 0..dim {
                            grad_center[d] += g * output[target_row + d];
                            output[target_row + d] += g * input[center_row + d];
                        }
                    }
                    for d in 0..dim {
                        input[center_row + d] += grad_center[d];
                    }
                }
            }
        }
        epoch_loss.push(if loss_pairs > 0 { loss_acc / loss_pairs as f64 } else { 0.0 });
    }

    Ok(EmbeddingModel {
        dim,
        vocab: vocab.into_iter().map(|(t, _)| t).collect(),
        index,
        vectors: input,
        params: *params,
        epoch_loss,
    })
}

// ---------------------------------------------------------------------------
// Binary persistence: one JSON header line, then little-endian f32 rows.
// ---------------------------------------------------------------------------

pub const EMBEDDING_FORMAT: &str = "textomet-embedding";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingHeader {
    format: String,
    version: u32,
    dim: usize,
    words: Vec<String>,
    params: SkipgramParams,
    sha256: String,
}

impl EmbeddingModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: Vec<u8> = self.vectors.iter().flat_map(|v| v.to_le_bytes()).collect();
        let header = EmbeddingHeader {
            format: EMBEDDING_FORMAT.to_string(),
            version: EMBEDDING_VERSION,
            dim: self.dim,
            words: self.vocab.clone(),
            params: self.params,
            sha256: sha256_hex(&payload),
        };
        let mut out = serde_json::to_vec(&header).expect("embedding header");
        out.push(b'\n');
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingModel, ModelIoError> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(ModelIoError::MissingHeader)?;
        let header: EmbeddingHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| ModelIoError::MalformedHeader(e.to_string()))?;
        if header.format != EMBEDDING_FORMAT {
            return Err(ModelIoError::WrongFormat(header.format));
        }
        if header.version != EMBEDDING_VERSION {
            return Err(ModelIoError::WrongVersion(header.version));
        }
        let payload = &bytes[newline + 1..];
        let expected = header.words.len() * header.dim * 4;
        if payload.len() != expected {
            return Err(ModelIoError::Truncated { expected, found: payload.len() });
        }
        if sha256_hex(payload) != header.sha256 {
            return Err(ModelIoError::ChecksumMismatch);
        }
        let vectors: Vec<f32> = payload
            .chunks_exact(4)
            .map(|chunk| f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")))
            .collect();
        let index = header
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(EmbeddingModel {
            dim: header.dim,
            vocab: header.words,
            index,
            vectors,
            params: header.params,
            epoch_loss: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn two_topic_corpus(seed: u64, docs_per_topic: usize) -> Vec<Vec<String>> {
        let topic_a: Vec<String> = (0..8).map(|i| format!("mer{i}")).collect();
        let topic_b: Vec<String> = (0..8).map(|i| format!("mont{i}")).collect();
        let mut rng = SplitMix64::new(seed);
        let mut docs = Vec::new();
        for t in 0..2 {
            let words = if t == 0 { &topic_a } else { &topic_b };
            for _ in 0..docs_per_topic {
                let doc: Vec<String> = (0..30)
                    .map(|_| words[rng.next_below(words.len() as u64) as usize].clone())
                    .collect();
                docs.push(doc);
            }
        }
        docs
    }

    fn small_params(seed: u64) -> SkipgramParams {
        SkipgramParams {
            dim: 16,
            window: 4,
            negatives: 5,
            epochs: 8,
            min_count: 1,
            learning_rate: 0.05,
            seed,
        }
    }

    #[test]
    fn vectors_have_declared_shape_and_finite_entries() {
        let docs = two_topic_corpus(3, 10);
        let model = train_skipgram(&docs, &small_params(3)).unwrap();
        assert_eq!(model.vocab.len(), 16);
        assert_eq!(model.vectors.len(), 16 * model.dim);
        assert!(model.vectors.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn intra_topic_cosine_beats_inter_topic() {
        let docs = two_topic_corpus(5, 20);
        let model = train_skipgram(&docs, &small_params(5)).unwrap();
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                if i < j {
                    intra.push(model.cosine(&format!("mer{i}"), &format!("mer{j}")).unwrap());
                    intra.push(model.cosine(&format!("mont{i}"), &format!("mont{j}")).unwrap());
                }
                inter.push(model.cosine(&format!("mer{i}"), &format!("mont{j}")).unwrap());
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&intra) > mean(&inter) + 0.1,
            "intra {} vs inter {}",
            mean(&intra),
            mean(&inter)
        );
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let docs = two_topic_corpus(7, 15);
        let model = train_skipgram(&docs, &small_params(7)).unwrap();
        assert!(model.epoch_loss.len() >= 5);
        assert!(
            model.epoch_loss[4] < model.epoch_loss[0],
            "loss curve {:?}",
            model.epoch_loss
        );
    }

    #[test]
    fn min_count_filters_vocabulary_and_can_empty_it() {
        let docs = vec![vec!["unique".to_string()]];
        let mut params = small_params(1);
        params.min_count = 2;
        assert_eq!(train_skipgram(&docs, &params).unwrap_err(), ClassifyError::EmptyVocabulary);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let docs = two_topic_corpus(9, 8);
        let a = train_skipgram(&docs, &small_params(9)).unwrap();
        let b = train_skipgram(&docs, &small_params(9)).unwrap();
        assert_eq!(a.vectors, b.vectors);
        assert_eq!(a.epoch_loss, b.epoch_loss);
    }

    #[test]
    fn binary_roundtrip_and_corruption_detection() {
        let docs = two_topic_corpus(11, 6);
        let model = train_skipgram(&docs, &small_params(11)).unwrap();
        let bytes = model.to_bytes();
        let loaded = EmbeddingModel::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.vocab, model.vocab);
        assert_eq!(loaded.vectors, model.vectors);

        let mut corrupted = bytes.clone();
        let last = corrupted.len() - 1;
        corrupted[last] ^= 0xff;
        assert_eq!(
            EmbeddingModel::from_bytes(&corrupted).unwrap_err(),
            ModelIoError::ChecksumMismatch
        );
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            EmbeddingModel::from_bytes(truncated).unwrap_err(),
            ModelIoError::Truncated { .. }
        ));
    }
}
