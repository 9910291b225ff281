//! Document descriptors from the covariance of word vectors, and the
//! nearest-centroid classifier over them.

use serde::{Deserialize, Serialize};

use super::{ClassifyError, EmbeddingModel};

/// Length of a descriptor: upper triangle of the covariance matrix, plus the
/// mean vector when enabled.
pub fn descriptor_len(dim: usize, include_mean: bool) -> usize {
    dim * (dim + 1) / 2 + if include_mean { dim } else { 0 }
}

/// Population covariance descriptor of a document's word vectors (with
/// multiplicity): row-major upper triangle, optionally preceded by the mean.
pub fn docov(
    tokens: &[String],
    embeddings: &EmbeddingModel,
    include_mean: bool,
) -> Result<Vec<f64>, ClassifyError> {
    let dim = embeddings.dim;
    let ids: Vec<u32> = tokens.iter().filter_map(|t| embeddings.id_of(t)).collect();
    if ids.is_empty() {
        return Err(ClassifyError::UnrepresentableDocument);
    }
    let n = ids.len() as f64;

    let mut mean = vec![0.0f64; dim];
    for &id in &ids {
        for (m, &v) in mean.iter_mut().zip(embeddings.vector_of(id)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = vec![0.0f64; dim * dim];
    let mut centered = vec![0.0f64; dim];
    for &id in &ids {
        for (c, (&v, m)) in centered.iter_mut().zip(embeddings.vector_of(id).iter().zip(&mean)) {
            *c = v as f64 - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[i * dim + j] += centered[i] * centered[j];
            }
        }
    }

    let mut descriptor = Vec::with_capacity(descriptor_len(dim, include_mean));
    if include_mean {
        descriptor.extend_from_slice(&mean);
    }
    for i in 0..dim {
        for j in i..dim {
            descriptor.push(cov[i * dim + j] / n);
        }
    }
    Ok(descriptor)
}

/// Per-modality mean descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentroidModel {
    pub target: String,
    pub modalities: Vec<String>,
    pub include_mean: bool,
    pub descriptor_len: usize,
    pub centroids: Vec<Vec<f64>>,
}

/// Average the training descriptors of each modality. Labels index
/// `modalities`; every modality needs at least one representable document.
pub fn train_centroid(
    target: &str,
    modalities: &[String],
    include_mean: bool,
    descriptors: &[(u32, Vec<f64>)],
) -> Result<CentroidModel, ClassifyError> {
    let dlen = descriptors.first().map(|(_, d)| d.len()).unwrap_or(0);
    let mut sums = vec![vec![0.0f64; dlen]; modalities.len()];
    let mut counts = vec![0usize; modalities.len()];
    for (label, descriptor) in descriptors {
        assert_eq!(descriptor.len(), dlen, "descriptor length mismatch");
        counts[*label as usize] += 1;
        for (s, d) in sums[*label as usize].iter_mut().zip(descriptor) {
            *s += d;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(ClassifyError::UnrepresentableModality(modalities[c].clone()));
        }
        sums[c].iter_mut().for_each(|s| *s /= count as f64);
    }
    Ok(CentroidModel {
        target: target.to_string(),
        modalities: modalities.to_vec(),
        include_mean,
        descriptor_len: dlen,
        centroids: sums,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// Nearest centroid by cosine similarity; ties keep the lexicographically
/// smallest modality. A zero query or zero centroid has no defined cosine.
pub fn predict_centroid(
    model: &CentroidModel,
    descriptor: &[f64],
) -> Result<(u32, f64), ClassifyError> {
    let mut best: Option<(u32, f64)> = None;
    for (c, centroid) in model.centroids.iter().enumerate() {
        let sim = cosine(descriptor, centroid).ok_or(ClassifyError::UndefinedCosine)?;
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((c as u32, sim));
        }
    }
    best.ok_or(ClassifyError::UndefinedCosine)
}
