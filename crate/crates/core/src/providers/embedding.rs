use serde::{Deserialize, Serialize};

use super::{Embedder, ProviderError};
use crate::text::{fnv1a64, tokenize};

/// A dense embedding, stored unit-normalized unless it is the all-zero sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. An all-zero input stays zero.
    pub fn normalized(values: Vec<f32>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::InvalidRequest("embedding must have at least one dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::InvalidRequest("embedding contains non-finite values".into()));
        }
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(Self { values });
        }
        Ok(Self {
            values: values.into_iter().map(|v| (f64::from(v) / norm) as f32).collect(),
        })
    }

    /// Wraps values already known to be unit length (e.g. read back from an index).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn zero(dims: usize) -> Self {
        Self { values: vec![0.0; dims] }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub(crate) fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

/// Cosine similarity, clamped into [-1, 1] against rounding.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, ProviderError> {
    if u.dims() != v.dims() {
        return Err(ProviderError::DimensionMismatch {
            left: u.dims(),
            right: v.dims(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(ProviderError::ZeroVector);
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Deterministic offline embedder: word unigrams and bigrams are feature-hashed
/// into `dims` non-negative buckets and the result is L2-normalized. Texts that
/// share vocabulary land close together; identical texts have cosine 1.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dims: usize,
    id: String,
}

impl HashingEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dims must be positive");
        Self {
            dims,
            id: format!("hashing-ngram-v1/{dims}"),
        }
    }

    fn bucket(&self, feature: &str, salt: u8) -> usize {
        let mut bytes = Vec::with_capacity(feature.len() + 1);
        bytes.push(salt);
        bytes.extend_from_slice(feature.as_bytes());
        (fnv1a64(&bytes) % self.dims as u64) as usize
    }
}

impl Embedder for HashingEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let mut counts = vec![0f32; self.dims];
        let tokens = tokenize(text);
        for token in &tokens {
            counts[self.bucket(token, b'u')] += 1.0;
        }
        for pair in tokens.windows(2) {
            counts[self.bucket(&format!("{} {}", pair[0], pair[1]), b'b')] += 0.5;
        }
        if tokens.is_empty() {
            // Punctuation-only input still gets a non-zero vector.
            counts[self.bucket(text, b'r')] = 1.0;
        }
        EmbeddingVector::normalized(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_hand_values() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-7, "{c}");
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(ProviderError::DimensionMismatch { left: 2, right: 3 })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &EmbeddingVector::zero(2)),
            Err(ProviderError::ZeroVector)
        ));
    }

    #[test]
    fn cosine_is_symmetric() {
        let a = v(&[0.3, -0.2, 0.9]);
        let b = v(&[-0.5, 0.1, 0.4]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), cosine_similarity(&b, &a).unwrap());
    }

    #[test]
    fn hashing_embedder_contract() {
        let e = HashingEmbedder::new(8);
        let a = e.embed("x").unwrap();
        assert_eq!(a, e.embed("x").unwrap());
        for text in ["x", "cisplatin resistance in lymphoma", "!!!", "a b c d e f g h i j"] {
            let out = e.embed(text).unwrap();
            assert_eq!(out.dims(), 8);
            assert!((out.norm() - 1.0).abs() < 1e-6);
        }
        let c = cosine_similarity(&e.embed("gene expression").unwrap(), &e.embed("weather report").unwrap()).unwrap();
        assert!((-1.0..=1.0).contains(&c));
        assert!(matches!(e.embed("  "), Err(ProviderError::EmptyText)));
    }

    #[test]
    fn shared_vocabulary_is_closer() {
        let e = HashingEmbedder::new(256);
        let q = e.embed("cisplatin resistance in ovarian cancer").unwrap();
        let near = e.embed("mechanisms of cisplatin resistance in ovarian cancer cells").unwrap();
        let far = e.embed("migratory patterns of arctic terns").unwrap();
        assert!(cosine_similarity(&q, &near).unwrap() > cosine_similarity(&q, &far).unwrap());
    }
}
