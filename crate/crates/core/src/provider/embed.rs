use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::ProviderError;

pub const DEFAULT_DIMENSION: usize = 256;

/// An L2-normalized vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values`; returns `None` for a zero or non-finite vector.
    pub fn from_values(mut values: Vec<f64>) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Some(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two unit vectors, i.e. their dot product.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dimension(), b.dimension());
    a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

/// Signed feature hashing over word unigrams and bigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, 0)
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn hash(&self, feature: &str) -> u64 {
        let mut h = FnvHasher::default();
        h.write_u64(self.seed);
        h.write(feature.as_bytes());
        h.finish()
    }

    fn add(&self, acc: &mut [f64], feature: &str, weight: f64) {
        let h = self.hash(feature);
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign * weight;
    }
}

pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let mut acc = vec![0.0; self.dimension];
        let toks = tokens(trimmed);
        for t in &toks {
            self.add(&mut acc, t, 1.0);
        }
        for w in toks.windows(2) {
            self.add(&mut acc, &format!("{} {}", w[0], w[1]), 0.5);
        }
        if toks.is_empty() {
            self.add(&mut acc, trimmed, 1.0);
        }
        // Opposite-signed collisions can cancel; fall back to the whole string.
        EmbeddingVector::from_values(acc.clone())
            .or_else(|| {
                let mut acc = acc;
                self.add(&mut acc, &format!("#{trimmed}"), 1.0);
                EmbeddingVector::from_values(acc)
            })
            .ok_or(ProviderError::EmptyText)
    }
}
