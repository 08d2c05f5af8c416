//! Embedding vectors and their content-addressed keys.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("embedding is empty")]
    Empty,
    #[error("embedding contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("embedding has zero norm and cannot be normalized")]
    ZeroNorm,
}

/// Fixed-length sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self { dim: values.len(), values, model_id: model_id.into() })
    }

    /// Builds a unit-L2-norm vector from raw service output.
    pub fn normalized(mut values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(VectorError::ZeroNorm);
        }
        for v in &mut values {
            *v /= norm;
        }
        Self::new(values, model_id)
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    // Scale by the max magnitude first so huge or tiny inputs don't overflow.
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = values.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * libm::sqrt(sum)
}

/// SHA-256 digest used as an embedding cache key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentDigest(pub [u8; 32]);

impl ContentDigest {
    pub fn to_hex(&self) -> String {
        const HEX: &[u8; 16] = b"0123456789abcdef";
        let mut out = String::with_capacity(64);
        for b in self.0 {
            out.push(HEX[(b >> 4) as usize] as char);
            out.push(HEX[(b & 0xf) as usize] as char);
        }
        out
    }
}

impl fmt::Display for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentDigest({})", self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid digest: expected 64 hex characters")]
pub struct DigestParseError;

impl FromStr for ContentDigest {
    type Err = DigestParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 64 {
            return Err(DigestParseError);
        }
        let nibble = |c: u8| -> Result<u8, DigestParseError> {
            match c {
                b'0'..=b'9' => Ok(c - b'0'),
                b'a'..=b'f' => Ok(c - b'a' + 10),
                b'A'..=b'F' => Ok(c - b'A' + 10),
                _ => Err(DigestParseError),
            }
        };
        let mut out = [0u8; 32];
        for (i, pair) in bytes.chunks(2).enumerate() {
            out[i] = (nibble(pair[0])? << 4) | nibble(pair[1])?;
        }
        Ok(ContentDigest(out))
    }
}

impl Serialize for ContentDigest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentDigest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cache key of `text` under `model_id`. Surrounding whitespace and line
/// ending style do not change the key.
pub fn content_hash(model_id: &str, text: &str) -> ContentDigest {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0u8]);
    let trimmed = text.trim();
    let mut rest = trimmed;
    while let Some(pos) = rest.find("\r\n") {
        hasher.update(&rest.as_bytes()[..pos]);
        hasher.update(b"\n");
        rest = &rest[pos + 2..];
    }
    hasher.update(rest.as_bytes());
    ContentDigest(hasher.finalize().into())
}

/// Signed feature-hashing embedding of lowercase word unigrams and bigrams.
///
/// Deterministic and dependency-free; used by the offline simulator in place
/// of a neural embedding service.
pub fn hashing_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; dim];
    if dim == 0 {
        return out;
    }
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let mut add = |parts: &[&str]| {
        let mut hasher = Sha256::new();
        for p in parts {
            hasher.update(p.as_bytes());
            hasher.update([0x1f]);
        }
        let digest = hasher.finalize();
        let mut idx = [0u8; 8];
        idx.copy_from_slice(&digest[..8]);
        let bucket = (u64::from_le_bytes(idx) % dim as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        out[bucket] += sign;
    };
    for w in &words {
        add(&[w]);
    }
    for pair in words.windows(2) {
        add(pair);
    }
    // Constant component keeps the vector non-zero for any non-empty text.
    add(&["<bias>"]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn normalized_has_unit_norm() {
        let v = EmbeddingVector::normalized(vec![3.0, 4.0], "m").unwrap();
        assert_eq!(v.values, vec![0.6, 0.8]);
        assert_eq!(v.dim, 2);
        assert!(matches!(EmbeddingVector::normalized(vec![0.0, 0.0], "m"), Err(VectorError::ZeroNorm)));
        assert!(matches!(EmbeddingVector::new(vec![f64::NAN], "m"), Err(VectorError::NonFinite(0))));
        assert!(matches!(EmbeddingVector::new(vec![], "m"), Err(VectorError::Empty)));
    }

    #[test]
    fn digest_hex_roundtrip() {
        let d = content_hash("BAAI/bge-large-en-v1.5", "What is it?");
        let parsed: ContentDigest = d.to_hex().parse().unwrap();
        assert_eq!(parsed, d);
        assert_eq!(content_hash("BAAI/bge-large-en-v1.5", "  What is it?\n"), d);
        assert_ne!(content_hash("other", "What is it?"), d);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<ContentDigest>(&json).unwrap(), d);
    }

    #[test]
    fn hashing_embedding_is_deterministic() {
        let a = hashing_embedding("A 45-year-old woman presents", 64);
        assert_eq!(a, hashing_embedding("A 45-year-old woman presents", 64));
        assert!(a.iter().any(|v| *v != 0.0));
    }

    proptest! {
        #[test]
        fn unit_norm_within_tolerance(values in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
            prop_assume!(values.iter().any(|v| *v != 0.0));
            let v = EmbeddingVector::normalized(values, "m").unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-6);
        }
    }
}
