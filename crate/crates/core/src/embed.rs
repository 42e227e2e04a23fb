//! Embedding providers and cosine similarity.
//!
//! [`DeterministicEmbedder`] is a hashed bag-of-tokens encoder: each lowercase
//! alphanumeric token owns a pseudo-random direction, so texts that share
//! tokens have higher cosine similarity. It is stable across platforms and
//! releases, which makes banks built with it reproducible.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::types::{ReasoningPath, Vector, VectorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("embedding request timed out")]
    Timeout,
    #[error("embedding service protocol error: {0}")]
    Protocol(String),
    #[error("expected {expected} dimensions, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
}

impl From<VectorError> for EmbedError {
    fn from(e: VectorError) -> Self {
        match e {
            VectorError::Zero => EmbedError::ZeroVector,
            other => EmbedError::Protocol(format!("{other}")),
        }
    }
}

/// Maps text to a unit-norm vector of fixed dimension.
pub trait Embedder {
    fn dim(&self) -> usize;

    /// Identifies the provider configuration; banks built under one
    /// fingerprint are only meaningful under the same fingerprint.
    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str) -> Result<Vector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Embeds a path as the space-joined step names.
pub fn embed_path<E: Embedder + ?Sized>(provider: &E, path: &ReasoningPath) -> Result<Vector, EmbedError> {
    provider.embed(&path.joined())
}

/// Cosine similarity clamped into `[-1, 1]`.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

pub const DEFAULT_DIM: usize = 384;
pub const MIN_DIM: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const POSITIONAL_WEIGHT: f64 = 0.1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over length-prefixed parts, finalized with splitmix64.
pub fn hash64(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&seed.to_le_bytes());
    for part in parts {
        feed(&(part.len() as u64).to_le_bytes());
        feed(part);
    }
    splitmix64(h)
}

/// Counter-based uniform draw in `[-1, 1)`.
fn unit_draw(key: u64, counter: u64) -> f64 {
    let x = splitmix64(key ^ counter.wrapping_mul(GOLDEN));
    ((x >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
}

/// Lowercase alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicEmbedder {
    seed: u64,
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(seed: u64, dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_DIM {
            return Err(EmbedError::InvalidConfig(format!("dim must be at least {MIN_DIM}, got {dim}")));
        }
        Ok(Self { seed, dim })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Embedder for DeterministicEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("deterministic-v1:dim={}:seed={}", self.dim, self.seed)
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dim];
        for (index, token) in tokens.iter().enumerate() {
            let token_key = hash64(self.seed, &[token.as_bytes()]);
            let pos_key = hash64(self.seed, &[token.as_bytes(), &(index as u64).to_le_bytes()]);
            for (j, slot) in acc.iter_mut().enumerate() {
                let j = j as u64;
                *slot += unit_draw(token_key, j) + POSITIONAL_WEIGHT * unit_draw(pos_key, j);
            }
        }
        Ok(Vector::normalized(acc)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e42() -> DeterministicEmbedder {
        DeterministicEmbedder::new(42, DEFAULT_DIM).unwrap()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let e = e42();
        let a = e.embed("abc").unwrap();
        let b = e.embed("abc").unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(a.dim(), 384);
    }

    #[test]
    fn distinct_texts_are_distinct() {
        let e = e42();
        let a = e.embed("abc").unwrap();
        let b = e.embed("abd").unwrap();
        assert!(cosine(&a, &b).unwrap() < 1.0);
        let other_seed = DeterministicEmbedder::new(43, DEFAULT_DIM).unwrap();
        assert_ne!(a, other_seed.embed("abc").unwrap());
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let e = e42();
        let base = e.embed("compute unit rate").unwrap();
        let near = e.embed("unit rate computation").unwrap();
        let far = e.embed("temporal feasibility check").unwrap();
        assert!(cosine(&base, &near).unwrap() > cosine(&base, &far).unwrap() + 0.3);
    }

    #[test]
    fn empty_text_rejected() {
        let e = e42();
        assert_eq!(e.embed("   "), Err(EmbedError::EmptyText));
        assert_eq!(e.embed("?!"), Err(EmbedError::EmptyText));
        assert!(DeterministicEmbedder::new(1, 4).is_err());
    }

    #[test]
    fn path_embedding_is_joined_text() {
        let e = e42();
        let p = ReasoningPath::new(["A", "B"]);
        assert_eq!(embed_path(&e, &p).unwrap(), e.embed("A B").unwrap());
        let single = ReasoningPath::new(["ComputeUnitRate"]);
        assert_eq!(embed_path(&e, &single).unwrap(), e.embed("ComputeUnitRate").unwrap());
    }

    #[test]
    fn cosine_examples() {
        let v = Vector::new(vec![0.6, 0.8]).unwrap();
        let w = Vector::new(vec![0.8, 0.6]).unwrap();
        assert!((cosine(&v, &w).unwrap() - 0.96).abs() < 1e-12);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let e1 = Vector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let e2 = Vector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(cosine(&v, &e1), Err(EmbedError::DimensionMismatch { .. })));
        let z = Vector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(cosine(&v, &z), Err(EmbedError::ZeroVector));
    }

    fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12)
            .prop_flat_map(|d| (proptest::collection::vec(-1e3f64..1e3, d), proptest::collection::vec(-1e3f64..1e3, d)))
    }

    proptest! {
        #[test]
        fn cosine_bounded_and_symmetric((a, b) in vec_strategy()) {
            let a = Vector::new(a).unwrap();
            let b = Vector::new(b).unwrap();
            if let (Ok(ab), Ok(ba)) = (cosine(&a, &b), cosine(&b, &a)) {
                prop_assert!(ab.abs() <= 1.0);
                prop_assert_eq!(ab.to_bits(), ba.to_bits());
            }
        }

        #[test]
        fn joined_paths_never_collide(
            a in proptest::collection::vec("[A-Z][a-z]{0,5}", 1..4),
            b in proptest::collection::vec("[A-Z][a-z]{0,5}", 1..4),
        ) {
            let pa = ReasoningPath::parse(&a).unwrap();
            let pb = ReasoningPath::parse(&b).unwrap();
            prop_assert_eq!(pa.joined() == pb.joined(), pa == pb);
        }

        #[test]
        fn embedding_pure_in_seed_dim_text(seed in any::<u64>(), dim in 8usize..64, text in "[a-z ]{1,20}[a-z]") {
            let e = DeterministicEmbedder::new(seed, dim).unwrap();
            let x = e.embed(&text).unwrap();
            let y = DeterministicEmbedder::new(seed, dim).unwrap().embed(&text).unwrap();
            prop_assert_eq!(x.as_slice(), y.as_slice());
            prop_assert!((x.norm() - 1.0).abs() < 1e-9);
        }
    }
}
