//! Deterministic text embedding by signed feature hashing.
//!
//! Lowercased alphanumeric tokens are hashed with 64-bit FNV-1a. The low
//! bits pick one of [`EMBED_DIM`] buckets and the top bit picks the sign.
//! The vector is L2-normalized. Equal strings embed identically, and strings
//! that share most tokens land close together. The embedding only orders
//! candidates; it never decides a cache hit on its own.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a;

pub const EMBED_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn zero() -> Self {
        Embedding(vec![0.0; EMBED_DIM])
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|x| x * x).sum())
    }

    /// Cosine similarity; zero if either side is the zero vector.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot / (na * nb)
    }
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
}

pub fn embed(text: &str) -> Embedding {
    let mut v = Embedding::zero();
    for tok in tokens(text) {
        let h = fnv1a(tok.as_bytes());
        let bucket = (h % EMBED_DIM as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v.0[bucket] += sign;
    }
    let n = v.norm();
    if n > 0.0 {
        v.0.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    a.cosine(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_strings_are_cosine_one() {
        let a = embed("Balance: $247.50");
        assert_eq!(a, embed("Balance: $247.50"));
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero() {
        let z = embed("  ,. ");
        assert_eq!(z, Embedding::zero());
        assert_eq!(cosine(&z, &embed("x")), 0.0);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(embed("Hotel, NORTH!"), embed("hotel north"));
    }
}
