//! Core data types: images, set pairs, benchmark structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unit-norm embedding vector. Construction normalizes once so that
/// downstream cosine computations are plain dot products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalize `v` to unit L2 norm. Zero or non-finite vectors are rejected.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Validation("embedding is empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Validation("embedding has zero norm".into()));
        }
        Ok(Embedding(v.into_iter().map(|x| x / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Dot product; equals cosine similarity because both sides are unit-norm.
    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Domain(format!(
                "embedding dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }
}

/// One image: an opaque id, a source (file path, URL, or `mock://` tag), and
/// optionally a cached caption and/or embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, source: impl Into<String>) -> Self {
        ImageRecord {
            id: id.into(),
            source: source.into(),
            caption: None,
            embedding: None,
        }
    }
}

/// The unit of work: two named image sets to compare, optionally with a
/// ground-truth difference description for evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageSetPair {
    pub name: String,
    pub set_a: Vec<ImageRecord>,
    pub set_b: Vec<ImageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

impl ImageSetPair {
    /// Validates: both sets non-empty, ids unique within the pair.
    pub fn new(
        name: impl Into<String>,
        set_a: Vec<ImageRecord>,
        set_b: Vec<ImageRecord>,
        ground_truth: Option<String>,
    ) -> Result<Self> {
        let pair = ImageSetPair {
            name: name.into(),
            set_a,
            set_b,
            ground_truth,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.set_a.is_empty() || self.set_b.is_empty() {
            return Err(Error::Validation(format!(
                "pair {:?}: both sets must be non-empty (|A|={}, |B|={})",
                self.name,
                self.set_a.len(),
                self.set_b.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for rec in self.set_a.iter().chain(&self.set_b) {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::Validation(format!(
                    "pair {:?}: duplicate image id {:?}",
                    self.name, rec.id
                )));
            }
        }
        Ok(())
    }

    /// Same pair with the two sets exchanged. Ground truth no longer
    /// describes set A, so it is dropped.
    pub fn swapped(&self) -> ImageSetPair {
        ImageSetPair {
            name: format!("{}-swapped", self.name),
            set_a: self.set_b.clone(),
            set_b: self.set_a.clone(),
            ground_truth: None,
        }
    }
}

/// Benchmark split names. `Custom` carries anything outside the known list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Easy,
    Medium,
    Hard,
    ImagenetR,
    ImagenetStar,
    Custom(String),
}

impl Split {
    pub fn parse(s: &str) -> Split {
        match s {
            "easy" => Split::Easy,
            "medium" => Split::Medium,
            "hard" => Split::Hard,
            "imagenet-r" => Split::ImagenetR,
            "imagenet-star" => Split::ImagenetStar,
            other => Split::Custom(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Split::Easy => "easy",
            Split::Medium => "medium",
            Split::Hard => "hard",
            Split::ImagenetR => "imagenet-r",
            Split::ImagenetStar => "imagenet-star",
            Split::Custom(s) => s,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One split of a benchmark: a list of pairs, each with ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub split: Split,
    pub pairs: Vec<ImageSetPair>,
}

impl BenchmarkManifest {
    /// Every pair must carry ground truth; per-pair invariants must hold.
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Validation(format!(
                "benchmark split {}: no pairs",
                self.split
            )));
        }
        for pair in &self.pairs {
            pair.validate()?;
            if pair.ground_truth.is_none() {
                return Err(Error::Validation(format!(
                    "benchmark pair {:?}: missing ground truth",
                    pair.name
                )));
            }
        }
        Ok(())
    }
}
