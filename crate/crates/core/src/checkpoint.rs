//! Versioned JSON checkpoints for both learned models.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::embeddings::EmbeddingModel;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::memnn::MemNN;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_array(m: &Array2<f64>) -> Matrix {
        Matrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| Error::Checkpoint(format!("bad matrix shape: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    Embeddings {
        dim: usize,
        vocab_size: usize,
        tied: bool,
        a: Matrix,
        b: Option<Matrix>,
    },
    Memnn {
        dim: usize,
        vocab_size: usize,
        hops: usize,
        a: Matrix,
        r: Matrix,
        w: Matrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub vocab_hash: String,
    pub features: FeatureConfig,
    pub params: Params,
    /// Resolved run configuration that produced the model.
    pub config: BTreeMap<String, String>,
}

/// A loaded model of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Embeddings(EmbeddingModel),
    MemNN(MemNN),
}

impl Checkpoint {
    pub fn from_embeddings(m: &EmbeddingModel, config: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            vocab_hash: m.vocab_hash.clone(),
            features: m.cfg,
            params: Params::Embeddings {
                dim: m.dim(),
                vocab_size: m.vocab_size(),
                tied: m.is_tied(),
                a: Matrix::from_array(&m.a),
                b: m.b.as_ref().map(Matrix::from_array),
            },
            config,
        }
    }

    pub fn from_memnn(m: &MemNN, config: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            vocab_hash: m.vocab_hash.clone(),
            features: m.cfg,
            params: Params::Memnn {
                dim: m.dim(),
                vocab_size: m.vocab_size(),
                hops: m.hops,
                a: Matrix::from_array(&m.a),
                r: Matrix::from_array(&m.r),
                w: Matrix::from_array(&m.w),
            },
            config,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    /// Reads a checkpoint without checking it against a vocabulary.
    pub fn read(path: &Path) -> Result<Checkpoint> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: Checkpoint = serde_json::from_reader(file)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    /// Reads a checkpoint and refuses it unless it was trained on `vocab`.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Model> {
        Checkpoint::read(path)?.into_model(vocab)
    }

    pub fn into_model(self, vocab: &Vocabulary) -> Result<Model> {
        let found = vocab.hash();
        if self.vocab_hash != found {
            return Err(Error::VocabularyMismatch {
                expected: self.vocab_hash,
                found,
            });
        }
        let check = |m: &Array2<f64>, rows: usize, cols: usize, name: &str| {
            if m.dim() != (rows, cols) {
                return Err(Error::Checkpoint(format!("matrix {name} has shape {:?}, expected ({rows}, {cols})", m.dim())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("matrix {name} has non-finite entries")));
            }
            Ok(())
        };
        let v = vocab.len();
        match self.params {
            Params::Embeddings {
                dim,
                vocab_size,
                tied,
                a,
                b,
            } => {
                if vocab_size != v || tied != b.is_none() {
                    return Err(Error::Checkpoint("inconsistent embedding checkpoint header".into()));
                }
                let a = a.to_array()?;
                check(&a, v, dim, "A")?;
                let b = b.map(|b| b.to_array()).transpose()?;
                if let Some(b) = &b {
                    check(b, v, dim, "B")?;
                }
                Ok(Model::Embeddings(EmbeddingModel {
                    a,
                    b,
                    cfg: self.features,
                    vocab_hash: self.vocab_hash,
                }))
            }
            Params::Memnn {
                dim,
                vocab_size,
                hops,
                a,
                r,
                w,
            } => {
                if vocab_size != v {
                    return Err(Error::Checkpoint("inconsistent memory network checkpoint header".into()));
                }
                let (a, r, w) = (a.to_array()?, r.to_array()?, w.to_array()?);
                check(&a, v, dim, "A")?;
                check(&r, dim, dim, "R")?;
                check(&w, v, dim, "W")?;
                Ok(Model::MemNN(MemNN {
                    a,
                    r,
                    w,
                    hops,
                    cfg: self.features,
                    vocab_hash: self.vocab_hash,
                }))
            }
        }
    }
}
