use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatProvider, ModelRequest, ProviderReply};
use crate::error::{Error, Result};

/// One recorded reply. Cache files (`chat.jsonl`) have a compatible shape,
/// so a cache from an online run can be replayed offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub prompt_hash: String,
    #[serde(default)]
    pub run_index: u32,
    #[serde(alias = "text")]
    pub raw_text: String,
}

/// Deterministic offline provider: chat replies are looked up by
/// (prompt hash, run index); embeddings come from a seeded hash-to-vector
/// generator.
pub struct StubProvider {
    fixtures: HashMap<(String, u32), String>,
    embedding_dim: usize,
    seed: u64,
    calls: AtomicUsize,
}

impl StubProvider {
    pub fn new(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        StubProvider {
            fixtures: fixtures
                .into_iter()
                .map(|f| ((f.prompt_hash, f.run_index), f.raw_text))
                .collect(),
            embedding_dim: 64,
            seed: 0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut fixtures = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            fixtures.push(
                serde_json::from_str::<Fixture>(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?,
            );
        }
        Ok(Self::new(fixtures))
    }

    pub fn with_embedding(mut self, dim: usize, seed: u64) -> Self {
        self.embedding_dim = dim.max(1);
        self.seed = seed;
        self
    }

    /// Chat and embedding calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Whitespace token count; the stub's stand-in for a tokenizer.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ChatProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: &ModelRequest) -> Result<ProviderReply> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let hash = request.prompt.hash();
        let text = self
            .fixtures
            .get(&(hash.clone(), request.run_index))
            .ok_or(Error::FixtureMiss {
                prompt_hash: hash,
                run_index: request.run_index,
            })?;
        Ok(ProviderReply {
            text: text.clone(),
            input_tokens: approx_tokens(&request.prompt.text),
            output_tokens: approx_tokens(text),
        })
    }

    fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(model_id.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        Ok((0..self.embedding_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect())
    }
}
