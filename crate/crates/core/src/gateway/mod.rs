//! Chat and embedding providers behind one interface, with a response cache
//! and token accounting.

mod cache;
mod cost;
mod http;
mod stub;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{chat_key, ChatEntry, EmbeddingEntry, ResponseCache};
pub use cost::{
    default_prices, estimate_cost, summarize, CostLedger, CostSummary, ModelCost, Price,
    PriceTable, TokenTotals,
};
pub use http::{
    HttpProvider, HttpSettings, RetryPolicy, API_KEY_VAR, DEFAULT_ENDPOINT, ENDPOINT_VAR,
};
pub use stub::{approx_tokens, Fixture, StubProvider};

use crate::error::{Error, Result};
use crate::prompts::{sha256_hex, RenderedPrompt};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
/// Temperature used for the main-text result tables.
pub const REPLICATION_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub model_id: String,
    pub prompt: RenderedPrompt,
    pub temperature: f64,
    pub run_index: u32,
}

impl ModelRequest {
    pub fn new(
        model_id: impl Into<String>,
        prompt: RenderedPrompt,
        temperature: f64,
        run_index: u32,
    ) -> Result<Self> {
        if !temperature.is_finite() || !(0.0..=2.0).contains(&temperature) {
            return Err(Error::argument(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        Ok(ModelRequest {
            model_id: model_id.into(),
            prompt,
            temperature,
            run_index,
        })
    }

    pub fn cache_key(&self) -> String {
        chat_key(
            &self.model_id,
            &self.prompt.hash(),
            self.temperature,
            self.run_index,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub request: ModelRequest,
    pub raw_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub provider_latency: Duration,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(
                "embedding must be non-empty with finite entries",
            ));
        }
        Ok(EmbeddingVector {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// 1 - cosine similarity. Errors on a zero vector or a dimension mismatch.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::data("cosine distance of a zero-norm vector"));
    }
    Ok(1.0 - dot / (na.sqrt() * nb.sqrt()))
}

/// What a provider hands back before the gateway wraps it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ModelRequest) -> Result<ProviderReply>;
    fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f64>>;
}

/// Front door for all model traffic. Safe to share across threads.
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    cache: ResponseCache,
    ledger: Mutex<CostLedger>,
    concurrency: usize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Gateway {
            provider,
            cache: ResponseCache::in_memory(),
            ledger: Mutex::new(CostLedger::new(default_prices())),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_prices(self, prices: PriceTable) -> Self {
        self.ledger.lock().unwrap().prices = prices;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().unwrap().clone()
    }

    pub fn chat(&self, request: &ModelRequest) -> Result<ModelResponse> {
        let key = request.cache_key();
        if let Some(hit) = self.cache.get_chat(&key) {
            return Ok(ModelResponse {
                request: request.clone(),
                raw_text: hit.raw_text,
                input_tokens: hit.input_tokens,
                output_tokens: hit.output_tokens,
                provider_latency: Duration::ZERO,
                cached: true,
            });
        }
        let started = Instant::now();
        let reply = self.provider.complete(request)?;
        let latency = started.elapsed();
        if reply.text.trim().is_empty() {
            return Err(Error::Provider(format!(
                "{} returned an empty reply for prompt {}",
                self.provider.name(),
                request.prompt.hash()
            )));
        }
        self.ledger.lock().unwrap().record(
            &request.model_id,
            reply.input_tokens,
            reply.output_tokens,
        );
        self.cache.put_chat(ChatEntry {
            key,
            model_id: request.model_id.clone(),
            prompt_hash: request.prompt.hash(),
            temperature: request.temperature,
            run_index: request.run_index,
            raw_text: reply.text.clone(),
            input_tokens: reply.input_tokens,
            output_tokens: reply.output_tokens,
        })?;
        Ok(ModelResponse {
            request: request.clone(),
            raw_text: reply.text,
            input_tokens: reply.input_tokens,
            output_tokens: reply.output_tokens,
            provider_latency: latency,
            cached: false,
        })
    }

    /// Run requests with at most `concurrency` in flight. Results line up
    /// with `requests`.
    pub fn chat_batch(&self, requests: &[ModelRequest]) -> Result<Vec<Result<ModelResponse>>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.concurrency)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        Ok(pool.install(|| requests.par_iter().map(|r| self.chat(r)).collect()))
    }

    /// [`Gateway::embed`] over many texts with the same concurrency bound.
    pub fn embed_batch(&self, texts: &[&str], model_id: &str) -> Result<Vec<EmbeddingVector>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.concurrency)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| texts.par_iter().map(|t| self.embed(t, model_id)).collect())
    }

    pub fn embed(&self, text: &str, model_id: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::argument("cannot embed empty text"));
        }
        let text_hash = sha256_hex(text);
        if let Some(values) = self.cache.get_embedding(model_id, &text_hash) {
            return EmbeddingVector::new(values, model_id);
        }
        let vector = EmbeddingVector::new(self.provider.embed(text, model_id)?, model_id)?;
        self.cache.put_embedding(EmbeddingEntry {
            model_id: model_id.to_string(),
            text_hash,
            values: vector.values.clone(),
        })?;
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Split, Statement};
    use crate::prompts::{render, PromptKind};

    fn prompt(text: &str) -> RenderedPrompt {
        let s = Statement {
            id: "s".into(),
            text: text.into(),
            language: Language::En,
            six_way: None,
            possibility: None,
            split: Split::Test,
        };
        render(PromptKind::Score, &s, None, None).unwrap()
    }

    fn stub_for(p: &RenderedPrompt, runs: &[(u32, &str)]) -> Arc<StubProvider> {
        Arc::new(StubProvider::new(runs.iter().map(|&(run, t)| Fixture {
            prompt_hash: p.hash(),
            run_index: run,
            raw_text: t.into(),
        })))
    }

    #[test]
    fn stub_lookup_and_miss() {
        let p = prompt("The sky is green.");
        let gw = Gateway::new(stub_for(&p, &[(0, "12"), (1, "15")]));
        let r0 = gw
            .chat(&ModelRequest::new("gpt-4", p.clone(), 0.5, 0).unwrap())
            .unwrap();
        let r1 = gw
            .chat(&ModelRequest::new("gpt-4", p.clone(), 0.5, 1).unwrap())
            .unwrap();
        assert_eq!((r0.raw_text.as_str(), r1.raw_text.as_str()), ("12", "15"));
        let miss = gw
            .chat(&ModelRequest::new("gpt-4", p, 0.5, 2).unwrap())
            .unwrap_err();
        assert!(matches!(miss, Error::FixtureMiss { run_index: 2, .. }));
        assert_eq!(miss.exit_code(), 3);
    }

    #[test]
    fn cache_hits_skip_provider_and_ledger() {
        let p = prompt("Water is wet.");
        let stub = stub_for(&p, &[(0, "90")]);
        let gw = Gateway::new(stub.clone());
        let req = ModelRequest::new("gpt-4", p, 0.0, 0).unwrap();
        let first = gw.chat(&req).unwrap();
        let before = gw.ledger();
        let second = gw.chat(&req).unwrap();
        assert!(!first.cached && second.cached);
        assert_eq!(stub.calls(), 1);
        assert_eq!(gw.ledger(), before);
        assert_eq!(before.totals("gpt-4").requests, 1);
        assert_eq!(before.totals("gpt-4").output_tokens, 1);
    }

    #[test]
    fn disk_cache_replays_without_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let p = prompt("Cats bark.");
        let req = ModelRequest::new("gpt-4", p.clone(), 0.5, 3).unwrap();
        {
            let gw = Gateway::new(stub_for(&p, &[(3, "5")]))
                .with_cache(ResponseCache::open(dir.path()).unwrap());
            gw.chat(&req).unwrap();
        }
        let empty = Arc::new(StubProvider::new(Vec::new()));
        let gw = Gateway::new(empty).with_cache(ResponseCache::open(dir.path()).unwrap());
        assert_eq!(gw.chat(&req).unwrap().raw_text, "5");
        // the cache file is also a fixture file
        let stub = StubProvider::from_jsonl(dir.path().join("chat.jsonl")).unwrap();
        assert_eq!(stub.complete(&req).unwrap().text, "5");
    }

    #[test]
    fn temperature_bounds() {
        let p = prompt("x");
        assert!(ModelRequest::new("m", p.clone(), 2.0, 0).is_ok());
        assert!(ModelRequest::new("m", p.clone(), 2.5, 0).is_err());
        assert!(ModelRequest::new("m", p, f64::NAN, 0).is_err());
    }

    #[test]
    fn batch_preserves_order() {
        let prompts: Vec<_> = (0..40).map(|i| prompt(&format!("claim {i}"))).collect();
        let stub = Arc::new(StubProvider::new(prompts.iter().enumerate().map(
            |(i, p)| Fixture {
                prompt_hash: p.hash(),
                run_index: 0,
                raw_text: i.to_string(),
            },
        )));
        let gw = Gateway::new(stub).with_concurrency(4);
        let reqs: Vec<_> = prompts
            .into_iter()
            .map(|p| ModelRequest::new("gpt-4", p, 0.0, 0).unwrap())
            .collect();
        let out = gw.chat_batch(&reqs).unwrap();
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().raw_text, i.to_string());
        }
        assert_eq!(gw.ledger().totals("gpt-4").requests, 40);
    }

    #[test]
    fn stub_embeddings() {
        let gw = Gateway::new(Arc::new(
            StubProvider::new(Vec::new()).with_embedding(32, 7),
        ));
        let a = gw.embed("alpha", "ada").unwrap();
        assert_eq!(a, gw.embed("alpha", "ada").unwrap());
        assert_eq!(a.values.len(), 32);
        assert!(matches!(gw.embed("  ", "ada"), Err(Error::Argument(_))));
        for i in 0..200 {
            let x = gw.embed(&format!("text {i}"), "ada").unwrap();
            let y = gw.embed(&format!("text {}", i + 1000), "ada").unwrap();
            assert!(cosine_distance(&x.values, &y.values).unwrap() > 0.0);
        }
    }

    #[test]
    fn cosine_edge_cases() {
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_distance(&[3.0, 4.0], &[6.0, 8.0]).unwrap().abs() < 1e-15);
    }
}
