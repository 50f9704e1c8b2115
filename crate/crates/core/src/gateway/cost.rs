use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// USD per thousand tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub usd_per_1k_input: f64,
    pub usd_per_1k_output: f64,
}

impl Price {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.usd_per_1k_input
            + output_tokens as f64 * self.usd_per_1k_output)
            / 1000.0
    }
}

pub type PriceTable = BTreeMap<String, Price>;

/// GPT-4 (8K context) list prices as of October 2023.
pub fn default_prices() -> PriceTable {
    PriceTable::from([(
        "gpt-4".to_string(),
        Price {
            usd_per_1k_input: 0.03,
            usd_per_1k_output: 0.06,
        },
    )])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Token usage per model plus the price table used to cost it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub totals: BTreeMap<String, TokenTotals>,
    pub prices: PriceTable,
}

impl CostLedger {
    pub fn new(prices: PriceTable) -> Self {
        CostLedger {
            totals: BTreeMap::new(),
            prices,
        }
    }

    pub fn record(&mut self, model_id: &str, input_tokens: u64, output_tokens: u64) {
        let t = self.totals.entry(model_id.to_string()).or_default();
        t.requests += 1;
        t.input_tokens += input_tokens;
        t.output_tokens += output_tokens;
    }

    pub fn totals(&self, model_id: &str) -> TokenTotals {
        self.totals.get(model_id).copied().unwrap_or_default()
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (model, t) in &other.totals {
            let mine = self.totals.entry(model.clone()).or_default();
            mine.requests += t.requests;
            mine.input_tokens += t.input_tokens;
            mine.output_tokens += t.output_tokens;
        }
    }
}

pub fn estimate_cost(ledger: &CostLedger, model_id: &str) -> Result<f64> {
    let price = ledger
        .prices
        .get(model_id)
        .ok_or_else(|| Error::config(format!("no price configured for model {model_id:?}")))?;
    let t = ledger.totals(model_id);
    Ok(price.cost(t.input_tokens, t.output_tokens))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub models: BTreeMap<String, ModelCost>,
    pub total_usd: f64,
    pub prices: PriceTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCost {
    #[serde(flatten)]
    pub totals: TokenTotals,
    /// `None` when the model has no configured price.
    pub usd: Option<f64>,
}

pub fn summarize(ledger: &CostLedger) -> CostSummary {
    let models: BTreeMap<String, ModelCost> = ledger
        .totals
        .iter()
        .map(|(m, t)| {
            (
                m.clone(),
                ModelCost {
                    totals: *t,
                    usd: estimate_cost(ledger, m).ok(),
                },
            )
        })
        .collect();
    let total_usd = models.values().filter_map(|m| m.usd).sum();
    CostSummary {
        models,
        total_usd,
        prices: ledger.prices.clone(),
    }
}
