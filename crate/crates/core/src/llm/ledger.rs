use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{LlmError, Purpose};

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Price {
    #[serde(with = "rust_decimal::serde::str")]
    pub input_usd_per_million: Decimal,
    #[serde(with = "rust_decimal::serde::str")]
    pub output_usd_per_million: Decimal,
}

impl Price {
    pub fn new(input: Decimal, output: Decimal) -> Self {
        Price { input_usd_per_million: input, output_usd_per_million: output }
    }

    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> Decimal {
        let million = Decimal::from(1_000_000u64);
        Decimal::from(input_tokens) * self.input_usd_per_million / million
            + Decimal::from(output_tokens) * self.output_usd_per_million / million
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PricingTable(pub BTreeMap<String, Price>);

impl Default for PricingTable {
    /// Published list prices of the hosted models; locally hosted models are free.
    fn default() -> Self {
        let p = |i: i64, o: i64| Price::new(Decimal::new(i, 2), Decimal::new(o, 2));
        PricingTable(BTreeMap::from([
            ("qwen-plus".to_string(), p(11, 27)),
            ("deepseek-v3".to_string(), p(27, 111)),
            ("qwen2.5-coder-7b-instruct".to_string(), p(0, 0)),
            ("glm-4-9b-chat".to_string(), p(0, 0)),
        ]))
    }
}

impl PricingTable {
    pub fn get(&self, model: &str) -> Option<&Price> {
        self.0.get(model)
    }

    pub fn insert(&mut self, model: impl Into<String>, price: Price) {
        self.0.insert(model.into(), price);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub call_id: u64,
    pub purpose: Purpose,
    pub context: String,
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Absent when the model was unpriced at call time.
    #[serde(default, with = "rust_decimal::serde::str_option")]
    pub cost_usd: Option<Decimal>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub entries: Vec<LedgerEntry>,
}

impl UsageLedger {
    pub(crate) fn next_call_id(&self) -> u64 {
        self.entries.iter().map(|e| e.call_id).max().unwrap_or(0) + 1
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("ledger entries serialize") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        Ok(UsageLedger { entries })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurposeTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(with = "rust_decimal::serde::str")]
    pub cost_usd: Decimal,
}

impl PurposeTotals {
    fn add(&mut self, e: &LedgerEntry, cost: Decimal) {
        self.calls += 1;
        self.input_tokens += e.input_tokens;
        self.output_tokens += e.output_tokens;
        self.cost_usd += cost;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSummary {
    pub by_purpose: BTreeMap<Purpose, PurposeTotals>,
    pub total: PurposeTotals,
}

/// Recompute costs from raw token counts with `pricing`.
pub fn cost(ledger: &UsageLedger, pricing: &PricingTable) -> Result<CostSummary, LlmError> {
    let mut summary = CostSummary::default();
    for e in &ledger.entries {
        let price = pricing
            .get(&e.model)
            .ok_or_else(|| LlmError::UnpricedModel(e.model.clone()))?;
        let c = price.cost(e.input_tokens, e.output_tokens);
        summary.by_purpose.entry(e.purpose).or_default().add(e, c);
        summary.total.add(e, c);
    }
    Ok(summary)
}
