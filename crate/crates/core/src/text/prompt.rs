use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::StatSummary;
use super::tokenizer::TextTokenizer;
use crate::error::{config_err, Error, Result};

pub const DEFAULT_TEMPLATE: &str = "Dataset description: {description} \
Task description: forecast the next {horizon} steps given the previous {lookback} steps information; \
Input statistics: min value {min}, max value {max}, median value {median}, \
the trend is {trend}, top 5 lags are {lags}";

const SLOTS: &[&str] = &[
    "dataset",
    "description",
    "lookback",
    "horizon",
    "min",
    "max",
    "median",
    "trend",
    "lags",
];

/// Task metadata rendered into every prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub dataset: String,
    pub description: String,
    pub lookback: usize,
    pub horizon: usize,
}

impl PromptMeta {
    pub fn new(dataset: &str, lookback: usize, horizon: usize) -> Self {
        PromptMeta {
            dataset: dataset.to_string(),
            description: dataset_description(dataset).to_string(),
            lookback,
            horizon,
        }
    }
}

/// One-sentence description used for the well-known benchmark families.
pub fn dataset_description(name: &str) -> &'static str {
    let lower = name.to_ascii_lowercase();
    if lower.starts_with("ett") {
        "Electricity transformer load and oil temperature readings from power stations, a key signal for long-term grid deployment."
    } else if lower.starts_with("weather") {
        "Meteorological indicators such as air temperature, pressure and humidity recorded every ten minutes."
    } else if lower.starts_with("exchange") {
        "Daily exchange rates of several national currencies."
    } else {
        "A multivariate time series with regularly spaced observations."
    }
}

/// A prompt template with `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let mut rest = text.as_str();
        while let Some(open) = rest.find('{') {
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| Error::Config("unterminated slot in prompt template".into()))?;
            let slot = &rest[open + 1..open + close];
            if !SLOTS.contains(&slot) {
                return config_err(format!("unknown prompt slot {{{slot}}}"));
            }
            rest = &rest[open + close + 1..];
        }
        Ok(PromptTemplate { text })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        PromptTemplate::new(text.trim_end().to_string())
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, summary: &StatSummary, meta: &PromptMeta) -> String {
        let lags = summary
            .top_lags
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = self.text.clone();
        for (slot, value) in [
            ("dataset", meta.dataset.clone()),
            ("description", meta.description.clone()),
            ("lookback", meta.lookback.to_string()),
            ("horizon", meta.horizon.to_string()),
            ("min", format_sig4(summary.min_value)),
            ("max", format_sig4(summary.max_value)),
            ("median", format_sig4(summary.median_value)),
            ("trend", summary.trend.to_string()),
            ("lags", lags),
        ] {
            out = out.replace(&format!("{{{slot}}}"), &value);
        }
        out
    }
}

/// Formats with four significant digits (fixed notation).
pub fn format_sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0.000".to_string() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    // rounding can carry into a new digit (9.9996 -> 10.000)
    let rounded: f64 = s.parse().unwrap_or(v);
    let s = if rounded.abs().log10().floor() as i32 > magnitude && decimals > 0 {
        format!("{:.*}", decimals - 1, v)
    } else {
        s
    };
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Rendered prompt and its token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub text: String,
    pub token_ids: Vec<u32>,
}

/// Renders and tokenizes a statistical prompt. `capacity` is the number of
/// positions left for statistical tokens after the learnable prefix.
pub fn render_prompt(
    summary: &StatSummary,
    meta: &PromptMeta,
    template: &PromptTemplate,
    tokenizer: &TextTokenizer,
    capacity: usize,
) -> Result<PromptText> {
    let text = template.render(summary, meta);
    let token_ids = tokenizer.encode(&text)?;
    if token_ids.len() > capacity {
        return Err(Error::PromptOverflow {
            tokens: token_ids.len(),
            capacity,
        });
    }
    if token_ids.is_empty() {
        return Err(Error::Encoding("prompt tokenized to nothing".into()));
    }
    Ok(PromptText { text, token_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::stats::Trend;

    fn golden_summary() -> StatSummary {
        StatSummary {
            min_value: 0.0,
            max_value: 1.0,
            median_value: 0.5,
            trend: Trend::Upward,
            top_lags: vec![1, 2, 3, 4, 5],
        }
    }

    #[test]
    fn sig4_formatting() {
        assert_eq!(format_sig4(0.5), "0.5000");
        assert_eq!(format_sig4(1.0), "1.000");
        assert_eq!(format_sig4(-1.23456), "-1.235");
        assert_eq!(format_sig4(1234.56), "1235");
        assert_eq!(format_sig4(0.000123456), "0.0001235");
        assert_eq!(format_sig4(9.99996), "10.00");
        assert_eq!(format_sig4(-0.00000), "0.000");
    }

    #[test]
    fn golden_prompt() {
        let meta = PromptMeta {
            dataset: "toy".into(),
            description: "A toy series.".into(),
            lookback: 96,
            horizon: 24,
        };
        let text = PromptTemplate::default().render(&golden_summary(), &meta);
        assert_eq!(
            text,
            "Dataset description: A toy series. Task description: forecast the next 24 steps \
             given the previous 96 steps information; Input statistics: min value 0.000, \
             max value 1.000, median value 0.5000, the trend is upward, top 5 lags are 1,2,3,4,5"
        );
    }

    #[test]
    fn deterministic_rendering() {
        let tok = TextTokenizer::stub(4096);
        let meta = PromptMeta::new("ETTh1", 512, 96);
        let t = PromptTemplate::default();
        let a = render_prompt(&golden_summary(), &meta, &t, &tok, 1000).unwrap();
        let b = render_prompt(&golden_summary(), &meta, &t, &tok, 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlong_prompt_overflows() {
        let tok = TextTokenizer::stub(4096);
        let mut meta = PromptMeta::new("toy", 96, 24);
        meta.description = "very long description ".repeat(200);
        let err = render_prompt(&golden_summary(), &meta, &PromptTemplate::default(), &tok, 120).unwrap_err();
        assert!(matches!(err, Error::PromptOverflow { .. }));
    }

    #[test]
    fn template_slots_validated() {
        assert!(PromptTemplate::new("min {min} and {bogus}").is_err());
        assert!(PromptTemplate::new("min {min").is_err());
        let t = PromptTemplate::new("{dataset}: {trend}").unwrap();
        let meta = PromptMeta::new("ETTm2", 96, 24);
        assert_eq!(t.render(&golden_summary(), &meta), "ETTm2: upward");
    }
}
