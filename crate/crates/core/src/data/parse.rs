use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, InflectionTriple};

/// Column layout of a tab-separated inflection file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnOrder {
    /// `lemma<TAB>features<TAB>form` (Sigmorphon 2016 layout).
    #[default]
    LemmaFeaturesForm,
    /// `lemma<TAB>form<TAB>features` (Sigmorphon 2019 layout).
    LemmaFormFeatures,
}

impl FromStr for ColumnOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lemma-features-form" => Ok(Self::LemmaFeaturesForm),
            "lemma-form-features" => Ok(Self::LemmaFormFeatures),
            other => Err(format!(
                "unknown column order `{other}` (expected lemma-features-form or lemma-form-features)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub triples: Vec<InflectionTriple>,
    pub warnings: Vec<ParseWarning>,
}

/// Parses tab-separated inflection data, one triple per line.
///
/// Blank lines are ignored. Malformed lines are skipped and reported as
/// warnings, or abort the parse when `strict` is set.
pub fn parse_inflection_file(
    text: &str,
    order: ColumnOrder,
    strict: bool,
) -> Result<ParseOutcome, DataError> {
    let mut outcome = ParseOutcome::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, order) {
            Ok(triple) => outcome.triples.push(triple),
            Err(reason) if strict => {
                return Err(DataError::Malformed {
                    line: idx + 1,
                    reason,
                })
            }
            Err(reason) => {
                log::warn!("skipping line {}: {}", idx + 1, reason);
                outcome.warnings.push(ParseWarning {
                    line: idx + 1,
                    reason,
                });
            }
        }
    }
    Ok(outcome)
}

fn parse_line(line: &str, order: ColumnOrder) -> Result<InflectionTriple, String> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
        return Err(format!("field {} is empty", pos + 1));
    }
    let (lemma, features, form) = match order {
        ColumnOrder::LemmaFeaturesForm => (fields[0], fields[1], fields[2]),
        ColumnOrder::LemmaFormFeatures => (fields[0], fields[2], fields[1]),
    };
    Ok(InflectionTriple::new(lemma, features, form))
}
