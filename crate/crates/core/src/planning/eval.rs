use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{discrepancy, regularizer, select_best, PlanningError};
use crate::domain::ProposalSet;
use crate::dsl::{parse_proposals, serialize_proposals, validate_set};
use crate::prompting::{build_prompt, generate_candidates, PlannerBackend, PlannerError, PromptConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusItem {
    pub input: String,
    pub gold: ProposalSet,
}

#[derive(Deserialize)]
struct CorpusLine {
    input: String,
    gold: String,
}

/// JSON lines of `{"input": str, "gold": str}`; blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusItem>, PlanningError> {
    let mut items = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| PlanningError::Corpus(format!("line {}: {msg}", n + 1));
        let raw: CorpusLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let gold = parse_proposals(&raw.gold).map_err(|e| err(e.to_string()))?;
        if !validate_set(&gold).is_empty() {
            return Err(err("gold set fails validation".into()));
        }
        items.push(CorpusItem {
            input: raw.input,
            gold,
        });
    }
    Ok(items)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusItem>, PlanningError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PlanningError::Corpus(format!("{}: {e}", path.display())))?;
    parse_corpus(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemReport {
    pub input: String,
    pub gold: String,
    /// Canonical text of the selected set; `null` when nothing parsed.
    pub selected: Option<String>,
    pub discrepancy: f64,
    pub regularizer: Option<f64>,
    pub exact_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub backend: String,
    pub items: usize,
    pub exact_match_rate: f64,
    /// Items without a parsable candidate count as discrepancy 1.
    pub mean_discrepancy: f64,
    /// Mean over items that produced a parsable candidate.
    pub mean_regularizer: f64,
    pub parse_failures: usize,
    pub results: Vec<ItemReport>,
}

/// Runs every corpus request through the backend, keeps the best parsable
/// candidate per item and compares it with the gold set. Unreachable
/// backends abort the evaluation; malformed or unparsable replies count as
/// parse failures.
pub fn evaluate_backend(
    backend: &PlannerBackend,
    corpus: &[CorpusItem],
    cfg: &PromptConfig,
    lambda: f64,
) -> Result<EvalReport, PlanningError> {
    if corpus.is_empty() {
        return Err(PlanningError::Corpus("corpus is empty".into()));
    }
    let mut results = Vec::with_capacity(corpus.len());
    for item in corpus {
        let prompt = build_prompt(cfg, &item.input)?;
        let raw = match generate_candidates(backend, &prompt) {
            Ok(raw) => raw,
            Err(PlannerError::BackendMalformed(_)) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let parsed: Vec<ProposalSet> = raw.iter().filter_map(|t| parse_proposals(t).ok()).collect();
        let gold = serialize_proposals(&item.gold);
        let report = match select_best(&item.input, &parsed, lambda) {
            Ok((best, _)) => ItemReport {
                input: item.input.clone(),
                gold,
                selected: Some(serialize_proposals(&best)),
                discrepancy: discrepancy(&best, &item.gold),
                regularizer: Some(regularizer(&best)),
                exact_match: best == item.gold,
            },
            Err(PlanningError::NoCandidates) => ItemReport {
                input: item.input.clone(),
                gold,
                selected: None,
                discrepancy: 1.0,
                regularizer: None,
                exact_match: false,
            },
            Err(e) => return Err(e),
        };
        results.push(report);
    }
    let n = results.len() as f64;
    let parsed: Vec<f64> = results.iter().filter_map(|r| r.regularizer).collect();
    Ok(EvalReport {
        backend: backend.id().to_string(),
        items: results.len(),
        exact_match_rate: results.iter().filter(|r| r.exact_match).count() as f64 / n,
        mean_discrepancy: results.iter().map(|r| r.discrepancy).sum::<f64>() / n,
        mean_regularizer: if parsed.is_empty() {
            0.0
        } else {
            parsed.iter().sum::<f64>() / parsed.len() as f64
        },
        parse_failures: results.iter().filter(|r| r.selected.is_none()).count(),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CORPUS: &str = r#"{"input": "highlight dogs and frogs in the image", "gold": "\"locate\" dogs; \"segment\" dogs; \"locate\" frogs, \"segment\" frogs;"}

{"input": "Find the guitar and segment it", "gold": "\"locate\" guitar; \"segment\" guitar;"}
"#;

    #[test]
    fn parses_jsonl() {
        let items = parse_corpus(CORPUS).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].gold.len(), 4);
        assert!(parse_corpus("{\"input\": \"x\", \"gold\": \"nope\"}").is_err());
        assert!(parse_corpus("not json").is_err());
    }

    #[test]
    fn rule_based_matches_small_corpus() {
        let items = parse_corpus(CORPUS).unwrap();
        let report =
            evaluate_backend(&PlannerBackend::rule_based(), &items, &PromptConfig::default(), 1.0).unwrap();
        assert_eq!(report.exact_match_rate, 1.0);
        assert_eq!(report.mean_discrepancy, 0.0);
        assert_eq!(report.parse_failures, 0);
    }

    #[test]
    fn garbage_counts_as_parse_failures() {
        let items = parse_corpus(CORPUS).unwrap();
        let backend = PlannerBackend::scripted("junk", vec![vec!["no".into()], vec![]]);
        let report = evaluate_backend(&backend, &items, &PromptConfig::default(), 1.0).unwrap();
        assert_eq!(report.parse_failures, 2);
        assert_eq!(report.exact_match_rate, 0.0);
        assert_eq!(report.mean_discrepancy, 1.0);
    }

    #[test]
    fn unavailable_backend_propagates() {
        let items = parse_corpus(CORPUS).unwrap();
        let backend = PlannerBackend::scripted("short", vec![]);
        assert!(matches!(
            evaluate_backend(&backend, &items, &PromptConfig::default(), 1.0),
            Err(PlanningError::Planner(PlannerError::BackendUnavailable(_)))
        ));
        assert!(evaluate_backend(&PlannerBackend::rule_based(), &[], &PromptConfig::default(), 1.0).is_err());
    }
}
