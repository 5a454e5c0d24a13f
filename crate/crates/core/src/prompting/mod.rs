//! In-context prompt assembly and planner backends.

mod backend;
mod rules;

pub use backend::{
    generate_candidates, BackendKind, PlannerBackend, PlannerBackendDescriptor,
    DEFAULT_PLANNER_TIMEOUT,
};
pub use rules::rule_based_plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::OperationKind;
use crate::dsl::parse_proposals;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("empty user input")]
    EmptyInput,
    #[error("request cannot be planned: {0}")]
    UnplannableRequest(String),
    #[error("planner backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("planner backend returned a malformed reply: {0}")]
    BackendMalformed(String),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

/// One demonstration pair: a request and its canonical proposal text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExample {
    pub input: String,
    pub output: String,
}

impl ContextExample {
    pub fn new(input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
        }
    }
}

pub const DEFAULT_MAX_EXAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub op_candidates: Vec<OperationKind>,
    pub examples: Vec<ContextExample>,
    pub max_examples: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            op_candidates: OperationKind::ALL.to_vec(),
            examples: default_examples(),
            max_examples: DEFAULT_MAX_EXAMPLES,
        }
    }
}

fn default_examples() -> Vec<ContextExample> {
    vec![
        ContextExample::new(
            "highlight dogs and frogs in the image",
            r#""locate" dogs; "segment" dogs; "locate" frogs; "segment" frogs;"#,
        ),
        ContextExample::new(
            "Find dogs and lemons in the images and then highlight them only",
            r#""locate" dogs; "segment" dogs; "locate" lemons; "segment" lemons; "integrate" all results;"#,
        ),
        ContextExample::new(
            "Replace the front car with a different type",
            r#""locate" front car; "segment" front car; "edit" front car :: replace with a different type;"#,
        ),
        ContextExample::new(
            "Please generate a mountain far away",
            r#""generate" image :: Please generate a mountain far away;"#,
        ),
    ]
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.op_candidates.is_empty() {
            return Err(PlannerError::InvalidConfig("no operation candidates".into()));
        }
        if self.max_examples == 0 {
            return Err(PlannerError::InvalidConfig("max_examples must be >= 1".into()));
        }
        for (i, example) in self.examples.iter().enumerate() {
            parse_proposals(&example.output).map_err(|e| {
                PlannerError::InvalidConfig(format!("example {} output does not parse: {e}", i + 1))
            })?;
        }
        Ok(())
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Instruction line, then up to `max_examples` Input/Output pairs, then the
/// open `Input: ...\nOutput:` stanza. Sections are separated by one blank
/// line and the prompt has no trailing newline.
pub fn build_prompt(cfg: &PromptConfig, user_input: &str) -> Result<String, PlannerError> {
    let user_input = one_line(user_input);
    if user_input.is_empty() {
        return Err(PlannerError::EmptyInput);
    }
    cfg.validate()?;
    let candidates = cfg
        .op_candidates
        .iter()
        .map(|op| format!("\"{op}\""))
        .collect::<Vec<_>>()
        .join(", ");
    let mut sections = vec![format!(
        "Please generate action proposals based on the following operation candidates: \
         {candidates}. The output should be as concise as possible."
    )];
    sections.extend(
        cfg.examples
            .iter()
            .take(cfg.max_examples)
            .map(|ex| format!("Input: {}\nOutput: {}", one_line(&ex.input), ex.output)),
    );
    sections.push(format!("Input: {user_input}\nOutput:"));
    Ok(sections.join("\n\n"))
}

/// Recovers the user request from the final `Input:` line of a prompt, or
/// returns the whole text when there is none.
pub fn extract_user_input(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|line| line.strip_prefix("Input:"))
        .map(str::trim)
        .unwrap_or_else(|| prompt.trim())
}
