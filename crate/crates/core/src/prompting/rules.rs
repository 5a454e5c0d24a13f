//! Deterministic intent-table planner used when no LLM backend answers.

use crate::domain::{ActionProposal, Label, OperationKind, ProposalSet};

use super::PlannerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Intent {
    Locate,
    Highlight,
    Replace,
    Generate,
}

fn intent_of(word: &str) -> Option<Intent> {
    match word {
        "find" | "locate" | "detect" | "identify" => Some(Intent::Locate),
        "highlight" | "segment" | "mask" => Some(Intent::Highlight),
        "replace" | "cover" | "remove" => Some(Intent::Replace),
        "generate" | "add" | "create" | "make" => Some(Intent::Generate),
        _ => None,
    }
}

const DETERMINERS: [&str; 5] = ["the", "a", "an", "all", "any"];
const TRUNCATE_AT: [&str; 3] = ["in", "on", "with"];
const FILLERS: [&str; 4] = ["then", "please", "only", "also"];
const PRONOUNS: [&str; 2] = ["them", "it"];

fn is_punct(token: &str) -> bool {
    matches!(token, "." | "," | ";" | "!" | "?")
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '\'' || c == '-' {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if matches!(c, '.' | ',' | ';' | '!' | '?') {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Per-target accumulated operations, in order of first mention.
#[derive(Default)]
struct Plan {
    targets: Vec<(Label, TargetOps)>,
    generate_at: Option<usize>,
}

#[derive(Default)]
struct TargetOps {
    locate: bool,
    segment: bool,
    edits: Vec<String>,
}

impl Plan {
    fn entry(&mut self, label: &Label) -> &mut TargetOps {
        let i = match self.targets.iter().position(|(l, _)| l == label) {
            Some(i) => i,
            None => {
                self.targets.push((label.clone(), TargetOps::default()));
                self.targets.len() - 1
            }
        };
        &mut self.targets[i].1
    }

    fn known(&self) -> Vec<Label> {
        self.targets.iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Maps a request onto proposals with a fixed intent table.
///
/// Each clause starts at an intent verb:
/// find/locate/detect/identify give Locate; highlight/segment/mask give
/// Locate + Segment; replace/cover/remove give Locate + Segment + Edit;
/// generate/add/create/make (or no verb at all) give one whole-image
/// Generate carrying the full request. Targets are read after the verb up to
/// in/on/with or punctuation, split on "and", with determiners dropped;
/// "them"/"it" refer to every target seen so far. Operations are grouped per
/// target in first-mention order. Integrate is appended when two or more
/// distinct targets come out of a multi-clause request.
pub fn rule_based_plan(user_input: &str) -> Result<ProposalSet, PlannerError> {
    if user_input.trim().is_empty() {
        return Err(PlannerError::UnplannableRequest(
            "request is blank".to_string(),
        ));
    }
    let tokens = tokenize(user_input);
    let verbs: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| intent_of(t).is_some())
        .map(|(i, _)| i)
        .collect();

    let mut plan = Plan::default();
    for (n, &start) in verbs.iter().enumerate() {
        let end = verbs.get(n + 1).copied().unwrap_or(tokens.len());
        let intent = intent_of(&tokens[start]).expect("verb position");
        let rest = &tokens[start + 1..end];
        if intent == Intent::Generate {
            plan.generate_at.get_or_insert(plan.targets.len());
            continue;
        }
        let cut = rest
            .iter()
            .position(|t| TRUNCATE_AT.contains(&t.as_str()) || is_punct(t))
            .unwrap_or(rest.len());
        let targets = extract_targets(&rest[..cut], &plan.known());
        let remainder: Vec<&str> = rest[cut..]
            .iter()
            .map(String::as_str)
            .filter(|t| !is_punct(t))
            .collect();
        for target in targets {
            let ops = plan.entry(&target);
            ops.locate = true;
            if matches!(intent, Intent::Highlight | Intent::Replace) {
                ops.segment = true;
            }
            if intent == Intent::Replace {
                let mut instruction = tokens[start].clone();
                for word in &remainder {
                    instruction.push(' ');
                    instruction.push_str(word);
                }
                if !ops.edits.contains(&instruction) {
                    ops.edits.push(instruction);
                }
            }
        }
    }
    if plan.targets.is_empty() && plan.generate_at.is_none() {
        plan.generate_at = Some(0);
    }

    let request = sanitize(user_input);
    let generate = || {
        ActionProposal::on(OperationKind::Generate, "image").with_instruction(request.clone())
    };
    let mut items = Vec::new();
    for (i, (label, ops)) in plan.targets.iter().enumerate() {
        if plan.generate_at == Some(i) {
            items.push(generate());
        }
        if ops.locate {
            items.push(ActionProposal::new(OperationKind::Locate, Some(label.clone())));
        }
        if ops.segment {
            items.push(ActionProposal::new(OperationKind::Segment, Some(label.clone())));
        }
        for edit in &ops.edits {
            items.push(
                ActionProposal::new(OperationKind::Edit, Some(label.clone()))
                    .with_instruction(edit.clone()),
            );
        }
    }
    if plan.generate_at.is_some_and(|i| i >= plan.targets.len()) {
        items.push(generate());
    }
    if plan.targets.len() >= 2 && verbs.len() >= 2 {
        items.push(ActionProposal::integrate());
    }
    Ok(ProposalSet::new(items).expect("plan always yields a proposal"))
}

fn extract_targets(words: &[String], known: &[Label]) -> Vec<Label> {
    let mut out = Vec::new();
    for part in words.split(|w| w == "and") {
        let mut part: Vec<&str> = part
            .iter()
            .map(String::as_str)
            .filter(|w| !FILLERS.contains(w))
            .collect();
        while part.first().is_some_and(|w| DETERMINERS.contains(w)) {
            part.remove(0);
        }
        if part.is_empty() {
            continue;
        }
        if part.len() == 1 && PRONOUNS.contains(&part[0]) {
            for label in known.iter().chain(out.clone().iter()) {
                if !out.contains(label) {
                    out.push(label.clone());
                }
            }
            continue;
        }
        if let Ok(label) = Label::new(&part.join(" ")) {
            if !out.contains(&label) {
                out.push(label);
            }
        }
    }
    out
}

/// Request text made safe for a DSL payload.
fn sanitize(text: &str) -> String {
    text.replace([';', ',', '"'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(" :: ", " ")
}
