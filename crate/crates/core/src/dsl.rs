//! Parser and canonical serializer for the quoted-verb action-proposal
//! format exchanged between planner backends and the engine:
//!
//! ```text
//! list     := WS? item (SEP item)* SEP? WS?
//! item     := '"' opname '"' (WS payload)?
//! payload  := chars except ';' ',' (trimmed)
//! SEP      := WS? (';' | ',') WS?
//! ```
//!
//! Both separators are accepted; serialization always uses `"; "` and a
//! trailing `;`. For `edit` and `generate` the payload `X :: I` splits on the
//! first `" :: "` into target `X` and instruction `I`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_label, ActionProposal, OperationKind, ProposalSet};

pub const INTEGRATE_PAYLOAD: &str = "all results";
const INSTRUCTION_SPLIT: &str = " :: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    UnknownOperation,
    MissingTarget,
    UnexpectedToken,
    EmptyInput,
    MisplacedIntegrate,
    DuplicateIntegrate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub byte_offset: usize,
    pub kind: DiagnosticKind,
    pub detail: String,
}

impl ParseDiagnostic {
    fn new(byte_offset: usize, kind: DiagnosticKind, detail: impl Into<String>) -> Self {
        Self {
            byte_offset,
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at byte {}: {}", self.kind, self.byte_offset, self.detail)
    }
}

/// All diagnostics for a rejected input, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", render(.0))]
pub struct ParseError(pub Vec<ParseDiagnostic>);

fn render(diags: &[ParseDiagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl ParseError {
    pub fn kinds(&self) -> Vec<DiagnosticKind> {
        self.0.iter().map(|d| d.kind).collect()
    }
}

fn is_ws(b: u8) -> bool {
    b.is_ascii_whitespace()
}

fn is_sep(b: u8) -> bool {
    b == b';' || b == b','
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    diags: Vec<ParseDiagnostic>,
    items: Vec<(usize, ActionProposal)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            diags: Vec::new(),
            items: Vec::new(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(is_ws) {
            self.pos += 1;
        }
    }

    fn error(&mut self, offset: usize, kind: DiagnosticKind, detail: impl Into<String>) {
        self.diags.push(ParseDiagnostic::new(offset, kind, detail));
    }

    /// Skips to just before the next separator so parsing can resume.
    fn recover(&mut self) {
        while self.peek().is_some_and(|b| !is_sep(b)) {
            self.pos += 1;
        }
    }

    fn parse_list(&mut self) {
        self.skip_ws();
        if self.pos == self.bytes.len() {
            self.error(self.pos, DiagnosticKind::EmptyInput, "no proposals");
            return;
        }
        loop {
            self.parse_item();
            self.skip_ws();
            match self.peek() {
                None => return,
                Some(b) if is_sep(b) => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek().is_none() {
                        return;
                    }
                }
                Some(_) => {
                    let at = self.pos;
                    self.error(at, DiagnosticKind::UnexpectedToken, "expected ';' or ','");
                    self.recover();
                }
            }
        }
    }

    fn parse_item(&mut self) {
        let item_start = self.pos;
        if self.peek() != Some(b'"') {
            let found = self.src[self.pos..].chars().next().unwrap_or(' ');
            self.error(
                self.pos,
                DiagnosticKind::UnexpectedToken,
                format!("expected '\"' to open an operation name, found {found:?}"),
            );
            self.recover();
            return;
        }
        let name_start = self.pos + 1;
        let Some(len) = self.src[name_start..].find('"') else {
            self.error(
                self.bytes.len(),
                DiagnosticKind::UnexpectedToken,
                "unterminated operation name",
            );
            self.pos = self.bytes.len();
            return;
        };
        let name = &self.src[name_start..name_start + len];
        self.pos = name_start + len + 1;

        let payload_start = self.pos;
        while self.peek().is_some_and(|b| !is_sep(b)) {
            self.pos += 1;
        }
        let raw_payload = &self.src[payload_start..self.pos];

        let op = match name.parse::<OperationKind>() {
            Ok(op) => op,
            Err(_) => {
                self.error(
                    name_start,
                    DiagnosticKind::UnknownOperation,
                    format!("unknown operation \"{name}\""),
                );
                return;
            }
        };
        if !raw_payload.is_empty() && !raw_payload.as_bytes()[0].is_ascii_whitespace() {
            self.error(
                payload_start,
                DiagnosticKind::UnexpectedToken,
                "payload must be separated from the operation by whitespace",
            );
            return;
        }
        if let Some(q) = raw_payload.find('"') {
            self.error(
                payload_start + q,
                DiagnosticKind::UnexpectedToken,
                "quote inside payload; missing separator?",
            );
            return;
        }
        match build_proposal(op, raw_payload.trim()) {
            Ok(proposal) => self.items.push((item_start, proposal)),
            Err((kind, detail)) => self.error(payload_start, kind, detail),
        }
    }
}

fn build_proposal(
    op: OperationKind,
    payload: &str,
) -> Result<ActionProposal, (DiagnosticKind, String)> {
    let label = |text: &str| normalize_label(text).ok();
    let proposal = match op {
        OperationKind::Integrate => {
            if !payload.is_empty() && label(payload).is_none_or(|l| l.as_str() != INTEGRATE_PAYLOAD) {
                return Err((
                    DiagnosticKind::UnexpectedToken,
                    format!("integrate takes no target other than \"{INTEGRATE_PAYLOAD}\""),
                ));
            }
            ActionProposal::integrate()
        }
        OperationKind::Edit | OperationKind::Generate => {
            let (target, instruction) = split_instruction(payload);
            let mut p = ActionProposal::new(op, label(target));
            p.instruction = (!instruction.is_empty()).then(|| instruction.to_string());
            p
        }
        _ => {
            let target = label(payload);
            if target.is_none() && op.requires_target() {
                return Err((
                    DiagnosticKind::MissingTarget,
                    format!("\"{op}\" requires a target"),
                ));
            }
            ActionProposal::new(op, target)
        }
    };
    Ok(proposal)
}

fn split_instruction(payload: &str) -> (&str, &str) {
    if let Some(rest) = payload.strip_prefix("::") {
        if rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace()) {
            return ("", rest.trim());
        }
    }
    match payload.find(INSTRUCTION_SPLIT) {
        Some(i) => (
            payload[..i].trim(),
            payload[i + INSTRUCTION_SPLIT.len()..].trim(),
        ),
        None => (payload, ""),
    }
}

/// Parses planner output. Rejects the whole input if anything is wrong,
/// including Integrate placement.
pub fn parse_proposals(text: &str) -> Result<ProposalSet, ParseError> {
    let mut parser = Parser::new(text);
    parser.parse_list();
    if !parser.diags.is_empty() {
        return Err(ParseError(parser.diags));
    }
    let offsets: Vec<usize> = parser.items.iter().map(|(o, _)| *o).collect();
    let items = parser.items.into_iter().map(|(_, p)| p).collect();
    let set = ProposalSet::new(items).expect("non-empty input yields at least one item");
    let diags = structural_diagnostics(&set, &offsets);
    if diags.is_empty() {
        Ok(set)
    } else {
        Err(ParseError(diags))
    }
}

fn render_item(p: &ActionProposal) -> String {
    let payload = match p.op {
        OperationKind::Integrate => Some(INTEGRATE_PAYLOAD.to_string()),
        OperationKind::Edit | OperationKind::Generate => {
            match (&p.target, p.instruction.as_deref().filter(|i| !i.is_empty())) {
                (Some(t), Some(i)) => Some(format!("{t}{INSTRUCTION_SPLIT}{i}")),
                (Some(t), None) => Some(t.to_string()),
                (None, Some(i)) => Some(format!(":: {i}")),
                (None, None) => None,
            }
        }
        _ => p.target.as_ref().map(ToString::to_string),
    };
    match payload {
        Some(payload) => format!("\"{}\" {payload}", p.op),
        None => format!("\"{}\"", p.op),
    }
}

/// Canonical text: items joined by `"; "` with a trailing `;`.
pub fn serialize_proposals(set: &ProposalSet) -> String {
    let mut out = set
        .iter()
        .map(render_item)
        .collect::<Vec<_>>()
        .join("; ");
    out.push(';');
    out
}

/// Structural checks on a set. Offsets refer to the item's position in the
/// canonical serialization.
pub fn validate_set(set: &ProposalSet) -> Vec<ParseDiagnostic> {
    let mut offsets = Vec::with_capacity(set.len());
    let mut at = 0;
    for p in set {
        offsets.push(at);
        at += render_item(p).len() + 2;
    }
    structural_diagnostics(set, &offsets)
}

fn structural_diagnostics(set: &ProposalSet, offsets: &[usize]) -> Vec<ParseDiagnostic> {
    let mut diags = Vec::new();
    let last = set.len() - 1;
    let mut seen_integrate = false;
    for (i, p) in set.iter().enumerate() {
        let at = offsets[i];
        match p.op {
            OperationKind::Integrate => {
                if i != last {
                    diags.push(ParseDiagnostic::new(
                        at,
                        DiagnosticKind::MisplacedIntegrate,
                        format!("integrate at position {} is not last", i + 1),
                    ));
                }
                if seen_integrate {
                    diags.push(ParseDiagnostic::new(
                        at,
                        DiagnosticKind::DuplicateIntegrate,
                        "more than one integrate",
                    ));
                }
                seen_integrate = true;
                if p.target.as_ref().is_some_and(|t| t.as_str() != INTEGRATE_PAYLOAD) {
                    diags.push(ParseDiagnostic::new(
                        at,
                        DiagnosticKind::UnexpectedToken,
                        "integrate carries a target",
                    ));
                }
            }
            op if op.requires_target() && p.target.is_none() => {
                diags.push(ParseDiagnostic::new(
                    at,
                    DiagnosticKind::MissingTarget,
                    format!("\"{op}\" requires a target"),
                ));
            }
            _ => {}
        }
        if p.instruction.is_some() && !p.op.takes_instruction() {
            diags.push(ParseDiagnostic::new(
                at,
                DiagnosticKind::UnexpectedToken,
                format!("\"{}\" does not take an instruction", p.op),
            ));
        }
    }
    diags
}
