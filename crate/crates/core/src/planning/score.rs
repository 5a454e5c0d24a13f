use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::PlanningError;
use crate::domain::{ActionProposal, OperationKind, ProposalSet};
use crate::dsl::{serialize_proposals, INTEGRATE_PAYLOAD};

pub const DEFAULT_LAMBDA: f64 = 1.0;

const INFEASIBLE_PENALTY: f64 = 1.0;
const ORPHAN_PENALTY: f64 = 0.5;
const DUPLICATE_PENALTY: f64 = 0.25;
const INTEGRATE_PENALTY: f64 = 0.5;

/// Objective value of one candidate: `(1 - congruence) + lambda * regularizer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScore {
    pub congruence: f64,
    pub regularizer: f64,
    pub total: f64,
    pub lambda: f64,
}

type Token = (OperationKind, String, String);

fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn token(p: &ActionProposal) -> Token {
    (
        p.op,
        p.target.as_ref().map(|t| t.as_str().to_string()).unwrap_or_default(),
        p.instruction.as_deref().map(normalize_text).unwrap_or_default(),
    )
}

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(x != y);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance between proposal sequences, normalized by the longer one.
pub fn discrepancy(generated: &ProposalSet, gold: &ProposalSet) -> f64 {
    let a: Vec<Token> = generated.iter().map(token).collect();
    let b: Vec<Token> = gold.iter().map(token).collect();
    levenshtein(&a, &b) as f64 / a.len().max(b.len()) as f64
}

/// Well-formedness penalty assuming every operation has an executor.
pub fn regularizer(set: &ProposalSet) -> f64 {
    regularizer_for(set, &OperationKind::ALL.into_iter().collect())
}

/// Sum of penalties:
/// 1.0 per proposal that cannot run (unsupported op or missing required target),
/// 0.5 per Segment/Edit whose target has no earlier Locate,
/// 0.25 per repeat of an earlier proposal,
/// 0.5 per Integrate that is not last and per extra Integrate.
pub fn regularizer_for(set: &ProposalSet, supported: &BTreeSet<OperationKind>) -> f64 {
    let items = set.items();
    let last = items.len() - 1;
    let mut total = 0.0;
    let mut integrates = 0;
    for (i, p) in items.iter().enumerate() {
        let earlier = &items[..i];
        if !supported.contains(&p.op) || (p.op.requires_target() && p.target.is_none()) {
            total += INFEASIBLE_PENALTY;
        }
        if matches!(p.op, OperationKind::Segment | OperationKind::Edit) {
            if let Some(target) = &p.target {
                let located = earlier
                    .iter()
                    .any(|q| q.op == OperationKind::Locate && q.target.as_ref() == Some(target));
                if !located {
                    total += ORPHAN_PENALTY;
                }
            }
        }
        if p.op == OperationKind::Integrate {
            if i != last {
                total += INTEGRATE_PENALTY;
            }
            if integrates > 0 {
                total += INTEGRATE_PENALTY;
            }
            integrates += 1;
        } else if earlier.contains(p) {
            total += DUPLICATE_PENALTY;
        }
    }
    total
}

/// Share of the set's object targets that literally occur in the request.
pub fn congruence(request: &str, set: &ProposalSet) -> f64 {
    let request = normalize_text(request);
    let targets: BTreeSet<&str> = set
        .iter()
        .filter_map(|p| p.target.as_ref())
        .map(|t| t.as_str())
        .filter(|t| *t != "image" && *t != INTEGRATE_PAYLOAD)
        .collect();
    if targets.is_empty() {
        return 1.0;
    }
    let hits = targets.iter().filter(|t| request.contains(**t)).count();
    hits as f64 / targets.len() as f64
}

pub fn score(
    request: &str,
    set: &ProposalSet,
    lambda: f64,
    supported: &BTreeSet<OperationKind>,
) -> ProposalScore {
    let congruence = congruence(request, set);
    let regularizer = regularizer_for(set, supported);
    ProposalScore {
        congruence,
        regularizer,
        total: (1.0 - congruence) + lambda * regularizer,
        lambda,
    }
}

pub fn select_best(
    request: &str,
    candidates: &[ProposalSet],
    lambda: f64,
) -> Result<(ProposalSet, ProposalScore), PlanningError> {
    select_best_for(request, candidates, lambda, &OperationKind::ALL.into_iter().collect())
}

/// Lowest total wins; ties go to the shorter set, then to the smallest
/// canonical serialization.
pub fn select_best_for(
    request: &str,
    candidates: &[ProposalSet],
    lambda: f64,
    supported: &BTreeSet<OperationKind>,
) -> Result<(ProposalSet, ProposalScore), PlanningError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(PlanningError::InvalidLambda(lambda));
    }
    candidates
        .iter()
        .map(|set| (set, score(request, set, lambda, supported), serialize_proposals(set)))
        .min_by(|(a, sa, ta), (b, sb, tb)| {
            sa.total
                .total_cmp(&sb.total)
                .then(a.len().cmp(&b.len()))
                .then_with(|| ta.cmp(tb))
                .then(Ordering::Equal)
        })
        .map(|(set, score, _)| (set.clone(), score))
        .ok_or(PlanningError::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ActionProposal as P;
    use proptest::prelude::*;
    use OperationKind::*;

    fn set(items: Vec<P>) -> ProposalSet {
        ProposalSet::new(items).unwrap()
    }

    fn dogs_frogs() -> ProposalSet {
        set(vec![
            P::on(Locate, "dogs"),
            P::on(Segment, "dogs"),
            P::on(Locate, "frogs"),
            P::on(Segment, "frogs"),
        ])
    }

    #[test]
    fn discrepancy_examples() {
        assert_eq!(discrepancy(&dogs_frogs(), &dogs_frogs()), 0.0);
        assert_eq!(
            discrepancy(&set(vec![P::on(Locate, "dogs")]), &set(vec![P::on(Segment, "cats")])),
            1.0
        );
        let two = set(vec![P::on(Locate, "dogs"), P::on(Segment, "dogs")]);
        assert_eq!(discrepancy(&two, &set(vec![P::on(Locate, "dogs")])), 0.5);
    }

    #[test]
    fn discrepancy_normalizes_instruction_text() {
        let a = set(vec![P::on(Edit, "car").with_instruction("Replace  It")]);
        let b = set(vec![P::on(Edit, "car").with_instruction("replace it")]);
        assert_eq!(discrepancy(&a, &b), 0.0);
    }

    #[test]
    fn regularizer_examples() {
        assert_eq!(regularizer(&set(vec![P::on(Locate, "dogs"), P::on(Segment, "dogs")])), 0.0);
        assert_eq!(regularizer(&set(vec![P::on(Segment, "dogs")])), 0.5);
        assert_eq!(
            regularizer(&set(vec![P::on(Locate, "dogs"), P::on(Locate, "dogs"), P::on(Segment, "dogs")])),
            0.25
        );
        assert_eq!(regularizer(&set(vec![P::integrate(), P::integrate()])), 1.0);
        let supported: BTreeSet<_> = [Locate, Segment].into();
        assert_eq!(regularizer_for(&set(vec![P::on(Caption, "x")]), &supported), 1.0);
        assert_eq!(regularizer(&set(vec![P::new(Locate, None)])), 1.0);
    }

    #[test]
    fn congruence_examples() {
        let req = "highlight dogs and frogs in the image";
        assert_eq!(congruence(req, &dogs_frogs()), 1.0);
        assert_eq!(congruence(req, &set(vec![P::on(Locate, "cats")])), 0.0);
        assert_eq!(
            congruence(req, &set(vec![P::on(Locate, "dogs"), P::on(Locate, "cats")])),
            0.5
        );
        assert_eq!(congruence(req, &set(vec![P::on(Generate, "image"), P::integrate()])), 1.0);
    }

    #[test]
    fn selection_examples() {
        let req = "highlight dogs and frogs in the image";
        let cats = set(vec![P::on(Locate, "cats")]);
        let (best, score) = select_best(req, &[cats.clone(), dogs_frogs()], 1.0).unwrap();
        assert_eq!(best, dogs_frogs());
        assert_eq!(score.total, 0.0);
        let (_, cat_score) = select_best(req, &[cats.clone()], 1.0).unwrap();
        assert_eq!(cat_score.total, 1.0);

        let short = set(vec![P::on(Locate, "dogs"), P::on(Segment, "dogs")]);
        let (best, _) = select_best(req, &[dogs_frogs(), short.clone()], 1.0).unwrap();
        assert_eq!(best, short);

        assert_eq!(select_best(req, &[], 1.0), Err(PlanningError::NoCandidates));
        assert!(matches!(select_best(req, &[cats], 0.0), Err(PlanningError::InvalidLambda(_))));
    }

    fn small_set() -> impl Strategy<Value = ProposalSet> {
        let op = prop::sample::select(vec![Locate, Segment, Caption, Integrate]);
        let target = prop::sample::select(vec!["dogs", "cats"]);
        proptest::collection::vec((op, target), 1..=5).prop_map(|items| {
            set(items
                .into_iter()
                .map(|(op, t)| if op == Integrate { P::integrate() } else { P::on(op, t) })
                .collect())
        })
    }

    proptest! {
        #[test]
        fn discrepancy_is_a_bounded_symmetric_distance(a in small_set(), b in small_set()) {
            let d = discrepancy(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, discrepancy(&b, &a));
            prop_assert_eq!(d == 0.0, a == b);
        }

        #[test]
        fn appending_infeasible_never_lowers_regularizer(
            a in small_set(),
            orphan in any::<bool>(),
        ) {
            let before = regularizer(&a);
            let mut items = a.items().to_vec();
            items.push(if orphan { P::on(Segment, "newcomer") } else { P::new(Locate, None) });
            prop_assert!(regularizer(&set(items)) >= before);
        }

        #[test]
        fn selection_ignores_order_and_duplicates(
            cands in proptest::collection::vec(small_set(), 1..5),
            rot in 0usize..5,
        ) {
            let req = "find dogs and highlight them";
            let base = select_best(req, &cands, 1.0).unwrap();
            let mut shuffled = cands.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            shuffled.push(cands[0].clone());
            prop_assert_eq!(select_best(req, &shuffled, 1.0).unwrap(), base);
        }
    }
}
