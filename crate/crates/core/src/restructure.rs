//! Role-headed restructuring of judgment text.

use thiserror::Error;

use crate::corpus::{JudgmentCase, RhetoricalRole};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestructureError {
    #[error("case {0} has no input-side sentences after excluding generation roles")]
    EmptyInput(String),
    #[error("case {0} carries no role annotations")]
    MissingRoles(String),
    #[error("invalid role order: {0}")]
    InvalidOrder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleSegment {
    pub role: RhetoricalRole,
    pub sentences: Vec<String>,
}

/// Paragraph order for the structured rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleOrder(Vec<RhetoricalRole>);

impl Default for RoleOrder {
    fn default() -> Self {
        use RhetoricalRole::*;
        RoleOrder(vec![
            Preamble,
            Fac,
            Rlc,
            Issue,
            ArgPetitioner,
            ArgRespondent,
            PreRelied,
            PreNotRelied,
            None,
        ])
    }
}

impl RoleOrder {
    /// Accepts a permutation of the input-side roles that starts with PREAMBLE.
    pub fn new(ordering: Vec<RhetoricalRole>) -> Result<Self, RestructureError> {
        if ordering.first() != Some(&RhetoricalRole::Preamble) {
            return Err(RestructureError::InvalidOrder(
                "PREAMBLE must come first".into(),
            ));
        }
        let input_side: Vec<_> = RhetoricalRole::ALL
            .into_iter()
            .filter(|r| !r.is_excluded())
            .collect();
        for r in &input_side {
            let n = ordering.iter().filter(|o| *o == r).count();
            if n != 1 {
                return Err(RestructureError::InvalidOrder(format!(
                    "{r} appears {n} times"
                )));
            }
        }
        if let Some(r) = ordering.iter().find(|r| r.is_excluded()) {
            return Err(RestructureError::InvalidOrder(format!(
                "{r} is a generation role"
            )));
        }
        Ok(RoleOrder(ordering))
    }

    pub fn roles(&self) -> &[RhetoricalRole] {
        &self.0
    }

    fn rank(&self, role: RhetoricalRole) -> usize {
        self.0.iter().position(|r| *r == role).unwrap_or(usize::MAX)
    }
}

pub fn segment_by_role(
    case: &JudgmentCase,
    order: &RoleOrder,
) -> Result<Vec<RoleSegment>, RestructureError> {
    if !case.has_roles() {
        return Err(RestructureError::MissingRoles(case.case_id.clone()));
    }
    let mut segments: Vec<RoleSegment> = Vec::new();
    for s in &case.sentences {
        let role = s.role.expect("checked has_roles");
        if role.is_excluded() {
            continue;
        }
        match segments.iter_mut().find(|seg| seg.role == role) {
            Some(seg) => seg.sentences.push(s.text.clone()),
            Option::None => segments.push(RoleSegment {
                role,
                sentences: vec![s.text.clone()],
            }),
        }
    }
    if segments.is_empty() {
        return Err(RestructureError::EmptyInput(case.case_id.clone()));
    }
    // stable: ties cannot occur since each role has one segment
    segments.sort_by_key(|seg| order.rank(seg.role));
    Ok(segments)
}

/// `[ROLE]\n<sentences>` paragraphs separated by a blank line.
pub fn render_structured(segments: &[RoleSegment]) -> String {
    segments
        .iter()
        .map(|seg| format!("[{}]\n{}", seg.role.label(), seg.sentences.join("\n")))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_unstructured(case: &JudgmentCase) -> Result<String, RestructureError> {
    let kept: Vec<&str> = case
        .sentences
        .iter()
        .filter(|s| !s.role.is_some_and(RhetoricalRole::is_excluded))
        .map(|s| s.text.as_str())
        .collect();
    if kept.is_empty() {
        return Err(RestructureError::EmptyInput(case.case_id.clone()));
    }
    Ok(kept.join("\n"))
}

/// Case text for a prompt: structured when `structured` is set, plain otherwise.
pub fn render_case(
    case: &JudgmentCase,
    structured: bool,
    order: &RoleOrder,
) -> Result<String, RestructureError> {
    if structured {
        segment_by_role(case, order).map(|s| render_structured(&s))
    } else {
        render_unstructured(case)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::case;
    use crate::corpus::{AnnotatedSentence, Outcome};
    use RhetoricalRole::*;

    #[test]
    fn groups_excludes_and_orders() {
        let c = case("a", &[(Rlc, "s3"), (Fac, "s1"), (Fac, "s2"), (Ratio, "r")]);
        let segs = segment_by_role(&c, &RoleOrder::default()).unwrap();
        assert_eq!(
            segs,
            vec![
                RoleSegment {
                    role: Fac,
                    sentences: vec!["s1".into(), "s2".into()]
                },
                RoleSegment {
                    role: Rlc,
                    sentences: vec!["s3".into()]
                },
            ]
        );
        assert_eq!(render_structured(&segs), "[FAC]\ns1\ns2\n\n[RLC]\ns3");
    }

    #[test]
    fn all_excluded_is_empty_input() {
        let c = case("a", &[(Analysis, "x"), (Analysis, "y")]);
        assert_eq!(
            segment_by_role(&c, &RoleOrder::default()),
            Err(RestructureError::EmptyInput("a".into()))
        );
    }

    #[test]
    fn preamble_only() {
        let c = case("a", &[(Preamble, "p")]);
        let segs = segment_by_role(&c, &RoleOrder::default()).unwrap();
        assert_eq!(render_structured(&segs), "[PREAMBLE]\np");
    }

    #[test]
    fn three_segments_two_separators() {
        let c = case("a", &[(None, "n"), (Fac, "f"), (Preamble, "p")]);
        let text = render_structured(&segment_by_role(&c, &RoleOrder::default()).unwrap());
        assert_eq!(text.matches("\n\n").count(), 2);
        assert!(text.starts_with("[PREAMBLE]\np"));
        assert!(text.ends_with("[NONE]\nn"));
    }

    #[test]
    fn unstructured_applies_exclusion() {
        let c = case("a", &[(Fac, "s1"), (Ratio, "r"), (Rlc, "s3")]);
        assert_eq!(render_unstructured(&c).unwrap(), "s1\ns3");
        let c = case("b", &[(Sta, "x")]);
        assert!(render_unstructured(&c).is_err());
    }

    #[test]
    fn unstructured_role_free() {
        let c = JudgmentCase {
            case_id: "p".into(),
            sentences: ["a", "b"]
                .iter()
                .enumerate()
                .map(|(i, t)| AnnotatedSentence {
                    index: i,
                    text: t.to_string(),
                    role: Option::None,
                })
                .collect(),
            gold_verdict: Outcome::Favored,
            partial_appeal: false,
        };
        assert_eq!(render_unstructured(&c).unwrap(), "a\nb");
        assert!(matches!(
            segment_by_role(&c, &RoleOrder::default()),
            Err(RestructureError::MissingRoles(_))
        ));
    }

    #[test]
    fn role_order_validation() {
        assert!(RoleOrder::new(RoleOrder::default().roles().to_vec()).is_ok());
        let mut v = RoleOrder::default().roles().to_vec();
        v.swap(0, 1);
        assert!(RoleOrder::new(v).is_err());
        let mut v = RoleOrder::default().roles().to_vec();
        v.pop();
        assert!(RoleOrder::new(v).is_err());
        let mut v = RoleOrder::default().roles().to_vec();
        v.push(Ratio);
        assert!(RoleOrder::new(v).is_err());
    }
}
