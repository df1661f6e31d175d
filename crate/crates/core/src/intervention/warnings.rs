use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{
    InconsistencyFlag, PairwiseStats, RegretAssessment, RiskBasis, SuspectReport,
};
use crate::error::{Error, Result};
use crate::model::{Catalog, ChoiceSpace, ItemId};

const DEFAULT_TEMPLATES: &str = include_str!("../../templates/warnings.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningKind {
    PrevalentInconsistency,
    RegretRisk,
    SuspectItem,
    PredictedReversal,
}

impl WarningKind {
    pub const ALL: [WarningKind; 4] = [
        WarningKind::PrevalentInconsistency,
        WarningKind::RegretRisk,
        WarningKind::SuspectItem,
        WarningKind::PredictedReversal,
    ];

    pub fn directive(self) -> Directive {
        match self {
            WarningKind::PrevalentInconsistency => Directive::Confirm,
            WarningKind::RegretRisk | WarningKind::PredictedReversal => Directive::Inform,
            WarningKind::SuspectItem => Directive::Highlight,
        }
    }

    fn key(self) -> &'static str {
        match self {
            WarningKind::PrevalentInconsistency => "PREVALENT_INCONSISTENCY",
            WarningKind::RegretRisk => "REGRET_RISK",
            WarningKind::SuspectItem => "SUSPECT_ITEM",
            WarningKind::PredictedReversal => "PREDICTED_REVERSAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Directive {
    Confirm,
    Inform,
    Highlight,
}

/// Why a predicted winner goes against the user's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalEvidence {
    pub space: ChoiceSpace,
    pub predicted: ItemId,
    pub confidence: f64,
    /// History in which `usual` (= `p`) beat `predicted` (= `q`).
    pub history: PairwiseStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Evidence {
    Reversal(ReversalEvidence),
    Regret(RegretAssessment),
    Suspect(SuspectReport),
    Pairwise(PairwiseStats),
}

/// Anything a warning can be composed from.
#[derive(Debug, Clone, PartialEq)]
pub enum WarningInput {
    Inconsistency(InconsistencyFlag),
    Regret(RegretAssessment),
    Suspect(SuspectReport),
    PredictedReversal(ReversalEvidence),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
    pub subject: Vec<ItemId>,
    pub evidence: Evidence,
    pub directive: Directive,
}

/// Message templates keyed by warning kind; `{name}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates(BTreeMap<WarningKind, String>);

impl Default for Templates {
    fn default() -> Self {
        Self::from_json(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl Templates {
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
        let mut map = BTreeMap::new();
        for kind in WarningKind::ALL {
            let text = raw
                .get(kind.key())
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("template for {} is missing", kind.key()))
                })?;
            map.insert(kind, text.clone());
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, kind: WarningKind) -> &str {
        &self.0[&kind]
    }

    pub fn compose(&self, input: &WarningInput, catalog: &Catalog) -> Result<Warning> {
        let label = |id: &ItemId| catalog.label(id).to_string();
        let space_text = |s: &ChoiceSpace| {
            let mut ids: Vec<ItemId> = s.iter().cloned().collect();
            if let Ok(ordered) = catalog.ordered(ids.clone()) {
                ids = ordered;
            }
            let names: Vec<String> = ids.iter().map(label).collect();
            format!("{{{}}}", names.join(", "))
        };

        let (kind, subject, evidence, fields): (_, _, _, Vec<(&str, String)>) = match input {
            WarningInput::Inconsistency(flag) => {
                let s = &flag.stats;
                if s.p != flag.dominant
                    || s.q != flag.chosen
                    || s.n_together == 0
                    || s.n_p > s.n_together
                {
                    return Err(Error::IncompleteEvidence(
                        "inconsistency flag needs pairwise counts for (dominant, chosen)".into(),
                    ));
                }
                (
                    WarningKind::PrevalentInconsistency,
                    vec![flag.chosen.clone(), flag.dominant.clone()],
                    Evidence::Pairwise(s.clone()),
                    vec![
                        ("chosen", label(&flag.chosen)),
                        ("dominant", label(&flag.dominant)),
                        ("n_dominant", s.n_p.to_string()),
                        ("n_together", s.n_together.to_string()),
                    ],
                )
            }
            WarningInput::Regret(r) => {
                if !(0.0..=1.0).contains(&r.risk)
                    || r.n_retracted > r.n_seen
                    || (r.basis == RiskBasis::Exact && r.n_seen == 0)
                {
                    return Err(Error::IncompleteEvidence(
                        "regret evidence needs a risk in [0,1] and consistent counts".into(),
                    ));
                }
                (
                    WarningKind::RegretRisk,
                    r.space.iter().cloned().collect(),
                    Evidence::Regret(r.clone()),
                    vec![
                        ("space", space_text(&r.space)),
                        ("n_retracted", r.n_retracted.to_string()),
                        ("n_seen", r.n_seen.to_string()),
                        ("risk_pct", format!("{:.0}", r.risk * 100.0)),
                    ],
                )
            }
            WarningInput::Suspect(s) => {
                if s.n_users == 0 || !s.lift.is_finite() || s.lift <= 0.0 {
                    return Err(Error::IncompleteEvidence(
                        "suspect report needs a user count and a finite lift".into(),
                    ));
                }
                (
                    WarningKind::SuspectItem,
                    vec![s.item.clone()],
                    Evidence::Suspect(s.clone()),
                    vec![
                        ("item", label(&s.item)),
                        ("n_users", s.n_users.to_string()),
                        ("lift", format!("{:.1}", s.lift)),
                    ],
                )
            }
            WarningInput::PredictedReversal(r) => {
                let h = &r.history;
                if h.q != r.predicted
                    || h.n_together == 0
                    || !r.space.contains(&h.p)
                    || !r.space.contains(&r.predicted)
                {
                    return Err(Error::IncompleteEvidence(
                        "reversal evidence needs history for (usual, predicted) within the space"
                            .into(),
                    ));
                }
                (
                    WarningKind::PredictedReversal,
                    vec![r.predicted.clone(), h.p.clone()],
                    Evidence::Reversal(r.clone()),
                    vec![
                        ("space", space_text(&r.space)),
                        ("predicted", label(&r.predicted)),
                        ("usual", label(&h.p)),
                        ("n_usual", h.n_p.to_string()),
                        ("n_together", h.n_together.to_string()),
                    ],
                )
            }
        };

        let message = render(self.get(kind), &fields);
        Ok(Warning {
            kind,
            message,
            subject,
            evidence,
            directive: kind.directive(),
        })
    }
}

fn render(template: &str, fields: &[(&str, String)]) -> String {
    fields
        .iter()
        .fold(template.to_string(), |acc, (name, value)| {
            acc.replace(&format!("{{{name}}}"), value)
        })
}

/// Composes with the bundled templates.
pub fn compose_warning(input: &WarningInput, catalog: &Catalog) -> Result<Warning> {
    Templates::default().compose(input, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn stats(p: &str, q: &str, n_p: usize, n: usize) -> PairwiseStats {
        PairwiseStats {
            p: id(p),
            q: id(q),
            n_together: n,
            n_p,
            share_p: n_p as f64 / n as f64,
        }
    }

    #[test]
    fn inconsistency_message_is_exact() {
        let cat = Catalog::from_ids(&["P", "Q"]).unwrap();
        let flag = InconsistencyFlag {
            dominant: id("P"),
            chosen: id("Q"),
            stats: stats("P", "Q", 10, 10),
        };
        let w = compose_warning(&WarningInput::Inconsistency(flag), &cat).unwrap();
        assert_eq!(
            w.message,
            "Are you sure you want Q? You normally choose P when P and Q are offered together (10 of 10 past choices)."
        );
        assert_eq!(w.directive, Directive::Confirm);
        assert!(matches!(w.evidence, Evidence::Pairwise(_)));
    }

    #[test]
    fn labels_are_substituted() {
        let cat = crate::fixtures::table1().catalog().clone();
        let flag = InconsistencyFlag {
            dominant: id("R"),
            chosen: id("H"),
            stats: stats("R", "H", 6, 6),
        };
        let w = compose_warning(&WarningInput::Inconsistency(flag), &cat).unwrap();
        assert!(w
            .message
            .starts_with("Are you sure you want Hank's live music club?"));
    }

    #[test]
    fn regret_message_cites_retractions() {
        let cat = Catalog::from_ids(&["A", "B", "C"]).unwrap();
        let r = RegretAssessment {
            space: ChoiceSpace::parse("A,B,C").unwrap(),
            risk: 2.0 / 3.0,
            basis: RiskBasis::Exact,
            n_seen: 4,
            n_retracted: 3,
        };
        let w = compose_warning(&WarningInput::Regret(r), &cat).unwrap();
        assert_eq!(w.directive, Directive::Inform);
        assert!(w.message.contains("retracted 3 times"));
        assert!(w.message.contains("long term benefits"));
        assert!(w.message.contains("67%"));
    }

    #[test]
    fn suspect_is_highlighted() {
        let cat = Catalog::from_ids(&["T", "U"]).unwrap();
        let s = SuspectReport {
            item: id("T"),
            n_users: 5,
            lift: 3.1,
        };
        let w = compose_warning(&WarningInput::Suspect(s), &cat).unwrap();
        assert_eq!(
            (w.kind, w.directive),
            (WarningKind::SuspectItem, Directive::Highlight)
        );
        assert_eq!(w.subject, vec![id("T")]);
        assert!(w.message.contains('T') && w.message.contains("5 users"));
    }

    #[test]
    fn incomplete_evidence_is_rejected() {
        let cat = Catalog::from_ids(&["P", "Q"]).unwrap();
        let flag = InconsistencyFlag {
            dominant: id("P"),
            chosen: id("Q"),
            stats: stats("Q", "P", 0, 0),
        };
        assert!(matches!(
            compose_warning(&WarningInput::Inconsistency(flag), &cat),
            Err(Error::IncompleteEvidence(_))
        ));
    }

    #[test]
    fn rendering_is_pure() {
        let cat = Catalog::from_ids(&["P", "Q"]).unwrap();
        let input = WarningInput::Inconsistency(InconsistencyFlag {
            dominant: id("P"),
            chosen: id("Q"),
            stats: stats("P", "Q", 9, 10),
        });
        let a = serde_json::to_string(&compose_warning(&input, &cat).unwrap()).unwrap();
        let b = serde_json::to_string(&compose_warning(&input, &cat).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn templates_require_every_kind() {
        assert!(Templates::from_json(r#"{"REGRET_RISK": "x"}"#).is_err());
    }
}
