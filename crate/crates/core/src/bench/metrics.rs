use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::orchestrator::RunRecord;
use crate::validate::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no records to aggregate")]
    EmptyRecordSet,
    #[error("iteration horizon must be at least 1")]
    ZeroHorizon,
}

/// Percentage of runs that deployed at or before iteration `n`.
pub fn pass_itr(records: &[RunRecord], n: u32) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroHorizon);
    }
    if records.is_empty() {
        return Err(MetricError::EmptyRecordSet);
    }
    let passed = records
        .iter()
        .filter(|r| r.success_iteration.is_some_and(|s| s <= n))
        .count();
    Ok(100.0 * passed as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    MissingValue,
    SelfDefinedProperty,
    NullSubstitution,
    UnnecessaryWhitespace,
    ArbitraryDefaultValue,
    Uncategorized,
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorKind::MissingValue => "MissingValue",
            ErrorKind::SelfDefinedProperty => "SelfDefinedProperty",
            ErrorKind::NullSubstitution => "NullSubstitution",
            ErrorKind::UnnecessaryWhitespace => "UnnecessaryWhitespace",
            ErrorKind::ArbitraryDefaultValue => "ArbitraryDefaultValue",
            ErrorKind::Uncategorized => "Uncategorized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorCategory {
    pub category: ErrorKind,
    pub stage: Stage,
}

// First match wins; the catalog rules all precede the uncategorized fallback.
const RULES: &[(ErrorKind, Stage, &str)] = &[
    (
        ErrorKind::MissingValue,
        Stage::Deployment,
        r"^An error occurred \(ValidationError\) when calling the CreateStack operation: Parameters: \[.+\] must have values$",
    ),
    (
        ErrorKind::ArbitraryDefaultValue,
        Stage::Deployment,
        r"^Parameter validation failed: parameter value .* for parameter name .+ does not exist$",
    ),
    (
        ErrorKind::SelfDefinedProperty,
        Stage::Syntax,
        r"^Additional properties are not allowed \('.+' was unexpected\)$",
    ),
    (
        ErrorKind::NullSubstitution,
        Stage::Syntax,
        r"^'Fn::Sub' isn't needed because there are no variables$",
    ),
    (
        ErrorKind::UnnecessaryWhitespace,
        Stage::Format,
        r"^Line \d+: too many spaces inside brackets$",
    ),
];

fn compiled() -> &'static [(ErrorKind, Stage, Regex)] {
    static RULE_SET: OnceLock<Vec<(ErrorKind, Stage, Regex)>> = OnceLock::new();
    RULE_SET.get_or_init(|| {
        RULES
            .iter()
            .map(|(k, s, p)| (*k, *s, Regex::new(p).expect("catalog patterns are valid")))
            .collect()
    })
}

/// Maps a validation message to its catalog category. Messages outside the
/// catalog are `Uncategorized` at the stage that produced them.
pub fn classify_error(message: &str, stage: Stage) -> ErrorCategory {
    compiled()
        .iter()
        .find(|(_, _, re)| re.is_match(message))
        .map(|(category, stage, _)| ErrorCategory {
            category: *category,
            stage: *stage,
        })
        .unwrap_or(ErrorCategory {
            category: ErrorKind::Uncategorized,
            stage,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{FinalStatus, HistoryMode};
    use proptest::prelude::*;

    pub(crate) fn record(success: Option<u32>) -> RunRecord {
        RunRecord {
            schema: 1,
            task_id: "t".into(),
            model_name: "m".into(),
            history_mode: HistoryMode::Full,
            iterations: Vec::new(),
            success_iteration: success,
            final_status: if success.is_some() {
                FinalStatus::Deployed
            } else {
                FinalStatus::BudgetExhausted
            },
            error: None,
        }
    }

    #[test]
    fn synthetic_set() {
        let rs: Vec<_> = [Some(1), Some(3), None, Some(10)].into_iter().map(record).collect();
        let got: Vec<f64> = [1, 5, 10, 15].iter().map(|&n| pass_itr(&rs, n).unwrap()).collect();
        assert_eq!(got, [25.0, 50.0, 75.0, 75.0]);
        let all: Vec<_> = (0..4).map(|_| record(Some(1))).collect();
        assert_eq!(pass_itr(&all, 1).unwrap(), 100.0);
        assert_eq!(pass_itr(&[], 1), Err(MetricError::EmptyRecordSet));
        assert_eq!(pass_itr(&rs, 0), Err(MetricError::ZeroHorizon));
    }

    #[test]
    fn catalog_messages() {
        let cases = [
            (
                "An error occurred (ValidationError) when calling the CreateStack operation: Parameters: [KeyName] must have values",
                ErrorKind::MissingValue,
                Stage::Deployment,
            ),
            (
                "Additional properties are not allowed ('Foo' was unexpected)",
                ErrorKind::SelfDefinedProperty,
                Stage::Syntax,
            ),
            (
                "'Fn::Sub' isn't needed because there are no variables",
                ErrorKind::NullSubstitution,
                Stage::Syntax,
            ),
            ("Line 12: too many spaces inside brackets", ErrorKind::UnnecessaryWhitespace, Stage::Format),
            (
                "Parameter validation failed: parameter value my-key for parameter name KeyName does not exist",
                ErrorKind::ArbitraryDefaultValue,
                Stage::Deployment,
            ),
        ];
        for (msg, kind, stage) in cases {
            // The catalog stage wins over whatever stage is passed in.
            assert_eq!(classify_error(msg, Stage::Format), ErrorCategory { category: kind, stage });
        }
        assert_eq!(
            classify_error("some novel provider error", Stage::Deployment),
            ErrorCategory {
                category: ErrorKind::Uncategorized,
                stage: Stage::Deployment
            }
        );
    }

    proptest! {
        #[test]
        fn monotone_and_order_free(successes in proptest::collection::vec(proptest::option::of(1u32..30), 1..40), seed in any::<u64>()) {
            let mut rs: Vec<_> = successes.into_iter().map(record).collect();
            let before: Vec<f64> = (1..=30).map(|n| pass_itr(&rs, n).unwrap()).collect();
            prop_assert!(before.windows(2).all(|w| w[0] <= w[1]));
            let k = rs.len();
            rs.rotate_left((seed as usize) % k);
            rs.reverse();
            let after: Vec<f64> = (1..=30).map(|n| pass_itr(&rs, n).unwrap()).collect();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn classification_total(msg in ".{0,80}") {
            let a = classify_error(&msg, Stage::Syntax);
            prop_assert_eq!(a, classify_error(&msg, Stage::Syntax));
        }
    }
}
