use serde::{Deserialize, Serialize};

use super::parse_template;

/// Size measurements used for difficulty banding and size filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateMetrics {
    pub loc: usize,
    pub resource_count: usize,
    pub parameter_count: usize,
    pub token_estimate: usize,
    /// False when the text did not parse; resource/parameter counts are then 0.
    pub counts_available: bool,
}

/// Characters per token assumed by [`measure`].
pub const CHARS_PER_TOKEN: usize = 4;

pub fn measure(text: &str) -> TemplateMetrics {
    measure_with(text, CHARS_PER_TOKEN)
}

/// Like [`measure`] with a configurable characters-per-token ratio.
pub fn measure_with(text: &str, chars_per_token: usize) -> TemplateMetrics {
    let loc = text.lines().filter(|l| !l.trim().is_empty()).count();
    let chars = text.chars().count();
    let token_estimate = chars.div_ceil(chars_per_token.max(1));
    let (resource_count, parameter_count, counts_available) = match parse_template(text, None) {
        Ok(t) => (t.resources.len(), t.parameters.len(), true),
        Err(_) => (0, 0, false),
    };
    TemplateMetrics {
        loc,
        resource_count,
        parameter_count,
        token_estimate,
        counts_available,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DifficultyLevel(u8);

impl DifficultyLevel {
    pub fn new(level: u8) -> Option<Self> {
        (1..=5).contains(&level).then_some(DifficultyLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for DifficultyLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        DifficultyLevel::new(v).ok_or_else(|| format!("difficulty level must be 1..=5, got {v}"))
    }
}

impl From<DifficultyLevel> for u8 {
    fn from(d: DifficultyLevel) -> u8 {
        d.0
    }
}

impl std::fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

// Exclusive upper bounds for levels 1..=4; anything at or above the last bound is level 5.
const LOC_BOUNDS: [usize; 4] = [50, 100, 150, 200];
const RESOURCE_BOUNDS: [usize; 4] = [2, 4, 6, 12];
const PARAMETER_BOUNDS: [usize; 4] = [2, 5, 9, 14];

fn band(value: usize, bounds: &[usize; 4]) -> u8 {
    bounds
        .iter()
        .position(|&b| value < b)
        .map(|i| i as u8 + 1)
        .unwrap_or(5)
}

/// Each metric maps to its own band; the template is as hard as its hardest metric.
pub fn classify_difficulty(metrics: &TemplateMetrics) -> DifficultyLevel {
    let level = band(metrics.loc, &LOC_BOUNDS)
        .max(band(metrics.resource_count, &RESOURCE_BOUNDS))
        .max(band(metrics.parameter_count, &PARAMETER_BOUNDS));
    DifficultyLevel(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(loc: usize, resource_count: usize, parameter_count: usize) -> TemplateMetrics {
        TemplateMetrics {
            loc,
            resource_count,
            parameter_count,
            token_estimate: 0,
            counts_available: true,
        }
    }

    #[test]
    fn table_examples() {
        assert_eq!(classify_difficulty(&m(40, 1, 1)).get(), 1);
        assert_eq!(classify_difficulty(&m(250, 20, 20)).get(), 5);
        assert_eq!(classify_difficulty(&m(170, 5, 3)).get(), 4);
        assert_eq!(classify_difficulty(&m(49, 1, 1)).get(), 1);
        assert_eq!(classify_difficulty(&m(50, 1, 1)).get(), 2);
        assert_eq!(classify_difficulty(&m(200, 12, 14)).get(), 5);
        assert_eq!(classify_difficulty(&m(0, 0, 0)).get(), 1);
    }

    #[test]
    fn empty_text() {
        let got = measure("");
        assert_eq!((got.loc, got.resource_count, got.parameter_count, got.token_estimate), (0, 0, 0, 0));
        assert!(!got.counts_available);
    }

    #[test]
    fn counts_non_blank_lines() {
        let text = "a: 1\n\n   \nb: 2\n";
        assert_eq!(measure(text).loc, 2);
        assert_eq!(measure(text).token_estimate, text.chars().count().div_ceil(4));
    }

    #[test]
    fn difficulty_level_bounds() {
        assert!(DifficultyLevel::new(0).is_none());
        assert!(DifficultyLevel::new(6).is_none());
        assert_eq!(serde_json::to_string(&DifficultyLevel::new(3).unwrap()).unwrap(), "3");
        assert!(serde_json::from_str::<DifficultyLevel>("9").is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_every_metric(loc in 0usize..400, r in 0usize..30, p in 0usize..30,
                                    dl in 0usize..100, dr in 0usize..10, dp in 0usize..10) {
            let base = classify_difficulty(&m(loc, r, p));
            prop_assert!(classify_difficulty(&m(loc + dl, r, p)) >= base);
            prop_assert!(classify_difficulty(&m(loc, r + dr, p)) >= base);
            prop_assert!(classify_difficulty(&m(loc, r, p + dp)) >= base);
        }

        #[test]
        fn loc_ignores_trailing_whitespace(lines in proptest::collection::vec("[a-z: ]{0,12}", 0..30),
                                           pad in proptest::collection::vec(0usize..4, 30)) {
            let plain = lines.join("\n");
            let padded: Vec<String> = lines.iter().zip(&pad).map(|(l, n)| format!("{l}{}", " ".repeat(*n))).collect();
            prop_assert_eq!(measure(&plain).loc, measure(&padded.join("\n")).loc);
        }
    }
}
