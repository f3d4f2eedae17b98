use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Major,
    Misdemeanor,
}

/// Offense types counted as major crimes; everything else is a misdemeanor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityClassifier {
    pub major: Vec<String>,
}

impl Default for SeverityClassifier {
    fn default() -> Self {
        SeverityClassifier {
            major: [
                "ROBBERY",
                "CRIMINAL SEXUAL ASSAULT",
                "CRIM SEXUAL ASSAULT",
                "HOMICIDE",
                "ARSON",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        }
    }
}

impl SeverityClassifier {
    pub fn classify(&self, offense: &str) -> Severity {
        let offense = offense.trim();
        if !offense.is_empty() && self.major.iter().any(|m| m.eq_ignore_ascii_case(offense)) {
            Severity::Major
        } else {
            Severity::Misdemeanor
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_classes() {
        let c = SeverityClassifier::default();
        assert_eq!(c.classify("ARSON"), Severity::Major);
        assert_eq!(c.classify("robbery"), Severity::Major);
        assert_eq!(c.classify("Homicide"), Severity::Major);
        assert_eq!(c.classify("THEFT"), Severity::Misdemeanor);
        assert_eq!(c.classify(""), Severity::Misdemeanor);
    }
}
