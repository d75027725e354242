use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MEMORY_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Invalid,
    NoImprovement,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Invalid => "invalid",
            RejectReason::NoImprovement => "no_improvement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedEntry {
    pub program: String,
    pub name: String,
    pub rationale: String,
    /// Validation metric gain over the baseline at acceptance.
    pub gain: f64,
    pub iteration: usize,
    pub island: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedEntry {
    pub program: String,
    pub name: String,
    pub rationale: String,
    pub reason: RejectReason,
    /// Why an invalid proposal failed (parse error, validity reason, ...).
    pub detail: Option<String>,
    /// Candidate metric minus baseline, when the candidate was evaluated.
    pub delta: Option<f64>,
    pub iteration: usize,
    pub island: usize,
}

/// What happened to one proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Accepted {
        gain: f64,
    },
    Rejected {
        reason: RejectReason,
        detail: Option<String>,
        delta: Option<f64>,
    },
}

/// Append-only record of accepted and rejected proposals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryBank {
    pub accepted: Vec<AcceptedEntry>,
    pub rejected: Vec<RejectedEntry>,
}

/// Program name and `#` rationale of proposal text, best effort.
fn describe(program: &str) -> (String, String) {
    match crate::dsl::parse(program) {
        Ok(p) => (p.name().to_string(), p.rationale().to_string()),
        Err(_) => {
            let name = program
                .lines()
                .find_map(|l| l.trim().strip_prefix("feature "))
                .and_then(|rest| rest.split(|c: char| c.is_whitespace() || c == '=').next())
                .filter(|n| crate::data::is_identifier(n))
                .unwrap_or("unnamed");
            (name.to_string(), String::new())
        }
    }
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, program: &str, outcome: Outcome, iteration: usize, island: usize) {
        let program = program.trim().to_string();
        let (name, rationale) = describe(&program);
        match outcome {
            Outcome::Accepted { gain } => self.accepted.push(AcceptedEntry {
                program,
                name,
                rationale,
                gain,
                iteration,
                island,
            }),
            Outcome::Rejected { reason, detail, delta } => self.rejected.push(RejectedEntry {
                program,
                name,
                rationale,
                reason,
                detail,
                delta,
                iteration,
                island,
            }),
        }
    }

    pub fn is_rejected(&self, program: &str) -> bool {
        let program = program.trim();
        self.rejected.iter().any(|e| e.program == program)
    }

    /// True when the text was already accepted or rejected.
    pub fn contains(&self, program: &str) -> bool {
        let program = program.trim();
        self.is_rejected(program) || self.accepted.iter().any(|e| e.program == program)
    }

    pub fn len(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// This bank followed by the entries of `other`.
    pub fn merged(&self, other: &MemoryBank) -> MemoryBank {
        let mut out = self.clone();
        out.accepted.extend(other.accepted.iter().cloned());
        out.rejected.extend(other.rejected.iter().cloned());
        out
    }

    /// Accepted and failed prompt blocks, newest first, at most `cap` lines each.
    pub fn render(&self, cap: usize) -> (String, String) {
        fn line(name: &str, tag: Option<&str>, rationale: &str) -> String {
            let rationale = rationale.split_whitespace().collect::<Vec<_>>().join(" ");
            let mut s = format!("- {name}");
            if let Some(t) = tag {
                s.push_str(&format!(" ({t})"));
            }
            if !rationale.is_empty() {
                s.push_str(": ");
                s.push_str(&rationale);
            }
            s
        }
        let block = |lines: Vec<String>| {
            if lines.is_empty() {
                "(none yet)".to_string()
            } else {
                lines.join("\n")
            }
        };
        let accepted = self
            .accepted
            .iter()
            .rev()
            .take(cap)
            .map(|e| line(&e.name, None, &e.rationale))
            .collect();
        let failed = self
            .rejected
            .iter()
            .rev()
            .take(cap)
            .map(|e| line(&e.name, Some(e.reason.as_str()), &e.rationale))
            .collect();
        (block(accepted), block(failed))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("memory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rejected() -> Outcome {
        Outcome::Rejected {
            reason: RejectReason::NoImprovement,
            detail: None,
            delta: Some(-0.01),
        }
    }

    #[test]
    fn empty_blocks() {
        assert_eq!(MemoryBank::new().render(10), ("(none yet)".into(), "(none yet)".into()));
    }

    #[test]
    fn render_newest_first_and_capped() {
        let mut m = MemoryBank::new();
        for i in 0..12 {
            m.record(&format!("# try {i}\nfeature f{i} = col(a) * {i}"), rejected(), i, 0);
        }
        m.record("feature good = col(a) * col(b)", Outcome::Accepted { gain: 0.02 }, 3, 1);
        let (acc, failed) = m.render(10);
        assert_eq!(acc, "- good");
        let lines: Vec<&str> = failed.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "- f11 (no_improvement): try 11");
        assert_eq!(lines[9], "- f2 (no_improvement): try 2");
    }

    #[test]
    fn unparsable_text_is_named_best_effort() {
        let mut m = MemoryBank::new();
        m.record("feature broken = col(", rejected(), 0, 0);
        m.record("no program here", rejected(), 0, 0);
        assert_eq!(m.rejected[0].name, "broken");
        assert_eq!(m.rejected[1].name, "unnamed");
        assert!(m.is_rejected("  feature broken = col(\n"));
    }

    #[test]
    fn persistence_round_trip() {
        let mut m = MemoryBank::new();
        m.record("# why\nfeature x = col(a) + 1", Outcome::Accepted { gain: 0.1 }, 0, 0);
        m.record("feature y = 1 + 0", rejected(), 1, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.json");
        m.write(&path).unwrap();
        let back = MemoryBank::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.render(10), m.render(10));
        assert_eq!(back.to_json(), m.to_json());
    }
}
