//! Candidate generation: prompt assembly, proposer backends and the feedback memory.
//!
//! Prompts carry column metadata and aggregate importance only. A backend
//! returns the text of one program; parsing and validation happen in the engine.

pub mod http;
pub mod memory;
pub mod offline;
pub mod prompt;

use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::error::Result;
use crate::islands::Island;
use crate::learners::LearnerKind;

pub use http::{extract_fenced_block, HttpClient, HttpSettings};
pub use memory::{AcceptedEntry, MemoryBank, Outcome, RejectReason, RejectedEntry, DEFAULT_MEMORY_CAP};
pub use offline::{offline_propose, templates};
pub use prompt::{build_prompt, PromptBundle, PromptOptions, DEFAULT_PROMPT_BUDGET};

/// Everything a backend may use to produce one program.
#[derive(Debug, Clone, Copy)]
pub struct ProposalRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub island: &'a Island,
    /// Run memory plus this island's failed attempts in the current iteration.
    pub memory: &'a MemoryBank,
    pub learner_kind: LearnerKind,
    pub schema: &'a Schema,
}

pub trait Proposer: Send + Sync {
    /// Recorded as the provenance of accepted programs.
    fn id(&self) -> String;
    fn propose(&self, request: &ProposalRequest<'_>) -> Result<String>;
}

/// Template proposer; the start template is `seed + island index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OfflineProposer {
    pub seed: u64,
}

impl Proposer for OfflineProposer {
    fn id(&self) -> String {
        format!("offline:{}", self.seed)
    }

    fn propose(&self, r: &ProposalRequest<'_>) -> Result<String> {
        let seed = self.seed.wrapping_add(r.island.index as u64);
        offline_propose(r.island, r.memory, r.learner_kind, r.schema, seed)
    }
}

#[derive(Debug, Clone)]
pub struct HttpProposer {
    pub client: HttpClient,
}

impl Proposer for HttpProposer {
    fn id(&self) -> String {
        format!("http_chat:{}", self.client.settings.model)
    }

    fn propose(&self, r: &ProposalRequest<'_>) -> Result<String> {
        let content = self.client.complete(&r.prompt.preamble, &r.prompt.user_message())?;
        extract_fenced_block(&content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    HttpChat,
    #[default]
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProposerConfig {
    pub backend: Backend,
    pub http: HttpSettings,
    /// Start offset of the offline proposer.
    pub seed: u64,
}

impl ProposerConfig {
    pub fn build(&self) -> Box<dyn Proposer> {
        match self.backend {
            Backend::Offline => Box::new(OfflineProposer { seed: self.seed }),
            Backend::HttpChat => Box::new(HttpProposer {
                client: HttpClient::new(self.http.clone()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{feature_groups, Cell, ColumnSchema, Dataset, FeatureGroup};
    use crate::dsl::{parse, visit_expr, Expr, GroupAgg};
    use crate::error::Error;
    use crate::explain::ImportanceVector;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema::new(vec![
            ColumnSchema::numeric("age", "age in years"),
            ColumnSchema::numeric("imd", "deprivation decile"),
            ColumnSchema::categorical("sex", ""),
            ColumnSchema::temporal("hr@0h", "heart rate", "hr", 0.0),
            ColumnSchema::temporal("hr@6h", "heart rate", "hr", 6.0),
            ColumnSchema::label("died", "in-hospital death"),
        ])
        .unwrap()
    }

    fn island_of(schema: &Schema, ids: &[&str]) -> Island {
        let groups = feature_groups(schema);
        let picked = ids
            .iter()
            .map(|id| groups.iter().find(|g| g.group_id == *id).unwrap().clone())
            .collect();
        Island::new(1, 0, picked)
    }

    fn importance(groups: &[FeatureGroup]) -> ImportanceVector {
        ImportanceVector::from_raw(
            groups
                .iter()
                .enumerate()
                .map(|(i, g)| (g.group_id.clone(), (i + 1) as f64))
                .collect(),
        )
    }

    fn prompt_for(kind: LearnerKind, memory: &MemoryBank, options: &PromptOptions) -> PromptBundle {
        let s = schema();
        let island = island_of(&s, &["age", "hr"]);
        build_prompt(&island, &importance(&feature_groups(&s)), memory, kind, "", &s, options)
    }

    #[test]
    fn prompt_blocks() {
        let p = prompt_for(LearnerKind::Logreg, &MemoryBank::new(), &PromptOptions::default());
        assert_eq!(p.accepted_block, "(none yet)");
        assert_eq!(p.failed_block, "(none yet)");
        let text = p.render();
        assert!(text.contains("- age, importance: 0.1000, ranking 4 among 4 features"));
        assert!(text.contains("- hr, importance: 0.4000, ranking 1 among 4 features"));
        assert!(text.contains("hr@0h (t=0)"));
        assert!(!text.contains("imd"));
        assert!(text.contains("Predict `died` (in-hospital death)."));
        assert!(text.contains("nonlinear transformations, interaction terms, and composite features"));
    }

    #[test]
    fn learner_blocks_differ() {
        let o = PromptOptions::default();
        let lr = prompt_for(LearnerKind::Logreg, &MemoryBank::new(), &o).render();
        let gb = prompt_for(LearnerKind::Gbdt, &MemoryBank::new(), &o).render();
        assert!(gb.contains("complex temporal patterns, global statistics, and context-driven interactions"));
        assert!(gb.contains("do not propose simple thresholding or trivial interactions"));
        assert!(!gb.contains("interaction terms, and composite features"));
        assert!(!lr.contains("complex temporal patterns"));
        let none = PromptOptions {
            learner_block: false,
            importance: false,
            ..o
        };
        let bare = prompt_for(LearnerKind::Gbdt, &MemoryBank::new(), &none);
        assert!(bare.learner_block.is_none());
        assert!(bare.island_listing.lines().any(|l| l == "- hr"));
        assert!(!bare.render().contains("importance: "));
    }

    #[test]
    fn memory_shows_names_and_rationales() {
        let mut m = MemoryBank::new();
        m.record(
            "# joint effect\nfeature age_x_imd = col(age) * col(imd)",
            Outcome::Accepted { gain: 0.02 },
            1,
            0,
        );
        m.record(
            "feature k = 1 + 0",
            Outcome::Rejected {
                reason: RejectReason::Invalid,
                detail: Some("zero_variance".into()),
                delta: None,
            },
            1,
            1,
        );
        let p = prompt_for(LearnerKind::Logreg, &m, &PromptOptions::default());
        assert!(p.accepted_block.contains("age_x_imd"));
        assert!(p.accepted_block.contains("joint effect"));
        assert!(p.failed_block.contains("- k (invalid)"));
        assert!(!p.render().contains("col(age) * col(imd)"));
    }

    #[test]
    fn budget_sheds_memory_then_description() {
        let mut m = MemoryBank::new();
        for i in 0..10 {
            m.record(
                &format!("# {}\nfeature f{i} = col(age) + {i}", "long rationale ".repeat(20)),
                Outcome::Accepted { gain: 0.01 },
                1,
                0,
            );
        }
        let full = prompt_for(LearnerKind::Logreg, &m, &PromptOptions::default());
        let budget = full.len() - 1000;
        let cut = prompt_for(
            LearnerKind::Logreg,
            &m,
            &PromptOptions {
                budget,
                ..PromptOptions::default()
            },
        );
        assert!(cut.len() <= budget);
        assert!(cut.accepted_block.lines().count() < 10);
        assert!(cut.accepted_block.lines().count() > 0);
    }

    #[test]
    fn prompt_ignores_groups_outside_the_island() {
        let s = schema();
        let mut wide_cols = s.columns.clone();
        for i in 0..50 {
            wide_cols.insert(0, ColumnSchema::numeric(format!("extra{i}"), "unrelated"));
        }
        let wide = Schema::new(wide_cols).unwrap();
        let o = PromptOptions {
            importance: false,
            ..PromptOptions::default()
        };
        let narrow_p = build_prompt(
            &island_of(&s, &["age", "hr"]),
            &ImportanceVector::uniform(&feature_groups(&s)),
            &MemoryBank::new(),
            LearnerKind::Gbdt,
            "",
            &s,
            &o,
        );
        let wide_p = build_prompt(
            &island_of(&wide, &["age", "hr"]),
            &ImportanceVector::uniform(&feature_groups(&wide)),
            &MemoryBank::new(),
            LearnerKind::Gbdt,
            "",
            &wide,
            &o,
        );
        assert_eq!(narrow_p.render(), wide_p.render());
        assert!(!wide_p.render().contains("extra"));
    }

    #[test]
    fn offline_documented_order() {
        let s = schema();
        let island = island_of(&s, &["imd", "age"]);
        let mut m = MemoryBank::new();
        let first = offline_propose(&island, &m, LearnerKind::Logreg, &s, 0).unwrap();
        assert_eq!(first, "feature age_x_imd = col(age) * col(imd)");
        assert_eq!(offline_propose(&island, &m, LearnerKind::Logreg, &s, 0).unwrap(), first);
        m.record(
            &first,
            Outcome::Rejected {
                reason: RejectReason::NoImprovement,
                detail: None,
                delta: Some(0.0),
            },
            1,
            0,
        );
        let second = offline_propose(&island, &m, LearnerKind::Logreg, &s, 0).unwrap();
        assert!(second.starts_with("feature age_x_imd_scaled = "), "{second}");
        assert!(parse(&second).is_ok());
    }

    #[test]
    fn offline_gbdt_uses_group_summaries() {
        let s = schema();
        let island = island_of(&s, &["age", "hr"]);
        for seed in 0..3 {
            let text = offline_propose(&island, &MemoryBank::new(), LearnerKind::Gbdt, &s, seed).unwrap();
            let mut found = false;
            visit_expr(parse(&text).unwrap().expr(), &mut |e| {
                if let Expr::Group(agg, g) = e {
                    found |= g == "hr" && matches!(agg, GroupAgg::Slope | GroupAgg::Delta | GroupAgg::Std);
                }
            });
            assert!(found, "{text}");
        }
    }

    #[test]
    fn offline_exhaustion_and_no_repeats() {
        let s = schema();
        for kind in [LearnerKind::Logreg, LearnerKind::Gbdt] {
            let island = island_of(&s, &["age", "imd", "hr"]);
            let n = templates(&island, kind, &s).len();
            let mut m = MemoryBank::new();
            for i in 0..n {
                let p = offline_propose(&island, &m, kind, &s, i as u64 * 7).unwrap();
                assert!(!m.contains(&p));
                assert!(parse(&p).is_ok(), "{p}");
                m.record(
                    &p,
                    Outcome::Rejected {
                        reason: RejectReason::NoImprovement,
                        detail: None,
                        delta: None,
                    },
                    1,
                    0,
                );
            }
            assert!(matches!(
                offline_propose(&island, &m, kind, &s, 0),
                Err(Error::IslandExhausted)
            ));
        }
        // categorical-only island has no template
        let island = island_of(&s, &["sex"]);
        assert!(matches!(
            offline_propose(&island, &MemoryBank::new(), LearnerKind::Logreg, &s, 0),
            Err(Error::IslandExhausted)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn prompt_never_contains_cell_values(seed in 0u64..1000, n_num in 2usize..6, m in 1usize..4) {
            let mut cols: Vec<ColumnSchema> =
                (0..n_num).map(|i| ColumnSchema::numeric(format!("x{i}"), "measurement")).collect();
            cols.push(ColumnSchema::categorical("site", "site code"));
            cols.push(ColumnSchema::label("y", ""));
            let s = Schema::new(cols).unwrap();
            let rows: Vec<Vec<Cell>> = (0..20)
                .map(|r| {
                    let mut row: Vec<Cell> = (0..n_num).map(|i| Cell::Num(913_000.0 + (r * 10 + i) as f64)).collect();
                    row.push(Cell::Cat(format!("XQZ{r}")));
                    row
                })
                .collect();
            let labels = (0..20).map(|r| (r % 2) as u8).collect();
            let d = Dataset::from_rows(s.clone(), rows, labels).unwrap();
            let groups = feature_groups(d.schema());
            let imp = ImportanceVector::uniform(&groups);
            let m = m.min(groups.len());
            for island in crate::islands::sample_islands(&imp, &groups, 3, m, seed).unwrap() {
                let text = build_prompt(&island, &imp, &MemoryBank::new(), LearnerKind::Logreg, "", &s, &PromptOptions::default()).render();
                prop_assert!(!text.contains("XQZ"));
                prop_assert!(!text.contains("913"));
            }
        }
    }
}
