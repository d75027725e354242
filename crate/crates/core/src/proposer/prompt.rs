use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Schema};
use crate::explain::ImportanceVector;
use crate::islands::Island;
use crate::learners::LearnerKind;
use crate::proposer::memory::{MemoryBank, DEFAULT_MEMORY_CAP};

pub const DEFAULT_PROMPT_BUDGET: usize = 12_000;

const PREAMBLE: &str = "You are a clinical data scientist engineering features for a binary outcome \
model built on tabular patient records. You see only column metadata and aggregate feature \
importance, never patient-level values. Propose one new feature derived from the listed columns \
that is likely to improve the validation AUC of the downstream model.";

const LOGREG_BLOCK: &str = "Downstream model: L2-regularized logistic regression. It combines its \
inputs linearly, so it cannot represent curvature or joint effects by itself. Prefer nonlinear \
transformations, interaction terms, and composite features that expose such structure explicitly.";

const GBDT_BLOCK: &str = "Downstream model: gradient-boosted decision trees. The ensemble already \
finds cut points and simple pairwise splits, so do not propose simple thresholding or trivial \
interactions. Prefer complex temporal patterns, global statistics, and context-driven interactions \
that axis-aligned splits learn poorly, such as row-wise summaries over repeated measurements or \
values expressed relative to training-set statistics.";

const GRAMMAR: &str = "Feature language:
  program := \"feature\" NAME \"=\" expr
  expr    := number | col(COLUMN) | expr (+ - * /) expr | min(expr, expr) | max(expr, expr)
           | pow(expr, expr) | log1p(expr) | abs(expr) | sqrt(expr) | neg(expr) | clip01(expr)
           | if(cond, expr, expr) | coalesce(expr, expr)
           | trainmean(expr) | trainstd(expr) | trainmin(expr) | trainmax(expr) | trainmedian(expr)
           | gmean(GROUP) | gstd(GROUP) | gmin(GROUP) | gmax(GROUP) | gfirst(GROUP) | glast(GROUP)
           | gdelta(GROUP) | gslope(GROUP) | gmissing(GROUP)
  cond    := expr (> >= < <= ==) expr | is_missing(expr) | cond and cond | cond or cond | not cond
             | col(CATEGORICAL) == \"category\"
train* statistics are computed on training rows only. Group functions summarize the members of a \
repeated-measurement group ordered by time. Missing inputs propagate to a missing output unless \
handled with is_missing or coalesce.";

const CONTRACT: &str = "Answer with exactly one fenced code block holding one program. Lines \
beginning with # directly above the program state the rationale. Use a new feature name that \
does not match an existing column.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Include the learner-kind guidance block.
    pub learner_block: bool,
    /// Include importance values and ranks in the island listing.
    pub importance: bool,
    /// Upper bound on the rendered length, in characters.
    pub budget: usize,
    pub memory_cap: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            learner_block: true,
            importance: true,
            budget: DEFAULT_PROMPT_BUDGET,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub preamble: String,
    pub learner_block: Option<String>,
    pub task_description: String,
    pub island_listing: String,
    pub accepted_block: String,
    pub failed_block: String,
    pub grammar: String,
    pub output_contract: String,
}

impl PromptBundle {
    /// Everything after the preamble, as a single user message.
    pub fn user_message(&self) -> String {
        let mut parts = Vec::new();
        if let Some(b) = &self.learner_block {
            parts.push(b.clone());
        }
        parts.push(format!("Task:\n{}", self.task_description));
        parts.push(format!("Available features and importance:\n{}", self.island_listing));
        parts.push(format!("Accepted features so far:\n{}", self.accepted_block));
        parts.push(format!("Rejected features so far:\n{}", self.failed_block));
        parts.push(self.grammar.clone());
        parts.push(self.output_contract.clone());
        parts.join("\n\n")
    }

    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.preamble, self.user_message())
    }

    pub fn len(&self) -> usize {
        self.render().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn kind_name(kind: ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Numeric => "numeric",
        ColumnKind::Categorical => "categorical",
        ColumnKind::Binary => "binary",
    }
}

fn island_listing(island: &Island, importance: &ImportanceVector, schema: &Schema, with_importance: bool) -> String {
    let total = importance.len();
    let mut lines = Vec::new();
    for g in &island.groups {
        let entry = importance.get(&g.group_id);
        let head = match (with_importance, entry) {
            (true, Some(e)) => format!(
                "- {}, importance: {:.4}, ranking {} among {} features",
                g.group_id, e.normalized, e.rank, total
            ),
            _ => format!("- {}", g.group_id),
        };
        lines.push(head);
        if g.is_temporal {
            let members: Vec<String> = schema
                .group_members(&g.group_id)
                .into_iter()
                .map(|(name, t)| format!("{name} (t={t})"))
                .collect();
            let desc = schema
                .column(&g.member_columns[0])
                .map(|c| c.description.as_str())
                .unwrap_or("");
            lines.push(format!("  repeated-measurement group; members: {}", members.join(", ")));
            if !desc.is_empty() {
                lines.push(format!("  {desc}"));
            }
        } else if let Some(c) = schema.column(&g.member_columns[0]) {
            let mut s = format!("  {}", kind_name(c.kind));
            if !c.description.is_empty() {
                s.push_str("; ");
                s.push_str(&c.description);
            }
            lines.push(s);
        }
    }
    lines.join("\n")
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Assembles the prompt for one island from metadata only. When the result
/// exceeds the budget, older memory entries are dropped first and the task
/// description is shortened second.
pub fn build_prompt(
    island: &Island,
    importance: &ImportanceVector,
    memory: &MemoryBank,
    learner_kind: LearnerKind,
    task_description: &str,
    schema: &Schema,
    options: &PromptOptions,
) -> PromptBundle {
    let label = schema.label();
    let mut description = format!("Predict `{}`", label.name);
    if !label.description.is_empty() {
        description.push_str(&format!(" ({})", label.description));
    }
    description.push('.');
    if !task_description.trim().is_empty() {
        description.push(' ');
        description.push_str(task_description.trim());
    }
    let learner_block = options.learner_block.then(|| {
        match learner_kind {
            LearnerKind::Logreg => LOGREG_BLOCK,
            LearnerKind::Gbdt => GBDT_BLOCK,
        }
        .to_string()
    });
    let mut cap = options.memory_cap;
    let (accepted_block, failed_block) = memory.render(cap);
    let mut bundle = PromptBundle {
        preamble: PREAMBLE.to_string(),
        learner_block,
        task_description: description.clone(),
        island_listing: island_listing(island, importance, schema, options.importance),
        accepted_block,
        failed_block,
        grammar: GRAMMAR.to_string(),
        output_contract: CONTRACT.to_string(),
    };
    while bundle.len() > options.budget && cap > 0 {
        cap -= 1;
        (bundle.accepted_block, bundle.failed_block) = memory.render(cap);
        if cap == 0 {
            for (block, n) in [
                (&mut bundle.accepted_block, memory.accepted.len()),
                (&mut bundle.failed_block, memory.rejected.len()),
            ] {
                if n > 0 {
                    *block = "(omitted for length)".to_string();
                }
            }
        }
    }
    if bundle.len() > options.budget {
        let excess = bundle.len() - options.budget;
        let keep = description.chars().count().saturating_sub(excess + 3);
        bundle.task_description = truncate_chars(&description, keep);
    }
    bundle
}
