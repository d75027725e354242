use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

impl ColumnKind {
    /// Numeric and binary columns both hold real values.
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Numeric | ColumnKind::Binary)
    }
}

/// Membership of a column in a group of repeated measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMembership {
    pub group_id: String,
    /// Hours since reference, or a wave index.
    pub time_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_group: Option<TemporalMembership>,
    #[serde(default)]
    pub is_label: bool,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            description: description.into(),
            temporal_group: None,
            is_label: false,
        }
    }

    pub fn categorical(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            kind: ColumnKind::Categorical,
            ..Self::numeric(name, description)
        }
    }

    pub fn binary(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            kind: ColumnKind::Binary,
            ..Self::numeric(name, description)
        }
    }

    pub fn label(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            kind: ColumnKind::Binary,
            is_label: true,
            ..Self::numeric(name, description)
        }
    }

    pub fn temporal(
        name: impl Into<String>,
        description: impl Into<String>,
        group_id: impl Into<String>,
        time_offset: f64,
    ) -> Self {
        Self {
            temporal_group: Some(TemporalMembership {
                group_id: group_id.into(),
                time_offset,
            }),
            ..Self::numeric(name, description)
        }
    }
}

fn default_delimiter() -> char {
    ','
}

/// The schema sidecar document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub schema_version: u32,
    /// Token that marks a missing cell, in addition to the empty field.
    #[serde(default)]
    pub missing_token: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub columns: Vec<ColumnSchema>,
}

/// Column names and group identifiers must match this so programs can reference them.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '@' | '.'))
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let schema = Self {
            schema_version: SCHEMA_VERSION,
            missing_token: String::new(),
            delimiter: default_delimiter(),
            columns,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let labels: Vec<_> = self.columns.iter().filter(|c| c.is_label).collect();
        match labels.as_slice() {
            [] => return Err(Error::Schema("no column has is_label = true".into())),
            [label] => {
                if label.kind != ColumnKind::Binary {
                    return Err(Error::Schema(format!(
                        "label column `{}` must be binary",
                        label.name
                    )));
                }
                if label.temporal_group.is_some() {
                    return Err(Error::Schema(format!(
                        "label column `{}` cannot belong to a temporal group",
                        label.name
                    )));
                }
            }
            _ => return Err(Error::Schema("more than one label column".into())),
        }

        let mut names = HashSet::new();
        for c in &self.columns {
            if !is_identifier(&c.name) {
                return Err(Error::Schema(format!("`{}` is not a valid column name", c.name)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }

        let mut groups: BTreeMap<&str, Vec<&ColumnSchema>> = BTreeMap::new();
        for c in &self.columns {
            if let Some(tg) = &c.temporal_group {
                groups.entry(tg.group_id.as_str()).or_default().push(c);
            }
        }
        for (gid, members) in &groups {
            if !is_identifier(gid) {
                return Err(Error::Schema(format!("`{gid}` is not a valid group id")));
            }
            if names.contains(gid) {
                return Err(Error::Schema(format!(
                    "temporal group `{gid}` shares its id with a column"
                )));
            }
            if members.len() < 2 {
                return Err(Error::Schema(format!(
                    "temporal group `{gid}` has a single member; groups need at least two"
                )));
            }
            let mut offsets = Vec::with_capacity(members.len());
            for m in members {
                if m.kind != ColumnKind::Numeric {
                    return Err(Error::Schema(format!(
                        "temporal member `{}` must be numeric",
                        m.name
                    )));
                }
                let t = m.temporal_group.as_ref().map(|t| t.time_offset).unwrap_or(0.0);
                if !t.is_finite() {
                    return Err(Error::Schema(format!("`{}` has a non-finite time_offset", m.name)));
                }
                if offsets.contains(&t) {
                    return Err(Error::Schema(format!(
                        "temporal group `{gid}` repeats time_offset {t}"
                    )));
                }
                offsets.push(t);
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &ColumnSchema {
        self.columns
            .iter()
            .find(|c| c.is_label)
            .expect("validated schema has a label")
    }

    /// Non-label columns in declaration order.
    pub fn features(&self) -> impl Iterator<Item = &ColumnSchema> {
        self.columns.iter().filter(|c| !c.is_label)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Members of a temporal group ordered by time offset, as `(name, offset)`.
    pub fn group_members(&self, group_id: &str) -> Vec<(&str, f64)> {
        let mut members: Vec<(&str, f64)> = self
            .columns
            .iter()
            .filter_map(|c| match &c.temporal_group {
                Some(tg) if tg.group_id == group_id => Some((c.name.as_str(), tg.time_offset)),
                _ => None,
            })
            .collect();
        members.sort_by(|a, b| a.1.total_cmp(&b.1));
        members
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }
}

/// A unit of importance scoring and island sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub group_id: String,
    pub member_columns: Vec<String>,
    pub is_temporal: bool,
}

/// One singleton group per static feature column, one group per temporal group id,
/// in order of first appearance.
pub fn feature_groups(schema: &Schema) -> Vec<FeatureGroup> {
    let mut out: Vec<FeatureGroup> = Vec::new();
    let mut seen = HashSet::new();
    for c in schema.features() {
        match &c.temporal_group {
            None => out.push(FeatureGroup {
                group_id: c.name.clone(),
                member_columns: vec![c.name.clone()],
                is_temporal: false,
            }),
            Some(tg) => {
                if seen.insert(tg.group_id.clone()) {
                    out.push(FeatureGroup {
                        group_id: tg.group_id.clone(),
                        member_columns: schema
                            .group_members(&tg.group_id)
                            .into_iter()
                            .map(|(n, _)| n.to_string())
                            .collect(),
                        is_temporal: true,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hr_schema() -> Schema {
        Schema::new(vec![
            ColumnSchema::numeric("age", "age in years"),
            ColumnSchema::categorical("sex", ""),
            ColumnSchema::temporal("hr@0h", "heart rate", "hr", 0.0),
            ColumnSchema::temporal("hr@3h", "heart rate", "hr", 3.0),
            ColumnSchema::label("dead", ""),
        ])
        .unwrap()
    }

    #[test]
    fn groups_static_and_temporal() {
        let groups = feature_groups(&hr_schema());
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[0].member_columns, vec!["age"]);
        assert_eq!(groups[1].member_columns, vec!["sex"]);
        assert_eq!(groups[2].group_id, "hr");
        assert!(groups[2].is_temporal);
        assert_eq!(groups[2].member_columns, vec!["hr@0h", "hr@3h"]);
    }

    #[test]
    fn static_only_schema_gives_singletons() {
        let schema = Schema::new(vec![
            ColumnSchema::numeric("a", ""),
            ColumnSchema::numeric("b", ""),
            ColumnSchema::label("y", ""),
        ])
        .unwrap();
        let groups = feature_groups(&schema);
        assert!(groups.iter().all(|g| !g.is_temporal && g.member_columns.len() == 1));
    }

    #[test]
    fn single_member_temporal_group_is_rejected() {
        let err = Schema::new(vec![
            ColumnSchema::temporal("hr@0h", "", "hr", 0.0),
            ColumnSchema::label("y", ""),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("single member"), "{err}");
    }

    #[test]
    fn label_rules() {
        assert!(Schema::new(vec![ColumnSchema::numeric("a", "")]).is_err());
        let mut bad = ColumnSchema::label("y", "");
        bad.kind = ColumnKind::Numeric;
        assert!(Schema::new(vec![bad]).is_err());
        assert!(Schema::new(vec![ColumnSchema::label("y", ""), ColumnSchema::label("z", "")]).is_err());
    }

    #[test]
    fn duplicate_offsets_and_names_rejected() {
        assert!(Schema::new(vec![
            ColumnSchema::temporal("a", "", "g", 0.0),
            ColumnSchema::temporal("b", "", "g", 0.0),
            ColumnSchema::label("y", ""),
        ])
        .is_err());
        assert!(Schema::new(vec![
            ColumnSchema::numeric("a", ""),
            ColumnSchema::numeric("a", ""),
            ColumnSchema::label("y", ""),
        ])
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = hr_schema();
        assert_eq!(Schema::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("hr@0h"));
        assert!(is_identifier("_x.y"));
        assert!(!is_identifier("0abc"));
        assert!(!is_identifier("a b"));
        assert!(!is_identifier(""));
    }
}
