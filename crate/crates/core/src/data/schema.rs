use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Categorical,
    Continuous,
    Target,
    Timestamp,
    Ignored,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    #[default]
    None,
    /// Natural logarithm; targets must be positive.
    Log,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }
}

/// Declared role of every CSV column used by an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub target_transform: TargetTransform,
}

impl SchemaConfig {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("column {:?} declared twice", c.name)));
            }
        }
        let targets = self.names(ColumnRole::Target).count();
        if targets != 1 {
            return Err(Error::Schema(format!(
                "exactly one target column required, found {targets}"
            )));
        }
        if self.names(ColumnRole::Timestamp).count() > 1 {
            return Err(Error::Schema("at most one timestamp column allowed".into()));
        }
        Ok(())
    }

    pub fn names(&self, role: ColumnRole) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .filter(move |c| c.role == role)
            .map(|c| c.name.as_str())
    }

    pub fn target(&self) -> Option<&str> {
        self.names(ColumnRole::Target).next()
    }

    pub fn timestamp(&self) -> Option<&str> {
        self.names(ColumnRole::Timestamp).next()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ok = SchemaConfig {
            columns: vec![
                ColumnSpec::new("a", ColumnRole::Categorical),
                ColumnSpec::new("y", ColumnRole::Target),
            ],
            target_transform: TargetTransform::Log,
        };
        ok.validate().unwrap();

        let mut none = ok.clone();
        none.columns.pop();
        assert!(none.validate().is_err());

        let mut dup = ok.clone();
        dup.columns
            .push(ColumnSpec::new("a", ColumnRole::Continuous));
        assert!(dup.validate().is_err());

        let mut two_ts = ok.clone();
        two_ts
            .columns
            .push(ColumnSpec::new("t1", ColumnRole::Timestamp));
        two_ts
            .columns
            .push(ColumnSpec::new("t2", ColumnRole::Timestamp));
        assert!(two_ts.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let json = r#"{"columns":[{"name":"Sales","role":"target"}],"target_transform":"log"}"#;
        let s: SchemaConfig = serde_json::from_str(json).unwrap();
        assert_eq!(s.target(), Some("Sales"));
        assert_eq!(serde_json::to_string(&s).unwrap(), json);
    }
}
