use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Catalog, ChoiceSpace, ItemId};

/// One recorded selection. Serialized as one JSONL line:
/// `{"space":[..],"chosen":id,"at":iso8601,"retracted":bool,"rating":number?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub space: ChoiceSpace,
    pub chosen: ItemId,
    pub at: DateTime<Utc>,
    #[serde(default)]
    pub retracted: bool,
    #[serde(rename = "rating", default, skip_serializing_if = "Option::is_none")]
    pub context_free_rating: Option<f64>,
}

impl Observation {
    pub fn new(space: ChoiceSpace, chosen: ItemId, at: DateTime<Utc>) -> Result<Self> {
        let obs = Self {
            space,
            chosen,
            at,
            retracted: false,
            context_free_rating: None,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn with_rating(mut self, rating: f64) -> Self {
        self.context_free_rating = Some(rating);
        self
    }

    pub fn retracted(mut self) -> Self {
        self.retracted = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.space.contains(&self.chosen) {
            return Err(Error::ItemNotInSpace {
                item: self.chosen.to_string(),
            });
        }
        Ok(())
    }
}

/// Append-only, time-ordered record of one user's selections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChoiceLog {
    pub user: String,
    observations: Vec<Observation>,
}

impl ChoiceLog {
    pub fn new(user: impl Into<String>) -> Self {
        Self {
            user: user.into(),
            observations: Vec::new(),
        }
    }

    pub fn from_observations(
        user: impl Into<String>,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        let mut log = Self::new(user);
        for obs in observations {
            log.push(obs)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, obs: Observation) -> Result<usize> {
        obs.validate()?;
        if let Some(last) = self.observations.last() {
            if obs.at < last.at {
                return Err(Error::TimestampOrder {
                    index: self.observations.len(),
                });
            }
        }
        self.observations.push(obs);
        Ok(self.observations.len() - 1)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn last_at(&self) -> Option<DateTime<Utc>> {
        self.observations.last().map(|o| o.at)
    }

    /// Marks an observation retracted. Returns `false` if it already was.
    pub fn retract(&mut self, index: usize) -> Result<bool> {
        let obs = self
            .observations
            .get_mut(index)
            .ok_or_else(|| Error::InvalidParameter(format!("no observation {index}")))?;
        if obs.retracted {
            return Ok(false);
        }
        obs.retracted = true;
        Ok(true)
    }

    /// The log restricted to its first `end` observations.
    pub fn prefix(&self, end: usize) -> ChoiceLog {
        ChoiceLog {
            user: self.user.clone(),
            observations: self.observations[..end.min(self.observations.len())].to_vec(),
        }
    }

    pub fn read_jsonl(user: impl Into<String>, reader: impl BufRead) -> Result<Self> {
        let mut log = Self::new(user);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let obs: Observation =
                serde_json::from_str(&line).map_err(|source| Error::LogLine {
                    line: i + 1,
                    source,
                })?;
            log.push(obs)?;
        }
        Ok(log)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let user = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(user, std::io::BufReader::new(file))
    }

    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        for obs in &self.observations {
            serde_json::to_writer(&mut writer, obs)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Catalog of every item seen, in order of first appearance (chosen item
    /// first, then the rest of its space by id).
    pub fn infer_catalog(&self) -> Result<Catalog> {
        let mut items: Vec<ItemId> = Vec::new();
        for obs in &self.observations {
            for id in std::iter::once(&obs.chosen).chain(obs.space.iter()) {
                if !items.contains(id) {
                    items.push(id.clone());
                }
            }
        }
        Catalog::new(items)
    }
}
