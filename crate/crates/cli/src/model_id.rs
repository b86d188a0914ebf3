//! Model identifiers such as `SDFCN`, `SDFCN(L)` or `rSDFCN(0,2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use wmse_core::data::Task;
use wmse_core::models::MODEL_NAMES;
use wmse_core::{Error, Result};

pub const RESIDUAL: &str = "rSDFCN";
pub const DDAE: &str = "DDAE";

/// A model family plus an optional input-channel selection. Without a
/// selection the model takes every channel of the task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelId {
    pub base: String,
    pub channels: Option<Vec<usize>>,
}

impl ModelId {
    pub fn is_residual(&self) -> bool {
        self.base == RESIDUAL
    }

    pub fn is_ddae(&self) -> bool {
        self.base == DDAE
    }

    /// Channel indices for a task with `available` channels.
    pub fn resolve_channels(&self, available: usize) -> Result<Vec<usize>> {
        match &self.channels {
            None => Ok((0..available).collect()),
            Some(c) => {
                if let Some(&bad) = c.iter().find(|&&i| i >= available) {
                    return Err(Error::InvalidArgument(format!(
                        "{self} selects channel {bad}, task has {available}"
                    )));
                }
                Ok(c.clone())
            }
        }
    }

    /// Fully qualified form for the given task, e.g. `SDFCN(L,R)`.
    pub fn qualified(&self, task: Task) -> Result<ModelId> {
        Ok(ModelId {
            base: self.base.clone(),
            channels: Some(self.resolve_channels(task.channels())?),
        })
    }
}

fn channel_label(c: usize) -> String {
    match c {
        0 => "L".into(),
        1 => "R".into(),
        _ => c.to_string(),
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        if let Some(c) = &self.channels {
            let labels: Vec<String> = c.iter().map(|&i| channel_label(i)).collect();
            write!(f, "({})", labels.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    /// Channels are zero-based indices; `L` and `R` stand for 0 and 1.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (base, channels) = match s.split_once('(') {
            None => (s, None),
            Some((b, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::UnknownModel(s.to_string()))?;
                let chans = inner
                    .split(',')
                    .map(|t| match t.trim() {
                        "L" | "l" => Ok(0),
                        "R" | "r" => Ok(1),
                        n => n.parse::<usize>().map_err(|_| Error::UnknownModel(s.to_string())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut sorted = chans.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != chans.len() {
                    return Err(Error::InvalidArgument(format!("{s} repeats a channel")));
                }
                (b, Some(chans))
            }
        };
        let known = MODEL_NAMES.contains(&base) || base == RESIDUAL || base == DDAE;
        if !known {
            return Err(Error::UnknownModel(base.to_string()));
        }
        Ok(ModelId {
            base: base.to_string(),
            channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let id: ModelId = "SDFCN(L)".parse().unwrap();
        assert_eq!(id.channels, Some(vec![0]));
        assert_eq!(id.to_string(), "SDFCN(L)");
        let id: ModelId = "rSDFCN(0, 3)".parse().unwrap();
        assert!(id.is_residual());
        assert_eq!(id.to_string(), "rSDFCN(L,3)");
        assert_eq!("DDAE".parse::<ModelId>().unwrap().channels, None);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!("VGG".parse::<ModelId>(), Err(Error::UnknownModel(_))));
        assert!("SDFCN(L".parse::<ModelId>().is_err());
        assert!("SDFCN(x)".parse::<ModelId>().is_err());
        assert!("SDFCN(L,0)".parse::<ModelId>().is_err());
    }

    #[test]
    fn resolves_against_task() {
        let id: ModelId = "SDFCN".parse().unwrap();
        assert_eq!(id.resolve_channels(5).unwrap(), vec![0, 1, 2, 3, 4]);
        let id: ModelId = "SDFCN(R)".parse().unwrap();
        assert!(id.resolve_channels(1).is_err());
        assert_eq!(id.qualified(Task::Iem).unwrap().to_string(), "SDFCN(R)");
    }
}
