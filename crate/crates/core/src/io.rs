//! JSON files for models, value functions and controllers.
//!
//! Alpha-vector sets, policy graphs, controllers, grids and bound tables
//! serialize through their own `serde` derives; this module adds the model
//! document, whose tables are nested per action, and thin read/write
//! helpers. Floats are written by `serde_json`, which round-trips `f64`
//! exactly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maze::MazeSpec;
use crate::model::{Labels, Pomdp};

/// A dimension given either as a count or as a list of names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dimension {
    Count(usize),
    Names(Vec<String>),
}

impl Dimension {
    fn len(&self) -> usize {
        match self {
            Dimension::Count(n) => *n,
            Dimension::Names(v) => v.len(),
        }
    }

    fn names(&self) -> Option<Vec<String>> {
        match self {
            Dimension::Count(_) => None,
            Dimension::Names(v) => Some(v.clone()),
        }
    }

    fn from_labels(n: usize, names: &Option<Vec<String>>) -> Self {
        names.clone().map_or(Dimension::Count(n), Dimension::Names)
    }
}

/// The on-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub discount: f64,
    pub states: Dimension,
    pub actions: Dimension,
    pub observations: Dimension,
    /// `[a][s][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `[a][s'][o]`.
    pub observation: Vec<Vec<Vec<f64>>>,
    /// `[a][s][s']`.
    pub reward: Vec<Vec<Vec<f64>>>,
}

fn nest(flat: &[f64], blocks: usize, rows: usize, cols: usize) -> Vec<Vec<Vec<f64>>> {
    (0..blocks)
        .map(|a| (0..rows).map(|r| flat[(a * rows + r) * cols..(a * rows + r + 1) * cols].to_vec()).collect())
        .collect()
}

impl ModelFile {
    pub fn from_model(m: &Pomdp) -> Self {
        let (t, o, r) = m.tables();
        let (ns, na, no) = (m.num_states(), m.num_actions(), m.num_obs());
        let l = m.labels();
        Self {
            discount: m.discount(),
            states: Dimension::from_labels(ns, &l.states),
            actions: Dimension::from_labels(na, &l.actions),
            observations: Dimension::from_labels(no, &l.observations),
            transition: nest(t, na, ns, ns),
            observation: nest(o, na, ns, no),
            reward: nest(r, na, ns, ns),
        }
    }

    pub fn into_model(self) -> Result<Pomdp> {
        let m = Pomdp::new(self.transition, self.observation, self.reward, self.discount)?;
        let declared = (self.states.len(), self.actions.len(), self.observations.len());
        if declared != (m.num_states(), m.num_actions(), m.num_obs()) {
            return Err(Error::Validation(format!(
                "declared sizes {declared:?} disagree with the tables ({}, {}, {})",
                m.num_states(),
                m.num_actions(),
                m.num_obs()
            )));
        }
        m.with_labels(Labels {
            states: self.states.names(),
            actions: self.actions.names(),
            observations: self.observations.names(),
        })
    }
}

pub fn model_to_json(m: &Pomdp) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(m)).expect("model tables serialize")
}

pub fn model_from_json(text: &str) -> Result<Pomdp> {
    from_json::<ModelFile>(text)?.into_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Pomdp> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn save_model(m: &Pomdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(m))?;
    Ok(())
}

pub fn load_maze_spec(path: impl AsRef<Path>) -> Result<MazeSpec> {
    read_json(path)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    from_json(&fs::read_to_string(path)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}
