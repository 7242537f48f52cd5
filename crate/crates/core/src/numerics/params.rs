use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeeError};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Named parameter arrays, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Which leaves of a bound store accumulate gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Only parameters flagged trainable.
    Trainable,
    /// Every parameter, frozen or not (used by gradient checks).
    All,
    /// Nothing; forward-only evaluation.
    None,
}

/// Tape handles for every parameter of a store.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

pub type Grads = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_params(params: Vec<Param>) -> Result<Self> {
        let mut store = Self::new();
        for p in params {
            store.insert(p.name, p.value, p.trainable)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(WeeError::InvalidInput(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            trainable,
        });
        Ok(())
    }

    /// Moves every parameter of `other` into `self`.
    pub fn extend(&mut self, other: ParamStore) -> Result<()> {
        for p in other.params {
            self.insert(p.name, p.value, p.trainable)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| WeeError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.params[i]),
            None => Err(WeeError::UnknownParameter(name.to_string())),
        }
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn num_trainable_values(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.get_mut(name)?.trainable = trainable;
        Ok(())
    }

    pub fn freeze_all(&mut self) {
        for p in &mut self.params {
            p.trainable = false;
        }
    }

    /// Rebuilds the name index; needed after deserialization.
    pub fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, p) in self.params.iter().enumerate() {
            if self.index.insert(p.name.clone(), i).is_some() {
                return Err(WeeError::InvalidInput(format!(
                    "duplicate parameter `{}`",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape, mode: GradMode) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|p| {
                let rg = match mode {
                    GradMode::Trainable => p.trainable,
                    GradMode::All => true,
                    GradMode::None => false,
                };
                (p.name.clone(), tape.leaf(p.value.clone(), rg))
            })
            .collect();
        Bindings { vars }
    }
}

impl Bindings {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| WeeError::UnknownParameter(name.to_string()))
    }

    /// Gradients of every bound parameter that received one.
    pub fn grads(&self, tape: &Tape) -> Grads {
        self.vars
            .iter()
            .filter_map(|(name, &v)| tape.grad(v).map(|g| (name.clone(), g)))
            .collect()
    }
}
