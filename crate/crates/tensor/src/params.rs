use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

/// Named learnable tensors in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Param>,
    index: Arc<HashMap<String, usize>>,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.params == other.params
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Re-inserting an existing name is a dimension error.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Dimension {
                op: "param_store",
                msg: format!("duplicate parameter `{name}`"),
            });
        }
        Arc::make_mut(&mut self.index).insert(name.clone(), self.params.len());
        self.names.push(name);
        self.params.push(Param { value, grad: None });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(String::as_str).zip(self.params.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.names.iter().map(String::as_str).zip(self.params.iter_mut())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.params[i].value)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.params[i].value),
            None => Err(TensorError::UnknownParam(name.to_string())),
        }
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    /// Registers every parameter as a gradient-tracked leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| graph.variable(p.value.clone())).collect(),
            index: Arc::clone(&self.index),
        }
    }

    /// Registers every parameter as a constant; nothing flows back to it.
    pub fn bind_frozen(&self, graph: &mut Graph) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| graph.constant(p.value.clone())).collect(),
            index: Arc::clone(&self.index),
        }
    }

    /// Moves gradients from a finished backward pass into the store. Fails
    /// on the first parameter the loss did not reach.
    pub fn collect_grads(&mut self, graph: &mut Graph, bound: &Bound) -> Result<()> {
        for ((name, p), &v) in self.names.iter().zip(self.params.iter_mut()).zip(&bound.vars) {
            let g = graph.take_grad(v).ok_or_else(|| TensorError::MissingGrad(name.clone()))?;
            match &mut p.grad {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    index: Arc<HashMap<String, usize>>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
