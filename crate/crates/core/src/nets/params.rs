use tempcycle_autograd::{Graph, Scalar, Tensor, Var};

use crate::error::{Error, Result};

/// Ordered, named learnable tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.names.push(name.into());
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.tensors.iter_mut().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    /// Number of scalar learnables.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Replaces every tensor by name and shape from `other`.
    pub fn load_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Shape(format!(
                "parameter names differ ({} vs {} entries)",
                self.names.len(),
                other.names.len()
            )));
        }
        for ((name, dst), src) in self.names.iter().zip(&mut self.tensors).zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape(format!(
                    "{name}: expected {:?}, got {:?}",
                    dst.shape(),
                    src.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    /// Registers every tensor in `graph`, as trainable leaves or frozen constants.
    pub fn bind<'a>(&'a self, graph: &mut Graph<'a, T>, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    graph.param(t)
                } else {
                    graph.constant(t)
                }
            })
            .collect();
        BoundParams { vars }
    }
}

pub fn count_parameters<T: Scalar>(params: &ParamSet<T>) -> usize {
    params.count()
}

/// Graph handles of a bound [`ParamSet`], in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub(crate) fn cursor(&self) -> ParamCursor<'_> {
        ParamCursor {
            vars: &self.vars,
            pos: 0,
        }
    }
}

pub(crate) struct ParamCursor<'p> {
    vars: &'p [Var],
    pos: usize,
}

impl ParamCursor<'_> {
    pub(crate) fn take(&mut self) -> Var {
        let v = self.vars[self.pos];
        self.pos += 1;
        v
    }

    pub(crate) fn finish(self) {
        debug_assert_eq!(self.pos, self.vars.len(), "unused parameters");
    }
}
