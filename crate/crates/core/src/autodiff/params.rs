use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tape::{Gradients, Tape, Var};
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
}

/// Named matrices with fixed shapes, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::DuplicateParameter(name));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "parameter" });
        }
        self.params.push(Param {
            name,
            value,
            trainable,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.index_of(name)
            .map(|i| &self.params[i].value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Replaces a value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let old = self.params[i].value.shape();
        if old != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set parameter",
                lhs: old,
                rhs: value.shape(),
            });
        }
        self.params[i].value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Param> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Result<Bindings> {
        let mut vars = Vec::with_capacity(self.params.len());
        let mut names = Vec::with_capacity(self.params.len());
        for p in &self.params {
            vars.push(tape.leaf(p.value.clone())?);
            names.push(p.name.clone());
        }
        Ok(Bindings { names, vars })
    }
}

/// Parameter name → tape variable for one forward pass.
#[derive(Debug, Clone)]
pub struct Bindings {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Gradients of trainable parameters, in parameter order. Parameters the
    /// loss does not depend on get zero matrices.
    pub fn collect(&self, params: &ParamSet, grads: &mut Gradients) -> Grads {
        let values = params
            .iter()
            .zip(&self.vars)
            .map(|(p, &v)| {
                if !p.trainable {
                    return None;
                }
                Some(
                    grads
                        .take(v)
                        .unwrap_or_else(|| Matrix::zeros(p.value.rows(), p.value.cols())),
                )
            })
            .collect();
        Grads {
            names: self.names.clone(),
            values,
        }
    }
}

/// Per-parameter gradients aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    names: Vec<String>,
    values: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names
            .iter()
            .position(|n| n == name)
            .and_then(|i| self.values[i].as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .filter_map(|(n, v)| v.as_ref().map(|v| (n.as_str(), v)))
    }

    pub(crate) fn by_index(&self, i: usize) -> Option<&Matrix> {
        self.values.get(i).and_then(|v| v.as_ref())
    }
}

/// Builds the loss on a fresh tape, then returns its value together with the
/// gradient of every trainable parameter.
pub fn forward_backward<F>(params: &ParamSet, builder: F) -> Result<(f64, Grads)>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape)?;
    let loss = builder(&mut tape, &bindings)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    let mut grads = tape.backward(loss)?;
    Ok((value, bindings.collect(params, &mut grads)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut p = ParamSet::new();
        p.insert("a", Matrix::zeros(1, 1), true).unwrap();
        assert_eq!(
            p.insert("a", Matrix::zeros(2, 1), true),
            Err(Error::DuplicateParameter("a".into()))
        );
    }

    #[test]
    fn shapes_are_fixed() {
        let mut p = ParamSet::new();
        p.insert("a", Matrix::zeros(2, 3), true).unwrap();
        assert!(p.set("a", Matrix::zeros(3, 2)).is_err());
        assert!(p.set("a", Matrix::filled(2, 3, 1.0)).is_ok());
        assert!(matches!(p.set("b", Matrix::zeros(1, 1)), Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn frozen_and_unused_parameters() {
        let mut p = ParamSet::new();
        p.insert("w", Matrix::row_vector(&[2.0]), true).unwrap();
        p.insert("frozen", Matrix::row_vector(&[5.0]), false).unwrap();
        p.insert("unused", Matrix::zeros(2, 2), true).unwrap();
        let (loss, grads) = forward_backward(&p, |t, b| {
            let w = b.var("w")?;
            let f = b.var("frozen")?;
            let y = t.mul(w, f)?;
            t.sum(y)
        })
        .unwrap();
        assert_eq!(loss, 10.0);
        assert_eq!(grads.get("w").unwrap().as_slice(), &[5.0]);
        assert!(grads.get("frozen").is_none());
        assert_eq!(grads.get("unused").unwrap(), &Matrix::zeros(2, 2));
    }
}
