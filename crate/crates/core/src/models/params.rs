use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered collection of uniquely named tensors (parameters or gradients).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedTensors<T: Scalar = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> NamedTensors<T> {
    pub fn new() -> Self {
        NamedTensors {
            entries: Vec::new(),
        }
    }

    /// Appends an entry; a duplicate name is a data error.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Data(format!("duplicate tensor name {name:?}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n, t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (&*n, t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar values across all entries.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn into_vec(self) -> Vec<(String, Tensor<T>)> {
        self.entries
    }

    /// Bitwise equality of names, shapes and values (NaN-safe, unlike `==`).
    pub fn bit_eq(&self, other: &Self) -> bool
    where
        T: Copy,
    {
        self.len() == other.len()
            && self.iter().zip(other.iter()).all(|((na, ta), (nb, tb))| {
                na == nb
                    && ta.shape() == tb.shape()
                    && ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
            })
    }
}
