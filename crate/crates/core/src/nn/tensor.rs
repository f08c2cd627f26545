use rand::Rng;
use sha2::{Digest, Sha256};

use super::{NnError, Scalar};

/// Dense row-major array with a same-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            grad: vec![T::zero(); n],
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self, NnError> {
        Self::from_vec(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    /// Uniform values in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(rng.gen_range(-bound..=bound)))
            .collect();
        Self::from_vec(shape, data).expect("length matches shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    /// `(rows, cols)` view: the last axis is the column axis, every other
    /// axis is folded into rows. Scalars and vectors are single rows.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let cols = *self.shape.last().unwrap();
                (self.data.len() / cols.max(1), cols)
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
            grad: self.grad.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

/// A named, optionally trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        Self { params: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its position.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<usize, NnError> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(NnError::DuplicateParam(name));
        }
        self.params.push(Parameter {
            name,
            tensor,
            trainable: true,
        });
        Ok(self.params.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>, NnError> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| NnError::UnknownParam(name.to_owned()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter<T>, NnError> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| NnError::UnknownParam(name.to_owned()))
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.params.iter_mut().for_each(|p| p.trainable = trainable);
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Adds gradients produced by a graph to the matching parameters.
    /// Gradients for names this store does not hold are ignored.
    pub fn accumulate(&mut self, grads: &super::Gradients<T>) {
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            if let Some(g) = grads.get(&p.name) {
                for (acc, &x) in p.tensor.grad_mut().iter_mut().zip(g) {
                    *acc += x;
                }
            }
        }
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        for p in &self.params {
            hasher.update(p.name.as_bytes());
            for &d in p.tensor.shape() {
                hasher.update((d as u64).to_le_bytes());
            }
            buf.clear();
            p.tensor.data().iter().for_each(|&x| x.write_le(&mut buf));
            hasher.update(&buf);
        }
        hex::encode(hasher.finalize())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    /// Copies values (not gradients) from another store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore<T>) -> Result<(), NnError> {
        for p in self.params.iter_mut() {
            let src = other.get(&p.name)?;
            if src.tensor.shape() != p.tensor.shape() {
                return Err(NnError::shape(
                    "copy_values_from",
                    format!("{}: {:?} vs {:?}", p.name, src.tensor.shape(), p.tensor.shape()),
                ));
            }
            p.tensor.data_mut().copy_from_slice(src.tensor.data());
        }
        Ok(())
    }
}
