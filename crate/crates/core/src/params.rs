//! Named trainable parameters with seeded initialization.

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Ordered collection of trainable variables. Insertion order is the
/// checkpoint and optimizer order.
#[derive(Debug)]
pub struct ParamStore {
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
    entries: Vec<(String, Var)>,
    frozen: Vec<String>,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        ParamStore {
            dtype,
            device,
            rng: ChaCha8Rng::seed_from_u64(seed),
            entries: Vec::new(),
            frozen: Vec::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("duplicate parameter {name:?}")));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.entries.push((name.to_string(), var.clone()));
        Ok(var)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.insert(name, shape, data)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.insert(name, shape, data)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.insert(name, shape, vec![value; n])
    }

    /// Linear layer `(fan_in -> fan_out)` with the usual
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = self.uniform(&format!("{prefix}.weight"), &[fan_in, fan_out], bound)?;
        let bias = self.uniform(&format!("{prefix}.bias"), &[fan_out], bound)?;
        Ok(Linear { weight, bias })
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn element_count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Excludes every parameter whose name starts with `prefix` from
    /// optimization (an empty prefix freezes everything).
    pub fn freeze(&mut self, prefix: &str) {
        for (name, _) in &self.entries {
            if name.starts_with(prefix) && !self.frozen.contains(name) {
                self.frozen.push(name.clone());
            }
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        !self.frozen.iter().any(|n| n == name)
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.entries
            .iter()
            .filter(|(n, _)| self.is_trainable(n))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|(n, _)| self.is_trainable(n))
            .map(|(_, v)| v.elem_count())
            .sum()
    }
}

/// `y = x W + b` with `W: (in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        affine(x, self.weight.as_tensor(), self.bias.as_tensor())
    }
}

/// Applies `x W + b` over the last dimension of `x`.
pub fn affine(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (fan_in, fan_out) = weight.dims2()?;
    let last = x.dims().last().copied().unwrap_or(0);
    if last != fan_in || bias.dims() != [fan_out] {
        return Err(Error::Shape(format!(
            "input {:?} against weight {:?} and bias {:?}",
            x.dims(),
            weight.dims(),
            bias.dims()
        )));
    }
    Ok(x.broadcast_matmul(weight)?.broadcast_add(bias)?)
}

/// Flattens a tensor to `f64` values.
pub fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}

/// Copy of every parameter's values, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    pub arrays: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl ParamStore {
    pub fn snapshot(&self) -> Result<ParamSnapshot> {
        let arrays = self
            .entries
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.dims().to_vec(), to_f64_vec(v.as_tensor())?)))
            .collect::<Result<_>>()?;
        Ok(ParamSnapshot { arrays })
    }

    /// Overwrites values in place; names and shapes must match exactly.
    pub fn restore(&self, snapshot: &ParamSnapshot) -> Result<()> {
        if snapshot.arrays.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "{} arrays for {} parameters",
                snapshot.arrays.len(),
                self.entries.len()
            )));
        }
        for ((name, var), (sname, dims, data)) in self.entries.iter().zip(&snapshot.arrays) {
            if name != sname || var.dims() != dims.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} {:?} does not match stored {sname} {dims:?}",
                    var.dims()
                )));
            }
            let t = Tensor::from_slice(data, dims.as_slice(), &self.device)?.to_dtype(self.dtype)?;
            var.set(&t)?;
        }
        Ok(())
    }
}
