//! Named parameter storage, gradient accumulation, and AdamW.
//!
//! Parameters live outside any tape in a [`ParamStore`] keyed by name; each
//! training step binds them onto a fresh tape as leaves, runs forward and
//! backward, collects gradients into a [`GradStore`], and applies one
//! optimizer update. `BTreeMap` keys give a deterministic iteration order, so
//! runs with the same seed are bit-reproducible.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Tape, Tensor};
use crate::rng::SimRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named model parameters with deterministic iteration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<()> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Autodiff(format!(
                "param {name}: shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if self.entries.contains_key(name) {
            return Err(Error::Autodiff(format!("param {name}: already registered")));
        }
        self.entries.insert(name.to_string(), ParamEntry { shape: shape.to_vec(), values });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Autodiff(format!("param {name}: not registered")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamEntry> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Autodiff(format!("param {name}: not registered")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_scalars(&self) -> usize {
        self.entries.values().map(|e| e.values.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    /// Bind every parameter onto `tape` as gradient-tracked leaves. Names in
    /// `frozen` are bound as constants: they take part in the forward pass but
    /// receive no gradient and are skipped by the optimizer.
    pub fn bind(&self, tape: &Tape, frozen: &dyn Fn(&str) -> bool) -> Result<BoundParams> {
        let mut bound = BTreeMap::new();
        for (name, entry) in &self.entries {
            let rg = !frozen(name);
            let t = tape.leaf(&entry.shape, entry.values.clone(), rg)?;
            bound.insert(name.clone(), t);
        }
        Ok(BoundParams { tensors: bound })
    }

    pub fn bind_all(&self, tape: &Tape) -> Result<BoundParams> {
        self.bind(tape, &|_| false)
    }
}

/// Tape tensors for one binding of a [`ParamStore`].
#[derive(Debug)]
pub struct BoundParams {
    tensors: BTreeMap<String, Tensor>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Autodiff(format!("bound param {name}: not present")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }
}

/// Sum of per-sample gradients, keyed like the store that produced them.
#[derive(Debug, Default)]
pub struct GradStore {
    grads: BTreeMap<String, Vec<f64>>,
    pub samples: usize,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pull gradients off `bound` after a backward pass and add them in.
    /// Parameters without a gradient (frozen or unused) are skipped.
    pub fn accumulate(&mut self, bound: &BoundParams) {
        for (name, tensor) in bound.iter() {
            if let Some(g) = tensor.grad() {
                match self.grads.get_mut(name) {
                    Some(acc) => {
                        for (a, d) in acc.iter_mut().zip(&g) {
                            *a += d;
                        }
                    }
                    None => {
                        self.grads.insert(name.clone(), g);
                    }
                }
            }
        }
        self.samples += 1;
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(|v| v.as_slice())
    }

    /// Mean gradient over accumulated samples; `None` before any accumulate.
    pub fn mean(&self, name: &str) -> Option<Vec<f64>> {
        if self.samples == 0 {
            return None;
        }
        let inv = 1.0 / self.samples as f64;
        self.grads.get(name).map(|g| g.iter().map(|x| x * inv).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn has_non_finite(&self) -> bool {
        self.grads.values().any(|g| g.iter().any(|x| !x.is_finite()))
    }
}

/// AdamW: Adam moments plus decoupled weight decay applied directly to the
/// parameter, not mixed into the gradient.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter that has a mean gradient in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore) -> Result<()> {
        if grads.samples == 0 {
            return Err(Error::Autodiff("adamw: no gradients accumulated".to_string()));
        }
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - self.beta1.powf(t);
        let bias2 = 1.0 - self.beta2.powf(t);
        let names: Vec<String> = params.entries.keys().cloned().collect();
        for name in names {
            let Some(g) = grads.mean(&name) else {
                continue;
            };
            let entry = params.get_mut(&name)?;
            let n = entry.values.len();
            if g.len() != n {
                return Err(Error::Autodiff(format!(
                    "adamw: gradient for {name} has {} entries, parameter has {n}",
                    g.len()
                )));
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                entry.values[i] -=
                    self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * entry.values[i]);
            }
        }
        Ok(())
    }

    /// Flat view of optimizer state for checkpointing: (name, first moment,
    /// second moment) per parameter seen so far.
    pub fn export_state(&self) -> Vec<(String, Vec<f64>, Vec<f64>)> {
        self.m
            .iter()
            .map(|(name, m)| {
                let v = self.v.get(name).cloned().unwrap_or_else(|| vec![0.0; m.len()]);
                (name.clone(), m.clone(), v)
            })
            .collect()
    }

    pub fn import_state(&mut self, step: u64, state: Vec<(String, Vec<f64>, Vec<f64>)>) {
        self.step = step;
        self.m.clear();
        self.v.clear();
        for (name, m, v) in state {
            self.m.insert(name.clone(), m);
            self.v.insert(name, v);
        }
    }
}

/// Linear interpolation from `start` at epoch 0 to `end` at the final epoch.
pub fn linear_lr(start: f64, end: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return start;
    }
    let frac = epoch as f64 / (epochs - 1) as f64;
    start + (end - start) * frac
}

/// He-normal initialization for layers feeding ReLU: std = sqrt(2 / fan_in).
pub fn he_normal(rng: &mut SimRng, fan_in: usize, n: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Xavier-uniform initialization for linear/sigmoid layers.
pub fn xavier_uniform(rng: &mut SimRng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Small uniform noise, handy for symmetry breaking around a fixed point.
pub fn uniform_noise(rng: &mut SimRng, scale: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}
