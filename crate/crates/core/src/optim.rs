//! Named parameter sets and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
}

/// Ordered collection of named trainable matrices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its position.
    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.entries.push(Param {
            name: name.into(),
            value,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn get(&self, index: usize) -> &Matrix {
        &self.entries[index].value
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Matrix {
        &mut self.entries[index].value
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].name
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix> {
        self.position(name).map(|i| self.get(i))
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moment(&self, index: usize) -> &Matrix {
        &self.first[index]
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Gradients are checked before anything is written, so a rejected step leaves
/// both parameters and state untouched.
pub fn adam_step(params: &mut ParamSet, grads: &[Matrix], state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Contract(format!("learning rate must be positive, got {lr}")));
    }
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam step over {} parameters got {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.get(i).shape() {
            return Err(Error::dim("adam_step", params.get(i).shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::Training {
                param: params.name(i).to_string(),
                reason: "non-finite gradient".into(),
            });
        }
    }

    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    for (i, g) in grads.iter().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let w = params.get_mut(i).data_mut();
        for j in 0..g.len() {
            let gj = g.data()[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            w[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Matrix::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = single(0.7);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Matrix::scalar(1.0)], &mut state, 0.1).unwrap();
        let after_one = params.get(0).get(0, 0);
        let m_before = state.first_moment(0).get(0, 0);
        adam_step(&mut params, &[Matrix::scalar(0.0)], &mut state, 0.1).unwrap();
        // momentum still moves the parameter; with a fresh state nothing moves at all
        assert!((state.first_moment(0).get(0, 0) - 0.9 * m_before).abs() < 1e-15);
        let mut fresh = single(0.7);
        let mut fresh_state = AdamState::new(&fresh);
        adam_step(&mut fresh, &[Matrix::scalar(0.0)], &mut fresh_state, 0.1).unwrap();
        assert_eq!(fresh.get(0).get(0, 0), 0.7);
        assert!(after_one < 0.7);
    }

    #[test]
    fn positive_gradient_decreases_monotonically() {
        let mut params = single(1.0);
        let mut state = AdamState::new(&params);
        let mut prev = 1.0;
        for _ in 0..50 {
            adam_step(&mut params, &[Matrix::scalar(1.0)], &mut state, 0.01).unwrap();
            let now = params.get(0).get(0, 0);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = single(1.0);
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[Matrix::scalar(f64::NAN)], &mut state, 0.01).unwrap_err();
        match err {
            Error::Training { param, .. } => assert_eq!(param, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(state.step, 0);
    }

    #[test]
    fn rejects_non_positive_learning_rate() {
        let mut params = single(1.0);
        let mut state = AdamState::new(&params);
        assert!(adam_step(&mut params, &[Matrix::scalar(1.0)], &mut state, 0.0).is_err());
    }
}
