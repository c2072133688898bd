use super::kernels::numel;

/// A named, persistent tensor with optimizer state.
///
/// Non-trainable parameters hold buffers (batch-norm running statistics)
/// that are checkpointed with the model but never updated by the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    name: String,
    shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    trainable: bool,
    pub(crate) moment1: Vec<f64>,
    pub(crate) moment2: Vec<f64>,
    pub(crate) step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Self {
        Self::build(name.into(), shape, value, true)
    }

    pub fn buffer(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Self {
        Self::build(name.into(), shape, value, false)
    }

    fn build(name: String, shape: &[usize], value: Vec<f64>, trainable: bool) -> Self {
        assert_eq!(numel(shape), value.len(), "parameter {name}: shape/value mismatch");
        let n = value.len();
        Parameter {
            name,
            shape: shape.to_vec(),
            value,
            grad: None,
            trainable,
            moment1: vec![0.0; n],
            moment2: vec![0.0; n],
            step: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.moment1, &self.moment2)
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn params(&self) -> Vec<&Parameter>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    /// Number of trainable scalars.
    fn num_trainable(&self) -> usize {
        self.params().iter().filter(|p| p.trainable()).map(|p| p.len()).sum()
    }
}

pub fn zero_grads<'p>(params: impl IntoIterator<Item = &'p mut Parameter>) {
    for p in params {
        p.grad = None;
    }
}
