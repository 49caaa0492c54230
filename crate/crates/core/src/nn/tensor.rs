use super::{NnError, Real};

/// Dense n-dimensional array in row-major order, optionally carrying a
/// gradient of the same shape.
#[derive(Debug, Clone)]
pub struct Tensor<E: Real> {
    shape: Vec<usize>,
    values: Vec<E>,
    pub requires_grad: bool,
    pub grad: Option<Vec<E>>,
}

impl<E: Real> Tensor<E> {
    pub fn new(values: Vec<E>, shape: &[usize], requires_grad: bool) -> Result<Self, NnError> {
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(NnError::InvalidArgument {
                op: "tensor",
                message: format!("{} values for shape {:?} ({} slots)", values.len(), shape, numel),
            });
        }
        Ok(Self { shape: shape.to_vec(), values, requires_grad, grad: None })
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        let numel: usize = shape.iter().product();
        Self { shape: shape.to_vec(), values: vec![E::ZERO; numel], requires_grad, grad: None }
    }

    pub fn scalar(v: E) -> Self {
        Self { shape: vec![], values: vec![v], requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[E] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [E] {
        &mut self.values
    }

    /// Split borrow for optimizer updates that read the gradient while
    /// writing the values.
    pub fn values_mut_and_grad(&mut self) -> (&mut [E], Option<&[E]>) {
        (&mut self.values, self.grad.as_deref())
    }

    /// Gradient slice, all zeros when no backward pass has touched it.
    pub fn grad_or_zeros(&self) -> Vec<E> {
        self.grad.clone().unwrap_or_else(|| vec![E::ZERO; self.values.len()])
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
