use crate::error::{Error, Result};
use crate::num::Scalar;

/// Dense row-major value container with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                count,
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count: usize = shape.iter().product();
        Self {
            shape,
            values: vec![T::zero(); count],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor contains NaN or infinity".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_enforced() {
        assert!(Tensor::new(vec![2, 3], vec![0.0f64; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0f64; 5]).is_err());
    }

    #[test]
    fn finiteness_guard() {
        let t = Tensor::new(vec![2], vec![1.0f64, f64::NAN]).unwrap();
        assert!(t.assert_finite().is_err());
    }
}
