use std::fmt;
use std::sync::Arc;

use super::block::{block_apply, BlockVectors};
use super::dense::dot;
use super::operator::LinearOperator;
use crate::error::{check_dim, Result};

/// `⟨x, y⟩ = xᵀ B y`, with `B = I` when no weight is set.
#[derive(Clone, Default)]
pub struct InnerProduct {
    weight: Option<Arc<dyn LinearOperator>>,
}

impl InnerProduct {
    pub fn identity() -> Self {
        Self { weight: None }
    }

    /// The weight must be symmetric positive definite. This is not checked.
    pub fn weighted(b: Arc<dyn LinearOperator>) -> Self {
        Self { weight: Some(b) }
    }

    pub fn weight(&self) -> Option<&Arc<dyn LinearOperator>> {
        self.weight.as_ref()
    }

    pub fn is_identity(&self) -> bool {
        self.weight.is_none()
    }

    /// `B x`, or a copy of `x` for the identity.
    pub fn apply_weight(&self, x: &BlockVectors) -> Result<BlockVectors> {
        match &self.weight {
            Some(b) => block_apply(b.as_ref(), x),
            None => Ok(x.clone()),
        }
    }

    pub fn dot(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim("inner product", x.len(), y.len())?;
        match &self.weight {
            None => Ok(dot(x, y)),
            Some(b) => {
                check_dim("inner product weight", b.dim(), y.len())?;
                let yb = BlockVectors::from_col_major(y.len(), 1, y.to_vec())?;
                let by = block_apply(b.as_ref(), &yb)?;
                Ok(dot(x, by.col(0)))
            }
        }
    }
}

impl fmt::Debug for InnerProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.weight {
            None => f.write_str("InnerProduct(identity)"),
            Some(b) => write!(f, "InnerProduct(weighted, dim {})", b.dim()),
        }
    }
}
