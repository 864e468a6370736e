//! Nodal fields and dual vectors.
//!
//! A [`NodalField`] holds P1 nodal values of a scalar function (state,
//! parameter, adjoint, eigenfunction). A [`DualVector`] represents a linear
//! functional on nodal fields through the Euclidean pairing, e.g. a load
//! vector or a gradient with respect to the parameter.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct NodalField(pub Vec<f64>);

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DualVector(pub Vec<f64>);

macro_rules! vector_newtype {
    ($name:ident) => {
        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn constant(len: usize, value: f64) -> Self {
                Self(vec![value; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            /// `self += alpha * other`
            pub fn axpy(&mut self, alpha: f64, other: &[f64]) {
                axpy(alpha, other, &mut self.0);
            }

            pub fn scale(&mut self, alpha: f64) {
                self.0.iter_mut().for_each(|v| *v *= alpha);
            }

            pub fn scaled(&self, alpha: f64) -> Self {
                Self(self.0.iter().map(|v| alpha * v).collect())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

vector_newtype!(NodalField);
vector_newtype!(DualVector);

impl NodalField {
    /// Duality pairing `<self, dual>`.
    pub fn pair(&self, dual: &DualVector) -> f64 {
        dot(&self.0, &dual.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
