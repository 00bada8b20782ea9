//! Integer rescaling of rational inputs.
//!
//! Multiplying every coordinate of a problem by the lcm of their denominators
//! gives an integer problem with the same combinatorics. Hot loops then run on
//! `i128` when the magnitudes leave enough headroom and on `BigInt` otherwise;
//! either way the arithmetic is exact.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::model::Rational;

pub trait Exact:
    Clone + Ord + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Send + Sync + Debug
{
}

impl<T> Exact for T where
    T: Clone
        + Ord
        + Zero
        + Add<Output = T>
        + Sub<Output = T>
        + Mul<Output = T>
        + Send
        + Sync
        + Debug
{
}

pub fn abs_diff<T: Exact>(a: &T, b: &T) -> T {
    if a >= b {
        a.clone() - b.clone()
    } else {
        b.clone() - a.clone()
    }
}

/// Integers `values[i] = inputs[i] * scale`.
#[derive(Clone, Debug)]
pub struct Scaled {
    pub scale: BigInt,
    pub values: Vec<BigInt>,
}

impl Scaled {
    pub fn new<'a>(inputs: impl IntoIterator<Item = &'a Rational>) -> Self {
        let inputs: Vec<&Rational> = inputs.into_iter().collect();
        let scale = inputs
            .iter()
            .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
        let values = inputs
            .iter()
            .map(|q| q.numer() * (&scale / q.denom()))
            .collect();
        Self { scale, values }
    }

    /// The values as `i128` if every product of two sums of up to `terms`
    /// values still fits.
    pub fn small(&self, terms: usize) -> Option<Vec<i128>> {
        let max = self
            .values
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(BigInt::zero);
        let bound = (max + 1u32) * BigInt::from(2 * terms.max(1) as u64);
        if bound.bits() * 2 + 2 >= 127 {
            return None;
        }
        self.values.iter().map(|v| v.to_i128()).collect()
    }

    pub fn unscale_int(&self, v: BigInt) -> Rational {
        Rational::new(v, self.scale.clone())
    }

    pub fn unscale_i128(&self, v: i128) -> Rational {
        Rational::new(BigInt::from(v), self.scale.clone())
    }
}
