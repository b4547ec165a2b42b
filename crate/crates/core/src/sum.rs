//! Compensated summation for the checksum paths.
//!
//! Neumaier's variant of Kahan summation: the running error term keeps the
//! low-order bits that a plain `+=` would drop, so the two sides of a
//! checksum identity differ only by the rounding already present in the
//! layer outputs.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    err: T,
}

impl<T: Scalar> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        CompensatedSum {
            sum: T::ZERO,
            err: T::ZERO,
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.err += (self.sum - t) + x;
        } else {
            self.err += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.err
    }
}

/// Compensated sum of a slice in ascending order.
pub fn compensated_sum<T: Scalar>(v: &[T]) -> T {
    let mut s = CompensatedSum::new();
    for &x in v {
        s.add(x);
    }
    s.value()
}
