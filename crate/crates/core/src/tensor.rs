//! Dense row-major tensors and the reductions the checksums are built on.
//!
//! All reductions run in ascending index order on a single thread so that two
//! evaluations of the same sum are bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{hash2, unit_f64, Seed};
use crate::scalar::Scalar;

/// Distribution for [`random_tensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dist {
    /// Uniform on `[-1, 1)`.
    Uniform,
    /// Standard normal.
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::shape(&[], shape));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape {
                expected: shape.to_vec(),
                found: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, T::ZERO)
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(f).collect(),
        })
    }

    /// Builds a tensor from a slice of `f64`, converting to `T`.
    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::from_f64(v)).collect())
    }

    /// Wraps data whose length is already known to match.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(&self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(&self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// Largest absolute element.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::ZERO, |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Index of the largest element; the first one wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum along `axis`, dropping that dimension.
    pub fn channel_sum(&self, axis: usize) -> Result<Self> {
        channel_sum(self, axis)
    }
}

/// Deterministic random tensor. Element `i` depends only on `(seed, i, dist)`.
pub fn random_tensor<T: Scalar>(shape: &[usize], seed: Seed, dist: Dist) -> Result<Tensor<T>> {
    Tensor::from_fn(shape, |i| T::from_f64(sample(seed, i as u64, dist)))
}

pub(crate) fn sample(seed: Seed, index: u64, dist: Dist) -> f64 {
    match dist {
        Dist::Uniform => 2.0 * unit_f64(hash2(seed.0, index)) - 1.0,
        Dist::Normal => {
            let u1 = unit_f64(hash2(seed.0, index.wrapping_mul(2)));
            let u2 = unit_f64(hash2(seed.0, index.wrapping_mul(2).wrapping_add(1)));
            let r = libm::sqrt(-2.0 * libm::log(1.0 - u1));
            r * libm::cos(core::f64::consts::TAU * u2)
        }
    }
}

/// Sums `t` over `axis` in ascending index order.
pub fn channel_sum<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let rank = t.rank();
    if axis >= rank {
        return Err(Error::InvalidAxis { axis, rank });
    }
    let outer: usize = t.shape[..axis].iter().product();
    let n = t.shape[axis];
    let inner: usize = t.shape[axis + 1..].iter().product();

    let mut out = vec![T::ZERO; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for a in 0..n {
            let src = &t.data[(o * n + a) * inner..(o * n + a + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut shape: Vec<usize> = t.shape.clone();
    shape.remove(axis);
    if shape.is_empty() {
        shape.push(1);
    }
    Ok(Tensor::from_parts(shape, out))
}

/// `max |a_i - b_i|`, or `+inf` when any compared pair involves a NaN.
pub fn max_abs_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    if a.shape != b.shape {
        return Err(Error::shape(&a.shape, &b.shape));
    }
    let inf = T::from_f64(f64::INFINITY);
    let mut worst = T::ZERO;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        if x.is_nan() || y.is_nan() {
            return Ok(inf);
        }
        let d = (x - y).abs();
        // inf - inf is NaN and must also count as a mismatch
        if d.is_nan() {
            return Ok(inf);
        }
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_zero_dims() {
        assert!(random_tensor::<f64>(&[], Seed(1), Dist::Uniform).is_err());
        assert!(random_tensor::<f64>(&[2, 0], Seed(1), Dist::Uniform).is_err());
        assert!(Tensor::<f64>::new(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn random_is_deterministic() {
        let a: Tensor = random_tensor(&[2, 2], Seed(7), Dist::Uniform).unwrap();
        let b: Tensor = random_tensor(&[2, 2], Seed(7), Dist::Uniform).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn random_is_seed_sensitive() {
        let a: Tensor = random_tensor(&[1], Seed(0), Dist::Uniform).unwrap();
        let b: Tensor = random_tensor(&[1], Seed(1), Dist::Uniform).unwrap();
        assert_ne!(a.data()[0], b.data()[0]);
    }

    #[test]
    fn normal_sample_mean() {
        // 27 samples of N(0,1): 3 sigma of the mean is 3/sqrt(27) ~ 0.577
        let t: Tensor = random_tensor(&[3, 3, 3], Seed(42), Dist::Normal).unwrap();
        let mean = t.data().iter().sum::<f64>() / 27.0;
        assert!(mean.abs() < 0.6, "{mean}");
    }

    #[test]
    fn channel_sum_examples() {
        let ones = Tensor::<f64>::filled(&[2, 2, 2], 1.0).unwrap();
        let s = channel_sum(&ones, 0).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert!(s.data().iter().all(|&v| v == 2.0));

        let t = Tensor::<f64>::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = channel_sum(&t, 1).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.data(), &[3.0, 7.0]);

        let s = channel_sum(&t, 0).unwrap();
        assert_eq!(s.data(), &[4.0, 6.0]);
    }

    #[test]
    fn channel_sum_single_channel_is_squeeze() {
        let t: Tensor = random_tensor(&[1, 3, 4], Seed(3), Dist::Normal).unwrap();
        let s = channel_sum(&t, 0).unwrap();
        assert_eq!(s.shape(), &[3, 4]);
        assert_eq!(s.data(), t.data());
    }

    #[test]
    fn channel_sum_rejects_bad_axis() {
        let t = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        assert_eq!(
            channel_sum(&t, 2),
            Err(Error::InvalidAxis { axis: 2, rank: 2 })
        );
    }

    #[test]
    fn max_abs_diff_examples() {
        let a = Tensor::<f64>::new(&[2], vec![1.0, 2.0]).unwrap();
        assert_eq!(max_abs_diff(&a, &a).unwrap(), 0.0);
        let b = Tensor::<f64>::new(&[2], vec![1.0, 2.0 + 1e-12]).unwrap();
        let d = max_abs_diff(&a, &b).unwrap();
        // 2 + 1e-12 is not exactly representable; the stored gap is within one ulp of 2
        assert!((d - 1e-12).abs() <= f64::EPSILON * 2.0, "{d}");

        let n = Tensor::<f64>::new(&[2], vec![1.0, f64::NAN]).unwrap();
        assert_eq!(max_abs_diff(&a, &n).unwrap(), f64::INFINITY);

        let c = Tensor::<f64>::zeros(&[3]).unwrap();
        assert!(max_abs_diff(&a, &c).is_err());
    }

    #[test]
    fn bit_40_flip_exceeds_reference_criterion() {
        let a: Tensor = random_tensor(&[16], Seed(11), Dist::Uniform).unwrap();
        let mut data = a.data().to_vec();
        let idx = 5;
        let v = data[idx];
        data[idx] = v.flip_bit(40);
        // the flip moves the value by 2^(40-52) times its binade
        let binade = libm::exp2(libm::floor(libm::log2(v.abs())));
        let expected = binade * libm::exp2(40.0 - 52.0);
        let b = Tensor::new(&[16], data).unwrap();
        let d = max_abs_diff(&a, &b).unwrap();
        assert_eq!(d, expected);
        assert!(d > 1e-13);
    }

    #[test]
    fn f32_elements() {
        let t: Tensor<f32> = random_tensor(&[4, 4], Seed(5), Dist::Uniform).unwrap();
        let s = channel_sum(&t, 0).unwrap();
        assert_eq!(s.len(), 4);
    }
}
