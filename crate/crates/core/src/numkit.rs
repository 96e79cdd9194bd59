//! Dense vectors, seeded random streams and a central-difference gradient.
//!
//! Every reduction in this module sums left to right so that a full run is
//! bit-reproducible regardless of how client work is scheduled.

use std::ops::{Index, IndexMut};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A `d`-dimensional real vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        DenseVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.len(),
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &DenseVector) -> Result<()> {
        other.check_dim(self.len())
    }

    pub fn add(&self, other: &DenseVector) -> Result<DenseVector> {
        self.check_same(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        self.check_same(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, alpha: f64) -> DenseVector {
        DenseVector(self.0.iter().map(|v| alpha * v).collect())
    }

    /// `alpha * x + y`.
    pub fn axpy(alpha: f64, x: &DenseVector, y: &DenseVector) -> Result<DenseVector> {
        x.check_same(y)?;
        Ok(x.zip_map(y, |a, b| alpha * a + b))
    }

    /// In-place `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &DenseVector) -> Result<()> {
        self.check_same(other)?;
        for (s, o) in self.0.iter_mut().zip(&other.0) {
            *s += alpha * o;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &DenseVector) -> Result<()> {
        self.check_same(other)?;
        for (s, o) in self.0.iter_mut().zip(&other.0) {
            *s += o;
        }
        Ok(())
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        self.check_same(other)?;
        Ok(dot_slices(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot_slices(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc + v.abs())
    }

    pub fn dist_sq(&self, other: &DenseVector) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b)))
    }

    pub fn dist(&self, other: &DenseVector) -> Result<f64> {
        Ok(self.dist_sq(other)?.sqrt())
    }

    /// Number of nonzero entries.
    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    /// Arithmetic mean of equally sized vectors, summed in slice order.
    pub fn mean(vectors: &[DenseVector]) -> Result<DenseVector> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("mean of an empty set of vectors"))?;
        let mut acc = DenseVector::zeros(first.len());
        for v in vectors {
            acc.add_assign(v)?;
        }
        let inv = 1.0 / vectors.len() as f64;
        Ok(acc.scale(inv))
    }

    fn zip_map(&self, other: &DenseVector, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        DenseVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        )
    }
}

/// Left-to-right dot product of two equal-length slices.
pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

impl From<Vec<f64>> for DenseVector {
    fn from(values: Vec<f64>) -> Self {
        DenseVector(values)
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Stream identifiers used by the simulator. Client `i` draws gradient noise
/// from stream `CLIENT_NOISE + i` and compressor randomness from
/// `CLIENT_COMPRESSOR + i`.
pub mod streams {
    pub const CLIENT_NOISE: u64 = 0;
    pub const CLIENT_COMPRESSOR: u64 = 1 << 32;
    pub const SERVER_RESERVOIR: u64 = 1 << 40;
    pub const DATA: u64 = 1 << 41;
    pub const PARTITION: u64 = 1 << 42;
    pub const SMOOTHNESS_PROBES: u64 = 1 << 43;
    pub const INITIAL_POINT: u64 = 1 << 44;
    pub const CHECKS: u64 = 1 << 45;
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so streams are derived without any shared state.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

pub fn derive_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    inner.set_stream(stream_id);
    RngStream {
        seed,
        stream_id,
        inner,
    }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `true` with probability `p`; `p >= 1` is always `true`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal_vector(&mut self, dim: usize, std_dev: f64) -> DenseVector {
        DenseVector((0..dim).map(|_| std_dev * self.standard_normal()).collect())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        rand::seq::SliceRandom::shuffle(items, &mut self.inner);
    }

    /// Uniform point on the sphere of the given radius; the origin when
    /// `radius == 0`.
    pub fn sphere_point(&mut self, dim: usize, radius: f64) -> DenseVector {
        if radius == 0.0 {
            return DenseVector::zeros(dim);
        }
        loop {
            let v = self.normal_vector(dim, 1.0);
            let norm = v.norm();
            if norm > 0.0 {
                return v.scale(radius / norm);
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Central-difference gradient `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, x: &DenseVector, h: f64) -> Result<DenseVector>
where
    F: Fn(&DenseVector) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let fp = f(&probe);
        probe[j] = orig - h;
        let fm = f(&probe);
        probe[j] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective evaluation at coordinate {j} returned {fp} / {fm}"
            )));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(DenseVector(grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_vec(x.to_vec())
    }

    #[test]
    fn basic_arithmetic() {
        assert_eq!(v(&[1.0, 2.0]).dot(&v(&[3.0, 4.0])).unwrap(), 11.0);
        assert_eq!(v(&[3.0, 4.0]).norm_sq(), 25.0);
        let r = DenseVector::axpy(2.0, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert_eq!(r, v(&[2.0, 1.0]));
        assert_eq!(v(&[1.0, 2.0]).sub(&v(&[0.5, 0.5])).unwrap(), v(&[0.5, 1.5]));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = v(&[1.0, 2.0]);
        let b = v(&[1.0]);
        assert!(matches!(
            a.dot(&b),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(a.add(&b).is_err());
        assert!(DenseVector::axpy(1.0, &a, &b).is_err());
    }

    #[test]
    fn finite_differences_on_quadratic_and_constant() {
        let x = v(&[1.0, 2.0]);
        let g = finite_diff_gradient(|p| 0.5 * p.norm_sq(), &x, 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
        let g = finite_diff_gradient(|_| 3.0, &x, 1e-5).unwrap();
        assert_eq!(g, DenseVector::zeros(2));
        assert!(finite_diff_gradient(|_| 0.0, &x, 0.0).is_err());
        assert!(matches!(
            finite_diff_gradient(|_| f64::NAN, &x, 1e-3),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = derive_stream(42, 0);
        let mut b = derive_stream(42, 0);
        let xs: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        let mut c = derive_stream(42, 1);
        assert_ne!(xs[0], c.next_u64());
    }

    #[test]
    fn bernoulli_one_is_certain() {
        let mut r = derive_stream(3, 9);
        assert!((0..1000).all(|_| r.bernoulli(1.0)));
        assert!((0..1000).all(|_| !r.bernoulli(0.0)));
    }
}
