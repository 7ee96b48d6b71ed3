//! Latent vectors and the axis-aligned boxes candidates are drawn from.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Generator input `z`. Always finite; never clipped to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LatentVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("latent vector must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "latent vector has non-finite value at coordinate {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn splat(dim: usize, v: T) -> Self {
        Self {
            values: vec![v; dim],
        }
    }

    pub fn ones(dim: usize) -> Self {
        Self::splat(dim, T::one())
    }

    pub fn zeros(dim: usize) -> Self {
        Self::splat(dim, T::zero())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.values.iter()
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// Coordinate-wise sign with `sign(0) = 0`.
    pub fn sign(&self) -> Self {
        self.map(crate::scalar::sign)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        check_dim("latent vector", self.dim(), other.dim())?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn min_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::infinity(), |acc, v| acc.min(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> LatentVector<U> {
        LatentVector {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T> Index<usize> for LatentVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for LatentVector<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T> From<LatentVector<T>> for Vec<T> {
    fn from(v: LatentVector<T>) -> Vec<T> {
        v.values
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::dim(what, expected, found));
    }
    Ok(())
}

/// Per-coordinate `[lower, upper]` interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SamplingBox<T> {
    lower: LatentVector<T>,
    upper: LatentVector<T>,
}

impl<T: Scalar> SamplingBox<T> {
    pub fn new(lower: LatentVector<T>, upper: LatentVector<T>) -> Result<Self> {
        check_dim("sampling box", lower.dim(), upper.dim())?;
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::config(format!(
                "sampling box has lower > upper at coordinate {i} ({} > {})",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[-I, I]`.
    pub fn symmetric_unit(dim: usize) -> Self {
        Self {
            lower: LatentVector::splat(dim, -T::one()),
            upper: LatentVector::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn lower(&self) -> &LatentVector<T> {
        &self.lower
    }

    pub fn upper(&self) -> &LatentVector<T> {
        &self.upper
    }

    pub fn contains(&self, z: &LatentVector<T>) -> bool {
        z.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= z[i] && z[i] <= self.upper[i])
    }
}

/// Draws `n` vectors uniformly from `bx`, coordinates i.i.d.
///
/// Draw order is vector-major, coordinate-minor; the rng advances by exactly
/// `n * dim` words.
pub fn sample_box<T: Scalar>(
    bx: &SamplingBox<T>,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Vec<LatentVector<T>>> {
    if n == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    let (lo, hi) = (bx.lower.as_slice(), bx.upper.as_slice());
    let out = (0..n)
        .map(|_| {
            let values = lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| {
                    let u: T = rng.unit();
                    // rounding in (h - l) * u can overshoot by an ulp
                    (l + (h - l) * u).max(l).min(h)
                })
                .collect();
            LatentVector { values }
        })
        .collect();
    Ok(out)
}

fn check_scale<T: Scalar>(scale: T) -> Result<()> {
    if !(scale >= T::zero() && scale <= T::one()) {
        return Err(Error::config(format!("scale {scale} outside [0, 1]")));
    }
    Ok(())
}

/// `[base_lower + scale·anchor, base_upper + scale·anchor]`.
pub fn shift_box<T: Scalar>(
    base_lower: &LatentVector<T>,
    base_upper: &LatentVector<T>,
    anchor: &LatentVector<T>,
    scale: T,
) -> Result<SamplingBox<T>> {
    check_dim("shift box base", base_lower.dim(), base_upper.dim())?;
    check_dim("shift box anchor", base_lower.dim(), anchor.dim())?;
    check_scale(scale)?;
    let lower = base_lower.zip_with(anchor, |b, a| b + scale * a)?;
    let upper = base_upper.zip_with(anchor, |b, a| b + scale * a)?;
    SamplingBox::new(lower, upper)
}

/// `[anchor_neg + scale·unit, anchor_pos + scale·unit]`, endpoints swapped on
/// coordinates where the raw interval is inverted.
pub fn noise_box<T: Scalar>(
    anchor_neg: &LatentVector<T>,
    anchor_pos: &LatentVector<T>,
    unit: &LatentVector<T>,
    scale: T,
) -> Result<SamplingBox<T>> {
    check_dim("noise box anchors", anchor_neg.dim(), anchor_pos.dim())?;
    check_dim("noise box unit", anchor_neg.dim(), unit.dim())?;
    check_scale(scale)?;
    let raw_lo = anchor_neg.zip_with(unit, |a, u| a + scale * u)?;
    let raw_hi = anchor_pos.zip_with(unit, |a, u| a + scale * u)?;
    let lower = raw_lo.zip_with(&raw_hi, |l, h| l.min(h))?;
    let upper = raw_lo.zip_with(&raw_hi, |l, h| l.max(h))?;
    Ok(SamplingBox { lower, upper })
}
