//! Generator/embedder contracts and the identity-distance oracle.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{check_dim, LatentVector};
use crate::scalar::Scalar;

/// Generator output: channel-major `(c, h, w)` intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T> {
    shape: [usize; 3],
    values: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(shape: [usize; 3], values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n == 0 {
            return Err(Error::config(format!("image shape {shape:?} is empty")));
        }
        check_dim("image values", n, values.len())?;
        if let Some(i) = values
            .iter()
            .position(|v| !(v.is_finite() && *v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::config(format!(
                "image value {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("embedding must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "embedding has non-finite value at index {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn cast<U: Scalar>(&self) -> Embedding<U> {
        Embedding {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for Embedding<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T> From<Embedding<T>> for Vec<T> {
    fn from(e: Embedding<T>) -> Vec<T> {
        e.values
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub latent_dim: usize,
    pub embedding_dim: usize,
    pub image_shape: [usize; 3],
    pub backend_name: String,
    pub supports_fused_generate_embed: bool,
    /// Whether calls may be issued from several threads at once.
    pub concurrent: bool,
}

impl BackendInfo {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.embedding_dim == 0 {
            return Err(Error::config("backend dimensions must be at least 1"));
        }
        if self.image_shape.contains(&0) {
            return Err(Error::config(format!(
                "backend image shape {:?} has a zero extent",
                self.image_shape
            )));
        }
        Ok(())
    }
}

/// A deterministic generator/embedder pair.
///
/// Implementations must return identical outputs for identical inputs.
pub trait Backend<T: Scalar>: Send + Sync {
    fn info(&self) -> &BackendInfo;

    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>>;

    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>>;

    /// `embed(generate(z))` for each latent, in input order.
    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        zs.iter()
            .enumerate()
            .map(|(i, z)| {
                self.generate(z)
                    .and_then(|x| self.embed(&x))
                    .map_err(|e| e.at_index(i))
            })
            .collect()
    }
}

impl<T: Scalar, B: Backend<T> + ?Sized> Backend<T> for &B {
    fn info(&self) -> &BackendInfo {
        (**self).info()
    }
    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>> {
        (**self).generate(z)
    }
    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>> {
        (**self).embed(x)
    }
    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        (**self).generate_embed(zs)
    }
}

impl<T: Scalar, B: Backend<T> + ?Sized> Backend<T> for Box<B> {
    fn info(&self) -> &BackendInfo {
        (**self).info()
    }
    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>> {
        (**self).generate(z)
    }
    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>> {
        (**self).embed(x)
    }
    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        (**self).generate_embed(zs)
    }
}

impl<T: Scalar, B: Backend<T> + ?Sized> Backend<T> for Arc<B> {
    fn info(&self) -> &BackendInfo {
        (**self).info()
    }
    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>> {
        (**self).generate(z)
    }
    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>> {
        (**self).embed(x)
    }
    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        (**self).generate_embed(zs)
    }
}

/// Squared L2 distance.
pub fn distance<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T> {
    check_dim("embedding", a.dim(), b.dim())?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Min,
}

/// Reference embeddings of one identity.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetIdentity<T> {
    embeddings: Vec<Embedding<T>>,
    reduction: Reduction,
}

impl<T: Scalar> TargetIdentity<T> {
    pub fn new(embeddings: Vec<Embedding<T>>) -> Result<Self> {
        let first = embeddings
            .first()
            .ok_or_else(|| Error::config("target identity needs at least one embedding"))?;
        for e in &embeddings {
            check_dim("target embeddings", first.dim(), e.dim())?;
        }
        Ok(Self {
            embeddings,
            reduction: Reduction::Mean,
        })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn embeddings(&self) -> &[Embedding<T>] {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].dim()
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }
}

/// Distance from `e` to the target set, reduced by the target's reduction
/// (arithmetic mean unless configured otherwise).
pub fn identity_score<T: Scalar>(e: &Embedding<T>, target: &TargetIdentity<T>) -> Result<T> {
    let ds = target
        .embeddings
        .iter()
        .map(|t| distance(e, t))
        .collect::<Result<Vec<T>>>()?;
    Ok(match target.reduction {
        Reduction::Mean => ds.iter().copied().sum::<T>() / T::from_usize(ds.len()).unwrap(),
        Reduction::Min => ds.iter().copied().fold(T::infinity(), T::min),
    })
}

const PAR_CHUNK: usize = 64;

/// Identity scores for a batch of latents, in input order.
///
/// Uses the fused backend call when available. Concurrent backends are
/// driven from the rayon pool; results are assembled by position so the
/// output never depends on scheduling.
pub fn score_batch<T: Scalar, B: Backend<T> + ?Sized>(
    zs: &[LatentVector<T>],
    target: &TargetIdentity<T>,
    backend: &B,
) -> Result<Vec<T>> {
    let info = backend.info();
    for z in zs {
        check_dim("latent", info.latent_dim, z.dim())?;
    }
    check_dim("target embedding", info.embedding_dim, target.dim())?;

    let embed_chunk = |offset: usize, chunk: &[LatentVector<T>]| -> Result<Vec<Embedding<T>>> {
        if info.supports_fused_generate_embed {
            backend.generate_embed(chunk).map_err(|e| match e {
                Error::Backend {
                    index: Some(i),
                    message,
                } => Error::Backend {
                    index: Some(offset + i),
                    message,
                },
                other => other.at_index(offset),
            })
        } else {
            chunk
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    backend
                        .generate(z)
                        .and_then(|x| backend.embed(&x))
                        .map_err(|e| e.at_index(offset + i))
                })
                .collect()
        }
    };

    let embeddings: Vec<Embedding<T>> = if info.concurrent && zs.len() > PAR_CHUNK {
        zs.par_chunks(PAR_CHUNK)
            .enumerate()
            .map(|(k, c)| embed_chunk(k * PAR_CHUNK, c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect()
    } else {
        embed_chunk(0, zs)?
    };
    check_dim("backend batch output", zs.len(), embeddings.len())?;
    embeddings
        .iter()
        .map(|e| identity_score(e, target))
        .collect()
}

/// Wraps a backend and counts the latents it is asked to evaluate.
pub struct CountingBackend<B> {
    inner: B,
    evaluations: AtomicU64,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<T: Scalar, B: Backend<T>> Backend<T> for CountingBackend<B> {
    fn info(&self) -> &BackendInfo {
        self.inner.info()
    }

    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>> {
        self.evaluations.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(z)
    }

    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>> {
        self.inner.embed(x)
    }

    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        self.evaluations
            .fetch_add(zs.len() as u64, Ordering::SeqCst);
        self.inner.generate_embed(zs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding<f64> {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn distance_hand_values() {
        let e = emb(&[0.3, -1.2, 4.0]);
        assert_eq!(distance(&e, &e).unwrap(), 0.0);
        assert_eq!(distance(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 2.0);
        assert_eq!(
            distance(&emb(&[0.5, 0.5, 0.0]), &emb(&[0.0, 0.0, 0.0])).unwrap(),
            0.5
        );
        assert!(matches!(
            distance(&emb(&[1.0]), &emb(&[1.0, 2.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn identity_score_means() {
        let e = emb(&[0.0, 0.0]);
        let t = emb(&[1.0, 1.0]);
        let single = TargetIdentity::new(vec![t.clone()]).unwrap();
        assert_eq!(identity_score(&e, &single).unwrap(), 2.0);
        let dup = TargetIdentity::new(vec![t.clone(), t]).unwrap();
        assert_eq!(identity_score(&e, &dup).unwrap(), 2.0);

        // distances 0.2, 0.6, 0.4 from the origin
        let targets = [0.2f64, 0.6, 0.4]
            .iter()
            .map(|d| emb(&[d.sqrt(), 0.0]))
            .collect();
        let t = TargetIdentity::new(targets).unwrap();
        assert!((identity_score(&e, &t).unwrap() - 0.4).abs() < 1e-12);
        let t = t.with_reduction(Reduction::Min);
        assert!((identity_score(&e, &t).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_config_error() {
        assert!(matches!(
            TargetIdentity::<f64>::new(vec![]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn image_tensor_validation() {
        assert!(ImageTensor::new([1, 1, 2], vec![0.0f64, 1.0]).is_ok());
        assert!(ImageTensor::new([1, 1, 2], vec![0.0f64]).is_err());
        assert!(ImageTensor::new([1, 1, 1], vec![1.5f64]).is_err());
        assert!(ImageTensor::new([0, 1, 1], Vec::<f64>::new()).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_a_squared_metric(
            pair in (1usize..16).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let (a, b) = (emb(&pair.0), emb(&pair.1));
            let ab = distance(&a, &b).unwrap();
            let ba = distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(distance(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
            let naive: f64 = pair.0.iter().zip(&pair.1).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!((ab - naive).abs() <= 1e-9 * naive.max(1e-300));
        }

        #[test]
        fn score_is_permutation_invariant(
            ts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..6),
            e in prop::collection::vec(-3.0f64..3.0, 3),
            rot in 0usize..6,
        ) {
            let e = emb(&e);
            let targets: Vec<_> = ts.iter().map(|t| emb(t)).collect();
            let mut rotated = targets.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            let a = identity_score(&e, &TargetIdentity::new(targets).unwrap()).unwrap();
            let b = identity_score(&e, &TargetIdentity::new(rotated).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
