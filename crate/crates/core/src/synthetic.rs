//! Toy generator/embedder whose identity is the sign pattern of the latent.
//!
//! The surrogate image of `z` is `[A·sign(z) ; B·z]`, laid out as a
//! `(1, 1, m + k)` tensor and mapped affinely into `[0, 1]`. The embedder
//! inverts the map on the first `m` entries. Identity is therefore invariant
//! to positive scaling, to replacing `z` by `sign(z)`, and to any perturbation
//! that flips no sign.
//!
//! `A` (m×D) and `B` (k×D) are filled row-major, `A` first, from SplitMix64
//! seeded directly with `seed`: each entry is `(2u - 1) / sqrt(D)` where
//! `u = (next_u64 >> 11) · 2⁻⁵³`. Any ecosystem can regenerate them bit-exactly
//! in f64.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::backend::{distance, Backend, BackendInfo, Embedding, ImageTensor};
use crate::error::{Error, Result};
use crate::latent::{check_dim, sample_box, LatentVector, SamplingBox};
use crate::rng::SeededRng;
use crate::scalar::{sign, Scalar};

pub const BACKEND_NAME: &str = "synthetic";

/// Latent magnitude the attribute block's `[0, 1]` map is sized for; larger
/// attribute activations saturate in the image (identity is unaffected).
pub const ATTRIBUTE_LATENT_BOUND: f64 = 4.0;

/// JSON form: `{"type":"synthetic","D":64,"m":32,"k":16,"seed":42}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(rename = "D")]
    pub latent_dim: usize,
    #[serde(rename = "m")]
    pub embedding_dim: usize,
    #[serde(rename = "k")]
    pub attribute_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            embedding_dim: 32,
            attribute_dim: 16,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    /// Full-width latents (D = 200).
    pub fn full_scale(seed: u64) -> Self {
        Self {
            latent_dim: 200,
            seed,
            ..Self::default()
        }
    }
}

/// Affine map `pixel = offset + scale · value`, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Squash {
    pub offset: f64,
    pub scale: f64,
}

impl Squash {
    fn for_range(radius: f64) -> Self {
        let r = radius.max(f64::MIN_POSITIVE);
        Self {
            offset: 0.5,
            scale: 0.5 / r,
        }
    }

    fn apply<T: Scalar>(&self, v: T) -> T {
        (T::lit(self.offset) + T::lit(self.scale) * v)
            .max(T::zero())
            .min(T::one())
    }

    fn invert<T: Scalar>(&self, p: T) -> T {
        (p - T::lit(self.offset)) / T::lit(self.scale)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticModel<T> {
    spec: SyntheticSpec,
    identity: Vec<T>,
    attribute: Vec<T>,
    identity_squash: Squash,
    attribute_squash: Squash,
    info: BackendInfo,
}

/// Raw f64 matrices `(A, B)` in row-major order.
pub fn mixing_matrices(spec: &SyntheticSpec) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let norm = (spec.latent_dim as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                (2.0 * u - 1.0) / norm
            })
            .collect()
    };
    let a = draw(spec.embedding_dim * spec.latent_dim);
    let b = draw(spec.attribute_dim * spec.latent_dim);
    (a, b)
}

fn max_row_l1(m: &[f64], cols: usize) -> f64 {
    m.chunks(cols)
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl<T: Scalar> SyntheticModel<T> {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        if spec.latent_dim == 0 || spec.embedding_dim == 0 {
            return Err(Error::config("synthetic model needs D >= 1 and m >= 1"));
        }
        let (a, b) = mixing_matrices(&spec);
        let d = spec.latent_dim;
        let identity_squash = Squash::for_range(max_row_l1(&a, d));
        let attribute_squash = Squash::for_range(if b.is_empty() {
            1.0
        } else {
            max_row_l1(&b, d) * ATTRIBUTE_LATENT_BOUND
        });
        let info = BackendInfo {
            latent_dim: d,
            embedding_dim: spec.embedding_dim,
            image_shape: [1, 1, spec.embedding_dim + spec.attribute_dim],
            backend_name: BACKEND_NAME.to_string(),
            supports_fused_generate_embed: true,
            concurrent: true,
        };
        Ok(Self {
            spec,
            identity: a.into_iter().map(T::lit).collect(),
            attribute: b.into_iter().map(T::lit).collect(),
            identity_squash,
            attribute_squash,
            info,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    /// Maps for the identity and attribute blocks of the image.
    pub fn squash_maps(&self) -> (Squash, Squash) {
        (self.identity_squash, self.attribute_squash)
    }

    pub fn identity_matrix(&self) -> &[T] {
        &self.identity
    }

    pub fn attribute_matrix(&self) -> &[T] {
        &self.attribute
    }

    fn matvec(m: &[T], cols: usize, x: impl Fn(usize) -> T) -> Vec<T> {
        if m.is_empty() {
            return Vec::new();
        }
        m.chunks(cols)
            .map(|row| row.iter().enumerate().map(|(j, &a)| a * x(j)).sum())
            .collect()
    }

    /// `A·sign(z)`, before the pixel map.
    pub fn identity_block(&self, z: &LatentVector<T>) -> Result<Vec<T>> {
        check_dim("latent", self.spec.latent_dim, z.dim())?;
        Ok(Self::matvec(&self.identity, self.spec.latent_dim, |j| {
            sign(z[j])
        }))
    }

    /// `B·z`, before the pixel map.
    pub fn attribute_block(&self, z: &LatentVector<T>) -> Result<Vec<T>> {
        check_dim("latent", self.spec.latent_dim, z.dim())?;
        Ok(Self::matvec(&self.attribute, self.spec.latent_dim, |j| {
            z[j]
        }))
    }

    fn embed_identity_pixels(&self, pixels: &[T]) -> Result<Embedding<T>> {
        Embedding::new(
            pixels[..self.spec.embedding_dim]
                .iter()
                .map(|&p| self.identity_squash.invert(p))
                .collect(),
        )
    }

    fn squashed_identity(&self, z: &LatentVector<T>) -> Result<Vec<T>> {
        Ok(self
            .identity_block(z)?
            .into_iter()
            .map(|v| self.identity_squash.apply(v))
            .collect())
    }
}

impl<T: Scalar> Backend<T> for SyntheticModel<T> {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn generate(&self, z: &LatentVector<T>) -> Result<ImageTensor<T>> {
        let mut pixels = self.squashed_identity(z)?;
        pixels.extend(
            self.attribute_block(z)?
                .into_iter()
                .map(|v| self.attribute_squash.apply(v)),
        );
        ImageTensor::new(self.info.image_shape, pixels)
    }

    fn embed(&self, x: &ImageTensor<T>) -> Result<Embedding<T>> {
        if x.shape() != self.info.image_shape {
            return Err(Error::config(format!(
                "image shape {:?} does not match backend shape {:?}",
                x.shape(),
                self.info.image_shape
            )));
        }
        self.embed_identity_pixels(x.values())
    }

    // Skips the attribute block, which the embedder discards anyway.
    fn generate_embed(&self, zs: &[LatentVector<T>]) -> Result<Vec<Embedding<T>>> {
        zs.iter()
            .enumerate()
            .map(|(i, z)| {
                self.squashed_identity(z)
                    .and_then(|p| self.embed_identity_pixels(&p))
                    .map_err(|e| e.at_index(i))
            })
            .collect()
    }
}

/// Latents with every coordinate magnitude in `[margin, 1]` and random signs.
pub fn margin_latents<T: Scalar>(
    dim: usize,
    n: usize,
    margin: T,
    rng: &mut SeededRng,
) -> Result<Vec<LatentVector<T>>> {
    if !(margin >= T::zero() && margin <= T::one()) {
        return Err(Error::config(format!("margin {margin} outside [0, 1]")));
    }
    let bx = SamplingBox::new(LatentVector::splat(dim, margin), LatentVector::ones(dim))?;
    let mags = sample_box(&bx, n, rng)?;
    mags.into_iter()
        .map(|m| {
            LatentVector::new(
                m.iter()
                    .map(|&v| if rng.next_u64() & 1 == 1 { -v } else { v })
                    .collect(),
            )
        })
        .collect()
}

/// All `2^dim` vectors in `{-1, +1}^dim`, in binary counting order
/// (bit `j` set means coordinate `j` is `+1`).
pub fn sign_patterns<T: Scalar>(dim: usize) -> Result<Vec<LatentVector<T>>> {
    if dim == 0 || dim > 20 {
        return Err(Error::config(format!(
            "sign pattern enumeration supports 1..=20 dimensions, got {dim}"
        )));
    }
    Ok((0u32..1 << dim)
        .map(|bits| {
            LatentVector::new(
                (0..dim)
                    .map(|j| {
                        if bits >> j & 1 == 1 {
                            T::one()
                        } else {
                            -T::one()
                        }
                    })
                    .collect(),
            )
            .unwrap()
        })
        .collect())
}

/// Whether distinct sign patterns map to distinct embeddings.
pub fn identity_map_is_injective<T: Scalar>(model: &SyntheticModel<T>) -> Result<bool> {
    let patterns = sign_patterns::<T>(model.spec.latent_dim)?;
    let embs = model.generate_embed(&patterns)?;
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            if distance(&embs[i], &embs[j])? == T::zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Nearest-rank percentile of all pairwise identity distances among `n`
/// latents drawn uniformly from `[-1, 1]^D`.
pub fn pairwise_distance_percentile<T: Scalar>(
    model: &SyntheticModel<T>,
    n: usize,
    percentile: f64,
    seed: u64,
) -> Result<T> {
    if n < 2 || !(0.0..=1.0).contains(&percentile) {
        return Err(Error::config("need n >= 2 and percentile in [0, 1]"));
    }
    let zs = sample_box(
        &SamplingBox::symmetric_unit(model.spec.latent_dim),
        n,
        &mut SeededRng::new(seed),
    )?;
    let embs = model.generate_embed(&zs)?;
    let mut ds = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            ds.push(distance(&embs[i], &embs[j])?);
        }
    }
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((percentile * ds.len() as f64).ceil() as usize).max(1);
    Ok(ds[rank - 1])
}
