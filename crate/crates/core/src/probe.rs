//! Diagnostics for the three latent-space invariances the search relies on:
//! small-noise robustness, sign invariance and scale invariance.
//!
//! Each probe reports the largest identity distance it observed. On the
//! synthetic backend these are exactly zero by construction; on a real
//! backend they measure how far the model departs from the ideal.

use serde::{Deserialize, Serialize};

use crate::backend::{distance, Backend};
use crate::error::{Error, Result};
use crate::latent::{sample_box, LatentVector, SamplingBox};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "probe", rename_all = "lowercase")]
pub enum Probe {
    /// `z` versus `z + u`, `u` uniform in `[-amplitude, amplitude]^D`.
    Noise {
        amplitude: f64,
        trials: usize,
        seed: u64,
    },
    /// `z` versus `sign(z)`.
    Sign,
    /// `z` versus `factor · z`.
    Scale { factor: f64 },
}

impl Probe {
    pub fn name(&self) -> &'static str {
        match self {
            Probe::Noise { .. } => "noise",
            Probe::Sign => "sign",
            Probe::Scale { .. } => "scale",
        }
    }
}

pub fn property_probe<T: Scalar, B: Backend<T> + ?Sized>(
    backend: &B,
    z: &LatentVector<T>,
    probe: Probe,
) -> Result<T> {
    let variants = match probe {
        Probe::Noise {
            amplitude,
            trials,
            seed,
        } => {
            if trials == 0 || !(amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(Error::config(
                    "noise probe needs trials >= 1 and a finite amplitude >= 0",
                ));
            }
            let amp = T::lit(amplitude);
            let bx = SamplingBox::new(
                LatentVector::splat(z.dim(), -amp),
                LatentVector::splat(z.dim(), amp),
            )?;
            sample_box(&bx, trials, &mut SeededRng::new(seed))?
                .iter()
                .map(|u| z.add(u))
                .collect::<Result<Vec<_>>>()?
        }
        Probe::Sign => vec![z.sign()],
        Probe::Scale { factor } => {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::config("scale probe needs a positive factor"));
            }
            vec![z.scaled(T::lit(factor))]
        }
    };
    let mut batch = Vec::with_capacity(variants.len() + 1);
    batch.push(z.clone());
    batch.extend(variants);
    let embs = backend.generate_embed(&batch)?;
    let (reference, rest) = embs
        .split_first()
        .ok_or_else(|| Error::backend("backend returned no embeddings"))?;
    rest.iter()
        .try_fold(T::zero(), |acc, e| Ok(acc.max(distance(reference, e)?)))
}
