//! Latent vector arithmetic: `edited = original + mean(positive) - mean(negative)`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{check_dim, LatentVector};
use crate::lvec::read_latents;
use crate::scalar::Scalar;

/// Exemplar latents with (`positive`) and without (`negative`) an attribute.
///
/// At least four exemplars per side usually give a stable direction; the
/// count is up to the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeRecipe<T> {
    name: String,
    positive: Vec<LatentVector<T>>,
    negative: Vec<LatentVector<T>>,
}

impl<T: Scalar> AttributeRecipe<T> {
    pub fn new(
        name: impl Into<String>,
        positive: Vec<LatentVector<T>>,
        negative: Vec<LatentVector<T>>,
    ) -> Result<Self> {
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::config(
                "attribute recipe needs at least one positive and one negative exemplar",
            ));
        }
        let dim = positive[0].dim();
        for z in positive.iter().chain(&negative) {
            check_dim("attribute exemplars", dim, z.dim())?;
        }
        Ok(Self {
            name: name.into(),
            positive,
            negative,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.positive[0].dim()
    }

    pub fn positive(&self) -> &[LatentVector<T>] {
        &self.positive
    }

    pub fn negative(&self) -> &[LatentVector<T>] {
        &self.negative
    }

    /// The same recipe with the exemplar roles exchanged.
    pub fn inverted(&self) -> Self {
        Self {
            name: self.name.clone(),
            positive: self.negative.clone(),
            negative: self.positive.clone(),
        }
    }

    /// `mean(positive) - mean(negative)`.
    pub fn delta(&self) -> Result<LatentVector<T>> {
        attribute_vector(&self.positive)?.sub(&attribute_vector(&self.negative)?)
    }
}

/// On-disk recipe: `{"name": ..., "positive": "path.lvec", "negative": "path.lvec"}`.
/// Relative paths resolve against the recipe file's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeFile {
    pub name: String,
    pub positive: PathBuf,
    pub negative: PathBuf,
}

impl RecipeFile {
    pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<AttributeRecipe<T>> {
        let path = path.as_ref();
        let doc: RecipeFile = serde_json::from_slice(&std::fs::read(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let pos = read_latents(dir.join(&doc.positive))?;
        let neg = read_latents(dir.join(&doc.negative))?;
        AttributeRecipe::new(doc.name, pos, neg)
    }
}

/// Coordinate-wise arithmetic mean.
pub fn attribute_vector<T: Scalar>(exemplars: &[LatentVector<T>]) -> Result<LatentVector<T>> {
    let first = exemplars
        .first()
        .ok_or_else(|| Error::config("attribute vector needs at least one exemplar"))?;
    let n = T::from_usize(exemplars.len()).unwrap();
    let mut sum = first.clone();
    for z in &exemplars[1..] {
        sum = sum.add(z)?;
    }
    Ok(sum.map(|v| v / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `original + Δ`
    Add,
    /// `original - Δ`
    Remove,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Add => "add",
            Direction::Remove => "remove",
        }
    }
}

/// `original + mean(positive) - mean(negative)`.
pub fn apply_attribute<T: Scalar>(
    original: &LatentVector<T>,
    recipe: &AttributeRecipe<T>,
) -> Result<LatentVector<T>> {
    check_dim("attribute edit", recipe.dim(), original.dim())?;
    original.add(&recipe.delta()?)
}

fn apply_direction<T: Scalar>(
    z: &LatentVector<T>,
    recipe: &AttributeRecipe<T>,
    direction: Direction,
) -> Result<LatentVector<T>> {
    match direction {
        Direction::Add => apply_attribute(z, recipe),
        Direction::Remove => apply_attribute(z, &recipe.inverted()),
    }
}

/// One edited latent per `(recipe, direction)` pair.
///
/// Edits are applied to `base` independently unless `chain` is set, in which
/// case each edit starts from the previous result.
pub fn generate_variants<T: Scalar>(
    base: &LatentVector<T>,
    edits: &[(AttributeRecipe<T>, Direction)],
    chain: bool,
) -> Result<Vec<LatentVector<T>>> {
    let mut out = Vec::with_capacity(edits.len());
    let mut current = base.clone();
    for (recipe, direction) in edits {
        let from = if chain { &current } else { base };
        let edited = apply_direction(from, recipe, *direction)?;
        if chain {
            current = edited.clone();
        }
        out.push(edited);
    }
    Ok(out)
}
