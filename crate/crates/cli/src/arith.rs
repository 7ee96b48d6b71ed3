//! `latentprobe arith`: attribute edits of the latents in a file.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use latentprobe_core::attribute::{generate_variants, Direction, RecipeFile};
use latentprobe_core::backend::{distance, Backend};
use latentprobe_core::lvec::{read_latents, write_latents, FileFormat};
use latentprobe_core::report::encode_ppm;
use latentprobe_core::{AttributeRecipe, LatentVector};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::search::DEFAULT_OUT;
use crate::{ensure_dir, json_text, write_file, Common, Outcome, EXIT_OK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Add,
    Remove,
    Both,
}

impl Which {
    fn directions(self) -> &'static [Direction] {
        match self {
            Which::Add => &[Direction::Add],
            Which::Remove => &[Direction::Remove],
            Which::Both => &[Direction::Add, Direction::Remove],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArithArgs {
    pub base: PathBuf,
    pub recipes: Vec<PathBuf>,
    pub direction: Which,
    /// Apply each edit to the previous result instead of to the base.
    pub chain: bool,
    /// Render each edited latent through the manifest's backend.
    pub render: bool,
    pub format: FileFormat,
}

#[derive(Debug, Serialize)]
pub struct VariantReport {
    pub file: PathBuf,
    pub recipe: String,
    pub direction: Direction,
    /// Largest identity distance between a base latent and its edit, when a
    /// backend was configured.
    pub identity_distance: Option<f64>,
}

pub fn cmd_arith(common: &Common, args: &ArithArgs) -> Result<Outcome> {
    if args.recipes.is_empty() {
        bail!("arith: at least one recipe is required");
    }
    let bases: Vec<LatentVector> = read_latents(&args.base)
        .with_context(|| format!("lvec: cannot load {}", args.base.display()))?;
    let mut edits: Vec<(AttributeRecipe, Direction)> = Vec::new();
    for path in &args.recipes {
        let recipe: AttributeRecipe = RecipeFile::load(path)
            .with_context(|| format!("attribute: cannot load recipe {}", path.display()))?;
        for &d in args.direction.directions() {
            edits.push((recipe.clone(), d));
        }
    }
    let manifest = match &common.config {
        Some(p) => Some(Manifest::load(p)?),
        None => None,
    };
    if args.render && manifest.is_none() {
        bail!("arith: --render needs a backend from --config");
    }
    let out: PathBuf = common
        .out
        .clone()
        .or_else(|| manifest.as_ref().and_then(|m| m.out.clone()))
        .unwrap_or_else(|| DEFAULT_OUT.into());
    let backend = manifest.as_ref().map(|m| m.backend.open()).transpose()?;

    // variants[e][b]: edit e applied to base latent b
    let mut variants: Vec<Vec<LatentVector>> = vec![Vec::with_capacity(bases.len()); edits.len()];
    for base in &bases {
        let vs =
            generate_variants(base, &edits, args.chain).context("attribute: applying edits")?;
        for (slot, v) in variants.iter_mut().zip(vs) {
            slot.push(v);
        }
    }

    ensure_dir(&out)?;
    let ext = match args.format {
        FileFormat::Binary => "lvec",
        FileFormat::Json => "json",
    };
    let mut reports = Vec::with_capacity(edits.len());
    for (i, ((recipe, direction), latents)) in edits.iter().zip(&variants).enumerate() {
        let stem = if args.chain {
            format!("{:02}_{}_{}", i + 1, recipe.name(), direction.label())
        } else {
            format!("{}_{}", recipe.name(), direction.label())
        };
        let file = out.join(format!("{stem}.{ext}"));
        write_latents(&file, latents, args.format)
            .with_context(|| format!("lvec: cannot write {}", file.display()))?;

        let mut identity_distance = None;
        if let Some(b) = &backend {
            let before = b
                .generate_embed(&bases)
                .context("backend: embedding base")?;
            let after = b
                .generate_embed(latents)
                .context("backend: embedding edits")?;
            let mut worst = 0.0f64;
            for (x, y) in before.iter().zip(&after) {
                worst = worst.max(distance(x, y)?);
            }
            identity_distance = Some(worst);
            if args.render {
                for (j, z) in latents.iter().enumerate() {
                    let name = if latents.len() == 1 {
                        format!("{stem}.pnm")
                    } else {
                        format!("{stem}_{j}.pnm")
                    };
                    let image = b.generate(z).context("backend: rendering edit")?;
                    write_file(&out.join(name), encode_ppm(&image)?)?;
                }
            }
        }
        reports.push(VariantReport {
            file,
            recipe: recipe.name().to_string(),
            direction: *direction,
            identity_distance,
        });
    }

    let stdout = if common.json {
        json_text(&reports)?
    } else {
        let mut s = String::new();
        for r in &reports {
            s.push_str(&format!(
                "{} {:<6} {}",
                r.recipe,
                r.direction.label(),
                r.file.display()
            ));
            if let Some(d) = r.identity_distance {
                s.push_str(&format!("  identity_distance {d}"));
            }
            s.push('\n');
        }
        s
    };
    Ok(Outcome::new(EXIT_OK, stdout))
}
