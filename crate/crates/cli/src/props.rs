//! `latentprobe props`: measure the noise, sign and scale invariances of a
//! backend.

use anyhow::{Context, Result};
use latentprobe_core::probe::{property_probe, Probe};
use latentprobe_core::synthetic::margin_latents;
use latentprobe_core::SeededRng;
use serde::Serialize;

use crate::manifest::Manifest;
use crate::{json_text, Common, Outcome, EXIT_OK, EXIT_SHORTFALL};

pub const SCALE_FACTORS: [f64; 3] = [0.5, 2.0, 10.0];

#[derive(Clone, Debug)]
pub struct PropsArgs {
    pub trials: usize,
    pub amplitude: f64,
    /// Smallest coordinate magnitude of the probed latents.
    pub margin: f64,
    /// Number of probed latents.
    pub samples: usize,
    /// Largest distance that still counts as a pass.
    pub tolerance: f64,
}

impl Default for PropsArgs {
    fn default() -> Self {
        Self {
            trials: 1000,
            amplitude: 0.5,
            margin: 0.6,
            samples: 4,
            tolerance: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub probe: String,
    pub max_distance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
struct PropsReport<'a> {
    tolerance: f64,
    all_pass: bool,
    probes: &'a [ProbeRow],
}

pub fn run_probes(common: &Common, args: &PropsArgs) -> Result<Vec<ProbeRow>> {
    let manifest = Manifest::load_or_default(common.config.as_deref())?;
    let seed = manifest.seed(common.seed);
    let backend = manifest.backend.open()?;
    let dim = backend.info().latent_dim;
    let zs = margin_latents(
        dim,
        args.samples.max(1),
        args.margin,
        &mut SeededRng::new(seed),
    )
    .context("probe: drawing latents")?;

    let mut probes = vec![(
        format!("noise {}", args.amplitude),
        Probe::Noise {
            amplitude: args.amplitude,
            trials: args.trials,
            seed,
        },
    )];
    probes.push(("sign".into(), Probe::Sign));
    for c in SCALE_FACTORS {
        probes.push((format!("scale {c}"), Probe::Scale { factor: c }));
    }

    probes
        .into_iter()
        .map(|(name, probe)| {
            let mut worst = 0.0f64;
            for z in &zs {
                let d = property_probe(backend.as_ref(), z, probe)
                    .with_context(|| format!("probe: {name}"))?;
                worst = worst.max(d);
            }
            Ok(ProbeRow {
                probe: name,
                max_distance: worst,
                pass: worst <= args.tolerance,
            })
        })
        .collect()
}

pub fn format_probe_table(rows: &[ProbeRow]) -> String {
    let width = rows.iter().map(|r| r.probe.len()).chain([5]).max().unwrap() + 3;
    let mut s = format!("{:<width$}{:<24}{}\n", "probe", "max_distance", "status");
    for r in rows {
        s.push_str(&format!(
            "{:<width$}{:<24}{}\n",
            r.probe,
            r.max_distance.to_string(),
            if r.pass { "pass" } else { "FAIL" }
        ));
    }
    s
}

pub fn cmd_props(common: &Common, args: &PropsArgs) -> Result<Outcome> {
    let rows = run_probes(common, args)?;
    let all_pass = rows.iter().all(|r| r.pass);
    let stdout = if common.json {
        json_text(&PropsReport {
            tolerance: args.tolerance,
            all_pass,
            probes: &rows,
        })?
    } else {
        format_probe_table(&rows)
    };
    Ok(Outcome::new(
        if all_pass { EXIT_OK } else { EXIT_SHORTFALL },
        stdout,
    ))
}
