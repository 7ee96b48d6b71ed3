//! `latentprobe search`: run the identity search described by a manifest.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use latentprobe_core::backend::Backend;
use latentprobe_core::lvec::{write_latents, FileFormat};
use latentprobe_core::report::encode_ppm;
use latentprobe_core::search::{search, Stage, Termination};
use latentprobe_core::LatentVector;
use log::{info, warn};
use serde::Serialize;

use crate::manifest::{LoadedTarget, Manifest};
use crate::{ensure_dir, json_text, write_file, Common, Outcome, EXIT_OK, EXIT_SHORTFALL};

pub const DEFAULT_OUT: &str = "latentprobe-out";

/// Contents of `result.json`; the per-round trace goes to `trace.json`.
#[derive(Debug, Serialize)]
pub struct ResultFile<'a> {
    pub best_latent: &'a LatentVector,
    pub best_score: f64,
    pub terminated_by: Termination,
    pub seed: u64,
    pub backend: &'a str,
    pub rounds: Rounds,
    pub evaluations: usize,
}

#[derive(Debug, Serialize)]
pub struct Rounds {
    pub init: usize,
    pub coarse: usize,
    pub fine: usize,
}

pub fn cmd_search(common: &Common, format: FileFormat) -> Result<Outcome> {
    let manifest = Manifest::load_or_default(common.config.as_deref())?;
    let target = LoadedTarget::load(&manifest.target)?;
    let out: PathBuf = common
        .out
        .clone()
        .or_else(|| manifest.out.clone())
        .unwrap_or_else(|| DEFAULT_OUT.into());
    let seed = manifest.seed(common.seed);

    let backend = manifest.backend.open()?;
    let info = backend.info().clone();
    let config = manifest.search_config(info.latent_dim, seed)?;
    let identity = target.identity(backend.as_ref(), manifest.reduction)?;
    info!(
        "search: backend {} D={} N={} T={} seed={}",
        info.backend_name, config.latent_dim, config.candidates_per_round, config.threshold, seed
    );

    ensure_dir(&out)?;
    let result = match search(&identity, backend.as_ref(), &config) {
        Ok(r) => r,
        Err(abort) => {
            write_file(&out.join("trace.json"), json_text(&abort.trace)?)?;
            return Err(anyhow!(abort.error)).context(format!(
                "search: aborted after {} rounds (partial trace in {})",
                abort.trace.len(),
                out.join("trace.json").display()
            ));
        }
    };

    let file = ResultFile {
        best_latent: &result.best_latent,
        best_score: result.best_score,
        terminated_by: result.terminated_by,
        seed,
        backend: &info.backend_name,
        rounds: Rounds {
            init: result.trace.rounds(Stage::Init),
            coarse: result.trace.rounds(Stage::Coarse),
            fine: result.trace.rounds(Stage::Fine),
        },
        evaluations: result.trace.total_evaluations(),
    };
    write_file(&out.join("result.json"), json_text(&file)?)?;
    write_file(&out.join("trace.json"), json_text(&result.trace)?)?;
    let lvec = out.join("best.lvec");
    write_latents(&lvec, std::slice::from_ref(&result.best_latent), format)
        .with_context(|| format!("lvec: cannot write {}", lvec.display()))?;
    match backend
        .generate(&result.best_latent)
        .map_err(anyhow::Error::from)
        .and_then(|x| Ok(encode_ppm(&x)?))
    {
        Ok(bytes) => write_file(&out.join("best.pnm"), bytes)?,
        Err(e) => warn!("report: no image written: {e:#}"),
    }

    let code = match result.terminated_by {
        Termination::Threshold => EXIT_OK,
        _ => EXIT_SHORTFALL,
    };
    let stdout = if common.json {
        json_text(&file)?
    } else {
        format!(
            "terminated_by: {}\nbest_score: {}\nrounds: init {} coarse {} fine {}\nevaluations: {}\noutput: {}\n",
            termination_label(result.terminated_by),
            result.best_score,
            file.rounds.init,
            file.rounds.coarse,
            file.rounds.fine,
            file.evaluations,
            out.display()
        )
    };
    Ok(Outcome::new(code, stdout))
}

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Threshold => "threshold",
        Termination::RoundCapCoarse => "round_cap_coarse",
        Termination::RoundCapFine => "round_cap_fine",
    }
}
