//! `latentprobe eval`: all-pairs identity distance table.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use latentprobe_core::lvec::read_latents;
use latentprobe_core::report::{all_pairs, format_pair_table, PairScore};
use latentprobe_core::Embedding;
use serde::{Deserialize, Serialize};

use crate::{ensure_dir, json_text, write_file, Common, Outcome, EXIT_OK};

/// One row of a scores file: `{"pair": [1, 2], "score": 0.28174594}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRow {
    pub pair: [usize; 2],
    pub score: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EvalArgs {
    /// Latent-format files whose vectors are embeddings, taken in order.
    pub files: Vec<PathBuf>,
    /// Pre-computed pair scores to lay out instead of computing them.
    pub scores: Option<PathBuf>,
}

pub fn pair_scores(args: &EvalArgs) -> Result<Vec<PairScore>> {
    match (&args.scores, args.files.is_empty()) {
        (Some(path), true) => {
            let text =
                fs::read(path).with_context(|| format!("eval: cannot read {}", path.display()))?;
            let rows: Vec<ScoreRow> = serde_json::from_slice(&text)
                .with_context(|| format!("eval: cannot parse {}", path.display()))?;
            Ok(rows
                .into_iter()
                .map(|r| PairScore {
                    first: r.pair[0],
                    second: r.pair[1],
                    score: r.score,
                })
                .collect())
        }
        (None, false) => {
            let mut embeddings = Vec::new();
            for path in &args.files {
                for v in read_latents::<f64>(path)
                    .with_context(|| format!("lvec: cannot load {}", path.display()))?
                {
                    embeddings.push(Embedding::new(v.into_vec())?);
                }
            }
            if embeddings.len() < 2 {
                bail!(
                    "eval: need at least two embeddings, got {}",
                    embeddings.len()
                );
            }
            Ok(all_pairs(&embeddings).context("report: pairwise distances")?)
        }
        _ => bail!("eval: give either embedding files or --scores, not both or neither"),
    }
}

pub fn cmd_eval(common: &Common, args: &EvalArgs) -> Result<Outcome> {
    let pairs = pair_scores(args)?;
    let table = format_pair_table(&pairs);
    if let Some(dir) = &common.out {
        ensure_dir(dir)?;
        write_file(&dir.join("pairs.txt"), &table)?;
    }
    let stdout = if common.json {
        let rows: Vec<ScoreRow> = pairs
            .iter()
            .map(|p| ScoreRow {
                pair: [p.first, p.second],
                score: p.score,
            })
            .collect();
        json_text(&rows)?
    } else {
        table
    };
    Ok(Outcome::new(EXIT_OK, stdout))
}
