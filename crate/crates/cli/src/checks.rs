//! End-to-end checks on the synthetic backend. `latentprobe demo` runs them
//! and prints one line per check; the acceptance test target runs the same
//! set.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use latentprobe_core::attribute::apply_attribute;
use latentprobe_core::backend::{distance, score_batch, Backend, CountingBackend};
use latentprobe_core::latent::sample_box;
use latentprobe_core::probe::{property_probe, Probe};
use latentprobe_core::search::{search, select_optimal, SearchConfig, Stage, Termination};
use latentprobe_core::synthetic::{margin_latents, sign_patterns, SyntheticSpec};
use latentprobe_core::{
    AttributeRecipe, LatentVector, SamplingBox, SeededRng, SyntheticModel, TargetIdentity,
};
use serde_json::json;

use crate::eval::{cmd_eval, EvalArgs};
use crate::search::cmd_search;
use crate::{write_file, Common};

/// Published pair scores used as a layout fixture.
pub const PUBLISHED_PAIR_SCORES: [([usize; 2], f64); 6] = [
    ([1, 2], 0.28174594),
    ([1, 3], 0.60358595),
    ([1, 4], 2.22597405),
    ([2, 3], 0.74043938),
    ([2, 4], 2.18869435),
    ([3, 4], 2.15149067),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e:#}")),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Scratch directory removed on drop.
pub struct ScratchDir(PathBuf);

impl ScratchDir {
    pub fn new(tag: &str) -> Result<Self> {
        static NEXT: AtomicUsize = AtomicUsize::new(0);
        let dir = std::env::temp_dir().join(format!(
            "latentprobe-{tag}-{}-{}",
            std::process::id(),
            NEXT.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&dir).with_context(|| format!("io: cannot create {}", dir.display()))?;
        Ok(Self(dir))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn synthetic(latent_dim: usize) -> Result<SyntheticModel> {
    Ok(SyntheticModel::new(SyntheticSpec {
        latent_dim,
        ..SyntheticSpec::default()
    })?)
}

fn planted(model: &SyntheticModel, seed: u64) -> Result<(LatentVector, TargetIdentity)> {
    let d = model.info().latent_dim;
    let z = margin_latents(d, 1, 0.0, &mut SeededRng::new(seed))?.remove(0);
    let target = TargetIdentity::new(model.generate_embed(std::slice::from_ref(&z))?)?;
    Ok((z, target))
}

/// All 256 sign patterns at D = 8: the planted pattern is the only zero; then
/// 20 seeded searches with N = 64 must mostly reach it.
pub fn exhaustive_d8() -> Check {
    Check::from_result(
        "exhaustive D=8",
        (|| {
            let start = Instant::now();
            let model = synthetic(8)?;
            let (z, target) = planted(&model, 8)?;
            let patterns = sign_patterns::<f64>(8)?;
            let scores = score_batch(&patterns, &target, &model)?;
            let zeros: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == 0.0).collect();
            let unique = zeros.len() == 1 && patterns[zeros[0]] == z.sign();

            let mut hits = 0;
            for seed in 0..20 {
                let config = SearchConfig {
                    latent_dim: 8,
                    candidates_per_round: 64,
                    seed,
                    ..SearchConfig::default()
                };
                let r = search(&target, &model, &config).map_err(|a| a.error)?;
                if r.best_score == 0.0 && r.terminated_by == Termination::Threshold {
                    hits += 1;
                }
            }
            let elapsed = start.elapsed();
            Ok((
                unique && hits >= 18 && elapsed < Duration::from_secs(5),
                format!(
                    "{} zero-score pattern(s) of 256, planted unique: {unique}; \
                 {hits}/20 searches hit score 0 by threshold; {:.2?}",
                    zeros.len(),
                    elapsed
                ),
            ))
        })(),
    )
}

/// Best score never increases along any trace.
pub fn monotonicity() -> Check {
    Check::from_result(
        "monotonicity audit",
        (|| {
            let mut runs = 0;
            let mut violations = 0;
            // (D, runs, N); wide latents rarely reach the threshold and so run
            // both stages to the round cap
            for (d, count, n) in [(8, 40, 64), (64, 40, 64), (200, 40, 32)] {
                let model = synthetic(d)?;
                for seed in 0..count {
                    let (_, target) = planted(&model, 1000 + seed)?;
                    let config = SearchConfig {
                        latent_dim: d,
                        candidates_per_round: n,
                        seed,
                        ..SearchConfig::default()
                    };
                    let r = search(&target, &model, &config).map_err(|a| a.error)?;
                    runs += 1;
                    if r.trace.first_increase().is_some() {
                        violations += 1;
                    }
                }
            }
            Ok((
                runs >= 100 && violations == 0,
                format!("{runs} runs over D in {{8, 64, 200}}, {violations} violations"),
            ))
        })(),
    )
}

/// `select_optimal` against a plain first-minimum scan.
pub fn select_optimal_scan() -> Check {
    Check::from_result(
        "select_optimal",
        (|| {
            let mut rng = SeededRng::new(3);
            let mut mismatches = 0;
            for _ in 0..1000 {
                let n = 1 + (rng.next_u64() % 300) as usize;
                // coarse grid so ties are common
                let scores: Vec<f64> = (0..n).map(|_| (rng.next_u64() % 50) as f64 / 8.0).collect();
                let cands: Vec<LatentVector> = (0..n)
                    .map(|i| LatentVector::new(vec![i as f64]))
                    .collect::<latentprobe_core::Result<_>>()?;
                let mut expect = 0;
                for i in 1..n {
                    if scores[i] < scores[expect] {
                        expect = i;
                    }
                }
                let (got, z) = select_optimal(&cands, &scores)?;
                if got != expect || z != &cands[expect] {
                    mismatches += 1;
                }
            }
            Ok((
                mismatches == 0,
                format!("1000 instances, {mismatches} mismatches"),
            ))
        })(),
    )
}

/// Scale, sign and noise probes on the synthetic backend are exactly zero.
pub fn property_probes() -> Check {
    Check::from_result(
        "property probes",
        (|| {
            let model = synthetic(64)?;
            let zs = margin_latents(64, 4, 0.6, &mut SeededRng::new(11))?;
            let mut worst = Vec::new();
            for (name, probe) in [
                ("scale 0.5", Probe::Scale { factor: 0.5 }),
                ("scale 2", Probe::Scale { factor: 2.0 }),
                ("scale 10", Probe::Scale { factor: 10.0 }),
                ("sign", Probe::Sign),
                (
                    "noise 0.5 x1000",
                    Probe::Noise {
                        amplitude: 0.5,
                        trials: 1000,
                        seed: 12,
                    },
                ),
            ] {
                let mut m = 0.0f64;
                for z in &zs {
                    m = m.max(property_probe(&model, z, probe)?);
                }
                worst.push((name, m));
            }
            let ok = worst.iter().all(|(_, m)| *m == 0.0);
            let detail = worst
                .iter()
                .map(|(n, m)| format!("{n} = {m}"))
                .collect::<Vec<_>>()
                .join(", ");
            Ok((ok, detail))
        })(),
    )
}

/// Margin-respecting edits leave the identity untouched and move the
/// attribute block by exactly `B·Δ`.
pub fn arithmetic_identity() -> Check {
    Check::from_result(
        "arithmetic identity",
        (|| {
            let model = synthetic(64)?;
            let mut rng = SeededRng::new(21);
            let mut max_identity = 0.0f64;
            let mut max_attr_err = 0.0f64;
            let mut pairs = 0;
            while pairs < 100 {
                let base = margin_latents(64, 1, 0.6, &mut rng)?.remove(0);
                let w = sample_box(&SamplingBox::symmetric_unit(64), 1, &mut rng)?.remove(0);
                let step = sample_box(
                    &SamplingBox::new(LatentVector::splat(64, -0.5), LatentVector::splat(64, 0.5))?,
                    1,
                    &mut rng,
                )?
                .remove(0);
                let recipe = AttributeRecipe::new("edit", vec![w.add(&step)?], vec![w])?;
                let delta = recipe.delta()?;
                let edited = apply_attribute(&base, &recipe)?;
                if edited.sign() != base.sign() {
                    // outside the margin condition; draw again
                    continue;
                }
                pairs += 1;
                let e = model.generate_embed(&[base.clone(), edited.clone()])?;
                max_identity = max_identity.max(distance(&e[0], &e[1])?);
                let before = model.attribute_block(&base)?;
                let after = model.attribute_block(&edited)?;
                let expect = model.attribute_block(&delta)?;
                for ((a, b), x) in after.iter().zip(&before).zip(&expect) {
                    max_attr_err = max_attr_err.max((a - b - x).abs());
                }
            }
            Ok((
                max_identity == 0.0 && max_attr_err <= 1e-9,
                format!(
                    "{pairs} pairs, max identity distance {max_identity}, \
                 max attribute deviation {max_attr_err:e}"
                ),
            ))
        })(),
    )
}

/// Two identical `search` runs write byte-identical result and trace files.
pub fn determinism() -> Check {
    Check::from_result(
        "determinism",
        (|| {
            let scratch = ScratchDir::new("determinism")?;
            let manifest = scratch.path().join("manifest.json");
            let doc = json!({
                "backend": {"type": "synthetic", "D": 64, "m": 32, "k": 16, "seed": 42},
                "target": {"type": "planted", "seed": 5},
                "search": {"N": 128, "max_rounds_per_stage": 10},
                "seed": 99
            });
            write_file(&manifest, serde_json::to_vec_pretty(&doc)?)?;
            let mut outputs = Vec::new();
            for run in ["a", "b"] {
                let common = Common {
                    config: Some(manifest.clone()),
                    out: Some(scratch.path().join(run)),
                    ..Common::default()
                };
                cmd_search(&common, Default::default())?;
                let dir = scratch.path().join(run);
                outputs.push((
                    fs::read(dir.join("result.json"))?,
                    fs::read(dir.join("trace.json"))?,
                ));
            }
            let same = outputs[0] == outputs[1];
            Ok((
                same,
                format!(
                    "result.json {} bytes, trace.json {} bytes, identical: {same}",
                    outputs[0].0.len(),
                    outputs[0].1.len()
                ),
            ))
        })(),
    )
}

/// D = 200, N = 1000: init plus three coarse rounds, timed and counted.
pub fn full_scale() -> Check {
    Check::from_result(
        "full-scale smoke",
        (|| {
            let start = Instant::now();
            let model = CountingBackend::new(SyntheticModel::new(SyntheticSpec::full_scale(42))?);
            let (_, target) = planted(model.inner(), 7)?;
            let config = SearchConfig {
                latent_dim: 200,
                candidates_per_round: 1000,
                max_rounds_per_stage: 3,
                fine_tuning: false,
                threshold: 1e-12,
                seed: 1,
                ..SearchConfig::default()
            };
            let r = search(&target, &model, &config).map_err(|a| a.error)?;
            let elapsed = start.elapsed();
            let evaluated = r.trace.total_evaluations();
            let ok = r.trace.rounds(Stage::Init) == 1
                && r.trace.rounds(Stage::Coarse) == 3
                && evaluated == 4 * 1000
                && r.terminated_by == Termination::RoundCapCoarse
                && elapsed < Duration::from_secs(60);
            Ok((
                ok,
                format!(
                    "{evaluated} search evaluations (+{} final re-check), {:.2?}",
                    model.evaluations() as usize - evaluated,
                    elapsed
                ),
            ))
        })(),
    )
}

/// `eval` lays out the published scores exactly as `golden`.
pub fn table_layout(golden: &str) -> Check {
    Check::from_result(
        "table format",
        (|| {
            let scratch = ScratchDir::new("table")?;
            let scores = scratch.path().join("scores.json");
            let rows: Vec<_> = PUBLISHED_PAIR_SCORES
                .iter()
                .map(|(pair, score)| json!({"pair": pair, "score": score}))
                .collect();
            write_file(&scores, serde_json::to_vec(&rows)?)?;
            let out = cmd_eval(
                &Common::default(),
                &EvalArgs {
                    files: vec![],
                    scores: Some(scores),
                },
            )?;
            let same = out.stdout == golden;
            Ok((
                same,
                if same {
                    format!("{} bytes match the golden table", golden.len())
                } else {
                    format!("got {:?}", out.stdout)
                },
            ))
        })(),
    )
}

/// Every check, in order.
pub fn run_all(golden_table: &str) -> Vec<Check> {
    vec![
        exhaustive_d8(),
        monotonicity(),
        select_optimal_scan(),
        property_probes(),
        arithmetic_identity(),
        determinism(),
        full_scale(),
        table_layout(golden_table),
    ]
}
