//! Greedy box search for a latent whose output matches a target identity.
//!
//! The search runs in three stages:
//!
//! 1. **init**: draw `N` latents from `[-I, I]` and keep the best.
//! 2. **coarse**: repeatedly draw `N` latents from
//!    `[-I + α·z_opt, I + α·z_opt]`, growing `α` by `alpha_step` up to
//!    `alpha_max` after every round.
//! 3. **fine**: repeatedly draw `N` latents from
//!    `[-z_opt + β·I, z_opt + β·I]` (endpoints swapped per coordinate where
//!    inverted), with the same schedule on `β`.
//!
//! Every stage stops as soon as the incumbent score is at or below the
//! threshold, or after `max_rounds_per_stage` rounds. The incumbent is only
//! replaced by a candidate that strictly beats it, so scores recorded in the
//! trace never increase.

use std::fmt;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::backend::{score_batch, Backend, TargetIdentity};
use crate::error::{Error, Result};
use crate::latent::{noise_box, sample_box, shift_box, LatentVector, SamplingBox};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Tolerance for the closing re-evaluation of the returned latent.
pub const REEVALUATION_TOLERANCE: f64 = 1e-6;

/// Search parameters. JSON field names are the long forms; `N`, `T` and `D`
/// are accepted as aliases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(alias = "N")]
    pub candidates_per_round: usize,
    /// Squared-L2 identity distance at or below which the search stops.
    #[serde(alias = "T")]
    pub threshold: f64,
    #[serde(alias = "D")]
    pub latent_dim: usize,
    pub alpha_start: f64,
    pub alpha_step: f64,
    pub alpha_max: f64,
    pub beta_start: f64,
    pub beta_step: f64,
    pub beta_max: f64,
    pub max_rounds_per_stage: usize,
    /// Run the fine-tuning stage after the coarse stage.
    pub fine_tuning: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            candidates_per_round: 1000,
            threshold: 0.4,
            latent_dim: 200,
            alpha_start: 0.1,
            alpha_step: 0.1,
            alpha_max: 1.0,
            beta_start: 0.1,
            beta_step: 0.1,
            beta_max: 1.0,
            max_rounds_per_stage: 50,
            fine_tuning: true,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(msg.to_string()));
        if self.candidates_per_round == 0 {
            return bad("candidates_per_round must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad("threshold must be positive and finite");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        for (name, start, step, max) in [
            ("alpha", self.alpha_start, self.alpha_step, self.alpha_max),
            ("beta", self.beta_start, self.beta_step, self.beta_max),
        ] {
            if !(0.0 <= start && start <= max && max <= 1.0) {
                return Err(Error::config(format!(
                    "{name} schedule needs 0 <= {name}_start <= {name}_max <= 1"
                )));
            }
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::config(format!("{name}_step must be positive")));
            }
        }
        if self.max_rounds_per_stage == 0 {
            return bad("max_rounds_per_stage must be at least 1");
        }
        Ok(())
    }

    /// Substream used by round `round` of `stage`.
    pub fn substream_id(&self, stage: Stage, round: usize) -> u64 {
        let cap = self.max_rounds_per_stage as u64;
        match stage {
            Stage::Init => 0,
            Stage::Coarse => 1 + round as u64,
            Stage::Fine => 1 + cap + round as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Coarse,
    Fine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    RoundCapCoarse,
    RoundCapFine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TraceRecord<T> {
    pub stage: Stage,
    pub round_index: usize,
    /// `α` for coarse rounds, `β` for fine rounds, 0 for init.
    pub alpha_or_beta: f64,
    pub candidates_evaluated: usize,
    pub best_score_after: T,
    pub rng_substream_id: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SearchTrace<T> {
    records: Vec<TraceRecord<T>>,
}

impl<T: Scalar> SearchTrace<T> {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: TraceRecord<T>) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rounds(&self, stage: Stage) -> usize {
        self.records.iter().filter(|r| r.stage == stage).count()
    }

    pub fn total_evaluations(&self) -> usize {
        self.records.iter().map(|r| r.candidates_evaluated).sum()
    }

    /// Index of the first record whose score exceeds its predecessor's.
    pub fn first_increase(&self) -> Option<usize> {
        self.records
            .windows(2)
            .position(|w| w[1].best_score_after > w[0].best_score_after)
            .map(|i| i + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SearchResult<T> {
    pub best_latent: LatentVector<T>,
    pub best_score: T,
    pub terminated_by: Termination,
    pub trace: SearchTrace<T>,
}

/// A search that failed part-way; `trace` holds every completed round.
#[derive(Debug)]
pub struct SearchAbort<T> {
    pub error: Error,
    pub trace: SearchTrace<T>,
}

impl<T: fmt::Debug> fmt::Display for SearchAbort<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "search aborted after {} rounds: {}",
            self.trace.records.len(),
            self.error
        )
    }
}

impl<T: fmt::Debug> std::error::Error for SearchAbort<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// First index attaining the minimum score (strict `<`, so earlier wins ties).
pub fn select_optimal<'a, T: Scalar>(
    candidates: &'a [LatentVector<T>],
    scores: &[T],
) -> Result<(usize, &'a LatentVector<T>)> {
    if candidates.is_empty() {
        return Err(Error::config("select_optimal needs at least one candidate"));
    }
    if candidates.len() != scores.len() {
        return Err(Error::Dimension {
            what: "select_optimal scores",
            expected: candidates.len(),
            found: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::backend(format!("score at index {i} is NaN")));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok((best, &candidates[best]))
}

struct Round<'a, T> {
    stage: Stage,
    index: usize,
    scale: f64,
    bx: &'a SamplingBox<T>,
}

fn run_round<T: Scalar, B: Backend<T> + ?Sized>(
    round: Round<'_, T>,
    incumbent: &mut (LatentVector<T>, T),
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
    trace: &mut SearchTrace<T>,
) -> Result<()> {
    let stream = config.substream_id(round.stage, round.index);
    let mut rng = SeededRng::new(config.seed).substream(stream);
    let candidates = sample_box(round.bx, config.candidates_per_round, &mut rng)?;
    let scores = score_batch(&candidates, target, backend)?;
    let (idx, best) = select_optimal(&candidates, &scores)?;
    // init has no incumbent; later rounds keep it unless strictly beaten
    if round.stage == Stage::Init || scores[idx] < incumbent.1 {
        *incumbent = (best.clone(), scores[idx]);
    }
    debug!(
        "{:?} round {} scale {:.3}: round best {} incumbent {}",
        round.stage, round.index, round.scale, scores[idx], incumbent.1
    );
    trace.push(TraceRecord {
        stage: round.stage,
        round_index: round.index,
        alpha_or_beta: round.scale,
        candidates_evaluated: candidates.len(),
        best_score_after: incumbent.1,
        rng_substream_id: stream,
    });
    Ok(())
}

fn check_dims<T: Scalar, B: Backend<T> + ?Sized>(
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
) -> Result<()> {
    config.validate()?;
    let info = backend.info();
    info.validate()?;
    if info.latent_dim != config.latent_dim {
        return Err(Error::Dimension {
            what: "backend latent_dim vs config latent_dim",
            expected: config.latent_dim,
            found: info.latent_dim,
        });
    }
    if info.embedding_dim != target.dim() {
        return Err(Error::Dimension {
            what: "backend embedding_dim vs target",
            expected: target.dim(),
            found: info.embedding_dim,
        });
    }
    Ok(())
}

/// Best of `N` draws from `[-I, I]`.
pub fn init_stage<T: Scalar, B: Backend<T> + ?Sized>(
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
    trace: &mut SearchTrace<T>,
) -> Result<(LatentVector<T>, T)> {
    check_dims(target, backend, config)?;
    let bx = SamplingBox::symmetric_unit(config.latent_dim);
    let mut incumbent = (LatentVector::zeros(config.latent_dim), T::infinity());
    run_round(
        Round {
            stage: Stage::Init,
            index: 0,
            scale: 0.0,
            bx: &bx,
        },
        &mut incumbent,
        target,
        backend,
        config,
        trace,
    )?;
    Ok(incumbent)
}

#[derive(Clone, Copy)]
struct Schedule {
    start: f64,
    step: f64,
    max: f64,
}

impl Schedule {
    /// `min(start + round·step, max)`; computed directly so the cap is hit
    /// exactly instead of after accumulated rounding.
    fn at(&self, round: usize) -> f64 {
        (self.start + round as f64 * self.step).min(self.max)
    }
}

fn run_stage<T: Scalar, B: Backend<T> + ?Sized>(
    stage: Stage,
    schedule: Schedule,
    incumbent: (LatentVector<T>, T),
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
    trace: &mut SearchTrace<T>,
) -> Result<(LatentVector<T>, T)> {
    check_dims(target, backend, config)?;
    check_latent_dim(&incumbent.0, config)?;
    let threshold = T::lit(config.threshold);
    let unit = LatentVector::<T>::ones(config.latent_dim);
    let mut incumbent = incumbent;
    let mut round = 0;
    while incumbent.1 > threshold && round < config.max_rounds_per_stage {
        let scale = schedule.at(round);
        let bx = match stage {
            Stage::Coarse => shift_box(&unit.neg(), &unit, &incumbent.0, T::lit(scale))?,
            Stage::Fine => noise_box(&incumbent.0.neg(), &incumbent.0, &unit, T::lit(scale))?,
            Stage::Init => unreachable!("init is a single round"),
        };
        run_round(
            Round {
                stage,
                index: round,
                scale,
                bx: &bx,
            },
            &mut incumbent,
            target,
            backend,
            config,
            trace,
        )?;
        round += 1;
    }
    Ok(incumbent)
}

fn check_latent_dim<T: Scalar>(z: &LatentVector<T>, config: &SearchConfig) -> Result<()> {
    if z.dim() != config.latent_dim {
        return Err(Error::Dimension {
            what: "incumbent latent",
            expected: config.latent_dim,
            found: z.dim(),
        });
    }
    Ok(())
}

/// Rounds drawn from `[-I + α·z_opt, I + α·z_opt]`.
pub fn coarse_stage<T: Scalar, B: Backend<T> + ?Sized>(
    incumbent: LatentVector<T>,
    score: T,
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
    trace: &mut SearchTrace<T>,
) -> Result<(LatentVector<T>, T)> {
    let schedule = Schedule {
        start: config.alpha_start,
        step: config.alpha_step,
        max: config.alpha_max,
    };
    run_stage(
        Stage::Coarse,
        schedule,
        (incumbent, score),
        target,
        backend,
        config,
        trace,
    )
}

/// Rounds drawn from `[-z_opt + β·I, z_opt + β·I]`, swapped where inverted.
pub fn fine_stage<T: Scalar, B: Backend<T> + ?Sized>(
    incumbent: LatentVector<T>,
    score: T,
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
    trace: &mut SearchTrace<T>,
) -> Result<(LatentVector<T>, T)> {
    let schedule = Schedule {
        start: config.beta_start,
        step: config.beta_step,
        max: config.beta_max,
    };
    run_stage(
        Stage::Fine,
        schedule,
        (incumbent, score),
        target,
        backend,
        config,
        trace,
    )
}

/// Runs init, coarse and (optionally) fine stages.
pub fn search<T: Scalar, B: Backend<T> + ?Sized>(
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
) -> std::result::Result<SearchResult<T>, SearchAbort<T>> {
    let mut trace = SearchTrace::new();
    match run_search(target, backend, config, &mut trace) {
        Ok((best_latent, best_score, terminated_by)) => Ok(SearchResult {
            best_latent,
            best_score,
            terminated_by,
            trace,
        }),
        Err(error) => Err(SearchAbort { error, trace }),
    }
}

fn run_search<T: Scalar, B: Backend<T> + ?Sized>(
    target: &TargetIdentity<T>,
    backend: &B,
    config: &SearchConfig,
    trace: &mut SearchTrace<T>,
) -> Result<(LatentVector<T>, T, Termination)> {
    check_dims(target, backend, config)?;
    let threshold = T::lit(config.threshold);

    let (mut z, mut score) = init_stage(target, backend, config, trace)?;
    if score > threshold {
        (z, score) = coarse_stage(z, score, target, backend, config, trace)?;
    }
    if score > threshold && config.fine_tuning {
        (z, score) = fine_stage(z, score, target, backend, config, trace)?;
    }
    let terminated_by = if score <= threshold {
        Termination::Threshold
    } else if config.fine_tuning {
        Termination::RoundCapFine
    } else {
        Termination::RoundCapCoarse
    };

    let rescored = score_batch(std::slice::from_ref(&z), target, backend)?[0];
    if (rescored - score).abs() > T::lit(REEVALUATION_TOLERANCE) {
        return Err(Error::backend(format!(
            "re-evaluating the best latent gave {rescored}, search recorded {score}; \
             backend is not deterministic"
        )));
    }
    Ok((z, score, terminated_by))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Backend, BackendInfo, Embedding, ImageTensor};
    use crate::synthetic::{margin_latents, SyntheticModel, SyntheticSpec};
    use proptest::prelude::*;

    fn lv(v: &[f64]) -> LatentVector<f64> {
        LatentVector::new(v.to_vec()).unwrap()
    }

    fn model(d: usize) -> SyntheticModel<f64> {
        SyntheticModel::new(SyntheticSpec {
            latent_dim: d,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn planted_target(m: &SyntheticModel<f64>, seed: u64) -> TargetIdentity<f64> {
        let d = m.info().latent_dim;
        let z = margin_latents(d, 1, 0.0, &mut SeededRng::new(seed)).unwrap();
        TargetIdentity::new(m.generate_embed(&z).unwrap()).unwrap()
    }

    fn config(d: usize, n: usize, seed: u64) -> SearchConfig {
        SearchConfig {
            latent_dim: d,
            candidates_per_round: n,
            seed,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn select_optimal_examples() {
        let c: Vec<_> = (0..3).map(|i| lv(&[i as f64])).collect();
        assert_eq!(select_optimal(&c, &[0.9, 0.2, 0.5]).unwrap().0, 1);
        assert_eq!(select_optimal(&c[..2], &[0.3, 0.3]).unwrap().0, 0);
        assert!(select_optimal::<f64>(&[], &[]).is_err());
        assert!(select_optimal(&c, &[0.1]).is_err());
        assert!(select_optimal(&c, &[0.1, f64::NAN, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn select_optimal_matches_linear_scan(scores in prop::collection::vec(0u8..20, 1..200)) {
            let scores: Vec<f64> = scores.into_iter().map(|s| s as f64 / 4.0).collect();
            let c: Vec<_> = (0..scores.len()).map(|i| lv(&[i as f64])).collect();
            let mut expect = 0;
            let mut min = f64::INFINITY;
            for (i, s) in scores.iter().enumerate() {
                if *s < min {
                    min = *s;
                    expect = i;
                }
            }
            prop_assert_eq!(select_optimal(&c, &scores).unwrap().0, expect);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = [
            SearchConfig {
                candidates_per_round: 0,
                ..Default::default()
            },
            SearchConfig {
                threshold: 0.0,
                ..Default::default()
            },
            SearchConfig {
                alpha_start: 0.5,
                alpha_max: 0.4,
                ..Default::default()
            },
            SearchConfig {
                beta_max: 1.5,
                ..Default::default()
            },
            SearchConfig {
                alpha_step: 0.0,
                ..Default::default()
            },
            SearchConfig {
                max_rounds_per_stage: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_json_aliases() {
        let c: SearchConfig =
            serde_json::from_str(r#"{"N": 64, "T": 0.25, "D": 8, "seed": 3}"#).unwrap();
        assert_eq!(c.candidates_per_round, 64);
        assert_eq!(c.threshold, 0.25);
        assert_eq!(c.latent_dim, 8);
        assert_eq!(c.alpha_start, 0.1);
        assert!(serde_json::from_str::<SearchConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn init_stage_returns_min_of_its_candidates() {
        let m = model(8);
        let target = planted_target(&m, 100);
        let cfg = config(8, 256, 5);
        let mut trace = SearchTrace::new();
        let (z, score) = init_stage(&target, &m, &cfg, &mut trace).unwrap();

        // recompute the same draws independently
        let mut rng = SeededRng::new(5).substream(0);
        let cands = sample_box(&SamplingBox::symmetric_unit(8), 256, &mut rng).unwrap();
        let embs = m.generate_embed(&cands).unwrap();
        let scores: Vec<f64> = embs
            .iter()
            .map(|e| crate::backend::identity_score(e, &target).unwrap())
            .collect();
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(score, min);
        assert!(cands.contains(&z));
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.records()[0].candidates_evaluated, 256);
    }

    #[test]
    fn init_stage_single_candidate_and_determinism() {
        let m = model(8);
        let target = planted_target(&m, 101);
        let cfg = config(8, 1, 9);
        let mut rng = SeededRng::new(9).substream(0);
        let only = sample_box(&SamplingBox::symmetric_unit(8), 1, &mut rng).unwrap();
        let (z, _) = init_stage(&target, &m, &cfg, &mut SearchTrace::new()).unwrap();
        assert_eq!(z, only[0]);
        let (z2, _) = init_stage(&target, &m, &cfg, &mut SearchTrace::new()).unwrap();
        assert_eq!(z, z2);
    }

    #[test]
    fn stages_skip_when_already_below_threshold() {
        let m = model(8);
        let target = planted_target(&m, 102);
        let cfg = config(8, 16, 1);
        let z = LatentVector::ones(8);
        let mut trace = SearchTrace::new();
        let (z1, s1) = coarse_stage(z.clone(), 0.1, &target, &m, &cfg, &mut trace).unwrap();
        let (z2, s2) = fine_stage(z.clone(), 0.4, &target, &m, &cfg, &mut trace).unwrap();
        assert!(trace.is_empty());
        assert_eq!((z1, s1), (z.clone(), 0.1));
        assert_eq!((z2, s2), (z, 0.4));
    }

    #[test]
    fn coarse_stage_reaches_planted_optimum() {
        let m = model(8);
        for seed in 0..10 {
            let target = planted_target(&m, 200 + seed);
            let cfg = config(8, 64, seed);
            let mut trace = SearchTrace::new();
            let (z0, s0) = init_stage(&target, &m, &cfg, &mut trace).unwrap();
            let (_, s) = coarse_stage(z0, s0, &target, &m, &cfg, &mut trace).unwrap();
            assert_eq!(s, 0.0, "seed {seed}");
        }
    }

    /// Scores every latent by its first coordinate; the incumbent stays put
    /// whenever a round cannot beat it.
    struct FirstCoordinate(BackendInfo);

    impl Backend<f64> for FirstCoordinate {
        fn info(&self) -> &BackendInfo {
            &self.0
        }
        fn generate(&self, z: &LatentVector<f64>) -> Result<ImageTensor<f64>> {
            ImageTensor::new([1, 1, 1], vec![(z[0] / 8.0 + 0.5).clamp(0.0, 1.0)])
        }
        fn embed(&self, x: &ImageTensor<f64>) -> Result<Embedding<f64>> {
            Embedding::new(vec![(x.values()[0] - 0.5) * 8.0])
        }
    }

    fn first_coordinate_backend(d: usize) -> FirstCoordinate {
        FirstCoordinate(BackendInfo {
            latent_dim: d,
            embedding_dim: 1,
            image_shape: [1, 1, 1],
            backend_name: "first-coordinate".into(),
            supports_fused_generate_embed: false,
            concurrent: false,
        })
    }

    #[test]
    fn unbeaten_incumbent_is_kept() {
        let b = first_coordinate_backend(2);
        // target at -4; incumbent at -3.5 scores 0.25, while the round's box
        // [-1.35, 0.65] cannot get within 2.65 of the target
        let target = TargetIdentity::new(vec![Embedding::new(vec![-4.0]).unwrap()]).unwrap();
        let cfg = SearchConfig {
            threshold: 0.01,
            max_rounds_per_stage: 1,
            ..config(2, 32, 4)
        };
        let inc = lv(&[-3.5, 0.0]);
        let mut trace = SearchTrace::new();
        let (z, s) = coarse_stage(inc.clone(), 0.25, &target, &b, &cfg, &mut trace).unwrap();
        assert_eq!((z, s), (inc, 0.25));
        assert_eq!(trace.records()[0].best_score_after, 0.25);
    }

    #[test]
    fn fine_stage_beta_zero_samples_symmetric_box() {
        let b = first_coordinate_backend(2);
        let target = TargetIdentity::new(vec![Embedding::new(vec![100.0]).unwrap()]).unwrap();
        let cfg = SearchConfig {
            beta_start: 0.0,
            max_rounds_per_stage: 1,
            ..config(2, 64, 8)
        };
        let inc = lv(&[-0.3, 0.05]);
        let (z, _) = fine_stage(inc, 1e9, &target, &b, &cfg, &mut SearchTrace::new()).unwrap();
        assert!(z[0].abs() <= 0.3 && z[1].abs() <= 0.05);
    }

    #[test]
    fn fine_stage_never_increases_score() {
        let m = model(64);
        for seed in 0..20 {
            let target = planted_target(&m, 300 + seed);
            let cfg = SearchConfig {
                max_rounds_per_stage: 5,
                ..config(64, 32, seed)
            };
            let mut trace = SearchTrace::new();
            let (z, s) = init_stage(&target, &m, &cfg, &mut trace).unwrap();
            let (_, s2) = fine_stage(z, s, &target, &m, &cfg, &mut trace).unwrap();
            assert!(s2 <= s);
            assert_eq!(trace.first_increase(), None);
        }
    }

    #[test]
    fn search_finds_planted_target_at_d8() {
        let m = model(8);
        let target = planted_target(&m, 7);
        let r = search(&target, &m, &config(8, 64, 7)).unwrap();
        assert_eq!(r.best_score, 0.0);
        assert_eq!(r.terminated_by, Termination::Threshold);
        assert_eq!(
            r.trace.total_evaluations(),
            64 * (1 + r.trace.rounds(Stage::Coarse) + r.trace.rounds(Stage::Fine))
        );
    }

    #[test]
    fn loose_threshold_stops_after_init() {
        let m = model(8);
        let target = planted_target(&m, 8);
        let cfg = SearchConfig {
            threshold: 1e6,
            ..config(8, 16, 1)
        };
        let r = search(&target, &m, &cfg).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.terminated_by, Termination::Threshold);
    }

    #[test]
    fn round_caps_are_reported() {
        let m = model(64);
        let target = planted_target(&m, 9);
        let cfg = SearchConfig {
            threshold: 1e-12,
            max_rounds_per_stage: 2,
            ..config(64, 8, 2)
        };
        let r = search(&target, &m, &cfg).unwrap();
        assert_eq!(r.terminated_by, Termination::RoundCapFine);
        assert_eq!(r.trace.len(), 5);
        let cfg = SearchConfig {
            fine_tuning: false,
            ..cfg
        };
        let r = search(&target, &m, &cfg).unwrap();
        assert_eq!(r.terminated_by, Termination::RoundCapCoarse);
        assert_eq!(r.trace.len(), 3);
    }

    #[test]
    fn alpha_schedule_caps_at_max() {
        let m = model(64);
        let target = planted_target(&m, 10);
        let cfg = SearchConfig {
            threshold: 1e-12,
            max_rounds_per_stage: 14,
            fine_tuning: false,
            ..config(64, 4, 3)
        };
        let r = search(&target, &m, &cfg).unwrap();
        let alphas: Vec<f64> = r.trace.records()[1..]
            .iter()
            .map(|r| r.alpha_or_beta)
            .collect();
        assert!((alphas[0] - 0.1).abs() < 1e-12);
        assert!((alphas[8] - 0.9).abs() < 1e-12);
        assert!(alphas[9..].iter().all(|a| *a == 1.0));
    }

    #[test]
    fn dimension_mismatch_rejected_before_backend_call() {
        let m = crate::backend::CountingBackend::new(model(8));
        let target = planted_target(m.inner(), 11);
        let abort = search(&target, &m, &config(16, 8, 0)).unwrap_err();
        assert!(matches!(abort.error, Error::Dimension { .. }));
        assert!(abort.trace.is_empty());
        assert_eq!(m.evaluations(), 0);
    }

    struct FailAfter {
        inner: SyntheticModel<f64>,
        calls: std::sync::atomic::AtomicUsize,
        limit: usize,
    }

    impl Backend<f64> for FailAfter {
        fn info(&self) -> &BackendInfo {
            self.inner.info()
        }
        fn generate(&self, z: &LatentVector<f64>) -> Result<ImageTensor<f64>> {
            self.inner.generate(z)
        }
        fn embed(&self, x: &ImageTensor<f64>) -> Result<Embedding<f64>> {
            self.inner.embed(x)
        }
        fn generate_embed(&self, zs: &[LatentVector<f64>]) -> Result<Vec<Embedding<f64>>> {
            let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if n >= self.limit {
                return Err(Error::backend("model crashed"));
            }
            self.inner.generate_embed(zs)
        }
    }

    #[test]
    fn backend_failure_preserves_partial_trace() {
        let b = FailAfter {
            inner: model(64),
            calls: Default::default(),
            limit: 3,
        };
        let target = planted_target(&b.inner, 12);
        let cfg = SearchConfig {
            threshold: 1e-12,
            ..config(64, 16, 0)
        };
        let abort = search(&target, &b, &cfg).unwrap_err();
        assert_eq!(abort.trace.len(), 3);
        assert!(matches!(abort.error, Error::Backend { index: Some(0), .. }));
    }

    #[test]
    fn serialization_is_deterministic() {
        let m = model(8);
        let target = planted_target(&m, 13);
        let a = serde_json::to_string(&search(&target, &m, &config(8, 32, 4)).unwrap()).unwrap();
        let b = serde_json::to_string(&search(&target, &m, &config(8, 32, 4)).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(r#"{"best_latent":["#));
        let back: SearchResult<f64> = serde_json::from_str(&a).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }
}
