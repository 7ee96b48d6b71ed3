//! Run manifests: which backend to drive, which identity to look for, and
//! the search parameters.
//!
//! ```json
//! {
//!   "backend": {"type": "synthetic", "D": 8, "m": 32, "k": 16, "seed": 42},
//!   "target":  {"type": "planted", "seed": 7},
//!   "search":  {"N": 64, "T": 0.4},
//!   "seed": 1,
//!   "out": "runs/d8"
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Every referenced
//! file is read and parsed before the backend is opened.
//!
//! Seed precedence: `--seed` on the command line, then the manifest's
//! top-level `seed`, then `search.seed`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use latentprobe_core::backend::{Backend, Reduction};
use latentprobe_core::bridge::{BridgeClient, BridgeConfig};
use latentprobe_core::lvec::read_latents;
use latentprobe_core::report::decode_ppm;
use latentprobe_core::search::SearchConfig;
use latentprobe_core::synthetic::{margin_latents, SyntheticSpec};
use latentprobe_core::{
    Embedding, ImageTensor, LatentVector, SeededRng, SyntheticModel, TargetIdentity,
};
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BackendSpec {
    Synthetic(SyntheticSpec),
    Bridge(BridgeConfig),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Synthetic(SyntheticSpec::default())
    }
}

impl BackendSpec {
    pub fn open(&self) -> Result<Box<dyn Backend<f64>>> {
        Ok(match self {
            BackendSpec::Synthetic(spec) => {
                Box::new(SyntheticModel::new(*spec).context("synthetic: building model")?)
            }
            BackendSpec::Bridge(config) => {
                Box::new(BridgeClient::connect(config.clone()).context("bridge: connecting")?)
            }
        })
    }
}

/// Where the target identity's reference embeddings come from.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    /// Embeddings of `count` latents drawn with `seed`; only meaningful for
    /// backends that can generate.
    Planted {
        seed: u64,
        #[serde(default = "one")]
        count: usize,
    },
    /// Latent files whose vectors are embedding vectors.
    Embeddings { paths: Vec<PathBuf> },
    /// Latent files whose vectors are rendered and embedded by the backend.
    Latents { paths: Vec<PathBuf> },
    /// `P6` pixmaps embedded by the backend.
    Images { paths: Vec<PathBuf> },
}

fn one() -> usize {
    1
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Planted { seed: 0, count: 1 }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    backend: BackendSpec,
    #[serde(default)]
    target: TargetSpec,
    #[serde(default)]
    search: Map<String, Value>,
    #[serde(default)]
    reduction: Reduction,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub backend: BackendSpec,
    pub target: TargetSpec,
    /// Search section as written; `latent_dim` falls back to the backend's.
    pub search: Map<String, Value>,
    pub reduction: Reduction,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self::from_raw(RawManifest::default(), Path::new("."))
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read(path).with_context(|| format!("manifest: cannot read {}", path.display()))?;
        let raw: RawManifest = serde_json::from_slice(&text)
            .with_context(|| format!("manifest: cannot parse {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok(Self::from_raw(raw, dir))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn from_raw(raw: RawManifest, dir: &Path) -> Self {
        let rebase = |p: PathBuf| if p.is_absolute() { p } else { dir.join(p) };
        let target = match raw.target {
            TargetSpec::Embeddings { paths } => TargetSpec::Embeddings {
                paths: paths.into_iter().map(rebase).collect(),
            },
            TargetSpec::Latents { paths } => TargetSpec::Latents {
                paths: paths.into_iter().map(rebase).collect(),
            },
            TargetSpec::Images { paths } => TargetSpec::Images {
                paths: paths.into_iter().map(rebase).collect(),
            },
            planted => planted,
        };
        Manifest {
            backend: raw.backend,
            target,
            search: raw.search,
            reduction: raw.reduction,
            out: raw.out.map(rebase),
            seed: raw.seed,
        }
    }

    /// The effective seed given an optional command-line override.
    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.seed)
            .or_else(|| self.search.get("seed").and_then(Value::as_u64))
            .unwrap_or(0)
    }

    /// Search parameters with the effective seed and, unless given, the
    /// backend's latent width.
    pub fn search_config(&self, latent_dim: usize, seed: u64) -> Result<SearchConfig> {
        let mut section = self.search.clone();
        if !section.contains_key("latent_dim") && !section.contains_key("D") {
            section.insert("latent_dim".into(), latent_dim.into());
        }
        section.insert("seed".into(), seed.into());
        let config: SearchConfig = serde_json::from_value(Value::Object(section))
            .context("manifest: invalid search section")?;
        config
            .validate()
            .context("manifest: invalid search section")?;
        Ok(config)
    }
}

/// Target data read from disk, ready to be turned into embeddings.
pub enum LoadedTarget {
    Planted { seed: u64, count: usize },
    Embeddings(Vec<Embedding>),
    Latents(Vec<LatentVector>),
    Images(Vec<ImageTensor>),
}

impl LoadedTarget {
    pub fn load(spec: &TargetSpec) -> Result<Self> {
        let read_all = |paths: &[PathBuf]| -> Result<Vec<LatentVector>> {
            if paths.is_empty() {
                bail!("manifest: target lists no files");
            }
            let mut out = Vec::new();
            for p in paths {
                out.extend(
                    read_latents(p)
                        .with_context(|| format!("lvec: cannot load {}", p.display()))?,
                );
            }
            Ok(out)
        };
        Ok(match spec {
            TargetSpec::Planted { seed, count } => {
                if *count == 0 {
                    bail!("manifest: planted target needs count >= 1");
                }
                LoadedTarget::Planted {
                    seed: *seed,
                    count: *count,
                }
            }
            TargetSpec::Embeddings { paths } => LoadedTarget::Embeddings(
                read_all(paths)?
                    .into_iter()
                    .map(|v| Embedding::new(v.into_vec()))
                    .collect::<latentprobe_core::Result<_>>()?,
            ),
            TargetSpec::Latents { paths } => LoadedTarget::Latents(read_all(paths)?),
            TargetSpec::Images { paths } => {
                if paths.is_empty() {
                    bail!("manifest: target lists no files");
                }
                LoadedTarget::Images(
                    paths
                        .iter()
                        .map(|p| {
                            let bytes = fs::read(p)
                                .with_context(|| format!("report: cannot read {}", p.display()))?;
                            decode_ppm(&bytes)
                                .with_context(|| format!("report: cannot parse {}", p.display()))
                        })
                        .collect::<Result<_>>()?,
                )
            }
        })
    }

    /// The planted latents, if this target plants them.
    pub fn planted_latents(&self, latent_dim: usize) -> Result<Option<Vec<LatentVector>>> {
        match self {
            LoadedTarget::Planted { seed, count } => Ok(Some(margin_latents(
                latent_dim,
                *count,
                0.0,
                &mut SeededRng::new(*seed),
            )?)),
            _ => Ok(None),
        }
    }

    pub fn identity(
        &self,
        backend: &dyn Backend<f64>,
        reduction: Reduction,
    ) -> Result<TargetIdentity> {
        let embeddings = match self {
            LoadedTarget::Planted { .. } => {
                let zs = self.planted_latents(backend.info().latent_dim)?.unwrap();
                backend
                    .generate_embed(&zs)
                    .context("backend: embedding planted target")?
            }
            LoadedTarget::Embeddings(e) => e.clone(),
            LoadedTarget::Latents(zs) => backend
                .generate_embed(zs)
                .context("backend: embedding target latents")?,
            LoadedTarget::Images(images) => images
                .iter()
                .map(|x| backend.embed(x))
                .collect::<latentprobe_core::Result<_>>()
                .context("backend: embedding target images")?,
        };
        Ok(TargetIdentity::new(embeddings)
            .context("backend: building target identity")?
            .with_reduction(reduction))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use latentprobe_core::bridge::Transport;

    fn parse(json: &str) -> Manifest {
        Manifest::from_raw(serde_json::from_str(json).unwrap(), Path::new("/m"))
    }

    #[test]
    fn empty_manifest_uses_defaults() {
        let m = parse("{}");
        assert_eq!(m.backend, BackendSpec::default());
        assert_eq!(m.target, TargetSpec::Planted { seed: 0, count: 1 });
        assert_eq!(m.seed(None), 0);
        let c = m.search_config(64, 0).unwrap();
        assert_eq!(c.latent_dim, 64);
        assert_eq!(c.candidates_per_round, 1000);
    }

    #[test]
    fn backend_forms() {
        let m = parse(r#"{"backend":{"type":"synthetic","D":8}}"#);
        assert_eq!(
            m.backend,
            BackendSpec::Synthetic(SyntheticSpec {
                latent_dim: 8,
                ..SyntheticSpec::default()
            })
        );
        let m = parse(
            r#"{"backend":{"type":"bridge","transport":"tcp","address":"h:1","max_batch":8}}"#,
        );
        match m.backend {
            BackendSpec::Bridge(c) => {
                assert_eq!(
                    c.transport,
                    Transport::Tcp {
                        address: "h:1".into()
                    }
                );
                assert_eq!(c.max_batch, 8);
            }
            other => panic!("{other:?}"),
        }
        assert!(
            serde_json::from_str::<RawManifest>(r#"{"backend":{"type":"synthetic","Q":1}}"#)
                .is_err()
        );
    }

    #[test]
    fn relative_paths_follow_the_manifest() {
        let m =
            parse(r#"{"target":{"type":"embeddings","paths":["a.lvec","/abs.lvec"]},"out":"o"}"#);
        assert_eq!(
            m.target,
            TargetSpec::Embeddings {
                paths: vec!["/m/a.lvec".into(), "/abs.lvec".into()]
            }
        );
        assert_eq!(m.out, Some("/m/o".into()));
    }

    #[test]
    fn seed_precedence() {
        let m = parse(r#"{"seed":5,"search":{"seed":9}}"#);
        assert_eq!(m.seed(Some(1)), 1);
        assert_eq!(m.seed(None), 5);
        assert_eq!(parse(r#"{"search":{"seed":9}}"#).seed(None), 9);
        assert_eq!(m.search_config(8, 1).unwrap().seed, 1);
    }

    #[test]
    fn explicit_search_dim_wins_and_is_validated() {
        let m = parse(r#"{"search":{"D":12,"N":4}}"#);
        assert_eq!(m.search_config(8, 0).unwrap().latent_dim, 12);
        assert!(parse(r#"{"search":{"N":0}}"#).search_config(8, 0).is_err());
        assert!(parse(r#"{"search":{"bogus":1}}"#)
            .search_config(8, 0)
            .is_err());
    }
}
