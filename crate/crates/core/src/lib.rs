//! Latent-space identity search.
//!
//! Given reference embeddings of a target identity, [`search::search`] looks
//! for a generator input whose output embeds close to the target (squared L2)
//! using a greedy three-stage box search. [`attribute`] edits a found latent
//! by averaged-exemplar vector arithmetic. Backends implement
//! [`backend::Backend`]; [`synthetic`] provides an exactly analysable one and
//! [`bridge`] drives external model servers over a JSON-lines protocol.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the working precision to `f64`.

pub mod attribute;
pub mod backend;
pub mod bridge;
pub mod error;
pub mod latent;
pub mod lvec;
pub mod probe;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod synthetic;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;

pub type LatentVector = latent::LatentVector<f64>;
pub type SamplingBox = latent::SamplingBox<f64>;
pub type Embedding = backend::Embedding<f64>;
pub type ImageTensor = backend::ImageTensor<f64>;
pub type TargetIdentity = backend::TargetIdentity<f64>;
pub type SearchResult = search::SearchResult<f64>;
pub type SearchTrace = search::SearchTrace<f64>;
pub type AttributeRecipe = attribute::AttributeRecipe<f64>;
pub type SyntheticModel = synthetic::SyntheticModel<f64>;

pub type LatentVector32 = latent::LatentVector<f32>;
pub type Embedding32 = backend::Embedding<f32>;
pub type SyntheticModel32 = synthetic::SyntheticModel<f32>;
