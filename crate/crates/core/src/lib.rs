//! Shapley attributions and second-order Shapley-Taylor decompositions for
//! tree ensembles and synthetic models.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64`, which is what the CSV and JSON front ends use. Exact
//! rational arithmetic is available through [`Rational64`].

pub mod attribution;
pub mod coredata;
pub mod error;
pub mod export;
pub mod importance;
pub mod interaction;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod treemodel;
pub mod valuefn;

pub use error::{Error, Result};
pub use num_rational::Rational64;
pub use scalar::Scalar;
pub use valuefn::{Coalition, Explainer, FnModel, Model};

pub type Cell = coredata::Cell<f64>;
pub type FeatureTable = coredata::Table<f64>;
pub type TreeEnsemble = treemodel::Ensemble<f64>;
pub type ValueContext<'e, 'a> = valuefn::ValueContext<'e, 'a, f64>;
pub type AttributionResult = attribution::AttributionResult<f64>;
pub type CohortAttributions = attribution::CohortAttributions<f64>;
pub type InteractionMatrix = interaction::InteractionMatrix<f64>;
pub type CohortInteractions = interaction::CohortInteractions<f64>;
pub type ImportanceEntry = importance::ImportanceEntry<f64>;
pub type SeparableSpec = synthetic::SeparableSpec<f64>;

pub type FeatureTable32 = coredata::Table<f32>;
pub type TreeEnsemble32 = treemodel::Ensemble<f32>;

/// Interaction matrix with exact rational entries.
pub type ExactInteractionMatrix = interaction::InteractionMatrix<Rational64>;
pub type ExactSeparableSpec = synthetic::SeparableSpec<Rational64>;
