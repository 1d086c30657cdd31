//! Estimation of stationary and time-varying k-order mixed graphical
//! models (MGMs) and mixed vector autoregressive (mVAR) models over
//! datasets mixing Gaussian, Poisson and categorical variables, via
//! penalized nodewise regression. Includes samplers for every model
//! class, prediction with nodewise error tables, and CSV/JSON I/O.

pub mod design;
pub mod error;
pub mod glm;
pub mod mgm;
pub mod model;
pub mod mvar;
pub mod sample;
pub mod select;

pub use error::{Error, Result};
pub use model::{Dataset, FactorModel, MgmFit, MvarFit, TvFit, VarKind, VariableSpec};
