//! Dirichlet and multinomial regression for compositional data, with an
//! optional spatial autoregressive lag `M = I - rho W`.

pub mod compdata;
pub mod dirichlet;
pub mod error;
pub mod metrics;
pub mod multinomial;
pub mod optim;
pub mod sar;
pub mod simulate;
pub mod spatial;
pub mod specfun;

pub use error::{Error, Result};
