//! Mixed-ADC massive MIMO uplink toolkit.

pub mod error;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod montecarlo;
pub mod orderstats;
pub mod quadrature;
pub mod quantization;
pub mod special;
pub mod spectral_efficiency;
pub mod sysmodel;

pub use error::{Error, Result};
