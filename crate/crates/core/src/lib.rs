//! Reduced-order nonlinear models of a grid-synchronized voltage-source
//! converter and its transient frequency-stability margins under grid
//! voltage dips.

pub mod basin;
pub mod config;
pub mod eap;
pub mod error;
pub mod io;
pub mod numerics;
pub mod params;
pub mod pcl;
pub mod pll;
pub mod portrait;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
