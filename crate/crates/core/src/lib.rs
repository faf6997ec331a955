//! Foliations of asymptotically flat initial data by surfaces of prescribed
//! mean curvature `H ± P = h`, computed as radial graphs over a spectral
//! sphere grid.

pub mod ambient;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod io;
pub mod momentum;
pub mod solver;
pub mod sphere;
