//! Interacting Brownian particles: sampling, dynamics, scaling limits and
//! the analytic expansions used to check them.

pub mod configuration;
pub mod expansion;
pub mod gibbs;
pub mod langevin;
pub mod oracle;
pub mod oulimit;
pub mod potentials;
pub mod quadrature;
pub mod scaling;
pub mod stats;
