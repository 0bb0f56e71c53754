//! Target-rate least-squares power allocation over parallel Gaussian channels.
//!
//! Given gain-to-noise ratios `a_i`, target spectral efficiencies `T_i` and a
//! total power budget, [`solver::solve`] minimizes
//! `sum_i (log2(1 + a_i P_i) - T_i)^2` subject to `sum_i P_i <= P_tot` and
//! `P_i >= 0`. The optimum never overshoots a target, and leaves power unused
//! when the budget covers every target.
//!
//! Around the solver sit classical baselines ([`baselines`]), an independent
//! verification path ([`oracle`]), seeded Rayleigh gains ([`fading`]) and an
//! experiment harness that writes plot-ready CSV ([`experiments`]).
//!
//! ```
//! use targetrate::model::{default_channels, Problem, Regime};
//! use targetrate::solver::solve;
//!
//! let problem = Problem::new(default_channels(), 10.0).unwrap();
//! let alloc = solve(&problem).unwrap();
//! assert_eq!(alloc.regime, Regime::CaseB);
//! assert!(alloc.rates.iter().all(|&r| r <= 3.0 + 1e-9));
//! ```

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod fading;
pub mod lambertw;
pub mod model;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Allocation, ChannelSet, Problem, Regime};
