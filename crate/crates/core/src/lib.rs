//! Interacting diffusions on Erdős–Rényi interaction graphs, coupled to
//! their mean-field counterpart and to the limiting Fokker–Planck equation.
//!
//! The crate integrates two `n`-particle systems driven by the *same*
//! Brownian increments:
//!
//! ```text
//! quenched:  dθ_i = F(θ_i) dt + (1/(n p)) Σ_{j: ξ_ij=1} Γ(θ_i, θ_j) dt + σ(θ_i) dB_i
//! annealed:  dθ̄_i = F(θ̄_i) dt + (1/n)     Σ_j          Γ(θ̄_i, θ̄_j) dt + σ(θ̄_i) dB_i
//! ```
//!
//! where `ξ` is the adjacency of a directed Erdős–Rényi graph with edge
//! probability `p` (self-loops included). Around the integrator sit the
//! diagnostics that quantify how far the diluted system strays from the
//! complete-graph one: pathwise coupling gaps with a Gronwall-type
//! comparison, degree-discrepancy concentration on the graph side,
//! Wasserstein/bounded-Lipschitz distances between empirical measures, a
//! mass-conservative finite-volume solver for the limiting McKean–Vlasov
//! equation, and Monte Carlo probes of the exponential-moment condition
//! used to transfer large-deviation bounds between the two systems.

// `!(x > 0.0)`-style guards are deliberate: they reject NaN, which the
// suggested `x <= 0.0` silently accepts. Indexed loops keep paired state
// arrays in lockstep in the numerical kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod graph;
pub mod ldp;
pub mod measure;
pub mod model;
pub mod pde;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use graph::{DegreeReport, ErGraph};
pub use measure::EmpiricalMeasure;
pub use model::{Geometry, ModelSpec};
pub use pde::{DensityGrid, PdeConfig};
pub use sde::{CoupledPaths, CouplingDiagnostics, SimConfig};
