//! Ground-state quantum Monte Carlo for bipartite Heisenberg antiferromagnets
//! in the loop representation.
//!
//! The sampler expands `(-H)^{2B} |+^N>` into strings of local operators and
//! represents each string as a set of space-time loops. A configuration `x`
//! (a length-`2B` sequence of operator slots) carries weight
//! `alpha^{L(x)} * prod_k T(x_k)` where `L(x)` is the number of loops and `T`
//! assigns a positive weight to each slot; `alpha = 2` is the physical case
//! for spin-1/2. A single-slot Metropolis chain samples that distribution and
//! an insertion estimator recovers local observables and the ground energy.
//!
//! Alongside the sampler the crate ships exact cross-checks and chain
//! diagnostics:
//!
//! - [`oracle`]: brute-force consistency counting (the `2^L` identity), dense
//!   and symmetry-reduced exact diagonalization, exact power-expansion
//!   partition values, and low-energy leakage of the projected state.
//! - [`analysis`]: exact transition matrices with rational detailed-balance
//!   checks, spectral gaps, left-to-right canonical paths with an invertible
//!   encoding, congestion bounds, loop-topology sweeps, the star-graph Potts
//!   transfer-matrix identity, and the cycle-graph configurations that break
//!   the encoding bound.
//!
//! Each major capability has a runnable example under `examples/`; the
//! `loopqmc` binary exposes the same operations as subcommands emitting JSON
//! or CSV.

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod estimators;
pub mod hamiltonian;
pub mod loopcfg;
pub mod oracle;
mod util;

pub use hamiltonian::{Alphabet, BipartiteModel, OperatorSlot, SlotKind, Sublattice};
pub use loopcfg::{Configuration, LoopDecomposition, LoopKind};
