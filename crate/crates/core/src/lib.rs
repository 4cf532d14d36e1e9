//! Stochastic ODE and PDE integration on space-time lattices.
//!
//! Fields live in cells of complex arrays `[components, space..., ensemble]`.
//! Linear terms are integrated exactly in the interaction picture using FFTs
//! (periodic) or sine/cosine transforms (Dirichlet and Robin boundaries);
//! everything else goes through one of the stepping methods. Each run is
//! repeated at half the step with shared noise to estimate step errors, and
//! sub-ensemble averages give sampling errors.

pub mod advanced;
pub mod cli;
pub mod engine;
pub mod error;
pub mod errors;
pub mod field;
pub mod findiff;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod randoms;
pub mod registry;
pub mod results;
pub mod spectral;
pub mod stepper;
pub mod trig;

pub use error::{Result, SimError};
pub use field::{Cells, Field};
pub use num_complex::Complex64;
