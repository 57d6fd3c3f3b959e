//! Norms, envelopes, embeddings and certificates in Lipschitz free
//! p-spaces over finite pointed quasimetric spaces, `0 < p <= 1`.
//!
//! A [`QSpace`] is a finite set of labelled points with a symmetric distance
//! matrix whose `p`-th power is a metric; index 0 is the base point. A
//! [`Molecule`] is a zero-sum function on the points, and its free p-norm is
//! the least `l_p` cost of writing it as a combination of normalized
//! dipoles `(chi_x - chi_y) / dist(x, y)`.

pub mod envelope;
pub mod error;
pub mod freenorm;
pub mod io;
pub mod isometry;
pub mod molecule;
pub mod number;
pub mod pbody;
pub mod reproduce;
pub mod scalar;
pub mod space;
pub mod wasserstein;

pub use envelope::{envelope_norm, q_envelope, EnvelopeResult};
pub use error::{Error, Result};
pub use freenorm::{exact_pnorm, norm, pnorm_bounds, subset_norm_compare, Budget, LowerWitness, NormCertificate};
pub use molecule::{Atom, Decomposition, Molecule};
pub use number::{Exponent, Rational};
pub use pbody::{pbody_membership, pbody_minkowski, zeroone_lower_bound, PBodyValue};
pub use space::{QSpace, Violation};
pub use wasserstein::{f1_norm, lip_lower_bound, DualPotential, TransportPlan, W1Certificate};
