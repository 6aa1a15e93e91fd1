//! Seedable, splittable random streams and the Midzuno-Sen estimator.
//!
//! [`RandomStream`] is an immutable value identifying a pseudo-random
//! sequence; child streams derived with distinct indices are independent, so
//! workers can draw in parallel without coordination and replay bit-for-bit.
//! [`midzuno_sen_inverse`] estimates the reciprocal of the expected capped
//! weight ratio `1 / E_t[w̄/W | X = x]` without bias, which is what the
//! PointNCIS estimator multiplies each positive sample by.

mod midzuno;
mod stream;

pub use midzuno::{midzuno_sen_inverse, InverseMassEstimate, McError, DEFAULT_ACCEPTANCE_BUDGET};
pub(crate) use midzuno::midzuno_sen_prepared;
pub use stream::{RandomStream, StreamRng};
