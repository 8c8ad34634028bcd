//! Dense linear algebra, softmax and entropy helpers shared by every other module.

mod matrix;
mod prob;
mod qr;

pub use matrix::{argmax, dot, frob_and_row_norms, norm2, Matrix};
pub use prob::{entropy, log_sum_exp, softmax, softmax_entropy, softmax_into, ProbVector};
pub use qr::{least_squares, LeastSquares, PivotedQr};
