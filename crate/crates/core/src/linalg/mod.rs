//! Dense real64 linear algebra for subspace pruning.

pub mod cache;
mod eigen;
mod gram;
mod ldl;
mod perm;
mod tensor;

pub use eigen::{sym_eigen, sym_inverse_sqrt, sym_sqrt, SymEigen, DEFAULT_EIG_FLOOR};
pub use gram::{accumulate_gram, accumulate_gram_with, GramMatrix};
pub use ldl::{
    invert_unit_lower_triangular, ldl_decompose, ldl_decompose_permuted, SubspaceFactor,
    DEFAULT_RIDGE_SCALE, NEGATIVE_PIVOT_TOL, PIVOT_FLOOR,
};
pub use perm::{apply_permutation, permute_symmetric, Axis, Permutation};
pub use tensor::Tensor2D;
