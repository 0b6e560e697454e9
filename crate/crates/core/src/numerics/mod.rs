//! Numerical building blocks shared by every estimator.

pub mod dist;
pub mod quadrature;
pub mod rng;
pub mod solve;
pub mod special;

pub use dist::{
    chi_square_cdf, chi_square_quantile, chi_square_sf, noncentral_t_cdf, normal_cdf,
    normal_quantile, normal_sf, student_t_cdf, student_t_quantile,
};
pub use rng::{sample_noncentral_t, RngStream, StreamRng};
pub use solve::{
    expand_upper, find_root, maximize_1d, maximum_search, root_search, try_find_root,
    try_maximize_1d, Bracket, Maximum, Root,
};
pub use special::{hedges_j, log_gamma};
