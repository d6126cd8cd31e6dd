pub mod conv;
pub mod norm;
pub mod pointwise;
