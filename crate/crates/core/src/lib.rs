//! Increments, gradients and the MW operator over affine iterated function
//! systems, with invariant-measure checks for the induced expanding map.
// Range checks are written as `!(v > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod gradient;
pub mod ifs;
pub mod increment;
pub mod measure;
pub mod mw;
pub mod numeric;
mod sampling;

pub use error::{Error, Result};
pub use fields::{make_multilinear, restrict, FieldSpec, ScalarField, Smoothness};
pub use geometry::{AxisBox, BoxKind, CornerMask, IndexShape, MultilinearForm, Point};
pub use ifs::{make_padic, AffineIFS, AffineMap, MultiIndexMap, Tile};
pub use measure::DistributionMeasure;
