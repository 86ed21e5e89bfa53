//! Consistent multi-label classification for the instance-wise F_β measure.
//!
//! The F_β loss of a prediction decomposes as an inner product between a
//! statistic of the true labeling, `a(y) ∈ {0,1}^{s²+1}`, and a statistic of
//! the prediction, `b(ŷ)`. A classifier therefore only needs
//! `q(x) = E[a(y) | x]`: [`surrogate`] estimates it with `s²+1` independent
//! logistic losses, [`trainer`] fits them by regularised L-BFGS, and
//! [`decode`] turns an estimate `q̂` into the F_β-optimal labeling in
//! `O(s³)`.
//!
//! ```
//! use fcal::{decode_fast, BetaParam, DecodeInput, StatVec};
//!
//! // every labeling of two tags equally likely
//! let q = StatVec::expected_a(2, &[0.25; 4]).unwrap();
//! let yhat = decode_fast(&DecodeInput::new(q, BetaParam::default()).unwrap());
//! assert_eq!(yhat.to_string(), "11");
//! ```

pub mod baselines;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fbeta;
pub mod io;
pub mod loss;
pub mod pipeline;
pub mod surrogate;
pub mod synth;
pub mod trainer;

pub use data::{Dataset, SparseRow};
pub use decode::{decode_brute, decode_fast, DecodeInput};
pub use error::{Error, Result};
pub use fbeta::{a_vec, b_vec, expected_fbeta, fbeta, BetaParam, LabelVec, StatIndex, StatVec};
pub use pipeline::{train, Algorithm, TrainOptions, TrainedModel};
pub use surrogate::SurrogateConfig;
pub use trainer::{LinearModel, TrainConfig};
