//! Predictor-based neural architecture search with a Siamese accuracy
//! predictor, Estimation Codes and Batch Top Sampling.
//!
//! The crate works over tabular benchmarks stored as JSONL ([`bench`]): every
//! architecture is a small DAG cell with its final accuracy and per-epoch
//! training losses. A graph network ([`predictor`]) is trained on a growing
//! pool of architectures ([`search::bts_train`]) and then ranks the whole
//! space ([`search::siamese_rank`]); only the top-K are "trained".
//!
//! ```
//! use siamese_nas::bench::gen_synthetic;
//! use siamese_nas::search::SearchSpace;
//!
//! let store = gen_synthetic(1, 200, 4, 5).unwrap();
//! let space = SearchSpace::new(&store, "synthetic").unwrap();
//! assert_eq!(space.len(), 200);
//! ```

pub mod analysis;
pub mod autodiff;
pub mod bench;
pub mod config;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod optim;
pub mod predictor;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
