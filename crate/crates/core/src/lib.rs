//! Sparse vector error correction toolkit.
//!
//! Elastic-net estimation of high-dimensional VAR(p) models in levels, the
//! derived error-correction view with an effective-rank screen, joint
//! impulse responses for arbitrary shock subsets and a residual bootstrap
//! for their confidence bands. Unit-root, structural-break and pairwise
//! cointegration tests gate the modeling steps.
//!
//! The crate is `no_std` (it needs `alloc`). Enabling the `parallel`
//! feature pulls in `std` and spreads equation fits, CV folds and bootstrap
//! replicates over a rayon pool; results are identical either way.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bootstrap;
pub mod error;
pub mod jirf;
pub mod linalg;
pub mod panel;
mod par;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod stattests;
pub mod varnet;
pub mod vecm;

pub use error::{Error, Result};

pub use bootstrap::{bootstrap_jirf, bootstrap_jirfs, resample_series, BootstrapSpec, JirfDistribution, RefitMode};
pub use jirf::{build_shock, compute_jirf, jirf_for_fit, to_vma, JirfResult, ShockScenario, ShockSource, VmaForm};
pub use panel::{PricePanel, RawObservation, SeriesId};
pub use varnet::{cross_validate, fit_var, select_lag, ElasticNetConfig, VarFit};
pub use vecm::{effective_rank, to_vecm, EffectiveRankReport, VecmView};
