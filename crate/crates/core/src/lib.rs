//! High-frequency cointegration: jump truncation, realized-volatility
//! deflation, modified Dickey-Fuller testing, classical residual-based tests,
//! an Euler simulator for the benchmark price models and Monte Carlo critical
//! values.

pub mod cointtest;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod limitdist;
pub mod linalg;
pub mod preprocess;
pub mod rng;
pub mod simulate;
pub mod timegrid;

pub use cointtest::{df_psi, run_modified_df, classical_tests, TestKind, TestResult};
pub use error::{Error, Result};
pub use estimate::{fit_cointegration, CointFit};
pub use limitdist::{CriticalValueTable, LimitConfig, SigmaCurve};
pub use preprocess::{deflate, detrend_deflate, DeflatedPair, DeflationConfig, TruncationConfig};
pub use simulate::{simulate_model, ModelSpec, RhoRegime, SimOutput};
pub use timegrid::{pair_align, PairSeries, SampledPath, SamplingGrid, Session};
