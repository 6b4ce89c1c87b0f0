//! Characteristic-function reference pricers.

pub mod branch;
pub mod heston;
pub mod quad;
pub mod sz;

pub use branch::{corrected_log, BranchTracker, ScaledComplex};
pub use heston::{heston_call_ft, heston_cf, heston_greeks_ft, heston_put_ft, FtGreeks, HestonQuoteInput};
pub use quad::{gk15, integrate, integrate_semi_infinite, Integral, QuadratureSpec};
pub use sz::{sz_call_ft, sz_log_cf, sz_put_ft, sz_run, LogBranch, SzGridSpec, SzLogCf, SzQuoteInput, SzRun};
