//! Slotted simulator of delayed mobile-data offloading through mmWave gates.
//!
//! UEs accumulate delay-tolerant files on the macro network until they reach
//! a gate, a small area covered by a handful of 60 GHz access points. While
//! the UEs walk through, a coordinator assigns APs to UEs every slot with a
//! stay-time weighted proportional-fair rule. Anything not offloaded in the
//! gate goes back to the macro cell.
//!
//! ```
//! use mmw_gate::{engine, model::ScenarioConfig};
//!
//! let cfg = ScenarioConfig { num_ues: 3, num_aps: 2, grt_s: 600.0, ..Default::default() }
//!     .validate()
//!     .unwrap();
//! let out = engine::run(&cfg);
//! let r = &out.report;
//! assert_eq!(r.bytes_via_gate + r.bytes_via_macro, r.total_generated_bytes);
//! ```

pub mod channel;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod model;
pub mod scheduler;
pub mod trace;
pub mod traffic;

pub use engine::{run, run_with, RunOptions, RunOutput};
pub use model::{ConfigError, MetricsReport, ScenarioConfig, SchedulerKind, ValidatedConfig};
