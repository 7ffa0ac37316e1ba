//! Trace-driven simulator of OS-guided speculative address translation.
//!
//! The OS side allocates physical frames by probing a family of hash
//! functions in tier order before falling back to a conventional free-list
//! search. The hardware side mirrors the same hash family: on an L2 TLB
//! miss it issues speculative fetches for the candidate data addresses and
//! the final-level page-table entry, overlapping them with the page table
//! walk. The simulator reports latency, hit-rate and bandwidth statistics
//! for native and nested (virtualized) translation.

pub mod analytic;
pub mod cache;
pub mod config;
pub mod engine;
pub mod hash;
pub mod mem;
pub mod mmu;
pub mod pt;
pub mod sim;
pub mod trace;

pub use cache::{AccessKind, BandwidthMeter, FillLevel, Hierarchy, HierarchyConfig};
pub use config::{ConfigError, SimConfig, SimMode};
pub use engine::{SpecConfig, SpecOutcome, SpecState};
pub use hash::{AllocTier, AllocationOutcome, AnalyticModel, HashError, HashPolicy, Vpn};
pub use mem::{MemError, PhysMem, Ppn, PAGE_BYTES};
pub use mmu::{MmuState, SetAssocCache, TlbLookup};
pub use pt::{NestedSpace, PtError, RadixPageTable, WalkResult};
pub use sim::{run, sweep, RunError, RunStats};
pub use trace::{TraceError, TraceEvent};
