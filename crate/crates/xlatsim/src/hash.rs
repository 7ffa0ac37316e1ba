//! Shared hash family and the tiered hash-based allocation procedure,
//! plus the closed-form analytic model of its success probability.
//!
//! The OS allocator and the hardware speculation engine must agree on the
//! exact hash outputs, so both sides use this module verbatim: a single
//! 64-bit avalanche mixer with one seed per tier, seeds derived from a
//! master seed by a counter construction.

use std::collections::HashMap;

use thiserror::Error;

use crate::mem::{MemError, PhysMem, Ppn};

/// Virtual page number; 36 significant bits (VA = VPN * 4096 + offset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vpn(pub u64);

pub const VPN_BITS: u32 = 36;

/// How many low VPN bits one final-level page-table frame covers: a frame
/// holds 512 eight-byte entries.
pub const PT_FRAME_SHIFT: u32 = 9;

impl Vpn {
    /// Key used when hashing the final-level page-table frame: one frame
    /// covers 512 consecutive VPNs.
    pub fn pt_frame_key(self) -> Vpn {
        Vpn(self.0 >> PT_FRAME_SHIFT)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HashError {
    #[error("tier {0} out of range 1..={1}")]
    TierOutOfRange(usize, usize),
    #[error(transparent)]
    Mem(#[from] MemError),
}

/// Which attempt produced an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocTier {
    /// Allocated at hash tier i (1-based).
    Hash(usize),
    /// All hash targets were occupied; conventional free-list allocation.
    Fallback,
}

impl AllocTier {
    pub fn is_hash(self) -> bool {
        matches!(self, AllocTier::Hash(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationOutcome {
    pub ppn: Ppn,
    pub tier: AllocTier,
}

/// 64-bit finalization mixer (bit-exact contract shared by OS and HW):
/// x ^= x>>33; x *= 0xff51afd7ed558ccd; x ^= x>>33;
/// x *= 0xc4ceb9fe1a85ec53; x ^= x>>33.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51afd7ed558ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ceb9fe1a85ec53);
    x ^= x >> 33;
    x
}

const SEED_STRIDE: u64 = 0x9E3779B97F4A7C15;

#[derive(Debug, Clone)]
enum HashMode {
    /// Production path: mixer over (vpn XOR per-tier seed), reduced mod P.
    Mixer,
    /// Test-only table of (tier, vpn) -> ppn overrides; keys not present in
    /// the table fall through to the mixer so the map stays total.
    StubTable(HashMap<(usize, u64), u64>),
}

/// Hash family shared by the allocator and the speculation engine.
#[derive(Debug, Clone)]
pub struct HashPolicy {
    tier_count: usize,
    seeds: Vec<u64>,
    total_frames: u64,
    mode: HashMode,
}

impl HashPolicy {
    /// Builds the production policy. Per-tier seeds are derived from the
    /// master seed by a counter construction so that any two components
    /// constructed from the same master seed agree on every hash output.
    pub fn new(tier_count: usize, master_seed: u64, total_frames: u64) -> Self {
        assert!(tier_count >= 1, "need at least one hash tier");
        assert!(total_frames >= 1);
        let seeds = (1..=tier_count as u64)
            .map(|i| mix64(master_seed.wrapping_add(i.wrapping_mul(SEED_STRIDE))))
            .collect();
        HashPolicy {
            tier_count,
            seeds,
            total_frames,
            mode: HashMode::Mixer,
        }
    }

    /// Test-only policy whose table entries override the mixer.
    pub fn with_stub_table(
        tier_count: usize,
        master_seed: u64,
        total_frames: u64,
        table: HashMap<(usize, u64), u64>,
    ) -> Self {
        let mut policy = Self::new(tier_count, master_seed, total_frames);
        policy.mode = HashMode::StubTable(table);
        policy
    }

    pub fn tier_count(&self) -> usize {
        self.tier_count
    }

    pub fn total_frames(&self) -> u64 {
        self.total_frames
    }

    /// Target frame for `vpn` at hash tier `tier` (1-based).
    pub fn hash(&self, tier: usize, vpn: Vpn) -> Result<Ppn, HashError> {
        if tier == 0 || tier > self.tier_count {
            return Err(HashError::TierOutOfRange(tier, self.tier_count));
        }
        if let HashMode::StubTable(table) = &self.mode {
            if let Some(&ppn) = table.get(&(tier, vpn.0)) {
                return Ok(Ppn(ppn));
            }
        }
        // Modulo reduction is slightly biased for P not a power of two;
        // negligible for P >> 1 and accepted over rejection sampling.
        Ok(Ppn(mix64(vpn.0 ^ self.seeds[tier - 1]) % self.total_frames))
    }

    /// Probes tiers 1..N in order and claims the first free hash target;
    /// otherwise claims the conventional fallback frame.
    pub fn tiered_allocate(
        &self,
        mem: &mut PhysMem,
        vpn: Vpn,
    ) -> Result<AllocationOutcome, HashError> {
        for tier in 1..=self.tier_count {
            let target = self.hash(tier, vpn)?;
            if mem.is_free(target).unwrap_or(false) {
                mem.claim(target)?;
                return Ok(AllocationOutcome {
                    ppn: target,
                    tier: AllocTier::Hash(tier),
                });
            }
        }
        let ppn = mem.fallback_alloc()?;
        Ok(AllocationOutcome {
            ppn,
            tier: AllocTier::Fallback,
        })
    }

    /// Same procedure applied to the page-table frame key (vpn >> 9).
    pub fn allocate_pt_frame(
        &self,
        mem: &mut PhysMem,
        vpn: Vpn,
    ) -> Result<AllocationOutcome, HashError> {
        self.tiered_allocate(mem, vpn.pt_frame_key())
    }
}

/// Closed-form model of tiered allocation under uniform random occupancy.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticModel {
    /// Occupancy ratio p = M / P.
    pub p: f64,
    /// Tier count N.
    pub n: usize,
}

impl AnalyticModel {
    pub fn new(p: f64, n: usize) -> Self {
        assert!((0.0..=1.0).contains(&p));
        assert!(n >= 1);
        AnalyticModel { p, n }
    }

    /// Probability that some hash tier succeeds: 1 - p^N.
    pub fn success_probability(&self) -> f64 {
        1.0 - self.p.powi(self.n as i32)
    }

    /// Probability that exactly tier i succeeds: p^(i-1) * (1 - p).
    pub fn tier_probability(&self, i: usize) -> Result<f64, HashError> {
        if i == 0 || i > self.n {
            return Err(HashError::TierOutOfRange(i, self.n));
        }
        Ok(self.p.powi(i as i32 - 1) * (1.0 - self.p))
    }
}
