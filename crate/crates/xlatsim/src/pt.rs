//! 4-level radix page table built over the frame pool via the hash policy,
//! walk-step address computation, and a simplified nested (2-D) variant.

use std::collections::HashMap;

use thiserror::Error;

use crate::cache::{AccessKind, FillLevel, Hierarchy};
use crate::hash::{AllocationOutcome, HashError, HashPolicy, Vpn};
use crate::mem::{MemError, PhysMem, Ppn};
use crate::mmu::{MmuState, SetAssocCache, PWC_LATENCY};

pub const PT_ENTRY_BYTES: u64 = 8;
pub const ENTRIES_PER_FRAME: u64 = 512;

#[derive(Debug, Error, PartialEq)]
pub enum PtError {
    #[error("vpn {0:#x} is already mapped")]
    AlreadyMapped(u64),
    #[error("page fault: vpn {0:#x} is not mapped")]
    PageFault(u64),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Mem(#[from] MemError),
}

/// 9-bit index slice of `vpn` for a page-table level: level 4 (root) is
/// bits 35..27, level 1 (leaf) is bits 8..0.
pub fn level_index(vpn: Vpn, level: u8) -> u64 {
    assert!((1..=4).contains(&level));
    (vpn.0 >> (9 * (level - 1))) & 0x1ff
}

/// Physical byte address of the leaf PT entry for `vpn` inside `pt_frame`.
pub fn pt_entry_address(pt_frame: Ppn, vpn: Vpn) -> u64 {
    pt_frame.base_addr() + (vpn.0 % ENTRIES_PER_FRAME) * PT_ENTRY_BYTES
}

/// Where each walk step was served from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSource {
    Pwc,
    Cache(FillLevel),
}

#[derive(Debug, Clone)]
pub struct WalkResult {
    pub ppn: Ppn,
    pub pt_frame_ppn: Ppn,
    pub latency_cycles: u64,
    /// Source per level, root first (levels 4, 3, 2, 1).
    pub level_sources: Vec<LevelSource>,
    /// Entry addresses touched, root first. Always 4 for a native walk.
    pub accesses: Vec<u64>,
}

/// Frame path for one VPN: root, level-3, level-2 and leaf PT frames, plus
/// the mapped data frame.
#[derive(Debug, Clone, Copy)]
pub struct FramePath {
    pub frames: [Ppn; 4],
    pub leaf_frame: Ppn,
    pub data: AllocationOutcome,
}

#[derive(Debug, Default)]
pub struct RadixPageTable {
    root: Option<Ppn>,
    l3_frames: HashMap<u64, Ppn>,
    l2_frames: HashMap<u64, Ppn>,
    leaf_frames: HashMap<u64, AllocationOutcome>,
    entries: HashMap<u64, AllocationOutcome>,
}

impl RadixPageTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_mapped(&self, vpn: Vpn) -> bool {
        self.entries.contains_key(&vpn.0)
    }

    pub fn lookup(&self, vpn: Vpn) -> Option<AllocationOutcome> {
        self.entries.get(&vpn.0).copied()
    }

    pub fn mapped_count(&self) -> usize {
        self.entries.len()
    }

    /// Final mapping snapshot, sorted by VPN. Used to compare end states.
    pub fn snapshot(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<(u64, u64)> = self.entries.iter().map(|(k, o)| (*k, o.ppn.0)).collect();
        v.sort_unstable();
        v
    }

    pub fn leaf_outcome(&self, vpn: Vpn) -> Option<AllocationOutcome> {
        self.leaf_frames.get(&vpn.pt_frame_key().0).copied()
    }

    /// Maps `vpn`: the leaf PT frame is hash-allocated first (the allocator
    /// handles the page-table frame before the data page), missing upper
    /// levels come from the fallback allocator, and the data page goes
    /// through the tiered hash procedure. Returns the data page outcome.
    pub fn map_page(
        &mut self,
        mem: &mut PhysMem,
        policy: &HashPolicy,
        vpn: Vpn,
    ) -> Result<AllocationOutcome, PtError> {
        if self.is_mapped(vpn) {
            return Err(PtError::AlreadyMapped(vpn.0));
        }
        let leaf_key = vpn.pt_frame_key().0;
        if let std::collections::hash_map::Entry::Vacant(e) = self.leaf_frames.entry(leaf_key) {
            e.insert(policy.allocate_pt_frame(mem, vpn)?);
        }
        if self.root.is_none() {
            self.root = Some(mem.fallback_alloc()?);
        }
        let i4 = level_index(vpn, 4);
        if let std::collections::hash_map::Entry::Vacant(e) = self.l3_frames.entry(i4) {
            e.insert(mem.fallback_alloc()?);
        }
        let l2_key = vpn.0 >> 18;
        if let std::collections::hash_map::Entry::Vacant(e) = self.l2_frames.entry(l2_key) {
            e.insert(mem.fallback_alloc()?);
        }
        let data = policy.tiered_allocate(mem, vpn)?;
        self.entries.insert(vpn.0, data);
        Ok(data)
    }

    pub fn frame_path(&self, vpn: Vpn) -> Result<FramePath, PtError> {
        let data = self.lookup(vpn).ok_or(PtError::PageFault(vpn.0))?;
        let root = self.root.ok_or(PtError::PageFault(vpn.0))?;
        let l3 = *self
            .l3_frames
            .get(&level_index(vpn, 4))
            .ok_or(PtError::PageFault(vpn.0))?;
        let l2 = *self
            .l2_frames
            .get(&(vpn.0 >> 18))
            .ok_or(PtError::PageFault(vpn.0))?;
        let leaf = self
            .leaf_frames
            .get(&vpn.pt_frame_key().0)
            .ok_or(PtError::PageFault(vpn.0))?
            .ppn;
        Ok(FramePath {
            frames: [root, l3, l2, leaf],
            leaf_frame: leaf,
            data,
        })
    }

    /// Upper portion of a walk: the three non-leaf entry reads, each served
    /// by its PWC or the cache hierarchy. Returns accumulated latency and
    /// the leaf-entry address left for the caller to resolve.
    pub fn walk_upper(
        &self,
        vpn: Vpn,
        mmu: &mut MmuState,
        hierarchy: &mut Hierarchy,
        now: u64,
    ) -> Result<UpperWalk, PtError> {
        let path = self.frame_path(vpn)?;
        let mut latency = 0u64;
        let mut sources = Vec::with_capacity(4);
        let mut accesses = Vec::with_capacity(4);
        for (slot, level) in (0..3).zip([4u8, 3, 2]) {
            let frame = path.frames[slot];
            let idx = level_index(vpn, level);
            let addr = frame.base_addr() + idx * PT_ENTRY_BYTES;
            accesses.push(addr);
            // PWC key: the VPN prefix consumed through this level.
            let key = vpn.0 >> (9 * (level as u64 - 1));
            if mmu.pwc_lookup(level, key).is_some() {
                latency += PWC_LATENCY;
                sources.push(LevelSource::Pwc);
            } else {
                let r = hierarchy.access(addr, now + latency, AccessKind::Walk);
                latency += r.latency;
                sources.push(LevelSource::Cache(r.served_by));
                mmu.pwc_insert(level, key, path.frames[(slot + 1).min(3)]);
            }
        }
        Ok(UpperWalk {
            latency,
            sources,
            accesses,
            leaf_frame: path.leaf_frame,
            leaf_entry_addr: pt_entry_address(path.leaf_frame, vpn),
            data: path.data,
        })
    }

    /// Full serial walk: three upper-level reads plus the leaf PT entry.
    pub fn walk(
        &self,
        vpn: Vpn,
        mmu: &mut MmuState,
        hierarchy: &mut Hierarchy,
        now: u64,
    ) -> Result<WalkResult, PtError> {
        let upper = self.walk_upper(vpn, mmu, hierarchy, now)?;
        let mut sources = upper.sources;
        let mut accesses = upper.accesses;
        let r = hierarchy.access(upper.leaf_entry_addr, now + upper.latency, AccessKind::Walk);
        sources.push(LevelSource::Cache(r.served_by));
        accesses.push(upper.leaf_entry_addr);
        Ok(WalkResult {
            ppn: upper.data.ppn,
            pt_frame_ppn: upper.leaf_frame,
            latency_cycles: upper.latency + r.latency,
            level_sources: sources,
            accesses,
        })
    }
}

/// Partial walk state handed to the speculation engine, which may replace
/// the serial leaf read with an overlapped speculative fetch.
#[derive(Debug, Clone)]
pub struct UpperWalk {
    pub latency: u64,
    pub sources: Vec<LevelSource>,
    pub accesses: Vec<u64>,
    pub leaf_frame: Ppn,
    pub leaf_entry_addr: u64,
    pub data: AllocationOutcome,
}

// Synthetic host address regions for nested-walk traffic. Guest PT frames
// and nested PT entries only matter as cache-line addresses.
const GUEST_PT_REGION: u64 = 1 << 44;
const NPT_REGION: u64 = 1 << 45;

pub const NTLB_ENTRIES: usize = 64;
pub const NESTED_LEVELS: u64 = 4;

#[derive(Debug, Clone)]
pub struct NestedWalkResult {
    pub hppn: Ppn,
    pub latency_cycles: u64,
    /// Number of PT-entry reads performed; between 8 and 24.
    pub pt_accesses: u64,
    pub ntlb_hits: u64,
}

/// Combined guest/host translation model. Guest page tables exist as
/// address-generating structure for nested-walk traffic; the host data
/// frame for each gVPN is assigned by the tiered hash policy so the
/// speculation engine can predict the final hPA directly from the gVPN.
pub struct NestedSpace {
    pub guest_mem: PhysMem,
    pub guest_table: RadixPageTable,
    guest_policy: HashPolicy,
    host_map: HashMap<u64, AllocationOutcome>,
    ntlb: SetAssocCache<()>,
}

impl NestedSpace {
    pub fn new(guest_frames: u64) -> Result<Self, MemError> {
        Ok(NestedSpace {
            guest_mem: PhysMem::new(guest_frames)?,
            guest_table: RadixPageTable::new(),
            // Guest-internal gPA layout is irrelevant to speculation; a
            // single-tier policy keeps guest allocation simple.
            guest_policy: HashPolicy::new(1, 0x67657374, guest_frames),
            host_map: HashMap::new(),
            ntlb: SetAssocCache::new(NTLB_ENTRIES, NTLB_ENTRIES, 0),
        })
    }

    pub fn is_mapped(&self, gvpn: Vpn) -> bool {
        self.host_map.contains_key(&gvpn.0)
    }

    pub fn lookup(&self, gvpn: Vpn) -> Option<AllocationOutcome> {
        self.host_map.get(&gvpn.0).copied()
    }

    pub fn snapshot(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<(u64, u64)> = self.host_map.iter().map(|(k, o)| (*k, o.ppn.0)).collect();
        v.sort_unstable();
        v
    }

    /// Maps gvpn in the guest table and assigns its host frame from the
    /// tiered policy over gVPN (guest/hypervisor cooperation).
    pub fn map_page(
        &mut self,
        host_mem: &mut PhysMem,
        host_policy: &HashPolicy,
        gvpn: Vpn,
    ) -> Result<AllocationOutcome, PtError> {
        if self.is_mapped(gvpn) {
            return Err(PtError::AlreadyMapped(gvpn.0));
        }
        self.guest_table
            .map_page(&mut self.guest_mem, &self.guest_policy, gvpn)?;
        let outcome = host_policy.tiered_allocate(host_mem, gvpn)?;
        self.host_map.insert(gvpn.0, outcome);
        Ok(outcome)
    }

    fn npt_entry_addr(gframe: Ppn, nested_level: u64) -> u64 {
        NPT_REGION + (gframe.0 * NESTED_LEVELS + (nested_level - 1)) * crate::cache::LINE_BYTES
    }

    fn guest_entry_host_addr(gframe: Ppn, idx: u64) -> u64 {
        GUEST_PT_REGION + gframe.base_addr() + idx * PT_ENTRY_BYTES
    }

    /// 2-D page walk: for each of the four guest levels, translate the guest
    /// PT frame's gPA through the nested tables (4 reads, skipped on an nTLB
    /// hit), then read the guest entry; finally translate the resolved data
    /// gPA (4 more reads). 8..=24 PT-entry reads total.
    pub fn nested_walk(
        &mut self,
        gvpn: Vpn,
        hierarchy: &mut Hierarchy,
        now: u64,
    ) -> Result<NestedWalkResult, PtError> {
        let hppn = self
            .lookup(gvpn)
            .ok_or(PtError::PageFault(gvpn.0))?
            .ppn;
        let guest_path = self.guest_table.frame_path(gvpn)?;
        let data_gppn = guest_path.data.ppn;

        let mut latency = 0u64;
        let mut reads = 0u64;
        let mut ntlb_hits = 0u64;
        for (slot, level) in (0..4).zip([4u8, 3, 2, 1]) {
            let gframe = guest_path.frames[slot];
            if self.ntlb.lookup(gframe.0).is_some() {
                ntlb_hits += 1;
            } else {
                for nl in 1..=NESTED_LEVELS {
                    let r = hierarchy.access(
                        Self::npt_entry_addr(gframe, nl),
                        now + latency,
                        AccessKind::Walk,
                    );
                    latency += r.latency;
                    reads += 1;
                }
                self.ntlb.insert(gframe.0, ());
            }
            let idx = level_index(gvpn, level);
            let r = hierarchy.access(
                Self::guest_entry_host_addr(gframe, idx),
                now + latency,
                AccessKind::Walk,
            );
            latency += r.latency;
            reads += 1;
        }
        // Final translation of the resolved data gPA.
        for nl in 1..=NESTED_LEVELS {
            let r = hierarchy.access(
                Self::npt_entry_addr(data_gppn, nl),
                now + latency,
                AccessKind::Walk,
            );
            latency += r.latency;
            reads += 1;
        }
        Ok(NestedWalkResult {
            hppn,
            latency_cycles: latency,
            pt_accesses: reads,
            ntlb_hits,
        })
    }
}
