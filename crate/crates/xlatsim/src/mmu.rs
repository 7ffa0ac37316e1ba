//! TLB hierarchy and page-walk caches, plus the set-associative LRU
//! structure shared with the data-cache hierarchy.

use crate::mem::Ppn;

/// Generic set-associative cache with true-LRU replacement within each set.
/// Keyed by u64; the set index is the low-order key bits. Instantiated as
/// TLBs (Vpn -> Ppn), page-walk caches (path -> Ppn) and data caches
/// (line address, no payload).
#[derive(Debug, Clone)]
pub struct SetAssocCache<V> {
    sets: Vec<Vec<Slot<V>>>,
    ways: usize,
    latency: u64,
    tick: u64,
}

#[derive(Debug, Clone)]
struct Slot<V> {
    key: u64,
    value: V,
    stamp: u64,
}

impl<V: Copy> SetAssocCache<V> {
    pub fn new(entries: usize, ways: usize, latency: u64) -> Self {
        assert!(
            entries >= ways && entries.is_multiple_of(ways),
            "entries must divide into ways"
        );
        SetAssocCache {
            sets: vec![Vec::with_capacity(ways); entries / ways],
            ways,
            latency,
            tick: 0,
        }
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    fn set_of(&self, key: u64) -> usize {
        (key % self.sets.len() as u64) as usize
    }

    /// Returns the cached value and refreshes its LRU position.
    pub fn lookup(&mut self, key: u64) -> Option<V> {
        self.tick += 1;
        let tick = self.tick;
        let set = self.set_of(key);
        for slot in &mut self.sets[set] {
            if slot.key == key {
                slot.stamp = tick;
                return Some(slot.value);
            }
        }
        None
    }

    /// Presence check that leaves recency untouched.
    pub fn peek(&self, key: u64) -> Option<V> {
        let set = self.set_of(key);
        self.sets[set].iter().find(|s| s.key == key).map(|s| s.value)
    }

    /// Inserts (or refreshes) a mapping, evicting the LRU way when the set
    /// is full. Returns the evicted key, if any.
    pub fn insert(&mut self, key: u64, value: V) -> Option<u64> {
        self.tick += 1;
        let tick = self.tick;
        let ways = self.ways;
        let set = self.set_of(key);
        let slots = &mut self.sets[set];
        if let Some(slot) = slots.iter_mut().find(|s| s.key == key) {
            slot.value = value;
            slot.stamp = tick;
            return None;
        }
        if slots.len() < ways {
            slots.push(Slot { key, value, stamp: tick });
            return None;
        }
        let victim = slots
            .iter_mut()
            .min_by_key(|s| s.stamp)
            .expect("set is full");
        let evicted = victim.key;
        *victim = Slot { key, value, stamp: tick };
        Some(evicted)
    }
}

/// TLB lookup result; latency covers every level probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlbLookup {
    Hit { ppn: Ppn, latency: u64 },
    Miss { latency: u64 },
}

pub const L1_TLB_LATENCY: u64 = 1;
pub const L2_TLB_LATENCY: u64 = 12;
pub const PWC_LATENCY: u64 = 2;

/// L1/L2 TLBs plus one page-walk cache per non-leaf page-table level.
#[derive(Debug, Clone)]
pub struct MmuState {
    l1_dtlb: SetAssocCache<Ppn>,
    l2_tlb: SetAssocCache<Ppn>,
    // Index 0 covers the root level (4), index 2 the level above the leaf.
    pwcs: [SetAssocCache<Ppn>; 3],
}

impl Default for MmuState {
    fn default() -> Self {
        Self::new()
    }
}

impl MmuState {
    pub fn new() -> Self {
        MmuState {
            l1_dtlb: SetAssocCache::new(64, 4, L1_TLB_LATENCY),
            l2_tlb: SetAssocCache::new(2048, 16, L2_TLB_LATENCY),
            pwcs: [
                SetAssocCache::new(32, 4, PWC_LATENCY),
                SetAssocCache::new(32, 4, PWC_LATENCY),
                SetAssocCache::new(32, 4, PWC_LATENCY),
            ],
        }
    }

    /// Checks L1 then L2. An L2 hit is promoted into L1 (inclusive-on-fill).
    pub fn tlb_lookup(&mut self, vpn: u64) -> TlbLookup {
        if let Some(ppn) = self.l1_dtlb.lookup(vpn) {
            return TlbLookup::Hit { ppn, latency: L1_TLB_LATENCY };
        }
        let latency = L1_TLB_LATENCY + L2_TLB_LATENCY;
        if let Some(ppn) = self.l2_tlb.lookup(vpn) {
            self.l1_dtlb.insert(vpn, ppn);
            return TlbLookup::Hit { ppn, latency };
        }
        TlbLookup::Miss { latency }
    }

    /// Fills both TLB levels.
    pub fn tlb_insert(&mut self, vpn: u64, ppn: Ppn) {
        self.l1_dtlb.insert(vpn, ppn);
        self.l2_tlb.insert(vpn, ppn);
    }

    fn pwc_index(level: u8) -> usize {
        match level {
            4 => 0,
            3 => 1,
            2 => 2,
            _ => panic!("no page-walk cache for level {level}"),
        }
    }

    /// PWC for page-table `level` (4 = root, 2 = last non-leaf), keyed by
    /// the VPN prefix consumed down to that level.
    pub fn pwc_lookup(&mut self, level: u8, path: u64) -> Option<Ppn> {
        self.pwcs[Self::pwc_index(level)].lookup(path)
    }

    pub fn pwc_insert(&mut self, level: u8, path: u64, ppn: Ppn) {
        self.pwcs[Self::pwc_index(level)].insert(path, ppn);
    }
}

/// L2 TLB misses per thousand instructions.
pub fn mpki(l2_misses: u64, instructions: u64) -> f64 {
    assert!(instructions > 0, "mpki needs a non-zero instruction count");
    l2_misses as f64 * 1000.0 / instructions as f64
}
