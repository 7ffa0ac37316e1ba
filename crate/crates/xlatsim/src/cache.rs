//! Physical-address data path: L1/L2/LLC caches, fixed-latency DRAM, and
//! bandwidth accounting with a windowed utilization EWMA.

use crate::mmu::SetAssocCache;

pub const LINE_BYTES: u64 = 64;

/// Why an access was issued. Walk and demand traffic fill every level;
/// speculative fills start at L2 so mispredicted fetches never pollute L1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Demand,
    Walk,
    Speculative,
}

/// Level that served an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillLevel {
    L1,
    L2,
    Llc,
    Dram,
}

#[derive(Debug, Clone, Copy)]
pub struct AccessResult {
    pub latency: u64,
    pub served_by: FillLevel,
}

#[derive(Debug, Clone, Copy)]
pub struct HierarchyConfig {
    pub l1_latency: u64,
    pub l2_latency: u64,
    pub llc_latency: u64,
    pub dram_latency: u64,
    pub bw_window_cycles: u64,
    pub bw_peak_bytes_per_cycle: f64,
    pub bw_ewma_alpha: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            l1_latency: 4,
            l2_latency: 12,
            llc_latency: 35,
            dram_latency: 120,
            bw_window_cycles: 1024,
            bw_peak_bytes_per_cycle: 8.0,
            bw_ewma_alpha: 1.0 / 16.0,
        }
    }
}

/// DRAM traffic meter: bytes per fixed-size cycle window, folded into an
/// exponentially weighted moving average of utilization.
#[derive(Debug, Clone)]
pub struct BandwidthMeter {
    window_cycles: u64,
    peak_bytes_per_cycle: f64,
    alpha: f64,
    window_start: u64,
    bytes_in_window: u64,
    ewma: f64,
    pub demand_bytes: u64,
    pub speculative_bytes: u64,
}

impl BandwidthMeter {
    pub fn new(window_cycles: u64, peak_bytes_per_cycle: f64, alpha: f64) -> Self {
        assert!(window_cycles > 0 && peak_bytes_per_cycle > 0.0);
        BandwidthMeter {
            window_cycles,
            peak_bytes_per_cycle,
            alpha,
            window_start: 0,
            bytes_in_window: 0,
            ewma: 0.0,
            demand_bytes: 0,
            speculative_bytes: 0,
        }
    }

    fn fold_windows(&mut self, now: u64) {
        while now >= self.window_start + self.window_cycles {
            let capacity = self.window_cycles as f64 * self.peak_bytes_per_cycle;
            let util = self.bytes_in_window as f64 / capacity;
            self.ewma += self.alpha * (util - self.ewma);
            self.bytes_in_window = 0;
            self.window_start += self.window_cycles;
            // Long idle gaps: decay the remaining empty windows in one step.
            if self.bytes_in_window == 0 && now >= self.window_start + self.window_cycles {
                let skipped = (now - self.window_start) / self.window_cycles;
                self.ewma *= (1.0 - self.alpha).powi(skipped as i32);
                self.window_start += skipped * self.window_cycles;
            }
        }
    }

    pub fn add_bytes(&mut self, now: u64, bytes: u64, kind: AccessKind) {
        self.fold_windows(now);
        self.bytes_in_window += bytes;
        match kind {
            AccessKind::Speculative => self.speculative_bytes += bytes,
            _ => self.demand_bytes += bytes,
        }
    }

    /// Folds completed windows into the EWMA and returns it. The raw EWMA
    /// may exceed 1.0; clamp with [`BandwidthMeter::utilization_clamped`]
    /// for filter decisions.
    pub fn record_utilization(&mut self, now: u64) -> f64 {
        self.fold_windows(now);
        self.ewma
    }

    pub fn utilization_clamped(&self) -> f64 {
        self.ewma.clamp(0.0, 1.0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.demand_bytes + self.speculative_bytes
    }
}

/// Three-level inclusive cache hierarchy over a flat-latency DRAM.
/// Probe latencies accumulate serially down to the hit level.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    l1d: SetAssocCache<()>,
    l2: SetAssocCache<()>,
    llc: SetAssocCache<()>,
    dram_latency: u64,
    /// Cycles one line fill occupies the DRAM channel: line size over peak
    /// bandwidth. Fills issued while the channel is busy queue behind it.
    line_occupancy_cycles: u64,
    channel_busy_until: u64,
    pub bw: BandwidthMeter,
    pub dram_fills: u64,
}

impl Default for Hierarchy {
    fn default() -> Self {
        Self::new(HierarchyConfig::default())
    }
}

impl Hierarchy {
    pub fn new(cfg: HierarchyConfig) -> Self {
        Hierarchy {
            // 32 KB / 64 B = 512 lines, 8-way.
            l1d: SetAssocCache::new(512, 8, cfg.l1_latency),
            // 1 MB = 16384 lines, 16-way.
            l2: SetAssocCache::new(16384, 16, cfg.l2_latency),
            // 2 MB = 32768 lines, 16-way.
            llc: SetAssocCache::new(32768, 16, cfg.llc_latency),
            dram_latency: cfg.dram_latency,
            line_occupancy_cycles: (LINE_BYTES as f64 / cfg.bw_peak_bytes_per_cycle).ceil() as u64,
            channel_busy_until: 0,
            bw: BandwidthMeter::new(
                cfg.bw_window_cycles,
                cfg.bw_peak_bytes_per_cycle,
                cfg.bw_ewma_alpha,
            ),
            dram_fills: 0,
        }
    }

    /// Latency of the L1-miss/L2-hit path, the floor for a demand access
    /// whose line was speculatively staged in L2.
    pub fn l2_hit_path_latency(&self) -> u64 {
        self.l1d.latency() + self.l2.latency()
    }

    pub fn access(&mut self, paddr: u64, now: u64, kind: AccessKind) -> AccessResult {
        let line = paddr / LINE_BYTES;
        let fill_l1 = kind != AccessKind::Speculative;

        let mut latency = self.l1d.latency();
        if self.l1d.lookup(line).is_some() {
            return AccessResult { latency, served_by: FillLevel::L1 };
        }
        latency += self.l2.latency();
        if self.l2.lookup(line).is_some() {
            if fill_l1 {
                self.l1d.insert(line, ());
            }
            return AccessResult { latency, served_by: FillLevel::L2 };
        }
        latency += self.llc.latency();
        if self.llc.lookup(line).is_some() {
            self.l2.insert(line, ());
            if fill_l1 {
                self.l1d.insert(line, ());
            }
            return AccessResult { latency, served_by: FillLevel::Llc };
        }
        // DRAM fill: queue behind the channel if a prior fill still holds it.
        let wait = self.channel_busy_until.saturating_sub(now);
        let start = now + wait;
        self.channel_busy_until = start + self.line_occupancy_cycles;
        latency += wait + self.dram_latency;
        self.llc.insert(line, ());
        self.l2.insert(line, ());
        if fill_l1 {
            self.l1d.insert(line, ());
        }
        self.dram_fills += 1;
        self.bw.add_bytes(start, LINE_BYTES, kind);
        AccessResult { latency, served_by: FillLevel::Dram }
    }

    /// Completion cycle of an access issued at `issue_cycle`.
    pub fn completes_at(&mut self, paddr: u64, issue_cycle: u64, kind: AccessKind) -> u64 {
        issue_cycle + self.access(paddr, issue_cycle, kind).latency
    }

    pub fn l1_contains(&self, paddr: u64) -> bool {
        self.l1d.peek(paddr / LINE_BYTES).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_access_sums_all_probe_latencies() {
        let mut h = Hierarchy::default();
        let r = h.access(0x1000, 0, AccessKind::Demand);
        assert_eq!(r.latency, 4 + 12 + 35 + 120);
        assert_eq!(r.served_by, FillLevel::Dram);
        // Immediate re-access hits L1.
        let r = h.access(0x1000, 200, AccessKind::Demand);
        assert_eq!(r.latency, 4);
        assert_eq!(r.served_by, FillLevel::L1);
    }

    #[test]
    fn latency_monotone_in_miss_depth() {
        let mut h = Hierarchy::default();
        let dram = h.access(0x40, 0, AccessKind::Demand).latency;
        // Line now in all levels; touch conflicting lines... simpler: probe
        // staged lines at each depth directly.
        let mut h2 = Hierarchy::default();
        h2.access(0x40, 0, AccessKind::Speculative); // in L2 + LLC, not L1
        let l2 = h2.access(0x40, 0, AccessKind::Demand).latency;
        let l1 = h2.access(0x40, 0, AccessKind::Demand).latency;
        assert!(l1 < l2 && l2 < dram);
    }

    #[test]
    fn speculative_fill_skips_l1() {
        let mut h = Hierarchy::default();
        h.access(0x2000, 0, AccessKind::Speculative);
        assert!(!h.l1_contains(0x2000));
        let r = h.access(0x2000, 300, AccessKind::Demand);
        assert_eq!(r.latency, 4 + 12);
        assert_eq!(r.served_by, FillLevel::L2);
        assert!(h.l1_contains(0x2000));
    }

    #[test]
    fn completes_at_adds_latency_to_issue_cycle() {
        let mut h = Hierarchy::default();
        assert_eq!(h.completes_at(0x3000, 100, AccessKind::Demand), 271);
        // Line is now resident; a second fetch issued later sees the fill.
        let mut h2 = Hierarchy::default();
        h2.access(0x3000, 0, AccessKind::Demand);
        assert_eq!(h2.completes_at(0x3000, 0, AccessKind::Speculative), 4);
    }

    #[test]
    fn bytes_charged_equal_line_size_times_dram_fills() {
        let mut h = Hierarchy::default();
        for i in 0..10u64 {
            h.access(i * 64, 0, AccessKind::Demand);
            h.access(i * 64, 0, AccessKind::Demand); // hits, no charge
        }
        for i in 0..3u64 {
            h.access(0x100000 + i * 64, 0, AccessKind::Speculative);
        }
        assert_eq!(h.dram_fills, 13);
        assert_eq!(h.bw.total_bytes(), 13 * LINE_BYTES);
        assert_eq!(h.bw.demand_bytes, 10 * LINE_BYTES);
        assert_eq!(h.bw.speculative_bytes, 3 * LINE_BYTES);
    }

    #[test]
    fn concurrent_fills_queue_on_the_channel() {
        // Default peak 8 B/cy: one 64 B fill holds the channel 8 cycles.
        let mut h = Hierarchy::default();
        assert_eq!(h.access(0x0000, 0, AccessKind::Demand).latency, 171);
        assert_eq!(h.access(0x1000, 0, AccessKind::Demand).latency, 171 + 8);
        assert_eq!(h.access(0x2000, 0, AccessKind::Demand).latency, 171 + 16);
        // A fill issued after the backlog drains pays no wait.
        assert_eq!(h.access(0x3000, 1000, AccessKind::Demand).latency, 171);
    }

    #[test]
    fn throttled_channel_serializes_fills() {
        let mut h = Hierarchy::new(HierarchyConfig {
            bw_peak_bytes_per_cycle: 0.05, // 1280 cycles per line
            ..HierarchyConfig::default()
        });
        h.access(0x0000, 0, AccessKind::Speculative);
        let r = h.access(0x1000, 0, AccessKind::Demand);
        assert_eq!(r.latency, 171 + 1280);
    }

    #[test]
    fn ewma_converges_under_saturation() {
        let mut bw = BandwidthMeter::new(1024, 8.0, 1.0 / 16.0);
        // Saturating traffic: exactly peak bytes per window for 200 windows.
        for w in 0..200u64 {
            bw.add_bytes(w * 1024, 8 * 1024, AccessKind::Demand);
        }
        let u = bw.record_utilization(200 * 1024);
        assert!((u - 1.0).abs() < 1e-3, "ewma was {u}");
        // Geometric convergence: within 10 windows the EWMA reaches 1 - (1-a)^10.
        let mut bw = BandwidthMeter::new(1024, 8.0, 1.0 / 16.0);
        for w in 0..10u64 {
            bw.add_bytes(w * 1024, 8 * 1024, AccessKind::Demand);
        }
        let u = bw.record_utilization(10 * 1024);
        let expect = 1.0 - (1.0f64 - 1.0 / 16.0).powi(10);
        assert!((u - expect).abs() < 1e-9);
    }

    #[test]
    fn ewma_tracks_half_rate_traffic() {
        let mut bw = BandwidthMeter::new(1024, 8.0, 1.0 / 16.0);
        for w in 0..300u64 {
            bw.add_bytes(w * 1024, 4 * 1024, AccessKind::Demand);
        }
        let u = bw.record_utilization(300 * 1024);
        assert!((u - 0.5).abs() < 0.05, "ewma was {u}");
    }

    #[test]
    fn no_traffic_means_zero_utilization() {
        let mut bw = BandwidthMeter::new(1024, 8.0, 1.0 / 16.0);
        assert_eq!(bw.record_utilization(1_000_000), 0.0);
    }

    #[test]
    fn idle_gap_decays_ewma() {
        let mut bw = BandwidthMeter::new(1024, 8.0, 1.0 / 16.0);
        for w in 0..100u64 {
            bw.add_bytes(w * 1024, 8 * 1024, AccessKind::Demand);
        }
        let busy = bw.record_utilization(100 * 1024);
        let idle = bw.record_utilization(100 * 1024 + 50 * 1024);
        assert!(idle < busy * 0.1);
    }
}
