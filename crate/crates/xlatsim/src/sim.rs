//! Simulation orchestration: the per-access event loop, run statistics,
//! parameter sweeps, and report formatting.

use serde::Serialize;
use thiserror::Error;

use crate::cache::{AccessKind, Hierarchy};
use crate::config::{SimConfig, SimMode, TraceKind};
use crate::engine::{
    self, generate_candidates, page_offset, speculate_and_translate, SpecState,
};
use crate::hash::{HashPolicy, Vpn};
use crate::mem::{MemError, PhysMem, PAGE_BYTES};
use crate::mmu::{mpki, MmuState, TlbLookup};
use crate::pt::{NestedSpace, PtError, RadixPageTable};
use crate::trace::{self, TraceError, TraceEvent};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Pt(#[from] PtError),
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot read trace file '{path}': {reason}")]
    TraceIo { path: String, reason: String },
}

/// Flat per-run statistics. Serialized as one JSON object or one CSV row;
/// the bulky per-access traces are kept out of the serialized forms.
#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub mode: String,
    pub seed: u64,
    pub pressure: f64,
    pub n_max: usize,
    pub accesses: u64,
    pub instructions: u64,
    pub l1_tlb_hits: u64,
    pub l2_tlb_hits: u64,
    pub tlb_misses: u64,
    pub walks: u64,
    pub l2_tlb_mpki: f64,
    pub avg_walk_latency: f64,
    pub p50_walk_latency: u64,
    pub p95_walk_latency: u64,
    pub p99_walk_latency: u64,
    /// TLB lookup + walk, averaged over all measured accesses.
    pub avg_translation_latency: f64,
    /// TLB lookup + walk + data, averaged over all measured accesses.
    pub avg_memory_latency: f64,
    pub spec_data_issued: u64,
    pub spec_pt_issued: u64,
    pub spec_data_hits: u64,
    pub spec_pt_hits: u64,
    pub wasted_fetches: u64,
    pub tier_confirms: Vec<u64>,
    pub fallback_confirms: u64,
    /// Walks whose page was hash-allocated / fallback-allocated.
    pub hash_allocated_walks: u64,
    pub fallback_walks: u64,
    pub mapped_pages: u64,
    pub hash_allocated_pages: u64,
    pub nested_pt_reads: u64,
    pub dram_demand_bytes: u64,
    pub dram_speculative_bytes: u64,
    pub bw_ewma_final: f64,
    pub final_n_eff: usize,
    /// (cycle, clamped utilization EWMA, n_eff) sampled at each walk.
    #[serde(skip)]
    pub bw_series: Vec<(u64, f64, usize)>,
    /// Resolved PPN of every access (warmup included), in trace order.
    #[serde(skip)]
    pub resolved_ppns: Vec<u64>,
    /// Final (vpn, ppn) mapping, sorted by vpn.
    #[serde(skip)]
    pub mapping_snapshot: Vec<(u64, u64)>,
}

fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

/// Generates or loads the event stream described by the config.
pub fn build_events(cfg: &SimConfig) -> Result<Vec<TraceEvent>, RunError> {
    if !cfg.trace_path.is_empty() {
        let file = std::fs::File::open(&cfg.trace_path).map_err(|e| RunError::TraceIo {
            path: cfg.trace_path.clone(),
            reason: e.to_string(),
        })?;
        return Ok(trace::read_trace(std::io::BufReader::new(file))?);
    }
    Ok(match cfg.trace_kind {
        TraceKind::Uniform => trace::gen_uniform(
            cfg.trace_pages,
            cfg.trace_accesses,
            cfg.trace_instr_per_access,
            cfg.trace_stride,
            cfg.seed,
        ),
        TraceKind::Zipf => trace::gen_zipf(
            cfg.trace_pages,
            cfg.trace_accesses,
            cfg.trace_zipf_s,
            cfg.trace_instr_per_access,
            cfg.trace_stride,
            cfg.seed,
        ),
        TraceKind::Sequential => trace::gen_sequential(
            cfg.trace_pages,
            cfg.trace_accesses,
            cfg.trace_instr_per_access,
            cfg.trace_stride,
        ),
        TraceKind::PointerChase => trace::gen_pointer_chase(
            cfg.trace_pages,
            cfg.trace_accesses,
            cfg.trace_instr_per_access,
            cfg.trace_stride,
            cfg.seed,
        ),
    })
}

/// Runs one simulation over the given event stream.
pub fn run(cfg: &SimConfig, events: &[TraceEvent]) -> Result<RunStats, RunError> {
    let mut mem = PhysMem::new(cfg.total_frames)?;
    if cfg.pressure > 0.0 {
        mem.inject_pressure(cfg.pressure, cfg.seed)?;
    }
    let policy = HashPolicy::new(cfg.spec.n_max, cfg.policy_master_seed, cfg.total_frames);
    let mut table = RadixPageTable::new();
    let mut nested = match cfg.mode {
        SimMode::Nested => Some(NestedSpace::new(cfg.total_frames)?),
        _ => None,
    };
    let mut mmu = MmuState::new();
    let mut hierarchy = Hierarchy::new(cfg.hierarchy);
    let mut state = SpecState::new(cfg.spec.n_max);

    let speculating = matches!(cfg.mode, SimMode::Native | SimMode::PerfectSpeculation)
        || (cfg.mode == SimMode::Nested && cfg.spec.data_speculation);
    let perfect = cfg.mode == SimMode::PerfectSpeculation;

    let mut now = 0u64;
    let mut instructions = 0u64;
    let mut access_index = 0u64;
    let mut measured_accesses = 0u64;
    let mut l1_hits = 0u64;
    let mut l2_hits = 0u64;
    let mut misses = 0u64;
    let mut walk_latencies: Vec<u64> = Vec::new();
    let mut translation_cycles = 0u64;
    let mut memory_cycles = 0u64;
    let mut spec_data_issued = 0u64;
    let mut spec_pt_issued = 0u64;
    let mut spec_data_hits = 0u64;
    let mut spec_pt_hits = 0u64;
    let mut wasted = 0u64;
    let mut hash_walks = 0u64;
    let mut fallback_walks = 0u64;
    let mut nested_pt_reads = 0u64;
    let mut bw_series: Vec<(u64, f64, usize)> = Vec::new();
    let mut resolved_ppns: Vec<u64> = Vec::new();

    for ev in events {
        let va = match ev {
            TraceEvent::InstrDelta(k) => {
                now += k;
                instructions += k;
                continue;
            }
            TraceEvent::Load(va) | TraceEvent::Store(va) => *va,
        };
        let vpn = Vpn(va / PAGE_BYTES);
        let offset = page_offset(va);
        let measured = access_index >= cfg.warmup_accesses;
        access_index += 1;
        if measured {
            measured_accesses += 1;
        }

        // First touch: page-fault handling is setup, not measured time.
        match (&mut nested, cfg.mode) {
            (Some(ns), _) => {
                if !ns.is_mapped(vpn) {
                    ns.map_page(&mut mem, &policy, vpn)?;
                }
            }
            (None, _) => {
                if !table.is_mapped(vpn) {
                    table.map_page(&mut mem, &policy, vpn)?;
                }
            }
        }

        let (lookup_latency, hit_ppn) = match mmu.tlb_lookup(vpn.0) {
            TlbLookup::Hit { ppn, latency } => {
                if latency == crate::mmu::L1_TLB_LATENCY {
                    if measured {
                        l1_hits += 1;
                    }
                } else if measured {
                    l2_hits += 1;
                }
                (latency, Some(ppn))
            }
            TlbLookup::Miss { latency } => {
                if measured {
                    misses += 1;
                }
                (latency, None)
            }
        };

        let (walk_latency, data_latency, resolved) = match hit_ppn {
            Some(ppn) => {
                let data = hierarchy
                    .access(ppn.base_addr() + offset, now + lookup_latency, AccessKind::Demand)
                    .latency;
                (0u64, data, ppn)
            }
            None => {
                let walk_start = now + lookup_latency;
                match &mut nested {
                    Some(ns) => {
                        let hppn = ns.lookup(vpn).expect("mapped above").ppn;
                        let resolved_paddr = hppn.base_addr() + offset;
                        // Data-only speculation on the guest VPN: the host
                        // frame was assigned by the shared tiered policy, so
                        // candidates come straight from the hash family. No
                        // PT speculation across the 2-D walk.
                        let bw_util = {
                            hierarchy.bw.record_utilization(walk_start);
                            hierarchy.bw.utilization_clamped()
                        };
                        let candidates: Vec<(u64, usize)> = if perfect {
                            vec![(resolved_paddr, 0)]
                        } else if speculating {
                            let n_eff = engine::choose_degree(&mut state, &cfg.spec, bw_util);
                            generate_candidates(&policy, vpn, offset, n_eff)
                        } else {
                            Vec::new()
                        };
                        let completions: Vec<(u64, u64)> = candidates
                            .iter()
                            .map(|&(addr, _)| {
                                (addr, hierarchy.completes_at(addr, walk_start, AccessKind::Speculative))
                            })
                            .collect();
                        let wr = ns.nested_walk(vpn, &mut hierarchy, walk_start)?;
                        nested_pt_reads += wr.pt_accesses;
                        let walk_end = walk_start + wr.latency_cycles;
                        let hit = completions.iter().find(|(addr, _)| *addr == resolved_paddr);
                        let data = match hit {
                            Some(&(_, completion)) => {
                                let _ = hierarchy.access(resolved_paddr, walk_end, AccessKind::Demand);
                                completion
                                    .saturating_sub(walk_end)
                                    .max(hierarchy.l2_hit_path_latency())
                            }
                            None => {
                                hierarchy.access(resolved_paddr, walk_end, AccessKind::Demand).latency
                            }
                        };
                        if !candidates.is_empty() {
                            engine::confirm(&mut state, &policy, vpn, hppn);
                        }
                        if measured {
                            spec_data_issued += candidates.len() as u64;
                            if hit.is_some() {
                                spec_data_hits += 1;
                                wasted += candidates.len() as u64 - 1;
                            } else {
                                wasted += candidates.len() as u64;
                            }
                            let outcome = ns.lookup(vpn).expect("mapped above");
                            if outcome.tier.is_hash() {
                                hash_walks += 1;
                            } else {
                                fallback_walks += 1;
                            }
                            walk_latencies.push(wr.latency_cycles);
                            bw_series.push((walk_start, bw_util, state.n_eff()));
                        }
                        mmu.tlb_insert(vpn.0, hppn);
                        (wr.latency_cycles, data, hppn)
                    }
                    None if speculating => {
                        let t = speculate_and_translate(
                            &policy,
                            &table,
                            &mut mmu,
                            &mut hierarchy,
                            &mut state,
                            &cfg.spec,
                            vpn,
                            offset,
                            walk_start,
                            perfect,
                        )?;
                        if measured {
                            spec_data_issued += t.outcome.issued.len() as u64;
                            spec_pt_issued += t.outcome.pt_issued.len() as u64;
                            spec_data_hits += u64::from(t.outcome.data_hit);
                            spec_pt_hits += u64::from(t.outcome.pt_hit);
                            wasted += t.outcome.wasted_fetches;
                            let outcome = table.lookup(vpn).expect("mapped above");
                            if outcome.tier.is_hash() {
                                hash_walks += 1;
                            } else {
                                fallback_walks += 1;
                            }
                            walk_latencies.push(t.walk_latency);
                            bw_series.push((walk_start, t.bw_utilization, t.n_eff_used));
                        }
                        mmu.tlb_insert(vpn.0, t.resolved);
                        (t.walk_latency, t.data_latency, t.resolved)
                    }
                    None => {
                        let wr = table.walk(vpn, &mut mmu, &mut hierarchy, walk_start)?;
                        let walk_end = walk_start + wr.latency_cycles;
                        let data = hierarchy
                            .access(wr.ppn.base_addr() + offset, walk_end, AccessKind::Demand)
                            .latency;
                        if measured {
                            let outcome = table.lookup(vpn).expect("mapped above");
                            if outcome.tier.is_hash() {
                                hash_walks += 1;
                            } else {
                                fallback_walks += 1;
                            }
                            walk_latencies.push(wr.latency_cycles);
                        }
                        mmu.tlb_insert(vpn.0, wr.ppn);
                        (wr.latency_cycles, data, wr.ppn)
                    }
                }
            }
        };

        resolved_ppns.push(resolved.0);
        if measured {
            translation_cycles += lookup_latency + walk_latency;
            memory_cycles += lookup_latency + walk_latency + data_latency;
        }
        now += lookup_latency + walk_latency + data_latency;
    }

    walk_latencies.sort_unstable();
    let walks = walk_latencies.len() as u64;
    let (mapped_pages, hash_allocated_pages, mapping_snapshot) = match &nested {
        Some(ns) => {
            let snap = ns.snapshot();
            let hash = snap
                .iter()
                .filter(|(v, _)| ns.lookup(Vpn(*v)).expect("snapshot key").tier.is_hash())
                .count() as u64;
            (snap.len() as u64, hash, snap)
        }
        None => {
            let snap = table.snapshot();
            let hash = snap
                .iter()
                .filter(|(v, _)| table.lookup(Vpn(*v)).expect("snapshot key").tier.is_hash())
                .count() as u64;
            (snap.len() as u64, hash, snap)
        }
    };

    Ok(RunStats {
        mode: cfg.mode.to_string(),
        seed: cfg.seed,
        pressure: cfg.pressure,
        n_max: cfg.spec.n_max,
        accesses: measured_accesses,
        instructions,
        l1_tlb_hits: l1_hits,
        l2_tlb_hits: l2_hits,
        tlb_misses: misses,
        walks,
        l2_tlb_mpki: if instructions == 0 { 0.0 } else { mpki(misses, instructions) },
        avg_walk_latency: if walks == 0 {
            0.0
        } else {
            walk_latencies.iter().sum::<u64>() as f64 / walks as f64
        },
        p50_walk_latency: percentile(&walk_latencies, 0.50),
        p95_walk_latency: percentile(&walk_latencies, 0.95),
        p99_walk_latency: percentile(&walk_latencies, 0.99),
        avg_translation_latency: if measured_accesses == 0 {
            0.0
        } else {
            translation_cycles as f64 / measured_accesses as f64
        },
        avg_memory_latency: if measured_accesses == 0 {
            0.0
        } else {
            memory_cycles as f64 / measured_accesses as f64
        },
        spec_data_issued,
        spec_pt_issued,
        spec_data_hits,
        spec_pt_hits,
        wasted_fetches: wasted,
        tier_confirms: state.tier_success().to_vec(),
        fallback_confirms: state.fallback_count(),
        hash_allocated_walks: hash_walks,
        fallback_walks,
        mapped_pages,
        hash_allocated_pages,
        nested_pt_reads,
        dram_demand_bytes: hierarchy.bw.demand_bytes,
        dram_speculative_bytes: hierarchy.bw.speculative_bytes,
        bw_ewma_final: {
            hierarchy.bw.record_utilization(now);
            hierarchy.bw.utilization_clamped()
        },
        final_n_eff: state.n_eff(),
        bw_series,
        resolved_ppns,
        mapping_snapshot,
    })
}

/// Builds the event stream from the config and runs it.
pub fn run_config(cfg: &SimConfig) -> Result<RunStats, RunError> {
    let events = build_events(cfg)?;
    run(cfg, &events)
}

pub const CSV_COLUMNS: &[&str] = &[
    "mode",
    "seed",
    "pressure",
    "n_max",
    "accesses",
    "instructions",
    "l1_tlb_hits",
    "l2_tlb_hits",
    "tlb_misses",
    "walks",
    "l2_tlb_mpki",
    "avg_walk_latency",
    "p50_walk_latency",
    "p95_walk_latency",
    "p99_walk_latency",
    "avg_translation_latency",
    "avg_memory_latency",
    "spec_data_issued",
    "spec_pt_issued",
    "spec_data_hits",
    "spec_pt_hits",
    "wasted_fetches",
    "tier_confirms",
    "fallback_confirms",
    "hash_allocated_walks",
    "fallback_walks",
    "mapped_pages",
    "hash_allocated_pages",
    "nested_pt_reads",
    "dram_demand_bytes",
    "dram_speculative_bytes",
    "bw_ewma_final",
    "final_n_eff",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_row(s: &RunStats) -> String {
    let tiers = s
        .tier_confirms
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join("|");
    [
        s.mode.clone(),
        s.seed.to_string(),
        format!("{:.6}", s.pressure),
        s.n_max.to_string(),
        s.accesses.to_string(),
        s.instructions.to_string(),
        s.l1_tlb_hits.to_string(),
        s.l2_tlb_hits.to_string(),
        s.tlb_misses.to_string(),
        s.walks.to_string(),
        format!("{:.6}", s.l2_tlb_mpki),
        format!("{:.6}", s.avg_walk_latency),
        s.p50_walk_latency.to_string(),
        s.p95_walk_latency.to_string(),
        s.p99_walk_latency.to_string(),
        format!("{:.6}", s.avg_translation_latency),
        format!("{:.6}", s.avg_memory_latency),
        s.spec_data_issued.to_string(),
        s.spec_pt_issued.to_string(),
        s.spec_data_hits.to_string(),
        s.spec_pt_hits.to_string(),
        s.wasted_fetches.to_string(),
        tiers,
        s.fallback_confirms.to_string(),
        s.hash_allocated_walks.to_string(),
        s.fallback_walks.to_string(),
        s.mapped_pages.to_string(),
        s.hash_allocated_pages.to_string(),
        s.nested_pt_reads.to_string(),
        s.dram_demand_bytes.to_string(),
        s.dram_speculative_bytes.to_string(),
        format!("{:.6}", s.bw_ewma_final),
        s.final_n_eff.to_string(),
    ]
    .join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Pressure,
    NMax,
    Bandwidth,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pressure" => Ok(SweepAxis::Pressure),
            "n_max" => Ok(SweepAxis::NMax),
            "bandwidth" => Ok(SweepAxis::Bandwidth),
            other => Err(format!(
                "unknown sweep axis '{other}' (expected pressure | n_max | bandwidth)"
            )),
        }
    }
}

/// One run per value, CSV rows ordered by ascending axis value.
pub fn sweep(base: &SimConfig, axis: SweepAxis, values: &[f64]) -> Result<String, RunError> {
    let mut ordered = values.to_vec();
    ordered.sort_by(|a, b| a.partial_cmp(b).expect("axis values must be comparable"));
    let mut out = csv_header();
    out.push('\n');
    for &v in &ordered {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::Pressure => cfg.pressure = v,
            SweepAxis::NMax => cfg.spec.n_max = v as usize,
            SweepAxis::Bandwidth => cfg.hierarchy.bw_peak_bytes_per_cycle = v,
        }
        let stats = run_config(&cfg)?;
        out.push_str(&csv_row(&stats));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Csv,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(ReportFormat::Human),
            "csv" => Ok(ReportFormat::Csv),
            "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(format!(
                "unknown format '{other}' (expected human | csv | json-lines)"
            )),
        }
    }
}

pub fn report(stats: &RunStats, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => format!("{}\n{}\n", csv_header(), csv_row(stats)),
        ReportFormat::JsonLines => {
            let mut s = serde_json::to_string(stats).expect("stats serialize");
            s.push('\n');
            s
        }
        ReportFormat::Human => {
            let model_success = 1.0 - stats.pressure.powi(stats.n_max as i32);
            let measured_success = if stats.mapped_pages == 0 {
                0.0
            } else {
                stats.hash_allocated_pages as f64 / stats.mapped_pages as f64
            };
            let mut out = String::new();
            out.push_str(&format!(
                "mode {} | seed {} | pressure {:.2} | N {}\n",
                stats.mode, stats.seed, stats.pressure, stats.n_max
            ));
            out.push_str(&format!(
                "accesses {} | instructions {} | walks {}\n",
                stats.accesses, stats.instructions, stats.walks
            ));
            out.push_str(&format!(
                "TLB: L1 hits {} | L2 hits {} | misses {} | MPKI {:.3}\n",
                stats.l1_tlb_hits, stats.l2_tlb_hits, stats.tlb_misses, stats.l2_tlb_mpki
            ));
            out.push_str(&format!(
                "latency (cycles): walk avg {:.2} p50 {} p95 {} p99 {} | translation avg {:.2} | memory avg {:.2}\n",
                stats.avg_walk_latency,
                stats.p50_walk_latency,
                stats.p95_walk_latency,
                stats.p99_walk_latency,
                stats.avg_translation_latency,
                stats.avg_memory_latency
            ));
            out.push_str(&format!(
                "speculation: data issued {} hits {} | PT issued {} hits {} | wasted {}\n",
                stats.spec_data_issued,
                stats.spec_data_hits,
                stats.spec_pt_issued,
                stats.spec_pt_hits,
                stats.wasted_fetches
            ));
            out.push_str(&format!(
                "allocation success: model {:.4} | measured {:.4} ({} of {} pages)\n",
                model_success, measured_success, stats.hash_allocated_pages, stats.mapped_pages
            ));
            out.push_str(&format!(
                "DRAM bytes: demand {} | speculative {} | bw EWMA {:.4} | n_eff {}\n",
                stats.dram_demand_bytes,
                stats.dram_speculative_bytes,
                stats.bw_ewma_final,
                stats.final_n_eff
            ));
            out
        }
    }
}
