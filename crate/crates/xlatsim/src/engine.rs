//! Hardware speculation engine: candidate physical-address generation from
//! the shared hash policy, speculative issue at walk start, the dynamic
//! speculation-degree filter, and post-walk confirmation feedback.

use crate::cache::{AccessKind, Hierarchy};
use crate::hash::{HashPolicy, Vpn};
use crate::mem::{Ppn, PAGE_BYTES};
use crate::mmu::MmuState;
use crate::pt::{pt_entry_address, LevelSource, PtError, RadixPageTable};

#[derive(Debug, Clone, Copy)]
pub struct SpecConfig {
    /// Upper bound on the speculation degree; mirrors the policy's N.
    pub n_max: usize,
    /// How many tiers to speculate for the leaf PT frame.
    pub k_pt: usize,
    pub filter_enabled: bool,
    /// Cumulative-coverage target for the pressure signal.
    pub theta: f64,
    /// Bandwidth watermarks: shrink above `bw_hi`, grow below `bw_lo`.
    pub bw_hi: f64,
    pub bw_lo: f64,
    pub data_speculation: bool,
    pub pt_speculation: bool,
}

impl SpecConfig {
    pub fn new(n_max: usize) -> Self {
        SpecConfig {
            n_max,
            k_pt: 1,
            filter_enabled: false,
            theta: 0.95,
            bw_hi: 0.85,
            bw_lo: 0.50,
            data_speculation: true,
            pt_speculation: true,
        }
    }
}

/// Per-tier confirmation counters and the current effective degree.
#[derive(Debug, Clone)]
pub struct SpecState {
    tier_success: Vec<u64>,
    fallback_count: u64,
    n_eff: usize,
}

impl SpecState {
    pub fn new(n_max: usize) -> Self {
        SpecState {
            tier_success: vec![0; n_max],
            fallback_count: 0,
            n_eff: n_max,
        }
    }

    pub fn n_eff(&self) -> usize {
        self.n_eff
    }

    pub fn tier_success(&self) -> &[u64] {
        &self.tier_success
    }

    pub fn fallback_count(&self) -> u64 {
        self.fallback_count
    }

    #[cfg(test)]
    pub(crate) fn set_counters(&mut self, tiers: &[u64], fallback: u64) {
        self.tier_success = tiers.to_vec();
        self.fallback_count = fallback;
    }
}

/// Smallest degree whose cumulative confirmed share reaches `theta`;
/// `n_max` when unreachable (including before any feedback).
fn pressure_target(state: &SpecState, cfg: &SpecConfig) -> usize {
    let total: u64 = state.tier_success.iter().sum::<u64>() + state.fallback_count;
    if total == 0 {
        return cfg.n_max;
    }
    let mut cum = 0u64;
    for (i, &c) in state.tier_success.iter().enumerate() {
        cum += c;
        if cum as f64 / total as f64 >= cfg.theta {
            return i + 1;
        }
    }
    cfg.n_max
}

/// Adapts the effective speculation degree from the pressure proxy (per-tier
/// confirmation counters) and the bandwidth utilization EWMA. Returns the
/// updated degree; with the filter disabled the degree is pinned at n_max.
pub fn choose_degree(state: &mut SpecState, cfg: &SpecConfig, bw_utilization: f64) -> usize {
    if !cfg.filter_enabled {
        state.n_eff = cfg.n_max;
        return state.n_eff;
    }
    let target = pressure_target(state, cfg);
    if bw_utilization > cfg.bw_hi {
        state.n_eff = state.n_eff.saturating_sub(1);
    } else if bw_utilization < cfg.bw_lo {
        state.n_eff = (state.n_eff + 1).min(target);
    }
    state.n_eff
}

/// Candidate data addresses for the first `n_eff` tiers, in tier order.
pub fn generate_candidates(
    policy: &HashPolicy,
    vpn: Vpn,
    page_offset: u64,
    n_eff: usize,
) -> Vec<(u64, usize)> {
    (1..=n_eff.min(policy.tier_count()))
        .map(|tier| {
            let ppn = policy.hash(tier, vpn).expect("tier within policy range");
            (ppn.base_addr() + page_offset, tier)
        })
        .collect()
}

/// Candidate leaf PT-entry addresses for the first `k_pt` tiers.
pub fn generate_pt_candidates(policy: &HashPolicy, vpn: Vpn, k_pt: usize) -> Vec<(u64, usize)> {
    (1..=k_pt.min(policy.tier_count()))
        .map(|tier| {
            let frame = policy
                .hash(tier, vpn.pt_frame_key())
                .expect("tier within policy range");
            (pt_entry_address(frame, vpn), tier)
        })
        .collect()
}

/// Credits the hash tier whose output matches the resolved frame (smallest
/// tier on collisions), else the fallback counter. Returns the matched tier.
pub fn confirm(state: &mut SpecState, policy: &HashPolicy, vpn: Vpn, resolved: Ppn) -> Option<usize> {
    for tier in 1..=policy.tier_count() {
        if policy.hash(tier, vpn).expect("tier in range") == resolved {
            if tier <= state.tier_success.len() {
                state.tier_success[tier - 1] += 1;
            }
            return Some(tier);
        }
    }
    state.fallback_count += 1;
    None
}

#[derive(Debug, Clone)]
pub struct SpecOutcome {
    /// Speculative data fetches issued: (physical address, tier).
    pub issued: Vec<(u64, usize)>,
    /// Speculative PT-entry fetches issued.
    pub pt_issued: Vec<(u64, usize)>,
    /// Tier whose data candidate matched the resolved address.
    pub hit_tier: Option<usize>,
    pub data_hit: bool,
    pub pt_hit: bool,
    pub wasted_fetches: u64,
}

#[derive(Debug, Clone)]
pub struct TranslationTiming {
    pub resolved: Ppn,
    pub pt_frame: Ppn,
    pub walk_latency: u64,
    pub data_latency: u64,
    pub level_sources: Vec<LevelSource>,
    pub outcome: SpecOutcome,
    pub n_eff_used: usize,
    pub bw_utilization: f64,
}

/// Full L2-TLB-miss handling with speculation: issues PT and data candidate
/// fetches at walk start, runs the walk with the leaf read overlapped when
/// the PT candidate matches, times the demand data access against the
/// in-flight speculative fetch, and feeds the confirmation counters.
///
/// With `perfect` set, exactly one always-correct data candidate is issued.
#[allow(clippy::too_many_arguments)]
pub fn speculate_and_translate(
    policy: &HashPolicy,
    table: &RadixPageTable,
    mmu: &mut MmuState,
    hierarchy: &mut Hierarchy,
    state: &mut SpecState,
    cfg: &SpecConfig,
    vpn: Vpn,
    page_offset: u64,
    now: u64,
    perfect: bool,
) -> Result<TranslationTiming, PtError> {
    let resolved = table.lookup(vpn).ok_or(PtError::PageFault(vpn.0))?.ppn;
    let resolved_paddr = resolved.base_addr() + page_offset;

    let bw_utilization = {
        hierarchy.bw.record_utilization(now);
        hierarchy.bw.utilization_clamped()
    };
    let n_eff = if cfg.data_speculation || perfect {
        choose_degree(state, cfg, bw_utilization)
    } else {
        0
    };

    let data_candidates: Vec<(u64, usize)> = if perfect {
        vec![(resolved_paddr, 0)]
    } else if cfg.data_speculation {
        generate_candidates(policy, vpn, page_offset, n_eff)
    } else {
        Vec::new()
    };
    let pt_candidates: Vec<(u64, usize)> = if cfg.pt_speculation {
        generate_pt_candidates(policy, vpn, cfg.k_pt)
    } else {
        Vec::new()
    };

    // All speculative fetches issue when the walk starts.
    let pt_completions: Vec<(u64, u64)> = pt_candidates
        .iter()
        .map(|&(addr, _)| (addr, hierarchy.completes_at(addr, now, AccessKind::Speculative)))
        .collect();
    let data_completions: Vec<(u64, u64, usize)> = data_candidates
        .iter()
        .map(|&(addr, tier)| {
            (addr, hierarchy.completes_at(addr, now, AccessKind::Speculative), tier)
        })
        .collect();

    // Serial upper levels; the leaf read is replaced by the speculative
    // fetch when a PT candidate targeted the resolved leaf frame.
    let upper = table.walk_upper(vpn, mmu, hierarchy, now)?;
    let mut level_sources = upper.sources.clone();
    let pt_match = pt_completions
        .iter()
        .find(|(addr, _)| *addr == upper.leaf_entry_addr);
    let (leaf_latency, pt_hit) = match pt_match {
        Some(&(_, completion)) => {
            // Verification against the level-2 pointer costs nothing; the
            // walk ends when the overlapped PTE fetch lands.
            let done_after_upper = now + upper.latency;
            (completion.saturating_sub(done_after_upper), true)
        }
        None => {
            let r = hierarchy.access(upper.leaf_entry_addr, now + upper.latency, AccessKind::Walk);
            level_sources.push(LevelSource::Cache(r.served_by));
            (r.latency, false)
        }
    };
    let walk_latency = upper.latency + leaf_latency;
    let walk_end = now + walk_latency;

    // Demand data access, bounded below by the L2 staging path and by the
    // in-flight speculative fetch when one targeted the right address.
    let data_match = data_completions
        .iter()
        .find(|(addr, _, _)| *addr == resolved_paddr);
    let data_latency = match data_match {
        Some(&(_, completion, _)) => {
            // Touch the hierarchy for state (the line is staged in L2).
            let _ = hierarchy.access(resolved_paddr, walk_end, AccessKind::Demand);
            completion
                .saturating_sub(walk_end)
                .max(hierarchy.l2_hit_path_latency())
        }
        None => hierarchy.access(resolved_paddr, walk_end, AccessKind::Demand).latency,
    };

    confirm(state, policy, vpn, resolved);
    let data_hit = data_match.is_some();
    let hit_tier = data_match.and_then(|&(_, _, tier)| if tier == 0 { None } else { Some(tier) });
    let wasted = data_candidates.len() as u64 - u64::from(data_hit);

    Ok(TranslationTiming {
        resolved,
        pt_frame: upper.leaf_frame,
        walk_latency,
        data_latency,
        level_sources,
        outcome: SpecOutcome {
            issued: data_candidates,
            pt_issued: pt_candidates,
            hit_tier,
            data_hit,
            pt_hit,
            wasted_fetches: wasted,
        },
        n_eff_used: n_eff,
        bw_utilization,
    })
}

/// Page offset of a virtual byte address.
pub fn page_offset(va: u64) -> u64 {
    va % PAGE_BYTES
}
