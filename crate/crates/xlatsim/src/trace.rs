//! Trace file format, reader/writer, and synthetic workload generators.
//!
//! Grammar, one event per line: `I <dec>` | `L 0x<hex>` | `S 0x<hex>`.
//! `#` starts a comment line; blank lines are ignored.

use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mem::PAGE_BYTES;

pub const VA_BITS: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// `count` instructions retired since the previous event.
    InstrDelta(u64),
    Load(u64),
    Store(u64),
}

impl TraceEvent {
    pub fn address(&self) -> Option<u64> {
        match self {
            TraceEvent::Load(va) | TraceEvent::Store(va) => Some(*va),
            TraceEvent::InstrDelta(_) => None,
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::InstrDelta(n) => write!(f, "I {n}"),
            TraceEvent::Load(va) => write!(f, "L {va:#x}"),
            TraceEvent::Store(va) => write!(f, "S {va:#x}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error reading trace: {0}")]
    Io(String),
}

fn parse_fail(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse { line, message: message.into() }
}

/// Parses one trace line. `line_no` is only used for error reporting.
pub fn parse_line(text: &str, line_no: usize) -> Result<TraceEvent, TraceError> {
    let mut parts = text.split_whitespace();
    let tag = parts.next().ok_or_else(|| parse_fail(line_no, "empty line"))?;
    let arg = parts
        .next()
        .ok_or_else(|| parse_fail(line_no, format!("'{tag}' needs an argument")))?;
    if parts.next().is_some() {
        return Err(parse_fail(line_no, "trailing tokens"));
    }
    match tag {
        "I" => {
            let n: u64 = arg
                .parse()
                .map_err(|_| parse_fail(line_no, format!("bad instruction count '{arg}'")))?;
            if n == 0 {
                return Err(parse_fail(line_no, "instruction delta must be >= 1"));
            }
            Ok(TraceEvent::InstrDelta(n))
        }
        "L" | "S" => {
            let hex = arg
                .strip_prefix("0x")
                .ok_or_else(|| parse_fail(line_no, format!("address '{arg}' missing 0x prefix")))?;
            let va = u64::from_str_radix(hex, 16)
                .map_err(|_| parse_fail(line_no, format!("bad hex address '{arg}'")))?;
            if va >= 1 << VA_BITS {
                return Err(parse_fail(line_no, format!("address {va:#x} exceeds 48 bits")));
            }
            Ok(if tag == "L" { TraceEvent::Load(va) } else { TraceEvent::Store(va) })
        }
        other => Err(parse_fail(line_no, format!("unknown event tag '{other}'"))),
    }
}

/// Reads a whole trace, skipping comments and blank lines.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        events.push(parse_line(trimmed, idx + 1)?);
    }
    Ok(events)
}

pub fn write_trace<W: Write>(writer: &mut W, events: &[TraceEvent]) -> std::io::Result<()> {
    for ev in events {
        writeln!(writer, "{ev}")?;
    }
    Ok(())
}

/// Virtual page number of trace page `page` under placement stride
/// `stride` (in pages). Stride 1 is a contiguous region starting at VA 0;
/// the default stride of one page per 512-VPN leaf-table block emulates the
/// page-table footprint of a large workload at desk scale.
fn place(page: u64, stride: u64) -> u64 {
    page * stride
}

fn check_bounds(pages: u64, stride: u64) {
    assert!(pages >= 1 && stride >= 1);
    assert!(
        pages.saturating_mul(stride) <= 1 << (VA_BITS - 12),
        "pages * stride exceeds the 48-bit VA space"
    );
}

fn push_access(events: &mut Vec<TraceEvent>, instr_per_access: u64, vpn: u64, offset: u64) {
    events.push(TraceEvent::InstrDelta(instr_per_access));
    events.push(TraceEvent::Load(vpn * PAGE_BYTES + offset));
}

/// Uniformly random pages with a random 8-byte-aligned offset per access.
pub fn gen_uniform(
    pages: u64,
    accesses: u64,
    instr_per_access: u64,
    stride: u64,
    seed: u64,
) -> Vec<TraceEvent> {
    check_bounds(pages, stride);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(2 * accesses as usize);
    for _ in 0..accesses {
        let page = rng.random_range(0..pages);
        let offset = rng.random_range(0..PAGE_BYTES / 8) * 8;
        push_access(&mut events, instr_per_access, place(page, stride), offset);
    }
    events
}

/// Zipfian page popularity with exponent `s` (s = 0 degenerates to uniform).
pub fn gen_zipf(
    pages: u64,
    accesses: u64,
    s: f64,
    instr_per_access: u64,
    stride: u64,
    seed: u64,
) -> Vec<TraceEvent> {
    check_bounds(pages, stride);
    assert!(s >= 0.0);
    // Cumulative weights over ranks; page identity = rank.
    let mut cdf = Vec::with_capacity(pages as usize);
    let mut acc = 0.0f64;
    for rank in 1..=pages {
        acc += (rank as f64).powf(-s);
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(2 * accesses as usize);
    for _ in 0..accesses {
        let u = rng.random_range(0.0..total);
        let page = cdf.partition_point(|&c| c < u) as u64;
        let offset = rng.random_range(0..PAGE_BYTES / 8) * 8;
        push_access(&mut events, instr_per_access, place(page.min(pages - 1), stride), offset);
    }
    events
}

/// Streams pages 0..pages in order, wrapping around.
pub fn gen_sequential(pages: u64, accesses: u64, instr_per_access: u64, stride: u64) -> Vec<TraceEvent> {
    check_bounds(pages, stride);
    let mut events = Vec::with_capacity(2 * accesses as usize);
    for i in 0..accesses {
        push_access(&mut events, instr_per_access, place(i % pages, stride), 0);
    }
    events
}

/// Follows a single random cycle over all pages (Sattolo's algorithm), so
/// every page is visited exactly once per `pages` accesses.
pub fn gen_pointer_chase(
    pages: u64,
    accesses: u64,
    instr_per_access: u64,
    stride: u64,
    seed: u64,
) -> Vec<TraceEvent> {
    check_bounds(pages, stride);
    let mut next: Vec<u64> = (0..pages).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Sattolo: a uniformly random cyclic permutation.
    for i in (1..pages as usize).rev() {
        let j = rng.random_range(0..i);
        next.swap(i, j);
    }
    let mut events = Vec::with_capacity(2 * accesses as usize);
    let mut cur = 0u64;
    for _ in 0..accesses {
        push_access(&mut events, instr_per_access, place(cur, stride), 0);
        cur = next[cur as usize];
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn parse_examples() {
        assert_eq!(parse_line("I 100", 1).unwrap(), TraceEvent::InstrDelta(100));
        assert_eq!(
            parse_line("L 0x7f0000001000", 2).unwrap(),
            TraceEvent::Load(0x7f0000001000)
        );
        assert_eq!(parse_line("S 0x10", 3).unwrap(), TraceEvent::Store(0x10));
        let err = parse_line("X 5", 7).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 7, .. }));
        assert!(parse_line("L 1000", 1).is_err()); // missing 0x
        assert!(parse_line("I 0", 1).is_err());
        assert!(parse_line("L 0x1000000000000", 1).is_err()); // > 48 bits
    }

    #[test]
    fn comments_and_blanks_skipped_with_line_numbers() {
        let text = "# header\n\nI 10\nL 0x1000\nbogus\n";
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 5, .. }));
    }

    #[test]
    fn generators_deterministic() {
        assert_eq!(gen_uniform(64, 100, 10, 1, 3), gen_uniform(64, 100, 10, 1, 3));
        assert_ne!(gen_uniform(64, 100, 10, 1, 3), gen_uniform(64, 100, 10, 1, 4));
        assert_eq!(
            gen_zipf(64, 100, 0.99, 10, 1, 3),
            gen_zipf(64, 100, 0.99, 10, 1, 3)
        );
        assert_eq!(
            gen_pointer_chase(64, 100, 10, 1, 3),
            gen_pointer_chase(64, 100, 10, 1, 3)
        );
    }

    #[test]
    fn stride_spreads_pages_across_leaf_blocks() {
        let vpns: HashSet<u64> = gen_uniform(100, 5_000, 10, 512, 9)
            .iter()
            .filter_map(|e| e.address())
            .map(|va| va / PAGE_BYTES)
            .collect();
        for vpn in vpns {
            assert_eq!(vpn % 512, 0);
            assert!(vpn < 100 * 512);
        }
        // Same page sequence as stride 1, just placed differently.
        let a: Vec<u64> = gen_uniform(100, 500, 10, 1, 9)
            .iter()
            .filter_map(|e| e.address())
            .map(|va| va / PAGE_BYTES)
            .collect();
        let b: Vec<u64> = gen_uniform(100, 500, 10, 512, 9)
            .iter()
            .filter_map(|e| e.address())
            .map(|va| va / PAGE_BYTES / 512)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_single_page() {
        for ev in gen_uniform(1, 50, 10, 1, 1) {
            if let Some(va) = ev.address() {
                assert!(va < PAGE_BYTES);
            }
        }
    }

    #[test]
    fn uniform_distinct_pages_match_coupon_collector() {
        let pages = 10_000u64;
        let accesses = 100_000u64;
        let touched: HashSet<u64> = gen_uniform(pages, accesses, 10, 1, 11)
            .iter()
            .filter_map(|e| e.address())
            .map(|va| va / PAGE_BYTES)
            .collect();
        // E[distinct] = n * (1 - (1 - 1/n)^m)
        let n = pages as f64;
        let expect = n * (1.0 - (1.0 - 1.0 / n).powi(accesses as i32));
        let got = touched.len() as f64;
        assert!((got - expect).abs() / expect < 0.05, "got {got}, expected {expect}");
    }

    #[test]
    fn sequential_visits_in_order() {
        let pages: Vec<u64> = gen_sequential(5, 12, 10, 1)
            .iter()
            .filter_map(|e| e.address())
            .map(|va| va / PAGE_BYTES)
            .collect();
        assert_eq!(pages, vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1]);
    }

    #[test]
    fn pointer_chase_is_a_full_cycle() {
        let pages = 257u64;
        let visited: Vec<u64> = gen_pointer_chase(pages, pages, 10, 1, 5)
            .iter()
            .filter_map(|e| e.address())
            .map(|va| va / PAGE_BYTES)
            .collect();
        let distinct: HashSet<u64> = visited.iter().copied().collect();
        assert_eq!(distinct.len() as u64, pages);
    }

    #[test]
    fn zipf_zero_exponent_is_roughly_uniform() {
        let counts = gen_zipf(4, 40_000, 0.0, 10, 1, 7)
            .iter()
            .filter_map(|e| e.address())
            .fold([0u64; 4], |mut c, va| {
                c[(va / PAGE_BYTES) as usize] += 1;
                c
            });
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 600.0, "counts {counts:?}");
        }
    }

    #[test]
    fn zipf_skews_toward_low_ranks() {
        let counts = gen_zipf(100, 20_000, 1.2, 10, 1, 7)
            .iter()
            .filter_map(|e| e.address())
            .fold(vec![0u64; 100], |mut c, va| {
                c[(va / PAGE_BYTES) as usize] += 1;
                c
            });
        assert!(counts[0] > counts[10] && counts[10] > counts[90]);
    }

    proptest! {
        #[test]
        fn round_trip(events in proptest::collection::vec(
            prop_oneof![
                (1u64..1_000_000).prop_map(TraceEvent::InstrDelta),
                (0u64..(1 << 48)).prop_map(TraceEvent::Load),
                (0u64..(1 << 48)).prop_map(TraceEvent::Store),
            ],
            0..50,
        )) {
            let mut buf = Vec::new();
            write_trace(&mut buf, &events).unwrap();
            let parsed = read_trace(buf.as_slice()).unwrap();
            prop_assert_eq!(parsed, events);
        }
    }
}
