//! Simulation configuration: defaults, `key = value` file parsing, and
//! `--set` style overrides. Every tunable is printable via `print-config`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::cache::HierarchyConfig;
use crate::engine::SpecConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for key '{key}': {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimMode {
    Native,
    Nested,
    SpeculationOff,
    PerfectSpeculation,
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::Native => "native",
            SimMode::Nested => "nested",
            SimMode::SpeculationOff => "speculation-off",
            SimMode::PerfectSpeculation => "perfect-speculation",
        })
    }
}

impl FromStr for SimMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" => Ok(SimMode::Native),
            "nested" => Ok(SimMode::Nested),
            "speculation-off" => Ok(SimMode::SpeculationOff),
            "perfect-speculation" => Ok(SimMode::PerfectSpeculation),
            other => Err(format!(
                "unknown mode '{other}' (expected native | nested | speculation-off | perfect-speculation)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Uniform,
    Zipf,
    Sequential,
    PointerChase,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Uniform => "uniform",
            TraceKind::Zipf => "zipf",
            TraceKind::Sequential => "sequential",
            TraceKind::PointerChase => "pointer-chase",
        })
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(TraceKind::Uniform),
            "zipf" => Ok(TraceKind::Zipf),
            "sequential" => Ok(TraceKind::Sequential),
            "pointer-chase" => Ok(TraceKind::PointerChase),
            other => Err(format!(
                "unknown trace kind '{other}' (expected uniform | zipf | sequential | pointer-chase)"
            )),
        }
    }
}

/// Full simulation configuration. Field groups mirror the dotted key
/// namespaces of the config file (`spec.n_max = 3` etc.).
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub total_frames: u64,
    /// Pre-injected frame occupancy fraction p = M / P.
    pub pressure: f64,
    pub seed: u64,
    pub mode: SimMode,
    /// Accesses excluded from statistics at the start of the run.
    pub warmup_accesses: u64,
    pub policy_master_seed: u64,
    pub spec: SpecConfig,
    pub hierarchy: HierarchyConfig,
    pub trace_kind: TraceKind,
    pub trace_pages: u64,
    pub trace_accesses: u64,
    pub trace_zipf_s: f64,
    pub trace_instr_per_access: u64,
    /// Page placement stride, in pages. 1 packs pages contiguously; the
    /// default of 512 places one page per leaf-table block, so the
    /// page-table footprint matches a much larger working set.
    pub trace_stride: u64,
    /// When non-empty, read events from this file instead of generating.
    pub trace_path: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            total_frames: 1 << 20,
            pressure: 0.0,
            seed: 42,
            mode: SimMode::Native,
            warmup_accesses: 0,
            policy_master_seed: 1,
            spec: SpecConfig::new(3),
            hierarchy: HierarchyConfig::default(),
            trace_kind: TraceKind::Uniform,
            trace_pages: 16384,
            trace_accesses: 100_000,
            trace_zipf_s: 0.99,
            trace_instr_per_access: 10,
            trace_stride: 512,
            trace_path: String::new(),
        }
    }
}

fn bad_value(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad_value(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(bad_value(key, value, "expected true|false")),
    }
}

impl SimConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "total_frames" => self.total_frames = parse_num(key, value)?,
            "pressure" => self.pressure = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "mode" => self.mode = value.parse().map_err(|e| bad_value(key, value, e))?,
            "warmup_accesses" => self.warmup_accesses = parse_num(key, value)?,
            "policy.master_seed" => self.policy_master_seed = parse_num(key, value)?,
            "spec.n_max" => self.spec.n_max = parse_num(key, value)?,
            "spec.k_pt" => self.spec.k_pt = parse_num(key, value)?,
            "spec.filter" => self.spec.filter_enabled = parse_bool(key, value)?,
            "spec.theta" => self.spec.theta = parse_num(key, value)?,
            "spec.bw_hi" => self.spec.bw_hi = parse_num(key, value)?,
            "spec.bw_lo" => self.spec.bw_lo = parse_num(key, value)?,
            "spec.data" => self.spec.data_speculation = parse_bool(key, value)?,
            "spec.pt" => self.spec.pt_speculation = parse_bool(key, value)?,
            "hier.l1_latency" => self.hierarchy.l1_latency = parse_num(key, value)?,
            "hier.l2_latency" => self.hierarchy.l2_latency = parse_num(key, value)?,
            "hier.llc_latency" => self.hierarchy.llc_latency = parse_num(key, value)?,
            "hier.dram_latency" => self.hierarchy.dram_latency = parse_num(key, value)?,
            "bw.peak" => self.hierarchy.bw_peak_bytes_per_cycle = parse_num(key, value)?,
            "bw.window" => self.hierarchy.bw_window_cycles = parse_num(key, value)?,
            "bw.alpha" => self.hierarchy.bw_ewma_alpha = parse_num(key, value)?,
            "trace.kind" => self.trace_kind = value.parse().map_err(|e| bad_value(key, value, e))?,
            "trace.pages" => self.trace_pages = parse_num(key, value)?,
            "trace.accesses" => self.trace_accesses = parse_num(key, value)?,
            "trace.zipf_s" => self.trace_zipf_s = parse_num(key, value)?,
            "trace.instr_per_access" => self.trace_instr_per_access = parse_num(key, value)?,
            "trace.stride" => self.trace_stride = parse_num(key, value)?,
            "trace.path" => self.trace_path = value.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses a line-oriented `key = value` file body. `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    text: raw.trim().to_string(),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `--set key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: 0,
                text: assignment.to_string(),
            });
        };
        self.set(key.trim(), value.trim())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_frames == 0 {
            return Err(ConfigError::Invalid("total_frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pressure) {
            return Err(ConfigError::Invalid("pressure must be in [0, 1]".into()));
        }
        if self.spec.n_max == 0 {
            return Err(ConfigError::Invalid("spec.n_max must be >= 1".into()));
        }
        if self.spec.k_pt == 0 {
            return Err(ConfigError::Invalid("spec.k_pt must be >= 1".into()));
        }
        for (name, v) in [
            ("spec.theta", self.spec.theta),
            ("spec.bw_hi", self.spec.bw_hi),
            ("spec.bw_lo", self.spec.bw_lo),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} must be in [0, 1]")));
            }
        }
        if self.spec.bw_lo > self.spec.bw_hi {
            return Err(ConfigError::Invalid(
                "spec.bw_lo must not exceed spec.bw_hi".into(),
            ));
        }
        if self.hierarchy.bw_peak_bytes_per_cycle <= 0.0 {
            return Err(ConfigError::Invalid("bw.peak must be positive".into()));
        }
        if self.hierarchy.bw_window_cycles == 0 {
            return Err(ConfigError::Invalid("bw.window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.hierarchy.bw_ewma_alpha) {
            return Err(ConfigError::Invalid("bw.alpha must be in [0, 1]".into()));
        }
        if self.trace_path.is_empty() {
            if self.trace_pages == 0 {
                return Err(ConfigError::Invalid("trace.pages must be >= 1".into()));
            }
            if self.trace_zipf_s < 0.0 {
                return Err(ConfigError::Invalid("trace.zipf_s must be >= 0".into()));
            }
            if self.trace_instr_per_access == 0 {
                return Err(ConfigError::Invalid(
                    "trace.instr_per_access must be >= 1".into(),
                ));
            }
            if self.trace_stride == 0 {
                return Err(ConfigError::Invalid("trace.stride must be >= 1".into()));
            }
            if self.trace_pages.saturating_mul(self.trace_stride) > 1 << 36 {
                return Err(ConfigError::Invalid(
                    "trace.pages * trace.stride exceeds the 48-bit VA space".into(),
                ));
            }
        }
        Ok(())
    }

    /// All keys with their current values, in file syntax, for `print-config`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("total_frames", self.total_frames.to_string()),
            ("pressure", self.pressure.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", self.mode.to_string()),
            ("warmup_accesses", self.warmup_accesses.to_string()),
            ("policy.master_seed", self.policy_master_seed.to_string()),
            ("spec.n_max", self.spec.n_max.to_string()),
            ("spec.k_pt", self.spec.k_pt.to_string()),
            ("spec.filter", self.spec.filter_enabled.to_string()),
            ("spec.theta", self.spec.theta.to_string()),
            ("spec.bw_hi", self.spec.bw_hi.to_string()),
            ("spec.bw_lo", self.spec.bw_lo.to_string()),
            ("spec.data", self.spec.data_speculation.to_string()),
            ("spec.pt", self.spec.pt_speculation.to_string()),
            ("hier.l1_latency", self.hierarchy.l1_latency.to_string()),
            ("hier.l2_latency", self.hierarchy.l2_latency.to_string()),
            ("hier.llc_latency", self.hierarchy.llc_latency.to_string()),
            ("hier.dram_latency", self.hierarchy.dram_latency.to_string()),
            ("bw.peak", self.hierarchy.bw_peak_bytes_per_cycle.to_string()),
            ("bw.window", self.hierarchy.bw_window_cycles.to_string()),
            ("bw.alpha", self.hierarchy.bw_ewma_alpha.to_string()),
            ("trace.kind", self.trace_kind.to_string()),
            ("trace.pages", self.trace_pages.to_string()),
            ("trace.accesses", self.trace_accesses.to_string()),
            ("trace.zipf_s", self.trace_zipf_s.to_string()),
            (
                "trace.instr_per_access",
                self.trace_instr_per_access.to_string(),
            ),
            ("trace.stride", self.trace_stride.to_string()),
            ("trace.path", self.trace_path.clone()),
        ] {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn file_parsing_with_comments() {
        let mut cfg = SimConfig::default();
        cfg.apply_file(
            "# comment\n\nspec.n_max = 6   # trailing comment\npressure = 0.4\nmode = nested\n",
        )
        .unwrap();
        assert_eq!(cfg.spec.n_max, 6);
        assert_eq!(cfg.pressure, 0.4);
        assert_eq!(cfg.mode, SimMode::Nested);
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let mut cfg = SimConfig::default();
        let err = cfg.apply_file("seed = 1\nnonsense line\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = SimConfig::default();
        assert!(matches!(
            cfg.apply_override("bogus.key=1"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn overrides_win() {
        let mut cfg = SimConfig::default();
        cfg.apply_file("seed = 1\n").unwrap();
        cfg.apply_override("seed=99").unwrap();
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let cfg = SimConfig {
            pressure: 1.5,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());

        let mut cfg = SimConfig::default();
        cfg.spec.bw_lo = 0.9;
        cfg.spec.bw_hi = 0.5;
        assert!(cfg.validate().is_err());

        let mut cfg = SimConfig::default();
        cfg.spec.n_max = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn render_round_trips_through_parser() {
        let mut cfg = SimConfig::default();
        cfg.apply_override("spec.filter=true").unwrap();
        cfg.apply_override("trace.kind=zipf").unwrap();
        let rendered = cfg.render();
        let mut reparsed = SimConfig::default();
        reparsed.apply_file(&rendered).unwrap();
        assert_eq!(reparsed.render(), rendered);
    }
}
