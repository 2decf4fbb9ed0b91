//! Shared run configuration, results, instrumentation and trace types for
//! the two solver loops.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::DefectiveCliqueCertificate;

/// Slopes at or below this are stationarity up to rounding; no ascent step
/// can be built from them.
pub const STATIONARY_EPS: f64 = 1e-13;

/// Iterations between wall-clock checks inside a run.
pub const TIME_CHECK_MASK: u64 = 1023;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Fdfw,
    Fwdc,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Fdfw => "fdfw",
            Algo::Fwdc => "fwdc",
        })
    }
}

impl std::str::FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fdfw" => Ok(Algo::Fdfw),
            "fwdc" => Ok(Algo::Fwdc),
            other => Err(format!("unknown algorithm `{other}` (fdfw|fwdc)")),
        }
    }
}

/// Stopping rule: a run ends when the FW gap is at most `eps_gap` and, with
/// `require_certificate`, the iterate rounds to an accepted certificate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StopConfig {
    pub eps_gap: f64,
    pub max_iters: u64,
    pub time_limit: Duration,
    pub require_certificate: bool,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            eps_gap: 1e-3,
            max_iters: u64::MAX,
            time_limit: Duration::from_secs(600),
            require_certificate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Gap criterion met and certificate accepted.
    Certified,
    /// Gap criterion met, certificate not required.
    GapReached,
    /// Stationary up to rounding without an accepted certificate.
    Stationary,
    /// Iteration budget exhausted without a certificate.
    MaxIters,
    TimeLimit,
    /// Internal inconsistency: no ascent direction while the gap was above
    /// threshold, or a line-search failure.
    Stalled,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Certified => "certified",
            StopReason::GapReached => "gap-reached",
            StopReason::Stationary => "stationary",
            StopReason::MaxIters => "no-certificate",
            StopReason::TimeLimit => "time-limit",
            StopReason::Stalled => "stalled",
        }
    }

    /// Reasons that mean "stopped on the gap criterion".
    pub fn gap_criterion(&self) -> bool {
        matches!(self, StopReason::Certified | StopReason::GapReached)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DirectionKind {
    Fw,
    InFace,
}

/// Per-iteration record for the optional ring-buffered trace.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub iter: u64,
    pub x: Vec<f64>,
    pub y_changed: bool,
    pub h: f64,
    pub gap: f64,
    pub face_gap: f64,
    pub kind: DirectionKind,
    pub alpha: f64,
    pub capped: bool,
}

/// Ring buffer capacity for traces.
pub const TRACE_CAPACITY: usize = 10_000;

/// Counters for the per-iteration theory assertions. All of them must stay
/// zero on instrumented runs.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct TheoryStats {
    /// Selected slope differed from the in-face gap.
    pub slope_mismatches: u64,
    /// Step capped at alpha_max but alpha_max > G/G_F + 1e-10.
    pub lemma41_violations: u64,
    /// (S1) failures at the rule's guaranteed constant.
    pub s1_violations: u64,
    /// (S2) failures at the rule's guaranteed constant.
    pub s2_violations: u64,
    /// y swaps that increased h by less than beta/2 - 1e-10 on a monotone run.
    pub y_increase_violations: u64,
    pub capped_steps: u64,
}

impl TheoryStats {
    pub fn clean(&self) -> bool {
        self.slope_mismatches == 0
            && self.lemma41_violations == 0
            && self.s1_violations == 0
            && self.s2_violations == 0
            && self.y_increase_violations == 0
    }

    pub fn merge(&mut self, other: &TheoryStats) {
        self.slope_mismatches += other.slope_mismatches;
        self.lemma41_violations += other.lemma41_violations;
        self.s1_violations += other.s1_violations;
        self.s2_violations += other.s2_violations;
        self.y_increase_violations += other.y_increase_violations;
        self.capped_steps += other.capped_steps;
    }
}

/// Outcome of one solver run.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub algo: Algo,
    pub instance: String,
    pub s: usize,
    pub seed: u64,
    /// Certified clique, or the rounded support as best candidate.
    pub clique: Vec<usize>,
    /// Fake-edge endpoint pairs (0-based) of the terminal y rounding.
    pub fake_edges: Vec<(usize, usize)>,
    pub certificate: Option<DefectiveCliqueCertificate>,
    pub objective: f64,
    pub gap: f64,
    pub iters: u64,
    pub y_changes: u64,
    pub time_ms: f64,
    pub stop_reason: StopReason,
    pub monotone: bool,
    pub theory: TheoryStats,
    pub gradient_rebuilds: u32,
    pub trace: Option<Vec<TraceStep>>,
}

impl SolveResult {
    pub fn certified(&self) -> bool {
        self.certificate.is_some()
    }

    /// The wire format: flat JSON object, 1-based vertex ids.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": 1,
            "algo": self.algo.to_string(),
            "instance": self.instance,
            "s": self.s,
            "seed": self.seed,
            "clique_size": self.clique.len(),
            "clique": self.clique.iter().map(|v| v + 1).collect::<Vec<_>>(),
            "fake_edges": self
                .fake_edges
                .iter()
                .map(|&(i, j)| [i + 1, j + 1])
                .collect::<Vec<_>>(),
            "objective": self.objective,
            "gap": self.gap,
            "iters": self.iters,
            "y_changes": self.y_changes,
            "time_ms": self.time_ms,
            "stop_reason": self.stop_reason.as_str(),
            "monotone": self.monotone,
        })
    }
}

/// Certificate wire format: {clique, fake_edges, s, value, objective_check},
/// 1-based to match DIMACS.
pub fn certificate_to_json(
    cert: &DefectiveCliqueCertificate,
    fake_edges: &[(usize, usize)],
    objective_check: f64,
) -> serde_json::Value {
    serde_json::json!({
        "schema": 1,
        "clique": cert.clique.iter().map(|v| v + 1).collect::<Vec<_>>(),
        "fake_edges": fake_edges
            .iter()
            .map(|&(i, j)| [i + 1, j + 1])
            .collect::<Vec<_>>(),
        "s": cert.s,
        "value": cert.value,
        "objective_check": objective_check,
    })
}
