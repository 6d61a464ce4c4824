//! Evaluation: the normalized throughput metric Γ, baseline/agent policy
//! evaluation over held-out traces, and per-speed comparison reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, HandoverEnv};
use crate::neural::Mlp;
use crate::ppo::act_greedy;
use crate::protocol::{run_baseline, EventKind, EventRecord, ProtocolConfig, TickRecord};
use crate::scalar::db_to_lin;
use crate::tracegen::RadioTrace;
use crate::{Error, Result};

/// Shannon rate (bits/s/Hz) for a linear SINR.
pub fn rate_bps(sinr_linear: f64) -> f64 {
    (1.0 + sinr_linear).log2()
}

/// Γ over explicit per-tick achieved and best-possible rates.
pub fn gamma_from_rates(achieved: &[f64], best: &[f64]) -> Result<f64> {
    if achieved.len() != best.len() || achieved.is_empty() {
        return Err(Error::Invalid("rate series must be non-empty and equal length".into()));
    }
    let denom: f64 = best.iter().sum();
    if denom <= 0.0 {
        return Err(Error::Invalid("best-rate sum must be positive".into()));
    }
    Ok(achieved.iter().sum::<f64>() / denom)
}

/// Γ for a connection timeline over a trace: the ratio of the rate achieved
/// on the serving BS (zero during handover execution and RLF recovery) to
/// the rate of always riding the instantaneously best BS.
pub fn gamma_metric(trace: &RadioTrace, timeline: &[TickRecord]) -> Result<f64> {
    if timeline.len() != trace.len() {
        return Err(Error::Invalid(format!(
            "timeline has {} ticks but trace has {}",
            timeline.len(),
            trace.len()
        )));
    }
    let achieved: Vec<f64> = timeline
        .iter()
        .map(|t| {
            if t.outage {
                0.0
            } else {
                rate_bps(db_to_lin(t.connected_sinr_db))
            }
        })
        .collect();
    let best: Vec<f64> = trace
        .sinr_db
        .iter()
        .map(|row| {
            row.iter()
                .map(|&s| rate_bps(db_to_lin(s)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    gamma_from_rates(&achieved, &best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Baseline,
    Agent,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Baseline => write!(f, "baseline"),
            Policy::Agent => write!(f, "agent"),
        }
    }
}

/// Per-trace evaluation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: Policy,
    pub speed_kmh: f64,
    pub trace_id: String,
    pub gamma: f64,
    pub hof: usize,
    pub pp: usize,
    pub ho: usize,
}

fn count(events: &[EventRecord], kind: EventKind) -> usize {
    events.iter().filter(|e| e.kind == kind).count()
}

fn report(
    policy: Policy,
    trace: &RadioTrace,
    events: &[EventRecord],
    timeline: &[TickRecord],
) -> Result<EvalReport> {
    Ok(EvalReport {
        policy,
        speed_kmh: trace.speed_kmh,
        trace_id: trace.id.clone(),
        gamma: gamma_metric(trace, timeline)?,
        hof: count(events, EventKind::Hof),
        pp: count(events, EventKind::Pp),
        ho: count(events, EventKind::HoComplete),
    })
}

/// Runs the standard-compliant baseline over a full trace.
pub fn evaluate_baseline(trace: &RadioTrace, cfg: &ProtocolConfig) -> Result<EvalReport> {
    let run = run_baseline(trace, cfg)?;
    report(Policy::Baseline, trace, &run.events, &run.timeline)
}

/// Runs the trained agent greedily over a full trace. Failures do not end
/// the episode: the protocol recovers and the agent keeps acting, so HOF
/// and PP totals are comparable with the baseline.
pub fn evaluate_agent(trace: &RadioTrace, cfg: &ProtocolConfig, actor: &Mlp<f64>) -> Result<EvalReport> {
    let env_cfg = EnvConfig {
        protocol: cfg.clone(),
        reset_on_hof: false,
        reset_on_pp: false,
        ..EnvConfig::default()
    };
    let (mut env, mut obs) = HandoverEnv::reset(trace, env_cfg, 0, false)?;
    while !env.is_over() {
        let action = act_greedy(actor, &obs.flatten())?;
        obs = env.step(action)?.obs;
    }
    let (events, timeline) = (env.events().to_vec(), env.timeline().to_vec());
    report(Policy::Agent, trace, &events, &timeline)
}

/// Mean per-speed comparison row between baseline and agent reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub speed_kmh: f64,
    pub n_traces: usize,
    pub gamma_baseline: f64,
    pub gamma_agent: f64,
    pub delta_gamma: f64,
    pub hof_baseline: usize,
    pub hof_agent: usize,
    pub pp_baseline: usize,
    pub pp_agent: usize,
    pub ho_baseline: usize,
    pub ho_agent: usize,
}

fn group(reports: &[EvalReport]) -> BTreeMap<u64, Vec<&EvalReport>> {
    let mut by_speed: BTreeMap<u64, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        by_speed.entry(r.speed_kmh.to_bits()).or_default().push(r);
    }
    by_speed
}

/// Aggregates two report sets into per-speed rows (Γ averaged over traces,
/// failure counts summed). The speed sets must match exactly.
pub fn compare(baseline: &[EvalReport], agent: &[EvalReport]) -> Result<Vec<ComparisonRow>> {
    let b = group(baseline);
    let a = group(agent);
    if b.keys().ne(a.keys()) {
        return Err(Error::Invalid(
            "baseline and agent reports cover different speed sets".into(),
        ));
    }
    let mut rows = Vec::new();
    for (bits, bg) in &b {
        let ag = &a[bits];
        let mean = |g: &[&EvalReport]| g.iter().map(|r| r.gamma).sum::<f64>() / g.len() as f64;
        let sum = |g: &[&EvalReport], f: fn(&EvalReport) -> usize| g.iter().map(|r| f(r)).sum();
        rows.push(ComparisonRow {
            speed_kmh: f64::from_bits(*bits),
            n_traces: bg.len(),
            gamma_baseline: mean(bg),
            gamma_agent: mean(ag),
            delta_gamma: mean(ag) - mean(bg),
            hof_baseline: sum(bg, |r| r.hof),
            hof_agent: sum(ag, |r| r.hof),
            pp_baseline: sum(bg, |r| r.pp),
            pp_agent: sum(ag, |r| r.pp),
            ho_baseline: sum(bg, |r| r.ho),
            ho_agent: sum(ag, |r| r.ho),
        });
    }
    Ok(rows)
}

/// Plain-text comparison table.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "speed_kmh  traces  gamma_base  gamma_agent  dGamma    HOF b/a  PP b/a  HO b/a\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:>9.1}  {:>6}  {:>10.4}  {:>11.4}  {:>+8.4}  {:>3}/{:<3}  {:>2}/{:<2}  {:>3}/{:<3}\n",
            r.speed_kmh,
            r.n_traces,
            r.gamma_baseline,
            r.gamma_agent,
            r.delta_gamma,
            r.hof_baseline,
            r.hof_agent,
            r.pp_baseline,
            r.pp_agent,
            r.ho_baseline,
            r.ho_agent,
        ));
    }
    out
}
