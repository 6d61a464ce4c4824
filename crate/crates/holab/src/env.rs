//! RL environment for handover decisions: builds the 2B+1 observation
//! vector, applies agent actions through the shared protocol timing
//! machinery (the agent replaces the A2/A3/TTT decision, nothing else),
//! computes per-step rewards and enforces the training termination rules.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::protocol::{
    advance_handover, argmax, pseudo_rsrq, rsrp_linear, start_handover, step_monitor, EventKind,
    EventRecord, LinkMonitorState, Phase, ProtocolConfig, TickRecord,
};
use crate::rng::seeded;
use crate::scalar::lin_to_db;
use crate::tracegen::RadioTrace;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Reward constant C.
    pub penalty_c: f64,
    pub protocol: ProtocolConfig,
    /// Terminate the episode on a detected ping-pong (third training
    /// iteration); handover failures always terminate when this runs in
    /// training mode.
    pub reset_on_pp: bool,
    pub reset_on_hof: bool,
    /// Decision grid; must equal the protocol tick.
    pub decision_dt_ms: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            penalty_c: 0.9405,
            protocol: ProtocolConfig::default(),
            reset_on_pp: false,
            reset_on_hof: true,
            decision_dt_ms: 10,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if !(self.penalty_c > 0.0) {
            return Err(Error::Config("penalty_c must be > 0".into()));
        }
        if self.decision_dt_ms != self.protocol.dt_ms {
            return Err(Error::Config(
                "decision_dt_ms must equal the protocol dt_ms".into(),
            ));
        }
        Ok(())
    }
}

/// Agent observation: serving-BS one-hot, normalized pseudo-RSRQ per BS and
/// the ping-pong-possible flag. Flattens to 2B+1 values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub one_hot: Vec<f64>,
    pub rsrq_norm: Vec<f64>,
    pub s_add: f64,
}

impl Observation {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.one_hot.len() + self.rsrq_norm.len() + 1);
        v.extend_from_slice(&self.one_hot);
        v.extend_from_slice(&self.rsrq_norm);
        v.push(self.s_add);
        v
    }
}

/// Clips RSRQ to [-10 dB, 10 dB] and maps it to [0, 1].
pub fn rsrq_norm(rsrq_db: f64) -> f64 {
    ((rsrq_db + 10.0) / 20.0).clamp(0.0, 1.0)
}

/// Builds the observation from the serving BS, the per-BS linear RSRP
/// snapshot and the time since the last handover.
pub fn build_state(
    serving_bs: Option<usize>,
    rsrp_lin: &[f64],
    t_ms: u64,
    last_ho_time_ms: Option<u64>,
    mts_ms: u64,
) -> Observation {
    let n = rsrp_lin.len();
    let mut one_hot = vec![0.0; n];
    if let Some(s) = serving_bs {
        one_hot[s] = 1.0;
    }
    let rsrq_norm: Vec<f64> = (0..n)
        .map(|b| rsrq_norm(lin_to_db(pseudo_rsrq(rsrp_lin, b).expect("B >= 2"))))
        .collect();
    let s_add = match last_ho_time_ms {
        Some(t0) if t_ms - t0 < mts_ms => 1.0,
        _ => 0.0,
    };
    Observation { one_hot, rsrq_norm, s_add }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepInfo {
    pub hof: bool,
    pub pp: bool,
    pub ho_started: bool,
    pub skipped_ticks: usize,
    /// Trace exhausted (end of route, not a failure termination).
    pub trace_done: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

/// One environment instance over one (possibly column-shuffled) trace.
pub struct HandoverEnv<'a> {
    trace: &'a RadioTrace,
    cfg: EnvConfig,
    /// Observation column `b` reads trace column `perm[b]`.
    perm: Vec<usize>,
    state: LinkMonitorState,
    tick: usize,
    events: Vec<EventRecord>,
    timeline: Vec<TickRecord>,
    terminated: bool,
    trace_done: bool,
}

impl<'a> HandoverEnv<'a> {
    /// Resets over `trace`; the initial serving BS is the strongest at t=0.
    /// With `shuffle_mapping` a seeded permutation of BS columns is applied
    /// consistently to RSRP and SINR for the whole episode.
    pub fn reset(
        trace: &'a RadioTrace,
        cfg: EnvConfig,
        seed: u64,
        shuffle_mapping: bool,
    ) -> Result<(Self, Observation)> {
        Self::reset_at(trace, cfg, seed, shuffle_mapping, 0)
    }

    /// [`Self::reset`] starting mid-trace: the episode begins at
    /// `start_tick` with the serving BS strongest at that tick. Used to
    /// spread rollout windows over traces much longer than the rollout.
    pub fn reset_at(
        trace: &'a RadioTrace,
        cfg: EnvConfig,
        seed: u64,
        shuffle_mapping: bool,
        start_tick: usize,
    ) -> Result<(Self, Observation)> {
        cfg.validate()?;
        if trace.is_empty() {
            return Err(Error::Invalid("empty trace".into()));
        }
        if trace.n_bs() < 2 {
            return Err(Error::Invalid("environment needs at least 2 BSs".into()));
        }
        let dt_ms = trace.dt_s * 1000.0;
        if (dt_ms - cfg.protocol.dt_ms as f64).abs() > 1e-6 {
            return Err(Error::Invalid(format!(
                "trace dt {dt_ms} ms does not match protocol dt {} ms",
                cfg.protocol.dt_ms
            )));
        }
        if start_tick >= trace.len() {
            return Err(Error::Invalid(format!(
                "start tick {start_tick} beyond trace length {}",
                trace.len()
            )));
        }
        let mut perm: Vec<usize> = (0..trace.n_bs()).collect();
        if shuffle_mapping {
            perm.shuffle(&mut seeded(seed, "bs-mapping"));
        }
        let rsrp0 = Self::row(trace, &perm, start_tick);
        let env = HandoverEnv {
            trace,
            cfg,
            perm,
            state: LinkMonitorState::new(argmax(&rsrp0)),
            tick: start_tick,
            events: Vec::new(),
            timeline: Vec::new(),
            terminated: false,
            trace_done: false,
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    fn row(trace: &RadioTrace, perm: &[usize], tick: usize) -> Vec<f64> {
        perm.iter().map(|&c| trace.rsrp_dbm[tick][c]).collect()
    }

    fn rsrp_at(&self, tick: usize) -> Vec<f64> {
        Self::row(self.trace, &self.perm, tick)
    }

    fn sinr_at(&self, tick: usize, bs: usize) -> f64 {
        self.trace.sinr_db[tick][self.perm[bs]]
    }

    pub fn n_bs(&self) -> usize {
        self.perm.len()
    }

    pub fn n_ticks(&self) -> usize {
        self.trace.len()
    }

    pub fn is_over(&self) -> bool {
        self.terminated || self.trace_done
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn timeline(&self) -> &[TickRecord] {
        &self.timeline
    }

    pub fn serving_bs(&self) -> Option<usize> {
        self.state.serving_bs
    }

    /// Observation at the current tick.
    pub fn observe(&self) -> Observation {
        let tick = self.tick.min(self.trace.len() - 1);
        build_state(
            self.state.serving_bs,
            &rsrp_linear(&self.rsrp_at(tick)),
            tick as u64 * self.cfg.protocol.dt_ms,
            self.state.last_ho_time_ms,
            self.cfg.protocol.mts_ms,
        )
    }

    /// Processes one simulation tick (monitor first, then phase advance or
    /// the latched agent decision). Returns (hof, pp, ho_complete).
    fn process_tick(&mut self, action: Option<usize>) -> Result<(bool, bool)> {
        let tick = self.tick;
        let now_ms = tick as u64 * self.cfg.protocol.dt_ms;
        let sinr_serving = self
            .state
            .serving_bs
            .map(|s| self.sinr_at(tick, s))
            .unwrap_or(f64::NEG_INFINITY);
        let hof = step_monitor(
            &mut self.state,
            sinr_serving,
            &self.cfg.protocol,
            now_ms,
            &mut self.events,
        );
        let outage = self.state.in_outage();
        let serving_at_tick = self.state.serving_bs;
        let events_before = self.events.len();
        if !hof {
            match self.state.phase {
                Phase::HoPrep | Phase::HoExec | Phase::RlfRecovery => {
                    let rsrp = self.rsrp_at(tick);
                    advance_handover(&mut self.state, &rsrp, &self.cfg.protocol, now_ms, &mut self.events)?;
                }
                Phase::Idle => {
                    if let Some(target) = action {
                        if self.state.serving_bs != Some(target) {
                            start_handover(&mut self.state, target, now_ms, &mut self.events)?;
                        }
                    }
                }
                Phase::TttRunning => {
                    return Err(Error::Invalid("TTT phase is unused in agent mode".into()))
                }
            }
        }
        let pp = self.events[events_before..]
            .iter()
            .any(|e| e.kind == EventKind::Pp);
        self.timeline.push(TickRecord {
            serving_bs: serving_at_tick,
            connected_sinr_db: if outage {
                f64::NEG_INFINITY
            } else {
                serving_at_tick
                    .map(|s| self.sinr_at(tick, s))
                    .unwrap_or(f64::NEG_INFINITY)
            },
            outage,
        });
        self.tick += 1;
        Ok((hof, pp))
    }

    /// Applies the agent's preferred-BS action at the current decision
    /// point, then advances the simulation (auto-skipping HO and RLF
    /// recovery ticks) to the next decision point or episode end.
    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.is_over() {
            return Err(Error::Invalid("step on a finished episode".into()));
        }
        if action >= self.n_bs() {
            return Err(Error::Invalid(format!(
                "action {action} out of range for {} BSs",
                self.n_bs()
            )));
        }
        debug_assert_eq!(self.state.phase, Phase::Idle);

        let mut info = StepInfo::default();
        info.ho_started = self.state.serving_bs != Some(action);
        let (mut hof, mut pp) = self.process_tick(Some(action))?;

        loop {
            if self.tick >= self.trace.len() {
                self.trace_done = true;
                break;
            }
            if hof && self.cfg.reset_on_hof {
                break;
            }
            if pp && self.cfg.reset_on_pp {
                break;
            }
            if self.state.phase == Phase::Idle {
                break;
            }
            let (h, p) = self.process_tick(None)?;
            hof |= h;
            pp |= p;
            info.skipped_ticks += 1;
        }

        info.hof = hof;
        info.pp = pp;
        info.trace_done = self.trace_done;
        self.terminated = (hof && self.cfg.reset_on_hof) || (pp && self.cfg.reset_on_pp);

        // Reward per the case priority RLF > PP > SINR below Q_out >
        // strongest > strong-but-not-strongest.
        let context = (self.tick.min(self.trace.len() - 1), self.state.serving_bs);
        let c = self.cfg.penalty_c;
        let reward = if hof {
            -2.0 * c
        } else if pp {
            -c
        } else {
            let (tick, serving) = context;
            let s = serving.expect("connected outside RLF recovery");
            let sinr = self.sinr_at(tick, s);
            if sinr < self.cfg.protocol.q_out_db {
                -c
            } else {
                let lin = rsrp_linear(&self.rsrp_at(tick));
                let quality = rsrq_norm(lin_to_db(pseudo_rsrq(&lin, s)?));
                if s == argmax(&lin) {
                    quality + c
                } else {
                    quality
                }
            }
        };

        Ok(StepResult {
            obs: self.observe(),
            reward,
            terminated: self.terminated,
            info,
        })
    }
}
