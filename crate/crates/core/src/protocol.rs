// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Memory programs and their compilation into timed pulse schedules.
//!
//! A schedule is a train of WURST π pulses on a uniform lattice with centers
//! `origin + i·2τ`. Payloads (excitations, echoes) sit at the midpoints
//! `origin + i·2τ + τ`. A WRITE/READ/IDLE block claims two consecutive pulses
//! of its mode and the gap between them; a HALF block claims a single pulse.
//!
//! Echo times are predicted symbolically. Each pulse of mode X at time p maps
//! an excitation's refocus time r to 2p − r and its phase pattern c to
//! −c + [X]; an echo forms when the pattern cancels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{adiabaticity_q, EquivalenceModel};
use crate::units::{parse_quantity, Dimension};
use crate::waveforms::{GaussianParams, WurstParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeRegistry {
    pub modes: BTreeMap<String, WurstParams>,
}

impl ModeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, p: WurstParams) -> Self {
        self.modes.insert(name.to_string(), p);
        self
    }

    pub fn get(&self, name: &str) -> Result<&WurstParams> {
        self.modes.get(name).ok_or_else(|| Error::UnknownMode(name.to_string()))
    }

    pub fn max_duration(&self) -> f64 {
        self.modes.values().map(|p| p.duration).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "slot", rename_all = "snake_case")]
pub enum Slot {
    /// Store an excitation: `amp` scales the program's excitation template,
    /// `phase` (rad) is its drive phase.
    Write { amp: f64, phase: f64 },
    Read,
    Idle,
    /// One unpaired pulse, only as the first or last block.
    Half,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub mode: String,
    #[serde(flatten)]
    pub slot: Slot,
}

impl Block {
    pub fn write(mode: &str, amp: f64, phase: f64) -> Self {
        Self { mode: mode.into(), slot: Slot::Write { amp, phase } }
    }
    pub fn read(mode: &str) -> Self {
        Self { mode: mode.into(), slot: Slot::Read }
    }
    pub fn idle(mode: &str) -> Self {
        Self { mode: mode.into(), slot: Slot::Idle }
    }
    pub fn half(mode: &str) -> Self {
        Self { mode: mode.into(), slot: Slot::Half }
    }

    fn pulses(&self) -> usize {
        if self.slot == Slot::Half {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryProgram {
    /// Half the pulse center spacing (s); `None` uses [`default_tau`].
    pub tau: Option<f64>,
    /// Excitation template; `center` and `phase` are set per WRITE.
    pub excitation: GaussianParams,
    /// Registry file referenced by the program header, if any.
    #[serde(default)]
    pub registry: Option<String>,
    pub blocks: Vec<Block>,
    /// Center of the first pulse (s).
    #[serde(default)]
    pub origin: f64,
}

impl MemoryProgram {
    pub fn new(excitation: GaussianParams, blocks: Vec<Block>) -> Self {
        Self { tau: None, excitation, registry: None, blocks, origin: 0.0 }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn resolved_tau(&self, reg: &ModeRegistry) -> f64 {
        self.tau.unwrap_or_else(|| default_tau(reg.max_duration(), self.excitation.duration))
    }
}

/// τ for an edge-to-edge gap of T_W/2 padding plus the payload duration.
pub fn default_tau(pulse_duration: f64, payload_duration: f64) -> f64 {
    0.5 * (pulse_duration + 0.5 * pulse_duration + payload_duration)
}

/// Default excitation: Gaussian of 4 µs FWHM truncated to 8 µs.
pub fn default_excitation(amplitude: f64) -> GaussianParams {
    GaussianParams { amplitude, fwhm: 4e-6, duration: 8e-6, phase: 0.0, center: 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Wurst { mode: String, params: WurstParams },
    Excitation { id: usize, params: GaussianParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    /// Event center (s).
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl ScheduledEvent {
    pub fn window(&self) -> (f64, f64) {
        match &self.kind {
            EventKind::Wurst { params, .. } => (params.start(), params.end()),
            EventKind::Excitation { params, .. } => (params.start(), params.end()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedEcho {
    pub time: f64,
    /// Mode of the pulse that completed the refocusing.
    pub mode: String,
    /// Excitation id.
    pub source: usize,
    /// Index among the schedule's pulses of the refocusing pulse.
    pub after_pulse: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub events: Vec<ScheduledEvent>,
    pub predicted_echoes: Vec<PredictedEcho>,
    pub tau: f64,
    /// +1 when the ensemble starts in the ground state, −1 when inverted.
    pub ground_state_parity: i32,
    /// The program this schedule was compiled from, when there is one.
    #[serde(default)]
    pub program: Option<MemoryProgram>,
}

impl PulseSchedule {
    pub fn pulses(&self) -> impl Iterator<Item = (&str, &WurstParams)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Wurst { mode, params } => Some((mode.as_str(), params)),
            _ => None,
        })
    }

    pub fn excitations(&self) -> impl Iterator<Item = (usize, &GaussianParams)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Excitation { id, params } => Some((*id, params)),
            _ => None,
        })
    }

    /// Earliest start and latest end over all events and predicted echoes.
    pub fn span(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in &self.events {
            let (a, b) = e.window();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        for e in &self.predicted_echoes {
            lo = lo.min(e.time);
            hi = hi.max(e.time);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Number of echoes predicted for each excitation id.
    pub fn echo_counts(&self) -> BTreeMap<usize, usize> {
        let mut out: BTreeMap<usize, usize> = self.excitations().map(|(id, _)| (id, 0)).collect();
        for e in &self.predicted_echoes {
            *out.entry(e.source).or_default() += 1;
        }
        out
    }
}

fn check_overlaps(events: &[ScheduledEvent]) -> Result<()> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].window().0.total_cmp(&events[b].window().0));
    for w in order.windows(2) {
        let (_, end) = events[w[0]].window();
        let (start, _) = events[w[1]].window();
        if start < end - 1e-12 {
            return Err(Error::Overlap { first: w[0], second: w[1] });
        }
    }
    Ok(())
}

/// Mirror-rule echo prediction over a time-ordered event list.
pub fn predict_echoes(events: &[ScheduledEvent]) -> Vec<PredictedEcho> {
    let pulses: Vec<(f64, &str, f64, f64)> = events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Wurst { mode, params } => Some((e.time, mode.as_str(), params.start(), params.end())),
            _ => None,
        })
        .collect();
    let mut echoes = Vec::new();
    for ev in events {
        let EventKind::Excitation { id, .. } = ev.kind else { continue };
        let mut r = ev.time;
        let mut pattern: BTreeMap<&str, i64> = BTreeMap::new();
        for (k, &(p, mode, _, end)) in pulses.iter().enumerate().filter(|(_, q)| q.0 > ev.time) {
            r = 2.0 * p - r;
            for c in pattern.values_mut() {
                *c = -*c;
            }
            *pattern.entry(mode).or_default() += 1;
            pattern.retain(|_, c| *c != 0);
            let next_start = pulses.get(k + 1).map(|q| q.2).unwrap_or(f64::INFINITY);
            if pattern.is_empty() && r > end && r < next_start {
                echoes.push(PredictedEcho { time: r, mode: mode.to_string(), source: id, after_pulse: k });
            }
        }
    }
    echoes.sort_by(|a, b| a.time.total_cmp(&b.time));
    echoes
}

fn assemble(mut events: Vec<ScheduledEvent>, tau: f64, parity: i32, program: Option<MemoryProgram>) -> Result<PulseSchedule> {
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    check_overlaps(&events)?;
    let predicted_echoes = predict_echoes(&events);
    Ok(PulseSchedule { events, predicted_echoes, tau, ground_state_parity: parity, program })
}

fn wurst_event(mode: &str, reg: &ModeRegistry, center: f64) -> Result<ScheduledEvent> {
    let p = reg.get(mode)?.at(center);
    Ok(ScheduledEvent { time: center, kind: EventKind::Wurst { mode: mode.to_string(), params: p } })
}

fn excitation_event(id: usize, template: &GaussianParams, amp: f64, phase: f64, center: f64) -> ScheduledEvent {
    let params = GaussianParams { amplitude: template.amplitude * amp, phase, center, ..*template };
    ScheduledEvent { time: center, kind: EventKind::Excitation { id, params } }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending block index (program violations) or `None` (registry).
    pub block: Option<usize>,
    pub message: String,
}

/// All reasons `compile_program` would reject `prog`; empty when it compiles.
pub fn validate_program(prog: &MemoryProgram, reg: &ModeRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |block: Option<usize>, message: String| out.push(Violation { block, message });

    let n = prog.blocks.len();
    let mut stored: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, b) in prog.blocks.iter().enumerate() {
        if reg.get(&b.mode).is_err() {
            push(Some(i), format!("mode `{}` is not registered", b.mode));
            continue;
        }
        match b.slot {
            Slot::Write { amp, .. } => {
                if !(amp >= 0.0 && amp.is_finite()) {
                    push(Some(i), format!("WRITE amplitude {amp} must be non-negative"));
                }
                if let Some(w) = stored.insert(&b.mode, i) {
                    push(Some(i), format!("mode `{}` written again before the WRITE at block {w} was read", b.mode));
                }
            }
            Slot::Read => {
                if stored.remove(b.mode.as_str()).is_none() {
                    push(Some(i), format!("READ of mode `{}` which holds no stored excitation", b.mode));
                }
            }
            Slot::Idle => {
                if let Some(w) = stored.get(b.mode.as_str()) {
                    push(Some(i), format!("IDLE pulses on mode `{}` would release the excitation stored at block {w}", b.mode));
                }
            }
            Slot::Half => {
                if i != 0 && i + 1 != n {
                    push(Some(i), "HALF is only allowed as the first or last block".into());
                }
                if let Some(w) = stored.get(b.mode.as_str()) {
                    push(Some(i), format!("HALF pulse on mode `{}` would release the excitation stored at block {w}", b.mode));
                }
            }
        }
    }
    for (mode, w) in stored {
        push(Some(w), format!("excitation written to `{mode}` is never read"));
    }
    let events = program_events(prog, reg).and_then(|mut ev| {
        ev.sort_by(|a, b| a.time.total_cmp(&b.time));
        check_overlaps(&ev)
    });
    if let Err(e) = events {
        if let Error::Overlap { first, second } = e {
            push(None, format!("events {first} and {second} overlap; increase tau"));
        } else if !matches!(e, Error::UnknownMode(_)) {
            push(None, e.to_string());
        }
    }
    out.extend(validate_registry(reg, None));
    out
}

/// Registry checks: adiabaticity (Q_min ≥ 1) and, given an equivalence model,
/// that no two modes address the same memory.
pub fn validate_registry(reg: &ModeRegistry, model: Option<&EquivalenceModel>) -> Vec<Violation> {
    let mut out = Vec::new();
    for (name, p) in &reg.modes {
        if let Err(e) = p.validate() {
            out.push(Violation { block: None, message: format!("mode `{name}`: {e}") });
            continue;
        }
        let q = adiabaticity_q(p.amplitude, p.chirp_rate()).unwrap_or(0.0);
        if q < 1.0 {
            out.push(Violation { block: None, message: format!("mode `{name}` is not adiabatic (Q_min = {q:.3})") });
        }
    }
    if let Some(m) = model {
        let names: Vec<&String> = reg.modes.keys().collect();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                if m.equivalent(&reg.modes[*a], &reg.modes[*b]) {
                    out.push(Violation { block: None, message: format!("modes `{a}` and `{b}` are equivalent") });
                }
            }
        }
    }
    out
}

fn program_events(prog: &MemoryProgram, reg: &ModeRegistry) -> Result<Vec<ScheduledEvent>> {
    let tau = prog.resolved_tau(reg);
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    prog.excitation.validate()?;
    let mut events = Vec::new();
    let mut pulse = 0usize;
    let mut next_id = 0usize;
    let center = |i: usize| prog.origin + i as f64 * 2.0 * tau;
    for b in &prog.blocks {
        events.push(wurst_event(&b.mode, reg, center(pulse))?);
        if b.pulses() == 2 {
            if let Slot::Write { amp, phase } = b.slot {
                events.push(excitation_event(next_id, &prog.excitation, amp, phase, center(pulse) + tau));
                next_id += 1;
            }
            events.push(wurst_event(&b.mode, reg, center(pulse + 1))?);
        }
        pulse += b.pulses();
    }
    Ok(events)
}

/// Compiles a validated program into a pulse schedule.
///
/// Every READ yields exactly one predicted echo in its own gap; a program
/// that would violate this is rejected with the first violation.
pub fn compile_program(prog: &MemoryProgram, reg: &ModeRegistry) -> Result<PulseSchedule> {
    let violations = validate_program(prog, reg);
    if let Some(v) = violations.first() {
        if let Some(b) = v.block {
            if let Err(e) = reg.get(&prog.blocks[b].mode) {
                return Err(e);
            }
        }
        return Err(Error::Program { block: v.block, reason: v.message.clone() });
    }
    let tau = prog.resolved_tau(reg);
    let events = program_events(prog, reg)?;
    let sched = assemble(events, tau, 1, Some(prog.clone()))?;

    // Each stored excitation echoes exactly once: inside its READ block.
    let mut reads = Vec::new();
    let mut pulse = 0usize;
    let mut writes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut id = 0usize;
    for b in &prog.blocks {
        match b.slot {
            Slot::Write { .. } => {
                writes.insert(&b.mode, id);
                id += 1;
            }
            Slot::Read => reads.push((writes.remove(b.mode.as_str()).unwrap(), pulse)),
            _ => {}
        }
        pulse += b.pulses();
    }
    for (source, first_pulse) in reads {
        let hits: Vec<&PredictedEcho> = sched.predicted_echoes.iter().filter(|e| e.source == source).collect();
        if hits.len() != 1 || hits[0].after_pulse != first_pulse {
            return Err(Error::Program {
                block: None,
                reason: format!("excitation {source} does not refocus exactly once in its READ block"),
            });
        }
    }
    Ok(sched)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DdKind {
    /// A[AA]ₙA: the storage mode itself decouples; an echo after every pair.
    Aaaa,
    /// A[BB]ₙA: a second mode decouples; one echo after the final A.
    Abba,
}

/// Excitation followed by `n` decoupling pairs bracketed by mode `a`.
///
/// The excitation sits τ before the first pulse.
pub fn build_dd_sequence(
    kind: DdKind,
    n: i64,
    tau: f64,
    reg: &ModeRegistry,
    a: &str,
    b: &str,
    excitation: &GaussianParams,
) -> Result<PulseSchedule> {
    if n < 0 {
        return Err(Error::invalid("n", format!("must be non-negative, got {n}")));
    }
    let inner = match kind {
        DdKind::Aaaa => a,
        DdKind::Abba => b,
    };
    let mut modes = vec![a];
    modes.extend(std::iter::repeat_n(inner, 2 * n as usize));
    modes.push(a);
    let mut events = vec![excitation_event(0, excitation, 1.0, excitation.phase, -tau)];
    for (i, m) in modes.iter().enumerate() {
        events.push(wurst_event(m, reg, i as f64 * 2.0 * tau)?);
    }
    assemble(events, tau, 1, None)
}

/// Several excitations stored ahead of one identical pulse pair at t₀ and
/// t₀ + 2τ. Echoes come back at e + 4τ in input order.
pub fn build_fifo(excitations: &[GaussianParams], mode: &str, tau: f64, reg: &ModeRegistry) -> Result<PulseSchedule> {
    if excitations.is_empty() {
        return Err(Error::invalid("excitations", "need at least one"));
    }
    let p = reg.get(mode)?;
    let half_payload = excitations.iter().map(|e| 0.5 * e.duration).fold(0.0, f64::max);
    let last_end = excitations.iter().map(|e| e.end()).fold(f64::NEG_INFINITY, f64::max);
    let t0 = last_end + 0.5 * p.duration;
    for (i, e) in excitations.iter().enumerate() {
        e.validate()?;
        if t0 - e.center > 2.0 * tau - 0.5 * p.duration - half_payload {
            return Err(Error::WindowOverflow(format!(
                "excitation {i} at {:e} s is {:e} s before the first pulse; the limit for tau = {tau:e} s is {:e} s",
                e.center,
                t0 - e.center,
                2.0 * tau - 0.5 * p.duration - half_payload
            )));
        }
    }
    let mut events: Vec<ScheduledEvent> = excitations
        .iter()
        .enumerate()
        .map(|(i, e)| ScheduledEvent { time: e.center, kind: EventKind::Excitation { id: i, params: *e } })
        .collect();
    events.push(wurst_event(mode, reg, t0)?);
    events.push(wurst_event(mode, reg, t0 + 2.0 * tau)?);
    assemble(events, tau, 1, None)
}

/// `n_inv` preparatory pulses alternating between the first two registry
/// modes, then an excitation and an identical pair on the first mode.
pub fn build_inversion_study(n_inv: usize, tau: f64, reg: &ModeRegistry, excitation: &GaussianParams) -> Result<PulseSchedule> {
    let names: Vec<&String> = reg.modes.keys().collect();
    let first = names.first().ok_or_else(|| Error::invalid("registry", "no modes registered"))?;
    let second = names.get(1).unwrap_or(first);
    let mut events = Vec::new();
    for i in 0..n_inv {
        let m = if i % 2 == 0 { second } else { first };
        events.push(wurst_event(m, reg, i as f64 * 2.0 * tau)?);
    }
    let base = n_inv as f64 * 2.0 * tau;
    events.push(excitation_event(0, excitation, 1.0, excitation.phase, base));
    events.push(wurst_event(first, reg, base + tau)?);
    events.push(wurst_event(first, reg, base + 3.0 * tau)?);
    let parity = if n_inv % 2 == 0 { 1 } else { -1 };
    assemble(events, tau, parity, None)
}

/// AB-echo probe: excitation at 0, `first` at τ and `second` at 3τ. An echo
/// is predicted at 4τ only when both name the same mode.
pub fn build_ab_echo(first: &str, second: &str, tau: f64, reg: &ModeRegistry, excitation: &GaussianParams) -> Result<PulseSchedule> {
    let events = vec![
        excitation_event(0, excitation, 1.0, excitation.phase, 0.0),
        wurst_event(first, reg, tau)?,
        wurst_event(second, reg, 3.0 * tau)?,
    ];
    assemble(events, tau, 1, None)
}

fn parse_kv<'a>(tokens: impl Iterator<Item = &'a str>, line: usize) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut pending: Option<(String, String)> = None;
    for tok in tokens {
        if let Some((k, v)) = tok.split_once('=') {
            if let Some((pk, pv)) = pending.take() {
                out.insert(pk, pv);
            }
            pending = Some((k.to_string(), v.to_string()));
        } else if let Some((_, v)) = pending.as_mut() {
            // Unit written after a space: `fwhm=4 us`.
            v.push(' ');
            v.push_str(tok);
        } else {
            return Err(Error::Parse { line, reason: format!("expected key=value, got `{tok}`") });
        }
    }
    if let Some((k, v)) = pending {
        out.insert(k, v);
    }
    Ok(out)
}

fn parse_angle(text: &str) -> Result<f64> {
    match text.trim().parse::<f64>() {
        Ok(v) => Ok(v),
        Err(_) => parse_quantity(text, Dimension::Angle),
    }
}

/// Parses the line-oriented program format.
///
/// ```text
/// # comment
/// @tau 150 us
/// @registry modes.toml
/// @excitation amplitude=20 kHz fwhm=4 us duration=8 us
/// @origin 0 s
/// A WRITE amp=1 phase=0.5
/// E IDLE
/// A READ
/// ```
pub fn parse_program(text: &str) -> Result<MemoryProgram> {
    let mut prog = MemoryProgram::new(default_excitation(0.0), Vec::new());
    let mut excitation_set = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let head = tokens.next().unwrap();
        let bad = |reason: String| Error::Parse { line, reason };
        if let Some(directive) = head.strip_prefix('@') {
            let rest: Vec<&str> = tokens.collect();
            let joined = rest.join(" ");
            match directive {
                "tau" => prog.tau = Some(parse_quantity(&joined, Dimension::Time).map_err(|e| bad(e.to_string()))?),
                "origin" => prog.origin = parse_quantity(&joined, Dimension::Time).map_err(|e| bad(e.to_string()))?,
                "registry" => prog.registry = Some(joined),
                "excitation" => {
                    let kv = parse_kv(rest.into_iter(), line)?;
                    let mut ex = default_excitation(0.0);
                    for (k, v) in &kv {
                        let val = |d| parse_quantity(v, d).map_err(|e| bad(e.to_string()));
                        match k.as_str() {
                            "amplitude" => ex.amplitude = val(Dimension::Frequency)?,
                            "fwhm" => ex.fwhm = val(Dimension::Time)?,
                            "duration" => ex.duration = val(Dimension::Time)?,
                            other => return Err(bad(format!("unknown excitation key `{other}`"))),
                        }
                    }
                    ex.validate().map_err(|e| bad(e.to_string()))?;
                    prog.excitation = ex;
                    excitation_set = true;
                }
                other => return Err(bad(format!("unknown directive `@{other}`"))),
            }
            continue;
        }
        let op = tokens.next().ok_or_else(|| bad(format!("block `{head}` has no operation")))?;
        let slot = match op.to_ascii_uppercase().as_str() {
            "WRITE" => {
                let kv = parse_kv(tokens, line)?;
                let mut amp = 1.0;
                let mut phase = 0.0;
                for (k, v) in &kv {
                    match k.as_str() {
                        "amp" => amp = v.trim().parse().map_err(|_| bad(format!("bad amp `{v}`")))?,
                        "phase" => phase = parse_angle(v).map_err(|e| bad(e.to_string()))?,
                        other => return Err(bad(format!("unknown WRITE key `{other}`"))),
                    }
                }
                Slot::Write { amp, phase }
            }
            "READ" | "IDLE" | "HALF" => {
                if let Some(extra) = tokens.next() {
                    return Err(bad(format!("unexpected `{extra}` after {op}")));
                }
                match op.to_ascii_uppercase().as_str() {
                    "READ" => Slot::Read,
                    "IDLE" => Slot::Idle,
                    _ => Slot::Half,
                }
            }
            other => return Err(bad(format!("unknown operation `{other}`"))),
        };
        prog.blocks.push(Block { mode: head.to_string(), slot });
    }
    if !excitation_set && prog.blocks.iter().any(|b| matches!(b.slot, Slot::Write { .. })) {
        return Err(Error::Parse { line: 0, reason: "WRITE blocks need an @excitation header".into() });
    }
    Ok(prog)
}

/// Text form accepted by [`parse_program`].
pub fn format_program(prog: &MemoryProgram) -> String {
    let mut s = String::new();
    if let Some(t) = prog.tau {
        let _ = writeln!(s, "@tau {t:e} s");
    }
    if prog.origin != 0.0 {
        let _ = writeln!(s, "@origin {:e} s", prog.origin);
    }
    if let Some(r) = &prog.registry {
        let _ = writeln!(s, "@registry {r}");
    }
    let e = &prog.excitation;
    let _ = writeln!(s, "@excitation amplitude={:e} Hz fwhm={:e} s duration={:e} s", e.amplitude, e.fwhm, e.duration);
    for b in &prog.blocks {
        let _ = match b.slot {
            Slot::Write { amp, phase } => writeln!(s, "{} WRITE amp={amp:e} phase={phase:e}", b.mode),
            Slot::Read => writeln!(s, "{} READ", b.mode),
            Slot::Idle => writeln!(s, "{} IDLE", b.mode),
            Slot::Half => writeln!(s, "{} HALF", b.mode),
        };
    }
    s
}

/// Modes referenced by a program, in first-use order.
pub fn program_modes(prog: &MemoryProgram) -> Vec<String> {
    let mut seen = BTreeSet::new();
    prog.blocks.iter().filter(|b| seen.insert(&b.mode)).map(|b| b.mode.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::ChirpSign;

    fn reg() -> ModeRegistry {
        let a = WurstParams::new(2e6, 100e-6, 200e3, ChirpSign::Down).unwrap();
        let b = WurstParams::new(1.5e6, 100e-6, 200e3, ChirpSign::Up).unwrap();
        let e = WurstParams::new(1e6, 100e-6, 200e3, ChirpSign::Up).unwrap();
        ModeRegistry::new().with("A", a).with("B", b).with("E", e)
    }

    fn ex() -> GaussianParams {
        default_excitation(10e3)
    }

    fn kinds(s: &PulseSchedule) -> Vec<String> {
        s.events
            .iter()
            .map(|e| match &e.kind {
                EventKind::Wurst { mode, .. } => format!("π{mode}"),
                EventKind::Excitation { id, .. } => format!("x{id}"),
            })
            .collect()
    }

    #[test]
    fn minimal_write_read() {
        let prog = MemoryProgram::new(ex(), vec![Block::write("A", 1.0, 0.0), Block::read("A")]);
        let s = compile_program(&prog, &reg()).unwrap();
        assert_eq!(kinds(&s), ["πA", "x0", "πA", "πA", "πA"]);
        assert_eq!(s.predicted_echoes.len(), 1);
        let t = s.tau;
        assert!((s.predicted_echoes[0].time - 5.0 * t).abs() < 1e-15);
        // The echo sits between the READ block's pulses.
        let pulses: Vec<f64> = s.pulses().map(|(_, p)| p.center).collect();
        assert!(pulses[2] < s.predicted_echoes[0].time && s.predicted_echoes[0].time < pulses[3]);
    }

    #[test]
    fn abba_reads_in_reverse_order() {
        let prog = MemoryProgram::new(
            ex(),
            vec![Block::write("A", 1.0, 0.0), Block::write("B", 1.0, 1.0), Block::read("B"), Block::read("A")],
        );
        let s = compile_program(&prog, &reg()).unwrap();
        let order: Vec<usize> = s.predicted_echoes.iter().map(|e| e.source).collect();
        assert_eq!(order, [1, 0]);
    }

    #[test]
    fn errors_and_violations() {
        let r = reg();
        let unknown = MemoryProgram::new(ex(), vec![Block::write("Z", 1.0, 0.0), Block::read("Z")]);
        assert!(matches!(compile_program(&unknown, &r), Err(Error::UnknownMode(_))));
        let early = MemoryProgram::new(ex(), vec![Block::read("A")]);
        let v = validate_program(&early, &r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].block, Some(0));
        assert!(compile_program(&early, &r).is_err());
        let twice = MemoryProgram::new(ex(), vec![Block::write("A", 1.0, 0.0), Block::write("A", 1.0, 0.0), Block::read("A")]);
        assert!(!validate_program(&twice, &r).is_empty());
        let valid = MemoryProgram::new(
            ex(),
            vec![Block::write("A", 1.0, 0.0), Block::write("B", 1.0, 0.0), Block::read("B"), Block::read("A")],
        );
        assert!(validate_program(&valid, &r).is_empty());
        let tight = valid.clone().with_tau(40e-6);
        assert!(matches!(compile_program(&tight, &r), Err(Error::Program { .. })));
        let mid_half = MemoryProgram::new(ex(), vec![Block::idle("E"), Block::half("E"), Block::idle("E")]);
        assert!(!validate_program(&mid_half, &r).is_empty());
    }

    #[test]
    fn half_blocks_at_the_ends() {
        let prog = MemoryProgram::new(
            ex(),
            vec![Block::half("E"), Block::write("A", 1.0, 0.0), Block::idle("E"), Block::read("A"), Block::half("E")],
        );
        let s = compile_program(&prog, &reg()).unwrap();
        assert_eq!(kinds(&s), ["πE", "πA", "x0", "πA", "πE", "πE", "πA", "πA", "πE"]);
        assert_eq!(s.predicted_echoes.len(), 1);
    }

    #[test]
    fn dd_echo_counts() {
        let r = reg();
        for n in 0..5 {
            let a = build_dd_sequence(DdKind::Aaaa, n, 100e-6, &r, "A", "B", &ex()).unwrap();
            let b = build_dd_sequence(DdKind::Abba, n, 100e-6, &r, "A", "B", &ex()).unwrap();
            assert_eq!(a.predicted_echoes.len(), n as usize + 1, "AAAA n={n}");
            assert_eq!(b.predicted_echoes.len(), 1, "ABBA n={n}");
        }
        assert!(build_dd_sequence(DdKind::Aaaa, -1, 100e-6, &r, "A", "B", &ex()).is_err());
    }

    #[test]
    fn fifo_keeps_order() {
        let r = reg();
        let exs: Vec<GaussianParams> = (0..5)
            .map(|i| GaussianParams { center: i as f64 * 12e-6, phase: i as f64 * 0.5, ..ex() })
            .collect();
        let s = build_fifo(&exs, "A", 120e-6, &r).unwrap();
        let order: Vec<usize> = s.predicted_echoes.iter().map(|e| e.source).collect();
        assert_eq!(order, [0, 1, 2, 3, 4]);
        for e in &s.predicted_echoes {
            assert!((e.time - (exs[e.source].center + 4.0 * 120e-6)).abs() < 1e-12);
        }
        let one = build_fifo(&exs[..1], "A", 120e-6, &r).unwrap();
        assert_eq!(one.predicted_echoes.len(), 1);
        assert!(matches!(build_fifo(&exs, "A", 60e-6, &r), Err(Error::WindowOverflow(_))));
    }

    #[test]
    fn ab_echo_predicts_only_identical_pairs() {
        let r = reg();
        let t = default_tau(100e-6, 8e-6);
        let same = build_ab_echo("A", "A", t, &r, &ex()).unwrap();
        assert_eq!(same.predicted_echoes.len(), 1);
        assert!((same.predicted_echoes[0].time - 4.0 * t).abs() < 1e-15);
        assert!(build_ab_echo("A", "B", t, &r, &ex()).unwrap().predicted_echoes.is_empty());
    }

    #[test]
    fn inversion_parity() {
        let r = reg();
        for n in 0..4 {
            let s = build_inversion_study(n, 100e-6, &r, &ex()).unwrap();
            assert_eq!(s.ground_state_parity, if n % 2 == 0 { 1 } else { -1 });
            assert_eq!(s.predicted_echoes.len(), 1);
            assert_eq!(s.pulses().count(), n + 2);
        }
    }

    #[test]
    fn program_text_round_trip() {
        let text = "# ABBA\n@tau 150 us\n@excitation amplitude=20 kHz fwhm=4 us duration=8 us\nA WRITE amp=1 phase=0.5\nB WRITE amp=0.5 phase=90 deg\nB READ\nA READ  # last\n";
        let p = parse_program(text).unwrap();
        assert_eq!(p.blocks.len(), 4);
        assert!((p.tau.unwrap() - 150e-6).abs() < 1e-18);
        assert_eq!(p.blocks[1].slot, Slot::Write { amp: 0.5, phase: std::f64::consts::FRAC_PI_2 });
        let again = parse_program(&format_program(&p)).unwrap();
        assert_eq!(again, p);
        assert!(matches!(parse_program("A FLY\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_program("A WRITE amp=1\n").is_err());
        assert!(parse_program("").unwrap().blocks.is_empty());
    }

    #[test]
    fn recompiling_is_idempotent() {
        let prog = MemoryProgram::new(ex(), vec![Block::write("A", 1.0, 0.3), Block::idle("E"), Block::read("A")]);
        let s = compile_program(&prog, &reg()).unwrap();
        let again = compile_program(s.program.as_ref().unwrap(), &reg()).unwrap();
        assert_eq!(s, again);
    }
}
