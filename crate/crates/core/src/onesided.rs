//! One-sided stabilization of `[0, n]` in one dimension and the dynamics of
//! its empty sites ("zeros").
//!
//! After every completed time step the heights on `[0, n]` are 0 or 1, so the
//! zeros determine the configuration. At step `n` the new site carries its
//! sampled height plus the grains exported onto it earlier; while it is
//! unstable a wave is run: site `n` topples once and the toppling runs left
//! up to (not including) the rightmost zero. Each wave therefore only touches
//! the rightmost zero, site `n`, and the two boundary sites, which this module
//! updates in constant time. Topple counts are kept as a difference array
//! because every wave topples a contiguous interval `[x, n]`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::lattice::{HeightConfig, Site, ToppleField, Window};
use crate::measures::{Measure, MeasureError, Seed};
use crate::scalar::Real;
use crate::schedulers::{stabilize, ScheduleError, Scheduler, StabilizeOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZeroEventKind {
    /// The zero at `at = n - 1` is filled and site `n` stays nonempty.
    Disappear { at: usize },
    /// A wave reached the origin, leaving it empty.
    CreateOrigin,
    /// Site `at = n` arrived with height 0.
    CreateRightBoundary { at: usize },
    /// The rightmost zero moved one site to the right.
    Move { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ZeroEvent {
    pub step: u64,
    /// Wave index within the step, starting at 1; 0 when no wave ran.
    pub wave: u64,
    pub kind: ZeroEventKind,
}

impl ZeroEvent {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ZeroEventKind::Disappear { .. } => "disappear",
            ZeroEventKind::CreateOrigin => "create_origin",
            ZeroEventKind::CreateRightBoundary { .. } => "create_right_boundary",
            ZeroEventKind::Move { .. } => "move",
        }
    }

    /// (position the zero leaves, position it occupies afterwards).
    pub fn positions(&self) -> (Option<usize>, Option<usize>) {
        match self.kind {
            ZeroEventKind::Disappear { at } => (Some(at), None),
            ZeroEventKind::CreateOrigin => (None, Some(0)),
            ZeroEventKind::CreateRightBoundary { at } => (None, Some(at)),
            ZeroEventKind::Move { from, to } => (Some(from), Some(to)),
        }
    }
}

/// Configuration after stabilizing `[0, n]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OneSidedState {
    heights: Vec<u8>,
    zeros: Vec<usize>,
    left_ledger: u64,
    right_exterior: u64,
    origin_topples: u64,
    topple_diff: Vec<i64>,
    grains_in: u64,
}

impl OneSidedState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current right endpoint, `None` before the first step.
    pub fn n(&self) -> Option<usize> {
        self.heights.len().checked_sub(1)
    }

    pub fn heights(&self) -> &[u8] {
        &self.heights
    }

    /// Positions of empty sites, increasing.
    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }

    pub fn zero_count(&self) -> usize {
        self.zeros.len()
    }

    /// Grains received by site -1.
    pub fn left_ledger(&self) -> u64 {
        self.left_ledger
    }

    /// Grains received by site n + 1 on top of its own height.
    pub fn right_exterior(&self) -> u64 {
        self.right_exterior
    }

    pub fn origin_topples(&self) -> u64 {
        self.origin_topples
    }

    /// Total sampled grains fed in so far.
    pub fn grains_in(&self) -> u64 {
        self.grains_in
    }

    /// Per-site topple counts on `[0, n]`.
    pub fn topple_counts(&self) -> Vec<u64> {
        let mut acc = 0i64;
        self.topple_diff[..self.heights.len()]
            .iter()
            .map(|d| {
                acc += d;
                acc as u64
            })
            .collect()
    }

    /// Grains inside `[0, n]`.
    pub fn window_grains(&self) -> u64 {
        self.heights.iter().map(|&h| h as u64).sum()
    }

    /// Append site `n + 1` with sampled height `next_height` and stabilize.
    pub fn advance(&mut self, next_height: u64) -> Vec<ZeroEvent> {
        let mut events = Vec::new();
        self.advance_into(next_height, &mut events);
        events
    }

    /// As [`OneSidedState::advance`], appending events to `events`.
    pub fn advance_into(&mut self, next_height: u64, events: &mut Vec<ZeroEvent>) {
        let n = self.heights.len();
        let step = n as u64;
        self.grains_in += next_height;
        let mut h = next_height + self.right_exterior;
        self.right_exterior = 0;
        if self.topple_diff.len() < n + 2 {
            self.topple_diff.resize(n + 2, 0);
        }
        if h == 0 {
            self.heights.push(0);
            self.zeros.push(n);
            events.push(ZeroEvent {
                step,
                wave: 0,
                kind: ZeroEventKind::CreateRightBoundary { at: n },
            });
            return;
        }
        let mut wave = 0u64;
        let mut ends_empty = false;
        while h >= 2 {
            wave += 1;
            self.right_exterior += 1;
            let leftmost;
            let kind = match self.zeros.last().copied() {
                Some(z) if z + 1 == n => {
                    // only site n topples; it hands one grain back to n - 1
                    leftmost = n;
                    h -= 2;
                    self.heights[z] = 1;
                    self.zeros.pop();
                    if h > 0 {
                        Some(ZeroEventKind::Disappear { at: z })
                    } else {
                        ends_empty = true;
                        self.zeros.push(n);
                        Some(ZeroEventKind::Move { from: z, to: n })
                    }
                }
                Some(z) => {
                    leftmost = z + 1;
                    h -= 1;
                    self.heights[z] = 1;
                    self.heights[z + 1] = 0;
                    *self.zeros.last_mut().unwrap() = z + 1;
                    Some(ZeroEventKind::Move { from: z, to: z + 1 })
                }
                None if n == 0 => {
                    leftmost = 0;
                    h -= 2;
                    self.left_ledger += 1;
                    if h == 0 {
                        ends_empty = true;
                        self.zeros.push(0);
                        Some(ZeroEventKind::CreateOrigin)
                    } else {
                        None
                    }
                }
                None => {
                    leftmost = 0;
                    h -= 1;
                    self.heights[0] = 0;
                    self.zeros.push(0);
                    self.left_ledger += 1;
                    Some(ZeroEventKind::CreateOrigin)
                }
            };
            if leftmost == 0 {
                self.origin_topples += 1;
            }
            self.topple_diff[leftmost] += 1;
            self.topple_diff[n + 1] -= 1;
            if let Some(kind) = kind {
                events.push(ZeroEvent { step, wave, kind });
            }
        }
        debug_assert!(h <= 1 && (h == 0) == ends_empty);
        self.heights.push(h as u8);
    }

    /// The configuration as a window on `[0, n]` with ledger entries at -1
    /// and n + 1.
    pub fn to_config(&self) -> Option<HeightConfig> {
        let n = self.n()?;
        let heights: Vec<u64> = self.heights.iter().map(|&h| h as u64).collect();
        let mut cfg = HeightConfig::line(0, &heights).ok()?;
        if self.left_ledger > 0 {
            cfg.add_to_ledger(&Site::from(-1), self.left_ledger).ok()?;
        }
        if self.right_exterior > 0 {
            cfg.add_to_ledger(&Site::from(n as i64 + 1), self.right_exterior).ok()?;
        }
        Some(cfg)
    }
}

/// Full record of a one-sided run over steps `0..=n_max`.
#[derive(Debug, Clone)]
pub struct OneSidedTrace {
    /// `Z(n)`, the number of zeros after step `n`.
    pub zero_counts: Vec<u64>,
    pub events: Vec<ZeroEvent>,
    /// Origin topple count after step `n`.
    pub origin_topples: Vec<u64>,
    pub state: OneSidedState,
}

impl OneSidedTrace {
    pub fn n_max(&self) -> Option<usize> {
        self.zero_counts.len().checked_sub(1)
    }
}

/// Run the one-sided procedure over `0..=n_max` on i.i.d. heights from
/// `measure`; heights are drawn in site order, matching a sample of the
/// window `[0, n_max]` with the same seed.
pub fn run_one_sided<F: Real>(
    measure: &Measure<F>,
    n_max: usize,
    seed: Seed,
) -> Result<OneSidedTrace, MeasureError> {
    let mut sampler = measure.sampler(seed)?;
    let heights = (0..=n_max).map(|n| sampler.height_at(&Site::from(n as i64)));
    Ok(run_one_sided_on(heights))
}

/// One-sided run over an explicit height sequence.
pub fn run_one_sided_on(heights: impl IntoIterator<Item = u64>) -> OneSidedTrace {
    let mut state = OneSidedState::new();
    let mut events = Vec::new();
    let mut zero_counts = Vec::new();
    let mut origin_topples = Vec::new();
    for h in heights {
        state.advance_into(h, &mut events);
        zero_counts.push(state.zero_count() as u64);
        origin_topples.push(state.origin_topples());
    }
    OneSidedTrace {
        zero_counts,
        events,
        origin_topples,
        state,
    }
}

/// `Z(n)` for `n = 0..=n_max` without keeping the event log; same heights
/// as [`run_one_sided`] with the same seed.
pub fn zero_count_series<F: Real>(measure: &Measure<F>, n_max: usize, seed: Seed) -> Result<Vec<u64>, MeasureError> {
    let mut sampler = measure.sampler(seed)?;
    let mut state = OneSidedState::new();
    let mut events = Vec::new();
    let mut zero_counts = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        state.advance_into(sampler.height_at(&Site::from(n as i64)), &mut events);
        events.clear();
        zero_counts.push(state.zero_count() as u64);
    }
    Ok(zero_counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookkeepingError {
    #[error("step {step}: zero count {got} differs from event balance {expected}")]
    CountMismatch { step: u64, expected: i64, got: u64 },
    #[error("step {step}: move from {from} is not the rightmost zero")]
    NotRightmost { step: u64, from: usize },
    #[error("step {step}: move {from} -> {to} is not a unit step to the right")]
    BadMove { step: u64, from: usize, to: usize },
    #[error("step {step}: zero created at the origin while {zeros} zeros remain")]
    OriginNotGated { step: u64, zeros: usize },
    #[error("step {step}: zero at {at} cannot disappear")]
    BadDisappear { step: u64, at: usize },
    #[error("step {step}: right-boundary creation at {at} with wave {wave}")]
    BadBoundaryCreation { step: u64, at: usize, wave: u64 },
    #[error("events out of step order at step {0}")]
    OutOfOrder(u64),
}

/// Summary of a successful event replay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplaySummary {
    pub steps: u64,
    pub disappear: u64,
    pub create_origin: u64,
    pub create_right_boundary: u64,
    pub moves: u64,
}

/// Replay an event log against the zero counts, checking the count balance
/// at every step, that only the rightmost zero moves, and that zeros are
/// created at the origin only when none are left.
pub fn replay_events(
    events: &[ZeroEvent],
    zero_counts: &[u64],
) -> Result<ReplaySummary, BookkeepingError> {
    replay_with(events, zero_counts, |_, _| {})
}

/// Replay that hands the zero positions after every step to `row`.
fn replay_with(
    events: &[ZeroEvent],
    zero_counts: &[u64],
    mut row: impl FnMut(u64, &[usize]),
) -> Result<ReplaySummary, BookkeepingError> {
    let mut zeros: Vec<usize> = Vec::new();
    let mut summary = ReplaySummary::default();
    let mut i = 0;
    let mut prev_count = 0i64;
    for (n, &z) in zero_counts.iter().enumerate() {
        let step = n as u64;
        let mut balance = 0i64;
        while i < events.len() && events[i].step == step {
            let e = events[i];
            match e.kind {
                ZeroEventKind::CreateRightBoundary { at } => {
                    if at != n || e.wave != 0 {
                        return Err(BookkeepingError::BadBoundaryCreation { step, at, wave: e.wave });
                    }
                    zeros.push(at);
                    balance += 1;
                    summary.create_right_boundary += 1;
                }
                ZeroEventKind::CreateOrigin => {
                    if !zeros.is_empty() {
                        return Err(BookkeepingError::OriginNotGated { step, zeros: zeros.len() });
                    }
                    zeros.push(0);
                    balance += 1;
                    summary.create_origin += 1;
                }
                ZeroEventKind::Disappear { at } => {
                    if zeros.last() != Some(&at) || at + 1 != n {
                        return Err(BookkeepingError::BadDisappear { step, at });
                    }
                    zeros.pop();
                    balance -= 1;
                    summary.disappear += 1;
                }
                ZeroEventKind::Move { from, to } => {
                    if to != from + 1 || to > n {
                        return Err(BookkeepingError::BadMove { step, from, to });
                    }
                    match zeros.last_mut() {
                        Some(last) if *last == from => *last = to,
                        _ => return Err(BookkeepingError::NotRightmost { step, from }),
                    }
                    summary.moves += 1;
                }
            }
            i += 1;
        }
        let expected = prev_count + balance;
        if expected != z as i64 || zeros.len() as u64 != z {
            return Err(BookkeepingError::CountMismatch { step, expected, got: z });
        }
        prev_count = z as i64;
        summary.steps += 1;
        row(step, &zeros);
    }
    if i < events.len() {
        return Err(BookkeepingError::OutOfOrder(events[i].step));
    }
    Ok(summary)
}

/// Excursions of `Z` above a level `z`: `N_i` is the first step after
/// `M_{i-1}` with `Z = z + 1`, `M_i` the first step after `N_i` with
/// `Z <= z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalTracker {
    pub level: u64,
    pub starts: Vec<u64>,
    pub ends: Vec<u64>,
    pub deltas: Vec<u64>,
    /// Start of a trailing excursion still open at the end of the data.
    pub open_start: Option<u64>,
}

impl IntervalTracker {
    pub fn completed(&self) -> usize {
        self.deltas.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("excursion level must be at least 1")]
pub struct LevelError;

pub fn interval_stats(zero_counts: &[u64], level: u64) -> Result<IntervalTracker, LevelError> {
    if level == 0 {
        return Err(LevelError);
    }
    let mut t = IntervalTracker {
        level,
        starts: Vec::new(),
        ends: Vec::new(),
        deltas: Vec::new(),
        open_start: None,
    };
    // N_0 = 0; the first return M_0 is not an excursion.
    let mut seeking_return = true;
    let mut start: Option<u64> = None;
    for (n, &z) in zero_counts.iter().enumerate().skip(1) {
        let n = n as u64;
        if seeking_return {
            if z <= level {
                if let Some(s) = start.take() {
                    t.starts.push(s);
                    t.ends.push(n);
                    t.deltas.push(n - s);
                }
                seeking_return = false;
            }
        } else if z == level + 1 {
            start = Some(n);
            seeking_return = true;
        }
    }
    t.open_start = start;
    Ok(t)
}

/// Counters of the two-sided composition on `[-m, m]`.
#[derive(Debug, Clone)]
pub struct TwoSided {
    pub m: usize,
    /// Grains put on site -1 by the right pass over `[0, m]`.
    pub a_plus: u64,
    /// Grains put on site -1 by the mirrored pass over `[-m, -2]`.
    pub a_minus: u64,
    pub z_plus: u64,
    pub z_minus: u64,
    /// Sampled configuration on `[-m, m]`.
    pub initial: HeightConfig,
    /// Final configuration and cumulative topple field of all three passes.
    pub outcome: StabilizeOutcome,
}

/// Stabilize `[0, m]` one-sidedly, then `[-m, -2]` by the mirror-image
/// procedure, then all of `[-m, m]` with absorbing exterior.
pub fn two_sided<F: Real>(
    measure: &Measure<F>,
    m: usize,
    seed: Seed,
    budget: u64,
) -> Result<TwoSided, ScheduleError> {
    if m == 0 {
        return Err(ScheduleError::InvalidRadii);
    }
    let window = Window::interval(-(m as i64), m as i64)?;
    let initial = measure.sample(&window, seed)?;
    two_sided_on(&initial, budget)
}

/// [`two_sided`] on a given configuration over `[-m, m]`, `m >= 1`.
pub fn two_sided_on(initial: &HeightConfig, budget: u64) -> Result<TwoSided, ScheduleError> {
    let window = initial.window().clone();
    if window.dim() != 1 || window.lower()[0] != -window.upper()[0] || window.upper()[0] < 1 {
        return Err(ScheduleError::InvalidRadii);
    }
    let m = window.upper()[0] as usize;
    let eta = |x: i64| initial.height(&Site::from(x)).expect("inside window");

    let right = run_one_sided_on((0..=m as i64).map(eta));
    let left = run_one_sided_on((2..=m as i64).map(|k| eta(-k)));

    let mut heights = Vec::with_capacity(2 * m + 1);
    let mut counts = Vec::with_capacity(2 * m + 1);
    let left_counts = left.state.topple_counts();
    let right_counts = right.state.topple_counts();
    for x in -(m as i64)..=(m as i64) {
        match x {
            x if x >= 0 => {
                heights.push(right.state.heights()[x as usize] as u64);
                counts.push(right_counts[x as usize]);
            }
            -1 => {
                heights.push(eta(-1) + right.state.left_ledger() + left.state.left_ledger());
                counts.push(0);
            }
            x => {
                let k = (-x - 2) as usize;
                heights.push(left.state.heights()[k] as u64);
                counts.push(left_counts[k]);
            }
        }
    }
    let mut merged = HeightConfig::from_heights(window.clone(), &heights)?;
    let lo = Site::from(-(m as i64) - 1);
    let hi = Site::from(m as i64 + 1);
    merged.add_to_ledger(&hi, right.state.right_exterior())?;
    if m >= 2 {
        merged.add_to_ledger(&lo, left.state.right_exterior())?;
    }
    let mut outcome = stabilize(&merged, &Scheduler::sequential(&window), budget)?;
    let prior = ToppleField::from_counts(window.clone(), &counts)?;
    let total: Vec<u64> = prior
        .counts()
        .iter()
        .zip(outcome.topples.counts())
        .map(|(a, b)| a + b)
        .collect();
    outcome.topples = ToppleField::from_counts(window, &total)?;
    outcome.steps = outcome.topples.total();
    Ok(TwoSided {
        m,
        a_plus: right.state.left_ledger(),
        a_minus: left.state.left_ledger(),
        z_plus: right.state.zero_count() as u64,
        z_minus: left.state.zero_count() as u64,
        initial: initial.clone(),
        outcome,
    })
}

/// Write the zero raster as a plain (P2) graymap.
///
/// Row `n` is the configuration after step `n`: black (0) at zeros and at
/// every column right of `n`, white (255) elsewhere. Width is `n_max + 2`,
/// height `n_max + 1`, maxval 255. Every row starts on a new line; lines are
/// wrapped at 70 characters.
pub fn raster_export(trace: &OneSidedTrace, path: &Path) -> Result<(), RasterError> {
    raster_export_scaled(trace, path, 1)
}

/// As [`raster_export`] with `scale x scale` blocks collapsed to one pixel
/// (black when any pixel of the block is black).
pub fn raster_export_scaled(trace: &OneSidedTrace, path: &Path, scale: usize) -> Result<(), RasterError> {
    let out = BufWriter::new(File::create(path)?);
    write_raster(trace, out, scale)
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("scale must be positive")]
    BadScale,
    #[error(transparent)]
    Bookkeeping(#[from] BookkeepingError),
}

/// Raster writer over any sink.
pub fn write_raster<W: Write>(trace: &OneSidedTrace, mut out: W, scale: usize) -> Result<(), RasterError> {
    if scale == 0 {
        return Err(RasterError::BadScale);
    }
    let n_max = trace.n_max().ok_or(RasterError::EmptyTrace)?;
    let width = n_max + 2;
    let height = n_max + 1;
    let ow = width.div_ceil(scale);
    let oh = height.div_ceil(scale);
    writeln!(out, "P2")?;
    writeln!(out, "{ow} {oh}")?;
    writeln!(out, "255")?;
    let mut block = vec![false; ow];
    let mut io_err: Option<io::Error> = None;
    replay_with(&trace.events, &trace.zero_counts, |step, zeros| {
        if io_err.is_some() {
            return;
        }
        let n = step as usize;
        for &z in zeros {
            block[z / scale] = true;
        }
        for b in block.iter_mut().skip((n + 1) / scale) {
            *b = true;
        }
        if (n + 1).is_multiple_of(scale) || n == n_max {
            if let Err(e) = write_row(&mut out, &block) {
                io_err = Some(e);
            }
            block.iter_mut().for_each(|b| *b = false);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    out.flush()?;
    Ok(())
}

fn write_row<W: Write>(out: &mut W, black: &[bool]) -> io::Result<()> {
    let mut line_len = 0usize;
    for &b in black {
        let tok: &[u8] = if b { b"0" } else { b"255" };
        if line_len > 0 && line_len + 1 + tok.len() > 70 {
            out.write_all(b"\n")?;
            line_len = 0;
        }
        if line_len > 0 {
            out.write_all(b" ")?;
            line_len += 1;
        }
        out.write_all(tok)?;
        line_len += tok.len();
    }
    out.write_all(b"\n")
}

/// Event log as CSV: `step,event_kind,wave,position_from,position_to`.
pub fn write_events_csv<W: Write>(events: &[ZeroEvent], mut out: W) -> io::Result<()> {
    writeln!(out, "step,event_kind,wave,position_from,position_to")?;
    let opt = |p: Option<usize>| p.map(|v| v.to_string()).unwrap_or_default();
    for e in events {
        let (from, to) = e.positions();
        writeln!(out, "{},{},{},{},{}", e.step, e.kind_name(), e.wave, opt(from), opt(to))?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct EventCsvError {
    pub line: usize,
    pub msg: String,
}

/// Parse an event CSV written by [`write_events_csv`].
pub fn read_events_csv(text: &str) -> Result<Vec<ZeroEvent>, EventCsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "step,event_kind,wave,position_from,position_to" => {}
        _ => {
            return Err(EventCsvError {
                line: 1,
                msg: "missing header".into(),
            })
        }
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| EventCsvError {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| err("bad number"));
        let pos = |s: &str| s.parse::<usize>().map_err(|_| err("bad position"));
        let step = num(f[0])?;
        let wave = num(f[2])?;
        let kind = match f[1] {
            "disappear" => ZeroEventKind::Disappear { at: pos(f[3])? },
            "create_origin" => ZeroEventKind::CreateOrigin,
            "create_right_boundary" => ZeroEventKind::CreateRightBoundary { at: pos(f[4])? },
            "move" => ZeroEventKind::Move {
                from: pos(f[3])?,
                to: pos(f[4])?,
            },
            _ => return Err(err("unknown event kind")),
        };
        events.push(ZeroEvent { step, wave, kind });
    }
    Ok(events)
}

impl fmt::Display for ZeroEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} wave {}: {:?}", self.step, self.wave, self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_from(heights: &[u8]) -> OneSidedState {
        let mut s = OneSidedState::new();
        for &h in heights {
            s.advance(h as u64);
        }
        assert_eq!(s.heights(), heights);
        s
    }

    #[test]
    fn streamed_zero_counts_match_trace() {
        let m = Measure::<f64>::two_point(2, 0.5);
        let trace = run_one_sided(&m, 2_000, Seed::new(3, 1)).unwrap();
        assert_eq!(zero_count_series(&m, 2_000, Seed::new(3, 1)).unwrap(), trace.zero_counts);
    }

    #[test]
    fn right_boundary_creation() {
        let mut s = state_from(&[1, 1]);
        let ev = s.advance(0);
        assert_eq!(
            ev,
            vec![ZeroEvent {
                step: 2,
                wave: 0,
                kind: ZeroEventKind::CreateRightBoundary { at: 2 }
            }]
        );
        assert_eq!(s.heights(), &[1, 1, 0]);
    }

    #[test]
    fn single_wave_reaches_origin() {
        let mut s = state_from(&[1]);
        let ev = s.advance(2);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].wave, 1);
        assert_eq!(ev[0].kind, ZeroEventKind::CreateOrigin);
        assert_eq!(s.heights(), &[0, 1]);
        assert_eq!(s.left_ledger(), 1);
        assert_eq!(s.right_exterior(), 1);
        assert_eq!(s.origin_topples(), 1);
    }

    #[test]
    fn disappear_then_create_origin() {
        let mut s = state_from(&[1, 0]);
        let ev = s.advance(4);
        let kinds: Vec<_> = ev.iter().map(|e| (e.wave, e.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (1, ZeroEventKind::Disappear { at: 1 }),
                (2, ZeroEventKind::CreateOrigin)
            ]
        );
        assert_eq!(s.heights(), &[0, 1, 1]);
        assert_eq!(s.left_ledger(), 1);
        assert_eq!(s.right_exterior(), 2);
        assert_eq!(s.topple_counts(), vec![1, 1, 2]);
    }

    #[test]
    fn exported_grains_count_toward_the_next_site() {
        let mut s = state_from(&[1]);
        s.advance(2); // exports one grain onto site 2
        assert_eq!(s.right_exterior(), 1);
        let ev = s.advance(0); // arrives with height 1: no event
        assert!(ev.is_empty());
        assert_eq!(s.heights(), &[0, 1, 1]);
        assert_eq!(s.right_exterior(), 0);
    }

    #[test]
    fn constant_measures() {
        let one = run_one_sided(&Measure::<f64>::constant(1), 50, Seed::default()).unwrap();
        assert!(one.events.is_empty());
        assert!(one.zero_counts.iter().all(|&z| z == 0));
        assert_eq!(one.state.origin_topples(), 0);

        let zero = run_one_sided(&Measure::<f64>::constant(0), 50, Seed::default()).unwrap();
        assert_eq!(zero.events.len(), 51);
        for (n, &z) in zero.zero_counts.iter().enumerate() {
            assert_eq!(z, n as u64 + 1);
        }
    }

    #[test]
    fn conservation_and_replay_on_random_run() {
        let m = Measure::<f64>::two_point(2, 0.5);
        let trace = run_one_sided(&m, 5_000, Seed::new(3, 1)).unwrap();
        let s = &trace.state;
        assert_eq!(s.grains_in(), s.window_grains() + s.left_ledger() + s.right_exterior());
        replay_events(&trace.events, &trace.zero_counts).unwrap();
    }

    #[test]
    fn replay_detects_violations() {
        let zc = vec![1, 1];
        let ok = vec![
            ZeroEvent { step: 0, wave: 0, kind: ZeroEventKind::CreateRightBoundary { at: 0 } },
            ZeroEvent { step: 1, wave: 1, kind: ZeroEventKind::Move { from: 0, to: 1 } },
        ];
        assert!(replay_events(&ok, &zc).is_ok());
        let bad_count = replay_events(&ok, &[1, 2]);
        assert!(matches!(bad_count, Err(BookkeepingError::CountMismatch { .. })));
        let gated = vec![
            ok[0],
            ZeroEvent { step: 1, wave: 1, kind: ZeroEventKind::CreateOrigin },
        ];
        assert!(matches!(
            replay_events(&gated, &[1, 2]),
            Err(BookkeepingError::OriginNotGated { .. })
        ));
    }

    #[test]
    fn interval_scan_examples() {
        let t = interval_stats(&[0, 1, 2, 1, 2, 2, 1], 1).unwrap();
        assert_eq!(t.starts, vec![2, 4]);
        assert_eq!(t.ends, vec![3, 6]);
        assert_eq!(t.deltas, vec![1, 2]);
        assert_eq!(t.open_start, None);

        let t = interval_stats(&[0; 20], 1).unwrap();
        assert!(t.deltas.is_empty());

        let t = interval_stats(&[0, 1, 2, 3, 2, 1, 2, 3], 1).unwrap();
        assert_eq!(t.deltas, vec![3]);
        assert_eq!(t.open_start, Some(6));
        assert_eq!(interval_stats(&[0, 1], 0), Err(LevelError));
    }

    #[test]
    fn two_sided_small_example() {
        let init = HeightConfig::line(-1, &[2, 1, 0]).unwrap();
        let r = two_sided_on(&init, 1_000).unwrap();
        assert_eq!((r.a_plus, r.a_minus, r.z_plus, r.z_minus), (0, 0, 1, 0));
        assert_eq!(r.outcome.final_config.heights(), vec![1, 0, 1]);
        assert_eq!(r.outcome.topples.counts(), vec![1, 1, 0]);
        assert_eq!(r.outcome.final_config.ledger(), vec![(Site::from(-2), 1)]);
        let (cfg, field) = crate::oracle::brute_force_stabilize(&init, 10_000).unwrap();
        assert_eq!(cfg, r.outcome.final_config);
        assert_eq!(field, r.outcome.topples);
    }

    #[test]
    fn two_sided_constant_one() {
        let r = two_sided(&Measure::<f64>::constant(1), 20, Seed::default(), 1_000).unwrap();
        assert_eq!((r.a_plus, r.a_minus, r.z_plus, r.z_minus), (0, 0, 0, 0));
        assert_eq!(r.outcome.final_config.heights(), vec![1; 41]);
    }

    #[test]
    fn raster_for_constant_zero() {
        let trace = run_one_sided(&Measure::<f64>::constant(0), 2, Seed::default()).unwrap();
        let mut buf = Vec::new();
        write_raster(&trace, &mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "P2\n4 3\n255\n0 0 0 0\n0 0 0 0\n0 0 0 0\n");

        let trace = run_one_sided(&Measure::<f64>::constant(1), 2, Seed::default()).unwrap();
        let mut buf = Vec::new();
        write_raster(&trace, &mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "P2\n4 3\n255\n255 0 0 0\n255 255 0 0\n255 255 255 0\n");
    }

    #[test]
    fn raster_lines_are_wrapped() {
        let trace = run_one_sided(&Measure::<f64>::constant(1), 60, Seed::default()).unwrap();
        let mut buf = Vec::new();
        write_raster(&trace, &mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.len() <= 70));
        let values: Vec<&str> = text.split_whitespace().skip(4).collect();
        assert_eq!(values.len(), 62 * 61);
    }

    #[test]
    fn empty_event_csv_is_header_only() {
        let mut buf = Vec::new();
        write_events_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,event_kind,wave,position_from,position_to\n"
        );
    }

    #[test]
    fn event_csv_round_trip() {
        let trace = run_one_sided(&Measure::<f64>::poisson(1.0), 2_000, Seed::new(5, 0)).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&trace.events, &mut buf).unwrap();
        let back = read_events_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, trace.events);
    }
}
