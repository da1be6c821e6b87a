//! Toppling procedures that stabilize a window, and the abelianness check.
//!
//! All schedulers work on the padded grid of [`HeightConfig`]: only cells of
//! the active (sub-)window topple, everything else just accumulates grains.
//! Every toppling performed is legal.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::lattice::{HeightConfig, LatticeError, Site, ToppleField, Window};
use crate::measures::{Measure, MeasureError, Seed};
use crate::scalar::Real;

/// Default budget in elementary topplings.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("budget must allow at least one toppling")]
    ZeroBudget,
    #[error("nested volumes must be non-empty, increasing, and end at the full window")]
    InvalidNesting,
    #[error("budget of {budget} topplings exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("radii must be strictly increasing and non-empty")]
    InvalidRadii,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Scheduler names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Nested,
    Parallel,
    RandomSequential,
    Waves,
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Nested => "nested",
            SchedulerKind::Parallel => "parallel",
            SchedulerKind::RandomSequential => "randomseq",
            SchedulerKind::Waves => "waves",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nested" => Ok(SchedulerKind::Nested),
            "parallel" => Ok(SchedulerKind::Parallel),
            "randomseq" => Ok(SchedulerKind::RandomSequential),
            "waves" => Ok(SchedulerKind::Waves),
            other => Err(format!(
                "unknown scheduler `{other}` (expected nested, parallel, randomseq or waves)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheduler {
    /// Stabilize each sub-window in turn; the last one is the full window.
    NestedVolumes(Vec<Window>),
    /// Synchronous sweeps: every site unstable before a sweep topples once.
    Parallel,
    /// Uniformly random unstable site at every step.
    RandomSequential(Seed),
    /// Waves from the unstable site; with several unstable sites, excess
    /// grains are added back one at a time and each is resolved by waves.
    Waves,
}

impl Scheduler {
    /// Concentric boxes growing by one site per side per stage, ending at
    /// `window`.
    pub fn nested(window: &Window) -> Scheduler {
        let max_shrink = window.extents().iter().map(|e| (e - 1) / 2).max().unwrap_or(0);
        let mut stages: Vec<Window> = Vec::with_capacity(max_shrink + 1);
        for s in (0..=max_shrink).rev() {
            let mut lo = window.lower().to_vec();
            let mut hi = window.upper().to_vec();
            for a in 0..window.dim() {
                let k = s.min((window.extents()[a] - 1) / 2) as i64;
                lo[a] += k;
                hi[a] -= k;
            }
            let w = Window::new(lo, hi).expect("shrunk window is non-empty");
            if stages.last() != Some(&w) {
                stages.push(w);
            }
        }
        Scheduler::NestedVolumes(stages)
    }

    /// Plain sequential stabilization of the whole window.
    pub fn sequential(window: &Window) -> Scheduler {
        Scheduler::NestedVolumes(vec![window.clone()])
    }

    pub fn from_kind(kind: SchedulerKind, window: &Window, seed: Seed) -> Scheduler {
        match kind {
            SchedulerKind::Nested => Scheduler::nested(window),
            SchedulerKind::Parallel => Scheduler::Parallel,
            SchedulerKind::RandomSequential => Scheduler::RandomSequential(seed),
            SchedulerKind::Waves => Scheduler::Waves,
        }
    }

    pub fn kind(&self) -> SchedulerKind {
        match self {
            Scheduler::NestedVolumes(_) => SchedulerKind::Nested,
            Scheduler::Parallel => SchedulerKind::Parallel,
            Scheduler::RandomSequential(_) => SchedulerKind::RandomSequential,
            Scheduler::Waves => SchedulerKind::Waves,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Stabilized,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeOutcome {
    pub kind: SchedulerKind,
    pub final_config: HeightConfig,
    pub topples: ToppleField,
    pub status: Status,
    /// Elementary topplings performed; equals `topples.total()`.
    pub steps: u64,
    /// Number of waves (waves scheduler only).
    pub wave_count: Option<u64>,
}

impl StabilizeOutcome {
    pub fn is_stabilized(&self) -> bool {
        self.status == Status::Stabilized
    }
}

/// Stabilize `config` inside its window with the given scheduler.
///
/// Runs until no window site is unstable or `budget` topplings have been
/// performed, whichever comes first.
pub fn stabilize(
    config: &HeightConfig,
    scheduler: &Scheduler,
    budget: u64,
) -> Result<StabilizeOutcome, ScheduleError> {
    stabilize_inner(config, scheduler, budget, None)
}

/// Waves stabilization that also returns the set of sites toppled in each
/// wave, in toppling order.
pub fn stabilize_waves_traced(
    config: &HeightConfig,
    budget: u64,
) -> Result<(StabilizeOutcome, Vec<Vec<Site>>), ScheduleError> {
    let mut trace = Vec::new();
    let out = stabilize_inner(config, &Scheduler::Waves, budget, Some(&mut trace))?;
    let w = config.window();
    let sets = trace
        .into_iter()
        .map(|wave| wave.into_iter().map(|c| w.site_of_cell(c)).collect())
        .collect();
    Ok((out, sets))
}

fn stabilize_inner(
    config: &HeightConfig,
    scheduler: &Scheduler,
    budget: u64,
    wave_trace: Option<&mut Vec<Vec<usize>>>,
) -> Result<StabilizeOutcome, ScheduleError> {
    if budget == 0 {
        return Err(ScheduleError::ZeroBudget);
    }
    let window = config.window().clone();
    let mut eng = Engine::new(config.clone(), budget);
    let mut wave_count = None;
    let stabilized = match scheduler {
        Scheduler::NestedVolumes(stages) => {
            let valid = !stages.is_empty()
                && stages.last() == Some(&window)
                && stages.windows(2).all(|p| p[1].contains_window(&p[0]))
                && window.contains_window(&stages[0]);
            if !valid {
                return Err(ScheduleError::InvalidNesting);
            }
            let mut done = true;
            let mut prev: Option<&Window> = None;
            for stage in stages {
                let fresh = difference_cells(&window, stage, prev);
                for &c in &fresh {
                    eng.active[c] = true;
                }
                if !eng.run_fifo(fresh) {
                    done = false;
                    break;
                }
                prev = Some(stage);
            }
            done
        }
        Scheduler::Parallel => {
            eng.activate_all();
            eng.run_parallel()
        }
        Scheduler::RandomSequential(seed) => {
            eng.activate_all();
            eng.run_random(*seed)
        }
        Scheduler::Waves => {
            eng.activate_all();
            let (done, waves) = eng.run_waves(wave_trace)?;
            wave_count = Some(waves);
            done
        }
    };
    Ok(eng.finish(scheduler.kind(), stabilized, wave_count))
}

/// Cells of `outer \ inner` (all of `outer` when `inner` is `None`) in the
/// padded grid of `window`, lexicographic order.
fn difference_cells(window: &Window, outer: &Window, inner: Option<&Window>) -> Vec<usize> {
    let d = window.dim();
    let mut out = Vec::new();
    let mut coords = vec![0i64; d];
    fn rec(
        axis: usize,
        inside_so_far: bool,
        window: &Window,
        outer: &Window,
        inner: Option<&Window>,
        coords: &mut Vec<i64>,
        out: &mut Vec<usize>,
    ) {
        let d = window.dim();
        if axis == d {
            if !inside_so_far {
                out.push(cell_at(window, coords));
            }
            return;
        }
        if let (true, Some(w)) = (inside_so_far && axis + 1 == d, inner) {
            // last axis of a row inside the inner box: only its two ends are new
            for c in (outer.lower()[axis]..w.lower()[axis]).chain(w.upper()[axis] + 1..=outer.upper()[axis]) {
                coords[axis] = c;
                out.push(cell_at(window, coords));
            }
            return;
        }
        for c in outer.lower()[axis]..=outer.upper()[axis] {
            let inside_axis = inner.is_some_and(|w| w.lower()[axis] <= c && c <= w.upper()[axis]);
            let still_inside = inside_so_far && inside_axis;
            coords[axis] = c;
            if !still_inside && axis + 1 < d {
                // whole remaining slab is outside the inner window
                rec_all(axis + 1, window, outer, coords, out);
            } else {
                rec(axis + 1, still_inside, window, outer, inner, coords, out);
            }
        }
    }
    fn rec_all(axis: usize, window: &Window, outer: &Window, coords: &mut Vec<i64>, out: &mut Vec<usize>) {
        if axis == window.dim() {
            out.push(cell_at(window, coords));
            return;
        }
        for c in outer.lower()[axis]..=outer.upper()[axis] {
            coords[axis] = c;
            rec_all(axis + 1, window, outer, coords, out);
        }
    }
    fn cell_at(window: &Window, coords: &[i64]) -> usize {
        coords
            .iter()
            .zip(window.lower())
            .zip(window.pstrides())
            .map(|((c, lo), s)| (c - lo + 1) as usize * s)
            .sum()
    }
    rec(0, inner.is_some(), window, outer, inner, &mut coords, &mut out);
    out
}

/// Mutable stabilization state shared by all schedulers.
struct Engine {
    cfg: HeightConfig,
    topples: ToppleField,
    active: Vec<bool>,
    queued: Vec<bool>,
    strides: Vec<usize>,
    threshold: u64,
    steps: u64,
    budget: u64,
}

impl Engine {
    fn new(cfg: HeightConfig, budget: u64) -> Self {
        let w = cfg.window().clone();
        Engine {
            topples: ToppleField::zeros(w.clone()),
            active: vec![false; w.padded_len()],
            queued: Vec::new(),
            strides: w.pstrides().to_vec(),
            threshold: w.threshold(),
            steps: 0,
            budget,
            cfg,
        }
    }

    fn activate_all(&mut self) {
        let w = self.cfg.window().clone();
        for c in w.interior_cells() {
            self.active[c] = true;
        }
    }

    #[inline]
    fn unstable(&self, c: usize) -> bool {
        self.active[c] && self.cfg.cells()[c] >= self.threshold
    }

    /// Topple cell `c` `times` times.
    #[inline]
    fn topple_n(&mut self, c: usize, times: u64) {
        let cells = self.cfg.cells_mut();
        cells[c] -= times * self.threshold;
        for &s in &self.strides {
            cells[c - s] += times;
            cells[c + s] += times;
        }
        self.topples.cells_mut()[c] += times;
        self.steps += times;
    }

    fn active_unstable_cells(&self) -> Vec<usize> {
        self.cfg
            .window()
            .interior_cells()
            .filter(|&c| self.unstable(c))
            .collect()
    }

    /// FIFO work queue seeded with `seeds`. Each pop topples a site as many
    /// times as its current height allows.
    fn run_fifo(&mut self, seeds: Vec<usize>) -> bool {
        let mut queued = std::mem::take(&mut self.queued);
        queued.resize(self.active.len(), false);
        let done = self.fifo_with(seeds, &mut queued);
        self.queued = queued;
        done
    }

    /// FIFO pass; leaves `queued` all false on return.
    fn fifo_with(&mut self, seeds: Vec<usize>, queued: &mut [bool]) -> bool {
        let mut queue: VecDeque<usize> = VecDeque::new();
        for c in seeds {
            if self.unstable(c) && !queued[c] {
                queued[c] = true;
                queue.push_back(c);
            }
        }
        while let Some(c) = queue.pop_front() {
            let left = self.budget - self.steps;
            if left == 0 {
                queued[c] = false;
                for q in queue {
                    queued[q] = false;
                }
                return false;
            }
            let times = (self.cfg.cells()[c] / self.threshold).min(left);
            self.topple_n(c, times);
            if self.unstable(c) {
                queue.push_front(c);
                continue;
            }
            queued[c] = false;
            for i in 0..self.strides.len() {
                let s = self.strides[i];
                for n in [c - s, c + s] {
                    if !queued[n] && self.unstable(n) {
                        queued[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        true
    }

    fn run_parallel(&mut self) -> bool {
        let mut current = self.active_unstable_cells();
        let mut stamp = vec![0u64; self.active.len()];
        let mut sweep = 0u64;
        while !current.is_empty() {
            sweep += 1;
            for &c in &current {
                if self.steps == self.budget {
                    return false;
                }
                self.topple_n(c, 1);
            }
            let mut next = Vec::with_capacity(current.len());
            for &c in &current {
                let mut consider = |n: usize, eng: &Engine| {
                    if stamp[n] != sweep && eng.unstable(n) {
                        stamp[n] = sweep;
                        next.push(n);
                    }
                };
                consider(c, self);
                for &s in &self.strides {
                    consider(c - s, self);
                    consider(c + s, self);
                }
            }
            next.sort_unstable();
            current = next;
        }
        true
    }

    fn run_random(&mut self, seed: Seed) -> bool {
        let mut rng = seed.rng();
        let mut list = self.active_unstable_cells();
        let mut pos = vec![usize::MAX; self.active.len()];
        for (i, &c) in list.iter().enumerate() {
            pos[c] = i;
        }
        while !list.is_empty() {
            if self.steps == self.budget {
                return false;
            }
            let i = rng.gen_range(0..list.len());
            let c = list[i];
            self.topple_n(c, 1);
            if !self.unstable(c) {
                list.swap_remove(i);
                pos[c] = usize::MAX;
                if i < list.len() {
                    pos[list[i]] = i;
                }
            }
            for k in 0..self.strides.len() {
                let s = self.strides[k];
                for n in [c - s, c + s] {
                    if pos[n] == usize::MAX && self.unstable(n) {
                        pos[n] = list.len();
                        list.push(n);
                    }
                }
            }
        }
        true
    }

    /// Returns (stabilized, wave count).
    ///
    /// With one unstable site this is the waves procedure from that site.
    /// With several, every unstable site is first cut back to `2d - 1` and
    /// the excess grains are returned one at a time in lexicographic order;
    /// each return leaves exactly one unstable site, which is stabilized by
    /// waves before the next grain is added.
    fn run_waves(&mut self, mut trace: Option<&mut Vec<Vec<usize>>>) -> Result<(bool, u64), ScheduleError> {
        let unstable = self.active_unstable_cells();
        let mut waves = 0u64;
        let mut toppled_in = vec![0u64; self.active.len()];
        let mut queued = vec![false; self.active.len()];
        if unstable.len() <= 1 {
            for x in unstable {
                if !self.waves_from(x, &mut waves, &mut toppled_in, &mut queued, trace.as_deref_mut()) {
                    return Ok((false, waves));
                }
            }
            return Ok((true, waves));
        }
        let cap = self.threshold - 1;
        let mut withheld: Vec<(usize, u64)> = unstable
            .iter()
            .map(|&c| {
                let excess = self.cfg.cells()[c] - cap;
                self.cfg.cells_mut()[c] = cap;
                (c, excess)
            })
            .collect();
        for i in 0..withheld.len() {
            let c = withheld[i].0;
            while withheld[i].1 > 0 {
                withheld[i].1 -= 1;
                self.cfg.cells_mut()[c] += 1;
                if self.unstable(c)
                    && !self.waves_from(c, &mut waves, &mut toppled_in, &mut queued, trace.as_deref_mut())
                {
                    for &(r, e) in &withheld[i..] {
                        self.cfg.cells_mut()[r] += e;
                    }
                    return Ok((false, waves));
                }
            }
        }
        Ok((true, waves))
    }

    /// Run waves from source `x` until it is stable; false on budget stop.
    fn waves_from(
        &mut self,
        x: usize,
        waves: &mut u64,
        toppled_in: &mut [u64],
        queued: &mut [bool],
        mut trace: Option<&mut Vec<Vec<usize>>>,
    ) -> bool {
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
        while self.unstable(x) {
            if self.steps == self.budget {
                return false;
            }
            *waves += 1;
            let mut members = Vec::new();
            self.topple_n(x, 1);
            toppled_in[x] = *waves;
            members.push(x);
            self.push_wave_neighbors(x, x, &mut heap, queued);
            while let Some(Reverse(c)) = heap.pop() {
                queued[c] = false;
                if self.steps == self.budget {
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(members);
                    }
                    return false;
                }
                assert_ne!(toppled_in[c], *waves, "site toppled twice within one wave");
                self.topple_n(c, 1);
                toppled_in[c] = *waves;
                members.push(c);
                self.push_wave_neighbors(c, x, &mut heap, queued);
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(members);
            }
        }
        true
    }

    fn push_wave_neighbors(
        &self,
        c: usize,
        source: usize,
        heap: &mut BinaryHeap<Reverse<usize>>,
        queued: &mut [bool],
    ) {
        for &s in &self.strides {
            for n in [c - s, c + s] {
                if n != source && !queued[n] && self.unstable(n) {
                    queued[n] = true;
                    heap.push(Reverse(n));
                }
            }
        }
    }

    fn finish(self, kind: SchedulerKind, stabilized: bool, wave_count: Option<u64>) -> StabilizeOutcome {
        StabilizeOutcome {
            kind,
            status: if stabilized {
                Status::Stabilized
            } else {
                Status::BudgetExceeded
            },
            steps: self.steps,
            final_config: self.cfg,
            topples: self.topples,
            wave_count,
        }
    }
}

/// Run every scheduler on `config` and report whether all of them end in the
/// same final heights, ledger and topple field.
pub fn abelian_check(
    config: &HeightConfig,
    schedulers: &[Scheduler],
    budget: u64,
) -> Result<bool, ScheduleError> {
    let mut reference: Option<StabilizeOutcome> = None;
    let mut all_equal = true;
    for sched in schedulers {
        let out = stabilize(config, sched, budget)?;
        if !out.is_stabilized() {
            return Err(ScheduleError::BudgetExceeded { budget });
        }
        match &reference {
            None => reference = Some(out),
            Some(r) => {
                all_equal &= r.final_config == out.final_config && r.topples == out.topples;
            }
        }
    }
    Ok(all_equal)
}

/// One radius of a nested-box run.
#[derive(Debug, Clone)]
pub struct NestedStep {
    pub radius: u64,
    /// Original sample restricted to the box `B_k`, empty ledger.
    pub initial: HeightConfig,
    pub outcome: StabilizeOutcome,
    /// `T_k(0)`.
    pub origin_topples: u64,
    /// Fraction of `B_k` sites that never toppled.
    pub never_toppled_fraction: f64,
}

/// Sample once on the largest box and stabilize the boxes `B_k = [-k, k]^d`
/// in increasing order. Topplings at stage `k` are restricted to `B_k`;
/// grains leaving `B_k` are reported as the ledger of that stage.
///
/// Stops after the first radius whose stabilization exceeds the budget.
pub fn run_nested<F: Real>(
    measure: &Measure<F>,
    d: usize,
    radii: &[u64],
    seed: Seed,
    budget: u64,
) -> Result<Vec<NestedStep>, ScheduleError> {
    if radii.is_empty() || radii.windows(2).any(|p| p[0] >= p[1]) {
        return Err(ScheduleError::InvalidRadii);
    }
    let kmax = *radii.last().unwrap();
    let full = Window::cube(d, kmax)?;
    let sample = measure.sample(&full, seed)?;
    run_nested_on(&sample, radii, budget)
}

/// [`run_nested`] on a given configuration centred at the origin; radii must
/// fit inside its window.
pub fn run_nested_on(
    sample: &HeightConfig,
    radii: &[u64],
    budget: u64,
) -> Result<Vec<NestedStep>, ScheduleError> {
    if budget == 0 {
        return Err(ScheduleError::ZeroBudget);
    }
    if radii.is_empty() || radii.windows(2).any(|p| p[0] >= p[1]) {
        return Err(ScheduleError::InvalidRadii);
    }
    let full = sample.window().clone();
    let d = full.dim();
    let mut eng = Engine::new(sample.clone(), budget);
    let mut steps_out = Vec::with_capacity(radii.len());
    let mut prev: Option<Window> = None;
    for &k in radii {
        let bk = Window::cube(d, k)?;
        if !full.contains_window(&bk) {
            return Err(ScheduleError::InvalidRadii);
        }
        let fresh = difference_cells(&full, &bk, prev.as_ref());
        for &c in &fresh {
            eng.active[c] = true;
        }
        let done = eng.run_fifo(fresh);
        let outcome = snapshot(&eng, sample, &bk, done);
        let origin = Site::origin(d);
        let origin_topples = outcome.topples.get(&origin).unwrap_or(0);
        let counts = outcome.topples.counts();
        let never = counts.iter().filter(|&&n| n == 0).count() as f64 / counts.len() as f64;
        let initial = restrict_config(sample, &bk);
        steps_out.push(NestedStep {
            radius: k,
            initial,
            outcome,
            origin_topples,
            never_toppled_fraction: never,
        });
        if !done {
            break;
        }
        prev = Some(bk);
    }
    Ok(steps_out)
}

fn restrict_config(cfg: &HeightConfig, sub: &Window) -> HeightConfig {
    cfg.restrict(sub).expect("sub-window")
}

/// Outcome of the sub-window `bk` as if it had been stabilized on its own:
/// exterior grains received since the start form its ledger.
fn snapshot(eng: &Engine, original: &HeightConfig, bk: &Window, done: bool) -> StabilizeOutcome {
    let mut fin = restrict_config(&eng.cfg, bk);
    let ledger_cells: Vec<usize> = bk.ledger_cells().collect();
    for c in ledger_cells {
        let z = bk.site_of_cell(c);
        // exterior of bk is inside the sampled window or on its halo
        let now = eng.cfg.height(&z).unwrap_or_else(|| eng.cfg.ledger_at(&z));
        let before = original.height(&z).unwrap_or_else(|| original.ledger_at(&z));
        let gained = now - before;
        if gained > 0 {
            fin.add_to_ledger(&z, gained).expect("adjacent exterior site");
        }
    }
    let topples = eng.topples.restrict(bk).expect("sub-window");
    let steps = topples.total();
    StabilizeOutcome {
        kind: SchedulerKind::Nested,
        final_config: fin,
        topples,
        status: if done {
            Status::Stabilized
        } else {
            Status::BudgetExceeded
        },
        steps,
        wave_count: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::verify_evolution;

    fn all_schedulers(w: &Window) -> Vec<Scheduler> {
        vec![
            Scheduler::nested(w),
            Scheduler::Parallel,
            Scheduler::RandomSequential(Seed::new(1, 0)),
            Scheduler::RandomSequential(Seed::new(2, 0)),
            Scheduler::Waves,
        ]
    }

    #[test]
    fn three_site_example_every_scheduler() {
        let cfg = HeightConfig::line(-1, &[1, 2, 1]).unwrap();
        for sched in all_schedulers(cfg.window()) {
            let out = stabilize(&cfg, &sched, 100).unwrap();
            assert_eq!(out.status, Status::Stabilized);
            assert_eq!(out.final_config.heights(), vec![1, 0, 1]);
            assert_eq!(out.topples.counts(), vec![1, 2, 1]);
            assert_eq!(
                out.final_config.ledger(),
                vec![(Site::from(-2), 1), (Site::from(2), 1)]
            );
            assert_eq!(out.steps, 4);
            assert!(verify_evolution(&cfg, &out.topples, &out.final_config).unwrap());
        }
    }

    #[test]
    fn wave_sets_for_three_site_example() {
        let cfg = HeightConfig::line(-1, &[1, 2, 1]).unwrap();
        let (out, sets) = stabilize_waves_traced(&cfg, 100).unwrap();
        assert_eq!(out.wave_count, Some(2));
        let s = |v: &[i64]| v.iter().map(|&x| Site::from(x)).collect::<Vec<_>>();
        assert_eq!(sets, vec![s(&[0, -1, 1]), s(&[0])]);
    }

    #[test]
    fn stable_input_is_untouched() {
        let cfg = HeightConfig::line(0, &[1, 0, 1, 1]).unwrap();
        for sched in all_schedulers(cfg.window()) {
            let out = stabilize(&cfg, &sched, 10).unwrap();
            assert_eq!(out.final_config, cfg);
            assert!(out.topples.is_zero());
            assert_eq!(out.steps, 0);
            assert!(out.is_stabilized());
        }
    }

    #[test]
    fn rejected_inputs_and_multi_source_waves() {
        let cfg = HeightConfig::line(0, &[2, 1, 2]).unwrap();
        let waves = stabilize(&cfg, &Scheduler::Waves, 100).unwrap();
        let parallel = stabilize(&cfg, &Scheduler::Parallel, 100).unwrap();
        assert_eq!(waves.final_config, parallel.final_config);
        assert_eq!(waves.topples, parallel.topples);
        assert_eq!(
            stabilize(&cfg, &Scheduler::Parallel, 0),
            Err(ScheduleError::ZeroBudget)
        );
        let bad = Scheduler::NestedVolumes(vec![Window::interval(0, 1).unwrap()]);
        assert_eq!(stabilize(&cfg, &bad, 10), Err(ScheduleError::InvalidNesting));
    }

    #[test]
    fn budget_exceeded_leaves_a_valid_partial_state() {
        let cfg = HeightConfig::line(-3, &[1, 1, 1, 5, 1, 1, 1]).unwrap();
        for sched in all_schedulers(cfg.window()) {
            if sched == Scheduler::Waves {
                continue;
            }
            let out = stabilize(&cfg, &sched, 3).unwrap();
            assert_eq!(out.status, Status::BudgetExceeded);
            assert_eq!(out.steps, 3);
            assert_eq!(out.topples.total(), 3);
            assert!(verify_evolution(&cfg, &out.topples, &out.final_config).unwrap());
        }
        let one = HeightConfig::line(-3, &[1, 1, 1, 2, 1, 1, 1]).unwrap();
        let out = stabilize(&one, &Scheduler::Waves, 5).unwrap();
        assert_eq!(out.status, Status::BudgetExceeded);
        assert!(verify_evolution(&one, &out.topples, &out.final_config).unwrap());
    }

    #[test]
    fn nested_stages_grow_to_full_window() {
        let w = Window::new(vec![-3, 0], vec![4, 2]).unwrap();
        let Scheduler::NestedVolumes(stages) = Scheduler::nested(&w) else {
            unreachable!()
        };
        assert_eq!(stages.last(), Some(&w));
        for p in stages.windows(2) {
            assert!(p[1].contains_window(&p[0]) && p[0] != p[1]);
        }
    }

    #[test]
    fn difference_cells_cover_shell_once() {
        let full = Window::cube(2, 3).unwrap();
        let inner = Window::cube(2, 1).unwrap();
        let outer = Window::cube(2, 2).unwrap();
        let cells = difference_cells(&full, &outer, Some(&inner));
        assert_eq!(cells.len(), 25 - 9);
        let all = difference_cells(&full, &outer, None);
        assert_eq!(all.len(), 25);
    }

    #[test]
    fn single_defect_nested_growth() {
        let m = Measure::<f64>::single_defect(1, Site::from(0), 2);
        let steps = run_nested(&m, 1, &[1, 2, 3], Seed::default(), 1_000).unwrap();
        let t0: Vec<u64> = steps.iter().map(|s| s.origin_topples).collect();
        assert_eq!(t0, vec![2, 3, 4]);
        for s in &steps {
            assert!(verify_evolution(&s.initial, &s.outcome.topples, &s.outcome.final_config).unwrap());
            // matches a from-scratch stabilization of the box
            let direct = stabilize(&s.initial, &Scheduler::Parallel, 1_000).unwrap();
            assert_eq!(direct.final_config, s.outcome.final_config);
            assert_eq!(direct.topples, s.outcome.topples);
        }
    }

    #[test]
    fn nested_constant_zero_never_topples() {
        let m = Measure::<f64>::constant(0);
        for s in run_nested(&m, 2, &[1, 3, 4], Seed::default(), 10).unwrap() {
            assert!(s.outcome.topples.is_zero());
            assert_eq!(s.never_toppled_fraction, 1.0);
        }
        assert!(matches!(
            run_nested(&m, 1, &[3, 2], Seed::default(), 10),
            Err(ScheduleError::InvalidRadii)
        ));
    }

    #[test]
    fn nested_budget_stops_later_radii() {
        let m = Measure::<f64>::single_defect(1, Site::from(0), 2);
        let steps = run_nested(&m, 1, &[1, 5, 9], Seed::default(), 12).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[1].outcome.status, Status::BudgetExceeded);
    }
}
