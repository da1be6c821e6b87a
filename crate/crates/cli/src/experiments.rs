//! Experiment drivers shared by the command line and the acceptance suite.
//! Every driver is a pure function of its parameters and master seed.

use rayon::prelude::*;
use thiserror::Error;

use sandpile_core::onesided::interval_stats;
use sandpile_core::percolation::{origin_cluster_size, survival_tail, TailEstimate};
use sandpile_core::schedulers::NestedStep;
use sandpile_core::{
    extract_sets, run_nested, LatticeError, stabilize, verify_evolution, MeasureError, MeasureSpec, PercolationError,
    ScheduleError, Scheduler, SchedulerKind, Seed, Site, Status, Window,
};

use crate::stats::{ks_two_sample, KsResult, StatsError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("budget of {budget} topplings exceeded (seed {seed}, radius {radius})")]
    BudgetExceeded { budget: u64, seed: Seed, radius: u64 },
    #[error("level {level}: only {found} completed intervals, need {needed}")]
    TooFewIntervals { level: u64, found: usize, needed: usize },
    #[error("evolution identity failed for seed {seed} at radius {radius}")]
    EvolutionIdentity { seed: Seed, radius: u64 },
    #[error("{0}")]
    Invalid(String),
}

/// Run `f` on replicate seeds `(master, 0..count)` in parallel; results are
/// in replicate order regardless of the worker count.
pub fn replicates<T, F>(master: u64, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Seed) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(|i| f(Seed::new(master, i))).collect()
}

/// Nested-box run that fails on a budget stop and checks the evolution
/// identity of every radius.
pub fn nested_checked(
    measure: &MeasureSpec,
    d: usize,
    radii: &[u64],
    seed: Seed,
    budget: u64,
) -> Result<Vec<NestedStep>, ExperimentError> {
    let steps = run_nested(measure, d, radii, seed, budget)?;
    for s in &steps {
        if s.outcome.status != Status::Stabilized {
            return Err(ExperimentError::BudgetExceeded {
                budget,
                seed,
                radius: s.radius,
            });
        }
        if !verify_evolution(&s.initial, &s.outcome.topples, &s.outcome.final_config)? {
            return Err(ExperimentError::EvolutionIdentity { seed, radius: s.radius });
        }
    }
    Ok(steps)
}

/// Origin-cluster sizes of T and W over replicates, for one radius.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginSizes {
    pub radius: u64,
    pub toppled: Vec<usize>,
    pub toppled_or_occupied: Vec<usize>,
}

/// For every replicate, sample on the largest box, stabilize each box of
/// `radii` in turn, and record the origin clusters of T and W.
pub fn origin_cluster_sizes(
    measure: &MeasureSpec,
    d: usize,
    radii: &[u64],
    replicate_count: u64,
    master: u64,
    budget: u64,
) -> Result<Vec<OriginSizes>, ExperimentError> {
    let per_rep = replicates(master, replicate_count, |seed| -> Result<Vec<(usize, usize)>, ExperimentError> {
        let steps = nested_checked(measure, d, radii, seed, budget)?;
        steps
            .iter()
            .map(|s| {
                let (t, _, w) = extract_sets(&s.outcome)?;
                Ok((origin_cluster_size(&t), origin_cluster_size(&w)))
            })
            .collect()
    });
    let mut out: Vec<OriginSizes> = radii
        .iter()
        .map(|&radius| OriginSizes {
            radius,
            toppled: Vec::new(),
            toppled_or_occupied: Vec::new(),
        })
        .collect();
    for rep in per_rep {
        for (slot, (t, w)) in out.iter_mut().zip(rep?) {
            slot.toppled.push(t);
            slot.toppled_or_occupied.push(w);
        }
    }
    Ok(out)
}

/// Survival tails of both sets at one radius.
#[derive(Debug, Clone, PartialEq)]
pub struct TailPair {
    pub radius: u64,
    pub toppled: TailEstimate<f64>,
    pub toppled_or_occupied: TailEstimate<f64>,
}

pub fn tails(sizes: &[OriginSizes], thresholds: &[usize]) -> Result<Vec<TailPair>, ExperimentError> {
    sizes
        .iter()
        .map(|s| {
            Ok(TailPair {
                radius: s.radius,
                toppled: survival_tail(&s.toppled, thresholds)?,
                toppled_or_occupied: survival_tail(&s.toppled_or_occupied, thresholds)?,
            })
        })
        .collect()
}

/// Thresholds where two survival curves differ by more than `z` combined
/// standard errors.
pub fn tail_disagreements(a: &TailEstimate<f64>, b: &TailEstimate<f64>, z: f64) -> Vec<usize> {
    let (sa, sb) = (a.standard_errors(), b.standard_errors());
    a.thresholds
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            let gap = (a.survival[i] - b.survival[i]).abs();
            gap > z * (sa[i] * sa[i] + sb[i] * sb[i]).sqrt()
        })
        .map(|(_, &n)| n)
        .collect()
}

/// Completed excursion lengths at one level, pooled over independent runs
/// in run order.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSample {
    pub level: u64,
    pub deltas: Vec<u64>,
    /// Excursions of the first half of the runs; with a single run, its
    /// earlier half.
    pub first_half: Vec<u64>,
    pub second_half: Vec<u64>,
    /// Runs that ended inside an excursion.
    pub open_runs: usize,
}

/// KS comparisons of excursion lengths of `Z` across levels and halves.
#[derive(Debug, Clone)]
pub struct IidReport {
    pub levels: Vec<LevelSample>,
    /// Every pair of levels, `(level_a, level_b, result)`.
    pub between_levels: Vec<(u64, u64, KsResult<f64>)>,
    /// First half of the sample against the second, per level.
    pub split_half: Vec<(u64, KsResult<f64>)>,
}

/// Excursion statistics of one or more zero-count series, each started
/// from the empty configuration.
pub fn iid_analysis(runs: &[Vec<u64>], levels: &[u64], min_intervals: usize) -> Result<IidReport, ExperimentError> {
    let mut samples = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut s = LevelSample {
            level,
            deltas: Vec::new(),
            first_half: Vec::new(),
            second_half: Vec::new(),
            open_runs: 0,
        };
        for (i, zero_counts) in runs.iter().enumerate() {
            let t = interval_stats(zero_counts, level).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            if runs.len() == 1 {
                let (first, second) = t.deltas.split_at(t.deltas.len() / 2);
                s.first_half.extend_from_slice(first);
                s.second_half.extend_from_slice(second);
            } else if i < runs.len() / 2 {
                s.first_half.extend_from_slice(&t.deltas);
            } else {
                s.second_half.extend_from_slice(&t.deltas);
            }
            s.deltas.extend_from_slice(&t.deltas);
            s.open_runs += usize::from(t.open_start.is_some());
        }
        if s.deltas.len() < min_intervals {
            return Err(ExperimentError::TooFewIntervals {
                level,
                found: s.deltas.len(),
                needed: min_intervals,
            });
        }
        samples.push(s);
    }
    let as_f64 = |x: &[u64]| x.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let mut between_levels = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let r = ks_two_sample(&as_f64(&samples[i].deltas), &as_f64(&samples[j].deltas))?;
            between_levels.push((samples[i].level, samples[j].level, r));
        }
    }
    let mut split_half = Vec::new();
    for s in &samples {
        split_half.push((s.level, ks_two_sample(&as_f64(&s.first_half), &as_f64(&s.second_half))?));
    }
    Ok(IidReport {
        levels: samples,
        between_levels,
        split_half,
    })
}

/// `S_n` for one replicate: heights of `[-n, n]` in site order.
pub fn clt_statistic(measure: &MeasureSpec, n: u64, seed: Seed) -> Result<f64, ExperimentError> {
    let mut sampler = measure.sampler(seed)?;
    let heights: Vec<u64> = (-(n as i64)..=n as i64)
        .map(|x| sampler.height_at(&Site::from(x)))
        .collect();
    Ok(crate::stats::scaled_excess(&heights, n))
}

/// Density before and after stabilizing a large box.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub radius: u64,
    pub margin: u64,
    pub sampled_density: f64,
    pub interior_sampled_density: f64,
    pub interior_final_density: f64,
    pub total_in: u64,
    pub total_final: u64,
    pub exported: u64,
    /// `final = initial - Δ T` on the whole box, ledger included.
    pub evolution_identity: bool,
    pub status: Status,
}

impl DensityReport {
    pub fn ledger_identity_holds(&self) -> bool {
        self.total_in == self.total_final + self.exported
    }
}

/// Width of the excluded boundary layer: 5% of the radius, rounded up.
pub fn interior_margin(radius: u64) -> u64 {
    radius.div_ceil(20)
}

pub fn density_check(
    measure: &MeasureSpec,
    d: usize,
    radius: u64,
    kind: SchedulerKind,
    seed: Seed,
    budget: u64,
) -> Result<DensityReport, ExperimentError> {
    let window = Window::cube(d, radius)?;
    let initial = measure.sample(&window, seed)?;
    let outcome = stabilize(&initial, &Scheduler::from_kind(kind, &window, seed), budget)?;
    let evolution_identity = verify_evolution(&initial, &outcome.topples, &outcome.final_config)?;
    let margin = interior_margin(radius);
    let inner = radius.saturating_sub(margin) as i64;
    let (mut sites, mut before, mut after) = (0u64, 0u64, 0u64);
    let h0 = initial.heights();
    let h1 = outcome.final_config.heights();
    for (r, site) in window.sites().enumerate() {
        if site.coords().iter().all(|c| c.abs() <= inner) {
            sites += 1;
            before += h0[r];
            after += h1[r];
        }
    }
    Ok(DensityReport {
        radius,
        margin,
        sampled_density: initial.window_total() as f64 / window.len() as f64,
        interior_sampled_density: before as f64 / sites as f64,
        interior_final_density: after as f64 / sites as f64,
        total_in: initial.total_grains(),
        total_final: outcome.final_config.window_total(),
        exported: outcome.final_config.ledger_total(),
        evolution_identity,
        status: outcome.status,
    })
}

/// One cell of the exploratory growth scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub density: f64,
    pub radius: u64,
    pub seeds: u64,
    /// Seeds that finished this radius within budget.
    pub completed: u64,
    pub median_origin_topples: Option<u64>,
    pub mean_never_toppled_fraction: Option<f64>,
    /// Fraction of nearest-neighbour bonds inside the box whose two ends
    /// never toppled, averaged over completed seeds.
    pub mean_never_toppled_bond_fraction: Option<f64>,
}

pub fn never_toppled_bond_fraction(step: &NestedStep) -> f64 {
    let w = step.outcome.topples.window();
    let counts = step.outcome.topples.counts();
    let d = w.dim();
    let (mut bonds, mut quiet) = (0u64, 0u64);
    for (r, site) in w.sites().enumerate() {
        for axis in 0..d {
            let mut c = site.coords().to_vec();
            c[axis] += 1;
            if let Some(q) = w.rank_of(&Site::new(c)) {
                bonds += 1;
                if counts[r] == 0 && counts[q] == 0 {
                    quiet += 1;
                }
            }
        }
    }
    if bonds == 0 {
        0.0
    } else {
        quiet as f64 / bonds as f64
    }
}

/// Median origin topple count and never-toppled fractions per density and
/// radius. A budget stop ends that seed's run; later radii count it as
/// incomplete.
pub fn growth_scan(
    densities: &[f64],
    d: usize,
    radii: &[u64],
    seeds: u64,
    master: u64,
    budget: u64,
) -> Result<Vec<ScanRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &rho in densities {
        let measure = MeasureSpec::poisson(rho);
        measure.validate()?;
        let runs = replicates(master, seeds, |seed| run_nested(&measure, d, radii, seed, budget));
        let runs: Vec<Vec<NestedStep>> = runs.into_iter().collect::<Result<_, _>>()?;
        for (i, &radius) in radii.iter().enumerate() {
            let done: Vec<&NestedStep> = runs
                .iter()
                .filter_map(|r| r.get(i))
                .filter(|s| s.outcome.status == Status::Stabilized)
                .collect();
            let origin: Vec<u64> = done.iter().map(|s| s.origin_topples).collect();
            let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            rows.push(ScanRow {
                density: rho,
                radius,
                seeds,
                completed: done.len() as u64,
                median_origin_topples: crate::stats::median_u64(&origin),
                mean_never_toppled_fraction: mean(done.iter().map(|s| s.never_toppled_fraction).collect()),
                mean_never_toppled_bond_fraction: mean(done.iter().map(|s| never_toppled_bond_fraction(s)).collect()),
            });
        }
    }
    Ok(rows)
}
