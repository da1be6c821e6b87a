//! Clusters of toppled and occupied sites after stabilization, the internal
//! bond bound on toppled sets, and origin-cluster survival tails.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::lattice::{HeightConfig, Site, Window};
use crate::measures::Seed;
use crate::scalar::Real;
use crate::schedulers::{StabilizeOutcome, Status};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PercolationError {
    #[error("outcome did not stabilize")]
    NotStabilized,
    #[error("window of the site set differs from the configuration window")]
    WindowMismatch,
    #[error("need at least one replicate")]
    NoReplicates,
    #[error("only {supported} thresholds have support >= {min_count}; need 3")]
    InsufficientSupport { supported: usize, min_count: u64 },
}

/// Subset of a window, stored as one flag per site in rank order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSet {
    window: Window,
    members: Vec<bool>,
}

impl SiteSet {
    pub fn empty(window: Window) -> Self {
        let members = vec![false; window.len()];
        Self { window, members }
    }

    pub fn full(window: Window) -> Self {
        let members = vec![true; window.len()];
        Self { window, members }
    }

    pub fn from_sites<'a>(window: Window, sites: impl IntoIterator<Item = &'a Site>) -> Self {
        let mut set = Self::empty(window);
        for s in sites {
            set.insert(s);
        }
        set
    }

    /// Returns false when `site` lies outside the window.
    pub fn insert(&mut self, site: &Site) -> bool {
        match self.window.rank_of(site) {
            Some(r) => {
                self.members[r] = true;
                true
            }
            None => false,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.window.rank_of(site).is_some_and(|r| self.members[r])
    }

    pub fn contains_rank(&self, rank: usize) -> bool {
        self.members[rank]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn sites(&self) -> Vec<Site> {
        self.ranks().map(|r| self.window.site_at(r)).collect()
    }

    pub fn ranks(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(r, _)| r)
    }

    pub fn union(&self, other: &SiteSet) -> Result<SiteSet, PercolationError> {
        if self.window != other.window {
            return Err(PercolationError::WindowMismatch);
        }
        let members = self.members.iter().zip(&other.members).map(|(a, b)| *a || *b).collect();
        Ok(Self {
            window: self.window.clone(),
            members,
        })
    }

    pub fn is_subset_of(&self, other: &SiteSet) -> bool {
        self.window == other.window && self.members.iter().zip(&other.members).all(|(a, b)| !a || *b)
    }
}

/// Rank arithmetic on an unpadded window.
struct Grid {
    extents: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    fn new(window: &Window) -> Self {
        let extents = window.extents().to_vec();
        let mut strides = vec![1; extents.len()];
        for i in (0..extents.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * extents[i + 1];
        }
        Self { extents, strides }
    }

    fn for_each_neighbor(&self, rank: usize, mut f: impl FnMut(usize)) {
        for (&e, &s) in self.extents.iter().zip(&self.strides) {
            let c = (rank / s) % e;
            if c > 0 {
                f(rank - s);
            }
            if c + 1 < e {
                f(rank + s);
            }
        }
    }

    /// Neighbors with a larger rank, so each bond is seen once.
    fn for_each_forward_neighbor(&self, rank: usize, mut f: impl FnMut(usize)) {
        for (&e, &s) in self.extents.iter().zip(&self.strides) {
            if (rank / s) % e + 1 < e {
                f(rank + s);
            }
        }
    }

    fn on_edge(&self, rank: usize) -> bool {
        self.extents
            .iter()
            .zip(&self.strides)
            .any(|(&e, &s)| {
                let c = (rank / s) % e;
                c == 0 || c + 1 == e
            })
    }
}

/// T (toppled), V (nonempty) and W = T ∪ V of a stabilized outcome.
pub fn extract_sets(outcome: &StabilizeOutcome) -> Result<(SiteSet, SiteSet, SiteSet), PercolationError> {
    if outcome.status != Status::Stabilized {
        return Err(PercolationError::NotStabilized);
    }
    let window = outcome.final_config.window().clone();
    let t = SiteSet {
        window: window.clone(),
        members: outcome.topples.counts().iter().map(|&c| c > 0).collect(),
    };
    let v = SiteSet {
        window,
        members: outcome.final_config.heights().iter().map(|&h| h > 0).collect(),
    };
    let w = t.union(&v)?;
    Ok((t, v, w))
}

/// Nearest-neighbour clusters of a site set. Labels run from 1 in the
/// lexicographic order of each cluster's smallest member; 0 marks sites
/// outside the set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDecomposition {
    window: Window,
    labels: Vec<u32>,
    sizes: Vec<usize>,
    origin_cluster: Option<u32>,
}

impl ClusterDecomposition {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn label_of(&self, site: &Site) -> Option<u32> {
        let r = self.window.rank_of(site)?;
        (self.labels[r] > 0).then_some(self.labels[r])
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, label: u32) -> usize {
        self.sizes[label as usize - 1]
    }

    /// Sizes indexed by `label - 1`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn origin_cluster(&self) -> Option<u32> {
        self.origin_cluster
    }

    /// Size of the cluster holding the origin, 0 when the origin is not in
    /// the set.
    pub fn origin_size(&self) -> usize {
        self.origin_cluster.map_or(0, |l| self.size(l))
    }

    pub fn largest(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Member ranks of every cluster, indexed by `label - 1`.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.sizes.len()];
        for (r, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push(r);
            }
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn decompose(set: &SiteSet) -> ClusterDecomposition {
    let grid = Grid::new(&set.window);
    let n = set.members.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for r in set.ranks() {
        grid.for_each_forward_neighbor(r, |q| {
            if set.members[q] {
                let (a, b) = (find(&mut parent, r), find(&mut parent, q));
                if a != b {
                    // the smaller rank stays the root
                    parent[a.max(b)] = a.min(b);
                }
            }
        });
    }
    let mut labels = vec![0u32; n];
    let mut sizes = Vec::new();
    for r in 0..n {
        if !set.members[r] {
            continue;
        }
        let root = find(&mut parent, r);
        if root == r {
            sizes.push(0);
            labels[r] = sizes.len() as u32;
        } else {
            labels[r] = labels[root];
        }
        sizes[labels[r] as usize - 1] += 1;
    }
    let origin = Site::origin(set.window.dim());
    let origin_cluster = set.window.rank_of(&origin).and_then(|r| (labels[r] > 0).then_some(labels[r]));
    ClusterDecomposition {
        window: set.window.clone(),
        labels,
        sizes,
        origin_cluster,
    }
}

/// Size of the cluster holding the origin (0 when the origin is not in the
/// set), without labelling the rest of the window.
pub fn origin_cluster_size(set: &SiteSet) -> usize {
    let Some(start) = set.window.rank_of(&Site::origin(set.window.dim())) else {
        return 0;
    };
    if !set.members[start] {
        return 0;
    }
    let grid = Grid::new(&set.window);
    let mut seen = std::collections::HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(r) = queue.pop_front() {
        grid.for_each_neighbor(r, |q| {
            if set.members[q] && seen.insert(q) {
                queue.push_back(q);
            }
        });
    }
    seen.len()
}

/// Tally of a universally quantified bound checked on many site sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundReport {
    pub checked: usize,
    pub violations: usize,
    /// Clusters left out because they touch the window edge.
    pub skipped: usize,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }

    pub fn merge(&mut self, other: BoundReport) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.skipped += other.skipped;
    }
}

fn internal_bonds(grid: &Grid, inside: &[bool], ranks: &[usize]) -> u64 {
    let mut bonds = 0;
    for &r in ranks {
        grid.for_each_forward_neighbor(r, |q| {
            if inside[q] {
                bonds += 1;
            }
        });
    }
    bonds
}

/// Check that every maximal cluster of `toppled`, and `subset_samples`
/// random connected subsets of each, holds at least as many grains in
/// `final_config` as it has internal bonds.
pub fn bond_bound_check(
    final_config: &HeightConfig,
    toppled: &SiteSet,
    subset_samples: usize,
    seed: Seed,
) -> Result<BoundReport, PercolationError> {
    if final_config.window() != toppled.window() {
        return Err(PercolationError::WindowMismatch);
    }
    let heights = final_config.heights();
    let grid = Grid::new(toppled.window());
    let clusters = decompose(toppled).members();
    let mut rng = seed.rng();
    let mut report = BoundReport::default();
    let mut inside = vec![false; heights.len()];
    let check = |ranks: &[usize], inside: &mut [bool], report: &mut BoundReport| {
        for &r in ranks {
            inside[r] = true;
        }
        let bonds = internal_bonds(&grid, inside, ranks);
        let grains: u64 = ranks.iter().map(|&r| heights[r]).sum();
        report.checked += 1;
        if grains < bonds {
            report.violations += 1;
        }
        for &r in ranks {
            inside[r] = false;
        }
    };
    for cluster in &clusters {
        check(cluster, &mut inside, &mut report);
        if cluster.len() < 2 {
            continue;
        }
        for _ in 0..subset_samples {
            let subset = random_connected_subset(&grid, toppled, cluster, &mut rng);
            check(&subset, &mut inside, &mut report);
        }
    }
    Ok(report)
}

/// Grow a connected subset of `cluster` from a random member, adding a
/// random frontier site until a random target size is reached.
fn random_connected_subset(grid: &Grid, set: &SiteSet, cluster: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    let target = rng.gen_range(1..=cluster.len());
    let start = cluster[rng.gen_range(0..cluster.len())];
    let mut chosen = vec![start];
    let mut seen = std::collections::HashSet::from([start]);
    let mut frontier = Vec::new();
    grid.for_each_neighbor(start, |q| {
        if set.members[q] && seen.insert(q) {
            frontier.push(q);
        }
    });
    while chosen.len() < target && !frontier.is_empty() {
        let next = frontier.swap_remove(rng.gen_range(0..frontier.len()));
        chosen.push(next);
        grid.for_each_neighbor(next, |q| {
            if set.members[q] && seen.insert(q) {
                frontier.push(q);
            }
        });
    }
    chosen
}

/// For every toppled cluster away from the window edge, with `m_t` sites and
/// `m_b` outer boundary sites, check that the cluster and its boundary hold
/// at least `m_t - 1 + m_b` grains.
pub fn region_grain_check(final_config: &HeightConfig, toppled: &SiteSet) -> Result<BoundReport, PercolationError> {
    if final_config.window() != toppled.window() {
        return Err(PercolationError::WindowMismatch);
    }
    let heights = final_config.heights();
    let grid = Grid::new(toppled.window());
    let mut report = BoundReport::default();
    let mut boundary_mark = vec![false; heights.len()];
    for cluster in decompose(toppled).members() {
        if cluster.iter().any(|&r| grid.on_edge(r)) {
            report.skipped += 1;
            continue;
        }
        let mut boundary = Vec::new();
        for &r in &cluster {
            grid.for_each_neighbor(r, |q| {
                if !toppled.members[q] && !boundary_mark[q] {
                    boundary_mark[q] = true;
                    boundary.push(q);
                }
            });
        }
        let grains: u64 = cluster.iter().chain(&boundary).map(|&r| heights[r]).sum();
        let required = (cluster.len() - 1 + boundary.len()) as u64;
        report.checked += 1;
        if grains < required {
            report.violations += 1;
        }
        for r in boundary {
            boundary_mark[r] = false;
        }
    }
    Ok(report)
}

/// Empirical survival function of origin-cluster sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate<F> {
    pub thresholds: Vec<usize>,
    pub survival: Vec<F>,
    /// Replicates with size at least the threshold.
    pub counts: Vec<u64>,
    pub replicates: u64,
}

impl<F: Real> TailEstimate<F> {
    /// Binomial standard error of each survival value.
    pub fn standard_errors(&self) -> Vec<F> {
        let n = F::lit(self.replicates as f64);
        self.survival
            .iter()
            .map(|&p| (p * (F::one() - p) / n).sqrt())
            .collect()
    }
}

pub fn survival_tail<F: Real>(sizes: &[usize], thresholds: &[usize]) -> Result<TailEstimate<F>, PercolationError> {
    if sizes.is_empty() {
        return Err(PercolationError::NoReplicates);
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let total = sorted.len();
    let counts: Vec<u64> = thresholds
        .iter()
        .map(|&n| (total - sorted.partition_point(|&s| s < n)) as u64)
        .collect();
    let survival = counts
        .iter()
        .map(|&c| F::lit(c as f64) / F::lit(total as f64))
        .collect();
    Ok(TailEstimate {
        thresholds: thresholds.to_vec(),
        survival,
        counts,
        replicates: total as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<F> {
    pub slope: F,
    pub intercept: F,
    /// `None` when log survival is constant over the fit range.
    pub r_squared: Option<F>,
    pub fit_range: (usize, usize),
    pub points: usize,
}

impl<F: Real> FitResult<F> {
    pub fn is_degenerate(&self) -> bool {
        self.r_squared.is_none()
    }
}

pub const DEFAULT_MIN_COUNT: u64 = 50;

/// Least squares of `ln survival` against the threshold over thresholds
/// with at least `min_count` supporting replicates.
pub fn fit_exponential<F: Real>(tail: &TailEstimate<F>, min_count: u64) -> Result<FitResult<F>, PercolationError> {
    fit_exponential_in(tail, min_count, 0, usize::MAX)
}

/// As [`fit_exponential`], restricted to thresholds in `[lo, hi]`.
pub fn fit_exponential_in<F: Real>(
    tail: &TailEstimate<F>,
    min_count: u64,
    lo: usize,
    hi: usize,
) -> Result<FitResult<F>, PercolationError> {
    let points: Vec<(F, F, usize)> = tail
        .thresholds
        .iter()
        .zip(&tail.survival)
        .zip(&tail.counts)
        .filter(|((&n, &s), &c)| c >= min_count.max(1) && s > F::zero() && (lo..=hi).contains(&n))
        .map(|((&n, &s), _)| (F::lit(n as f64), s.ln(), n))
        .collect();
    if points.len() < 3 {
        return Err(PercolationError::InsufficientSupport {
            supported: points.len(),
            min_count,
        });
    }
    let k = F::lit(points.len() as f64);
    let mean_x = points.iter().map(|p| p.0).fold(F::zero(), |a, b| a + b) / k;
    let mean_y = points.iter().map(|p| p.1).fold(F::zero(), |a, b| a + b) / k;
    let (mut sxx, mut sxy, mut syy) = (F::zero(), F::zero(), F::zero());
    for &(x, y, _) in &points {
        sxx = sxx + (x - mean_x) * (x - mean_x);
        sxy = sxy + (x - mean_x) * (y - mean_y);
        syy = syy + (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let scale = mean_y.abs().max(F::one());
    let r_squared = if syy <= F::epsilon() * scale * scale * k {
        None
    } else {
        let ss_res = points
            .iter()
            .map(|&(x, y, _)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .fold(F::zero(), |a, b| a + b);
        Some(F::one() - ss_res / syy)
    };
    let slope = if r_squared.is_none() { F::zero() } else { slope };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        fit_range: (points[0].2, points[points.len() - 1].2),
        points: points.len(),
    })
}

/// Breadth-first order of a cluster from its smallest member; used for
/// reporting cluster shapes.
pub fn cluster_sites(decomp: &ClusterDecomposition, label: u32) -> Vec<Site> {
    let grid = Grid::new(&decomp.window);
    let Some(start) = decomp.labels.iter().position(|&l| l == label) else {
        return Vec::new();
    };
    let mut seen = vec![false; decomp.labels.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(r) = queue.pop_front() {
        out.push(decomp.window.site_at(r));
        grid.for_each_neighbor(r, |q| {
            if decomp.labels[q] == label && !seen[q] {
                seen[q] = true;
                queue.push_back(q);
            }
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::HeightConfig;
    use crate::schedulers::{stabilize, Scheduler, DEFAULT_BUDGET};

    fn three_site_outcome() -> StabilizeOutcome {
        let cfg = HeightConfig::line(-1, &[1, 2, 1]).unwrap();
        stabilize(&cfg, &Scheduler::Parallel, DEFAULT_BUDGET).unwrap()
    }

    #[test]
    fn sets_of_three_site_example() {
        let (t, v, w) = extract_sets(&three_site_outcome()).unwrap();
        let s = |xs: &[i64]| xs.iter().map(|&x| Site::from(x)).collect::<Vec<_>>();
        assert_eq!(t.sites(), s(&[-1, 0, 1]));
        assert_eq!(v.sites(), s(&[-1, 1]));
        assert_eq!(w.sites(), s(&[-1, 0, 1]));
    }

    #[test]
    fn sets_of_stable_and_empty_inputs() {
        let cfg = HeightConfig::line(0, &[0, 1, 0, 1]).unwrap();
        let out = stabilize(&cfg, &Scheduler::Parallel, DEFAULT_BUDGET).unwrap();
        let (t, v, w) = extract_sets(&out).unwrap();
        assert!(t.is_empty());
        assert_eq!(v.sites(), vec![Site::from(1), Site::from(3)]);
        assert_eq!(w, v);

        let cfg = HeightConfig::zeros(Window::cube(2, 3).unwrap());
        let out = stabilize(&cfg, &Scheduler::Parallel, DEFAULT_BUDGET).unwrap();
        let (t, v, w) = extract_sets(&out).unwrap();
        assert!(t.is_empty() && v.is_empty() && w.is_empty());
    }

    #[test]
    fn unfinished_outcome_is_rejected() {
        let cfg = HeightConfig::line(-1, &[1, 2, 1]).unwrap();
        let out = stabilize(&cfg, &Scheduler::Parallel, 1).unwrap();
        assert_eq!(extract_sets(&out).unwrap_err(), PercolationError::NotStabilized);
    }

    #[test]
    fn decompose_examples() {
        let w = Window::cube(2, 6).unwrap();
        let set = SiteSet::from_sites(
            w.clone(),
            &[Site::new(vec![0, 0]), Site::new(vec![0, 1]), Site::new(vec![5, 5])],
        );
        let d = decompose(&set);
        assert_eq!(d.cluster_count(), 2);
        let mut sizes = d.sizes().to_vec();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        assert_eq!(d.origin_size(), 2);
        assert_eq!(origin_cluster_size(&set), 2);
        assert_eq!(cluster_sites(&d, d.origin_cluster().unwrap()).len(), 2);

        let d = decompose(&SiteSet::empty(w.clone()));
        assert_eq!(d.cluster_count(), 0);
        assert_eq!(d.origin_cluster(), None);
        assert_eq!(d.origin_size(), 0);
        assert_eq!(origin_cluster_size(&SiteSet::empty(w.clone())), 0);

        let d = decompose(&SiteSet::full(w.clone()));
        assert_eq!(d.sizes(), &[w.len()]);
    }

    #[test]
    fn labels_follow_smallest_member() {
        let w = Window::interval(0, 9).unwrap();
        let set = SiteSet::from_sites(w, &[Site::from(7), Site::from(2), Site::from(3), Site::from(9)]);
        let d = decompose(&set);
        assert_eq!(d.label_of(&Site::from(2)), Some(1));
        assert_eq!(d.label_of(&Site::from(3)), Some(1));
        assert_eq!(d.label_of(&Site::from(7)), Some(2));
        assert_eq!(d.label_of(&Site::from(9)), Some(3));
        assert_eq!(d.label_of(&Site::from(0)), None);
    }

    #[test]
    fn bond_bound_is_tight_on_three_site_example() {
        let out = three_site_outcome();
        let (t, _, _) = extract_sets(&out).unwrap();
        let report = bond_bound_check(&out.final_config, &t, 0, Seed::default()).unwrap();
        assert_eq!(report, BoundReport { checked: 1, violations: 0, skipped: 0 });
        // the bound is attained: two bonds, two grains
        let grains: u64 = out.final_config.heights().iter().sum();
        assert_eq!(grains, 2);
    }

    #[test]
    fn bond_bound_flags_a_violation() {
        let w = Window::interval(0, 2).unwrap();
        let cfg = HeightConfig::from_heights(w.clone(), &[0, 1, 0]).unwrap();
        let report = bond_bound_check(&cfg, &SiteSet::full(w), 4, Seed::new(1, 0)).unwrap();
        assert!(!report.holds());
        assert_eq!(report.checked, 5);
    }

    #[test]
    fn region_bound_examples() {
        let w = Window::interval(0, 2).unwrap();
        let toppled = SiteSet::from_sites(w.clone(), &[Site::from(1)]);
        let ok = HeightConfig::from_heights(w.clone(), &[1, 0, 1]).unwrap();
        assert!(region_grain_check(&ok, &toppled).unwrap().holds());
        let bad = HeightConfig::from_heights(w.clone(), &[1, 0, 0]).unwrap();
        assert!(!region_grain_check(&bad, &toppled).unwrap().holds());
        let edge = SiteSet::from_sites(w.clone(), &[Site::from(0)]);
        let r = region_grain_check(&bad, &edge).unwrap();
        assert_eq!((r.checked, r.skipped), (0, 1));
        assert!(region_grain_check(&ok, &SiteSet::empty(w)).unwrap().holds());
    }

    #[test]
    fn survival_examples() {
        let t = survival_tail::<f64>(&[0, 0, 3, 5], &[1, 4]).unwrap();
        assert_eq!(t.survival, vec![0.5, 0.25]);
        assert_eq!(t.counts, vec![2, 1]);
        let t = survival_tail::<f64>(&[0; 10], &[1, 2, 3]).unwrap();
        assert!(t.survival.iter().all(|&s| s == 0.0));
        assert_eq!(survival_tail::<f64>(&[], &[1]), Err(PercolationError::NoReplicates));
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let thresholds: Vec<usize> = (1..=10).collect();
        let tail = TailEstimate {
            survival: thresholds.iter().map(|&n| (-0.5 * n as f64).exp()).collect(),
            counts: vec![1_000_000; 10],
            thresholds,
            replicates: 1_000_000,
        };
        let fit = fit_exponential(&tail, DEFAULT_MIN_COUNT).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
        assert!((fit.r_squared.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(fit.fit_range, (1, 10));
    }

    #[test]
    fn constant_survival_is_degenerate() {
        let tail = TailEstimate {
            thresholds: vec![1, 2, 3, 4],
            survival: vec![0.3; 4],
            counts: vec![300; 4],
            replicates: 1000,
        };
        let fit = fit_exponential(&tail, DEFAULT_MIN_COUNT).unwrap();
        assert!(fit.is_degenerate());
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn single_replicate_has_no_support() {
        let tail = survival_tail::<f64>(&[7], &(1..=10).collect::<Vec<_>>()).unwrap();
        assert!(matches!(
            fit_exponential(&tail, DEFAULT_MIN_COUNT),
            Err(PercolationError::InsufficientSupport { .. })
        ));
    }
}
