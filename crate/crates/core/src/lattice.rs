//! Integer lattice arithmetic on finite hyperrectangular windows of Z^d.
//!
//! Heights live in a padded grid: the window plus a one-site halo on every
//! side. Halo cells sitting on a face of the window (exactly one coordinate
//! out of range, by one) hold the export ledger; halo corners are never
//! written. With this layout a toppling is a branch-free update of `2d + 1`
//! cells and the total grain count of the grid is the conserved quantity.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("window bounds must have the same dimension (got {0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("window lower bound exceeds upper bound on axis {axis}")]
    EmptyAxis { axis: usize },
    #[error("window site count does not fit in 64 bits")]
    TooLarge,
    #[error("site {0} lies outside the window")]
    SiteOutsideWindow(Site),
    #[error("illegal toppling at {site}: height {height} is below {threshold}")]
    IllegalToppling { site: Site, height: u64, threshold: u64 },
    #[error("forced toppling at {site} would make height {height} negative")]
    NegativeHeight { site: Site, height: u64 },
    #[error("windows of the compared configurations differ")]
    WindowMismatch,
    #[error("expected {expected} heights for the window, got {got}")]
    HeightCount { expected: usize, got: usize },
}

/// A lattice point of Z^d.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// Graph (L1) distance between two sites of the same dimension.
    pub fn l1_distance(&self, other: &Site) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }
}

impl From<i64> for Site {
    fn from(x: i64) -> Self {
        Site(vec![x])
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An inclusive hyperrectangle `lower..=upper` of Z^d.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Window {
    lower: Vec<i64>,
    upper: Vec<i64>,
    extents: Vec<usize>,
    /// Strides of the padded grid (extent + 2 per axis), last axis fastest.
    pstrides: Vec<usize>,
    padded_len: usize,
    len: usize,
}

impl Window {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self, LatticeError> {
        if lower.len() != upper.len() {
            return Err(LatticeError::DimensionMismatch(lower.len(), upper.len()));
        }
        if lower.is_empty() {
            return Err(LatticeError::ZeroDimension);
        }
        let mut extents = Vec::with_capacity(lower.len());
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi {
                return Err(LatticeError::EmptyAxis { axis });
            }
            let ext = usize::try_from(hi.abs_diff(*lo) + 1).map_err(|_| LatticeError::TooLarge)?;
            extents.push(ext);
        }
        let mut len: usize = 1;
        let mut padded_len: usize = 1;
        for &e in &extents {
            len = len.checked_mul(e).ok_or(LatticeError::TooLarge)?;
            padded_len = padded_len
                .checked_mul(e.checked_add(2).ok_or(LatticeError::TooLarge)?)
                .ok_or(LatticeError::TooLarge)?;
        }
        let d = extents.len();
        let mut pstrides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            pstrides[a] = pstrides[a + 1] * (extents[a + 1] + 2);
        }
        Ok(Window {
            lower,
            upper,
            extents,
            pstrides,
            padded_len,
            len,
        })
    }

    /// The box `[-radius, radius]^d` centred at the origin.
    pub fn cube(d: usize, radius: u64) -> Result<Self, LatticeError> {
        let r = radius as i64;
        Window::new(vec![-r; d], vec![r; d])
    }

    pub fn interval(lo: i64, hi: i64) -> Result<Self, LatticeError> {
        Window::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Number of sites in the window.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Toppling threshold `2d`.
    pub fn threshold(&self) -> u64 {
        2 * self.dim() as u64
    }

    pub fn contains(&self, site: &Site) -> bool {
        site.dim() == self.dim()
            && site
                .0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (lo, hi))| lo <= c && c <= hi)
    }

    /// Whether `inner` is a sub-window of `self`.
    pub fn contains_window(&self, inner: &Window) -> bool {
        inner.dim() == self.dim()
            && (0..self.dim()).all(|a| self.lower[a] <= inner.lower[a] && inner.upper[a] <= self.upper[a])
    }

    /// Lexicographic rank of a window site.
    pub fn rank_of(&self, site: &Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut r = 0usize;
        for a in 0..self.dim() {
            r = r * self.extents[a] + (site.0[a] - self.lower[a]) as usize;
        }
        Some(r)
    }

    /// Site of lexicographic rank `rank`.
    pub fn site_at(&self, rank: usize) -> Site {
        let d = self.dim();
        let mut coords = vec![0i64; d];
        let mut r = rank;
        for a in (0..d).rev() {
            coords[a] = self.lower[a] + (r % self.extents[a]) as i64;
            r /= self.extents[a];
        }
        Site(coords)
    }

    /// All sites in lexicographic order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len).map(move |r| self.site_at(r))
    }

    // ---- padded-grid plumbing ----

    pub(crate) fn padded_len(&self) -> usize {
        self.padded_len
    }

    pub(crate) fn pstrides(&self) -> &[usize] {
        &self.pstrides
    }

    /// Padded cell of a site at distance at most one outside the window on
    /// every axis.
    pub(crate) fn cell_of(&self, site: &Site) -> Option<usize> {
        if site.dim() != self.dim() {
            return None;
        }
        let mut cell = 0usize;
        for a in 0..self.dim() {
            let off = site.0[a] - self.lower[a] + 1;
            if off < 0 || off > self.extents[a] as i64 + 1 {
                return None;
            }
            cell += off as usize * self.pstrides[a];
        }
        Some(cell)
    }

    pub(crate) fn cell_of_rank(&self, rank: usize) -> usize {
        let mut r = rank;
        let mut cell = 0usize;
        for a in (0..self.dim()).rev() {
            cell += (r % self.extents[a] + 1) * self.pstrides[a];
            r /= self.extents[a];
        }
        cell
    }

    /// Padded offsets (0..=extent+1) of a cell per axis.
    pub(crate) fn cell_offsets(&self, cell: usize) -> Vec<usize> {
        let d = self.dim();
        let mut off = vec![0usize; d];
        let mut c = cell;
        for a in (0..d).rev() {
            let pe = self.extents[a] + 2;
            off[a] = c % pe;
            c /= pe;
        }
        off
    }

    pub(crate) fn site_of_cell(&self, cell: usize) -> Site {
        let off = self.cell_offsets(cell);
        Site(
            off.iter()
                .zip(&self.lower)
                .map(|(o, lo)| lo + *o as i64 - 1)
                .collect(),
        )
    }

    /// Padded offset of a cell along one axis.
    #[inline]
    pub(crate) fn axis_offset(&self, cell: usize, axis: usize) -> usize {
        (cell / self.pstrides[axis]) % (self.extents[axis] + 2)
    }

    /// Number of halo coordinates of a cell (0 = interior, 1 = ledger face).
    pub(crate) fn halo_degree(&self, cell: usize) -> usize {
        (0..self.dim())
            .filter(|&a| {
                let o = self.axis_offset(cell, a);
                o == 0 || o == self.extents[a] + 1
            })
            .count()
    }

    /// Cells of this window holding the sites of `sub`, in the lexicographic
    /// order of `sub`; `sub` must lie inside this window.
    pub(crate) fn cells_of_subwindow(&self, sub: &Window) -> Vec<usize> {
        let d = self.dim();
        let base: usize = (0..d)
            .map(|a| (sub.lower[a] - self.lower[a] + 1) as usize * self.pstrides[a])
            .sum();
        let mut out = Vec::with_capacity(sub.len);
        let mut idx = vec![0usize; d];
        let mut cell = base;
        for _ in 0..sub.len {
            out.push(cell);
            for a in (0..d).rev() {
                idx[a] += 1;
                cell += self.pstrides[a];
                if idx[a] < sub.extents[a] {
                    break;
                }
                cell -= idx[a] * self.pstrides[a];
                idx[a] = 0;
            }
        }
        out
    }

    /// Interior cells in lexicographic order.
    pub(crate) fn interior_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells_of_subwindow(self).into_iter()
    }

    /// Halo cells that hold ledger grains, in lexicographic order.
    pub(crate) fn ledger_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.padded_len).filter(move |&c| self.halo_degree(c) == 1)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in 0..self.dim() {
            if a > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", self.lower[a], self.upper[a])?;
        }
        Ok(())
    }
}

/// Whether a toppling must be legal (site unstable) or may be forced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToppleMode {
    Legal,
    Forced,
}

/// Nonnegative heights on a window plus the export ledger on its halo.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeightConfig {
    window: Window,
    cells: Vec<u64>,
}

impl HeightConfig {
    pub fn zeros(window: Window) -> Self {
        let cells = vec![0; window.padded_len()];
        HeightConfig { window, cells }
    }

    pub fn constant(window: Window, h: u64) -> Self {
        let mut cfg = HeightConfig::zeros(window);
        let cells: Vec<usize> = cfg.window.interior_cells().collect();
        for c in cells {
            cfg.cells[c] = h;
        }
        cfg
    }

    /// Heights listed in lexicographic site order; empty ledger.
    pub fn from_heights(window: Window, heights: &[u64]) -> Result<Self, LatticeError> {
        if heights.len() != window.len() {
            return Err(LatticeError::HeightCount {
                expected: window.len(),
                got: heights.len(),
            });
        }
        let mut cfg = HeightConfig::zeros(window);
        for (c, &h) in cfg.window.cells_of_subwindow(&cfg.window).into_iter().zip(heights) {
            cfg.cells[c] = h;
        }
        Ok(cfg)
    }

    /// One-dimensional configuration on `[lo, lo + heights.len() - 1]`.
    pub fn line(lo: i64, heights: &[u64]) -> Result<Self, LatticeError> {
        let hi = lo + heights.len() as i64 - 1;
        HeightConfig::from_heights(Window::interval(lo, hi)?, heights)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn height(&self, site: &Site) -> Option<u64> {
        self.window.rank_of(site).map(|r| self.cells[self.window.cell_of_rank(r)])
    }

    pub fn set_height(&mut self, site: &Site, h: u64) -> Result<(), LatticeError> {
        let r = self
            .window
            .rank_of(site)
            .ok_or_else(|| LatticeError::SiteOutsideWindow(site.clone()))?;
        let c = self.window.cell_of_rank(r);
        self.cells[c] = h;
        Ok(())
    }

    /// Heights on a sub-window, ledger empty.
    pub fn restrict(&self, sub: &Window) -> Option<HeightConfig> {
        if !self.window.contains_window(sub) {
            return None;
        }
        let heights: Vec<u64> = self.window.cells_of_subwindow(sub).into_iter().map(|c| self.cells[c]).collect();
        HeightConfig::from_heights(sub.clone(), &heights).ok()
    }

    /// Window heights in lexicographic order.
    pub fn heights(&self) -> Vec<u64> {
        self.window.interior_cells().map(|c| self.cells[c]).collect()
    }

    /// Ledger grains on an exterior site (zero for sites not adjacent to the
    /// window).
    pub fn ledger_at(&self, site: &Site) -> u64 {
        match self.window.cell_of(site) {
            Some(c) if self.window.halo_degree(c) == 1 => self.cells[c],
            _ => 0,
        }
    }

    /// Nonzero ledger entries in lexicographic order of exterior sites.
    pub fn ledger(&self) -> Vec<(Site, u64)> {
        self.window
            .ledger_cells()
            .filter(|&c| self.cells[c] > 0)
            .map(|c| (self.window.site_of_cell(c), self.cells[c]))
            .collect()
    }

    /// Add grains to the ledger entry of an exterior site adjacent to the
    /// window.
    pub fn add_to_ledger(&mut self, site: &Site, grains: u64) -> Result<(), LatticeError> {
        match self.window.cell_of(site) {
            Some(c) if self.window.halo_degree(c) == 1 => {
                self.cells[c] += grains;
                Ok(())
            }
            _ => Err(LatticeError::SiteOutsideWindow(site.clone())),
        }
    }

    pub fn ledger_total(&self) -> u64 {
        self.window.ledger_cells().map(|c| self.cells[c]).sum()
    }

    pub fn window_total(&self) -> u64 {
        self.window.interior_cells().map(|c| self.cells[c]).sum()
    }

    /// Heights plus ledger: the quantity every toppling conserves.
    pub fn total_grains(&self) -> u64 {
        self.cells.iter().sum()
    }

    /// Copy with the ledger cleared.
    pub fn without_ledger(&self) -> HeightConfig {
        HeightConfig::from_heights(self.window.clone(), &self.heights()).expect("same window")
    }

    pub fn is_stable(&self) -> bool {
        let t = self.window.threshold();
        self.window.interior_cells().all(|c| self.cells[c] < t)
    }

    /// Unstable sites (height at least `2d`) in lexicographic order.
    pub fn unstable_sites(&self) -> Vec<Site> {
        let t = self.window.threshold();
        (0..self.window.len())
            .filter(|&r| self.cells[self.window.cell_of_rank(r)] >= t)
            .map(|r| self.window.site_at(r))
            .collect()
    }

    /// Topple `site` in place.
    pub fn topple(&mut self, site: &Site, mode: ToppleMode) -> Result<(), LatticeError> {
        let r = self
            .window
            .rank_of(site)
            .ok_or_else(|| LatticeError::SiteOutsideWindow(site.clone()))?;
        let c = self.window.cell_of_rank(r);
        let t = self.window.threshold();
        let h = self.cells[c];
        if h < t {
            return Err(match mode {
                ToppleMode::Legal => LatticeError::IllegalToppling {
                    site: site.clone(),
                    height: h,
                    threshold: t,
                },
                ToppleMode::Forced => LatticeError::NegativeHeight {
                    site: site.clone(),
                    height: h,
                },
            });
        }
        self.topple_cell(c);
        Ok(())
    }

    /// Pure variant of [`HeightConfig::topple`].
    pub fn toppled(&self, site: &Site, mode: ToppleMode) -> Result<HeightConfig, LatticeError> {
        let mut next = self.clone();
        next.topple(site, mode)?;
        Ok(next)
    }

    // ---- engine access ----

    pub(crate) fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [u64] {
        &mut self.cells
    }

    /// Unchecked toppling of an interior cell.
    #[inline]
    pub(crate) fn topple_cell(&mut self, c: usize) {
        let t = self.window.threshold();
        self.cells[c] -= t;
        for &s in &self.window.pstrides {
            self.cells[c - s] += 1;
            self.cells[c + s] += 1;
        }
    }
}

/// Per-site topple counts over a window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToppleField {
    window: Window,
    cells: Vec<u64>,
}

impl ToppleField {
    pub fn zeros(window: Window) -> Self {
        let cells = vec![0; window.padded_len()];
        ToppleField { window, cells }
    }

    pub fn from_counts(window: Window, counts: &[u64]) -> Result<Self, LatticeError> {
        if counts.len() != window.len() {
            return Err(LatticeError::HeightCount {
                expected: window.len(),
                got: counts.len(),
            });
        }
        let mut field = ToppleField::zeros(window);
        for (c, &n) in field.window.cells_of_subwindow(&field.window).into_iter().zip(counts) {
            field.cells[c] = n;
        }
        Ok(field)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn get(&self, site: &Site) -> Option<u64> {
        self.window.rank_of(site).map(|r| self.cells[self.window.cell_of_rank(r)])
    }

    /// Counts in lexicographic site order.
    pub fn counts(&self) -> Vec<u64> {
        self.window.interior_cells().map(|c| self.cells[c]).collect()
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|&n| n == 0)
    }

    /// Restriction to a sub-window.
    pub fn restrict(&self, sub: &Window) -> Option<ToppleField> {
        if !self.window.contains_window(sub) {
            return None;
        }
        let counts: Vec<u64> = self.window.cells_of_subwindow(sub).into_iter().map(|c| self.cells[c]).collect();
        ToppleField::from_counts(sub.clone(), &counts).ok()
    }

    pub(crate) fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [u64] {
        &mut self.cells
    }
}

/// Entry `Δ_{x,y}` of the toppling matrix in dimension `d`.
pub fn toppling_matrix_entry(d: usize, x: &Site, y: &Site) -> i64 {
    match x.l1_distance(y) {
        0 => 2 * d as i64,
        1 => -1,
        _ => 0,
    }
}

/// Check `final = initial - Δ T` cell by cell, ledger included.
///
/// Window sites must satisfy `final(x) = initial(x) - 2d T(x) + Σ_{y~x} T(y)`
/// and every ledger site `z` must have grown by `Σ_{y~z, y in window} T(y)`.
/// Exact integer comparison.
pub fn verify_evolution(
    initial: &HeightConfig,
    topples: &ToppleField,
    final_cfg: &HeightConfig,
) -> Result<bool, LatticeError> {
    let w = initial.window();
    if w != topples.window() || w != final_cfg.window() {
        return Err(LatticeError::WindowMismatch);
    }
    let two_d = w.threshold() as i128;
    let t = topples.cells();
    for cell in 0..w.padded_len() {
        let mut expected = initial.cells[cell] as i128 - two_d * t[cell] as i128;
        for (a, &s) in w.pstrides().iter().enumerate() {
            let off = w.axis_offset(cell, a);
            if off > 0 {
                expected += t[cell - s] as i128;
            }
            if off < w.extents()[a] + 1 {
                expected += t[cell + s] as i128;
            }
        }
        if expected != final_cfg.cells[cell] as i128 {
            return Ok(false);
        }
    }
    Ok(true)
}
