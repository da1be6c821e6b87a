//! Product initial measures, deterministic seeding, and the scalar
//! large-deviation functions of the one-site marginal.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lattice::{HeightConfig, Site, Window};
use crate::scalar::Real;

/// Largest Poisson parameter accepted; `e^{-ρ}` must stay a normal `f64` for
/// the inversion sampler.
pub const MAX_POISSON_RHO: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("invalid measure: {0}")]
    InvalidSpec(String),
    #[error("cannot parse measure `{0}` (expected poisson:RHO, twopoint:V,P, constant:H or defect:BG,SITE,H)")]
    Parse(String),
    #[error("mgf inverse needs a level >= 1, got {0}")]
    LevelBelowOne(f64),
    #[error("density {0} lies outside (0, 1)")]
    DensityOutOfRange(f64),
    #[error("rate level {level} does not exceed the density {density}")]
    LevelNotAboveDensity { level: f64, density: f64 },
    #[error("the single-defect measure has no translation-invariant one-site marginal")]
    NotTranslationInvariant,
    #[error("defect site dimension {site} differs from window dimension {window}")]
    DimensionMismatch { site: usize, window: usize },
}

/// Translation-invariant product measure (or the single-defect
/// configuration) on height configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure<F> {
    /// Poisson(ρ) heights.
    Poisson { rho: F },
    /// `P(η = value) = prob`, `P(η = 0) = 1 - prob`.
    TwoPoint { value: u64, prob: F },
    Constant { height: u64 },
    /// Constant background with one site set to `height`.
    SingleDefect { background: u64, site: Site, height: u64 },
}

impl<F: Real> Measure<F> {
    pub fn poisson(rho: F) -> Self {
        Measure::Poisson { rho }
    }

    pub fn two_point(value: u64, prob: F) -> Self {
        Measure::TwoPoint { value, prob }
    }

    pub fn constant(height: u64) -> Self {
        Measure::Constant { height }
    }

    pub fn single_defect(background: u64, site: Site, height: u64) -> Self {
        Measure::SingleDefect { background, site, height }
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        match self {
            Measure::Poisson { rho } => {
                let r = rho.to_f64_lossy();
                if !(r.is_finite() && (0.0..=MAX_POISSON_RHO).contains(&r)) {
                    return Err(MeasureError::InvalidSpec(format!(
                        "poisson parameter {r} outside [0, {MAX_POISSON_RHO}]"
                    )));
                }
            }
            Measure::TwoPoint { value, prob } => {
                let p = prob.to_f64_lossy();
                if *value == 0 {
                    return Err(MeasureError::InvalidSpec("two-point value must be positive".into()));
                }
                if !(p > 0.0 && p <= 1.0) {
                    return Err(MeasureError::InvalidSpec(format!(
                        "two-point probability {p} outside (0, 1]"
                    )));
                }
            }
            Measure::Constant { .. } => {}
            Measure::SingleDefect { site, .. } => {
                if site.dim() == 0 {
                    return Err(MeasureError::InvalidSpec("defect site needs coordinates".into()));
                }
            }
        }
        Ok(())
    }

    /// Mean height per site. For the single defect this is the background,
    /// the defect having zero density.
    pub fn density(&self) -> F {
        match self {
            Measure::Poisson { rho } => *rho,
            Measure::TwoPoint { value, prob } => *prob * F::lit(*value as f64),
            Measure::Constant { height } => F::lit(*height as f64),
            Measure::SingleDefect { background, .. } => F::lit(*background as f64),
        }
    }

    /// Variance of the one-site marginal.
    pub fn variance(&self) -> F {
        match self {
            Measure::Poisson { rho } => *rho,
            Measure::TwoPoint { value, prob } => {
                let v = F::lit(*value as f64);
                v * v * *prob * (F::one() - *prob)
            }
            Measure::Constant { .. } | Measure::SingleDefect { .. } => F::zero(),
        }
    }

    /// Whether the measure is an i.i.d. product measure.
    pub fn is_product(&self) -> bool {
        !matches!(self, Measure::SingleDefect { .. })
    }

    /// `P(η(0) = 0)` for product measures.
    pub fn prob_empty(&self) -> Option<F> {
        match self {
            Measure::Poisson { rho } => Some((-*rho).exp()),
            Measure::TwoPoint { prob, .. } => Some(F::one() - *prob),
            Measure::Constant { height } => Some(if *height == 0 { F::one() } else { F::zero() }),
            Measure::SingleDefect { .. } => None,
        }
    }

    /// `log E[e^{tη(0)}]`, evaluated without forming the exponential where
    /// possible.
    pub fn log_mgf(&self, t: F) -> Result<F, MeasureError> {
        Ok(match self {
            Measure::Poisson { rho } => *rho * t.exp_m1(),
            Measure::TwoPoint { value, prob } => {
                let tv = t * F::lit(*value as f64);
                if *prob >= F::one() {
                    tv
                } else {
                    // log((1-p) + p e^{tv})
                    let a = (F::one() - *prob).ln();
                    let b = prob.ln() + tv;
                    let m = a.max(b);
                    m + ((a - m).exp() + (b - m).exp()).ln()
                }
            }
            Measure::Constant { height } => t * F::lit(*height as f64),
            Measure::SingleDefect { .. } => return Err(MeasureError::NotTranslationInvariant),
        })
    }

    /// Moment generating function `G(t) = E[e^{tη(0)}]`; overflow yields
    /// `+inf`.
    pub fn mgf(&self, t: F) -> Result<F, MeasureError> {
        Ok(self.log_mgf(t)?.exp())
    }

    /// `sup { t : G(t) <= a }`, by bisection to absolute tolerance `1e-9`.
    /// Returns `+inf` when `G` never exceeds `a`.
    pub fn mgf_inverse(&self, a: F) -> Result<F, MeasureError> {
        if a.is_nan() || a < F::one() {
            return Err(MeasureError::LevelBelowOne(a.to_f64_lossy()));
        }
        let log_a = a.ln();
        let below = |t: F| -> Result<bool, MeasureError> { Ok(self.log_mgf(t)? <= log_a) };
        let mut lo = F::zero();
        let mut hi = F::one();
        let cap = F::lit(1e15);
        while below(hi)? {
            lo = hi;
            hi = hi + hi;
            if hi > cap {
                return Ok(F::infinity());
            }
        }
        let tol = F::lit(1e-9);
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            let mid = lo + (hi - lo) / F::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if below(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// `t_ρ = G^{-1}(ρ^{-1/2}) / 2`, the tilt at which `log G(t_ρ) <= 1` for
    /// integer-valued marginals of density `ρ < 1`.
    pub fn t_rho(&self) -> Result<F, MeasureError> {
        let rho = self.density();
        if !(rho > F::zero() && rho < F::one()) {
            return Err(MeasureError::DensityOutOfRange(rho.to_f64_lossy()));
        }
        Ok(self.mgf_inverse(F::one() / rho.sqrt())? / F::lit(2.0))
    }

    /// Cramér rate `sup_{t >= 0} (t a - log G(t))` for the event that the
    /// mean height is at least `a`, by golden-section search.
    pub fn chernov_rate(&self, a: F) -> Result<F, MeasureError> {
        let rho = self.density();
        if let Measure::SingleDefect { .. } = self {
            return Err(MeasureError::NotTranslationInvariant);
        }
        if a.is_nan() || a <= rho {
            return Err(MeasureError::LevelNotAboveDensity {
                level: a.to_f64_lossy(),
                density: rho.to_f64_lossy(),
            });
        }
        // Bounded marginals: the supremum is attained at infinity.
        let support_max = match self {
            Measure::TwoPoint { value, .. } => Some(*value),
            Measure::Constant { height } => Some(*height),
            _ => None,
        };
        if let Some(m) = support_max {
            let m = F::lit(m as f64);
            if a > m {
                return Ok(F::infinity());
            }
            if a == m {
                // only TwoPoint reaches here: rate = -ln P(η = v)
                if let Measure::TwoPoint { prob, .. } = self {
                    return Ok(-prob.ln());
                }
            }
        }
        let f = |t: F| -> Result<F, MeasureError> { Ok(t * a - self.log_mgf(t)?) };
        let mut hi = F::one();
        let cap = F::lit(1e6);
        while f(hi + hi)? > f(hi)? && hi < cap {
            hi = hi + hi;
        }
        let mut lo = F::zero();
        let mut hi = hi + hi;
        let inv_phi = F::lit((5f64.sqrt() - 1.0) / 2.0);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        let tol = F::lit(1e-9);
        for _ in 0..300 {
            if hi - lo <= tol {
                break;
            }
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = f(x2)?;
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = f(x1)?;
            }
        }
        let t = (lo + hi) / F::lit(2.0);
        Ok(f(t)?.max(F::zero()))
    }

    /// Deterministic per-site height source for the given seed.
    pub fn sampler(&self, seed: Seed) -> Result<HeightSampler, MeasureError> {
        self.validate()?;
        let kind = match self {
            Measure::Poisson { rho } => Marginal::Poisson {
                rho: rho.to_f64_lossy(),
                e_neg_rho: (-rho.to_f64_lossy()).exp(),
            },
            Measure::TwoPoint { value, prob } => Marginal::TwoPoint {
                value: *value,
                prob: prob.to_f64_lossy(),
            },
            Measure::Constant { height } => Marginal::Constant(*height),
            Measure::SingleDefect { background, site, height } => Marginal::Defect {
                background: *background,
                site: site.clone(),
                height: *height,
            },
        };
        Ok(HeightSampler {
            rng: seed.rng(),
            kind,
        })
    }

    /// i.i.d. heights over `window`, drawn in lexicographic site order.
    pub fn sample(&self, window: &Window, seed: Seed) -> Result<HeightConfig, MeasureError> {
        if let Measure::SingleDefect { site, .. } = self {
            if site.dim() != window.dim() {
                return Err(MeasureError::DimensionMismatch {
                    site: site.dim(),
                    window: window.dim(),
                });
            }
        }
        let mut sampler = self.sampler(seed)?;
        let heights: Vec<u64> = match self {
            Measure::SingleDefect { .. } => window.sites().map(|s| sampler.height_at(&s)).collect(),
            _ => (0..window.len()).map(|_| sampler.next_height()).collect(),
        };
        Ok(HeightConfig::from_heights(window.clone(), &heights).expect("sized to window"))
    }
}

impl<F: Real> fmt::Display for Measure<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Poisson { rho } => write!(f, "poisson:{rho}"),
            Measure::TwoPoint { value, prob } => write!(f, "twopoint:{value},{prob}"),
            Measure::Constant { height } => write!(f, "constant:{height}"),
            Measure::SingleDefect { background, site, height } => {
                write!(f, "defect:{background}")?;
                for c in site.coords() {
                    write!(f, ",{c}")?;
                }
                write!(f, ",{height}")
            }
        }
    }
}

impl<F: Real + FromStr> FromStr for Measure<F> {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MeasureError::Parse(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let int = |p: &str| p.parse::<u64>().map_err(|_| bad());
        let real = |p: &str| p.parse::<F>().map_err(|_| bad());
        let m = match (kind.trim().to_ascii_lowercase().as_str(), parts.as_slice()) {
            ("poisson", [rho]) => Measure::Poisson { rho: real(rho)? },
            ("twopoint", [v, p]) => Measure::TwoPoint {
                value: int(v)?,
                prob: real(p)?,
            },
            ("constant", [h]) => Measure::Constant { height: int(h)? },
            ("defect", [bg, coords @ .., h]) if !coords.is_empty() => Measure::SingleDefect {
                background: int(bg)?,
                site: Site::new(
                    coords
                        .iter()
                        .map(|c| c.parse::<i64>().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?,
                ),
                height: int(h)?,
            },
            _ => return Err(bad()),
        };
        m.validate()?;
        Ok(m)
    }
}

/// Replicate seed: `master` picks the experiment, `stream` the replicate.
///
/// Streams are ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed by
/// `seed_from_u64(master)` with the 64-bit stream id set to `stream`, so
/// distinct streams are independent and every draw is reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64, stream: u64) -> Self {
        Seed { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// Seed of replicate `index` under the same master.
    pub fn replicate(&self, index: u64) -> Seed {
        Seed::new(self.master, index)
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.master, self.stream)
    }
}

#[derive(Debug, Clone)]
enum Marginal {
    Poisson { rho: f64, e_neg_rho: f64 },
    TwoPoint { value: u64, prob: f64 },
    Constant(u64),
    Defect { background: u64, site: Site, height: u64 },
}

/// Stream of heights drawn from a measure's one-site marginal.
#[derive(Debug, Clone)]
pub struct HeightSampler {
    rng: ChaCha8Rng,
    kind: Marginal,
}

impl HeightSampler {
    /// Height of `site`; consumes randomness only for random marginals.
    pub fn height_at(&mut self, site: &Site) -> u64 {
        match &self.kind {
            Marginal::Defect { background, site: s, height } => {
                if s == site {
                    *height
                } else {
                    *background
                }
            }
            _ => self.next_height(),
        }
    }

    /// Next i.i.d. height. For the single defect this returns the background.
    pub fn next_height(&mut self) -> u64 {
        match self.kind {
            Marginal::Poisson { rho, e_neg_rho } => {
                // inversion: smallest k with F(k) >= u
                let u: f64 = self.rng.gen();
                let mut k = 0u64;
                let mut p = e_neg_rho;
                let mut cdf = p;
                while u > cdf {
                    k += 1;
                    p *= rho / k as f64;
                    let next = cdf + p;
                    if next == cdf {
                        break;
                    }
                    cdf = next;
                }
                k
            }
            Marginal::TwoPoint { value, prob } => {
                let u: f64 = self.rng.gen();
                if u < prob {
                    value
                } else {
                    0
                }
            }
            Marginal::Constant(h) => h,
            Marginal::Defect { background, .. } => background,
        }
    }
}
