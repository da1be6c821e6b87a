//! Slow reference implementations for tests. Nothing here shares code paths
//! with the schedulers or the one-sided stack update beyond single legal
//! topplings on [`HeightConfig`].

use std::collections::{HashSet, VecDeque};

use crate::lattice::{HeightConfig, Site, ToppleField, ToppleMode, Window};
use crate::onesided::{ZeroEvent, ZeroEventKind};

/// Result of exploring every legal toppling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    /// Distinct (final configuration, topple counts) pairs reached.
    pub terminals: Vec<(HeightConfig, Vec<u64>)>,
    /// Distinct intermediate states visited.
    pub states: usize,
    /// True when the state limit stopped the search.
    pub truncated: bool,
}

impl Enumeration {
    pub fn unique(&self) -> Option<&(HeightConfig, Vec<u64>)> {
        (!self.truncated && self.terminals.len() == 1).then(|| &self.terminals[0])
    }
}

/// Depth-first search over all legal toppling sequences, merging identical
/// intermediate states.
pub fn enumerate_orders(initial: &HeightConfig, state_limit: usize) -> Enumeration {
    let sites: Vec<Site> = initial.window().sites().collect();
    let mut seen: HashSet<(HeightConfig, Vec<u64>)> = HashSet::new();
    let mut terminals: Vec<(HeightConfig, Vec<u64>)> = Vec::new();
    let mut stack = vec![(initial.clone(), vec![0u64; sites.len()])];
    let mut truncated = false;
    while let Some((cfg, counts)) = stack.pop() {
        if !seen.insert((cfg.clone(), counts.clone())) {
            continue;
        }
        if seen.len() > state_limit {
            truncated = true;
            break;
        }
        let mut any = false;
        for (i, s) in sites.iter().enumerate() {
            if let Ok(next) = cfg.toppled(s, ToppleMode::Legal) {
                any = true;
                let mut c = counts.clone();
                c[i] += 1;
                stack.push((next, c));
            }
        }
        if !any && !terminals.contains(&(cfg.clone(), counts.clone())) {
            terminals.push((cfg, counts));
        }
    }
    Enumeration {
        terminals,
        states: seen.len(),
        truncated,
    }
}

/// The unique terminal as a topple field, if the search found exactly one.
pub fn brute_force_stabilize(initial: &HeightConfig, state_limit: usize) -> Option<(HeightConfig, ToppleField)> {
    let e = enumerate_orders(initial, state_limit);
    let (cfg, counts) = e.unique()?;
    let field = ToppleField::from_counts(initial.window().clone(), counts).ok()?;
    Some((cfg.clone(), field))
}

/// State of the wave-by-wave reference one-sided run.
#[derive(Debug, Clone, Default)]
pub struct NaiveOneSided {
    /// Heights on `[0, n]`.
    pub heights: Vec<u64>,
    pub left_ledger: u64,
    /// Grains sitting on site `n + 1`.
    pub right_exterior: u64,
    pub topples: Vec<u64>,
    pub events: Vec<ZeroEvent>,
    pub zero_counts: Vec<u64>,
}

impl NaiveOneSided {
    /// Add site `n` and stabilize `[0, n]` by explicit waves, classifying
    /// each wave from the zero sets before and after it.
    pub fn step(&mut self, sampled: u64) {
        let n = self.heights.len();
        let step = n as u64;
        let h = sampled + self.right_exterior;
        self.right_exterior = 0;
        let window = Window::interval(0, n as i64).unwrap();
        let mut cells: Vec<u64> = self.heights.clone();
        cells.push(h);
        let mut cfg = HeightConfig::from_heights(window, &cells).unwrap();
        self.topples.push(0);
        if h == 0 {
            self.events.push(ZeroEvent {
                step,
                wave: 0,
                kind: ZeroEventKind::CreateRightBoundary { at: n },
            });
        }
        let site_n = Site::from(n as i64);
        let mut wave = 0;
        while cfg.height(&site_n).unwrap() >= 2 {
            wave += 1;
            let before = zeros_of(&cfg);
            let mut toppled = vec![false; n + 1];
            cfg.topple(&site_n, ToppleMode::Legal).unwrap();
            toppled[n] = true;
            let mut queue: VecDeque<usize> = VecDeque::new();
            if n > 0 {
                queue.push_back(n - 1);
            }
            while let Some(x) = queue.pop_front() {
                let s = Site::from(x as i64);
                if cfg.height(&s).unwrap() < 2 {
                    continue;
                }
                assert!(!toppled[x], "site {x} toppled twice in one wave");
                cfg.topple(&s, ToppleMode::Legal).unwrap();
                toppled[x] = true;
                if x > 0 {
                    queue.push_back(x - 1);
                }
                if x + 1 < n {
                    queue.push_back(x + 1);
                }
            }
            let leftmost = toppled.iter().position(|&t| t).unwrap();
            for (x, &t) in toppled.iter().enumerate() {
                if t {
                    self.topples[x] += 1;
                }
            }
            let after = zeros_of(&cfg);
            let site_n_empty = cfg.height(&site_n).unwrap() == 0;
            let kind = if leftmost == 0 {
                (after.first() == Some(&0)).then_some(ZeroEventKind::CreateOrigin)
            } else if leftmost == n && !site_n_empty {
                Some(ZeroEventKind::Disappear { at: n - 1 })
            } else {
                Some(ZeroEventKind::Move {
                    from: leftmost - 1,
                    to: leftmost,
                })
            };
            debug_assert!(leftmost == 0 || before.contains(&(leftmost - 1)));
            if let Some(kind) = kind {
                self.events.push(ZeroEvent { step, wave, kind });
            }
        }
        self.heights = cfg.heights();
        self.left_ledger += cfg.ledger_at(&Site::from(-1));
        self.right_exterior = cfg.ledger_at(&Site::from(n as i64 + 1));
        self.zero_counts.push(zeros_of(&cfg).len() as u64);
    }
}

fn zeros_of(cfg: &HeightConfig) -> Vec<usize> {
    cfg.heights()
        .iter()
        .enumerate()
        .filter(|(_, &h)| h == 0)
        .map(|(i, _)| i)
        .collect()
}

/// Run [`NaiveOneSided`] over a height sequence.
pub fn naive_one_sided(heights: &[u64]) -> NaiveOneSided {
    let mut s = NaiveOneSided::default();
    for &h in heights {
        s.step(h);
    }
    s
}
