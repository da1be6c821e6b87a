use proptest::prelude::*;

use sandpile_core::oracle::{brute_force_stabilize, naive_one_sided};
use sandpile_core::onesided::{interval_stats, replay_events, run_one_sided_on};
use sandpile_core::percolation::{bond_bound_check, decompose, extract_sets, origin_cluster_size, region_grain_check, survival_tail};
use sandpile_core::{
    stabilize, verify_evolution, HeightConfig, Measure, Scheduler, SchedulerKind, Seed, Site, SiteSet, Window,
    DEFAULT_BUDGET,
};

fn all_schedulers(window: &Window) -> Vec<Scheduler> {
    let mut out: Vec<Scheduler> = [SchedulerKind::Nested, SchedulerKind::Parallel, SchedulerKind::Waves]
        .into_iter()
        .map(|k| Scheduler::from_kind(k, window, Seed::default()))
        .collect();
    out.push(Scheduler::RandomSequential(Seed::new(1, 0)));
    out.push(Scheduler::RandomSequential(Seed::new(2, 0)));
    out
}

fn line_config(max_len: usize, max_h: u64) -> impl Strategy<Value = HeightConfig> {
    (-3i64..=3, prop::collection::vec(0..=max_h, 1..=max_len))
        .prop_map(|(lo, hs)| HeightConfig::line(lo, &hs).unwrap())
}

fn square_config(max_side: usize, max_h: u64) -> impl Strategy<Value = HeightConfig> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(a, b)| {
        prop::collection::vec(0..=max_h, a * b).prop_map(move |hs| {
            let w = Window::new(vec![0, -1], vec![a as i64 - 1, b as i64 - 2]).unwrap();
            HeightConfig::from_heights(w, &hs).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schedulers_agree_and_conserve_in_one_dimension(cfg in line_config(9, 5)) {
        let scheds = all_schedulers(cfg.window());
        let first = stabilize(&cfg, &scheds[0], DEFAULT_BUDGET).unwrap();
        prop_assert!(first.is_stabilized());
        prop_assert!(first.final_config.is_stable());
        prop_assert_eq!(first.final_config.total_grains(), cfg.total_grains());
        prop_assert!(verify_evolution(&cfg, &first.topples, &first.final_config).unwrap());
        for s in &scheds[1..] {
            let out = stabilize(&cfg, s, DEFAULT_BUDGET).unwrap();
            prop_assert_eq!(&out.final_config, &first.final_config);
            prop_assert_eq!(&out.topples, &first.topples);
        }
    }

    #[test]
    fn schedulers_agree_in_two_dimensions(cfg in square_config(5, 6)) {
        let scheds = all_schedulers(cfg.window());
        let first = stabilize(&cfg, &scheds[0], DEFAULT_BUDGET).unwrap();
        prop_assert!(first.final_config.is_stable());
        prop_assert!(verify_evolution(&cfg, &first.topples, &first.final_config).unwrap());
        for s in &scheds[1..] {
            let out = stabilize(&cfg, s, DEFAULT_BUDGET).unwrap();
            prop_assert_eq!(&out.final_config, &first.final_config);
            prop_assert_eq!(&out.topples, &first.topples);
        }
    }

    #[test]
    fn matches_exhaustive_order_search(cfg in line_config(4, 3)) {
        let (fin, field) = brute_force_stabilize(&cfg, 200_000).expect("unique terminal");
        let out = stabilize(&cfg, &Scheduler::Parallel, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(out.final_config, fin);
        prop_assert_eq!(out.topples, field);
    }

    #[test]
    fn budget_stop_leaves_a_valid_partial_evolution(cfg in line_config(8, 6), budget in 1u64..20) {
        for s in all_schedulers(cfg.window()) {
            let out = stabilize(&cfg, &s, budget).unwrap();
            prop_assert!(out.topples.total() <= budget);
            prop_assert!(verify_evolution(&cfg, &out.topples, &out.final_config).unwrap());
        }
    }

    #[test]
    fn one_sided_matches_wave_oracle(hs in prop::collection::vec(0u64..=4, 1..40)) {
        let fast = run_one_sided_on(hs.iter().copied());
        let slow = naive_one_sided(&hs);
        let heights: Vec<u64> = fast.state.heights().iter().map(|&h| h as u64).collect();
        prop_assert_eq!(&heights, &slow.heights);
        prop_assert_eq!(&fast.events, &slow.events);
        prop_assert_eq!(&fast.zero_counts, &slow.zero_counts);
        prop_assert_eq!(fast.state.left_ledger(), slow.left_ledger);
        prop_assert_eq!(fast.state.right_exterior(), slow.right_exterior);
        prop_assert_eq!(fast.state.topple_counts(), slow.topples);
        replay_events(&fast.events, &fast.zero_counts).unwrap();
    }

    #[test]
    fn one_sided_matches_window_stabilization(hs in prop::collection::vec(0u64..=3, 1..60)) {
        let trace = run_one_sided_on(hs.iter().copied());
        let cfg = HeightConfig::line(0, &hs).unwrap();
        let out = stabilize(&cfg, &Scheduler::sequential(cfg.window()), DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(Some(out.final_config), trace.state.to_config());
        prop_assert_eq!(out.topples.counts(), trace.state.topple_counts());
        let s = &trace.state;
        prop_assert_eq!(s.grains_in(), s.window_grains() + s.left_ledger() + s.right_exterior());
    }

    #[test]
    fn cluster_sizes_partition_the_set(cfg in square_config(7, 5)) {
        let out = stabilize(&cfg, &Scheduler::Parallel, DEFAULT_BUDGET).unwrap();
        let (t, v, w) = extract_sets(&out).unwrap();
        prop_assert!(t.is_subset_of(&w) && v.is_subset_of(&w));
        for set in [&t, &v, &w] {
            let d = decompose(set);
            prop_assert_eq!(d.sizes().iter().sum::<usize>(), set.len());
            prop_assert_eq!(d.origin_size(), origin_cluster_size(set));
        }
        let origin = Site::origin(2);
        if t.contains(&origin) {
            prop_assert!(decompose(&w).origin_size() >= decompose(&t).origin_size());
        }
        prop_assert!(bond_bound_check(&out.final_config, &t, 8, Seed::new(4, 4)).unwrap().holds());
        prop_assert!(region_grain_check(&out.final_config, &t).unwrap().holds());
    }

    #[test]
    fn survival_is_monotone(sizes in prop::collection::vec(0usize..50, 1..200)) {
        let thresholds: Vec<usize> = (0..60).collect();
        let tail = survival_tail::<f64>(&sizes, &thresholds).unwrap();
        prop_assert_eq!(tail.survival[0], 1.0);
        prop_assert!(tail.survival.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(tail.survival.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn excursions_are_ordered(zs in prop::collection::vec(0u64..6, 0..200), level in 1u64..4) {
        let t = interval_stats(&zs, level).unwrap();
        for i in 0..t.deltas.len() {
            prop_assert!(t.starts[i] < t.ends[i]);
            prop_assert_eq!(t.deltas[i], t.ends[i] - t.starts[i]);
            if i + 1 < t.deltas.len() {
                prop_assert!(t.ends[i] <= t.starts[i + 1]);
            }
        }
    }
}

#[test]
fn every_small_line_config_has_a_unique_terminal() {
    // all windows of up to 5 sites with heights up to 4
    let mut checked = 0;
    for len in 1..=5usize {
        let total = 5usize.pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let hs: Vec<u64> = (0..len)
                .map(|_| {
                    let h = (c % 5) as u64;
                    c /= 5;
                    h
                })
                .collect();
            let cfg = HeightConfig::line(0, &hs).unwrap();
            let (fin, field) = brute_force_stabilize(&cfg, 1_000_000).expect("unique terminal");
            for s in all_schedulers(cfg.window()) {
                let out = stabilize(&cfg, &s, DEFAULT_BUDGET).unwrap();
                assert_eq!(out.final_config, fin, "{hs:?} {:?}", s.kind());
                assert_eq!(out.topples, field, "{hs:?} {:?}", s.kind());
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 5 + 25 + 125 + 625 + 3125);
}

#[test]
fn single_defect_grows_linearly() {
    let radii: Vec<u64> = (1..=20).collect();
    let m = Measure::<f64>::single_defect(1, Site::origin(1), 2);
    let steps = sandpile_core::run_nested(&m, 1, &radii, Seed::default(), DEFAULT_BUDGET).unwrap();
    let got: Vec<u64> = steps.iter().map(|s| s.origin_topples).collect();
    let want: Vec<u64> = (2..=21).collect();
    assert_eq!(got, want);
}

#[test]
fn site_set_membership() {
    let w = Window::cube(2, 2).unwrap();
    let s = SiteSet::from_sites(w, &[Site::new(vec![1, -2])]);
    assert!(s.contains(&Site::new(vec![1, -2])));
    assert!(!s.contains(&Site::new(vec![3, 0])));
}
