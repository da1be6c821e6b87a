//! Subcommand implementations: parse flags into core types, run the
//! experiment, write outputs and the manifest.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use sandpile_core::onesided::{raster_export_scaled, replay_events, run_one_sided, write_events_csv, zero_count_series};
use sandpile_core::percolation::fit_exponential_in;
use sandpile_core::{
    stabilize, HeightConfig, MeasureSpec, Scheduler, SchedulerKind, Seed, Site, StabilizeOutcome, Status, Window,
};

use crate::args::{
    parse_window, CltArgs, Command, CommonArgs, DensityArgs, Format, IidArgs, ScanArgs, StabilizeArgs, TailArgs,
    ZerosArgs,
};
use crate::error::CliError;
use crate::experiments::{
    clt_statistic, density_check, growth_scan, iid_analysis, origin_cluster_sizes, replicates, tail_disagreements,
    tails,
};
use crate::manifest::{unix_now, RunManifest};
use crate::stats::mean_variance;

/// Files written and, if the run did not succeed, why.
#[derive(Debug)]
pub struct RunReport {
    pub outputs: Vec<PathBuf>,
    pub failure: Option<CliError>,
    pub manifest: Option<PathBuf>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, CliError::exit_code)
    }
}

/// Run a parsed command. Errors before any output is written are returned
/// directly; later failures are carried in the report next to the partial
/// outputs and the manifest.
pub fn run(command: Command) -> Result<RunReport, CliError> {
    let command = match command {
        Command::Replay(r) => {
            let m = RunManifest::read(&r.manifest)?;
            let mut cmd = m.parameters;
            if let (Some(out), Some(c)) = (r.out, cmd.common_mut()) {
                c.out = out;
            }
            cmd
        }
        other => other,
    };
    let common = command.common().expect("replay resolved above").clone();
    fs::create_dir_all(&common.out)?;
    let started = unix_now();
    let mut out = Outputs::new(&common.out, common.format);
    let result = match &command {
        Command::Stabilize(a) => cmd_stabilize(a, &mut out),
        Command::Zeros(a) => cmd_zeros(a, &mut out),
        Command::Tail(a) => cmd_tail(a, &mut out),
        Command::Iid(a) => cmd_iid(a, &mut out),
        Command::Clt(a) => cmd_clt(a, &mut out),
        Command::Density(a) => cmd_density(a, &mut out),
        Command::Scan(a) => cmd_scan(a, &mut out),
        Command::Replay(_) => unreachable!(),
    };
    let failure = match result {
        Ok(()) => None,
        Err(e @ CliError::Usage(_)) => return Err(e),
        Err(e) => Some(e),
    };
    let manifest = RunManifest::new(command, started, out.written.clone()).write(&common.out)?;
    Ok(RunReport {
        outputs: out.written,
        failure,
        manifest: Some(manifest),
    })
}

struct Outputs {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path, format: Format) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// A table as CSV, or as a JSON array of objects with `--format json`.
    fn table(&mut self, stem: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        match self.format {
            Format::Json => {
                let objects: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|r| {
                        let map = header
                            .iter()
                            .zip(r)
                            .map(|(k, v)| (k.to_string(), cell_json(v)))
                            .collect::<serde_json::Map<_, _>>();
                        serde_json::Value::Object(map)
                    })
                    .collect();
                let p = self.path(&format!("{stem}.json"));
                fs::write(p, serde_json::to_string_pretty(&objects)? + "\n")?;
            }
            _ => {
                let p = self.path(&format!("{stem}.csv"));
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "{}", header.join(","))?;
                for r in rows {
                    writeln!(w, "{}", r.join(","))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

fn cell_json(v: &str) -> serde_json::Value {
    if v.is_empty() {
        return serde_json::Value::Null;
    }
    if let Ok(i) = v.parse::<i64>() {
        return json!(i);
    }
    match v.parse::<f64>() {
        Ok(f) if f.is_finite() => json!(f),
        _ => json!(v),
    }
}

fn s(v: impl Display) -> String {
    v.to_string()
}

fn opt(v: Option<impl Display>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn measure_of(common: &CommonArgs, default: &str) -> Result<MeasureSpec, CliError> {
    let text = common.measure.as_deref().unwrap_or(default);
    let m: MeasureSpec = text.parse().map_err(|e| CliError::Usage(format!("--measure: {e}")))?;
    m.validate().map_err(|e| CliError::Usage(format!("--measure: {e}")))?;
    Ok(m)
}

fn window_of(common: &CommonArgs, default_radius: Option<u64>) -> Result<Window, CliError> {
    let d = common.d as usize;
    let w = match (&common.window, common.radius.or(default_radius)) {
        (Some(text), _) => parse_window(text).map_err(CliError::Usage)?,
        (None, Some(k)) => Window::cube(d, k).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => return Err(CliError::Usage("give --window or --radius".into())),
    };
    if w.dim() != d {
        return Err(CliError::Usage(format!("--window has {} axes but --d is {d}", w.dim())));
    }
    Ok(w)
}

fn scheduler_kind(common: &CommonArgs) -> Result<SchedulerKind, CliError> {
    common.scheduler.parse().map_err(CliError::Usage)
}

fn require_d1(common: &CommonArgs, what: &str) -> Result<(), CliError> {
    if common.d != 1 {
        return Err(CliError::Usage(format!("{what} is defined in one dimension only (--d 1)")));
    }
    Ok(())
}

fn forbid_pgm(common: &CommonArgs) -> Result<(), CliError> {
    if common.format == Format::Pgm {
        return Err(CliError::Usage("--format pgm applies to `zeros` only".into()));
    }
    Ok(())
}

fn coord_header(d: usize, last: &str) -> Vec<String> {
    let mut h: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    h.push(last.to_string());
    h
}

fn site_row(site: &Site, value: u64) -> Vec<String> {
    site.coords().iter().map(|c| c.to_string()).chain([value.to_string()]).collect()
}

fn write_outcome(initial: &HeightConfig, o: &StabilizeOutcome, out: &mut Outputs) -> Result<(), CliError> {
    let w = o.final_config.window();
    let d = w.dim();
    let heights = o.final_config.heights();
    let counts = o.topples.counts();
    let hh = coord_header(d, "height");
    let th = coord_header(d, "topples");
    let lh = coord_header(d, "grains");
    let hh: Vec<&str> = hh.iter().map(String::as_str).collect();
    let th: Vec<&str> = th.iter().map(String::as_str).collect();
    let lh: Vec<&str> = lh.iter().map(String::as_str).collect();
    let sites: Vec<Site> = w.sites().collect();
    let rows = |vals: &[u64]| sites.iter().zip(vals).map(|(x, &v)| site_row(x, v)).collect::<Vec<_>>();
    out.table("heights", &hh, &rows(&heights))?;
    out.table("topples", &th, &rows(&counts))?;
    let ledger: Vec<Vec<String>> = o.final_config.ledger().iter().map(|(x, g)| site_row(x, *g)).collect();
    out.table("ledger", &lh, &ledger)?;
    out.table(
        "status",
        &["scheduler", "status", "steps", "wave_count", "grains_in", "grains_final", "exported"],
        &[vec![
            s(o.kind),
            s(match o.status {
                Status::Stabilized => "stabilized",
                Status::BudgetExceeded => "budget_exceeded",
            }),
            s(o.steps),
            opt(o.wave_count),
            s(initial.total_grains()),
            s(o.final_config.window_total()),
            s(o.final_config.ledger_total()),
        ]],
    )
}

fn cmd_stabilize(a: &StabilizeArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    forbid_pgm(c)?;
    let measure = measure_of(c, "poisson:0.8")?;
    let window = window_of(c, None)?;
    let kind = scheduler_kind(c)?;
    let seed = Seed::new(c.seed, 0);
    let initial = measure.sample(&window, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let outcome = stabilize(&initial, &Scheduler::from_kind(kind, &window, seed), c.budget)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    write_outcome(&initial, &outcome, out)?;
    if outcome.status == Status::BudgetExceeded {
        return Err(CliError::BudgetExceeded(format!(
            "budget of {} topplings exceeded; partial state written",
            c.budget
        )));
    }
    Ok(())
}

fn cmd_zeros(a: &ZerosArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    require_d1(c, "the one-sided procedure")?;
    let measure = measure_of(c, "poisson:1")?;
    if !measure.is_product() {
        return Err(CliError::Usage("zeros needs an i.i.d. measure".into()));
    }
    let trace = run_one_sided(&measure, a.nmax, Seed::new(c.seed, 0)).map_err(|e| CliError::Usage(e.to_string()))?;
    let pgm = out.path("zeros.pgm");
    raster_export_scaled(&trace, &pgm, a.scale as usize).map_err(|e| CliError::Failed(e.to_string()))?;
    let events = out.path("events.csv");
    write_events_csv(&trace.events, BufWriter::new(File::create(events)?))?;
    let rows: Vec<Vec<String>> = trace
        .zero_counts
        .iter()
        .zip(&trace.origin_topples)
        .enumerate()
        .map(|(n, (z, t))| vec![s(n), s(z), s(t)])
        .collect();
    out.table("zero_counts", &["n", "zeros", "origin_topples"], &rows)?;
    let summary = replay_events(&trace.events, &trace.zero_counts)
        .map_err(|e| CliError::Failed(format!("event log inconsistent: {e}")))?;
    eprintln!(
        "{} steps, {} events replayed: {} moves, {} disappear, {} create_origin, {} create_right_boundary",
        summary.steps,
        trace.events.len(),
        summary.moves,
        summary.disappear,
        summary.create_origin,
        summary.create_right_boundary
    );
    Ok(())
}

fn cmd_tail(a: &TailArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    forbid_pgm(c)?;
    let measure = measure_of(c, "poisson:0.2")?;
    let k = c.radius.unwrap_or(64);
    let reps = c.replicates.unwrap_or(10_000);
    let thresholds: Vec<usize> = (1..=a.max_threshold).collect();
    let sizes = origin_cluster_sizes(&measure, c.d as usize, &[k, 2 * k], reps, c.seed, c.budget)?;
    let pairs = tails(&sizes, &thresholds)?;
    let mut tail_rows = Vec::new();
    let mut fit_rows = Vec::new();
    let mut refused = Vec::new();
    for p in &pairs {
        for (set, t) in [("T", &p.toppled), ("W", &p.toppled_or_occupied)] {
            let se = t.standard_errors();
            for (i, n) in t.thresholds.iter().enumerate() {
                tail_rows.push(vec![s(p.radius), s(set), s(n), s(t.survival[i]), s(t.counts[i]), s(se[i])]);
            }
            match fit_exponential_in(t, a.min_count, a.fit_min, a.fit_max) {
                Ok(f) => fit_rows.push(vec![
                    s(p.radius),
                    s(set),
                    s(f.slope),
                    s(f.intercept),
                    opt(f.r_squared),
                    s(f.fit_range.0),
                    s(f.fit_range.1),
                ]),
                Err(e) => refused.push(format!("radius {} set {set}: {e}", p.radius)),
            }
        }
    }
    out.table("tail", &["radius", "set", "n", "survival", "count", "stderr"], &tail_rows)?;
    out.table("fit", &["radius", "set", "slope", "intercept", "r2", "n_min", "n_max"], &fit_rows)?;
    let mut agree_rows = Vec::new();
    for (set, a_t, b_t) in [
        ("T", &pairs[0].toppled, &pairs[1].toppled),
        ("W", &pairs[0].toppled_or_occupied, &pairs[1].toppled_or_occupied),
    ] {
        let bad = tail_disagreements(a_t, b_t, 2.0);
        for &n in &a_t.thresholds {
            agree_rows.push(vec![s(set), s(n), s(!bad.contains(&n))]);
        }
    }
    out.table("radius_agreement", &["set", "n", "within_2se"], &agree_rows)?;
    if !refused.is_empty() {
        return Err(CliError::Precondition(format!("fit refused: {}", refused.join("; "))));
    }
    Ok(())
}

fn cmd_iid(a: &IidArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    forbid_pgm(c)?;
    require_d1(c, "the one-sided procedure")?;
    let measure = measure_of(c, "twopoint:2,0.5")?;
    if !measure.is_product() {
        eprintln!("warning: excursion lengths are i.i.d. only under product measures; the KS results are not meaningful here");
    }
    let runs = c.replicates.unwrap_or(1);
    let series: Vec<Vec<u64>> = replicates(c.seed, runs, |seed| zero_count_series(&measure, a.nmax, seed))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = iid_analysis(&series, &a.levels, a.min_intervals)?;
    let interval_rows: Vec<Vec<String>> = report
        .levels
        .iter()
        .map(|l| vec![s(l.level), s(l.deltas.len()), s(l.first_half.len()), s(l.second_half.len()), s(l.open_runs)])
        .collect();
    out.table("intervals", &["level", "completed", "first_half", "second_half", "open_runs"], &interval_rows)?;
    let mut rows = Vec::new();
    for (la, lb, r) in &report.between_levels {
        rows.push(vec![s("levels"), s(la), s(lb), s(r.n_a), s(r.n_b), s(r.statistic), s(r.p_value), s(r.reject)]);
    }
    for (l, r) in &report.split_half {
        rows.push(vec![s("split_half"), s(l), s(l), s(r.n_a), s(r.n_b), s(r.statistic), s(r.p_value), s(r.reject)]);
    }
    out.table(
        "ks",
        &["comparison", "level_a", "level_b", "n_a", "n_b", "statistic", "p_value", "reject"],
        &rows,
    )
}

fn cmd_clt(a: &CltArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    forbid_pgm(c)?;
    require_d1(c, "the scaled sum")?;
    let measure = measure_of(c, "poisson:1")?;
    let reps = c.replicates.unwrap_or(1_000);
    let samples: Vec<f64> = replicates(c.seed, reps, |seed| clt_statistic(&measure, a.n, seed))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<String>> = samples.iter().enumerate().map(|(i, v)| vec![s(i), s(v)]).collect();
    out.table("clt", &["replicate", "s_n"], &rows)?;
    let (mean, var) = mean_variance(&samples).map_err(|e| CliError::Precondition(e.to_string()))?;
    out.table(
        "clt_summary",
        &["n", "replicates", "mean", "variance"],
        &[vec![s(a.n), s(reps), s(mean), s(var)]],
    )
}

fn cmd_density(a: &DensityArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    forbid_pgm(c)?;
    let measure = measure_of(c, "poisson:0.8")?;
    if measure.density() >= c.d as f64 {
        eprintln!("warning: density {} is not below d = {}; stabilization may not terminate", measure.density(), c.d);
    }
    let radius = c.radius.unwrap_or(100_000);
    let kind = scheduler_kind(c)?;
    let r = density_check(&measure, c.d as usize, radius, kind, Seed::new(c.seed, 0), c.budget)?;
    out.table(
        "density",
        &[
            "radius",
            "margin",
            "sampled_density",
            "interior_sampled_density",
            "interior_final_density",
            "grains_in",
            "grains_final",
            "exported",
            "ledger_identity",
            "evolution_identity",
            "status",
        ],
        &[vec![
            s(r.radius),
            s(r.margin),
            s(r.sampled_density),
            s(r.interior_sampled_density),
            s(r.interior_final_density),
            s(r.total_in),
            s(r.total_final),
            s(r.exported),
            s(r.ledger_identity_holds()),
            s(r.evolution_identity),
            s(if r.status == Status::Stabilized { "stabilized" } else { "budget_exceeded" }),
        ]],
    )?;
    if r.status == Status::BudgetExceeded {
        return Err(CliError::BudgetExceeded(format!("budget of {} topplings exceeded", c.budget)));
    }
    if !r.ledger_identity_holds() || !r.evolution_identity {
        return Err(CliError::Failed("grain ledger or evolution identity violated".into()));
    }
    Ok(())
}

fn cmd_scan(a: &ScanArgs, out: &mut Outputs) -> Result<(), CliError> {
    let c = &a.common;
    forbid_pgm(c)?;
    if a.radii.is_empty() || a.radii.windows(2).any(|p| p[0] >= p[1]) {
        return Err(CliError::Usage("--radii must be strictly increasing".into()));
    }
    let seeds = c.replicates.unwrap_or(20);
    eprintln!("EXPLORATORY: growth curves only; no critical density is inferred");
    let rows = growth_scan(&a.densities, c.d as usize, &a.radii, seeds, c.seed, c.budget)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                s(r.density),
                s(r.radius),
                s(r.seeds),
                s(r.completed),
                opt(r.median_origin_topples),
                opt(r.mean_never_toppled_fraction),
                opt(r.mean_never_toppled_bond_fraction),
            ]
        })
        .collect();
    out.table(
        "scan_exploratory",
        &[
            "density",
            "radius",
            "seeds",
            "completed",
            "median_origin_topples",
            "never_toppled_fraction",
            "never_toppled_bond_fraction",
        ],
        &table,
    )
}
