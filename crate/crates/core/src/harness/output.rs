//! CSV emission. Floats are written with 17 significant digits, so files
//! parse back to identical values and identical runs give identical bytes.
//! Wall-clock times go to separate files to keep trace files reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::experiment::{fit_regret_exponent, RegretTrace, TraceRow};
use crate::envs::format_float;
use crate::error::{Error, Result};

const TRACE_HEADER: [&str; 12] = [
    "agent",
    "seed",
    "t",
    "initial_state",
    "realized_return",
    "v_star",
    "v_pi",
    "instant_regret",
    "cumulative_regret",
    "leaf_counts",
    "ever_created",
    "max_depths",
];

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn split<T: std::str::FromStr>(field: &str) -> Result<Vec<T>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|x| x.parse().map_err(|_| Error::Parse(format!("bad list item `{x}`"))))
        .collect()
}

fn num<T: std::str::FromStr>(field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("bad number `{field}`")))
}

pub fn trace_file_name(trace: &RegretTrace) -> String {
    format!("trace_{}_seed{}.csv", trace.agent, trace.seed)
}

/// Writes the per-episode trace, its timing file and, for partitioned
/// agents, the per-step tree statistics. Returns the trace path.
pub fn write_trace(trace: &RegretTrace, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(trace_file_name(trace));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            trace.agent.clone(),
            trace.seed.to_string(),
            r.t.to_string(),
            r.initial_state.to_string(),
            format_float(r.realized_return),
            format_float(r.v_star),
            format_float(r.v_pi),
            format_float(r.instant_regret),
            format_float(r.cumulative_regret),
            join(&r.leaf_counts),
            join(&r.ever_created),
            join(&r.max_depths),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(format!("timing_{}_seed{}.csv", trace.agent, trace.seed)))?;
    w.write_record(["t", "wall_ms"])?;
    for r in &trace.rows {
        w.write_record([r.t.to_string(), format_float(r.wall_ms)])?;
    }
    w.flush()?;

    if trace.rows.iter().any(|r| !r.leaf_counts.is_empty()) {
        let mut w = csv::Writer::from_path(dir.join(format!("tree_{}_seed{}.csv", trace.agent, trace.seed)))?;
        w.write_record(["episode", "h", "leaf_count", "ever_created", "max_depth"])?;
        for r in &trace.rows {
            for h in 0..r.leaf_counts.len() {
                w.write_record([
                    r.t.to_string(),
                    h.to_string(),
                    r.leaf_counts[h].to_string(),
                    r.ever_created[h].to_string(),
                    r.max_depths[h].to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(path)
}

/// Reads a trace written by [`write_trace`]; policies and timings are not
/// part of the file.
pub fn read_trace(path: &Path) -> Result<RegretTrace> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(TRACE_HEADER) {
        return Err(Error::Parse(format!("{}: unexpected header", path.display())));
    }
    let mut agent = None;
    let mut seed = None;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        agent.get_or_insert_with(|| f(0).to_string());
        seed.get_or_insert(num::<u64>(f(1))?);
        rows.push(TraceRow {
            t: num(f(2))?,
            initial_state: num(f(3))?,
            realized_return: num(f(4))?,
            v_star: num(f(5))?,
            v_pi: num(f(6))?,
            instant_regret: num(f(7))?,
            cumulative_regret: num(f(8))?,
            leaf_counts: split(f(9))?,
            ever_created: split(f(10))?,
            max_depths: split(f(11))?,
            wall_ms: 0.0,
        });
    }
    Ok(RegretTrace {
        agent: agent.ok_or_else(|| Error::Parse(format!("{}: no rows", path.display())))?,
        seed: seed.unwrap_or(0),
        rows,
        policies: Vec::new(),
    })
}

/// Reads every `trace_*.csv` in `dir`, sorted by file name.
pub fn read_traces(dir: &Path) -> Result<Vec<RegretTrace>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_trace(p)).collect()
}

/// Per-agent summary over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSummary {
    pub agent: String,
    pub seeds: usize,
    pub mean_final_regret: f64,
    /// Mean fitted regret exponent over the seeds whose fit succeeded.
    pub slope_mean: f64,
    /// 95% Student-t interval of the mean exponent.
    pub slope_ci: (f64, f64),
}

pub fn summarize(traces: &[RegretTrace], burn_in: f64) -> Vec<AgentSummary> {
    let mut groups: BTreeMap<&str, Vec<&RegretTrace>> = BTreeMap::new();
    for tr in traces {
        groups.entry(tr.agent.as_str()).or_default().push(tr);
    }
    groups
        .into_iter()
        .map(|(agent, trs)| {
            let mean_final_regret = trs.iter().map(|t| t.final_regret()).sum::<f64>() / trs.len() as f64;
            let slopes: Vec<f64> = trs
                .iter()
                .filter_map(|t| fit_regret_exponent(t, burn_in).ok())
                .map(|f| f.slope)
                .collect();
            let (slope_mean, slope_ci) = mean_interval(&slopes);
            AgentSummary {
                agent: agent.to_string(),
                seeds: trs.len(),
                mean_final_regret,
                slope_mean,
                slope_ci,
            }
        })
        .collect()
}

fn mean_interval(xs: &[f64]) -> (f64, (f64, f64)) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, (f64::NAN, f64::NAN));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, (mean, mean));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let q = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half = q * (var / n as f64).sqrt();
    (mean, (mean - half, mean + half))
}

/// Writes `regret_long.csv` (one row per agent, seed and episode, sorted by
/// agent and seed) and `summary.csv` (one row per agent).
pub fn emit_plot_data(traces: &[RegretTrace], out: &Path, burn_in: f64) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no traces to emit".into()));
    }
    fs::create_dir_all(out)?;
    let mut sorted: Vec<&RegretTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| (&a.agent, a.seed).cmp(&(&b.agent, b.seed)));
    let mut w = csv::Writer::from_path(out.join("regret_long.csv"))?;
    w.write_record(["agent", "seed", "t", "cumulative_regret", "leaf_total"])?;
    for tr in sorted {
        for r in &tr.rows {
            w.write_record([
                tr.agent.clone(),
                tr.seed.to_string(),
                r.t.to_string(),
                format_float(r.cumulative_regret),
                r.leaf_counts.iter().sum::<usize>().to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record([
        "agent",
        "seeds",
        "mean_final_regret",
        "slope_mean",
        "slope_ci_low",
        "slope_ci_high",
    ])?;
    for s in summarize(traces, burn_in) {
        w.write_record([
            s.agent,
            s.seeds.to_string(),
            format_float(s.mean_final_regret),
            format_float(s.slope_mean),
            format_float(s.slope_ci.0),
            format_float(s.slope_ci.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_trace(agent: &str, seed: u64, n: usize) -> RegretTrace {
        let mut cum = 0.0;
        let rows = (1..=n)
            .map(|t| {
                let inst = 1.0 / (t as f64).sqrt() + seed as f64 * 1e-3 + 1.0 / 3.0;
                cum += inst;
                TraceRow {
                    t,
                    initial_state: t % 7,
                    realized_return: 0.1 * t as f64 / 3.0,
                    v_star: 2.0 / 3.0,
                    v_pi: 2.0 / 3.0 - inst,
                    instant_regret: inst,
                    cumulative_regret: cum,
                    leaf_counts: vec![t, 2 * t],
                    ever_created: vec![t + 1, 2 * t + 1],
                    max_depths: vec![3, 4],
                    wall_ms: 0.0,
                }
            })
            .collect();
        RegretTrace {
            agent: agent.into(),
            seed,
            rows,
            policies: Vec::new(),
        }
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tr = fake_trace("pi-krvi", 3, 60);
        let path = write_trace(&tr, dir.path()).unwrap();
        assert_eq!(read_trace(&path).unwrap(), tr);
        assert!(dir.path().join("tree_pi-krvi_seed3.csv").exists());
    }

    #[test]
    fn plot_data_counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let traces: Vec<RegretTrace> = (1..=3).map(|s| fake_trace("kovi", s, 100)).collect();
        emit_plot_data(&traces, dir.path(), 0.2).unwrap();
        let long = fs::read_to_string(dir.path().join("regret_long.csv")).unwrap();
        assert_eq!(long.lines().count(), 1 + 300);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 1);

        let again = tempfile::tempdir().unwrap();
        emit_plot_data(&traces, again.path(), 0.2).unwrap();
        for f in ["regret_long.csv", "summary.csv"] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(again.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn summary_interval_brackets_mean() {
        let traces: Vec<RegretTrace> = (1..=4).map(|s| fake_trace("a", s, 200)).collect();
        let s = &summarize(&traces, 0.2)[0];
        assert_eq!(s.seeds, 4);
        assert!(s.slope_ci.0 <= s.slope_mean && s.slope_mean <= s.slope_ci.1);
        assert!(s.slope_mean > 0.5 && s.slope_mean < 1.0);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let err = emit_plot_data(&[fake_trace("a", 1, 10)], &file.join("sub"), 0.2).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
