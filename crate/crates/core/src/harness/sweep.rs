use std::io;

use rayon::prelude::*;

use super::metrics::{compute_tcr, compute_vr, mean_completion_time, merchant_message_size, MetricsRecord};
use super::HarnessError;
use crate::net::{RunResult, ScenarioConfig, SimHooks, Simulation};

/// Metric columns written after the config columns of a sweep CSV.
pub const METRIC_COLUMNS: &[&str] =
    &["orders", "successes", "tcr", "vr", "merchant_bytes", "completion_s", "buffer_drops", "journal_sum"];

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub orders: usize,
    pub successes: usize,
    pub tcr: f64,
    pub vr: f64,
    pub merchant_bytes: f64,
    /// NaN when nothing completed.
    pub completion_s: f64,
    pub buffer_drops: usize,
    pub journal_sum: i64,
}

impl RunSummary {
    pub fn of(run: &RunResult) -> Self {
        let m = MetricsRecord::from_transcript(&run.transcript);
        RunSummary {
            orders: m.orders_received,
            successes: m.successes,
            tcr: compute_tcr(&m),
            vr: compute_vr(&m),
            merchant_bytes: merchant_message_size(&m),
            completion_s: mean_completion_time(&m).unwrap_or(f64::NAN),
            buffer_drops: run.buffer_drops,
            journal_sum: run.journal_sum,
        }
    }

    fn values(&self) -> Vec<String> {
        vec![
            self.orders.to_string(),
            self.successes.to_string(),
            self.tcr.to_string(),
            self.vr.to_string(),
            self.merchant_bytes.to_string(),
            self.completion_s.to_string(),
            self.buffer_drops.to_string(),
            self.journal_sum.to_string(),
        ]
    }

    fn from_values(v: &[&str]) -> Result<Self, String> {
        let f = |i: usize| v[i].parse::<f64>().map_err(|e| format!("{}: {e}", METRIC_COLUMNS[i]));
        let u = |i: usize| v[i].parse::<usize>().map_err(|e| format!("{}: {e}", METRIC_COLUMNS[i]));
        Ok(RunSummary {
            orders: u(0)?,
            successes: u(1)?,
            tcr: f(2)?,
            vr: f(3)?,
            merchant_bytes: f(4)?,
            completion_s: f(5)?,
            buffer_drops: u(6)?,
            journal_sum: v[7].parse().map_err(|e| format!("journal_sum: {e}"))?,
        })
    }
}

/// A grid of scenarios. Text form:
///
/// ```text
/// # base settings, as in a scenario file
/// endorsement_levels = 1
/// duration_s = 14400
/// # one axis per `vary` line; the sweep runs their cartesian product
/// vary endorser_ratio = 0.02 0.04 0.06
/// seeds = 1..20
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axes: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let bad = |i: usize, m: &str| HarnessError::Spec(format!("line {}: {m}", i + 1));
        let mut base_lines = String::new();
        let mut axes = Vec::new();
        let mut seeds = vec![1];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(i, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(key) = k.strip_prefix("vary ") {
                let key = key.trim();
                if !ScenarioConfig::KEYS.contains(&key) {
                    return Err(bad(i, &format!("unknown key {key:?}")));
                }
                let values: Vec<String> = v.split_whitespace().map(str::to_string).collect();
                if values.is_empty() {
                    return Err(bad(i, "axis without values"));
                }
                axes.push((key.to_string(), values));
            } else if k == "seeds" {
                seeds = parse_seeds(v).ok_or_else(|| bad(i, "seeds must be N, a..b or a list"))?;
            } else {
                base_lines.push_str(line);
                base_lines.push('\n');
            }
        }
        let base = ScenarioConfig::parse(&base_lines)?;
        let spec = SweepSpec { base, axes, seeds };
        // Surface bad axis values before anything runs.
        spec.points()?;
        Ok(spec)
    }

    /// Every combination of axis values applied to the base config.
    pub fn points(&self) -> Result<Vec<ScenarioConfig>, HarnessError> {
        let mut out = vec![self.base.clone()];
        for (key, values) in &self.axes {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for c in &out {
                for v in values {
                    let mut c = c.clone();
                    c.set(key, v)?;
                    c.validate()?;
                    next.push(c);
                }
            }
            out = next;
        }
        Ok(out)
    }
}

fn parse_seeds(v: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (a <= b).then(|| (a..=b).collect());
    }
    let list: Vec<u64> = v.split_whitespace().map(|s| s.parse().ok()).collect::<Option<_>>()?;
    match list.as_slice() {
        [] => None,
        [n] => Some((1..=*n).collect()),
        _ => Some(list),
    }
}

/// One (scenario point, seed) result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: ScenarioConfig,
    pub summary: RunSummary,
}

/// Runs every point of the spec for every seed, in parallel. Rows come
/// back in point-major, seed-minor order whatever the scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    let jobs: Vec<ScenarioConfig> = spec
        .points()?
        .into_iter()
        .flat_map(|p| spec.seeds.iter().map(move |&s| ScenarioConfig { seed: s, ..p.clone() }))
        .collect();
    jobs.into_par_iter()
        .map(|config| {
            let run = Simulation::new(config.clone(), SimHooks::default())?.run();
            Ok(SweepRow { summary: RunSummary::of(&run), config })
        })
        .collect()
}

/// Mean of a metric over rows sharing a value of `key`, in first-seen
/// order of that value.
pub fn mean_by(rows: &[SweepRow], key: &str, metric: impl Fn(&RunSummary) -> f64) -> Vec<(String, f64)> {
    let mut groups: Vec<(String, f64, usize)> = Vec::new();
    for r in rows {
        let k = r.config.get(key).unwrap_or_default();
        match groups.iter_mut().find(|g| g.0 == k) {
            Some(g) => {
                g.1 += metric(&r.summary);
                g.2 += 1;
            }
            None => groups.push((k, metric(&r.summary), 1)),
        }
    }
    groups.into_iter().map(|(k, s, n)| (k, s / n as f64)).collect()
}

/// Writes rows as CSV: every config key, then the metric columns.
pub fn write_csv<W: io::Write>(out: W, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ScenarioConfig::KEYS.iter().chain(METRIC_COLUMNS))?;
    for r in rows {
        let mut rec: Vec<String> = ScenarioConfig::KEYS.iter().map(|k| r.config.get(k).unwrap_or_default()).collect();
        rec.extend(r.summary.values());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<SweepRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let n_keys = ScenarioConfig::KEYS.len();
    let expected: Vec<&str> = ScenarioConfig::KEYS.iter().chain(METRIC_COLUMNS).copied().collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(HarnessError::Spec("CSV header does not match the sweep layout".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut config = ScenarioConfig::default();
        for (k, v) in ScenarioConfig::KEYS.iter().zip(rec.iter()) {
            config.set(k, v)?;
        }
        let values: Vec<&str> = rec.iter().skip(n_keys).collect();
        let summary = RunSummary::from_values(&values).map_err(HarnessError::Spec)?;
        rows.push(SweepRow { config, summary });
    }
    Ok(rows)
}
