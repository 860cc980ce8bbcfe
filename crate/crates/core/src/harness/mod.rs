//! Metrics, sweeps and file formats around simulation runs.

mod metrics;
mod sweep;

use std::fmt::Write as _;

pub use metrics::{compute_tcr, compute_vr, mean_completion_time, merchant_message_size, tcr_series, MetricsRecord};
pub use sweep::{mean_by, read_csv, run_sweep, write_csv, RunSummary, SweepRow, SweepSpec, METRIC_COLUMNS};

use crate::net::{NetError, ScenarioConfig};
use crate::protocol::TranscriptLine;
use crate::SimTime;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error("transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Transcript file: the scenario as `# key = value` comment lines, a
/// column header comment, then one line per message.
pub fn write_transcript(config: &ScenarioConfig, lines: &[TranscriptLine]) -> String {
    let mut out = String::new();
    for l in config.to_text().lines() {
        let _ = writeln!(out, "# {l}");
    }
    out.push_str("# time_us sender receiver kind size_bytes merchant_bytes hops verdict tx\n");
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    out
}

/// Reads a transcript file. The scenario header is optional; when
/// present it is returned.
pub fn read_transcript(text: &str) -> Result<(Option<ScenarioConfig>, Vec<TranscriptLine>), HarnessError> {
    let mut header = String::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if let Some(c) = raw.strip_prefix('#') {
            if c.contains('=') {
                header.push_str(c.trim());
                header.push('\n');
            }
            continue;
        }
        if raw.is_empty() {
            continue;
        }
        lines.push(raw.parse().map_err(|reason| HarnessError::Transcript { line: i + 1, reason })?);
    }
    let config = if header.is_empty() { None } else { Some(ScenarioConfig::parse(&header)?) };
    Ok((config, lines))
}

/// Human-readable metric summary of a transcript.
pub fn report(lines: &[TranscriptLine], bin: SimTime) -> String {
    let m = MetricsRecord::from_transcript(lines);
    let mut out = String::new();
    let _ = writeln!(out, "orders received     {}", m.orders_received);
    let _ = writeln!(out, "successful          {}", m.successes);
    let _ = writeln!(out, "TCR                 {:.4}", compute_tcr(&m));
    let _ = writeln!(out, "VR                  {:.4}", compute_vr(&m));
    let _ = writeln!(out, "merchant bytes/tx   {:.1}", merchant_message_size(&m));
    match mean_completion_time(&m) {
        Some(t) => {
            let _ = writeln!(out, "completion time     {t:.3} s");
        }
        None => out.push_str("completion time     n/a\n"),
    }
    let end = lines.last().map_or(SimTime::ZERO, |l| l.time);
    if bin.micros() > 0 && end >= bin {
        out.push_str("TCR over time\n");
        for (t, r) in tcr_series(&m, bin, end) {
            let _ = writeln!(out, "  {:>6.2} h  {r:.4}", t.as_secs_f64() / 3600.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{SimHooks, Simulation};

    #[test]
    fn transcript_file_round_trip_reproduces_metrics() {
        let cfg = ScenarioConfig { nodes: 30, duration_s: 600.0, area_m: 1000.0, grid: 5, ..Default::default() };
        let run = Simulation::new(cfg.clone(), SimHooks::default()).unwrap().run();
        let text = write_transcript(&cfg, &run.transcript);
        let (back_cfg, back) = read_transcript(&text).unwrap();
        assert_eq!(back_cfg, Some(cfg));
        assert_eq!(back, run.transcript);
        assert_eq!(MetricsRecord::from_transcript(&back), MetricsRecord::from_transcript(&run.transcript));
        assert!(report(&back, SimTime::from_secs(300)).contains("TCR over time"));
    }

    #[test]
    fn bad_transcript_line_is_located() {
        let err = read_transcript("# comment\n12 n1 n2 Billing 5120 0 1 ok -\nnot a line\n").unwrap_err();
        assert!(matches!(err, HarnessError::Transcript { line: 3, .. }), "{err}");
    }
}
