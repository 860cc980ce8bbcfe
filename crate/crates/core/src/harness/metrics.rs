use std::collections::{BTreeMap, BTreeSet};

use crate::protocol::{MessageKind, TranscriptLine, Verdict};
use crate::SimTime;

/// Per-transaction facts pulled out of a transcript. Every metric is a
/// function of this record, so a saved transcript reproduces them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    /// Orders that reached the merchant.
    pub orders_received: usize,
    pub successes: usize,
    /// Failed transactions in which the merchant rejected an endorsement.
    pub rejected_transactions: usize,
    /// Reject verdicts on billing, monitoring and endorsement messages.
    pub rejected_endorsements: usize,
    /// Merchant-side bytes summed over successful transactions.
    pub merchant_bytes: u64,
    /// Seconds from initiation to acceptance, one per success.
    pub completion_times: Vec<f64>,
    /// (decision time, success) per decided order, in time order.
    pub decisions: Vec<(SimTime, bool)>,
}

impl MetricsRecord {
    pub fn from_transcript(lines: &[TranscriptLine]) -> Self {
        let mut m = MetricsRecord::default();
        let mut initiated: BTreeMap<&str, SimTime> = BTreeMap::new();
        let mut succeeded: BTreeSet<&str> = BTreeSet::new();
        let mut merchant_rejected: BTreeSet<&str> = BTreeSet::new();
        let mut failed: BTreeSet<&str> = BTreeSet::new();
        let mut bytes: BTreeMap<&str, u64> = BTreeMap::new();
        for l in lines {
            let tx = l.tx.as_deref();
            if let Some(tx) = tx {
                *bytes.entry(tx).or_default() += l.merchant_bytes as u64;
            }
            let rejected = matches!(l.verdict, Verdict::Reject(_));
            match l.kind {
                MessageKind::Initiate => {
                    if let Some(tx) = tx {
                        initiated.entry(tx).or_insert(l.time);
                    }
                }
                MessageKind::TransactionOrder => m.orders_received += 1,
                MessageKind::Billing | MessageKind::MonitorRequest if rejected => m.rejected_endorsements += 1,
                MessageKind::Endorsement if rejected => {
                    m.rejected_endorsements += 1;
                    if let Some(tx) = tx {
                        merchant_rejected.insert(tx);
                    }
                }
                MessageKind::Decision => {
                    let ok = l.verdict == Verdict::Ok;
                    m.decisions.push((l.time, ok));
                    let Some(tx) = tx else { continue };
                    if ok {
                        m.successes += 1;
                        succeeded.insert(tx);
                        if let Some(t0) = initiated.get(tx) {
                            m.completion_times.push(l.time.as_secs_f64() - t0.as_secs_f64());
                        }
                    } else {
                        failed.insert(tx);
                    }
                }
                _ => {}
            }
        }
        m.rejected_transactions = failed.intersection(&merchant_rejected).count();
        m.merchant_bytes = succeeded.iter().map(|tx| bytes.get(tx).copied().unwrap_or(0)).sum();
        m
    }
}

/// Successful transactions over orders received by the merchant.
pub fn compute_tcr(m: &MetricsRecord) -> f64 {
    if m.orders_received == 0 {
        return 0.0;
    }
    m.successes as f64 / m.orders_received as f64
}

/// One minus rejected transactions over rejected endorsement messages;
/// 1 when nothing was rejected.
pub fn compute_vr(m: &MetricsRecord) -> f64 {
    if m.rejected_endorsements == 0 {
        return 1.0;
    }
    1.0 - m.rejected_transactions as f64 / m.rejected_endorsements as f64
}

/// Mean merchant-side bytes per successful transaction.
pub fn merchant_message_size(m: &MetricsRecord) -> f64 {
    if m.successes == 0 {
        return 0.0;
    }
    m.merchant_bytes as f64 / m.successes as f64
}

/// Mean completion time of successful transactions, seconds.
pub fn mean_completion_time(m: &MetricsRecord) -> Option<f64> {
    (!m.completion_times.is_empty()).then(|| m.completion_times.iter().sum::<f64>() / m.completion_times.len() as f64)
}

/// Cumulative success ratio of decided orders at the end of each bin.
pub fn tcr_series(m: &MetricsRecord, bin: SimTime, end: SimTime) -> Vec<(SimTime, f64)> {
    let mut out = Vec::new();
    let (mut ok, mut all) = (0usize, 0usize);
    let mut it = m.decisions.iter().peekable();
    let mut edge = bin;
    while edge <= end && bin.micros() > 0 {
        while let Some((_, success)) = it.next_if(|(t, _)| *t <= edge) {
            all += 1;
            ok += *success as usize;
        }
        out.push((edge, if all == 0 { 0.0 } else { ok as f64 / all as f64 }));
        edge = edge + bin;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::RejectReason;
    use crate::EntityId;

    fn line(t: u64, kind: MessageKind, mb: usize, verdict: Verdict, tx: &str) -> TranscriptLine {
        TranscriptLine {
            time: SimTime::from_millis(t),
            sender: EntityId(1),
            receiver: Some(EntityId(2)),
            kind,
            size_bytes: 5120,
            merchant_bytes: mb,
            hops: 1,
            verdict,
            tx: Some(tx.to_string()),
        }
    }

    /// Two orders: `a` succeeds after one merchant rejection, `b` fails
    /// after its only endorsement is rejected.
    fn sample() -> Vec<TranscriptLine> {
        use MessageKind::*;
        let bad = Verdict::Reject(RejectReason::DoubleSpend);
        vec![
            line(0, Initiate, 0, Verdict::None, "a"),
            line(50, TransactionOrder, 0, Verdict::Ok, "a"),
            line(100, Billing, 5120, Verdict::Ok, "a"),
            line(400, MonitorRequest, 0, bad, "a"),
            line(900, Endorsement, 300, bad, "a"),
            line(1000, Endorsement, 300, Verdict::Ok, "a"),
            line(1100, Decision, 0, Verdict::Ok, "a"),
            line(2000, Initiate, 0, Verdict::None, "b"),
            line(2050, TransactionOrder, 0, Verdict::Ok, "b"),
            line(2500, Endorsement, 700, bad, "b"),
            line(9000, Decision, 0, Verdict::Reject(RejectReason::InsufficientCover), "b"),
        ]
    }

    #[test]
    fn hand_computed_metrics() {
        let m = MetricsRecord::from_transcript(&sample());
        assert_eq!(m.orders_received, 2);
        assert_eq!(m.successes, 1);
        assert_eq!(compute_tcr(&m), 0.5);
        // Rejections: a's monitor and endorsement, b's endorsement.
        assert_eq!(m.rejected_endorsements, 3);
        assert_eq!(m.rejected_transactions, 1);
        assert!((compute_vr(&m) - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(merchant_message_size(&m), 5720.0);
        assert!((mean_completion_time(&m).unwrap() - 1.1).abs() < 1e-9);
    }

    #[test]
    fn empty_transcript_edge_cases() {
        let m = MetricsRecord::from_transcript(&[]);
        assert_eq!(compute_tcr(&m), 0.0);
        assert_eq!(compute_vr(&m), 1.0);
        assert_eq!(mean_completion_time(&m), None);
    }

    #[test]
    fn series_is_cumulative() {
        let m = MetricsRecord::from_transcript(&sample());
        let s = tcr_series(&m, SimTime::from_secs(5), SimTime::from_secs(10));
        assert_eq!(s, vec![(SimTime::from_secs(5), 1.0), (SimTime::from_secs(10), 0.5)]);
    }
}
