use std::fmt;
use std::str::FromStr;

use super::{MessageKind, RejectReason};
use crate::{EntityId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    None,
    Ok,
    Reject(RejectReason),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::None => f.write_str("-"),
            Verdict::Ok => f.write_str("ok"),
            Verdict::Reject(r) => write!(f, "reject:{r}"),
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "-" => Ok(Verdict::None),
            "ok" => Ok(Verdict::Ok),
            _ => s
                .strip_prefix("reject:")
                .and_then(RejectReason::parse)
                .map(Verdict::Reject)
                .ok_or_else(|| format!("bad verdict {s:?}")),
        }
    }
}

/// One delivered protocol message, as written to a transcript file:
///
/// ```text
/// time_us sender receiver kind size_bytes merchant_bytes hops verdict tx
/// ```
///
/// `receiver` is `*` for broadcasts and `tx` is `-` when not tied to a
/// transaction. `merchant_bytes` is the part of the message the merchant
/// needs to validate chains or reach secondary endorsers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLine {
    pub time: SimTime,
    pub sender: EntityId,
    pub receiver: Option<EntityId>,
    pub kind: MessageKind,
    pub size_bytes: usize,
    pub merchant_bytes: usize,
    pub hops: u32,
    pub verdict: Verdict,
    pub tx: Option<String>,
}

fn parse_entity(s: &str) -> Result<EntityId, String> {
    s.strip_prefix('n').and_then(|v| v.parse().ok()).map(EntityId).ok_or_else(|| format!("bad entity {s:?}"))
}

impl fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.time.micros(), self.sender)?;
        match self.receiver {
            Some(r) => write!(f, "{r}")?,
            None => f.write_str("*")?,
        }
        write!(
            f,
            " {} {} {} {} {} {}",
            self.kind.as_str(),
            self.size_bytes,
            self.merchant_bytes,
            self.hops,
            self.verdict,
            self.tx.as_deref().unwrap_or("-")
        )
    }
}

impl FromStr for TranscriptLine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = s.split_whitespace().collect();
        if f.len() != 9 {
            return Err(format!("expected 9 fields, got {}", f.len()));
        }
        let num = |v: &str| v.parse::<u64>().map_err(|e| format!("{v:?}: {e}"));
        Ok(TranscriptLine {
            time: SimTime(num(f[0])?),
            sender: parse_entity(f[1])?,
            receiver: if f[2] == "*" { None } else { Some(parse_entity(f[2])?) },
            kind: MessageKind::parse(f[3]).ok_or_else(|| format!("bad kind {:?}", f[3]))?,
            size_bytes: num(f[4])? as usize,
            merchant_bytes: num(f[5])? as usize,
            hops: num(f[6])? as u32,
            verdict: f[7].parse()?,
            tx: if f[8] == "-" { None } else { Some(f[8].to_string()) },
        })
    }
}
