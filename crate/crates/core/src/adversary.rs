//! Scripted attacks against the payment system.
//!
//! Each [`AttackKind`] stages a small cast around the market of an
//! otherwise ordinary scenario: a customer, an endorser that plays the
//! attack, and a handful of honest bystanders that act as monitors. The
//! attack transaction is then traced through the transcript to the first
//! defense that rejected it.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::net::{
    load_graph, market_vertex, EndorserBehavior, NetError, Pin, RunResult, ScenarioConfig, ScriptedOrder, SimHooks,
    Simulation, MERCHANT,
};
use crate::protocol::{MessageKind, RejectReason, Role, Verdict};
use crate::{EntityId, Position, SimTime};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdversaryError {
    #[error("invalid attack script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackKind {
    /// An endorser spends the same coins on a second purchase.
    DoubleSpend,
    /// An endorser restores its phone from a backup and reuses old coins.
    ResetRecovery,
    /// Someone signs an order in another customer's name.
    Impersonation,
    /// An endorser uses stolen phones, carried along with it, as monitors.
    StolenPhoneColocation,
    /// Customer and endorser agree on an endorsement carrying no coins.
    ColludeCustomerEndorser,
    /// Customer and merchant fake a purchase and split the money.
    ColludeCustomerMerchant,
    /// Compromised monitors countersign a block on a stale chain.
    ColludeMonitors,
    /// An endorser attaches a coin the bank never issued.
    ForgedCoin,
}

impl AttackKind {
    pub const ALL: [AttackKind; 8] = [
        AttackKind::DoubleSpend,
        AttackKind::ResetRecovery,
        AttackKind::Impersonation,
        AttackKind::StolenPhoneColocation,
        AttackKind::ColludeCustomerEndorser,
        AttackKind::ColludeCustomerMerchant,
        AttackKind::ColludeMonitors,
        AttackKind::ForgedCoin,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::DoubleSpend => "double_spend",
            AttackKind::ResetRecovery => "reset_recovery",
            AttackKind::Impersonation => "impersonation",
            AttackKind::StolenPhoneColocation => "stolen_phone_colocation",
            AttackKind::ColludeCustomerEndorser => "collude_customer_endorser",
            AttackKind::ColludeCustomerMerchant => "collude_customer_merchant",
            AttackKind::ColludeMonitors => "collude_monitors",
            AttackKind::ForgedCoin => "forged_coin",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AdversaryError::InvalidScript(format!("unknown attack kind {s:?}")))
    }
}

/// What the system is supposed to do about an attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    CaughtBy(RejectReason),
    /// Looks like an honest purchase; the protocol cannot tell.
    UndetectableByDesign,
}

pub fn expected_outcome(kind: AttackKind) -> Expected {
    use RejectReason::*;
    match kind {
        AttackKind::DoubleSpend => Expected::CaughtBy(DoubleSpend),
        AttackKind::ResetRecovery => Expected::CaughtBy(StaleChain),
        AttackKind::Impersonation => Expected::CaughtBy(BadCredential),
        AttackKind::StolenPhoneColocation => Expected::CaughtBy(SimilarLocation),
        AttackKind::ColludeCustomerEndorser => Expected::CaughtBy(InsufficientCover),
        AttackKind::ColludeCustomerMerchant => Expected::UndetectableByDesign,
        AttackKind::ColludeMonitors => Expected::CaughtBy(InsufficientQuorum),
        AttackKind::ForgedCoin => Expected::CaughtBy(BadCredential),
    }
}

/// A staged attack. Text form, in the scenario dialect:
///
/// ```text
/// kind = collude_monitors
/// trigger_s = 600
/// colluders = 2
/// endorser = n2      # optional; must be an endorser
/// customer = n101    # optional; must be a customer
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackScript {
    pub kind: AttackKind,
    /// When the attack purchase is placed.
    pub trigger: SimTime,
    /// Compromised monitors, for [`AttackKind::ColludeMonitors`].
    pub colluders: usize,
    pub endorser: Option<EntityId>,
    pub customer: Option<EntityId>,
}

impl AttackScript {
    pub fn new(kind: AttackKind) -> Self {
        AttackScript { kind, trigger: SimTime::from_secs(600), colluders: 2, endorser: None, customer: None }
    }

    pub fn parse(text: &str) -> Result<Self, AdversaryError> {
        let bad = |m: String| AdversaryError::InvalidScript(m);
        let mut kind = None;
        let mut s = AttackScript::new(AttackKind::DoubleSpend);
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let entity = |v: &str| {
                v.trim_start_matches('n').parse().map(EntityId).map_err(|_| bad(format!("{k}: bad entity {v:?}")))
            };
            match k {
                "kind" => kind = Some(v.parse()?),
                "trigger_s" => {
                    let t: f64 = v.parse().map_err(|_| bad(format!("trigger_s: {v:?}")))?;
                    if !(t.is_finite() && t >= 0.0) {
                        return Err(bad("trigger_s must be non-negative".into()));
                    }
                    s.trigger = SimTime::from_secs_f64(t);
                }
                "colluders" => s.colluders = v.parse().map_err(|_| bad(format!("colluders: {v:?}")))?,
                "endorser" => s.endorser = Some(entity(v)?),
                "customer" => s.customer = Some(entity(v)?),
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        s.kind = kind.ok_or_else(|| bad("missing kind".into()))?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "kind = {}\ntrigger_s = {}\ncolluders = {}\n",
            self.kind,
            self.trigger.as_secs_f64(),
            self.colluders
        );
        if let Some(e) = self.endorser {
            out.push_str(&format!("endorser = {e}\n"));
        }
        if let Some(c) = self.customer {
            out.push_str(&format!("customer = {c}\n"));
        }
        out
    }
}

/// Where an attack transaction ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackOutcome {
    Rejected(RejectReason),
    Completed,
    /// The attack transaction never reached a decision.
    Undecided,
}

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub script: AttackScript,
    pub expected: Expected,
    pub outcome: AttackOutcome,
    pub tx: Option<String>,
    pub run: RunResult,
}

impl AttackReport {
    /// True if the system did what [`expected_outcome`] says it should.
    pub fn as_expected(&self) -> bool {
        match (self.expected, self.outcome) {
            (Expected::CaughtBy(r), AttackOutcome::Rejected(got)) => r == got,
            (Expected::UndetectableByDesign, AttackOutcome::Completed) => true,
            _ => false,
        }
    }
}

/// Cast of a staged attack, as node indices.
#[derive(Debug, Clone)]
struct Cast {
    endorser: usize,
    customer: usize,
    bystanders: Vec<usize>,
    extras: Vec<usize>,
}

fn cast(cfg: &ScenarioConfig, script: &AttackScript) -> Result<Cast, AdversaryError> {
    let bad = |m: String| AdversaryError::InvalidScript(m);
    let n_endorsers = cfg.endorser_count();
    let last = cfg.nodes;
    let extras_needed = match script.kind {
        AttackKind::StolenPhoneColocation => cfg.monitor_quorum + 1,
        AttackKind::ColludeMonitors => script.colluders,
        AttackKind::Impersonation => 1,
        _ => 0,
    };
    let endorser = match script.endorser {
        Some(id) => Simulation::node_of(id).ok_or_else(|| bad(format!("{id} is the bank")))?,
        None => 1,
    };
    if !(1..=n_endorsers).contains(&endorser) {
        return Err(bad(format!("{} is not an endorser", Simulation::entity(endorser))));
    }
    let customer = match script.customer {
        Some(id) => Simulation::node_of(id).ok_or_else(|| bad(format!("{id} is the bank")))?,
        None => last,
    };
    if customer <= n_endorsers || customer > last {
        return Err(bad(format!("{} is not a customer", Simulation::entity(customer))));
    }
    let mut pool = (n_endorsers + 1..=last).rev().filter(|&i| i != customer);
    let bystanders: Vec<usize> = pool.by_ref().take(cfg.monitor_quorum + 1).collect();
    let extras: Vec<usize> = pool.take(extras_needed).collect();
    if bystanders.len() < cfg.monitor_quorum + 1 || extras.len() < extras_needed {
        return Err(bad(format!("scenario has too few customers to stage {}", script.kind)));
    }
    Ok(Cast { endorser, customer, bystanders, extras })
}

/// Builds simulator hooks that make the scripted actors deviate.
pub fn inject(cfg: &ScenarioConfig, script: &AttackScript) -> Result<SimHooks, AdversaryError> {
    let c = cast(cfg, script)?;
    let t = script.trigger;
    let stage = SimTime(t.micros().saturating_sub(150_000_000));
    let graph = load_graph(cfg)?;
    let market = graph.position(market_vertex(&graph));
    let at = |dx: f64, dy: f64| Position::new(market.x + dx, market.y + dy);
    let ring = [(0.0, 45.0), (0.0, -45.0), (-35.0, 35.0), (35.0, -35.0), (-35.0, -35.0), (35.0, 35.0)];
    let mut pins = vec![
        Pin { node: c.endorser, position: at(30.0, 0.0), at: stage },
        Pin { node: c.customer, position: at(-30.0, 0.0), at: stage },
    ];
    for (k, &b) in c.bystanders.iter().enumerate() {
        let (dx, dy) = ring[k % ring.len()];
        pins.push(Pin { node: b, position: at(dx, dy), at: stage });
    }
    let limit = crate::net::cents(cfg.endorse_amount);
    let mut hooks = SimHooks {
        ties: vec![(c.customer, vec![(c.endorser, limit)])],
        isolate: vec![c.endorser],
        quiet: [c.customer].into_iter().chain(c.bystanders.iter().copied()).chain(c.extras.iter().copied()).collect(),
        monitors: vec![(c.endorser, c.bystanders.clone())],
        scripted: vec![ScriptedOrder { at: t, customer: c.customer, impersonate: None }],
        ..SimHooks::default()
    };
    let second = ScriptedOrder { at: t + SimTime::from_secs(20), customer: c.customer, impersonate: None };
    match script.kind {
        AttackKind::DoubleSpend => {
            hooks.behaviors.push((c.endorser, EndorserBehavior::ReuseCoins));
            hooks.scripted.push(second);
        }
        AttackKind::ResetRecovery => {
            hooks.behaviors.push((c.endorser, EndorserBehavior::RollBack));
            hooks.scripted.push(second);
        }
        AttackKind::Impersonation => hooks.scripted[0].impersonate = Some(c.extras[0]),
        AttackKind::StolenPhoneColocation => {
            for (k, &s) in c.extras.iter().enumerate() {
                pins.push(Pin { node: s, position: at(30.0 + k as f64, 1.0), at: stage });
            }
            hooks.monitors = vec![(c.endorser, c.extras.clone())];
        }
        AttackKind::ColludeCustomerEndorser => hooks.behaviors.push((c.endorser, EndorserBehavior::NoCoins)),
        AttackKind::ColludeCustomerMerchant => {}
        AttackKind::ColludeMonitors => {
            for (k, &s) in c.extras.iter().enumerate() {
                pins.push(Pin { node: s, position: at(20.0, 20.0 + 5.0 * k as f64), at: stage });
            }
            hooks.behaviors.push((c.endorser, EndorserBehavior::ColludingMonitors(c.extras.clone())));
            hooks.silent_from.push((c.endorser, stage));
        }
        AttackKind::ForgedCoin => hooks.behaviors.push((c.endorser, EndorserBehavior::ForgeCoin)),
    }
    hooks.pins = pins;
    Ok(hooks)
}

/// Index into the scripted orders of the purchase that carries the attack.
fn attack_order(kind: AttackKind) -> usize {
    match kind {
        AttackKind::DoubleSpend | AttackKind::ResetRecovery => 1,
        _ => 0,
    }
}

/// First rejection on the attacking endorser's path for `tx`, or the
/// merchant's final decision.
///
/// Other endorsers billed for the same order may refuse for reasons of
/// their own (a stale chain, say); those lines are not part of the attack.
/// The path is the order and decision, bills to `endorser`, the monitor
/// requests it passes along, and its endorsement.
pub fn trace_outcome(run: &RunResult, tx: &str, endorser: EntityId) -> AttackOutcome {
    let mut holders = BTreeSet::from([endorser]);
    let mut decided = None;
    for l in run.transcript.iter().filter(|l| l.tx.as_deref() == Some(tx)) {
        let on_path = match l.kind {
            MessageKind::TransactionOrder | MessageKind::Decision => true,
            MessageKind::Billing => l.receiver == Some(endorser),
            MessageKind::MonitorRequest => {
                let mine = holders.contains(&l.sender);
                if let (true, Some(m)) = (mine, l.receiver) {
                    holders.insert(m);
                }
                mine
            }
            MessageKind::Endorsement => l.sender == endorser,
            _ => false,
        };
        if !on_path {
            continue;
        }
        match l.verdict {
            Verdict::Reject(r) => return AttackOutcome::Rejected(r),
            Verdict::Ok if l.kind == MessageKind::Decision => decided = Some(AttackOutcome::Completed),
            _ => {}
        }
    }
    decided.unwrap_or(AttackOutcome::Undecided)
}

/// Runs one staged attack on top of `cfg`.
pub fn run_attack(cfg: &ScenarioConfig, script: &AttackScript) -> Result<AttackReport, AdversaryError> {
    let hooks = inject(cfg, script)?;
    let endorser = Simulation::entity(cast(cfg, script)?.endorser);
    let mut cfg = cfg.clone();
    let needed = script.trigger.as_secs_f64() + 120.0;
    if cfg.duration_s < needed {
        cfg.duration_s = needed;
    }
    let run = Simulation::new(cfg, hooks)?.run();
    let tx = run.scripted_txs.get(attack_order(script.kind)).cloned().flatten();
    let outcome = tx.as_deref().map_or(AttackOutcome::Undecided, |t| trace_outcome(&run, t, endorser));
    Ok(AttackReport { script: script.clone(), expected: expected_outcome(script.kind), outcome, tx, run })
}

/// Checks that a script's actors hold the roles it needs in a finished run.
pub fn roles_hold(report: &AttackReport) -> bool {
    let role = |id: Option<EntityId>| id.and_then(|id| report.run.roles.get(&id).copied());
    let merchant = report.run.roles.get(&Simulation::entity(MERCHANT)) == Some(&Role::Merchant);
    merchant
        && report.script.endorser.is_none_or(|_| role(report.script.endorser) == Some(Role::Endorser))
        && report.script.customer.is_none_or(|_| role(report.script.customer) == Some(Role::Customer))
}
