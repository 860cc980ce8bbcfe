use std::fmt::Write as _;
use std::str::FromStr;

use super::NetError;

/// How the merchant reaches endorsers and how much chain it checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BillingModeKey {
    FanOut,
    Level,
}

impl FromStr for BillingModeKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fanout" => Ok(Self::FanOut),
            "level" => Ok(Self::Level),
            _ => Err(format!("expected fanout or level, got {s:?}")),
        }
    }
}

impl std::fmt::Display for BillingModeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FanOut => "fanout",
            Self::Level => "level",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChainModeKey {
    Light,
    Full,
}

impl FromStr for ChainModeKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "light" => Ok(Self::Light),
            "full" => Ok(Self::Full),
            _ => Err(format!("expected light or full, got {s:?}")),
        }
    }
}

impl std::fmt::Display for ChainModeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Light => "light",
            Self::Full => "full",
        })
    }
}

macro_rules! scenario_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Scenario parameters. The text form is one `key = value` per line
        /// with `#` comments; keys are the field names.
        #[derive(Debug, Clone, PartialEq)]
        pub struct ScenarioConfig {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for ScenarioConfig {
            fn default() -> Self {
                ScenarioConfig { $( $name: $default, )* }
            }
        }

        impl ScenarioConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($name), )*];

            /// Sets one key from its text value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), NetError> {
                match key {
                    $( stringify!($name) => {
                        self.$name = value.parse::<$ty>().map_err(|e| NetError::Config(format!("{key}: {e}")))?;
                    } )*
                    _ => return Err(NetError::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $( stringify!($name) => Some(self.$name.to_string()), )*
                    _ => None,
                }
            }
        }
    };
}

scenario_config! {
    /// Side of the square disaster area, metres.
    area_m: f64 = 3000.0,
    /// Vertices per side of the default grid road network.
    grid: usize = 7,
    /// Optional road-graph file replacing the grid.
    road_graph: String = String::new(),
    /// Mobile nodes (customers and endorsers); the merchant is extra.
    nodes: usize = 100,
    speed_min: f64 = 1.0,
    speed_max: f64 = 1.4,
    pause_s: f64 = 10.0,
    range_m: f64 = 100.0,
    bandwidth_bps: f64 = 1_000_000.0,
    buffer_kb: usize = 100,
    hello_interval_s: f64 = 10.0,
    staleness_s: f64 = 60.0,
    /// Fraction of nodes that are endorsers.
    endorser_ratio: f64 = 0.04,
    monitor_quorum: usize = 3,
    /// Dollars per purchase.
    tx_amount: f64 = 2.0,
    /// Dollars each endorser guarantees per purchase.
    endorse_amount: f64 = 2.0,
    /// Dollars of e-coins per endorser.
    coin_total: f64 = 3000.0,
    coin_value: f64 = 2.0,
    customer_balance: f64 = 50.0,
    seed: u64 = 1,
    duration_s: f64 = 14_400.0,
    /// Scales the truck period and dispute window together.
    time_scale: f64 = 1.0,
    truck_period_s: f64 = 172_800.0,
    dispute_window_s: f64 = 172_800.0,
    /// Mean time between a customer's purchases.
    order_mean_s: f64 = 300.0,
    /// Probability that a fresh waypoint is the market.
    market_bias: f64 = 0.5,
    /// Probability that a given endorser endorses a given node.
    endorse_prob: f64 = 0.2,
    /// 1 = primary endorsers only, 2 = primaries and secondaries.
    endorsement_levels: u8 = 2,
    billing_mode: BillingModeKey = BillingModeKey::FanOut,
    chain_mode: ChainModeKey = ChainModeKey::Light,
    /// Merchant gives up on an order this long after billing.
    bill_timeout_s: f64 = 30.0,
    /// Level search waits this long before looking for secondaries.
    level_timeout_s: f64 = 10.0,
    gps_noise_min: f64 = 4.9,
    gps_noise_max: f64 = 10.0,
    incentive_bps: u64 = 300,
    similarity_eps: f64 = 20.0,
    similarity_threshold: f64 = 0.9,
    similarity_window: usize = 12,
    /// Shared samples needed before two histories can count as similar.
    similarity_min_shared: usize = 6,
    bloom_fpr: f64 = 0.01,
    order_compute_s: f64 = 0.006,
    merchant_bill_s: f64 = 0.07,
    endorse_s: f64 = 0.5,
    monitor_s: f64 = 0.1,
    merchant_check_s: f64 = 0.03,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut c = ScenarioConfig::default();
        c.apply(text)?;
        Ok(c)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<(), NetError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NetError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            writeln!(out, "{k} = {}", self.get(k).unwrap()).unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.nodes < 2 {
            return bad("nodes must be at least 2");
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max) {
            return bad("need 0 < speed_min <= speed_max");
        }
        if !(0.0..=1.0).contains(&self.endorser_ratio) || !(0.0..=1.0).contains(&self.market_bias) {
            return bad("ratios must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.endorse_prob) {
            return bad("endorse_prob must lie in [0, 1]");
        }
        if self.monitor_quorum == 0 {
            return bad("monitor_quorum must be positive");
        }
        if !(1..=2).contains(&self.endorsement_levels) {
            return bad("endorsement_levels must be 1 or 2");
        }
        if self.range_m <= 0.0 || self.bandwidth_bps <= 0.0 || self.hello_interval_s <= 0.0 {
            return bad("range, bandwidth and hello interval must be positive");
        }
        if self.duration_s <= 0.0 || self.time_scale <= 0.0 || self.order_mean_s <= 0.0 {
            return bad("duration, time_scale and order_mean_s must be positive");
        }
        if self.tx_amount <= 0.0 || self.coin_value <= 0.0 || self.endorse_amount <= 0.0 {
            return bad("amounts must be positive");
        }
        if !(0.0 < self.bloom_fpr && self.bloom_fpr < 1.0) {
            return bad("bloom_fpr must lie in (0, 1)");
        }
        if self.gps_noise_min > self.gps_noise_max || self.gps_noise_min < 0.0 {
            return bad("need 0 <= gps_noise_min <= gps_noise_max");
        }
        Ok(())
    }

    pub fn endorser_count(&self) -> usize {
        ((self.nodes as f64 * self.endorser_ratio).round() as usize).clamp(1, self.nodes - 1)
    }
}

/// Dollars to cents.
pub fn cents(dollars: f64) -> u64 {
    (dollars * 100.0).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.endorser_count(), 4);
        assert_eq!(cents(c.coin_total) / cents(c.coin_value), 1500);
    }

    #[test]
    fn parse_overrides_and_errors() {
        let c = ScenarioConfig::parse("# scenario\nnodes = 200\n billing_mode = level # baseline\nchain_mode=full\n")
            .unwrap();
        assert_eq!(c.nodes, 200);
        assert_eq!(c.billing_mode, BillingModeKey::Level);
        assert_eq!(c.chain_mode, ChainModeKey::Full);
        assert!(ScenarioConfig::parse("bogus = 1").is_err());
        assert!(ScenarioConfig::parse("nodes = many").is_err());
        assert!(ScenarioConfig::parse("nodes 5").is_err());
        assert!(ScenarioConfig::parse("speed_min = 2\nspeed_max = 1").is_err());
        assert!(ScenarioConfig::parse("endorsement_levels = 3").is_err());
    }
}
