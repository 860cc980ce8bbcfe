use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{cents, BillingModeKey, ChainModeKey, ScenarioConfig};
use super::graph::{RoadGraph, VertexId};
use super::mobility::{MobilityParams, MobilityState};
use super::queue::EventQueue;
use super::radio::{RadioModel, StoreBuffer, Topology};
use super::truck::TruckState;
use super::NetError;
use crate::crypto::{SecretKey, Signature};
use crate::ledger::{
    chain_size_bytes, merchant_view_bytes, CoinId, ECoin, Event, EventChain, QuorumPolicy, SizeMode, SpentCoinFilter,
};
use crate::protocol::{
    check_endorsement, customer_order, endorser_abort, endorser_endorse, endorser_finalize, hello_exchange,
    merchant_process_order, monitor_countersign, sign_endorsement, Bank, BankConfig, Billing, BillingMode,
    CustomerState, DeliveryReceipt, Directory, EndorsementDraft, EndorsementMessage, EndorserLink, EndorserState,
    LocationHistory, MessageKind, MonitorCheck, MonitorVerdict, OrderVerdict, RegistrationRequest, RejectReason, Role,
    SettlementBundle, SimilarityParams, TransactionOrder, TranscriptLine, TxId, Verdict,
};
use crate::{EntityId, Position, SimTime};

/// Node index of the merchant. Node `i` is entity `i + 1`; the bank is 0.
pub const MERCHANT: usize = 0;

const TICK: SimTime = SimTime(1_000_000);

/// How an endorser behaves when billed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EndorserBehavior {
    #[default]
    Honest,
    /// Spends the coins of its previous endorsement again.
    ReuseCoins,
    /// Backs up chain and wallet on its first endorsement and restores the
    /// backup before the second.
    RollBack,
    /// Endorses with no coins attached.
    NoCoins,
    /// Attaches a coin it signed itself.
    ForgeCoin,
    /// Has these nodes countersign whatever it proposes.
    ColludingMonitors(Vec<usize>),
}

/// Moves a node to a fixed spot at a given time and keeps it there.
#[derive(Debug, Clone, PartialEq)]
pub struct Pin {
    pub node: usize,
    pub position: Position,
    pub at: SimTime,
}

/// A purchase placed at a fixed time regardless of range to the merchant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedOrder {
    pub at: SimTime,
    pub customer: usize,
    /// Node whose key signs the order instead of the customer's.
    pub impersonate: Option<usize>,
}

/// Deviations from the randomly generated world, used to stage attacks.
#[derive(Debug, Clone, Default)]
pub struct SimHooks {
    /// Replaces the endorser list of a node: `(node, [(endorser, limit cents)])`.
    pub ties: Vec<(usize, Vec<(usize, u64)>)>,
    pub pins: Vec<Pin>,
    pub behaviors: Vec<(usize, EndorserBehavior)>,
    /// Fixed monitor candidates for an endorser's spends.
    pub monitors: Vec<(usize, Vec<usize>)>,
    /// Nodes that only buy through scripted orders.
    pub quiet: Vec<usize>,
    pub scripted: Vec<ScriptedOrder>,
    /// Endorsers that never receive coins back from the bank.
    pub cut_off: Vec<usize>,
    /// Endorsers left out of every randomly drawn endorsement tie.
    pub isolate: Vec<usize>,
    /// Endorsers that stop sending hellos from the given time.
    pub silent_from: Vec<(usize, SimTime)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStat {
    pub owner: EntityId,
    pub blocks: usize,
    pub full_bytes: usize,
    pub light_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub transcript: Vec<TranscriptLine>,
    pub roles: BTreeMap<EntityId, Role>,
    pub chains: Vec<ChainStat>,
    /// Endorser chains at the end of the run, with the keys to check them.
    pub final_chains: Vec<Arc<EventChain>>,
    pub directory: Directory,
    /// Messages evicted from full store-carry-forward buffers.
    pub buffer_drops: usize,
    /// Buffered messages discarded after their deadline.
    pub expired: usize,
    /// Longest single hop used by any delivered message, metres.
    pub max_hop_span: f64,
    /// Sum of every posting in the bank journal (zero when money is conserved).
    pub journal_sum: i64,
    pub settled: usize,
    pub fraud: Vec<EntityId>,
    /// Transaction ids of the scripted orders, in script order (None if the
    /// order could not be built).
    pub scripted_txs: Vec<Option<String>>,
    pub truck_visits: Vec<(usize, SimTime)>,
}

/// The scenario's road graph: the named file, or the default grid.
pub fn load_graph(cfg: &ScenarioConfig) -> Result<RoadGraph, NetError> {
    if cfg.road_graph.is_empty() {
        return RoadGraph::grid(cfg.grid, cfg.area_m);
    }
    let text = std::fs::read_to_string(&cfg.road_graph)
        .map_err(|e| NetError::Io { path: cfg.road_graph.clone(), reason: e.to_string() })?;
    RoadGraph::parse(&text)
}

/// The market sits at the vertex nearest the centre of the map.
pub fn market_vertex(graph: &RoadGraph) -> VertexId {
    let (lo, hi) = graph.bounds();
    graph.nearest_vertex(Position::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0))
}

/// Short printable transaction id used in transcripts.
pub fn tx_label(tx: &TxId) -> String {
    tx[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
enum Payload {
    Order(Arc<TransactionOrder>),
    Bill(Box<Billing>),
    Endorsement(Box<EndorsementMessage>),
}

#[derive(Debug, Clone)]
struct Packet {
    from: usize,
    to: usize,
    size: usize,
    expires: SimTime,
    payload: Payload,
}

#[derive(Debug)]
enum Ev {
    Tick,
    Hello,
    Intent(usize),
    Scripted(usize),
    Pin(usize),
    Transmit(Box<Packet>),
    Deliver(Box<Packet>, u32),
    MerchantBill(TxId),
    MonitorStart(usize),
    MonitorStep(usize, usize),
    MonitorDone(usize),
    MerchantCheck(Box<EndorsementMessage>, usize, u32),
    LevelTimeout(TxId),
    Deadline(TxId),
    TruckStop(usize, u64),
    TruckBank(u64),
}

struct Spend {
    draft: EndorsementDraft,
    candidates: Vec<usize>,
    sigs: Vec<Signature>,
    colluding: bool,
    holder: usize,
}

struct Node {
    id: EntityId,
    role: Role,
    mobility: MobilityState,
    key: SecretKey,
    noise_radius: f64,
    history: LocationHistory,
    reported: Position,
    customer: Option<CustomerState>,
    endorser: Option<EndorserState>,
    wants_to_buy: bool,
    awaiting: bool,
    known_heads: BTreeMap<EntityId, SimTime>,
    buffer: StoreBuffer<Packet>,
    bills: VecDeque<Billing>,
    spend: Option<Spend>,
    behavior: EndorserBehavior,
    monitors: Option<Vec<usize>>,
    quiet: bool,
    silent_from: Option<SimTime>,
    backup: Option<(Arc<EventChain>, Vec<ECoin>)>,
    restored: bool,
    last_coins: Option<Vec<ECoin>>,
}

struct OrderState {
    order: Arc<TransactionOrder>,
    customer: usize,
    pending_bills: Vec<Billing>,
    decided: bool,
    cover: u64,
    accepted: Vec<(EntityId, Vec<ECoin>, u64)>,
}

struct Rngs {
    mobility: ChaCha8Rng,
    orders: ChaCha8Rng,
    noise: ChaCha8Rng,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

/// One run of the disaster-area marketplace.
pub struct Simulation {
    cfg: ScenarioConfig,
    graph: RoadGraph,
    market: VertexId,
    radio: RadioModel,
    mobility: MobilityParams,
    policy: QuorumPolicy,
    similarity: SimilarityParams,
    billing: BillingMode,
    chain_mode: SizeMode,
    slot: SimTime,
    end: SimTime,
    nodes: Vec<Node>,
    bank: Bank,
    dir: Directory,
    merchant_seen: BTreeSet<CoinId>,
    orders: BTreeMap<TxId, OrderState>,
    bundles: Vec<SettlementBundle>,
    releases: Vec<(EntityId, Vec<ECoin>)>,
    truck: TruckState,
    truck_releases: Vec<(EntityId, Vec<ECoin>)>,
    topology: Topology,
    queue: EventQueue<Ev>,
    rngs: Rngs,
    transcript: Vec<TranscriptLine>,
    scripted: Vec<ScriptedOrder>,
    scripted_txs: Vec<Option<String>>,
    pins: Vec<Pin>,
    cut_off: BTreeSet<EntityId>,
    buffer_drops: usize,
    expired: usize,
    max_hop_span: f64,
    settled: usize,
    fraud: Vec<EntityId>,
    truck_visits: Vec<(usize, SimTime)>,
}

impl Simulation {
    /// Builds the world described by `cfg`, loading the road graph file if
    /// one is named.
    pub fn new(cfg: ScenarioConfig, hooks: SimHooks) -> Result<Self, NetError> {
        let graph = load_graph(&cfg)?;
        Self::with_graph(cfg, graph, hooks)
    }

    pub fn with_graph(cfg: ScenarioConfig, graph: RoadGraph, hooks: SimHooks) -> Result<Self, NetError> {
        cfg.validate()?;
        let mut setup = stream(cfg.seed, 1);
        let mut ties_rng = stream(cfg.seed, 5);
        let mut rngs = Rngs { mobility: stream(cfg.seed, 2), orders: stream(cfg.seed, 3), noise: stream(cfg.seed, 4) };
        let market = market_vertex(&graph);
        let scale = cfg.time_scale;
        let bank_cfg = BankConfig {
            coin_value: cents(cfg.coin_value).max(1),
            incentive_bps: cfg.incentive_bps,
            dispute_window: SimTime::from_secs_f64(cfg.dispute_window_s * scale),
            temp_ids_per_customer: ((cfg.duration_s / cfg.order_mean_s).ceil() as usize + 16).min(1024),
            ..BankConfig::default()
        };
        let mut bank = Bank::new(EntityId(0), bank_cfg, &mut setup);
        let n = cfg.nodes + 1;
        let n_endorsers = cfg.endorser_count();
        let role_of = |i: usize| match i {
            MERCHANT => Role::Merchant,
            i if i <= n_endorsers => Role::Endorser,
            _ => Role::Customer,
        };
        let limit = cents(cfg.endorse_amount);
        let mut endorsers_of: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        for e in 1..=n_endorsers {
            for (x, list) in endorsers_of.iter_mut().enumerate().skip(1) {
                if x != e && ties_rng.gen_bool(cfg.endorse_prob) {
                    list.push((e, limit));
                }
            }
        }
        let open: Vec<usize> = (1..=n_endorsers).filter(|e| !hooks.isolate.contains(e)).collect();
        // Everyone registered with at least one endorser before the disaster.
        for (x, list) in endorsers_of.iter_mut().enumerate().skip(1) {
            list.retain(|(e, _)| open.contains(e));
            let choices: Vec<usize> = open.iter().copied().filter(|&e| e != x).collect();
            if list.is_empty() && !choices.is_empty() {
                list.push((choices[ties_rng.gen_range(0..choices.len())], limit));
            }
        }
        for (x, list) in &hooks.ties {
            endorsers_of[*x] = list.clone();
        }
        let mut creds = Vec::with_capacity(n);
        for i in 0..n {
            let role = role_of(i);
            let req = RegistrationRequest {
                id: EntityId(i as u16 + 1),
                role,
                deposit: if role == Role::Endorser { cents(cfg.coin_total) } else { 0 },
                balance: if role == Role::Customer { cents(cfg.customer_balance) } else { 0 },
                photo: format!("face-of-{i}").into_bytes(),
                endorsers: endorsers_of[i]
                    .iter()
                    .map(|&(e, limit)| EndorserLink { endorser: EntityId(e as u16 + 1), limit })
                    .collect(),
            };
            creds.push((req.photo.clone(), bank.register(&req, SimTime::ZERO, &mut setup)?));
        }
        let dir = bank.directory().clone();
        let mobility = MobilityParams { speed_min: cfg.speed_min, speed_max: cfg.speed_max, pause: cfg.pause_s };
        let behaviors: BTreeMap<usize, EndorserBehavior> = hooks.behaviors.iter().cloned().collect();
        let monitors: BTreeMap<usize, Vec<usize>> = hooks.monitors.iter().cloned().collect();
        let coins_per_endorser = (cents(cfg.coin_total) / cents(cfg.coin_value).max(1)) as usize + 1;
        let mut nodes = Vec::with_capacity(n);
        for (i, (photo_blob, c)) in creds.into_iter().enumerate() {
            let role = role_of(i);
            let id = c.id;
            let mob = if i == MERCHANT {
                MobilityState::stationary(graph.position(market), market)
            } else {
                let start = rngs.mobility.gen_range(0..graph.len());
                let mut m = MobilityState::at_vertex(&graph, start, &mobility);
                m.pause_remaining = rngs.mobility.gen_range(0.0..=mobility.pause);
                m
            };
            let customer = (role == Role::Customer).then(|| CustomerState {
                id,
                key: c.keys.private.clone(),
                photo: c.photo.clone(),
                photo_blob,
                tree: {
                    let mut t = bank.issue_tree(id, SimTime::ZERO).expect("registered");
                    if cfg.endorsement_levels < 2 {
                        t = crate::protocol::EndorsementTree::sign(
                            bank.signing_key(),
                            id,
                            t.primaries.clone(),
                            vec![Vec::new(); t.primaries.len()],
                            SimTime::ZERO,
                        )
                        .expect("bank key does not expire");
                    }
                    t
                },
                temp_ids: c.temp_ids.iter().cloned().collect(),
            });
            let endorser = (role == Role::Endorser).then(|| {
                let filter =
                    SpentCoinFilter::new(coins_per_endorser, cfg.bloom_fpr).expect("validated false-positive rate");
                EndorserState::new(id, c.keys.private.clone(), c.coins.clone(), EventChain::new(id, filter))
            });
            let noise_radius = rngs.noise.gen_range(cfg.gps_noise_min..=cfg.gps_noise_max);
            nodes.push(Node {
                id,
                role,
                reported: mob.position,
                mobility: mob,
                key: c.keys.private,
                noise_radius,
                history: LocationHistory::new(cfg.similarity_window),
                customer,
                endorser,
                wants_to_buy: false,
                awaiting: false,
                known_heads: BTreeMap::new(),
                buffer: StoreBuffer::new(cfg.buffer_kb * 1024),
                bills: VecDeque::new(),
                spend: None,
                behavior: behaviors.get(&i).cloned().unwrap_or_default(),
                monitors: monitors.get(&i).cloned(),
                quiet: hooks.quiet.contains(&i),
                silent_from: hooks.silent_from.iter().find(|s| s.0 == i).map(|s| s.1),
                backup: None,
                restored: false,
                last_coins: None,
            });
        }
        let truck = TruckState::over_regions(&graph, 3, SimTime::from_secs_f64(cfg.truck_period_s * scale));
        let positions: Vec<Position> = nodes.iter().map(|n| n.mobility.position).collect();
        let topology = Topology::build(&positions, &vec![true; n], cfg.range_m);
        let billing = match (cfg.billing_mode, cfg.endorsement_levels) {
            (BillingModeKey::FanOut, l) if l >= 2 => BillingMode::FanOut,
            _ => BillingMode::LevelSearch,
        };
        let chain_mode = match cfg.chain_mode {
            ChainModeKey::Light => SizeMode::Lightweight,
            ChainModeKey::Full => SizeMode::Full,
        };
        let mut sim = Simulation {
            graph,
            market,
            radio: RadioModel { range: cfg.range_m, bandwidth_bps: cfg.bandwidth_bps },
            mobility,
            policy: QuorumPolicy { quorum: cfg.monitor_quorum, staleness: SimTime::from_secs_f64(cfg.staleness_s) },
            similarity: SimilarityParams {
                epsilon: cfg.similarity_eps,
                threshold: cfg.similarity_threshold,
                min_shared: cfg.similarity_min_shared,
            },
            billing,
            chain_mode,
            slot: SimTime::from_secs_f64(cfg.hello_interval_s),
            end: SimTime::from_secs_f64(cfg.duration_s),
            nodes,
            bank,
            dir,
            merchant_seen: BTreeSet::new(),
            orders: BTreeMap::new(),
            bundles: Vec::new(),
            releases: Vec::new(),
            truck,
            truck_releases: Vec::new(),
            topology,
            queue: EventQueue::default(),
            rngs,
            transcript: Vec::new(),
            scripted_txs: vec![None; hooks.scripted.len()],
            scripted: hooks.scripted,
            pins: hooks.pins,
            cut_off: hooks.cut_off.iter().map(|&i| EntityId(i as u16 + 1)).collect(),
            buffer_drops: 0,
            expired: 0,
            max_hop_span: 0.0,
            settled: 0,
            fraud: Vec::new(),
            truck_visits: Vec::new(),
            cfg,
        };
        sim.schedule_initial();
        Ok(sim)
    }

    pub fn entity(node: usize) -> EntityId {
        EntityId(node as u16 + 1)
    }

    pub fn node_of(id: EntityId) -> Option<usize> {
        (id.0 as usize).checked_sub(1)
    }

    fn schedule_initial(&mut self) {
        self.queue.push(TICK, Ev::Tick);
        self.queue.push(self.slot, Ev::Hello);
        for i in 0..self.nodes.len() {
            if self.nodes[i].role == Role::Customer && !self.nodes[i].quiet {
                let t = self.exp_delay();
                self.queue.push(t, Ev::Intent(i));
            }
        }
        for k in 0..self.scripted.len() {
            self.queue.push(self.scripted[k].at, Ev::Scripted(k));
        }
        for k in 0..self.pins.len() {
            self.queue.push(self.pins[k].at, Ev::Pin(k));
        }
        for i in 0..self.truck.stops.len() {
            self.queue.push(self.truck.arrival(i, 0), Ev::TruckStop(i, 0));
        }
        self.queue.push(self.truck.bank_visit(1), Ev::TruckBank(1));
    }

    fn exp_delay(&mut self) -> SimTime {
        let u: f64 = self.rngs.orders.gen();
        SimTime::from_secs_f64(-self.cfg.order_mean_s * (1.0 - u).ln())
    }

    pub fn run(mut self) -> RunResult {
        while let Some(t) = self.queue.peek_time() {
            if t > self.end {
                break;
            }
            let (now, ev) = self.queue.pop().expect("peeked");
            self.handle(now, ev);
        }
        self.finish()
    }

    fn handle(&mut self, now: SimTime, ev: Ev) {
        match ev {
            Ev::Tick => self.tick(now),
            Ev::Hello => self.hello_round(now),
            Ev::Intent(c) => {
                let node = &mut self.nodes[c];
                if node.customer.as_ref().is_some_and(|c| !c.temp_ids.is_empty()) {
                    node.wants_to_buy = true;
                    node.mobility.redirect(&self.graph, self.market);
                }
            }
            Ev::Scripted(k) => self.scripted_order(k, now),
            Ev::Pin(k) => {
                let p = self.pins[k].clone();
                let v = self.graph.nearest_vertex(p.position);
                self.nodes[p.node].mobility = MobilityState::stationary(p.position, v);
            }
            Ev::Transmit(p) => self.send(*p, now),
            Ev::Deliver(p, hops) => self.deliver(*p, hops, now),
            Ev::MerchantBill(tx) => self.merchant_bill(tx, now),
            Ev::MonitorStart(e) => self.monitor_start(e, now),
            Ev::MonitorStep(e, i) => self.monitor_step(e, i, now),
            Ev::MonitorDone(e) => self.monitor_done(e, now),
            Ev::MerchantCheck(msg, from, hops) => self.merchant_check(*msg, from, hops, now),
            Ev::LevelTimeout(tx) => self.level_search(tx, now),
            Ev::Deadline(tx) => {
                if self.orders.get(&tx).is_some_and(|o| !o.decided) {
                    self.decide(tx, Err(RejectReason::InsufficientCover), now);
                }
            }
            Ev::TruckStop(i, round) => self.truck_stop(i, round, now),
            Ev::TruckBank(round) => self.truck_bank(round, now),
        }
    }

    fn log(&mut self, line: TranscriptLine) {
        self.transcript.push(line);
    }

    #[allow(clippy::too_many_arguments)]
    fn line(
        &mut self,
        now: SimTime,
        from: usize,
        to: Option<usize>,
        kind: MessageKind,
        size: usize,
        merchant_bytes: usize,
        hops: u32,
        verdict: Verdict,
        tx: Option<&TxId>,
    ) {
        self.log(TranscriptLine {
            time: now,
            sender: Self::entity(from),
            receiver: to.map(Self::entity),
            kind,
            size_bytes: size,
            merchant_bytes,
            hops,
            verdict,
            tx: tx.map(tx_label),
        });
    }

    fn tick(&mut self, now: SimTime) {
        let graph = &self.graph;
        let market = self.market;
        let bias = self.cfg.market_bias;
        let n_vertices = graph.len();
        for node in self.nodes.iter_mut().skip(1) {
            node.mobility.step(graph, TICK.as_secs_f64(), &self.mobility, &mut self.rngs.mobility, |r, _| {
                if r.gen_bool(bias) {
                    market
                } else {
                    r.gen_range(0..n_vertices)
                }
            });
        }
        let positions: Vec<Position> = self.nodes.iter().map(|n| n.mobility.position).collect();
        self.topology = Topology::build(&positions, &vec![true; positions.len()], self.cfg.range_m);
        self.retry_buffers(now);
        let merchant_pos = self.nodes[MERCHANT].mobility.position;
        for c in 1..self.nodes.len() {
            let node = &self.nodes[c];
            if node.wants_to_buy && !node.awaiting && self.radio.in_range(node.mobility.position, merchant_pos) {
                self.place_order(c, None, now);
            }
        }
        self.queue.push(now + TICK, Ev::Tick);
    }

    /// Builds an order for customer `c` (signed by `signer` if given) and
    /// sends it to the merchant. Returns its id.
    fn place_order(&mut self, c: usize, signer: Option<usize>, now: SimTime) -> Option<TxId> {
        let amount = cents(self.cfg.tx_amount);
        let forged_key = signer.map(|s| self.nodes[s].key.clone());
        let merchant_id = Self::entity(MERCHANT);
        let node = &mut self.nodes[c];
        let cust = node.customer.as_mut()?;
        let order = match forged_key {
            None => customer_order(cust, self.dir.bank_id, merchant_id, 1, 1, amount, now).ok()?,
            Some(key) => {
                let mut fake = cust.clone();
                fake.key = key;
                let o = customer_order(&mut fake, self.dir.bank_id, merchant_id, 1, 1, amount, now).ok()?;
                cust.temp_ids = fake.temp_ids;
                o
            }
        };
        node.wants_to_buy = false;
        node.awaiting = true;
        let order = Arc::new(order);
        let tx = order.tx_id();
        self.line(now, c, None, MessageKind::Initiate, 0, 0, 0, Verdict::None, Some(&tx));
        let packet = Packet {
            from: c,
            to: MERCHANT,
            size: MessageKind::TransactionOrder.frame_bytes(),
            expires: now + SimTime::from_secs_f64(self.cfg.bill_timeout_s),
            payload: Payload::Order(order),
        };
        self.queue.push(now + SimTime::from_secs_f64(self.cfg.order_compute_s), Ev::Transmit(Box::new(packet)));
        Some(tx)
    }

    fn scripted_order(&mut self, k: usize, now: SimTime) {
        let s = self.scripted[k].clone();
        self.nodes[s.customer].awaiting = false;
        self.scripted_txs[k] = self.place_order(s.customer, s.impersonate, now).map(|tx| tx_label(&tx));
    }

    fn send(&mut self, p: Packet, now: SimTime) {
        match self.topology.route(p.from, p.to) {
            Some(path) => {
                self.max_hop_span = self.max_hop_span.max(self.topology.max_span(&path));
                let hops = (path.len() - 1) as u32;
                let latency = SimTime(self.radio.hop_latency(p.size).micros() * hops as u64);
                self.queue.push(now + latency, Ev::Deliver(Box::new(p), hops));
            }
            None => {
                let size = p.size;
                let from = p.from;
                self.buffer_drops += self.nodes[from].buffer.push(p, size).len();
            }
        }
    }

    fn retry_buffers(&mut self, now: SimTime) {
        for i in 0..self.nodes.len() {
            if self.nodes[i].buffer.is_empty() {
                continue;
            }
            let waiting = self.nodes[i].buffer.drain_where(|_| true);
            for p in waiting {
                if p.expires < now {
                    self.expired += 1;
                } else if self.topology.route(p.from, p.to).is_some() {
                    self.send(p, now);
                } else {
                    let size = p.size;
                    self.buffer_drops += self.nodes[i].buffer.push(p, size).len();
                }
            }
        }
    }

    fn deliver(&mut self, p: Packet, hops: u32, now: SimTime) {
        match p.payload {
            Payload::Order(order) => self.order_arrives(order, p.from, p.size, hops, now),
            Payload::Bill(b) => {
                self.nodes[p.to].bills.push_back(*b);
                self.next_bill(p.to, p.from, hops, now);
            }
            Payload::Endorsement(m) => {
                let at = now + SimTime::from_secs_f64(self.cfg.merchant_check_s);
                self.queue.push(at, Ev::MerchantCheck(m, p.from, hops));
            }
        }
    }

    fn order_arrives(&mut self, order: Arc<TransactionOrder>, from: usize, size: usize, hops: u32, now: SimTime) {
        let tx = order.tx_id();
        let deadline = now + SimTime::from_secs_f64(self.cfg.bill_timeout_s);
        let verdict = merchant_process_order(&self.nodes[MERCHANT].key, &order, &self.dir, self.billing, now, deadline);
        let customer = Self::node_of(order.customer).unwrap_or(from);
        let v = match &verdict {
            OrderVerdict::Bill(_) => Verdict::Ok,
            OrderVerdict::Reject(r) => Verdict::Reject(*r),
        };
        self.line(now, from, Some(MERCHANT), MessageKind::TransactionOrder, size, 0, hops, v, Some(&tx));
        let bills = match verdict {
            OrderVerdict::Bill(b) => b,
            OrderVerdict::Reject(_) => Vec::new(),
        };
        self.orders.insert(
            tx,
            OrderState { order, customer, pending_bills: bills, decided: false, cover: 0, accepted: Vec::new() },
        );
        if let Verdict::Reject(r) = v {
            self.decide(tx, Err(r), now);
        } else {
            self.queue.push(now + SimTime::from_secs_f64(self.cfg.merchant_bill_s), Ev::MerchantBill(tx));
        }
    }

    fn merchant_bill(&mut self, tx: TxId, now: SimTime) {
        let Some(o) = self.orders.get_mut(&tx) else {
            return;
        };
        let bills = std::mem::take(&mut o.pending_bills);
        let deadline = bills.first().map(|b| b.deadline).unwrap_or(now);
        for b in bills {
            self.send_bill(b, now);
        }
        self.queue.push(deadline, Ev::Deadline(tx));
        if self.billing == BillingMode::LevelSearch && self.cfg.endorsement_levels >= 2 {
            self.queue.push(now + SimTime::from_secs_f64(self.cfg.level_timeout_s), Ev::LevelTimeout(tx));
        }
    }

    fn send_bill(&mut self, b: Billing, now: SimTime) {
        let Some(to) = Self::node_of(b.endorser) else {
            return;
        };
        let size = MessageKind::Billing.frame_bytes();
        let packet = Packet { from: MERCHANT, to, size, expires: b.deadline, payload: Payload::Bill(Box::new(b)) };
        self.send(packet, now);
    }

    /// Level search: ask around for secondary endorsers once primaries have
    /// had their chance.
    fn level_search(&mut self, tx: TxId, now: SimTime) {
        let Some(o) = self.orders.get(&tx) else {
            return;
        };
        if o.decided {
            return;
        }
        let order = Arc::clone(&o.order);
        let frame = MessageKind::SecondarySearch.frame_bytes();
        self.line(now, MERCHANT, None, MessageKind::SecondarySearch, frame, frame, 0, Verdict::None, Some(&tx));
        let deadline = now.max(now + SimTime::from_secs_f64(self.cfg.bill_timeout_s - self.cfg.level_timeout_s));
        let links = order.tree.secondary_links();
        let bills = crate::protocol::bill_endorsers(&self.nodes[MERCHANT].key, &order, &links, 1, now, deadline);
        for b in bills {
            let Some(s) = Self::node_of(b.endorser) else {
                continue;
            };
            let Some(path) = self.topology.route(MERCHANT, s) else {
                continue;
            };
            let hops = (path.len() - 1) as u32;
            let rtt = SimTime(self.radio.hop_latency(frame).micros() * 2 * hops as u64);
            let size = MessageKind::SearchReply.frame_bytes();
            self.line(
                now + rtt,
                s,
                Some(MERCHANT),
                MessageKind::SearchReply,
                size,
                size,
                hops,
                Verdict::None,
                Some(&tx),
            );
            let packet = Packet {
                from: MERCHANT,
                to: s,
                size: MessageKind::Billing.frame_bytes(),
                expires: deadline,
                payload: Payload::Bill(Box::new(b)),
            };
            self.queue.push(now + rtt, Ev::Transmit(Box::new(packet)));
        }
        self.queue.push(deadline, Ev::Deadline(tx));
    }

    fn gps(&mut self, i: usize) -> Position {
        let r = self.nodes[i].noise_radius * self.rngs.noise.gen::<f64>().sqrt();
        let a = self.rngs.noise.gen_range(0.0..std::f64::consts::TAU);
        let p = self.nodes[i].mobility.position;
        Position::new(p.x + r * a.cos(), p.y + r * a.sin())
    }

    /// Starts on the next queued bill if the endorser is idle.
    fn next_bill(&mut self, e: usize, from: usize, hops: u32, now: SimTime) {
        while self.nodes[e].spend.is_none() {
            let Some(bill) = self.nodes[e].bills.pop_front() else {
                return;
            };
            let size = MessageKind::Billing.frame_bytes();
            let mb = if bill.level > 0 { size } else { 0 };
            if bill.deadline < now || self.nodes[e].endorser.is_none() {
                self.line(now, from, Some(e), MessageKind::Billing, size, mb, hops, Verdict::None, Some(&bill.tx));
                continue;
            }
            let gps = self.gps(e);
            let result = self.draft(e, &bill, gps, now);
            let v = match &result {
                Ok(_) => Verdict::Ok,
                Err(r) => Verdict::Reject(*r),
            };
            self.line(now, from, Some(e), MessageKind::Billing, size, mb, hops, v, Some(&bill.tx));
            if let Ok((draft, colluding)) = result {
                self.nodes[e].spend =
                    Some(Spend { draft, candidates: Vec::new(), sigs: Vec::new(), colluding, holder: e });
                self.queue.push(now + SimTime::from_secs_f64(self.cfg.endorse_s), Ev::MonitorStart(e));
            }
        }
    }

    /// The endorser's answer to a bill: a spend proposal, shaped by its
    /// behaviour. The flag marks proposals that bypass honest monitors.
    fn draft(
        &mut self,
        e: usize,
        bill: &Billing,
        gps: Position,
        now: SimTime,
    ) -> Result<(EndorsementDraft, bool), RejectReason> {
        let node = &mut self.nodes[e];
        let es = node.endorser.as_mut().expect("checked by caller");
        let forced = |es: &EndorserState, coins: Vec<ECoin>| {
            let ids = coins.iter().map(|c| c.id).collect();
            EndorsementDraft { billing: bill.clone(), proposal: es.chain.propose(Event::Spend(ids), gps, now), coins }
        };
        match node.behavior.clone() {
            EndorserBehavior::Honest => {
                endorser_endorse(es, bill, &self.dir, &self.policy, gps, now).map(|d| (d, false))
            }
            EndorserBehavior::ReuseCoins => match node.last_coins.clone() {
                Some(coins) => Ok((forced(es, coins), false)),
                None => endorser_endorse(es, bill, &self.dir, &self.policy, gps, now).map(|d| (d, false)),
            },
            EndorserBehavior::RollBack => {
                if node.backup.is_none() {
                    node.backup = Some((Arc::clone(&es.chain), es.coins.clone()));
                } else if !node.restored {
                    let (chain, coins) = node.backup.clone().expect("checked");
                    es.restore(chain, coins);
                    node.restored = true;
                    let coins = es.select_coins(bill.amount, now).ok_or(RejectReason::InsufficientCover)?;
                    return Ok((forced(es, coins), false));
                }
                endorser_endorse(es, bill, &self.dir, &self.policy, gps, now).map(|d| (d, false))
            }
            EndorserBehavior::NoCoins => Ok((forced(es, Vec::new()), false)),
            EndorserBehavior::ForgeCoin => {
                let id = CoinId::from_u64(u64::MAX - now.micros());
                let expiry = now + SimTime::from_secs(86_400);
                let fields = ECoin::signed_fields(id, es.id, bill.amount, expiry);
                let coin = ECoin {
                    id,
                    endorser: es.id,
                    value: bill.amount,
                    expiry,
                    bank_signature: es.key.sign_unchecked(&fields),
                };
                Ok((forced(es, vec![coin]), false))
            }
            EndorserBehavior::ColludingMonitors(_) => {
                let coins = es.select_coins(bill.amount, now).ok_or(RejectReason::InsufficientCover)?;
                Ok((forced(es, coins), true))
            }
        }
    }

    fn parties(&self, e: usize) -> Vec<EntityId> {
        let Some(s) = &self.nodes[e].spend else {
            return Vec::new();
        };
        vec![s.draft.billing.order.customer, s.draft.billing.merchant]
    }

    fn monitor_start(&mut self, e: usize, now: SimTime) {
        let parties = self.parties(e);
        let candidates: Vec<usize> = match (&self.nodes[e].behavior, &self.nodes[e].monitors) {
            (EndorserBehavior::ColludingMonitors(c), _) => c.clone(),
            (_, Some(list)) => list.iter().copied().filter(|&m| self.topology.linked(e, m)).collect(),
            (_, None) => self
                .topology
                .neighbours(e)
                .iter()
                .copied()
                .filter(|&m| m != e && !parties.contains(&Self::entity(m)))
                .collect(),
        };
        let spend = self.nodes[e].spend.as_mut().expect("spend in flight");
        let tx = spend.draft.billing.tx;
        let frame = MessageKind::MonitorRequest.frame_bytes();
        if candidates.is_empty() || (!spend.colluding && candidates.len() < self.policy.quorum) {
            let v = Verdict::Reject(RejectReason::InsufficientQuorum);
            self.line(now, e, None, MessageKind::MonitorRequest, frame, 0, 0, v, Some(&tx));
            self.abort_spend(e, now);
            return;
        }
        spend.candidates = candidates;
        self.queue.push(now + self.radio.hop_latency(frame), Ev::MonitorStep(e, 0));
    }

    fn monitor_step(&mut self, e: usize, i: usize, now: SimTime) {
        let parties = self.parties(e);
        let owner = self.nodes[e].id;
        let spend = self.nodes[e].spend.as_ref().expect("spend in flight");
        let m = spend.candidates[i];
        let holder = spend.holder;
        let tx = spend.draft.billing.tx;
        let verdict = if spend.colluding {
            MonitorVerdict::Sign(self.nodes[m].key.sign_unchecked(&spend.draft.proposal.attestation_bytes()))
        } else {
            let mon = &self.nodes[m];
            let check = MonitorCheck {
                key: &mon.key,
                own_history: &mon.history,
                similarity: self.similarity,
                slot: self.slot,
                known_head: mon.known_heads.get(&owner).copied(),
            };
            let chain = &self.nodes[e].endorser.as_ref().expect("endorser").chain;
            monitor_countersign(&check, chain, &spend.draft.proposal, &parties, &self.dir, &self.policy, now)
        };
        let v = match &verdict {
            MonitorVerdict::Sign(_) => Verdict::Ok,
            MonitorVerdict::Refuse(r) => Verdict::Reject(*r),
            MonitorVerdict::Ineligible => Verdict::None,
        };
        let frame = MessageKind::MonitorRequest.frame_bytes();
        self.line(now, holder, Some(m), MessageKind::MonitorRequest, frame, 0, 1, v, Some(&tx));
        let colluding = {
            let spend = self.nodes[e].spend.as_mut().expect("spend in flight");
            if let MonitorVerdict::Sign(s) = verdict {
                spend.sigs.push(s);
            }
            spend.holder = m;
            spend.colluding
        };
        let spend = self.nodes[e].spend.as_ref().expect("spend in flight");
        let step = SimTime::from_secs_f64(self.cfg.monitor_s) + self.radio.hop_latency(frame);
        let done = if colluding { i + 1 == spend.candidates.len() } else { spend.sigs.len() >= self.policy.quorum };
        if done {
            self.queue.push(now + step, Ev::MonitorDone(e));
        } else if i + 1 < spend.candidates.len() {
            self.queue.push(now + step, Ev::MonitorStep(e, i + 1));
        } else {
            self.abort_spend(e, now);
        }
    }

    fn abort_spend(&mut self, e: usize, now: SimTime) {
        if let Some(s) = self.nodes[e].spend.take() {
            if let Some(es) = self.nodes[e].endorser.as_mut() {
                endorser_abort(es, &s.draft);
            }
        }
        self.next_bill(e, MERCHANT, 1, now);
    }

    fn monitor_done(&mut self, e: usize, now: SimTime) {
        let spend = self.nodes[e].spend.take().expect("spend in flight");
        let tx = spend.draft.billing.tx;
        let node = &mut self.nodes[e];
        let es = node.endorser.as_mut().expect("endorser");
        let ts = spend.draft.proposal.block.timestamp;
        let signers: Vec<EntityId> = spend.sigs.iter().map(|s| s.signer).collect();
        let result = if spend.colluding {
            let Spend { draft, sigs, .. } = spend;
            endorser_abort(es, &draft);
            let ids: BTreeSet<CoinId> = draft.coins.iter().map(|c| c.id).collect();
            Arc::make_mut(&mut es.chain).append_unverified(draft.proposal, sigs);
            es.coins.retain(|c| !ids.contains(&c.id));
            Ok(sign_endorsement(es, &draft.billing, draft.coins))
        } else {
            endorser_finalize(es, spend.draft, spend.sigs, &self.dir, &self.policy)
        };
        match result {
            Ok(msg) => {
                for id in signers {
                    if let Some(m) = Self::node_of(id) {
                        self.nodes[m].known_heads.insert(msg.endorser, ts);
                    }
                }
                let node = &mut self.nodes[e];
                if !msg.coins.is_empty() {
                    node.last_coins = Some(msg.coins.clone());
                }
                let view = merchant_view_bytes(msg.chain.blocks(), msg.chain.filter().size_bytes(), self.chain_mode);
                let packet = Packet {
                    from: e,
                    to: MERCHANT,
                    size: MessageKind::Endorsement.frame_bytes() + view,
                    expires: msg_deadline(&self.orders, &tx, now),
                    payload: Payload::Endorsement(Box::new(msg)),
                };
                self.send(packet, now);
            }
            Err(r) => {
                let frame = MessageKind::Endorsement.frame_bytes();
                self.line(now, e, Some(MERCHANT), MessageKind::Endorsement, frame, 0, 0, Verdict::Reject(r), Some(&tx));
            }
        }
        self.next_bill(e, MERCHANT, 1, now);
    }

    fn merchant_check(&mut self, msg: EndorsementMessage, from: usize, hops: u32, now: SimTime) {
        let tx = msg.tx;
        let view = merchant_view_bytes(msg.chain.blocks(), msg.chain.filter().size_bytes(), self.chain_mode);
        let size = MessageKind::Endorsement.frame_bytes() + view;
        let Some(o) = self.orders.get(&tx).filter(|o| !o.decided) else {
            self.line(now, from, Some(MERCHANT), MessageKind::Endorsement, size, view, hops, Verdict::None, Some(&tx));
            if !msg.coins.is_empty() {
                self.releases.push((msg.endorser, msg.coins));
            }
            return;
        };
        let result =
            check_endorsement(&o.order, &msg, &self.dir, &self.policy, self.chain_mode, &self.merchant_seen, now);
        let v = match result {
            Ok(_) => Verdict::Ok,
            Err(r) => Verdict::Reject(r),
        };
        self.line(now, from, Some(MERCHANT), MessageKind::Endorsement, size, view, hops, v, Some(&tx));
        match result {
            Ok(amount) => {
                self.merchant_seen.extend(msg.coins.iter().map(|c| c.id));
                let o = self.orders.get_mut(&tx).expect("present");
                o.cover += amount;
                o.accepted.push((msg.endorser, msg.coins, amount));
                if o.cover >= o.order.amount {
                    self.decide(tx, Ok(()), now);
                }
            }
            Err(_) => {
                if !msg.coins.is_empty()
                    && msg.coins.iter().all(|c| c.validate(&self.dir.bank, msg.endorser, now).is_ok())
                {
                    self.releases.push((msg.endorser, msg.coins));
                }
            }
        }
    }

    fn decide(&mut self, tx: TxId, outcome: Result<(), RejectReason>, now: SimTime) {
        let o = self.orders.get_mut(&tx).expect("order known");
        o.decided = true;
        let customer = o.customer;
        let v = match outcome {
            Ok(()) => Verdict::Ok,
            Err(r) => Verdict::Reject(r),
        };
        if outcome.is_ok() {
            let receipt = self.nodes[customer].customer.as_ref().map(|c| DeliveryReceipt {
                tx,
                customer: c.id,
                signature: c.key.sign_unchecked(&DeliveryReceipt::signed_bytes(&tx)),
            });
            self.bundles.push(SettlementBundle {
                merchant: Self::entity(MERCHANT),
                order: Arc::clone(&o.order),
                endorsements: std::mem::take(&mut o.accepted),
                released: Vec::new(),
                accepted_at: now,
                receipt,
            });
        } else {
            for (e, coins, _) in std::mem::take(&mut o.accepted) {
                self.releases.push((e, coins));
            }
        }
        self.line(now, MERCHANT, Some(customer), MessageKind::Decision, 0, 0, 0, v, Some(&tx));
        let node = &mut self.nodes[customer];
        node.awaiting = false;
        if node.role == Role::Customer && !node.quiet {
            let t = now + self.exp_delay();
            self.queue.push(t, Ev::Intent(customer));
        }
    }

    fn hello_round(&mut self, now: SimTime) {
        let slot = now.micros() / self.slot.micros().max(1);
        for i in 0..self.nodes.len() {
            let p = self.gps(i);
            self.nodes[i].reported = p;
            self.nodes[i].history.record(slot, p);
        }
        let frame = MessageKind::Hello.frame_bytes();
        for e in 0..self.nodes.len() {
            let node = &self.nodes[e];
            if node.endorser.is_none() || node.spend.is_some() || node.silent_from.is_some_and(|t| now >= t) {
                continue;
            }
            let monitors: Vec<usize> =
                self.topology.neighbours(e).iter().copied().filter(|&m| m != e).take(self.policy.quorum + 2).collect();
            if monitors.len() < self.policy.quorum {
                continue;
            }
            let owner = node.id;
            let mut es = self.nodes[e].endorser.take().expect("endorser");
            let gps = self.nodes[e].reported;
            let outcome = {
                let checks: Vec<MonitorCheck<'_>> = monitors
                    .iter()
                    .map(|&m| MonitorCheck {
                        key: &self.nodes[m].key,
                        own_history: &self.nodes[m].history,
                        similarity: self.similarity,
                        slot: self.slot,
                        known_head: self.nodes[m].known_heads.get(&owner).copied(),
                    })
                    .collect();
                hello_exchange(&mut es, &checks, &self.dir, &self.policy, gps, now)
            };
            let head = es.chain.last_block().map(|b| b.timestamp);
            self.nodes[e].endorser = Some(es);
            self.line(now, e, None, MessageKind::Hello, frame, 0, 1, Verdict::None, None);
            for (&m, (_, reply)) in monitors.iter().zip(outcome.replies) {
                let v = match reply {
                    MonitorVerdict::Sign(_) => {
                        if outcome.appended {
                            if let Some(h) = head {
                                self.nodes[m].known_heads.insert(owner, h);
                            }
                        }
                        Verdict::Ok
                    }
                    MonitorVerdict::Refuse(r) => Verdict::Reject(r),
                    MonitorVerdict::Ineligible => Verdict::None,
                };
                self.line(now, m, Some(e), MessageKind::Hello, frame, 0, 1, v, None);
            }
        }
        self.queue.push(now + self.slot, Ev::Hello);
    }

    fn truck_stop(&mut self, i: usize, round: u64, now: SimTime) {
        self.truck_visits.push((i, now));
        let stop = self.graph.position(self.truck.stops[i]);
        if self.radio.in_range(stop, self.nodes[MERCHANT].mobility.position) {
            self.truck.outbound.append(&mut self.bundles);
            self.truck_releases.append(&mut self.releases);
        }
        let inbound = std::mem::take(&mut self.truck.inbound);
        for d in inbound {
            match Self::node_of(d.endorser) {
                Some(e) if self.radio.in_range(stop, self.nodes[e].mobility.position) => {
                    if let Some(es) = self.nodes[e].endorser.as_mut() {
                        es.receive_coins(d.coins);
                    }
                }
                _ => self.truck.inbound.push(d),
            }
        }
        self.queue.push(self.truck.arrival(i, round + 1), Ev::TruckStop(i, round + 1));
    }

    fn truck_bank(&mut self, round: u64, now: SimTime) {
        for bundle in std::mem::take(&mut self.truck.outbound) {
            if let Ok(s) = self.bank.settle(&bundle, now) {
                self.settled += 1;
                self.fraud.extend(s.fraud.iter().copied());
                self.truck.inbound.extend(s.deliveries.into_iter().filter(|d| !self.cut_off.contains(&d.endorser)));
            }
        }
        for (owner, coins) in std::mem::take(&mut self.truck_releases) {
            if let Ok(Some(d)) = self.bank.refund_coins(owner, &coins, now) {
                if !self.cut_off.contains(&owner) {
                    self.truck.inbound.push(d);
                }
            }
        }
        self.bank.release_expired(now);
        self.queue.push(self.truck.bank_visit(round + 1), Ev::TruckBank(round + 1));
    }

    fn finish(self) -> RunResult {
        let roles = self.nodes.iter().map(|n| (n.id, n.role)).chain([(self.dir.bank_id, Role::Bank)]).collect();
        let final_chains: Vec<Arc<EventChain>> =
            self.nodes.iter().filter_map(|n| n.endorser.as_ref().map(|e| Arc::clone(&e.chain))).collect();
        let chains = final_chains
            .iter()
            .map(|c| ChainStat {
                owner: c.owner,
                blocks: c.len(),
                full_bytes: chain_size_bytes(c.blocks(), SizeMode::Full),
                light_bytes: chain_size_bytes(c.blocks(), SizeMode::Lightweight),
            })
            .collect();
        let journal_sum = self.bank.journal().iter().map(|p| p.delta).sum();
        RunResult {
            config: self.cfg,
            transcript: self.transcript,
            roles,
            chains,
            final_chains,
            directory: self.dir,
            buffer_drops: self.buffer_drops,
            expired: self.expired,
            max_hop_span: self.max_hop_span,
            journal_sum,
            settled: self.settled,
            fraud: self.fraud,
            scripted_txs: self.scripted_txs,
            truck_visits: self.truck_visits,
        }
    }
}

fn msg_deadline(orders: &BTreeMap<TxId, OrderState>, tx: &TxId, now: SimTime) -> SimTime {
    orders.get(tx).and_then(|o| o.order.created_at.micros().checked_add(60_000_000)).map(SimTime).unwrap_or(now)
}
