//! Discrete-event simulation of phones moving on a road network, talking
//! over a short-range radio, and a truck carrying settlements to the bank.

mod config;
mod graph;
mod mobility;
mod queue;
mod radio;
mod sim;
mod truck;

pub use config::{cents, BillingModeKey, ChainModeKey, ScenarioConfig};
pub use graph::{RoadGraph, VertexId};
pub use mobility::{on_road, MobilityParams, MobilityState};
pub use queue::EventQueue;
pub use radio::{RadioModel, StoreBuffer, Topology};
pub use sim::{
    load_graph, market_vertex, tx_label, ChainStat, EndorserBehavior, Pin, RunResult, ScriptedOrder, SimHooks,
    Simulation, MERCHANT,
};
pub use truck::TruckState;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("config: {0}")]
    Config(String),
    #[error("road graph: {0}")]
    Graph(String),
    #[error("no route from vertex {from} to {to}")]
    Unreachable { from: VertexId, to: VertexId },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
    #[error(transparent)]
    Ledger(#[from] crate::ledger::LedgerError),
}
