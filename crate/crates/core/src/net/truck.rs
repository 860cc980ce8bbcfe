use super::graph::{RoadGraph, VertexId};
use crate::protocol::{CoinDelivery, SettlementBundle};
use crate::SimTime;

/// Delivery truck linking the disaster area to the bank. It visits each
/// region's stop once per period and carries bundles and coins between
/// visits; it has no other connectivity.
#[derive(Debug, Clone)]
pub struct TruckState {
    pub stops: Vec<VertexId>,
    pub period: SimTime,
    /// Bundles picked up from merchants, handed to the bank at period end.
    pub outbound: Vec<SettlementBundle>,
    /// Coins from the bank awaiting their endorser.
    pub inbound: Vec<CoinDelivery>,
}

impl TruckState {
    /// One stop per cell of a `cells × cells` partition of the graph's
    /// bounding box, visited in serpentine order.
    pub fn over_regions(graph: &RoadGraph, cells: usize, period: SimTime) -> Self {
        let (lo, hi) = graph.bounds();
        let mut stops = Vec::new();
        for r in 0..cells {
            for i in 0..cells {
                let c = if r % 2 == 0 { i } else { cells - 1 - i };
                let cx = lo.x + (hi.x - lo.x) * (c as f64 + 0.5) / cells as f64;
                let cy = lo.y + (hi.y - lo.y) * (r as f64 + 0.5) / cells as f64;
                stops.push(graph.nearest_vertex(crate::Position::new(cx, cy)));
            }
        }
        TruckState { stops, period, outbound: Vec::new(), inbound: Vec::new() }
    }

    /// Arrival time of the `round`-th visit to stop `index`. Stops are
    /// spread evenly over the period; the bank visit is at multiples of it.
    pub fn arrival(&self, index: usize, round: u64) -> SimTime {
        let slot = self.period.micros() / (self.stops.len() as u64 + 1);
        SimTime(round * self.period.micros() + (index as u64 + 1) * slot)
    }

    pub fn bank_visit(&self, round: u64) -> SimTime {
        SimTime(round * self.period.micros())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_region_is_visited_once_per_period() {
        let g = RoadGraph::grid(7, 3000.0).unwrap();
        let t = TruckState::over_regions(&g, 3, SimTime::from_secs(172_800));
        assert_eq!(t.stops.len(), 9);
        assert!(t.stops.contains(&24), "market vertex is a stop");
        for i in 0..t.stops.len() {
            for k in 0..5 {
                assert_eq!(t.arrival(i, k + 1).micros() - t.arrival(i, k).micros(), t.period.micros());
            }
            assert!(t.arrival(i, 0) > t.bank_visit(0) && t.arrival(i, 0) < t.bank_visit(1));
        }
    }
}
