use std::collections::VecDeque;

use rand::Rng;

use super::graph::{RoadGraph, VertexId};
use crate::Position;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub speed_min: f64,
    pub speed_max: f64,
    /// Pause at each waypoint, seconds.
    pub pause: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams { speed_min: 1.0, speed_max: 1.4, pause: 10.0 }
    }
}

/// Random-waypoint movement along a road graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub position: Position,
    /// Vertex most recently reached.
    pub last_vertex: VertexId,
    pub waypoint: VertexId,
    /// Vertices still to visit, next first; empty while paused.
    pub path: VecDeque<VertexId>,
    pub speed: f64,
    pub pause_remaining: f64,
    /// Next waypoint to use instead of a random draw.
    pub forced_waypoint: Option<VertexId>,
    /// Pinned nodes never move.
    pub pinned: bool,
}

impl MobilityState {
    /// Starts paused at `start`.
    pub fn at_vertex(graph: &RoadGraph, start: VertexId, params: &MobilityParams) -> Self {
        MobilityState {
            position: graph.position(start),
            last_vertex: start,
            waypoint: start,
            path: VecDeque::new(),
            speed: params.speed_min,
            pause_remaining: params.pause,
            forced_waypoint: None,
            pinned: false,
        }
    }

    pub fn stationary(position: Position, vertex: VertexId) -> Self {
        MobilityState {
            position,
            last_vertex: vertex,
            waypoint: vertex,
            path: VecDeque::new(),
            speed: 0.0,
            pause_remaining: 0.0,
            forced_waypoint: None,
            pinned: true,
        }
    }

    pub fn is_paused(&self) -> bool {
        self.path.is_empty()
    }

    /// Sends the node to `target`: immediately if moving (after reaching
    /// the vertex it is heading to), otherwise once the current pause ends.
    pub fn redirect(&mut self, graph: &RoadGraph, target: VertexId) {
        if self.pinned {
            return;
        }
        match self.path.front().copied() {
            None => self.forced_waypoint = Some(target),
            Some(next) => {
                let route = graph.plan_route(next, target).expect("graph is connected");
                self.path = route.into_iter().collect();
                self.waypoint = target;
            }
        }
    }

    fn start_leg<R: Rng + ?Sized>(
        &mut self,
        graph: &RoadGraph,
        params: &MobilityParams,
        rng: &mut R,
        pick: &mut impl FnMut(&mut R, VertexId) -> VertexId,
    ) {
        let target = self.forced_waypoint.take().unwrap_or_else(|| pick(rng, self.last_vertex));
        self.speed = if params.speed_max > params.speed_min {
            rng.gen_range(params.speed_min..=params.speed_max)
        } else {
            params.speed_min
        };
        self.waypoint = target;
        let route = graph.plan_route(self.last_vertex, target).expect("graph is connected");
        self.path = route.into_iter().skip(1).collect();
        if self.path.is_empty() {
            // Drew the vertex we are on: pause again.
            self.pause_remaining = params.pause;
        }
    }

    /// Advances `dt` seconds. `pick(rng, current)` draws the next waypoint.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        graph: &RoadGraph,
        dt: f64,
        params: &MobilityParams,
        rng: &mut R,
        mut pick: impl FnMut(&mut R, VertexId) -> VertexId,
    ) {
        if self.pinned {
            return;
        }
        let mut left = dt;
        // Bounded: each pass either consumes time or starts a non-empty leg.
        for _ in 0..10_000 {
            if left <= 0.0 {
                return;
            }
            if self.path.is_empty() {
                if self.pause_remaining > left {
                    self.pause_remaining -= left;
                    return;
                }
                left -= self.pause_remaining;
                self.pause_remaining = 0.0;
                self.start_leg(graph, params, rng, &mut pick);
                continue;
            }
            let next = self.path[0];
            let target = graph.position(next);
            let d = self.position.distance(&target);
            let reach = self.speed * left;
            if reach < d {
                let f = reach / d;
                self.position = Position::new(
                    self.position.x + (target.x - self.position.x) * f,
                    self.position.y + (target.y - self.position.y) * f,
                );
                return;
            }
            left -= d / self.speed;
            self.position = target;
            self.last_vertex = next;
            self.path.pop_front();
            if self.path.is_empty() {
                self.pause_remaining = params.pause;
            }
        }
    }
}

/// True if `p` lies on some edge of `graph` (within `tol` metres).
pub fn on_road(graph: &RoadGraph, p: Position, tol: f64) -> bool {
    (0..graph.len()).any(|a| {
        graph.neighbours(a).iter().any(|&(b, _)| {
            let (pa, pb) = (graph.position(a), graph.position(b));
            let (dx, dy) = (pb.x - pa.x, pb.y - pa.y);
            let len2 = dx * dx + dy * dy;
            let t = (((p.x - pa.x) * dx + (p.y - pa.y) * dy) / len2).clamp(0.0, 1.0);
            Position::new(pa.x + t * dx, pa.y + t * dy).distance(&p) <= tol
        })
    })
}
