//! Vehicles on a two-lane ring road, hop-limited proximity clustering and a
//! Bernoulli link model.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::rng::SeededStream;

pub const DEFAULT_ROAD_LENGTH_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleKinematics {
    /// Meters along the loop, in `[0, road_length)`.
    pub position: f64,
    /// Meters per second; constant for the run.
    pub speed: f64,
    pub lane: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub road_length: f64,
    pub vehicles: Vec<VehicleKinematics>,
}

impl World {
    /// Uniform positions, speeds in `[speed_min, speed_max]`, random lanes.
    pub fn random(
        num_vehicles: usize,
        road_length: f64,
        speed_min: f64,
        speed_max: f64,
        rng: &mut SeededStream,
    ) -> Self {
        let vehicles = (0..num_vehicles)
            .map(|_| VehicleKinematics {
                position: rng.uniform_range(0.0, road_length),
                speed: rng.uniform_range(speed_min, speed_max),
                lane: (rng.uniform() < 0.5) as u8,
            })
            .collect();
        Self {
            road_length,
            vehicles,
        }
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Shorter way round the loop between two vehicles.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let d = (self.vehicles[a].position - self.vehicles[b].position).abs();
        d.min(self.road_length - d)
    }

    /// Sorted neighbor lists of the tx-range graph.
    pub fn adjacency(&self, tx_range: f64) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut adj = vec![Vec::new(); n];
        for a in 0..n {
            for b in (a + 1)..n {
                if self.distance(a, b) <= tx_range {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        adj
    }
}

/// Advances every vehicle by `speed * dt`, wrapping around the loop.
pub fn step_mobility(world: &World, dt: f64) -> World {
    let mut next = world.clone();
    for v in &mut next.vehicles {
        v.position = (v.position + v.speed * dt).rem_euclid(world.road_length);
        // rem_euclid can round up to the modulus itself.
        if v.position >= world.road_length {
            v.position = 0.0;
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterView {
    pub ch_id: usize,
    /// Sorted member ids, excluding the head.
    pub member_ids: Vec<usize>,
    pub hop_limit: u32,
}

impl ClusterView {
    pub fn size(&self) -> usize {
        self.member_ids.len() + 1
    }

    /// Head first, then members.
    pub fn all_ids(&self) -> Vec<usize> {
        std::iter::once(self.ch_id)
            .chain(self.member_ids.iter().copied())
            .collect()
    }
}

/// Heads are elected by descending degree (ties to the lower id). Each new
/// head claims every still-unclaimed vehicle reachable within `hop_limit`
/// hops through vehicles it has itself claimed. Returned sorted by head id.
pub fn form_clusters(world: &World, tx_range: f64, hop_limit: u32) -> Vec<ClusterView> {
    let n = world.len();
    let adj = world.adjacency(tx_range);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| adj[b].len().cmp(&adj[a].len()).then(a.cmp(&b)));

    let mut claimed = vec![false; n];
    let mut clusters = Vec::new();
    for &head in &order {
        if claimed[head] {
            continue;
        }
        claimed[head] = true;
        let mut members = Vec::new();
        let mut queue = VecDeque::from([(head, 0u32)]);
        while let Some((v, depth)) = queue.pop_front() {
            if depth == hop_limit {
                continue;
            }
            for &u in &adj[v] {
                if !claimed[u] {
                    claimed[u] = true;
                    members.push(u);
                    queue.push_back((u, depth + 1));
                }
            }
        }
        members.sort_unstable();
        clusters.push(ClusterView {
            ch_id: head,
            member_ids: members,
            hop_limit,
        });
    }
    clusters.sort_by_key(|c| c.ch_id);
    clusters
}

/// Hop distances from `src` in the full tx-range graph (`None` = unreachable).
pub fn bfs_hops(adj: &[Vec<usize>], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &u in &adj[v] {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// One CM-to-CH transmission: delivered with probability `1 - loss_prob`.
pub fn link_delivers(rng: &mut SeededStream, loss_prob: f64) -> bool {
    loss_prob <= 0.0 || rng.uniform() >= loss_prob
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world_at(positions: &[f64]) -> World {
        World {
            road_length: DEFAULT_ROAD_LENGTH_M,
            vehicles: positions
                .iter()
                .map(|&p| VehicleKinematics {
                    position: p,
                    speed: 10.0,
                    lane: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn mobility_examples() {
        let w = world_at(&[100.0, 995.0]);
        let n = step_mobility(&w, 1.0);
        assert_eq!(n.vehicles[0].position, 110.0);
        assert!((n.vehicles[1].position - 5.0).abs() < 1e-9);
        let twice = step_mobility(&step_mobility(&w, 0.5), 0.5);
        for (a, b) in twice.vehicles.iter().zip(&n.vehicles) {
            assert!((a.position - b.position).abs() < 1e-9);
        }
    }

    #[test]
    fn loop_distance_wraps() {
        let w = world_at(&[10.0, 990.0]);
        assert!((w.distance(0, 1) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_is_one_cluster() {
        let w = world_at(&[0.0, 10.0, 20.0, 30.0]);
        let c = form_clusters(&w, 100.0, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].ch_id, 0);
        assert_eq!(c[0].member_ids, vec![1, 2, 3]);
    }

    #[test]
    fn highest_degree_heads_the_chain() {
        // 0 - 1 - 2 chain: vehicle 1 has degree 2.
        let w = world_at(&[0.0, 80.0, 160.0]);
        let c = form_clusters(&w, 100.0, 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].ch_id, 1);
    }

    #[test]
    fn separated_groups_split() {
        let w = world_at(&[0.0, 50.0, 500.0, 550.0]);
        let c = form_clusters(&w, 100.0, 1);
        assert_eq!(c.len(), 2);
        let c3 = form_clusters(&w, 100.0, 3);
        assert_eq!(c3.len(), 2);
    }

    #[test]
    fn multi_hop_merges_chain() {
        let w = world_at(&[0.0, 90.0, 180.0, 270.0, 360.0]);
        assert_eq!(form_clusters(&w, 100.0, 1).len(), 2);
        assert_eq!(form_clusters(&w, 100.0, 3).len(), 1);
    }

    #[test]
    fn lossless_link_always_delivers() {
        let mut rng = SeededStream::new(4);
        assert!((0..1000).all(|_| link_delivers(&mut rng, 0.0)));
    }

    #[test]
    fn lossy_link_rate() {
        let mut rng = SeededStream::new(5);
        let n = 10_000;
        let ok = (0..n).filter(|_| link_delivers(&mut rng, 0.3)).count();
        let rate = ok as f64 / n as f64;
        assert!((rate - 0.7).abs() < 0.02, "rate {rate}");
    }
}
