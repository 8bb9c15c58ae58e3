use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::acquisition::PeerPlan;
use crate::geometry::Point2;
use crate::gp::{Dataset, Observation, RobotId};

/// Message a robot sends to every peer when it leaves a waypoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Broadcast {
    pub sender: RobotId,
    pub send_time: f64,
    pub planned_waypoint: Point2,
    /// Where the sender will sample on its way to `planned_waypoint`.
    pub planned_path_samples: Vec<Point2>,
    /// Observations from the sender's last leg, downsampled.
    pub observations: Vec<Observation>,
}

impl Broadcast {
    pub fn plan(&self) -> PeerPlan {
        PeerPlan {
            robot: self.sender,
            waypoint: self.planned_waypoint,
            path_points: self.planned_path_samples.clone(),
        }
    }
}

/// One robot's view of the mission: every observation it holds and the most
/// recent plan heard from each peer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Knowledge {
    pub data: Dataset,
    peer_plans: BTreeMap<RobotId, (f64, PeerPlan)>,
    /// Latest broadcast time heard from each peer.
    heard: BTreeMap<RobotId, f64>,
}

impl Knowledge {
    pub fn new() -> Self {
        Self::default()
    }

    /// Peer plans ordered by robot id.
    pub fn peer_plans(&self) -> Vec<PeerPlan> {
        self.peer_plans.values().map(|(_, p)| p.clone()).collect()
    }

    pub fn peer_plan(&self, robot: RobotId) -> Option<&PeerPlan> {
        self.peer_plans.get(&robot).map(|(_, p)| p)
    }

    pub fn last_heard(&self, robot: RobotId) -> Option<f64> {
        self.heard.get(&robot).copied()
    }

    pub fn record_own(&mut self, obs: Observation) -> bool {
        self.data.insert(obs)
    }
}

/// Merges pending broadcasts into `knowledge`. Observations are deduplicated
/// by `(observer, time)` and a newer plan from a peer replaces the older one.
/// Returns the number of new observations.
pub fn deliver_and_snapshot(knowledge: &mut Knowledge, inbox: &[Broadcast]) -> usize {
    let mut added = 0;
    for b in inbox {
        added += knowledge.data.merge(&b.observations);
        let newer = knowledge.peer_plans.get(&b.sender).is_none_or(|(t, _)| b.send_time >= *t);
        if newer {
            knowledge.peer_plans.insert(b.sender, (b.send_time, b.plan()));
        }
        let h = knowledge.heard.entry(b.sender).or_insert(b.send_time);
        *h = h.max(b.send_time);
    }
    added
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: f64, who: RobotId) -> Observation {
        Observation { location: Point2::new(t, who as f64), value: t, time: t, observer: who }
    }

    fn bc(sender: RobotId, t: f64, times: &[f64]) -> Broadcast {
        Broadcast {
            sender,
            send_time: t,
            planned_waypoint: Point2::new(t, 0.0),
            planned_path_samples: vec![],
            observations: times.iter().map(|&s| obs(s, sender)).collect(),
        }
    }

    #[test]
    fn empty_inbox_is_noop() {
        let mut k = Knowledge::new();
        k.record_own(obs(0.0, 1));
        let before = k.clone();
        assert_eq!(deliver_and_snapshot(&mut k, &[]), 0);
        assert_eq!(k, before);
    }

    #[test]
    fn duplicates_kept_once() {
        let mut k = Knowledge::new();
        let b = bc(2, 3.0, &[1.0, 2.0, 3.0]);
        assert_eq!(deliver_and_snapshot(&mut k, &[b.clone(), b.clone()]), 3);
        assert_eq!(deliver_and_snapshot(&mut k, &[b]), 0);
        assert_eq!(k.data.len(), 3);
    }

    #[test]
    fn overlapping_peers_merge_in_order() {
        let mut k = Knowledge::new();
        deliver_and_snapshot(&mut k, &[bc(3, 4.0, &[0.0, 2.0, 4.0]), bc(2, 3.0, &[1.0, 2.0, 3.0])]);
        let keys: Vec<(f64, RobotId)> = k.data.iter().map(|o| (o.time, o.observer)).collect();
        assert_eq!(keys, vec![(0.0, 3), (1.0, 2), (2.0, 2), (2.0, 3), (3.0, 2), (4.0, 3)]);
    }

    #[test]
    fn newer_plan_replaces_older() {
        let mut k = Knowledge::new();
        deliver_and_snapshot(&mut k, &[bc(2, 5.0, &[]), bc(2, 1.0, &[])]);
        assert_eq!(k.peer_plan(2).unwrap().waypoint, Point2::new(5.0, 0.0));
        deliver_and_snapshot(&mut k, &[bc(2, 9.0, &[])]);
        assert_eq!(k.peer_plan(2).unwrap().waypoint, Point2::new(9.0, 0.0));
        assert_eq!(k.last_heard(2), Some(9.0));
    }
}
