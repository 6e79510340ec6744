use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five discrete meta-actions the simulator consumes.
///
/// Discriminants are the environment action IDs. Lane 0 is the leftmost lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PrimitiveAction {
    LaneLeft = 0,
    Idle = 1,
    LaneRight = 2,
    Faster = 3,
    Slower = 4,
}

impl PrimitiveAction {
    pub const ALL: [PrimitiveAction; 5] = [
        PrimitiveAction::LaneLeft,
        PrimitiveAction::Idle,
        PrimitiveAction::LaneRight,
        PrimitiveAction::Faster,
        PrimitiveAction::Slower,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            PrimitiveAction::LaneLeft => "LANE_LEFT",
            PrimitiveAction::Idle => "IDLE",
            PrimitiveAction::LaneRight => "LANE_RIGHT",
            PrimitiveAction::Faster => "FASTER",
            PrimitiveAction::Slower => "SLOWER",
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, PrimitiveAction::LaneLeft | PrimitiveAction::LaneRight)
    }

    /// Lane offset applied by this action (-1 left, +1 right, 0 otherwise).
    pub fn lane_delta(self) -> isize {
        match self {
            PrimitiveAction::LaneLeft => -1,
            PrimitiveAction::LaneRight => 1,
            _ => 0,
        }
    }

    /// Lane reached from `lane` on a road with `lane_count` lanes, or `None`
    /// if the action would leave the road.
    pub fn target_lane(self, lane: usize, lane_count: usize) -> Option<usize> {
        let target = lane as isize + self.lane_delta();
        (0..lane_count as isize).contains(&target).then_some(target as usize)
    }
}

impl fmt::Display for PrimitiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownAction;

impl FromStr for PrimitiveAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.token() == s)
            .ok_or(UnknownAction)
    }
}

/// Hard-safety floor shared by the encoder's fallback choice and the arbiter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyFloor {
    pub ttc_floor: f64,
    pub gap_floor: f64,
}

impl Default for SafetyFloor {
    fn default() -> Self {
        Self {
            ttc_floor: 1.0,
            gap_floor: 2.0,
        }
    }
}

impl SafetyFloor {
    pub fn is_breached(&self, front_gap: f64, min_ttc: f64) -> bool {
        min_ttc < self.ttc_floor || front_gap < self.gap_floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_match_environment_order() {
        for (i, a) in PrimitiveAction::ALL.iter().enumerate() {
            assert_eq!(a.id() as usize, i);
            assert_eq!(PrimitiveAction::from_id(i as u8), Some(*a));
            assert_eq!(a.token().parse::<PrimitiveAction>(), Ok(*a));
        }
        assert_eq!(PrimitiveAction::from_id(5), None);
        assert!("WARP".parse::<PrimitiveAction>().is_err());
    }

    #[test]
    fn lane_targets_clamp_at_edges() {
        assert_eq!(PrimitiveAction::LaneLeft.target_lane(0, 3), None);
        assert_eq!(PrimitiveAction::LaneRight.target_lane(2, 3), None);
        assert_eq!(PrimitiveAction::LaneLeft.target_lane(1, 3), Some(0));
        assert_eq!(PrimitiveAction::Faster.target_lane(2, 3), Some(2));
    }

    #[test]
    fn serde_uses_tokens() {
        let s = serde_json::to_string(&PrimitiveAction::LaneRight).unwrap();
        assert_eq!(s, "\"LANE_RIGHT\"");
    }
}
