//! Discrete action space and the scenario enumeration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of steering bins. Odd, so bin `N_STEER / 2` is straight ahead.
pub const N_STEER: usize = 7;
/// Number of speed bins: stop, slow, normal.
pub const N_SPEED: usize = 3;
pub const MAX_STEER_DEG: f64 = 50.0;
/// Speed of each speed bin in m/s.
pub const SPEED_LEVELS: [f64; N_SPEED] = [0.0, 1.2, 1.5];
pub const MAX_SPEED: f64 = SPEED_LEVELS[N_SPEED - 1];
pub const CENTER_STEER: usize = N_STEER / 2;

pub const STOP: usize = 0;
pub const SLOW: usize = 1;
pub const NORMAL: usize = 2;

/// (steering bin, speed bin) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    steer_bin: u8,
    speed_bin: u8,
}

impl Action {
    pub fn new(steer_bin: usize, speed_bin: usize) -> Result<Self, Error> {
        if steer_bin >= N_STEER || speed_bin >= N_SPEED {
            return Err(Error::InvalidAction {
                steer_bin,
                speed_bin,
            });
        }
        Ok(Self {
            steer_bin: steer_bin as u8,
            speed_bin: speed_bin as u8,
        })
    }

    /// Straight ahead at the given speed bin.
    pub fn straight(speed_bin: usize) -> Self {
        Self::new(CENTER_STEER, speed_bin).expect("speed bin in range")
    }

    pub fn steer_bin(&self) -> usize {
        self.steer_bin as usize
    }

    pub fn speed_bin(&self) -> usize {
        self.speed_bin as usize
    }

    /// Steering angle in degrees; positive turns left.
    pub fn steering_deg(&self) -> f64 {
        steer_bin_to_deg(self.steer_bin())
    }

    pub fn steering_rad(&self) -> f64 {
        self.steering_deg().to_radians()
    }

    pub fn speed(&self) -> f64 {
        SPEED_LEVELS[self.speed_bin()]
    }

    /// Reflection left/right: steering bin `i` maps to `N_STEER - 1 - i`.
    pub fn mirrored(&self) -> Self {
        Self {
            steer_bin: (N_STEER - 1 - self.steer_bin()) as u8,
            speed_bin: self.speed_bin,
        }
    }

    /// Index into the flattened joint action space.
    pub fn joint_index(&self) -> usize {
        self.steer_bin() * N_SPEED + self.speed_bin()
    }

    pub fn from_joint_index(i: usize) -> Option<Self> {
        Self::new(i / N_SPEED, i % N_SPEED).ok()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.steer_bin, self.speed_bin)
    }
}

pub fn steer_bin_to_deg(bin: usize) -> f64 {
    (bin as f64 - CENTER_STEER as f64) * (2.0 * MAX_STEER_DEG) / (N_STEER - 1) as f64
}

/// Nearest steering bin for an angle in degrees; out-of-range angles clamp.
pub fn nearest_steer_bin(deg: f64) -> usize {
    let step = (2.0 * MAX_STEER_DEG) / (N_STEER - 1) as f64;
    let raw = ((deg + MAX_STEER_DEG) / step).round();
    raw.clamp(0.0, (N_STEER - 1) as f64) as usize
}

/// The four scenario categories. Declaration order is the tie-break order
/// for argmax over the meta head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    PathFollow,
    Confront,
    PedFollow,
    Cross,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::PathFollow,
        ScenarioId::Confront,
        ScenarioId::PedFollow,
        ScenarioId::Cross,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::PathFollow => "path_follow",
            ScenarioId::Confront => "confront",
            ScenarioId::PedFollow => "ped_follow",
            ScenarioId::Cross => "cross",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        match norm.as_str() {
            "pathfollow" | "path" => Ok(ScenarioId::PathFollow),
            "confront" | "confronting" => Ok(ScenarioId::Confront),
            "pedfollow" | "pedestrianfollowing" | "follow" => Ok(ScenarioId::PedFollow),
            "cross" | "crossing" => Ok(ScenarioId::Cross),
            _ => Err(Error::Parse(format!("unknown scenario `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_span_steering_range() {
        assert_eq!(steer_bin_to_deg(0), -50.0);
        assert_eq!(steer_bin_to_deg(CENTER_STEER), 0.0);
        assert_eq!(steer_bin_to_deg(N_STEER - 1), 50.0);
        for b in 0..N_STEER {
            assert_eq!(nearest_steer_bin(steer_bin_to_deg(b)), b);
        }
        assert_eq!(nearest_steer_bin(-400.0), 0);
        assert_eq!(nearest_steer_bin(90.0), N_STEER - 1);
    }

    #[test]
    fn speeds_are_stop_or_walking_band() {
        for b in 0..N_SPEED {
            let v = Action::straight(b).speed();
            assert!(v == 0.0 || (1.2..=1.5).contains(&v));
        }
    }

    #[test]
    fn invalid_bins_rejected() {
        assert!(Action::new(N_STEER, 0).is_err());
        assert!(Action::new(0, N_SPEED).is_err());
    }

    #[test]
    fn mirror_is_involution() {
        for i in 0..N_STEER * N_SPEED {
            let a = Action::from_joint_index(i).unwrap();
            assert_eq!(a.mirrored().mirrored(), a);
            assert_eq!(a.mirrored().steering_deg(), -a.steering_deg());
        }
        assert_eq!(Action::new(1, 2).unwrap().mirrored().steer_bin(), 5);
    }

    #[test]
    fn scenario_parse_round_trip() {
        for s in ScenarioId::ALL {
            assert_eq!(s.name().parse::<ScenarioId>().unwrap(), s);
            assert_eq!(ScenarioId::from_index(s.index()), Some(s));
        }
        assert!("bogus".parse::<ScenarioId>().is_err());
    }
}
