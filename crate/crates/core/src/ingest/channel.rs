use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_CHANNELS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    Hand = 0,
    Chest = 1,
    Ankle = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    Accel = 0,
    Gyro = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

/// One retained inertial channel. The derived ordering (location, then kind,
/// then axis) is the channel order used everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub location: Location,
    pub kind: SensorKind,
    pub axis: Axis,
}

impl ChannelId {
    pub const fn new(location: Location, kind: SensorKind, axis: Axis) -> Self {
        ChannelId { location, kind, axis }
    }

    pub fn index(self) -> usize {
        self.location as usize * 6 + self.kind as usize * 3 + self.axis as usize
    }

    pub fn all() -> impl Iterator<Item = ChannelId> {
        [Location::Hand, Location::Chest, Location::Ankle].into_iter().flat_map(|location| {
            [SensorKind::Accel, SensorKind::Gyro].into_iter().flat_map(move |kind| {
                [Axis::X, Axis::Y, Axis::Z]
                    .into_iter()
                    .map(move |axis| ChannelId::new(location, kind, axis))
            })
        })
    }

    /// The x/y/z triple of one sensor.
    pub fn triple(location: Location, kind: SensorKind) -> [ChannelId; 3] {
        [Axis::X, Axis::Y, Axis::Z].map(|axis| ChannelId::new(location, kind, axis))
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loc = match self.location {
            Location::Hand => "hand",
            Location::Chest => "chest",
            Location::Ankle => "ankle",
        };
        let kind = match self.kind {
            SensorKind::Accel => "acc",
            SensorKind::Gyro => "gyro",
        };
        let axis = match self.axis {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        write!(f, "{loc}_{kind}_{axis}")
    }
}
