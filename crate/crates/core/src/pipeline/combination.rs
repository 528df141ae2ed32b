use serde::Serialize;

use crate::ingest::{ChannelId, Location, SensorKind};

/// One input configuration: a named, ordered subset of the 18 channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignalCombination {
    pub id: char,
    /// Row label used in reports, e.g. "Chest and Ankle IMU".
    pub name: &'static str,
    pub channels: Vec<ChannelId>,
}

impl SignalCombination {
    pub fn modality(&self) -> usize {
        self.channels.len()
    }

    /// Name with the catalog letter, e.g. "Chest and Ankle IMU (l)".
    pub fn label(&self) -> String {
        format!("{} ({})", self.name, self.id)
    }
}

use Location::{Ankle, Chest, Hand};
use SensorKind::{Accel, Gyro};

const ALL: [Location; 3] = [Hand, Chest, Ankle];
const BOTH: [SensorKind; 2] = [Accel, Gyro];

const CATALOG: [(char, &str, &[Location], &[SensorKind]); 15] = [
    ('a', "Gyrometer", &ALL, &[Gyro]),
    ('b', "Accelerometer", &ALL, &[Accel]),
    ('c', "All 3 IMUs", &ALL, &BOTH),
    ('d', "Ankle IMU", &[Ankle], &BOTH),
    ('e', "Hand IMU", &[Hand], &BOTH),
    ('f', "Chest IMU", &[Chest], &BOTH),
    ('g', "Hand and Ankle Gyrometer", &[Hand, Ankle], &[Gyro]),
    ('h', "Hand and Ankle Accelerometer", &[Hand, Ankle], &[Accel]),
    ('i', "Hand and Ankle IMU", &[Hand, Ankle], &BOTH),
    ('j', "Chest and Ankle Gyrometer", &[Chest, Ankle], &[Gyro]),
    ('k', "Chest and Ankle Accelerometer", &[Chest, Ankle], &[Accel]),
    ('l', "Chest and Ankle IMU", &[Chest, Ankle], &BOTH),
    ('m', "Hand and Chest Gyrometer", &[Hand, Chest], &[Gyro]),
    ('n', "Hand and Chest Accelerometer", &[Hand, Chest], &[Accel]),
    ('o', "Hand and Chest IMU", &[Hand, Chest], &BOTH),
];

/// All fifteen combinations in catalog order a–o.
pub fn combination_catalog() -> Vec<SignalCombination> {
    CATALOG
        .iter()
        .map(|&(id, name, locations, kinds)| {
            let mut channels: Vec<ChannelId> = locations
                .iter()
                .flat_map(|&loc| kinds.iter().flat_map(move |&kind| ChannelId::triple(loc, kind)))
                .collect();
            channels.sort();
            SignalCombination { id, name, channels }
        })
        .collect()
}

pub fn combination(id: char) -> Option<SignalCombination> {
    combination_catalog().into_iter().find(|c| c.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_modalities() {
        let catalog = combination_catalog();
        let ids: String = catalog.iter().map(|c| c.id).collect();
        assert_eq!(ids, "abcdefghijklmno");
        let modalities: Vec<usize> = catalog.iter().map(|c| c.modality()).collect();
        assert_eq!(modalities, [9, 9, 18, 6, 6, 6, 6, 6, 12, 6, 6, 12, 6, 6, 12]);
    }

    #[test]
    fn channel_contents() {
        let c = combination('c').unwrap();
        assert_eq!(c.channels, ChannelId::all().collect::<Vec<_>>());

        let l = combination('l').unwrap();
        assert!(l.channels.iter().all(|ch| ch.location != Hand));
        assert_eq!(l.modality(), 12);
        assert_eq!(l.label(), "Chest and Ankle IMU (l)");

        let g = combination('g').unwrap();
        assert!(g.channels.iter().all(|ch| ch.kind == Gyro && ch.location != Chest));
        assert_eq!(g.modality(), 6);

        let e = combination('e').unwrap();
        assert!(e.channels.iter().all(|ch| ch.location == Hand));
        assert!(combination('p').is_none());
    }
}
