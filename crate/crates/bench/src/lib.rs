//! Inputs shared by the benchmarks.

use dsm_core::monitor::Payload;
use dsm_core::testkit::random_registry;
use dsm_core::{ObservationRecord, RecordBody, Registry, ScenarioStore, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Registry with `sources` random sources of a single data type.
pub fn registry(sources: usize) -> Registry {
    random_registry(&mut ChaCha8Rng::seed_from_u64(1), sources, 1)
}

/// In-memory store holding `records` observations appended out of order.
pub fn shuffled_store(records: usize) -> ScenarioStore {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ScenarioStore::in_memory();
    for _ in 0..records {
        let t = Timestamp(rng.random_range(0..3_600_000));
        store
            .append(
                None,
                RecordBody::Observation(ObservationRecord {
                    source_id: "s".into(),
                    event_time: t,
                    arrival_time: t,
                    payload: Payload::Measurement {
                        value: 1.0,
                        unit: "km/h".into(),
                    },
                    quality: None,
                }),
            )
            .expect("in-memory append");
    }
    store
}
