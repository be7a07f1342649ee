//! The shipped traffic case study: three traffic sources for an urban flood
//! scenario, and the scripts that replay it.

use crate::simulator::SimulationScript;
use crate::taxonomy::{load_registry, Registry};

/// Registry document with traffic sensors (standard), floating car data and
/// remote sensing.
pub const REGISTRY_JSON: &str = include_str!("../fixtures/case-study-registry.json");

/// Flood script: traffic sensors lose power, floating car data takes over,
/// then the cellular network fails and remote sensing is activated with its
/// full 20 minute delay.
pub const FLOOD_SCRIPT: &str = include_str!("../fixtures/flood.json");

/// Like [`FLOOD_SCRIPT`], with the control center pre-activating remote
/// sensing before the cellular failure.
pub const FLOOD_PREACTIVATED_SCRIPT: &str = include_str!("../fixtures/flood-preactivated.json");

/// [`FLOOD_SCRIPT`] extended until remote sensing also fails, leaving no
/// source and raising an alarm.
pub const FLOOD_EXTENDED_SCRIPT: &str = include_str!("../fixtures/flood-extended.json");

/// Traffic sensors fail and later recover; the manager switches back.
pub const RECOVERY_SCRIPT: &str = include_str!("../fixtures/recovery.json");

/// Implausible measurements degrade a source; normal data restores it.
pub const FAULT_INJECTION_SCRIPT: &str = include_str!("../fixtures/fault-injection.json");

/// All traffic sources fail; a drone source registered afterwards resolves
/// the alarm.
pub const DRONE_SCRIPT: &str = include_str!("../fixtures/drone.json");

pub fn registry() -> Registry {
    load_registry(REGISTRY_JSON).expect("shipped case-study registry is valid")
}

/// All shipped scripts as `(file name, contents)`.
pub fn scripts() -> [(&'static str, &'static str); 6] {
    [
        ("flood.json", FLOOD_SCRIPT),
        ("flood-preactivated.json", FLOOD_PREACTIVATED_SCRIPT),
        ("flood-extended.json", FLOOD_EXTENDED_SCRIPT),
        ("recovery.json", RECOVERY_SCRIPT),
        ("fault-injection.json", FAULT_INJECTION_SCRIPT),
        ("drone.json", DRONE_SCRIPT),
    ]
}

pub fn script(text: &str) -> SimulationScript {
    SimulationScript::from_json(text).expect("shipped script is valid")
}
