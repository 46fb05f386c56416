//! Scenarios shipped with the crate.

use super::params::ScenarioParams;
use super::parse::parse_scenario;

pub const CANONICAL: &str = include_str!("../../scenarios/canonical.toml");
pub const DECOUPLED: &str = include_str!("../../scenarios/decoupled.toml");

/// Built-in scenario text by name.
pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "canonical" => Some(CANONICAL),
        "decoupled" => Some(DECOUPLED),
        _ => None,
    }
}

/// Scalar scenario with coupling in both dynamics and costs.
pub fn canonical() -> ScenarioParams {
    parse_scenario(CANONICAL).expect("built-in scenario parses")
}

/// The canonical scenario with every interaction switched off.
pub fn decoupled() -> ScenarioParams {
    parse_scenario(DECOUPLED).expect("built-in scenario parses")
}
