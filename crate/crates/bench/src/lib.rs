//! Fixtures shared by the benchmarks.

use leafwise::ScenarioConfig;

/// Built-in scenario by name; panics on an unknown name.
pub fn scenario(name: &str) -> ScenarioConfig {
    leafwise::load_config(name).unwrap_or_else(|e| panic!("{name}: {e}"))
}
