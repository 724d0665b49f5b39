#![allow(dead_code)]

use junction_core::config::parse_config;
use junction_core::controller::EnvConfig;

/// Environment with dedicated or shared lanes and a uniform demand.
pub fn env(rv_penetration: f64, per_movement: f64, shared: bool) -> EnvConfig {
    let text = format!(
        r#"
[scenario]
name = "test"
rv_penetration = {rv_penetration}

[intersection]
lane_mode = "{}"
"#,
        if shared { "shared" } else { "dedicated" }
    );
    parse_config(&text).unwrap().env_config([per_movement; 8]).unwrap()
}
