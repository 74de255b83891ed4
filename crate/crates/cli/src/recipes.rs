//! Built-in experiment recipes. Names are stable identifiers.

pub struct Recipe {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

macro_rules! recipe {
    ($name:literal, $summary:literal) => {
        Recipe { name: $name, summary: $summary, toml: include_str!(concat!("../recipes/", $name, ".toml")) }
    };
}

pub const RECIPES: &[Recipe] = &[
    recipe!("example1-lowerbound", "Lloyd placement of 3 ports on the path-loss lower bound, radius/R for alpha = 2..6"),
    recipe!("fig-trajectory-a6", "Stochastic-placement trajectory of 3 ports, alpha = 6, 8 dB shadowing"),
    recipe!("radius-vs-alpha", "Optimal 3-port radius against alpha, receiver-only vs transmitter CSI"),
    recipe!("power-gain", "Power gain of optimized 3-port layouts over a colocated array vs target rate"),
    recipe!("non-circular", "Stochastic placement of 6 and 12 ports (non-circular optima)"),
    recipe!("interference-shrinkage", "Interference-aware 7-port placement over gamma = 0..1"),
    recipe!("power-ratio-vs-gamma", "Central vs peripheral power split of a 6-around-1 layout over gamma"),
    recipe!("ase-curve", "Area spectral efficiency against cell radius at fixed transmit power"),
    recipe!("capacity-vs-gamma", "Cell-averaged rate of a 6-around-1 layout over gamma"),
];

pub fn find(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}
