//! Gates, step sizes and resolutions shared by every pipeline stage.
//!
//! All values can be overridden from a TOML settings file; missing keys keep
//! their defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Residual tolerance for Newton solves.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative gate (times ||A||) for counting kernel eigenvalues.
    pub null_gate: f64,
    /// Below this |<p,q>| the left null vector is unit-normalized and flagged.
    pub bt_gate: f64,
    /// |Re lambda| below this makes an equilibrium non-hyperbolic.
    pub hyp_gate: f64,

    pub h_min: f64,
    pub h_max: f64,
    pub h_init: f64,
    /// Corrected sub-samples emitted per accepted continuation step.
    pub dense_output: usize,
    pub max_steps: usize,
    /// Minimal |eigenvalue| below which a branch sample is a fold candidate.
    pub fold_gate: f64,
    pub closure_tol: f64,
    pub edge_tol: f64,
    pub dedup_tol: f64,
    /// Random state starts are drawn from the cube [-r, r]^n.
    pub state_radius: f64,
    /// Length scale of the state in the box-scaled product metric.
    pub state_scale: f64,
    /// Equilibria with ||x|| beyond this are discarded.
    pub state_cap: f64,
    pub grid: usize,
    pub restarts: usize,
    pub seed: u64,
    pub seed_gate: f64,
    pub jump_gate_factor: f64,
    pub transport_gate: f64,
    /// Number of sample points per edge used to seed branch tracing.
    pub boundary_samples: usize,

    pub cusp_gate: f64,
    pub cusp_trigger: f64,
    pub hopf_gate: f64,
    pub gap_min: f64,

    pub membership_grid: usize,
    pub membership_starts: usize,
    pub adjacency_factor: f64,

    pub max_curve_points: usize,
    pub oracle_points: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            null_gate: 1e-6,
            bt_gate: 1e-4,
            hyp_gate: 1e-8,
            h_min: 1e-5,
            h_max: 0.05,
            h_init: 0.01,
            dense_output: 8,
            max_steps: 20_000,
            fold_gate: 1e-4,
            closure_tol: 0.0125,
            edge_tol: 1e-9,
            dedup_tol: 1e-3,
            state_radius: 2.0,
            state_scale: 1.0,
            state_cap: 50.0,
            grid: 40,
            restarts: 8,
            seed: 0x5eed_cafe,
            seed_gate: 0.5,
            jump_gate_factor: 10.0,
            transport_gate: 0.9,
            boundary_samples: 9,
            cusp_gate: 1e-8,
            cusp_trigger: 1e-4,
            hopf_gate: 1e-3,
            gap_min: 5.0,
            membership_grid: 60,
            membership_starts: 10,
            adjacency_factor: 2.5,
            max_curve_points: 5000,
            oracle_points: 200_001,
        }
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse { line, msg: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override_keeps_defaults() {
        let s = Settings::from_toml("grid = 12\nseed = 7\n").unwrap();
        assert_eq!(s.grid, 12);
        assert_eq!(s.seed, 7);
        assert_eq!(s.h_max, 0.05);
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let err = Settings::from_toml("grdi = 12\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn toml_round_trip() {
        let s = Settings::default();
        assert_eq!(Settings::from_toml(&s.to_toml()).unwrap(), s);
    }
}
