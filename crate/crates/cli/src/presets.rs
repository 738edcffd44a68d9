//! Configs shipped with the binary.

use crate::config::RunConfig;
use crate::error::Result;

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

pub const PRESETS: [Preset; 6] = [
    Preset {
        name: "fig2-strong",
        summary: "polarization vs Omega2/Omega1, strong coupling (g = 0.04 Omega1)",
        source: include_str!("../presets/fig2-strong.toml"),
    },
    Preset {
        name: "fig2-weak",
        summary: "polarization vs Omega2/Omega1, weak coupling with noise (g = 0.01 Omega1)",
        source: include_str!("../presets/fig2-weak.toml"),
    },
    Preset {
        name: "fig3",
        summary: "coherence time vs Omega2/Omega1",
        source: include_str!("../presets/fig3.toml"),
    },
    Preset {
        name: "fig4",
        summary: "AM control scan and three-nucleus sensing spectrum",
        source: include_str!("../presets/fig4.toml"),
    },
    Preset {
        name: "supp-polar1",
        summary: "resonance-shift scan at Omega2=1.2 Omega1",
        source: include_str!("../presets/supp-polar1.toml"),
    },
    Preset {
        name: "power-table",
        summary: "peak and cycle power ratios against Hartmann-Hahn",
        source: include_str!("../presets/power-table.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// `name: summary` for every preset.
pub fn list_presets() -> Vec<String> {
    PRESETS
        .iter()
        .map(|p| format!("{}: {}", p.name, p.summary))
        .collect()
}

impl Preset {
    pub fn config(&self, smoke: bool) -> Result<RunConfig> {
        RunConfig::from_toml(self.source, smoke)
    }
}
