//! Scenarios shipped with the binary.

use crate::error::CliResult;
use crate::scenario::{parse, Scenario};

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".json")))),*]
    };
}

/// `(name, source text)` of every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = bundled!(
    "fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig3b", "fig3c", "fig3d", "fig3d_laser_free", "fig3e",
    "fig3f", "fig4a", "fig4c", "fig4c_static", "fig4d", "supfig3", "supfig5", "supfig6", "supfig6_coherence", "supfig7", "supfig7_static",
    "calib_bessel", "calib_ram", "calib_aod",
);

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub figure: String,
    pub kind: String,
    pub runtime_budget_s: f64,
    pub description: String,
}

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Option<CliResult<Scenario>> {
    source(name).map(parse)
}

pub fn list() -> CliResult<Vec<CatalogEntry>> {
    BUNDLED
        .iter()
        .map(|(_, text)| {
            let s = parse(text)?;
            Ok(CatalogEntry {
                name: s.name,
                figure: s.figure.unwrap_or_default(),
                kind: s.kind.as_str().to_string(),
                runtime_budget_s: s.runtime_budget_s,
                description: s.description.unwrap_or_default(),
            })
        })
        .collect()
}
