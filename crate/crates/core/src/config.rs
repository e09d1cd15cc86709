//! TOML configuration files and the bundled fixtures.
//!
//! Frequencies are written as `/2pi` values in the units named by the key
//! suffix and converted to rad/s on load.
//!
//! ```toml
//! coupling_mode = "fixed_phase"    # or "exact_delay"
//! phase_over_pi = 1.0              # fixed_phase only
//!
//! [geometry]
//! a_mm = 22.9
//! d_y_mm = 46.0
//!
//! [couplings]
//! J12_MHz = 43.0                   # couples the two transmons with pair = 1
//! J34_MHz = 47.0                   # couples the two transmons with pair = 2
//! K_phi_kHz = 437.0
//!
//! [[transmon]]
//! frequency_GHz = 7.269            # or detuning_from_pi_MHz = -43.0
//! anharmonicity_MHz = 219.0
//! gamma_MHz = 29.8
//! gamma_nr_kHz = 15.0
//! kappa_phi_kHz = 100.0
//! x_mm = 0.0
//! pair = 1
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{CouplingMode, DirectCoupling, SystemConfig, TransmonParams};
use crate::waveguide::{WaveguideGeometry, SPEED_OF_LIGHT};

const TWO_PI: f64 = 2.0 * PI;

/// Fixtures shipped with the crate, addressable by file name.
pub const FIXTURES: &[(&str, &str)] = &[
    ("paper_tableS1.cfg", include_str!("../fixtures/paper_tableS1.cfg")),
    ("ideal_identical.cfg", include_str!("../fixtures/ideal_identical.cfg")),
    ("single_q1.cfg", include_str!("../fixtures/single_q1.cfg")),
    ("pair_q3q4.cfg", include_str!("../fixtures/pair_q3q4.cfg")),
    ("dark_pair.cfg", include_str!("../fixtures/dark_pair.cfg")),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    coupling_mode: RawMode,
    phase_over_pi: Option<f64>,
    #[serde(rename = "frame_GHz")]
    frame_ghz: Option<f64>,
    geometry: RawGeometry,
    #[serde(default)]
    couplings: RawCouplings,
    transmon: Vec<RawTransmon>,
    /// Free-form defaults for the experiment subcommands.
    experiment: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawMode {
    ExactDelay,
    FixedPhase,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    a_mm: f64,
    d_y_mm: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCouplings {
    #[serde(rename = "J12_MHz", default)]
    j12_mhz: f64,
    #[serde(rename = "J34_MHz", default)]
    j34_mhz: f64,
    #[serde(rename = "K_phi_kHz", default)]
    k_phi_khz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransmon {
    #[serde(rename = "frequency_GHz")]
    frequency_ghz: Option<f64>,
    #[serde(rename = "detuning_from_pi_MHz")]
    detuning_from_pi_mhz: Option<f64>,
    #[serde(rename = "anharmonicity_MHz")]
    anharmonicity_mhz: f64,
    #[serde(rename = "gamma_MHz")]
    gamma_mhz: f64,
    #[serde(rename = "gamma_nr_kHz", default)]
    gamma_nr_khz: f64,
    #[serde(rename = "kappa_phi_kHz", default)]
    kappa_phi_khz: f64,
    x_mm: f64,
    pair: u32,
}

/// A parsed configuration file.
#[derive(Clone, Debug)]
pub struct ConfigFile {
    pub system: SystemConfig,
    /// Contents of the optional `[experiment]` table.
    pub experiment: toml::Table,
    /// Raw bytes the configuration was parsed from.
    pub source: String,
}

/// Parse a configuration from TOML text. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: &str) -> Result<ConfigFile> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        if let Some(field) = msg.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            return Error::config(format!("{origin}: {field}"), msg.clone());
        }
        let at = e
            .span()
            .map(|s| {
                let line = text[..s.start].lines().count().max(1);
                format!("{origin}:{line}")
            })
            .unwrap_or_else(|| origin.to_string());
        Error::config(at, msg)
    })?;
    let system = build_system(&raw, origin)?;
    Ok(ConfigFile {
        system,
        experiment: raw.experiment.unwrap_or_default(),
        source: text.to_string(),
    })
}

fn build_system(raw: &RawConfig, origin: &str) -> Result<SystemConfig> {
    let geometry = WaveguideGeometry {
        a: raw.geometry.a_mm * 1e-3,
        d_y: raw.geometry.d_y_mm * 1e-3,
        c: SPEED_OF_LIGHT,
    };
    geometry
        .validate()
        .map_err(|e| Error::config(format!("{origin}: geometry"), e.to_string()))?;

    let coupling_mode = match raw.coupling_mode {
        RawMode::ExactDelay => {
            if raw.phase_over_pi.is_some() {
                return Err(Error::config(
                    format!("{origin}: phase_over_pi"),
                    "only valid with coupling_mode = \"fixed_phase\"",
                ));
            }
            CouplingMode::ExactDelay
        }
        RawMode::FixedPhase => {
            let p = raw.phase_over_pi.ok_or_else(|| {
                Error::config(format!("{origin}: phase_over_pi"), "required when coupling_mode = \"fixed_phase\"")
            })?;
            CouplingMode::FixedPhase { phase: p * PI }
        }
    };

    if raw.transmon.is_empty() {
        return Err(Error::config(format!("{origin}: transmon"), "at least one [[transmon]] block is required"));
    }
    let mut omega_pi = None;
    let mut transmons = Vec::with_capacity(raw.transmon.len());
    for (j, t) in raw.transmon.iter().enumerate() {
        let path = format!("{origin}: transmon[{j}]");
        let frequency = match (t.frequency_ghz, t.detuning_from_pi_mhz) {
            (Some(f), None) => f * 1e9 * TWO_PI,
            (None, Some(d)) => {
                let w = match omega_pi {
                    Some(w) => w,
                    None => {
                        let w = geometry
                            .decoherence_free_frequency()
                            .map_err(|e| Error::config(path.clone(), e.to_string()))?;
                        omega_pi = Some(w);
                        w
                    }
                };
                w + d * 1e6 * TWO_PI
            }
            _ => {
                return Err(Error::config(
                    path,
                    "exactly one of frequency_GHz and detuning_from_pi_MHz must be given",
                ))
            }
        };
        transmons.push(TransmonParams {
            frequency,
            anharmonicity: t.anharmonicity_mhz * 1e6 * TWO_PI,
            gamma: t.gamma_mhz * 1e6 * TWO_PI,
            gamma_nr: t.gamma_nr_khz * 1e3 * TWO_PI,
            kappa_phi: t.kappa_phi_khz * 1e3 * TWO_PI,
            x: t.x_mm * 1e-3,
            pair: t.pair,
        });
    }

    let mut direct = Vec::new();
    for (pair, j_mhz, key) in [(1, raw.couplings.j12_mhz, "J12_MHz"), (2, raw.couplings.j34_mhz, "J34_MHz")] {
        if j_mhz == 0.0 {
            continue;
        }
        let members: Vec<usize> = transmons
            .iter()
            .enumerate()
            .filter(|(_, t)| t.pair == pair)
            .map(|(j, _)| j)
            .collect();
        if members.len() != 2 {
            return Err(Error::config(
                format!("{origin}: couplings.{key}"),
                format!("needs exactly two transmons with pair = {pair}, found {}", members.len()),
            ));
        }
        direct.push(DirectCoupling {
            sites: (members[0], members[1]),
            strength: j_mhz * 1e6 * TWO_PI,
        });
    }

    let system = SystemConfig {
        transmons,
        direct,
        k_phi: raw.couplings.k_phi_khz * 1e3 * TWO_PI,
        geometry,
        coupling_mode,
        frame: raw.frame_ghz.unwrap_or(0.0) * 1e9 * TWO_PI,
    };
    system.validate().map_err(|e| Error::config(origin.to_string(), e.to_string()))?;
    Ok(system)
}

/// Load a configuration from disk, falling back to a bundled fixture of the same name.
pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    match std::fs::read_to_string(path) {
        Ok(text) => parse_config(&text, &origin),
        Err(e) => {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if path.components().count() == 1 {
                if let Some(text) = fixture_text(name) {
                    return parse_config(text, name);
                }
            }
            Err(Error::config(origin, format!("cannot read file: {e}")))
        }
    }
}

pub fn fixture_text(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// A bundled fixture by file name, e.g. `"ideal_identical.cfg"`.
pub fn fixture(name: &str) -> Result<SystemConfig> {
    let text = fixture_text(name).ok_or_else(|| Error::config(name, "no bundled fixture with this name"))?;
    Ok(parse_config(text, name)?.system)
}
