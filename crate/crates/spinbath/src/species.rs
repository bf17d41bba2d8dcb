//! Spin species data: quantum numbers, gyromagnetic ratios, quadrupole
//! couplings, natural abundances, and the registry file format.

use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Bohr magneton over hbar, rad ms^-1 G^-1.
pub const MU_B_RAD_PER_MS_G: f64 = 8794.100572;
/// Nuclear magneton over hbar, rad ms^-1 G^-1.
pub const MU_N_RAD_PER_MS_G: f64 = 4.7894077;
/// Free-electron g-factor.
pub const G_FREE_ELECTRON: f64 = 2.00231930436;
/// Conversion factor: couplings quoted in MHz become rad/ms.
pub const MHZ_TO_RAD_PER_MS: f64 = 2.0 * std::f64::consts::PI * 1e3;
/// hbar mu0 / 4pi in rad/ms per (rad ms^-1 G^-1)^2 / Angstrom^3; fixes the
/// point-dipole coupling scale in the internal unit system.
pub const DIPOLE_PREFACTOR: f64 = 1.054571817;

#[derive(Debug, Error)]
pub enum SpeciesError {
    #[error("species registry line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown species '{0}'")]
    Unknown(String),
}

/// Physical identity of a spin: quantum number, gyromagnetic ratio
/// (rad ms^-1 G^-1), axial quadrupole coupling (rad/ms), natural abundance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSpecies {
    pub name: String,
    pub s: f64,
    pub gamma: f64,
    pub quadrupole_p: f64,
    pub abundance: f64,
}

impl SpinSpecies {
    pub fn new(name: &str, s: f64, gamma: f64, quadrupole_p: f64, abundance: f64) -> Self {
        assert!(
            crate::algebra::is_half_integer(s) && s >= 0.5,
            "spin must be a positive half-integer"
        );
        assert!((0.0..=1.0).contains(&abundance), "abundance must be in [0,1]");
        assert!(
            s > 0.5 || quadrupole_p == 0.0,
            "spin-1/2 species cannot carry a quadrupole coupling"
        );
        Self {
            name: name.to_string(),
            s,
            gamma,
            quadrupole_p,
            abundance,
        }
    }

    pub fn dim(&self) -> usize {
        crate::algebra::spin_dim(self.s)
    }
}

/// Lookup table of spin species by name.
#[derive(Debug, Clone)]
pub struct SpeciesRegistry {
    map: BTreeMap<String, Arc<SpinSpecies>>,
}

impl SpeciesRegistry {
    /// Registry with the species used by the shipped presets.
    ///
    /// Gyromagnetic ratios are in rad ms^-1 G^-1; the nuclear values for 51V
    /// and 63Cu come from g_N times the nuclear magneton.
    pub fn builtin() -> Self {
        let mut reg = Self { map: BTreeMap::new() };
        reg.insert(SpinSpecies::new("H", 0.5, 26.7522, 0.0, 1.0));
        reg.insert(SpinSpecies::new("D", 1.0, 4.1065, 0.0, 1.0));
        reg.insert(SpinSpecies::new(
            "e",
            0.5,
            G_FREE_ELECTRON * MU_B_RAD_PER_MS_G,
            0.0,
            1.0,
        ));
        // 51V: g_N = 1.46837, mu_N = 7.6227 MHz/T.
        reg.insert(SpinSpecies::new("V51", 3.5, 1.46837 * 7.6227 * 2e-3 * std::f64::consts::PI, 0.0, 0.9975));
        // 63Cu: g_N = 1.484, mu_N = 7.624 MHz/T.
        reg.insert(SpinSpecies::new("Cu63", 1.5, 1.484 * 7.624 * 2e-3 * std::f64::consts::PI, 0.0, 0.6917));
        reg.insert(SpinSpecies::new("C13", 0.5, 6.7283, 0.0, 0.0107));
        reg.insert(SpinSpecies::new("N14", 1.0, 1.9338, 0.0, 0.9964));
        reg
    }

    pub fn insert(&mut self, species: SpinSpecies) {
        self.map.insert(species.name.clone(), Arc::new(species));
    }

    pub fn get(&self, name: &str) -> Result<Arc<SpinSpecies>, SpeciesError> {
        self.map
            .get(name)
            .cloned()
            .ok_or_else(|| SpeciesError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    /// Parses a registry file and merges it over the builtin table.
    ///
    /// Format, one species per line: `name s gamma_rad_per_ms_G quadrupole_MHz
    /// abundance`. Spin accepts `1/2` or `0.5`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, SpeciesError> {
        let mut reg = Self::builtin();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(SpeciesError::Parse {
                    line: line_no,
                    msg: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let s = parse_spin(fields[1]).ok_or_else(|| SpeciesError::Parse {
                line: line_no,
                msg: format!("bad spin '{}'", fields[1]),
            })?;
            let parse_f = |field: &str, what: &str| -> Result<f64, SpeciesError> {
                field.parse::<f64>().map_err(|_| SpeciesError::Parse {
                    line: line_no,
                    msg: format!("bad {what} '{field}'"),
                })
            };
            let gamma = parse_f(fields[2], "gamma")?;
            let quad_mhz = parse_f(fields[3], "quadrupole")?;
            let abundance = parse_f(fields[4], "abundance")?;
            if !(0.0..=1.0).contains(&abundance) {
                return Err(SpeciesError::Parse {
                    line: line_no,
                    msg: format!("abundance {abundance} outside [0,1]"),
                });
            }
            if s <= 0.5 && quad_mhz != 0.0 {
                return Err(SpeciesError::Parse {
                    line: line_no,
                    msg: "spin-1/2 species cannot have a quadrupole coupling".into(),
                });
            }
            reg.insert(SpinSpecies::new(
                fields[0],
                s,
                gamma,
                quad_mhz * MHZ_TO_RAD_PER_MS,
                abundance,
            ));
        }
        Ok(reg)
    }
}

fn parse_spin(text: &str) -> Option<f64> {
    let value = if let Some((num, den)) = text.split_once('/') {
        num.parse::<f64>().ok()? / den.parse::<f64>().ok()?
    } else {
        text.parse::<f64>().ok()?
    };
    if crate::algebra::is_half_integer(value) && value >= 0.5 {
        Some(value)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_gammas_match_reference_values() {
        let reg = SpeciesRegistry::builtin();
        assert_eq!(reg.get("H").unwrap().gamma, 26.7522);
        assert_eq!(reg.get("D").unwrap().gamma, 4.1065);
        // Free electron: 1.76086e11 rad/s/T.
        let e = reg.get("e").unwrap();
        assert!((e.gamma - 17608.59) .abs() < 0.05);
        // 51V back-converted to MHz/T over g_N recovers the nuclear magneton.
        let v = reg.get("V51").unwrap();
        let mu_n_mhz_per_t = v.gamma / (2.0 * std::f64::consts::PI * 1e-3) / 1.46837;
        assert!((mu_n_mhz_per_t - 7.6227).abs() < 1e-3);
        assert_eq!(v.dim(), 8);
        let cu = reg.get("Cu63").unwrap();
        let mu_n_mhz_per_t = cu.gamma / (2.0 * std::f64::consts::PI * 1e-3) / 1.484;
        assert!((mu_n_mhz_per_t - 7.624).abs() < 1e-3);
        assert_eq!(cu.dim(), 4);
    }

    #[test]
    fn parse_registry_line() {
        let reg = SpeciesRegistry::parse("X 3/2 1.25 0.5 0.9  # labelled test species\n").unwrap();
        let x = reg.get("X").unwrap();
        assert_eq!(x.s, 1.5);
        assert_eq!(x.gamma, 1.25);
        assert!((x.quadrupole_p - 0.5 * MHZ_TO_RAD_PER_MS).abs() < 1e-12);
        assert_eq!(x.abundance, 0.9);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        assert!(SpeciesRegistry::parse("X 0.4 1.0 0 1").is_err());
        assert!(SpeciesRegistry::parse("X 1/2 1.0 0.5 1").is_err());
        assert!(SpeciesRegistry::parse("X 1/2 1.0 0").is_err());
        let err = SpeciesRegistry::parse("\nX 1/2 zz 0 1").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_species_is_error() {
        assert!(SpeciesRegistry::builtin().get("Xx99").is_err());
    }
}
