//! Flat key = value configuration files driving every command, with a
//! canonical echo form so runs are reproducible from their own output.

use crate::hamiltonian::{CentralSystem, CentralCoupling, CouplingOptions, OwnNucleus, QubitTargets};
use crate::pulse::{PulseAxis, PulseSequence};
use crate::species::{SpeciesError, SpeciesRegistry, MHZ_TO_RAD_PER_MS};
use nalgebra::{Matrix3, Vector3};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected 'key = value', found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("config field '{field}': {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error(transparent)]
    Species(#[from] SpeciesError),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BathKind {
    NuclearH,
    NuclearD,
    Electron,
    Mixed,
}

impl BathKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BathKind::NuclearH => "nuclear-h",
            BathKind::NuclearD => "nuclear-d",
            BathKind::Electron => "electron",
            BathKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElectronBathG {
    Free,
    Host,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Curve,
    Scan,
    Power,
}

/// Everything a simulation run needs, resolved from one config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub structure: Option<PathBuf>,
    pub species: Option<PathBuf>,

    pub electron_s: f64,
    pub g_perp: f64,
    pub g_par: f64,
    pub own_nucleus: Option<String>,
    pub hyperfine_perp_mhz: f64,
    pub hyperfine_par_mhz: f64,
    pub quadrupole_mhz: f64,
    pub field_gauss: [f64; 3],
    pub qubit_ms: [f64; 2],
    pub qubit_mi: [f64; 2],

    pub bath: BathKind,
    pub r_bath: f64,
    pub r_dipole: f64,
    pub order: usize,
    pub concentration: f64,
    pub n_realizations: usize,
    pub n_meanfield_samples: usize,
    pub electron_bath_g: ElectronBathG,
    pub central_coupling: CentralCoupling,
    pub bath_bath_coupling: bool,
    pub cluster_cap: usize,
    pub dim_cap: usize,

    pub sequence: String,
    pub n_pulses: u32,
    pub pulse_axis: PulseAxis,

    pub t_max_ms: f64,
    pub n_points: usize,
    pub seed: u64,
    pub fit: bool,

    pub concentrations: Vec<f64>,
    pub crossover_targets_ms: Vec<f64>,
    pub pulses: Vec<u32>,

    pub verify_n_spins: usize,
    pub verify_box: f64,
    pub verify_min_dist: f64,

    pub fit_input: Option<PathBuf>,
    pub fit_kind: FitKind,

    /// Directory paths are resolved against (the config file's directory).
    pub base_dir: PathBuf,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            structure: None,
            species: None,
            electron_s: 0.5,
            g_perp: crate::species::G_FREE_ELECTRON,
            g_par: crate::species::G_FREE_ELECTRON,
            own_nucleus: None,
            hyperfine_perp_mhz: 0.0,
            hyperfine_par_mhz: 0.0,
            quadrupole_mhz: 0.0,
            field_gauss: [0.0, 0.0, 3300.0],
            qubit_ms: [-0.5, 0.5],
            qubit_mi: [-0.5, -0.5],
            bath: BathKind::NuclearH,
            r_bath: 20.0,
            r_dipole: 8.0,
            order: 2,
            concentration: 0.02,
            n_realizations: 1,
            n_meanfield_samples: 8,
            electron_bath_g: ElectronBathG::Free,
            central_coupling: CentralCoupling::PointDipole,
            bath_bath_coupling: true,
            cluster_cap: crate::cluster::DEFAULT_CLUSTER_CAP,
            dim_cap: crate::hamiltonian::DEFAULT_DIM_CAP,
            sequence: "hahn".into(),
            n_pulses: 1,
            pulse_axis: PulseAxis::Y,
            t_max_ms: 0.05,
            n_points: 101,
            seed: 1,
            fit: true,
            concentrations: Vec::new(),
            crossover_targets_ms: Vec::new(),
            pulses: Vec::new(),
            verify_n_spins: 4,
            verify_box: 10.0,
            verify_min_dist: 1.5,
            fit_input: None,
            fit_kind: FitKind::Curve,
            base_dir: PathBuf::from("."),
        }
    }
}

fn parse_f64(field: &'static str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| ConfigError::Invalid {
        field,
        msg: format!("'{v}' is not a number"),
    })
}

fn parse_usize(field: &'static str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| ConfigError::Invalid {
        field,
        msg: format!("'{v}' is not a non-negative integer"),
    })
}

fn parse_list_f64(field: &'static str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split_whitespace().map(|t| parse_f64(field, t)).collect()
}

fn parse_pair(field: &'static str, v: &str) -> Result<[f64; 2], ConfigError> {
    let list = parse_list_f64(field, v)?;
    if list.len() != 2 {
        return Err(ConfigError::Invalid {
            field,
            msg: format!("expected 2 numbers, found {}", list.len()),
        });
    }
    Ok([list[0], list[1]])
}

impl SimulationConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let mut cfg = Self {
            base_dir,
            ..Self::default()
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: line.to_string(),
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "structure" => cfg.structure = Some(PathBuf::from(v)),
                "species" => cfg.species = Some(PathBuf::from(v)),
                "electron_s" => cfg.electron_s = parse_f64("electron_s", v)?,
                "g_perp" => cfg.g_perp = parse_f64("g_perp", v)?,
                "g_par" => cfg.g_par = parse_f64("g_par", v)?,
                "own_nucleus" => {
                    cfg.own_nucleus = if v == "none" { None } else { Some(v.to_string()) }
                }
                "hyperfine_perp_mhz" => {
                    cfg.hyperfine_perp_mhz = parse_f64("hyperfine_perp_mhz", v)?
                }
                "hyperfine_par_mhz" => cfg.hyperfine_par_mhz = parse_f64("hyperfine_par_mhz", v)?,
                "quadrupole_mhz" => cfg.quadrupole_mhz = parse_f64("quadrupole_mhz", v)?,
                "field_gauss" => {
                    let list = parse_list_f64("field_gauss", v)?;
                    if list.len() != 3 {
                        return Err(ConfigError::Invalid {
                            field: "field_gauss",
                            msg: format!("expected 3 numbers, found {}", list.len()),
                        });
                    }
                    cfg.field_gauss = [list[0], list[1], list[2]];
                }
                "qubit_ms" => cfg.qubit_ms = parse_pair("qubit_ms", v)?,
                "qubit_mi" => cfg.qubit_mi = parse_pair("qubit_mi", v)?,
                "bath" => {
                    cfg.bath = match v {
                        "nuclear-h" => BathKind::NuclearH,
                        "nuclear-d" => BathKind::NuclearD,
                        "electron" => BathKind::Electron,
                        "mixed" => BathKind::Mixed,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "bath",
                                msg: format!(
                                    "'{other}' is not one of nuclear-h|nuclear-d|electron|mixed"
                                ),
                            })
                        }
                    }
                }
                "r_bath" => cfg.r_bath = parse_f64("r_bath", v)?,
                "r_dipole" => cfg.r_dipole = parse_f64("r_dipole", v)?,
                "order" => cfg.order = parse_usize("order", v)?,
                "concentration" => cfg.concentration = parse_f64("concentration", v)?,
                "n_realizations" => cfg.n_realizations = parse_usize("n_realizations", v)?,
                "n_meanfield_samples" => {
                    cfg.n_meanfield_samples = parse_usize("n_meanfield_samples", v)?
                }
                "electron_bath_g" => {
                    cfg.electron_bath_g = match v {
                        "free" => ElectronBathG::Free,
                        "host" => ElectronBathG::Host,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "electron_bath_g",
                                msg: format!("'{other}' is not free|host"),
                            })
                        }
                    }
                }
                "central_coupling" => {
                    cfg.central_coupling = match v {
                        "full" => CentralCoupling::PointDipole,
                        "secular-zz" => CentralCoupling::SecularZz,
                        "off" => CentralCoupling::Off,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "central_coupling",
                                msg: format!("'{other}' is not full|secular-zz|off"),
                            })
                        }
                    }
                }
                "bath_bath_coupling" => {
                    cfg.bath_bath_coupling = match v {
                        "on" => true,
                        "off" => false,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "bath_bath_coupling",
                                msg: format!("'{other}' is not on|off"),
                            })
                        }
                    }
                }
                "cluster_cap" => cfg.cluster_cap = parse_usize("cluster_cap", v)?,
                "dim_cap" => cfg.dim_cap = parse_usize("dim_cap", v)?,
                "sequence" => {
                    if !matches!(v, "hahn" | "fid" | "cpmg") {
                        return Err(ConfigError::Invalid {
                            field: "sequence",
                            msg: format!("'{v}' is not hahn|fid|cpmg"),
                        });
                    }
                    cfg.sequence = v.to_string();
                }
                "n_pulses" => {
                    cfg.n_pulses = v.parse().map_err(|_| ConfigError::Invalid {
                        field: "n_pulses",
                        msg: format!("'{v}' is not a positive integer"),
                    })?
                }
                "pulse_axis" => {
                    cfg.pulse_axis = match v {
                        "x" => PulseAxis::X,
                        "y" => PulseAxis::Y,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "pulse_axis",
                                msg: format!("'{other}' is not x|y"),
                            })
                        }
                    }
                }
                "t_max_ms" => cfg.t_max_ms = parse_f64("t_max_ms", v)?,
                "n_points" => cfg.n_points = parse_usize("n_points", v)?,
                "seed" => {
                    cfg.seed = v.parse().map_err(|_| ConfigError::Invalid {
                        field: "seed",
                        msg: format!("'{v}' is not a u64"),
                    })?
                }
                "fit" => {
                    cfg.fit = match v {
                        "stretched" => true,
                        "none" => false,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "fit",
                                msg: format!("'{other}' is not stretched|none"),
                            })
                        }
                    }
                }
                "concentrations" => cfg.concentrations = parse_list_f64("concentrations", v)?,
                "crossover_targets_ms" => {
                    cfg.crossover_targets_ms = parse_list_f64("crossover_targets_ms", v)?
                }
                "pulses" => {
                    cfg.pulses = v
                        .split_whitespace()
                        .map(|t| {
                            t.parse::<u32>().map_err(|_| ConfigError::Invalid {
                                field: "pulses",
                                msg: format!("'{t}' is not a positive integer"),
                            })
                        })
                        .collect::<Result<_, _>>()?
                }
                "verify_n_spins" => cfg.verify_n_spins = parse_usize("verify_n_spins", v)?,
                "verify_box" => cfg.verify_box = parse_f64("verify_box", v)?,
                "verify_min_dist" => cfg.verify_min_dist = parse_f64("verify_min_dist", v)?,
                "fit_input" => cfg.fit_input = Some(PathBuf::from(v)),
                "fit_kind" => {
                    cfg.fit_kind = match v {
                        "curve" => FitKind::Curve,
                        "scan" => FitKind::Scan,
                        "power" => FitKind::Power,
                        other => {
                            return Err(ConfigError::Invalid {
                                field: "fit_kind",
                                msg: format!("'{other}' is not curve|scan|power"),
                            })
                        }
                    }
                }
                other => {
                    return Err(ConfigError::UnknownKey {
                        line: line_no,
                        key: other.to_string(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, msg: String| Err(ConfigError::Invalid { field, msg });
        if self.r_bath <= 0.0 {
            return bad("r_bath", format!("must be positive, got {}", self.r_bath));
        }
        if self.r_dipole <= 0.0 {
            return bad("r_dipole", format!("must be positive, got {}", self.r_dipole));
        }
        if self.order < 1 {
            return bad("order", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.concentration) {
            return bad(
                "concentration",
                format!("must be in [0,1], got {}", self.concentration),
            );
        }
        if self.n_points < 2 {
            return bad("n_points", "need at least two grid points".into());
        }
        if self.t_max_ms <= 0.0 {
            return bad("t_max_ms", "must be positive".into());
        }
        if self.n_realizations < 1 {
            return bad("n_realizations", "must be at least 1".into());
        }
        if self.n_meanfield_samples < 1 {
            return bad("n_meanfield_samples", "must be at least 1".into());
        }
        if self.sequence == "cpmg" && self.n_pulses < 1 {
            return bad("n_pulses", "CPMG needs at least one pulse".into());
        }
        if self.qubit_ms[0] == self.qubit_ms[1] && self.qubit_mi[0] == self.qubit_mi[1] {
            return bad("qubit_ms", "the two qubit levels must be distinct".into());
        }
        if !crate::algebra::is_half_integer(self.electron_s) || self.electron_s < 0.5 {
            return bad("electron_s", format!("{} is not a positive half-integer", self.electron_s));
        }
        if self.verify_n_spins < 1 || self.verify_box <= 0.0 || self.verify_min_dist <= 0.0 {
            return bad("verify_n_spins", "synthetic bath needs n >= 1 and positive geometry".into());
        }
        Ok(())
    }

    /// Canonical echo: every key in a fixed order, parseable back into an
    /// identical configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let joinf = |xs: &[f64]| {
            xs.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        if let Some(p) = &self.structure {
            out += &format!("structure = {}\n", p.display());
        }
        if let Some(p) = &self.species {
            out += &format!("species = {}\n", p.display());
        }
        out += &format!("electron_s = {}\n", self.electron_s);
        out += &format!("g_perp = {}\n", self.g_perp);
        out += &format!("g_par = {}\n", self.g_par);
        out += &format!(
            "own_nucleus = {}\n",
            self.own_nucleus.as_deref().unwrap_or("none")
        );
        out += &format!("hyperfine_perp_mhz = {}\n", self.hyperfine_perp_mhz);
        out += &format!("hyperfine_par_mhz = {}\n", self.hyperfine_par_mhz);
        out += &format!("quadrupole_mhz = {}\n", self.quadrupole_mhz);
        out += &format!("field_gauss = {}\n", joinf(&self.field_gauss));
        out += &format!("qubit_ms = {}\n", joinf(&self.qubit_ms));
        out += &format!("qubit_mi = {}\n", joinf(&self.qubit_mi));
        out += &format!("bath = {}\n", self.bath.as_str());
        out += &format!("r_bath = {}\n", self.r_bath);
        out += &format!("r_dipole = {}\n", self.r_dipole);
        out += &format!("order = {}\n", self.order);
        out += &format!("concentration = {}\n", self.concentration);
        out += &format!("n_realizations = {}\n", self.n_realizations);
        out += &format!("n_meanfield_samples = {}\n", self.n_meanfield_samples);
        out += &format!(
            "electron_bath_g = {}\n",
            match self.electron_bath_g {
                ElectronBathG::Free => "free",
                ElectronBathG::Host => "host",
            }
        );
        out += &format!(
            "central_coupling = {}\n",
            match self.central_coupling {
                CentralCoupling::PointDipole => "full",
                CentralCoupling::SecularZz => "secular-zz",
                CentralCoupling::Off => "off",
            }
        );
        out += &format!(
            "bath_bath_coupling = {}\n",
            if self.bath_bath_coupling { "on" } else { "off" }
        );
        out += &format!("cluster_cap = {}\n", self.cluster_cap);
        out += &format!("dim_cap = {}\n", self.dim_cap);
        out += &format!("sequence = {}\n", self.sequence);
        out += &format!("n_pulses = {}\n", self.n_pulses);
        out += &format!(
            "pulse_axis = {}\n",
            match self.pulse_axis {
                PulseAxis::X => "x",
                PulseAxis::Y => "y",
            }
        );
        out += &format!("t_max_ms = {}\n", self.t_max_ms);
        out += &format!("n_points = {}\n", self.n_points);
        out += &format!("seed = {}\n", self.seed);
        out += &format!("fit = {}\n", if self.fit { "stretched" } else { "none" });
        if !self.concentrations.is_empty() {
            out += &format!("concentrations = {}\n", joinf(&self.concentrations));
        }
        if !self.crossover_targets_ms.is_empty() {
            out += &format!(
                "crossover_targets_ms = {}\n",
                joinf(&self.crossover_targets_ms)
            );
        }
        if !self.pulses.is_empty() {
            let list = self
                .pulses
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            out += &format!("pulses = {list}\n");
        }
        out += &format!("verify_n_spins = {}\n", self.verify_n_spins);
        out += &format!("verify_box = {}\n", self.verify_box);
        out += &format!("verify_min_dist = {}\n", self.verify_min_dist);
        if let Some(p) = &self.fit_input {
            out += &format!("fit_input = {}\n", p.display());
        }
        out += &format!(
            "fit_kind = {}\n",
            match self.fit_kind {
                FitKind::Curve => "curve",
                FitKind::Scan => "scan",
                FitKind::Power => "power",
            }
        );
        out
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn registry(&self) -> Result<SpeciesRegistry, ConfigError> {
        match &self.species {
            None => Ok(SpeciesRegistry::builtin()),
            Some(path) => {
                let text = std::fs::read_to_string(self.resolve(path))?;
                Ok(SpeciesRegistry::parse(&text)?)
            }
        }
    }

    /// The central system at the origin; callers place it on the qubit site.
    pub fn central_system(&self, registry: &SpeciesRegistry) -> Result<CentralSystem, ConfigError> {
        let own_nucleus = match &self.own_nucleus {
            None => None,
            Some(name) => {
                let species = registry.get(name)?;
                Some(OwnNucleus {
                    species,
                    hyperfine: Matrix3::from_diagonal(&Vector3::new(
                        self.hyperfine_perp_mhz * MHZ_TO_RAD_PER_MS,
                        self.hyperfine_perp_mhz * MHZ_TO_RAD_PER_MS,
                        self.hyperfine_par_mhz * MHZ_TO_RAD_PER_MS,
                    )),
                    quadrupole_p: self.quadrupole_mhz * MHZ_TO_RAD_PER_MS,
                })
            }
        };
        Ok(CentralSystem {
            electron_s: self.electron_s,
            g_tensor: Matrix3::from_diagonal(&Vector3::new(self.g_perp, self.g_perp, self.g_par)),
            zfs: Matrix3::zeros(),
            own_nucleus,
            field: Vector3::from(self.field_gauss),
            position: Vector3::zeros(),
        })
    }

    pub fn qubit_targets(&self) -> QubitTargets {
        QubitTargets {
            level_a: (self.qubit_ms[0], self.qubit_mi[0]),
            level_b: (self.qubit_ms[1], self.qubit_mi[1]),
        }
    }

    pub fn pulse_sequence(&self) -> PulseSequence {
        match self.sequence.as_str() {
            "fid" => PulseSequence::Fid,
            "hahn" => PulseSequence::HahnEcho {
                axis: self.pulse_axis,
            },
            _ => PulseSequence::Cpmg {
                n_pulses: self.n_pulses,
                axis: self.pulse_axis,
            },
        }
    }

    pub fn coupling_options(&self) -> CouplingOptions {
        CouplingOptions {
            central: self.central_coupling,
            bath_bath: self.bath_bath_coupling,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        crate::curve::time_grid(self.t_max_ms, self.n_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_echo() {
        let cfg = SimulationConfig::default();
        let echoed = cfg.echo();
        let back = SimulationConfig::parse(&echoed, PathBuf::from(".")).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn full_config_round_trips() {
        let text = "\
structure = lattice.xyz
bath = electron
concentration = 0.02
r_bath = 50
r_dipole = 40
order = 3
n_realizations = 10
sequence = cpmg
n_pulses = 8
pulse_axis = x
own_nucleus = V51
hyperfine_perp_mhz = -166
hyperfine_par_mhz = -473
quadrupole_mhz = -0.35
g_perp = 1.984
g_par = 1.968
t_max_ms = 0.002
n_points = 41
seed = 77
concentrations = 0.05 0.1 0.2 0.4
crossover_targets_ms = 0.01088 0.127
pulses = 1 2 4 8 16
";
        let cfg = SimulationConfig::parse(text, PathBuf::from("/tmp")).unwrap();
        assert_eq!(cfg.bath, BathKind::Electron);
        assert_eq!(cfg.order, 3);
        assert_eq!(cfg.pulses, vec![1, 2, 4, 8, 16]);
        let back = SimulationConfig::parse(&cfg.echo(), PathBuf::from("/tmp")).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = SimulationConfig::parse("r_bath = 5\nnot_a_key = 3\n", PathBuf::from("."))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("not_a_key"), "{msg}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        for (text, field) in [
            ("r_bath = -2", "r_bath"),
            ("order = 0", "order"),
            ("concentration = 1.5", "concentration"),
            ("n_points = 1", "n_points"),
            ("bath = banana", "bath"),
            ("sequence = ramsey", "sequence"),
        ] {
            let err = SimulationConfig::parse(text, PathBuf::from(".")).unwrap_err();
            assert!(err.to_string().contains(field), "{err} should mention {field}");
        }
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = SimulationConfig::parse(
            "# a comment\n\nr_bath = 12.5  # trailing comment\n",
            PathBuf::from("."),
        )
        .unwrap();
        assert_eq!(cfg.r_bath, 12.5);
    }

    #[test]
    fn central_system_from_config() {
        let text = "own_nucleus = Cu63\nhyperfine_perp_mhz = 118\nhyperfine_par_mhz = 500\nquadrupole_mhz = 9.45\ng_perp = 2.0227\ng_par = 2.0925\n";
        let cfg = SimulationConfig::parse(text, PathBuf::from(".")).unwrap();
        let reg = cfg.registry().unwrap();
        let cs = cfg.central_system(&reg).unwrap();
        assert_eq!(cs.hybrid_dim(), 8);
        let nuc = cs.own_nucleus.unwrap();
        assert!((nuc.hyperfine[(2, 2)] - 500.0 * MHZ_TO_RAD_PER_MS).abs() < 1e-9);
        assert!((nuc.quadrupole_p - 9.45 * MHZ_TO_RAD_PER_MS).abs() < 1e-9);
    }
}
