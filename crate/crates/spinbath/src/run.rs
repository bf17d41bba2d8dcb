//! Command implementations behind the CLI: single simulations, concentration
//! sweeps, CPMG scans, oracle verification, and standalone fitting, each
//! writing machine-readable CSV curves and a JSON summary.

use crate::config::{BathKind, ConfigError, ElectronBathG, FitKind, SimulationConfig};
use crate::curve::{CoherenceCurve, CurveError};
use crate::engine::{derive_seed, ensemble_coherence, BathSource, EngineError, EnsembleParams};
use crate::exact::{ExactError, ExactSystem};
use crate::fit::{
    fit_loglog, fit_power_law, fit_stretched_exp, solve_crossover, ConcentrationScan, FitError,
    PowerLawFit, StretchedExpFit,
};
use crate::hamiltonian::{
    build_central_hamiltonian, CentralSystem, QubitLevels, select_qubit_levels,
};
use crate::species::{SpeciesRegistry, SpinSpecies, MU_B_RAD_PER_MS_G};
use crate::structure::{
    build_bath, concentration_to_molar, parse_structure, qubit_lattice_sites, substitute_isotope,
    BathSpin, UnitCell,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

/// Tolerance on the full-order CCE vs exact-oracle deviation in `verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sweep failed: only {successes} of {attempted} points succeeded ({})", failures.join("; "))]
    Sweep {
        successes: usize,
        attempted: usize,
        failures: Vec<String>,
    },
    #[error(
        "verification failed: full-order deviation {max_deviation:.3e} exceeds {tolerance:.1e}"
    )]
    Verification {
        max_deviation: f64,
        tolerance: f64,
    },
}

impl RunError {
    /// 0 success, 2 config error, 3 numerical failure, 4 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Input(_) => 2,
            RunError::Verification { .. } => 4,
            _ => 3,
        }
    }
}

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Inputs resolved once per command: structure, species, central system, and
/// the bath building blocks.
struct Prepared {
    cs: CentralSystem,
    qubit: QubitLevels,
    fixed_bath: Vec<BathSpin>,
    electron_sites: Vec<Vector3<f64>>,
    electron_species: Option<Arc<SpinSpecies>>,
    cell: Option<UnitCell>,
}

fn prepare(cfg: &SimulationConfig) -> Result<Prepared, RunError> {
    let registry = cfg.registry()?;
    let mut cs = cfg.central_system(&registry)?;

    let needs_structure = true; // every bath kind draws positions from the lattice
    let cell = if needs_structure {
        let path = cfg
            .structure
            .as_ref()
            .ok_or_else(|| RunError::Input("config field 'structure' is required".into()))?;
        let resolved = cfg.resolve(path);
        let text = std::fs::read_to_string(&resolved).map_err(|e| {
            RunError::Input(format!("cannot read structure '{}': {e}", resolved.display()))
        })?;
        Some(parse_structure(&text).map_err(|e| RunError::Input(e.to_string()))?)
    } else {
        None
    };
    if let Some(cell) = &cell {
        cs.position = cell.qubit_position();
    }

    let h = build_central_hamiltonian(&cs);
    let qubit = select_qubit_levels(&h, &cs, cfg.qubit_targets())
        .map_err(|e| RunError::Input(e.to_string()))?;

    let mut fixed_bath = Vec::new();
    let mut electron_sites = Vec::new();
    let mut electron_species = None;
    if let Some(cell) = &cell {
        let central = cs.position;
        match cfg.bath {
            BathKind::NuclearH => {
                fixed_bath = build_bath(cell, &registry, &["H"], cfg.r_bath, &central)
                    .map_err(|e| RunError::Input(e.to_string()))?;
            }
            BathKind::NuclearD => {
                let h_bath = build_bath(cell, &registry, &["H"], cfg.r_bath, &central)
                    .map_err(|e| RunError::Input(e.to_string()))?;
                fixed_bath = substitute_isotope(&h_bath, "H", "D", &registry)
                    .map_err(|e| RunError::Input(e.to_string()))?;
            }
            BathKind::Electron => {
                electron_sites = qubit_lattice_sites(cell, cfg.r_bath, &central);
            }
            BathKind::Mixed => {
                fixed_bath = build_bath(cell, &registry, &["H"], cfg.r_bath, &central)
                    .map_err(|e| RunError::Input(e.to_string()))?;
                electron_sites = qubit_lattice_sites(cell, cfg.r_bath, &central);
            }
        }
        if matches!(cfg.bath, BathKind::Electron | BathKind::Mixed) {
            let species = match cfg.electron_bath_g {
                ElectronBathG::Free => registry.get("e").map_err(|e| RunError::Input(e.to_string()))?,
                ElectronBathG::Host => Arc::new(SpinSpecies::new(
                    "e-host",
                    0.5,
                    cs.g_iso() * MU_B_RAD_PER_MS_G,
                    0.0,
                    1.0,
                )),
            };
            electron_species = Some(species);
        }
    }

    Ok(Prepared {
        cs,
        qubit,
        fixed_bath,
        electron_sites,
        electron_species,
        cell,
    })
}

fn bath_source<'a>(cfg: &SimulationConfig, prep: &'a Prepared) -> BathSource<'a> {
    match cfg.bath {
        BathKind::NuclearH | BathKind::NuclearD => BathSource::Fixed(&prep.fixed_bath),
        BathKind::Electron => BathSource::Electron {
            sites: &prep.electron_sites,
            concentration: cfg.concentration,
            species: prep.electron_species.clone().expect("prepared"),
        },
        BathKind::Mixed => BathSource::Mixed {
            fixed: &prep.fixed_bath,
            sites: &prep.electron_sites,
            concentration: cfg.concentration,
            species: prep.electron_species.clone().expect("prepared"),
        },
    }
}

fn run_ensemble(
    cfg: &SimulationConfig,
    prep: &Prepared,
    times: Vec<f64>,
    sequence: crate::pulse::PulseSequence,
    concentration: f64,
    master_seed: u64,
) -> Result<CoherenceCurve, RunError> {
    let mut cfg_local = cfg.clone();
    cfg_local.concentration = concentration;
    let params = EnsembleParams {
        cs: &prep.cs,
        qubit: &prep.qubit,
        source: bath_source(&cfg_local, prep),
        order: cfg.order,
        r_bath: cfg.r_bath,
        r_dipole: cfg.r_dipole,
        cluster_cap: cfg.cluster_cap,
        dim_cap: cfg.dim_cap,
        opts: cfg.coupling_options(),
        sequence,
        times,
        n_realizations: cfg.n_realizations,
        n_meanfield_samples: cfg.n_meanfield_samples,
        master_seed,
    };
    Ok(ensemble_coherence(&params)?)
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn write_summary<S: Serialize>(out_dir: &Path, summary: &S) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(summary).expect("serializable summary");
    write_file(out_dir, "summary.json", &(text + "\n"))?;
    Ok(())
}

fn molarity_for(cfg: &SimulationConfig, prep: &Prepared, f: f64) -> Option<f64> {
    let cell = prep.cell.as_ref()?;
    if matches!(cfg.bath, BathKind::Electron | BathKind::Mixed) {
        concentration_to_molar(f, cell, cell.qubits_per_cell()).ok()
    } else {
        None
    }
}

/// Single ensemble simulation with optional stretched-exponential fit.
#[derive(Debug, Serialize)]
pub struct ResultRecord {
    pub command: String,
    pub software_version: String,
    pub config_echo: String,
    pub wall_time_s: f64,
    pub curve: CoherenceCurve,
    pub fit: Option<StretchedExpFit>,
    pub bath_molar_mm: Option<f64>,
    pub curve_validation: Option<String>,
    pub outputs: Vec<String>,
}

pub fn cmd_simulate(cfg: &SimulationConfig, out_dir: &Path) -> Result<ResultRecord, RunError> {
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let curve = run_ensemble(
        cfg,
        &prep,
        cfg.times(),
        cfg.pulse_sequence(),
        cfg.concentration,
        cfg.seed,
    )?;
    let fit = if cfg.fit {
        Some(fit_stretched_exp(&curve)?)
    } else {
        None
    };
    write_file(out_dir, "curve.csv", &curve.to_csv_string())?;
    let record = ResultRecord {
        command: "simulate".into(),
        software_version: VERSION.into(),
        config_echo: cfg.echo(),
        wall_time_s: start.elapsed().as_secs_f64(),
        curve_validation: curve.validate().err(),
        bath_molar_mm: molarity_for(cfg, &prep, cfg.concentration),
        curve,
        fit,
        outputs: vec!["curve.csv".into(), "summary.json".into()],
    };
    write_summary(out_dir, &record)?;
    Ok(record)
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub concentration: f64,
    pub molar_mm: Option<f64>,
    pub t2_ms: Option<f64>,
    pub beta: Option<f64>,
    pub residual_rms: Option<f64>,
    pub guarded_divisions: u64,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub command: String,
    pub software_version: String,
    pub config_echo: String,
    pub wall_time_s: f64,
    pub points: Vec<SweepPoint>,
    pub scan: Option<ConcentrationScan>,
    /// (target T2 in ms, crossover concentration fraction or error text).
    pub crossovers: Vec<(f64, Result<f64, String>)>,
    pub outputs: Vec<String>,
}

pub fn cmd_sweep_concentration(
    cfg: &SimulationConfig,
    out_dir: &Path,
) -> Result<SweepSummary, RunError> {
    let start = Instant::now();
    if cfg.concentrations.len() < 3 {
        return Err(RunError::Input(format!(
            "config field 'concentrations' needs at least 3 values, got {}",
            cfg.concentrations.len()
        )));
    }
    if !matches!(cfg.bath, BathKind::Electron | BathKind::Mixed) {
        return Err(RunError::Input(
            "concentration sweeps need bath = electron or mixed".into(),
        ));
    }
    let prep = prepare(cfg)?;
    let mut points = Vec::new();
    let mut outputs = vec!["sweep.csv".into(), "summary.json".into()];
    let mut failures = Vec::new();

    for (idx, &f) in cfg.concentrations.iter().enumerate() {
        // Decoherence accelerates with concentration; the grid stretches by
        // the ratio to the reference concentration of the config.
        let t_max = if f > 0.0 && cfg.concentration > 0.0 {
            cfg.t_max_ms * cfg.concentration / f
        } else {
            cfg.t_max_ms
        };
        let times = crate::curve::time_grid(t_max, cfg.n_points);
        let point_seed = derive_seed(cfg.seed, 3, idx as u64);
        let mut point = SweepPoint {
            concentration: f,
            molar_mm: molarity_for(cfg, &prep, f),
            t2_ms: None,
            beta: None,
            residual_rms: None,
            guarded_divisions: 0,
            error: None,
        };
        match run_ensemble(cfg, &prep, times, cfg.pulse_sequence(), f, point_seed) {
            Ok(curve) => {
                // The curve lands on disk before fitting so failed fits stay
                // diagnosable.
                let name = format!("curve_c{f:.6}.csv");
                write_file(out_dir, &name, &curve.to_csv_string())?;
                outputs.push(name);
                point.guarded_divisions = curve.meta.guarded_divisions;
                match fit_stretched_exp(&curve) {
                    Ok(fit) => {
                        point.t2_ms = Some(fit.t2);
                        point.beta = Some(fit.beta);
                        point.residual_rms = Some(fit.residual_rms);
                    }
                    Err(e) => {
                        failures.push(format!("f={f}: {e}"));
                        point.error = Some(e.to_string());
                    }
                }
            }
            Err(e) => {
                failures.push(format!("f={f}: {e}"));
                point.error = Some(e.to_string());
            }
        }
        points.push(point);
    }

    let good: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.t2_ms.map(|t2| (p.concentration, t2)))
        .collect();
    if good.len() < 3 {
        return Err(RunError::Sweep {
            successes: good.len(),
            attempted: cfg.concentrations.len(),
            failures,
        });
    }
    let scan = fit_loglog(&good)?;
    let crossovers = cfg
        .crossover_targets_ms
        .iter()
        .map(|&t| {
            (
                t,
                solve_crossover(&scan, t).map_err(|e| e.to_string()),
            )
        })
        .collect();

    let mut sweep_csv = String::from("concentration,molar_mm,t2_ms,beta,residual_rms\n");
    for p in &points {
        if let (Some(t2), Some(beta), Some(rms)) = (p.t2_ms, p.beta, p.residual_rms) {
            sweep_csv += &format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                p.concentration,
                p.molar_mm.unwrap_or(f64::NAN),
                t2,
                beta,
                rms
            );
        }
    }
    write_file(out_dir, "sweep.csv", &sweep_csv)?;

    let summary = SweepSummary {
        command: "sweep".into(),
        software_version: VERSION.into(),
        config_echo: cfg.echo(),
        wall_time_s: start.elapsed().as_secs_f64(),
        points,
        scan: Some(scan),
        crossovers,
        outputs,
    };
    write_summary(out_dir, &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct CpmgPoint {
    pub n_pulses: u32,
    pub t2_ms: Option<f64>,
    pub beta: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct CpmgSummary {
    pub command: String,
    pub software_version: String,
    pub config_echo: String,
    pub wall_time_s: f64,
    pub points: Vec<CpmgPoint>,
    pub power_law: Option<PowerLawFit>,
    pub outputs: Vec<String>,
}

pub fn cmd_cpmg_scan(cfg: &SimulationConfig, out_dir: &Path) -> Result<CpmgSummary, RunError> {
    let start = Instant::now();
    if cfg.pulses.is_empty() {
        return Err(RunError::Input(
            "config field 'pulses' needs at least 1 value".into(),
        ));
    }
    if cfg.pulses.iter().any(|&n| n < 1) {
        return Err(RunError::Input("pulse counts must be at least 1".into()));
    }
    let prep = prepare(cfg)?;
    let mut points = Vec::new();
    let mut outputs = vec!["cpmg.csv".into(), "summary.json".into()];
    let mut failures = Vec::new();

    for (idx, &n) in cfg.pulses.iter().enumerate() {
        // T2 grows roughly linearly with the pulse count, so the grid does too.
        let t_max = cfg.t_max_ms * n as f64;
        let times = crate::curve::time_grid(t_max, cfg.n_points);
        let seq = crate::pulse::PulseSequence::Cpmg {
            n_pulses: n,
            axis: cfg.pulse_axis,
        };
        let point_seed = derive_seed(cfg.seed, 5, idx as u64);
        let mut point = CpmgPoint {
            n_pulses: n,
            t2_ms: None,
            beta: None,
            error: None,
        };
        match run_ensemble(cfg, &prep, times, seq, cfg.concentration, point_seed) {
            Ok(curve) => {
                let name = format!("curve_n{n}.csv");
                write_file(out_dir, &name, &curve.to_csv_string())?;
                outputs.push(name);
                match fit_stretched_exp(&curve) {
                    Ok(fit) => {
                        point.t2_ms = Some(fit.t2);
                        point.beta = Some(fit.beta);
                    }
                    Err(e) => {
                        failures.push(format!("n={n}: {e}"));
                        point.error = Some(e.to_string());
                    }
                }
            }
            Err(e) => {
                failures.push(format!("n={n}: {e}"));
                point.error = Some(e.to_string());
            }
        }
        points.push(point);
    }

    let good: Vec<(u32, f64)> = points
        .iter()
        .filter_map(|p| p.t2_ms.map(|t2| (p.n_pulses, t2)))
        .collect();
    if good.is_empty() {
        return Err(RunError::Sweep {
            successes: 0,
            attempted: cfg.pulses.len(),
            failures,
        });
    }
    let power_law = if good.len() >= 3 {
        Some(fit_power_law(&good)?)
    } else {
        None
    };

    let mut csv = String::from("n_pulses,t2_ms,beta\n");
    for p in &points {
        if let (Some(t2), Some(beta)) = (p.t2_ms, p.beta) {
            csv += &format!("{},{:.16e},{:.16e}\n", p.n_pulses, t2, beta);
        }
    }
    write_file(out_dir, "cpmg.csv", &csv)?;

    let summary = CpmgSummary {
        command: "cpmg".into(),
        software_version: VERSION.into(),
        config_echo: cfg.echo(),
        wall_time_s: start.elapsed().as_secs_f64(),
        points,
        power_law,
        outputs,
    };
    write_summary(out_dir, &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct VerifySummary {
    pub command: String,
    pub software_version: String,
    pub config_echo: String,
    pub wall_time_s: f64,
    pub n_spins: usize,
    /// max_t |L_cce(M) - L_exact| for M = 1..N.
    pub deviations: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub outputs: Vec<String>,
}

/// Synthetic bath for verification: uniform positions in a box around the
/// central spin with a minimum spacing, all spin-1/2 hydrogens.
pub fn synthetic_bath(
    n_spins: usize,
    box_edge: f64,
    min_dist: f64,
    seed: u64,
    registry: &SpeciesRegistry,
) -> Vec<BathSpin> {
    let h = registry.get("H").expect("builtin H");
    let center = Vector3::new(box_edge / 2.0, box_edge / 2.0, box_edge / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(n_spins);
    while positions.len() < n_spins {
        let cand = Vector3::new(
            rng.gen::<f64>() * box_edge,
            rng.gen::<f64>() * box_edge,
            rng.gen::<f64>() * box_edge,
        );
        if (cand - center).norm() < min_dist {
            continue;
        }
        if positions.iter().any(|p| (p - cand).norm() < min_dist) {
            continue;
        }
        positions.push(cand);
    }
    positions
        .into_iter()
        .map(|position| BathSpin {
            position,
            species: h.clone(),
        })
        .collect()
}

pub fn cmd_verify(cfg: &SimulationConfig, out_dir: &Path) -> Result<VerifySummary, RunError> {
    let start = Instant::now();
    let registry = cfg.registry()?;
    let mut cs = cfg.central_system(&registry)?;
    let box_edge = cfg.verify_box;
    cs.position = Vector3::new(box_edge / 2.0, box_edge / 2.0, box_edge / 2.0);
    let h = build_central_hamiltonian(&cs);
    let qubit = select_qubit_levels(&h, &cs, cfg.qubit_targets())
        .map_err(|e| RunError::Input(e.to_string()))?;

    let bath = synthetic_bath(
        cfg.verify_n_spins,
        box_edge,
        cfg.verify_min_dist,
        derive_seed(cfg.seed, 4, 0),
        &registry,
    );
    let n = bath.len();
    let times = cfg.times();
    let seq = cfg.pulse_sequence();
    let opts = cfg.coupling_options();

    let exact = ExactSystem::build(&cs, &qubit, &bath, &opts, cfg.dim_cap)?
        .coherence(seq, &times)?;
    let mut exact_curve = CoherenceCurve {
        times: times.clone(),
        values: exact.clone(),
        meta: Default::default(),
    };
    exact_curve.meta.sequence = seq.label();
    write_file(out_dir, "exact.csv", &exact_curve.to_csv_string())?;
    let mut outputs = vec!["exact.csv".into(), "summary.json".into()];

    let mut deviations = Vec::with_capacity(n);
    for order in 1..=n {
        let params = EnsembleParams {
            cs: &cs,
            qubit: &qubit,
            source: BathSource::Fixed(&bath),
            order,
            r_bath: box_edge,
            // All-to-all connectivity so the full-order family telescopes to
            // the complete bath cluster.
            r_dipole: 1e9,
            cluster_cap: cfg.cluster_cap,
            dim_cap: cfg.dim_cap,
            opts,
            sequence: seq,
            times: times.clone(),
            n_realizations: 1,
            n_meanfield_samples: 1,
            master_seed: cfg.seed,
        };
        let curve = ensemble_coherence(&params)?;
        let dev = curve
            .values
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let name = format!("cce_m{order}.csv");
        write_file(out_dir, &name, &curve.to_csv_string())?;
        outputs.push(name);
        deviations.push(dev);
    }

    let full_order_dev = *deviations.last().expect("n >= 1");
    let passed = full_order_dev <= VERIFY_TOLERANCE;
    let summary = VerifySummary {
        command: "verify".into(),
        software_version: VERSION.into(),
        config_echo: cfg.echo(),
        wall_time_s: start.elapsed().as_secs_f64(),
        n_spins: n,
        deviations,
        tolerance: VERIFY_TOLERANCE,
        passed,
        outputs,
    };
    write_summary(out_dir, &summary)?;
    if !passed {
        return Err(RunError::Verification {
            max_deviation: full_order_dev,
            tolerance: VERIFY_TOLERANCE,
        });
    }
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub command: String,
    pub software_version: String,
    pub config_echo: String,
    pub wall_time_s: f64,
    pub stretched: Option<StretchedExpFit>,
    pub scan: Option<ConcentrationScan>,
    pub crossovers: Vec<(f64, Result<f64, String>)>,
    pub power_law: Option<PowerLawFit>,
    pub outputs: Vec<String>,
}

fn parse_two_column_csv(
    text: &str,
    expected_header: &str,
) -> Result<Vec<(f64, f64)>, RunError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != expected_header {
                return Err(RunError::Input(format!(
                    "expected header '{expected_header}', found '{line}'"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(RunError::Input(format!(
                "line {}: expected 2 columns",
                idx + 1
            )));
        }
        let a: f64 = fields[0].trim().parse().map_err(|_| {
            RunError::Input(format!("line {}: bad number '{}'", idx + 1, fields[0]))
        })?;
        let b: f64 = fields[1].trim().parse().map_err(|_| {
            RunError::Input(format!("line {}: bad number '{}'", idx + 1, fields[1]))
        })?;
        out.push((a, b));
    }
    Ok(out)
}

pub fn cmd_fit(cfg: &SimulationConfig, out_dir: &Path) -> Result<FitSummary, RunError> {
    let start = Instant::now();
    let input = cfg
        .fit_input
        .as_ref()
        .ok_or_else(|| RunError::Input("config field 'fit_input' is required for fit".into()))?;
    let path = cfg.resolve(input);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| RunError::Input(format!("cannot read '{}': {e}", path.display())))?;

    let mut summary = FitSummary {
        command: "fit".into(),
        software_version: VERSION.into(),
        config_echo: cfg.echo(),
        wall_time_s: 0.0,
        stretched: None,
        scan: None,
        crossovers: Vec::new(),
        power_law: None,
        outputs: vec!["summary.json".into()],
    };

    match cfg.fit_kind {
        FitKind::Curve => {
            let curve = CoherenceCurve::read_csv(text.as_bytes())?;
            summary.stretched = Some(fit_stretched_exp(&curve)?);
        }
        FitKind::Scan => {
            let points = parse_two_column_csv(&text, "concentration,t2_ms")?;
            let scan = fit_loglog(&points)?;
            summary.crossovers = cfg
                .crossover_targets_ms
                .iter()
                .map(|&t| (t, solve_crossover(&scan, t).map_err(|e| e.to_string())))
                .collect();
            summary.scan = Some(scan);
        }
        FitKind::Power => {
            let raw = parse_two_column_csv(&text, "n_pulses,t2_ms")?;
            let points: Vec<(u32, f64)> = raw
                .iter()
                .map(|&(n, t2)| (n as u32, t2))
                .collect();
            summary.power_law = Some(fit_power_law(&points)?);
        }
    }
    summary.wall_time_s = start.elapsed().as_secs_f64();
    write_summary(out_dir, &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn toy_structure() -> String {
        let mut text = String::from("10\nLattice=\"8 0 0 0 8 0 0 0 8\" qubit_index=0\n");
        text += "V 0 0 0\nV 4 4 4\n";
        let hs = [
            [2.1, 0.3, 0.8],
            [5.5, 1.2, 6.6],
            [0.9, 3.8, 2.2],
            [6.6, 6.1, 1.1],
            [3.2, 5.0, 7.3],
            [7.4, 2.8, 4.4],
            [1.5, 6.9, 5.7],
            [4.8, 7.7, 3.0],
        ];
        for h in hs {
            text += &format!("H {} {} {}\n", h[0], h[1], h[2]);
        }
        text
    }

    fn base_config(dir: &Path) -> SimulationConfig {
        std::fs::write(dir.join("toy.xyz"), toy_structure()).unwrap();
        let text = "\
structure = toy.xyz
bath = nuclear-h
r_bath = 7
r_dipole = 5
order = 2
n_meanfield_samples = 2
t_max_ms = 0.02
n_points = 21
seed = 11
fit = none
";
        SimulationConfig::parse(text, dir.to_path_buf()).unwrap()
    }

    #[test]
    fn simulate_writes_curve_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_config(dir.path());
        let out = dir.path().join("out");
        let record = cmd_simulate(&cfg, &out).unwrap();
        assert!(out.join("curve.csv").exists());
        assert!(out.join("summary.json").exists());
        assert!(record.curve_validation.is_none(), "{:?}", record.curve_validation);
        assert!((record.curve.values[0].norm() - 1.0).abs() < 1e-10);

        // Byte-identical rerun.
        let out2 = dir.path().join("out2");
        cmd_simulate(&cfg, &out2).unwrap();
        let a = std::fs::read(out.join("curve.csv")).unwrap();
        let b = std::fs::read(out2.join("curve.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simulate_requires_structure() {
        let cfg = SimulationConfig::parse("bath = nuclear-h", PathBuf::from(".")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_simulate(&cfg, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn verify_small_synthetic_bath_passes() {
        let dir = tempfile::tempdir().unwrap();
        let text = "\
verify_n_spins = 3
verify_box = 10
verify_min_dist = 1.8
field_gauss = 0 0 100
qubit_mi = 0 0
sequence = hahn
t_max_ms = 0.01
n_points = 9
seed = 5
";
        let cfg = SimulationConfig::parse(text, dir.path().to_path_buf()).unwrap();
        let out = dir.path().join("verify");
        let summary = cmd_verify(&cfg, &out).unwrap();
        assert_eq!(summary.deviations.len(), 3);
        assert!(summary.passed);
        assert!(summary.deviations[2] < VERIFY_TOLERANCE);
        assert!(out.join("exact.csv").exists());
        assert!(out.join("cce_m3.csv").exists());
    }

    #[test]
    fn fit_command_round_trips_scan_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut scan_csv = String::from("concentration,t2_ms\n");
        for &(c, t2) in &[(0.02, 0.35e-3), (0.1, 0.07e-3), (0.5, 0.014e-3)] {
            scan_csv += &format!("{c},{t2}\n");
        }
        std::fs::write(dir.path().join("scan.csv"), scan_csv).unwrap();
        let text = "\
fit_input = scan.csv
fit_kind = scan
crossover_targets_ms = 0.01088
";
        let cfg = SimulationConfig::parse(text, dir.path().to_path_buf()).unwrap();
        let summary = cmd_fit(&cfg, &dir.path().join("out")).unwrap();
        let scan = summary.scan.unwrap();
        assert!((scan.slope + 1.0).abs() < 1e-9);
        let (_, crossover) = &summary.crossovers[0];
        let c = crossover.as_ref().unwrap();
        // T2 = 7e-6/c ms, so T2 = 0.01088 ms at c = 6.434e-4.
        assert!((c - 7e-6 / 0.01088).abs() / c < 1e-9);
    }

    #[test]
    fn fit_command_handles_power_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("n_pulses,t2_ms\n");
        for &n in &[1u32, 2, 4, 8, 16] {
            csv += &format!("{n},{}\n", 6.7e-3 * (n as f64).powf(0.97));
        }
        std::fs::write(dir.path().join("power.csv"), csv).unwrap();
        let cfg = SimulationConfig::parse(
            "fit_input = power.csv\nfit_kind = power\n",
            dir.path().to_path_buf(),
        )
        .unwrap();
        let summary = cmd_fit(&cfg, &dir.path().join("out")).unwrap();
        let fit = summary.power_law.unwrap();
        assert!((fit.p - 0.97).abs() < 1e-9);
    }
}
