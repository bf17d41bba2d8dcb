//! Coherence curves: the time grid, complex coherence values, provenance
//! metadata, and the CSV exchange format.

use crate::algebra::C64;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve CSV line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Provenance of a coherence curve: everything needed to reproduce it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CurveMeta {
    pub order: usize,
    pub r_bath: f64,
    pub r_dipole: f64,
    pub field_gauss: [f64; 3],
    pub sequence: String,
    pub master_seed: u64,
    pub realization_seeds: Vec<u64>,
    pub mean_field_seeds: Vec<u64>,
    pub concentration: Option<f64>,
    pub n_bath_spins: usize,
    pub n_clusters: usize,
    /// Time points where the irreducible-quotient guard fired, summed over
    /// all clusters and realizations.
    pub guarded_divisions: u64,
    /// Set when more than 1% of evaluated quotient points were guarded.
    pub divergence_flag: bool,
}

/// A coherence curve on a uniform time grid (ms). The value at t = 0 is 1 by
/// normalization and |values| stays within 1 + 1e-6 for converged runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub meta: CurveMeta,
}

impl CoherenceCurve {
    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Soft validation of the curve invariants; returns the violation text
    /// instead of panicking so unconverged curves can be flagged, not lost.
    pub fn validate(&self) -> Result<(), String> {
        if self.times.len() != self.values.len() {
            return Err("times/values length mismatch".into());
        }
        if let Some(first) = self.values.first() {
            if (first - C64::new(1.0, 0.0)).norm() > 1e-10 && self.times[0] == 0.0 {
                return Err(format!("value at t=0 is {first}, expected 1"));
            }
        }
        let max = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if max > 1.0 + 1e-6 {
            return Err(format!("|coherence| reaches {max:.6}, exceeding 1"));
        }
        Ok(())
    }

    /// Writes `time_ms,coh_re,coh_im,coh_abs` rows with 17 significant
    /// digits and LF line endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"time_ms,coh_re,coh_im,coh_abs\n")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", t, v.re, v.im, v.norm())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Reads a curve back from the CSV format; metadata is not stored in CSV
    /// and comes back default.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, CurveError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            if idx == 0 {
                if line.trim() != "time_ms,coh_re,coh_im,coh_abs" {
                    return Err(CurveError::Parse {
                        line: 1,
                        msg: format!("unexpected header '{line}'"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(CurveError::Parse {
                    line: line_no,
                    msg: format!("expected 4 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, CurveError> {
                s.trim().parse().map_err(|_| CurveError::Parse {
                    line: line_no,
                    msg: format!("bad number '{s}'"),
                })
            };
            times.push(parse(fields[0])?);
            values.push(C64::new(parse(fields[1])?, parse(fields[2])?));
        }
        Ok(Self {
            times,
            values,
            meta: CurveMeta::default(),
        })
    }
}

/// Uniform grid of `n_points` times from 0 to `t_max` inclusive.
pub fn time_grid(t_max: f64, n_points: usize) -> Vec<f64> {
    assert!(n_points >= 2, "need at least two grid points");
    assert!(t_max > 0.0, "t_max must be positive");
    (0..n_points)
        .map(|i| t_max * i as f64 / (n_points - 1) as f64)
        .collect()
}
