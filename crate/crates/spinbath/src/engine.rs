//! The cluster-correlation engine: per-cluster coherence propagation under
//! pulse sequences, the recursive irreducible division, the product over
//! clusters, mean-field sampling of frozen non-cluster spins, and ensemble
//! averaging over bath realizations.

use crate::algebra::{identity, CMatrix, Eigendecomposition, C64};
use crate::cluster::{build_connectivity, enumerate_clusters, ClusterError, ClusterSet};
use crate::curve::{CoherenceCurve, CurveMeta};
use crate::hamiltonian::{
    build_cluster_hamiltonian_with_shifts, dipole_tensor, CentralSystem, CouplingOptions,
    HamiltonianError, QubitLevels,
};
use crate::pulse::{PulseError, PulseSequence};
use crate::species::SpinSpecies;
use crate::structure::{sample_electron_bath, BathSpin};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

/// Quotients with denominator modulus below this are guarded to 1.
pub const DIVISION_GUARD_EPS: f64 = 1e-10;
/// A curve is flagged divergent when more than this fraction of evaluated
/// quotient points was guarded.
pub const DIVERGENCE_FLAG_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("coherence normalization degenerate: |raw(0)| = {0:.3e}")]
    DegenerateNormalization(f64),
    #[error("bath realization {realization} (seed {seed}) failed: {source}")]
    Realization {
        realization: usize,
        seed: u64,
        #[source]
        source: Box<EngineError>,
    },
}

/// Stable seed derivation: one master seed spawns independent streams for
/// bath realizations and mean-field draws by index.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    fn splitmix64(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(splitmix64(master ^ stream.wrapping_mul(0xA076_1D64_78BD_642F)) ^ index)
}

/// Frozen polarization <I_z> for every bath spin, drawn uniformly from the
/// spin's m eigenvalues.
#[derive(Debug, Clone)]
pub struct MeanFieldSample {
    pub m_values: Vec<f64>,
    pub seed: u64,
}

impl MeanFieldSample {
    pub fn draw(bath: &[BathSpin], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m_values = bath
            .iter()
            .map(|spin| {
                let dim = spin.species.dim();
                let level = rng.gen_range(0..dim);
                spin.species.s - level as f64
            })
            .collect();
        Self { m_values, seed }
    }

    /// All spins frozen at m = 0 polarization equivalent (no shifts).
    pub fn unpolarized(bath: &[BathSpin], seed: u64) -> Self {
        Self {
            m_values: vec![0.0; bath.len()],
            seed,
        }
    }
}

/// Precomputed whole-bath mean-field accumulators for one sample: the shift
/// a cluster needs is the whole-bath total minus its own members' terms.
pub struct MeanFieldTable {
    pub m_values: Vec<f64>,
    central_columns: Vec<Vector3<f64>>,
    s_total: Vector3<f64>,
    spin_totals: Vec<Vector3<f64>>,
    bath_bath: bool,
}

impl MeanFieldTable {
    pub fn build(
        cs: &CentralSystem,
        bath: &[BathSpin],
        sample: &MeanFieldSample,
        opts: &CouplingOptions,
    ) -> Result<Self, HamiltonianError> {
        let n = bath.len();
        let mut central_columns = Vec::with_capacity(n);
        let mut s_total = Vector3::zeros();
        for (spin, &m) in bath.iter().zip(&sample.m_values) {
            let col: Vector3<f64> = cs.coupling_to(spin, opts.central)?.0.column(2).into();
            s_total += col * m;
            central_columns.push(col);
        }
        let mut spin_totals = vec![Vector3::zeros(); n];
        if opts.bath_bath {
            for i in 0..n {
                for j in (i + 1)..n {
                    let col: Vector3<f64> = dipole_tensor(
                        &bath[i].position,
                        &bath[j].position,
                        bath[i].species.gamma,
                        bath[j].species.gamma,
                    )?
                    .0
                    .column(2)
                    .into();
                    spin_totals[i] += col * sample.m_values[j];
                    spin_totals[j] += col * sample.m_values[i];
                }
            }
        }
        Ok(Self {
            m_values: sample.m_values.clone(),
            central_columns,
            s_total,
            spin_totals,
            bath_bath: opts.bath_bath,
        })
    }

    /// Shifts seen by a cluster: whole-bath totals with the members' own
    /// contributions removed.
    pub fn shifts_for(
        &self,
        bath: &[BathSpin],
        members: &[u32],
    ) -> Result<(Vector3<f64>, Vec<Vector3<f64>>), HamiltonianError> {
        let mut s_shift = self.s_total;
        for &i in members {
            s_shift -= self.central_columns[i as usize] * self.m_values[i as usize];
        }
        let mut spin_shifts = Vec::with_capacity(members.len());
        for &i in members {
            let mut v = self.spin_totals[i as usize];
            if self.bath_bath {
                for &j in members {
                    if j != i {
                        let col: Vector3<f64> = dipole_tensor(
                            &bath[i as usize].position,
                            &bath[j as usize].position,
                            bath[i as usize].species.gamma,
                            bath[j as usize].species.gamma,
                        )?
                        .0
                        .column(2)
                        .into();
                        v -= col * self.m_values[j as usize];
                    }
                }
            }
            spin_shifts.push(v);
        }
        Ok((s_shift, spin_shifts))
    }
}

fn scale_rows(m: &mut CMatrix, phases: &nalgebra::DVector<C64>) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= phases[i];
        }
    }
}

/// (R_c (x) 1_bath) M without materializing the Kronecker product.
fn apply_central_operator(r_c: &CMatrix, m: &CMatrix, d_bath: usize) -> CMatrix {
    let d_c = r_c.nrows();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for k in 0..m.ncols() {
        for b in 0..d_bath {
            for c in 0..d_c {
                let mut acc = C64::new(0.0, 0.0);
                for cp in 0..d_c {
                    acc += r_c[(c, cp)] * m[(cp * d_bath + b, k)];
                }
                out[(c * d_bath + b, k)] = acc;
            }
        }
    }
    out
}

fn matrix_power(g: &CMatrix, mut n: u32) -> CMatrix {
    let mut base = g.clone();
    let mut acc = identity(g.nrows());
    while n > 0 {
        if n & 1 == 1 {
            acc = &base * acc;
        }
        base = &base * &base;
        n >>= 1;
    }
    acc
}

/// gCCE coherence of one cluster: evolve |psi><psi| (x) 1/d with the cluster
/// Hamiltonian interleaved with ideal pi pulses, read the qubit off-diagonal
/// element, and normalize by the t = 0 value.
pub fn cluster_coherence(
    cs: &CentralSystem,
    qubit: &QubitLevels,
    bath: &[BathSpin],
    members: &[u32],
    mean_field: &MeanFieldTable,
    seq: PulseSequence,
    times: &[f64],
    opts: &CouplingOptions,
    dim_cap: usize,
) -> Result<Vec<C64>, EngineError> {
    seq.validate()?;
    let cluster: Vec<&BathSpin> = members.iter().map(|&i| &bath[i as usize]).collect();
    let (s_shift, spin_shifts) = mean_field.shifts_for(bath, members)?;
    let h =
        build_cluster_hamiltonian_with_shifts(cs, &cluster, &s_shift, &spin_shifts, opts, dim_cap)?;

    let d_c = cs.hybrid_dim();
    let dim = h.dim();
    let d_bath = dim / d_c;
    let eig = Eigendecomposition::new(&h);
    let v = &eig.vectors;

    // Columns |psi> (x) |J>, rotated to the eigenbasis once.
    let psi = qubit.superposition();
    let mut cols = CMatrix::zeros(dim, d_bath);
    for c in 0..d_c {
        for j in 0..d_bath {
            cols[(c * d_bath + j, j)] = psi[c];
        }
    }
    let psi_eig = v.adjoint() * cols;

    // Readout rows (v_q (x) 1)^dag V.
    let mut q0 = CMatrix::zeros(d_bath, dim);
    let mut q1 = CMatrix::zeros(d_bath, dim);
    for k in 0..dim {
        for b in 0..d_bath {
            let mut a0 = C64::new(0.0, 0.0);
            let mut a1 = C64::new(0.0, 0.0);
            for c in 0..d_c {
                a0 += qubit.states[0][c].conj() * v[(c * d_bath + b, k)];
                a1 += qubit.states[1][c].conj() * v[(c * d_bath + b, k)];
            }
            q0[(b, k)] = a0;
            q1[(b, k)] = a1;
        }
    }

    let n_blocks = seq.n_blocks();
    let w = if n_blocks > 0 {
        let r_c = qubit.pi_pulse(seq.axis());
        Some(v.adjoint() * apply_central_operator(&r_c, v, d_bath))
    } else {
        None
    };

    let evolve = |t: f64| -> C64 {
        let tau = if n_blocks == 0 {
            t
        } else {
            t / (2.0 * n_blocks as f64)
        };
        let phases = eig.phases(tau);
        let y = if n_blocks == 0 {
            let mut y = psi_eig.clone();
            scale_rows(&mut y, &phases);
            y
        } else {
            let w = w.as_ref().unwrap();
            // Sequential block application, or a matrix power when the pulse
            // train is long enough that squaring wins.
            let log2n = 32 - n_blocks.leading_zeros() as usize;
            if (n_blocks as usize) * d_bath > 2 * log2n * dim {
                let mut g = w.clone();
                for j in 0..dim {
                    for i in 0..dim {
                        g[(i, j)] *= phases[i] * phases[j];
                    }
                }
                matrix_power(&g, n_blocks) * &psi_eig
            } else {
                let mut y = psi_eig.clone();
                for _ in 0..n_blocks {
                    scale_rows(&mut y, &phases);
                    y = w * y;
                    scale_rows(&mut y, &phases);
                }
                y
            }
        };
        let a = &q0 * &y;
        let b = &q1 * &y;
        let mut acc = C64::new(0.0, 0.0);
        for (x, y) in a.iter().zip(b.iter()) {
            acc += x * y.conj();
        }
        acc / C64::new(d_bath as f64, 0.0)
    };

    let raw0 = evolve(0.0);
    if raw0.norm() < 1e-6 {
        return Err(EngineError::DegenerateNormalization(raw0.norm()));
    }
    // Report in the rotating frame of the bare transition: the deterministic
    // carrier phase of free evolution would otherwise survive the quotients
    // of the recursive division and scramble ensemble averages. Echo
    // sequences refocus it exactly, so only FID needs the correction.
    let splitting = qubit.energies.0 - qubit.energies.1;
    Ok(times
        .iter()
        .map(|&t| {
            let carrier = if n_blocks == 0 {
                C64::from_polar(1.0, -splitting * t)
            } else {
                C64::new(1.0, 0.0)
            };
            evolve(t) / raw0 / carrier
        })
        .collect())
}

/// Recursive irreducible division: each cluster's raw coherence divided by
/// the product of its subclusters' irreducible curves, in increasing cluster
/// order. Quotients with tiny denominators are guarded to 1 and counted.
pub fn irreducible_coherence(
    set: &ClusterSet,
    raw: &[Vec<C64>],
    guard_eps: f64,
) -> (Vec<Vec<C64>>, u64) {
    let n_times = raw.first().map_or(0, |c| c.len());
    let mut tilde: Vec<Vec<C64>> = Vec::with_capacity(set.len());
    let mut guarded = 0u64;
    for id in 0..set.len() {
        let mut curve = raw[id].clone();
        debug_assert_eq!(curve.len(), n_times);
        for t in 0..n_times {
            let mut denom = C64::new(1.0, 0.0);
            for &sub in set.subclusters(id) {
                denom *= tilde[sub][t];
            }
            if denom.norm() < guard_eps {
                curve[t] = C64::new(1.0, 0.0);
                guarded += 1;
            } else {
                curve[t] /= denom;
            }
        }
        tilde.push(curve);
    }
    (tilde, guarded)
}

/// Pointwise product of the irreducible curves, accumulated in the fixed
/// cluster order.
pub fn total_coherence(set: &ClusterSet, tilde: &[Vec<C64>]) -> Vec<C64> {
    let n_times = tilde.first().map_or(0, |c| c.len());
    let mut total = vec![C64::new(1.0, 0.0); n_times];
    for id in 0..set.len() {
        for (acc, v) in total.iter_mut().zip(&tilde[id]) {
            *acc *= v;
        }
    }
    total
}

/// Where the bath spins of each realization come from.
pub enum BathSource<'a> {
    /// The same deterministic bath in every realization (nuclear baths).
    Fixed(&'a [BathSpin]),
    /// Candidate qubit sites occupied at random with probability
    /// `concentration` per realization.
    Electron {
        sites: &'a [Vector3<f64>],
        concentration: f64,
        species: Arc<SpinSpecies>,
    },
    /// Fixed nuclear spins plus a sampled electronic component.
    Mixed {
        fixed: &'a [BathSpin],
        sites: &'a [Vector3<f64>],
        concentration: f64,
        species: Arc<SpinSpecies>,
    },
}

pub struct EnsembleParams<'a> {
    pub cs: &'a CentralSystem,
    pub qubit: &'a QubitLevels,
    pub source: BathSource<'a>,
    pub order: usize,
    pub r_bath: f64,
    pub r_dipole: f64,
    pub cluster_cap: usize,
    pub dim_cap: usize,
    pub opts: CouplingOptions,
    pub sequence: PulseSequence,
    pub times: Vec<f64>,
    pub n_realizations: usize,
    pub n_meanfield_samples: usize,
    pub master_seed: u64,
}

/// Arithmetic mean of the total coherence over bath realizations and
/// mean-field samples, with a deterministic fixed-order reduction so results
/// do not depend on worker count.
pub fn ensemble_coherence(params: &EnsembleParams) -> Result<CoherenceCurve, EngineError> {
    let n_times = params.times.len();
    let mut sum = vec![C64::new(0.0, 0.0); n_times];
    let mut realization_seeds = Vec::new();
    let mut mean_field_seeds = Vec::new();
    let mut guarded_total = 0u64;
    let mut quotient_points = 0u64;
    let mut n_bath_spins = 0usize;
    let mut n_clusters = 0usize;

    for r in 0..params.n_realizations {
        let bath_seed = derive_seed(params.master_seed, 1, r as u64);
        let wrap = |e: EngineError| EngineError::Realization {
            realization: r,
            seed: bath_seed,
            source: Box::new(e),
        };

        let bath: Vec<BathSpin> = match &params.source {
            BathSource::Fixed(spins) => spins.to_vec(),
            BathSource::Electron {
                sites,
                concentration,
                species,
            } => {
                realization_seeds.push(bath_seed);
                sample_electron_bath(sites, *concentration, bath_seed, species.clone()).spins
            }
            BathSource::Mixed {
                fixed,
                sites,
                concentration,
                species,
            } => {
                realization_seeds.push(bath_seed);
                let mut all = fixed.to_vec();
                all.extend(
                    sample_electron_bath(sites, *concentration, bath_seed, species.clone()).spins,
                );
                all
            }
        };
        n_bath_spins = n_bath_spins.max(bath.len());

        let graph = build_connectivity(&bath, params.r_dipole);
        let clusters =
            enumerate_clusters(&graph, params.order, params.cluster_cap).map_err(|e| wrap(e.into()))?;
        n_clusters = n_clusters.max(clusters.len());

        for s in 0..params.n_meanfield_samples {
            let mf_seed = derive_seed(
                params.master_seed,
                2,
                (r * params.n_meanfield_samples + s) as u64,
            );
            mean_field_seeds.push(mf_seed);
            let sample = MeanFieldSample::draw(&bath, mf_seed);
            let table =
                MeanFieldTable::build(params.cs, &bath, &sample, &params.opts).map_err(|e| wrap(e.into()))?;

            let raw: Result<Vec<Vec<C64>>, EngineError> = (0..clusters.len())
                .into_par_iter()
                .map(|id| {
                    cluster_coherence(
                        params.cs,
                        params.qubit,
                        &bath,
                        &clusters.clusters[id].members,
                        &table,
                        params.sequence,
                        &params.times,
                        &params.opts,
                        params.dim_cap,
                    )
                })
                .collect();
            let raw = raw.map_err(wrap)?;

            let (tilde, guarded) = irreducible_coherence(&clusters, &raw, DIVISION_GUARD_EPS);
            guarded_total += guarded;
            quotient_points += (clusters.len() * n_times) as u64;
            let total = total_coherence(&clusters, &tilde);
            for (acc, v) in sum.iter_mut().zip(&total) {
                *acc += v;
            }
        }
    }

    let count = (params.n_realizations * params.n_meanfield_samples) as f64;
    let values: Vec<C64> = sum.into_iter().map(|v| v / C64::new(count, 0.0)).collect();

    let concentration = match &params.source {
        BathSource::Electron { concentration, .. } | BathSource::Mixed { concentration, .. } => {
            Some(*concentration)
        }
        BathSource::Fixed(_) => None,
    };
    let meta = CurveMeta {
        order: params.order,
        r_bath: params.r_bath,
        r_dipole: params.r_dipole,
        field_gauss: [params.cs.field[0], params.cs.field[1], params.cs.field[2]],
        sequence: params.sequence.label(),
        master_seed: params.master_seed,
        realization_seeds,
        mean_field_seeds,
        concentration,
        n_bath_spins,
        n_clusters,
        guarded_divisions: guarded_total,
        divergence_flag: quotient_points > 0
            && (guarded_total as f64) > DIVERGENCE_FLAG_FRACTION * quotient_points as f64,
    };
    Ok(CoherenceCurve {
        times: params.times.clone(),
        values,
        meta,
    })
}
