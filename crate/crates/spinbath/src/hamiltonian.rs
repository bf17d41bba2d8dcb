//! Central-spin and cluster Hamiltonian assembly: Zeeman terms, the central
//! hyperfine/quadrupole block, point-dipole couplings for every spin-spin
//! interaction, and static mean-field shifts from frozen non-cluster spins.
//!
//! Units: Hamiltonians in rad/ms, magnetic field in Gauss, positions in
//! Angstrom, gyromagnetic ratios in rad ms^-1 G^-1.

use crate::algebra::{
    embed, identity, kron, AlgebraError, CMatrix, CVector, Eigendecomposition, HermitianMatrix,
    SpinOperators,
};
use crate::species::{SpinSpecies, DIPOLE_PREFACTOR, MU_B_RAD_PER_MS_G};
use crate::structure::BathSpin;
use nalgebra::{Matrix3, Vector3};
use std::sync::Arc;
use thiserror::Error;

/// Default cap on cluster Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("coincident spin positions: point-dipole coupling is singular")]
    CoincidentPositions,
    #[error("qubit level identification failed: {0}")]
    LevelIdentification(String),
    #[error("cluster Hilbert space dimension {dim} exceeds cap {cap}")]
    ClusterTooLarge { dim: usize, cap: usize },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// 3x3 real coupling tensor in rad/ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTensor(pub Matrix3<f64>);

impl CouplingTensor {
    pub fn zero() -> Self {
        Self(Matrix3::zeros())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Deviation from (symmetric, traceless), relative to the tensor scale.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let asym = (self.0 - self.0.transpose()).norm();
        let trace = self.0.trace().abs();
        (asym + trace) / scale
    }
}

/// Point-dipole interaction tensor between spins at `r1` and `r2`:
/// T_ab = -prefactor (3 n_a n_b - delta_ab) / r^3, symmetric and traceless,
/// with prefactor = gamma1 gamma2 hbar mu0 / 4pi in internal units. Two
/// parallel moments aligned along their separation axis bind (negative
/// energy).
pub fn dipole_tensor(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    gamma1: f64,
    gamma2: f64,
) -> Result<CouplingTensor, HamiltonianError> {
    let sep = r2 - r1;
    let r = sep.norm();
    if r < 1e-9 {
        return Err(HamiltonianError::CoincidentPositions);
    }
    let n = sep / r;
    let scale = DIPOLE_PREFACTOR * gamma1 * gamma2 / (r * r * r);
    let mut t = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            t[(a, b)] = -scale * (3.0 * n[a] * n[b] - delta);
        }
    }
    Ok(CouplingTensor(t))
}

/// How the central spin couples to bath spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralCoupling {
    /// Full point-dipole tensor.
    PointDipole,
    /// Only the zz element is kept (pure-dephasing form).
    SecularZz,
    /// Coupling switched off.
    Off,
}

/// Interaction toggles for cluster Hamiltonians.
#[derive(Debug, Clone, Copy)]
pub struct CouplingOptions {
    pub central: CentralCoupling,
    pub bath_bath: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            central: CentralCoupling::PointDipole,
            bath_bath: true,
        }
    }
}

/// The qubit's own nuclear spin with its hyperfine tensor (rad/ms) and axial
/// quadrupole coupling (rad/ms).
#[derive(Debug, Clone)]
pub struct OwnNucleus {
    pub species: Arc<SpinSpecies>,
    pub hyperfine: Matrix3<f64>,
    pub quadrupole_p: f64,
}

/// The central electronic spin, optionally hybridized with its own nucleus.
#[derive(Debug, Clone)]
pub struct CentralSystem {
    pub electron_s: f64,
    pub g_tensor: Matrix3<f64>,
    pub zfs: Matrix3<f64>,
    pub own_nucleus: Option<OwnNucleus>,
    pub field: Vector3<f64>,
    pub position: Vector3<f64>,
}

impl CentralSystem {
    /// Free electron in a field along z, no own nucleus.
    pub fn free_electron(field_gauss: f64) -> Self {
        Self {
            electron_s: 0.5,
            g_tensor: Matrix3::identity() * crate::species::G_FREE_ELECTRON,
            zfs: Matrix3::zeros(),
            own_nucleus: None,
            field: Vector3::new(0.0, 0.0, field_gauss),
            position: Vector3::zeros(),
        }
    }

    pub fn electron_dim(&self) -> usize {
        crate::algebra::spin_dim(self.electron_s)
    }

    pub fn nucleus_dim(&self) -> usize {
        self.own_nucleus.as_ref().map_or(1, |n| n.species.dim())
    }

    /// Dimension of the hybrid electron (x) own-nucleus space.
    pub fn hybrid_dim(&self) -> usize {
        self.electron_dim() * self.nucleus_dim()
    }

    pub fn g_iso(&self) -> f64 {
        self.g_tensor.trace() / 3.0
    }

    /// Gyromagnetic ratio entering point-dipole couplings to bath spins.
    pub fn gamma_dipolar(&self) -> f64 {
        self.g_iso() * MU_B_RAD_PER_MS_G
    }

    /// Electron spin operators on the hybrid space (S (x) identity).
    pub fn hybrid_spin_ops(&self) -> [CMatrix; 3] {
        let ops = SpinOperators::new(self.electron_s).expect("validated spin");
        let id_n = identity(self.nucleus_dim());
        [
            kron(&ops.sx, &id_n),
            kron(&ops.sy, &id_n),
            kron(&ops.sz, &id_n),
        ]
    }

    /// Flat index of the product state |m_s, m_I> in the hybrid space.
    pub fn product_state_index(&self, m_s: f64, m_i: f64) -> Option<usize> {
        let e_idx = (self.electron_s - m_s).round();
        if e_idx < 0.0 || e_idx >= self.electron_dim() as f64
            || (self.electron_s - m_s - e_idx).abs() > 1e-9
        {
            return None;
        }
        // Without an own nucleus the m_I label carries no information.
        let n_idx = match &self.own_nucleus {
            None => 0.0,
            Some(nuc) => {
                let idx = (nuc.species.s - m_i).round();
                if idx < 0.0 || idx >= nuc.species.dim() as f64
                    || (nuc.species.s - m_i - idx).abs() > 1e-9
                {
                    return None;
                }
                idx
            }
        };
        Some(e_idx as usize * self.nucleus_dim() + n_idx as usize)
    }

    /// Central coupling tensor to a bath spin, honoring the coupling mode.
    pub fn coupling_to(
        &self,
        spin: &BathSpin,
        mode: CentralCoupling,
    ) -> Result<CouplingTensor, HamiltonianError> {
        match mode {
            CentralCoupling::Off => Ok(CouplingTensor::zero()),
            CentralCoupling::PointDipole => dipole_tensor(
                &self.position,
                &spin.position,
                self.gamma_dipolar(),
                spin.species.gamma,
            ),
            CentralCoupling::SecularZz => {
                let full = dipole_tensor(
                    &self.position,
                    &spin.position,
                    self.gamma_dipolar(),
                    spin.species.gamma,
                )?;
                let mut t = Matrix3::zeros();
                t[(2, 2)] = full.0[(2, 2)];
                Ok(CouplingTensor(t))
            }
        }
    }
}

/// H = mu_B B.g.S + S.A.I + gamma_N B.I + p I_z^2 (+ S.D.S) on the hybrid
/// electron (x) own-nucleus space.
pub fn build_central_hamiltonian(cs: &CentralSystem) -> HermitianMatrix {
    let e_ops = SpinOperators::new(cs.electron_s).expect("validated spin");
    let d_n = cs.nucleus_dim();
    let id_n = identity(d_n);
    let dim = cs.hybrid_dim();
    let mut h = CMatrix::zeros(dim, dim);

    // Electron Zeeman mu_B B.g.S and zero-field splitting S.D.S, both acting
    // on the electron factor only.
    let mut h_e = CMatrix::zeros(e_ops.dim(), e_ops.dim());
    let e_vec = e_ops.vector();
    for a in 0..3 {
        let mut coeff = 0.0;
        for b in 0..3 {
            coeff += MU_B_RAD_PER_MS_G * cs.field[b] * cs.g_tensor[(b, a)];
        }
        h_e += e_vec[a].scale(coeff);
        for b in 0..3 {
            let d_ab = cs.zfs[(a, b)];
            if d_ab != 0.0 {
                h_e += (e_vec[a] * e_vec[b]).scale(d_ab);
            }
        }
    }
    h += kron(&h_e, &id_n);

    if let Some(nuc) = &cs.own_nucleus {
        let n_ops = SpinOperators::new(nuc.species.s).expect("validated spin");
        let n_vec = n_ops.vector();
        let id_e = identity(e_ops.dim());

        // Hyperfine S.A.I across the two factors.
        for a in 0..3 {
            let mut w = CMatrix::zeros(d_n, d_n);
            for b in 0..3 {
                let a_ab = nuc.hyperfine[(a, b)];
                if a_ab != 0.0 {
                    w += n_vec[b].scale(a_ab);
                }
            }
            if w.iter().any(|c| c.norm_sqr() > 0.0) {
                h += kron(e_vec[a], &w);
            }
        }

        // Nuclear Zeeman gamma_N B.I and axial quadrupole p I_z^2.
        let mut h_n = CMatrix::zeros(d_n, d_n);
        for a in 0..3 {
            h_n += n_vec[a].scale(nuc.species.gamma * cs.field[a]);
        }
        h_n += (&n_ops.sz * &n_ops.sz).scale(nuc.quadrupole_p);
        h += kron(&id_e, &h_n);
    }

    HermitianMatrix::new(h).expect("assembled Hamiltonian is Hermitian")
}

/// The two hybrid eigenstates selected as the qubit.
#[derive(Debug, Clone)]
pub struct QubitLevels {
    pub indices: (usize, usize),
    pub energies: (f64, f64),
    pub states: [CVector; 2],
}

impl QubitLevels {
    /// Equal superposition (|0> + |1>)/sqrt(2) in the hybrid space.
    pub fn superposition(&self) -> CVector {
        (&self.states[0] + &self.states[1]).scale(std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Ideal instantaneous pi rotation on the qubit subspace, identity on the
    /// passive hybrid levels.
    pub fn pi_pulse(&self, axis: crate::pulse::PulseAxis) -> CMatrix {
        let dim = self.states[0].len();
        let (v0, v1) = (&self.states[0], &self.states[1]);
        let mut r = identity(dim);
        r -= v0 * v0.adjoint();
        r -= v1 * v1.adjoint();
        match axis {
            // exp(-i pi Sx) on the 2-level block.
            crate::pulse::PulseAxis::X => {
                let minus_i = crate::algebra::C64::new(0.0, -1.0);
                r += (v1 * v0.adjoint()) * minus_i;
                r += (v0 * v1.adjoint()) * minus_i;
            }
            // exp(-i pi Sy): |0> -> |1>, |1> -> -|0>.
            crate::pulse::PulseAxis::Y => {
                r += v1 * v0.adjoint();
                r -= v0 * v1.adjoint();
            }
        }
        r
    }
}

/// Labels of the target transition in the product basis.
#[derive(Debug, Clone, Copy)]
pub struct QubitTargets {
    pub level_a: (f64, f64),
    pub level_b: (f64, f64),
}

impl QubitTargets {
    /// The |m_s=-1/2, m_I> <-> |m_s=+1/2, m_I> electron transition.
    pub fn electron_flip(m_i: f64) -> Self {
        Self {
            level_a: (-0.5, m_i),
            level_b: (0.5, m_i),
        }
    }
}

/// Finds the two eigenvectors of `h` with maximal overlap onto the labeled
/// product states. Each overlap probability must exceed 0.5 and the selected
/// levels must be non-degenerate with the rest of the spectrum.
pub fn select_qubit_levels(
    h: &HermitianMatrix,
    cs: &CentralSystem,
    targets: QubitTargets,
) -> Result<QubitLevels, HamiltonianError> {
    let eig = Eigendecomposition::new(h);
    let dim = eig.dim();

    let pick = |label: (f64, f64)| -> Result<usize, HamiltonianError> {
        let basis_idx = cs.product_state_index(label.0, label.1).ok_or_else(|| {
            HamiltonianError::LevelIdentification(format!(
                "label (m_s={}, m_I={}) is not a valid product state",
                label.0, label.1
            ))
        })?;
        let mut best = 0;
        let mut best_overlap = -1.0;
        for k in 0..dim {
            let overlap = eig.vectors[(basis_idx, k)].norm_sqr();
            if overlap > best_overlap {
                best_overlap = overlap;
                best = k;
            }
        }
        if best_overlap <= 0.5 {
            return Err(HamiltonianError::LevelIdentification(format!(
                "best overlap {best_overlap:.3} with |m_s={}, m_I={}> does not exceed 0.5",
                label.0, label.1
            )));
        }
        Ok(best)
    };

    let idx_a = pick(targets.level_a)?;
    let idx_b = pick(targets.level_b)?;
    if idx_a == idx_b {
        return Err(HamiltonianError::LevelIdentification(
            "both labels select the same eigenvector".into(),
        ));
    }

    let scale = eig.values.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let gap_tol = 1e-9 * scale.max(1.0);
    for &sel in &[idx_a, idx_b] {
        for k in 0..dim {
            if k != idx_a && k != idx_b && (eig.values[k] - eig.values[sel]).abs() < gap_tol {
                return Err(HamiltonianError::LevelIdentification(format!(
                    "selected level {sel} is degenerate with level {k}"
                )));
            }
        }
    }

    Ok(QubitLevels {
        indices: (idx_a, idx_b),
        energies: (eig.values[idx_a], eig.values[idx_b]),
        states: [
            eig.vectors.column(idx_a).clone_owned(),
            eig.vectors.column(idx_b).clone_owned(),
        ],
    })
}

/// Operator acting as `op_a` on tensor factor `site_a` and `op_b` on
/// `site_b` (site_a < site_b), identity elsewhere.
fn two_site(
    op_a: &CMatrix,
    site_a: usize,
    op_b: &CMatrix,
    site_b: usize,
    dims: &[usize],
) -> CMatrix {
    debug_assert!(site_a < site_b);
    let pre: usize = dims[..site_a].iter().product();
    let mid: usize = dims[site_a + 1..site_b].iter().product();
    let post: usize = dims[site_b + 1..].iter().product();
    let mut out = kron(&identity(pre), op_a);
    out = kron(&out, &identity(mid));
    out = kron(&out, op_b);
    kron(&out, &identity(post))
}

/// Static mean-field vectors from frozen non-cluster spins: the shift on the
/// central spin and one shift per cluster spin (z-polarized frozen moments,
/// so only the z-column of each coupling tensor enters).
pub fn mean_field_shifts(
    cs: &CentralSystem,
    cluster: &[&BathSpin],
    mean_field: &[(&BathSpin, f64)],
    opts: &CouplingOptions,
) -> Result<(Vector3<f64>, Vec<Vector3<f64>>), HamiltonianError> {
    let mut s_shift = Vector3::zeros();
    for (spin, m_z) in mean_field {
        let a = cs.coupling_to(spin, opts.central)?;
        s_shift += a.0.column(2) * *m_z;
    }
    let mut spin_shifts = vec![Vector3::zeros(); cluster.len()];
    if opts.bath_bath {
        for (i, member) in cluster.iter().enumerate() {
            for (spin, m_z) in mean_field {
                let j = dipole_tensor(
                    &member.position,
                    &spin.position,
                    member.species.gamma,
                    spin.species.gamma,
                )?;
                spin_shifts[i] += j.0.column(2) * *m_z;
            }
        }
    }
    Ok((s_shift, spin_shifts))
}

/// Cluster Hamiltonian with mean-field shifts already accumulated.
pub fn build_cluster_hamiltonian_with_shifts(
    cs: &CentralSystem,
    cluster: &[&BathSpin],
    s_shift: &Vector3<f64>,
    spin_shifts: &[Vector3<f64>],
    opts: &CouplingOptions,
    dim_cap: usize,
) -> Result<HermitianMatrix, HamiltonianError> {
    debug_assert_eq!(cluster.len(), spin_shifts.len());
    let mut dims = Vec::with_capacity(cluster.len() + 1);
    dims.push(cs.hybrid_dim());
    dims.extend(cluster.iter().map(|s| s.species.dim()));
    let dim: usize = dims.iter().product();
    if dim > dim_cap {
        return Err(HamiltonianError::ClusterTooLarge { dim, cap: dim_cap });
    }

    let h_central = build_central_hamiltonian(cs).into_matrix();
    let s_ops = cs.hybrid_spin_ops();

    // Central block plus the static mean-field shift on S.
    let mut central_local = h_central;
    for a in 0..3 {
        if s_shift[a] != 0.0 {
            central_local += s_ops[a].scale(s_shift[a]);
        }
    }
    let mut h = embed(&central_local, 0, &dims)?;

    let cluster_ops: Vec<SpinOperators> = cluster
        .iter()
        .map(|s| SpinOperators::new(s.species.s).expect("validated spin"))
        .collect();

    for (i, member) in cluster.iter().enumerate() {
        let ops = &cluster_ops[i];
        let vec_ops = ops.vector();
        let site = i + 1;

        // Bath Zeeman, quadrupole, and the frozen-spin shift, all local.
        let mut local = CMatrix::zeros(ops.dim(), ops.dim());
        for a in 0..3 {
            let coeff = member.species.gamma * cs.field[a] + spin_shifts[i][a];
            if coeff != 0.0 {
                local += vec_ops[a].scale(coeff);
            }
        }
        if member.species.quadrupole_p != 0.0 {
            local += (&ops.sz * &ops.sz).scale(member.species.quadrupole_p);
        }
        if local.iter().any(|c| c.norm_sqr() > 0.0) {
            h += embed(&local, site, &dims)?;
        }

        // Central-bath coupling S.A_i.I_i.
        let a_i = cs.coupling_to(member, opts.central)?;
        if a_i.max_abs() > 0.0 {
            for a in 0..3 {
                let mut w = CMatrix::zeros(ops.dim(), ops.dim());
                let mut any = false;
                for b in 0..3 {
                    if a_i.0[(a, b)] != 0.0 {
                        w += vec_ops[b].scale(a_i.0[(a, b)]);
                        any = true;
                    }
                }
                if any {
                    h += two_site(&s_ops[a], 0, &w, site, &dims);
                }
            }
        }
    }

    // Bath-bath couplings I_i.J_ij.I_j for every pair inside the cluster.
    if opts.bath_bath {
        for i in 0..cluster.len() {
            for j in (i + 1)..cluster.len() {
                let j_ij = dipole_tensor(
                    &cluster[i].position,
                    &cluster[j].position,
                    cluster[i].species.gamma,
                    cluster[j].species.gamma,
                )?;
                let (ops_i, ops_j) = (&cluster_ops[i], &cluster_ops[j]);
                for a in 0..3 {
                    let mut w = CMatrix::zeros(ops_j.dim(), ops_j.dim());
                    let mut any = false;
                    for b in 0..3 {
                        if j_ij.0[(a, b)] != 0.0 {
                            w += ops_j.vector()[b].scale(j_ij.0[(a, b)]);
                            any = true;
                        }
                    }
                    if any {
                        h += two_site(ops_i.vector()[a], i + 1, &w, j + 1, &dims);
                    }
                }
            }
        }
    }

    HermitianMatrix::new(h).map_err(Into::into)
}

/// Cluster Hamiltonian of the central system plus `cluster` spins, with the
/// listed non-cluster spins frozen at polarization <I_z> = m.
pub fn build_cluster_hamiltonian(
    cs: &CentralSystem,
    cluster: &[&BathSpin],
    mean_field: &[(&BathSpin, f64)],
    opts: &CouplingOptions,
    dim_cap: usize,
) -> Result<HermitianMatrix, HamiltonianError> {
    let (s_shift, spin_shifts) = mean_field_shifts(cs, cluster, mean_field, opts)?;
    build_cluster_hamiltonian_with_shifts(cs, cluster, &s_shift, &spin_shifts, opts, dim_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{hermiticity_deviation, C64};
    use crate::species::SpeciesRegistry;
    use approx::assert_relative_eq;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn votpp_central(field_gauss: f64) -> CentralSystem {
        let reg = SpeciesRegistry::builtin();
        let mhz = crate::species::MHZ_TO_RAD_PER_MS;
        CentralSystem {
            electron_s: 0.5,
            g_tensor: Matrix3::from_diagonal(&Vector3::new(1.984, 1.984, 1.968)),
            zfs: Matrix3::zeros(),
            own_nucleus: Some(OwnNucleus {
                species: reg.get("V51").unwrap(),
                hyperfine: Matrix3::from_diagonal(&Vector3::new(
                    -166.0 * mhz,
                    -166.0 * mhz,
                    -473.0 * mhz,
                )),
                quadrupole_p: -0.35 * mhz,
            }),
            field: Vector3::new(0.0, 0.0, field_gauss),
            position: Vector3::zeros(),
        }
    }

    fn cumnt_central(field_gauss: f64) -> CentralSystem {
        let reg = SpeciesRegistry::builtin();
        let mhz = crate::species::MHZ_TO_RAD_PER_MS;
        CentralSystem {
            electron_s: 0.5,
            g_tensor: Matrix3::from_diagonal(&Vector3::new(2.0227, 2.0227, 2.0925)),
            zfs: Matrix3::zeros(),
            own_nucleus: Some(OwnNucleus {
                species: reg.get("Cu63").unwrap(),
                hyperfine: Matrix3::from_diagonal(&Vector3::new(
                    118.0 * mhz,
                    118.0 * mhz,
                    500.0 * mhz,
                )),
                quadrupole_p: 9.45 * mhz,
            }),
            field: Vector3::new(0.0, 0.0, field_gauss),
            position: Vector3::zeros(),
        }
    }

    fn h_spin(position: [f64; 3]) -> BathSpin {
        BathSpin {
            position: Vector3::from(position),
            species: SpeciesRegistry::builtin().get("H").unwrap(),
        }
    }

    #[test]
    fn dipole_axial_symmetry_along_z() {
        let t = dipole_tensor(
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 3.0),
            26.7522,
            26.7522,
        )
        .unwrap();
        assert_relative_eq!(t.0[(0, 0)], -t.0[(2, 2)] / 2.0, max_relative = 1e-12);
        assert_relative_eq!(t.0[(1, 1)], t.0[(0, 0)], max_relative = 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!(t.0[(a, b)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dipole_scales_as_inverse_cube() {
        let near = dipole_tensor(&Vector3::zeros(), &Vector3::new(1.0, 2.0, 2.0), 5.0, 7.0).unwrap();
        let far = dipole_tensor(&Vector3::zeros(), &Vector3::new(2.0, 4.0, 4.0), 5.0, 7.0).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_relative_eq!(far.0[(a, b)], near.0[(a, b)] / 8.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn proton_pair_at_two_angstrom_matches_hand_value() {
        // SI route: (mu0/4pi) gamma^2 hbar / r^3 with gamma = 2.67522e8
        // rad/s/T, hbar = 1.054571817e-34 J s, r = 2e-10 m gives 9.43420e4
        // rad/s for the axial scale; T_zz = -2x = -188.684 rad/ms.
        let t = dipole_tensor(
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 2.0),
            26.7522,
            26.7522,
        )
        .unwrap();
        assert_relative_eq!(t.0[(2, 2)], -188.68404, max_relative = 1e-6);
        assert_relative_eq!(t.0[(0, 0)], 94.34202, max_relative = 1e-6);
    }

    #[test]
    fn dipole_tensor_is_symmetric_traceless_and_position_symmetric() {
        let (r1, r2) = (Vector3::new(0.1, -0.4, 0.9), Vector3::new(2.0, 1.0, -1.5));
        let t12 = dipole_tensor(&r1, &r2, 3.0, 11.0).unwrap();
        let t21 = dipole_tensor(&r2, &r1, 3.0, 11.0).unwrap();
        assert!(t12.symmetry_defect() < 1e-10);
        assert!((t12.0 - t21.0).norm() < 1e-12);
        assert!((t12.0 - t12.0.transpose()).norm() < 1e-12);
    }

    #[test]
    fn coincident_positions_are_singular() {
        let r = Vector3::new(1.0, 1.0, 1.0);
        assert!(dipole_tensor(&r, &r, 1.0, 1.0).is_err());
    }

    #[test]
    fn central_hamiltonian_zero_inputs_zero_matrix() {
        let reg = SpeciesRegistry::builtin();
        let cs = CentralSystem {
            electron_s: 0.5,
            g_tensor: Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 2.0)),
            zfs: Matrix3::zeros(),
            own_nucleus: Some(OwnNucleus {
                species: reg.get("V51").unwrap(),
                hyperfine: Matrix3::zeros(),
                quadrupole_p: 0.0,
            }),
            field: Vector3::zeros(),
            position: Vector3::zeros(),
        };
        // Nuclear Zeeman also vanishes at B = 0.
        let h = build_central_hamiltonian(&cs);
        assert!(max_abs(h.matrix()) < 1e-12);
    }

    /// Independent construction of the hybrid Hamiltonian from raw ladder
    /// matrices, without going through the production operators.
    fn oracle_hybrid_hamiltonian(
        g: [f64; 2],
        a: [f64; 2],
        p: f64,
        gamma_n: f64,
        nuclear_s: f64,
        b_gauss: f64,
    ) -> CMatrix {
        let dn = (2.0 * nuclear_s).round() as usize + 1;
        let m_of = |i: usize| nuclear_s - i as f64;
        let mut iz = CMatrix::zeros(dn, dn);
        let mut ip = CMatrix::zeros(dn, dn);
        for i in 0..dn {
            iz[(i, i)] = C64::new(m_of(i), 0.0);
        }
        for i in 1..dn {
            let m = m_of(i);
            ip[(i - 1, i)] = C64::new(
                (nuclear_s * (nuclear_s + 1.0) - m * (m + 1.0)).sqrt(),
                0.0,
            );
        }
        let im = ip.adjoint();
        let ix = (&ip + &im).scale(0.5);
        let iy = (&ip - &im) * C64::new(0.0, -0.5);

        let sz = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::new(0.5, 0.0),
            C64::new(-0.5, 0.0),
        ]));
        let mut sx = CMatrix::zeros(2, 2);
        sx[(0, 1)] = C64::new(0.5, 0.0);
        sx[(1, 0)] = C64::new(0.5, 0.0);
        let mut sy = CMatrix::zeros(2, 2);
        sy[(0, 1)] = C64::new(0.0, -0.5);
        sy[(1, 0)] = C64::new(0.0, 0.5);
        let id_n = identity(dn);
        let id_e = identity(2);

        // Field along z, diagonal g and A: only g_par enters the electron
        // Zeeman, the hyperfine splits into perp and parallel parts.
        kron(&sz.scale(MU_B_RAD_PER_MS_G * g[1] * b_gauss), &id_n)
            + kron(&sx.scale(a[0]), &ix)
            + kron(&sy.scale(a[0]), &iy)
            + kron(&sz.scale(a[1]), &iz)
            + kron(&id_e, &iz.scale(gamma_n * b_gauss))
            + kron(&id_e, &(&iz * &iz).scale(p))
    }

    #[test]
    fn votpp_levels_match_oracle_and_split_into_two_manifolds() {
        let cs = votpp_central(3300.0);
        let h = build_central_hamiltonian(&cs);
        assert_eq!(h.dim(), 16);

        let mhz = crate::species::MHZ_TO_RAD_PER_MS;
        let gamma_v = SpeciesRegistry::builtin().get("V51").unwrap().gamma;
        let oracle = oracle_hybrid_hamiltonian(
            [1.984, 1.968],
            [-166.0 * mhz, -473.0 * mhz],
            -0.35 * mhz,
            gamma_v,
            3.5,
            3300.0,
        );
        assert!(max_abs(&(h.matrix() - &oracle)) < 1e-9 * max_abs(&oracle));

        let eig = Eigendecomposition::new(&h);
        // Two hyperfine-split manifolds of 8, separated by the electron Zeeman gap.
        let gap = eig.values[8] - eig.values[7];
        let lower_width = eig.values[7] - eig.values[0];
        let upper_width = eig.values[15] - eig.values[8];
        assert!(gap > 3.0 * lower_width.max(upper_width), "gap {gap}");
    }

    #[test]
    fn cumnt_levels_form_two_manifolds_of_four() {
        let h = build_central_hamiltonian(&cumnt_central(3300.0));
        assert_eq!(h.dim(), 8);
        let eig = Eigendecomposition::new(&h);
        let gap = eig.values[4] - eig.values[3];
        let widths = (eig.values[3] - eig.values[0]).max(eig.values[7] - eig.values[4]);
        assert!(gap > 5.0 * widths);
    }

    #[test]
    fn product_states_selected_exactly_when_uncoupled() {
        let reg = SpeciesRegistry::builtin();
        let cs = CentralSystem {
            own_nucleus: Some(OwnNucleus {
                species: reg.get("V51").unwrap(),
                hyperfine: Matrix3::zeros(),
                quadrupole_p: 0.0,
            }),
            ..votpp_central(3300.0)
        };
        let h = build_central_hamiltonian(&cs);
        let levels = select_qubit_levels(&h, &cs, QubitTargets::electron_flip(-0.5)).unwrap();
        let idx_a = cs.product_state_index(-0.5, -0.5).unwrap();
        let idx_b = cs.product_state_index(0.5, -0.5).unwrap();
        assert!(levels.states[0][idx_a].norm_sqr() > 1.0 - 1e-9);
        assert!(levels.states[1][idx_b].norm_sqr() > 1.0 - 1e-9);
        assert!(levels.energies.1 > levels.energies.0);
    }

    #[test]
    fn votpp_qubit_levels_resolve_at_working_field() {
        let cs = votpp_central(3300.0);
        let h = build_central_hamiltonian(&cs);
        let levels = select_qubit_levels(&h, &cs, QubitTargets::electron_flip(-0.5)).unwrap();
        assert_ne!(levels.indices.0, levels.indices.1);
        let idx_a = cs.product_state_index(-0.5, -0.5).unwrap();
        assert!(levels.states[0][idx_a].norm_sqr() > 0.9);
        // m_s = -1/2 manifold lies below at this field.
        assert!(levels.energies.0 < levels.energies.1);
    }

    #[test]
    fn degenerate_hamiltonian_rejected() {
        let reg = SpeciesRegistry::builtin();
        let cs = CentralSystem {
            electron_s: 0.5,
            g_tensor: Matrix3::identity() * 2.0,
            zfs: Matrix3::zeros(),
            own_nucleus: Some(OwnNucleus {
                species: reg.get("V51").unwrap(),
                hyperfine: Matrix3::zeros(),
                quadrupole_p: 0.0,
            }),
            field: Vector3::zeros(),
            position: Vector3::zeros(),
        };
        let h = build_central_hamiltonian(&cs);
        assert!(matches!(
            select_qubit_levels(&h, &cs, QubitTargets::electron_flip(-0.5)),
            Err(HamiltonianError::LevelIdentification(_))
        ));
    }

    #[test]
    fn quadrupole_on_spin_half_nucleus_shifts_spectrum_uniformly() {
        let reg = SpeciesRegistry::builtin();
        let make = |p: f64| {
            let cs = CentralSystem {
                electron_s: 0.5,
                g_tensor: Matrix3::identity() * 2.0,
                zfs: Matrix3::zeros(),
                own_nucleus: Some(OwnNucleus {
                    species: reg.get("H").unwrap(),
                    hyperfine: Matrix3::from_diagonal(&Vector3::new(10.0, 10.0, 25.0)),
                    quadrupole_p: p,
                }),
                field: Vector3::new(0.0, 0.0, 500.0),
                position: Vector3::zeros(),
            };
            let h = build_central_hamiltonian(&cs);
            Eigendecomposition::new(&h).values
        };
        let base = make(0.0);
        let shifted = make(8.0);
        for k in 0..base.len() {
            // I_z^2 = 1/4 on a spin-1/2 nucleus.
            assert_relative_eq!(shifted[k] - base[k], 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_cluster_reduces_to_central_hamiltonian() {
        let cs = votpp_central(3300.0);
        let opts = CouplingOptions::default();
        let h = build_cluster_hamiltonian(&cs, &[], &[], &opts, DEFAULT_DIM_CAP).unwrap();
        let central = build_central_hamiltonian(&cs);
        assert!(max_abs(&(h.matrix() - central.matrix())) < 1e-12);
    }

    #[test]
    fn single_spin_cluster_has_dipolar_block() {
        let cs = votpp_central(3300.0);
        let spin = h_spin([0.0, 0.0, 4.0]);
        let opts = CouplingOptions::default();
        let h = build_cluster_hamiltonian(&cs, &[&spin], &[], &opts, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(h.dim(), 32);

        // Without the coupling the same dimensions appear but the cross block vanishes.
        let opts_off = CouplingOptions {
            central: CentralCoupling::Off,
            ..opts
        };
        let h_off = build_cluster_hamiltonian(&cs, &[&spin], &[], &opts_off, DEFAULT_DIM_CAP).unwrap();
        let diff = h.matrix() - h_off.matrix();
        assert!(max_abs(&diff) > 1.0);
    }

    #[test]
    fn mean_field_matches_frozen_third_spin_projection() {
        let cs = votpp_central(2000.0);
        let s1 = h_spin([0.0, 0.0, 5.0]);
        let s2 = h_spin([0.0, 4.0, 3.0]);
        let s3 = h_spin([3.0, 1.0, -4.0]);
        let opts = CouplingOptions::default();
        let m3 = 0.5;

        let h_mf = build_cluster_hamiltonian(&cs, &[&s1, &s2], &[(&s3, m3)], &opts, DEFAULT_DIM_CAP)
            .unwrap();

        // Oracle: explicit three-spin Hamiltonian, third spin frozen in its
        // m = +1/2 row/column block.
        let h_full =
            build_cluster_hamiltonian(&cs, &[&s1, &s2, &s3], &[], &opts, DEFAULT_DIM_CAP).unwrap();
        let d_hybrid = cs.hybrid_dim() * 2 * 2;
        let d3 = 2;
        let block_idx = 0; // m = +1/2 is the first spin-1/2 basis state
        let mut projected = CMatrix::zeros(d_hybrid, d_hybrid);
        for r in 0..d_hybrid {
            for c in 0..d_hybrid {
                projected[(r, c)] = h_full.matrix()[(r * d3 + block_idx, c * d3 + block_idx)];
            }
        }
        // Remove the frozen spin's own diagonal energy (Zeeman at m = +1/2).
        let self_energy = s3.species.gamma * cs.field[2] * m3;
        projected -= identity(d_hybrid).scale(self_energy);

        assert!(
            max_abs(&(h_mf.matrix() - &projected)) < 1e-9 * max_abs(&projected).max(1.0),
            "mean-field Hamiltonian deviates from frozen-spin projection"
        );
    }

    #[test]
    fn cluster_dimension_cap_enforced() {
        let cs = votpp_central(3300.0);
        let spins: Vec<BathSpin> = (0..9)
            .map(|i| h_spin([0.0, 0.0, 3.0 + i as f64]))
            .collect();
        let refs: Vec<&BathSpin> = spins.iter().collect();
        let opts = CouplingOptions::default();
        let err = build_cluster_hamiltonian(&cs, &refs, &[], &opts, DEFAULT_DIM_CAP).unwrap_err();
        assert!(matches!(err, HamiltonianError::ClusterTooLarge { dim: 8192, cap: 4096 }));
    }

    #[test]
    fn assembled_hamiltonians_are_hermitian() {
        let cs = cumnt_central(3300.0);
        let s1 = h_spin([1.0, 2.0, 3.0]);
        let s2 = h_spin([-2.0, 1.0, 4.0]);
        let s3 = h_spin([5.0, -1.0, 0.5]);
        let opts = CouplingOptions::default();
        let h = build_cluster_hamiltonian(&cs, &[&s1, &s2], &[(&s3, -0.5)], &opts, DEFAULT_DIM_CAP)
            .unwrap();
        let scale = max_abs(h.matrix());
        assert!(hermiticity_deviation(h.matrix()) < 1e-10 * scale);
    }
}
