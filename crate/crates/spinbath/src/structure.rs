//! Crystal structure ingestion and bath generation: extended-XYZ parsing,
//! periodic replication into a sphere, isotope substitution, and random
//! electronic-bath realizations at a target dilution.

use crate::species::{SpeciesError, SpeciesRegistry, SpinSpecies};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

/// Atoms closer than this to the central position are the qubit site itself
/// and never enter the bath.
const CENTRAL_EXCLUSION_ANGSTROM: f64 = 1e-6;

pub const AVOGADRO: f64 = 6.02214076e23;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("structure file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("lattice vectors are linearly dependent (volume {volume:.3e})")]
    SingularLattice { volume: f64 },
    #[error("cell volume must be positive")]
    ZeroVolume,
    #[error(transparent)]
    Species(#[from] SpeciesError),
}

/// A crystal unit cell: lattice vectors (rows, in Angstrom), atoms as
/// (element label, fractional coordinate), and the paramagnetic-center atom.
#[derive(Debug, Clone)]
pub struct UnitCell {
    pub lattice: Matrix3<f64>,
    pub atoms: Vec<(String, Vector3<f64>)>,
    pub qubit_site: usize,
}

impl UnitCell {
    pub fn volume(&self) -> f64 {
        self.lattice.determinant().abs()
    }

    /// Cartesian position of a fractional coordinate (plus integer cell shift).
    pub fn cartesian(&self, frac: &Vector3<f64>) -> Vector3<f64> {
        self.lattice.transpose() * frac
    }

    pub fn fractional(&self, cart: &Vector3<f64>) -> Vector3<f64> {
        self.lattice
            .transpose()
            .try_inverse()
            .expect("lattice validated invertible")
            * cart
    }

    pub fn qubit_position(&self) -> Vector3<f64> {
        self.cartesian(&self.atoms[self.qubit_site].1)
    }

    pub fn qubit_element(&self) -> &str {
        &self.atoms[self.qubit_site].0
    }

    /// Number of atoms in the cell sharing the qubit element (candidate qubit
    /// sites per cell, used for concentration accounting).
    pub fn qubits_per_cell(&self) -> usize {
        let element = self.qubit_element();
        self.atoms.iter().filter(|(el, _)| el == element).count()
    }
}

/// A positioned spin in the replicated crystal.
#[derive(Debug, Clone)]
pub struct BathSpin {
    pub position: Vector3<f64>,
    pub species: Arc<SpinSpecies>,
}

/// One random occupation of candidate sites by electron spins.
#[derive(Debug, Clone)]
pub struct BathRealization {
    pub spins: Vec<BathSpin>,
    pub seed: u64,
    pub concentration: f64,
}

/// Parses an extended-XYZ structure file.
///
/// Line 1: atom count. Line 2: `Lattice="ax ay az bx by bz cx cy cz"
/// qubit_index=K`. Remaining lines: `Element x y z` in Cartesian Angstrom.
pub fn parse_structure(text: &str) -> Result<UnitCell, StructureError> {
    let mut lines = text.lines().enumerate();

    let (_, count_line) = lines.next().ok_or(StructureError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let n_atoms: usize = count_line.trim().parse().map_err(|_| StructureError::Parse {
        line: 1,
        msg: format!("expected atom count, found '{}'", count_line.trim()),
    })?;

    let (_, header) = lines.next().ok_or(StructureError::Parse {
        line: 2,
        msg: "missing lattice header".into(),
    })?;
    let lattice = parse_lattice_header(header)?;
    let qubit_site = parse_qubit_index(header)?;

    let volume = lattice.determinant().abs();
    if volume < 1e-6 {
        return Err(StructureError::SingularLattice { volume });
    }

    let inv_t = lattice.transpose().try_inverse().unwrap();
    let mut atoms = Vec::with_capacity(n_atoms);
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(StructureError::Parse {
                line: line_no,
                msg: format!("expected 'Element x y z', found '{line}'"),
            });
        }
        let mut cart = Vector3::zeros();
        for k in 0..3 {
            cart[k] = fields[k + 1].parse().map_err(|_| StructureError::Parse {
                line: line_no,
                msg: format!("bad coordinate '{}'", fields[k + 1]),
            })?;
        }
        let mut frac = inv_t * cart;
        frac.apply(|x| *x -= x.floor());
        atoms.push((fields[0].to_string(), frac));
    }
    if atoms.len() != n_atoms {
        return Err(StructureError::Parse {
            line: 1,
            msg: format!("header declares {n_atoms} atoms, file has {}", atoms.len()),
        });
    }
    if qubit_site >= atoms.len() {
        return Err(StructureError::Parse {
            line: 2,
            msg: format!("qubit_index={qubit_site} out of range"),
        });
    }
    Ok(UnitCell {
        lattice,
        atoms,
        qubit_site,
    })
}

fn parse_lattice_header(header: &str) -> Result<Matrix3<f64>, StructureError> {
    let start = header.find("Lattice=\"").ok_or(StructureError::Parse {
        line: 2,
        msg: "missing Lattice=\"...\" entry".into(),
    })?;
    let rest = &header[start + 9..];
    let end = rest.find('"').ok_or(StructureError::Parse {
        line: 2,
        msg: "unterminated Lattice entry".into(),
    })?;
    let numbers: Vec<f64> = rest[..end]
        .split_whitespace()
        .map(|f| f.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| StructureError::Parse {
            line: 2,
            msg: "lattice entries must be numbers".into(),
        })?;
    if numbers.len() != 9 {
        return Err(StructureError::Parse {
            line: 2,
            msg: format!("lattice needs 9 numbers, found {}", numbers.len()),
        });
    }
    Ok(Matrix3::from_row_slice(&numbers))
}

fn parse_qubit_index(header: &str) -> Result<usize, StructureError> {
    let start = header.find("qubit_index=").ok_or(StructureError::Parse {
        line: 2,
        msg: "missing qubit_index entry".into(),
    })?;
    let rest = &header[start + 12..];
    let token: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    token.parse().map_err(|_| StructureError::Parse {
        line: 2,
        msg: "qubit_index must be a non-negative integer".into(),
    })
}

/// All periodic images of `frac` within `r` of `central`, as Cartesian
/// positions. Shift ranges are bounded by the interplanar spacings.
fn images_in_sphere(
    cell: &UnitCell,
    frac: &Vector3<f64>,
    central: &Vector3<f64>,
    r: f64,
) -> Vec<Vector3<f64>> {
    let a = cell.lattice.row(0).transpose();
    let b = cell.lattice.row(1).transpose();
    let c = cell.lattice.row(2).transpose();
    let volume = cell.volume();
    let spacings = [
        volume / b.cross(&c).norm(),
        volume / c.cross(&a).norm(),
        volume / a.cross(&b).norm(),
    ];
    let central_frac = cell.fractional(central);

    let mut out = Vec::new();
    let bound = |axis: usize| {
        let margin = r / spacings[axis] + 1.0;
        let lo = (central_frac[axis] - frac[axis] - margin).floor() as i64;
        let hi = (central_frac[axis] - frac[axis] + margin).ceil() as i64;
        lo..=hi
    };
    for na in bound(0) {
        for nb in bound(1) {
            for nc in bound(2) {
                let shifted = frac + Vector3::new(na as f64, nb as f64, nc as f64);
                let pos = cell.cartesian(&shifted);
                let dist = (pos - central).norm();
                if dist <= r && dist > CENTRAL_EXCLUSION_ANGSTROM {
                    out.push(pos);
                }
            }
        }
    }
    out
}

fn sort_positions(positions: &mut [Vector3<f64>], central: &Vector3<f64>) {
    positions.sort_by(|p, q| {
        let (dp, dq) = ((p - central).norm(), (q - central).norm());
        dp.total_cmp(&dq)
            .then(p.x.total_cmp(&q.x))
            .then(p.y.total_cmp(&q.y))
            .then(p.z.total_cmp(&q.z))
    });
}

/// Builds the nuclear spin bath: every periodic image of atoms whose element
/// is in `filter`, within `r_bath` of `central_position`, sorted by distance
/// then lexicographic position. The qubit site itself is excluded.
pub fn build_bath(
    cell: &UnitCell,
    registry: &SpeciesRegistry,
    filter: &[&str],
    r_bath: f64,
    central_position: &Vector3<f64>,
) -> Result<Vec<BathSpin>, StructureError> {
    assert!(r_bath > 0.0, "r_bath must be positive");
    let mut spins = Vec::new();
    for (element, frac) in &cell.atoms {
        if !filter.contains(&element.as_str()) {
            continue;
        }
        let species = registry.get(element)?;
        let mut positions = images_in_sphere(cell, frac, central_position, r_bath);
        spins.extend(positions.drain(..).map(|position| BathSpin {
            position,
            species: species.clone(),
        }));
    }
    spins.sort_by(|p, q| {
        let (dp, dq) = (
            (p.position - central_position).norm(),
            (q.position - central_position).norm(),
        );
        dp.total_cmp(&dq)
            .then(p.position.x.total_cmp(&q.position.x))
            .then(p.position.y.total_cmp(&q.position.y))
            .then(p.position.z.total_cmp(&q.position.z))
    });
    Ok(spins)
}

/// Candidate qubit-lattice positions for the electronic bath: periodic images
/// of every atom sharing the qubit element, within `r_bath`, center excluded.
pub fn qubit_lattice_sites(
    cell: &UnitCell,
    r_bath: f64,
    central_position: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    let element = cell.qubit_element().to_string();
    let mut sites = Vec::new();
    for (el, frac) in &cell.atoms {
        if el == &element {
            sites.extend(images_in_sphere(cell, frac, central_position, r_bath));
        }
    }
    sort_positions(&mut sites, central_position);
    sites
}

/// Swaps the species of every bath spin matching `from` to `to`, keeping
/// positions untouched.
pub fn substitute_isotope(
    bath: &[BathSpin],
    from: &str,
    to: &str,
    registry: &SpeciesRegistry,
) -> Result<Vec<BathSpin>, StructureError> {
    registry.get(from)?;
    let target = registry.get(to)?;
    Ok(bath
        .iter()
        .map(|spin| {
            let species = if spin.species.name == from {
                target.clone()
            } else {
                spin.species.clone()
            };
            BathSpin {
                position: spin.position,
                species,
            }
        })
        .collect())
}

/// Occupies each candidate site independently with probability `f`,
/// reproducibly under `seed`.
pub fn sample_electron_bath(
    sites: &[Vector3<f64>],
    f: f64,
    seed: u64,
    electron: Arc<SpinSpecies>,
) -> BathRealization {
    assert!((0.0..=1.0).contains(&f), "concentration must be in [0,1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spins = sites
        .iter()
        .filter(|_| rng.gen::<f64>() < f)
        .map(|&position| BathSpin {
            position,
            species: electron.clone(),
        })
        .collect();
    BathRealization {
        spins,
        seed,
        concentration: f,
    }
}

/// Converts a site-occupation fraction to a molar concentration in mmol/L.
pub fn concentration_to_molar(
    f: f64,
    cell: &UnitCell,
    qubits_per_cell: usize,
) -> Result<f64, StructureError> {
    let volume = cell.volume();
    if volume <= 0.0 {
        return Err(StructureError::ZeroVolume);
    }
    // sites per Angstrom^3 -> mol/L -> mmol/L
    Ok(f * qubits_per_cell as f64 / volume * 1e27 / AVOGADRO * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic_cell(a: f64, atoms: Vec<(&str, [f64; 3])>, qubit_site: usize) -> UnitCell {
        UnitCell {
            lattice: Matrix3::from_diagonal(&Vector3::new(a, a, a)),
            atoms: atoms
                .into_iter()
                .map(|(el, f)| (el.to_string(), Vector3::from(f)))
                .collect(),
            qubit_site,
        }
    }

    fn toy_file() -> &'static str {
        "2\nLattice=\"5 0 0 0 5 0 0 0 5\" qubit_index=0\nV 0 0 0\nH 2.5 2.5 2.5\n"
    }

    #[test]
    fn parse_toy_cell() {
        let cell = parse_structure(toy_file()).unwrap();
        assert_eq!(cell.atoms.len(), 2);
        assert!((cell.volume() - 125.0).abs() < 1e-9);
        assert_eq!(cell.qubit_site, 0);
        assert_eq!(cell.qubit_element(), "V");
        let frac = cell.atoms[1].1;
        assert!((frac - Vector3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn missing_lattice_is_parse_error() {
        let err = parse_structure("1\nno header here\nH 0 0 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn malformed_atom_line_reports_line_number() {
        let text = "1\nLattice=\"5 0 0 0 5 0 0 0 5\" qubit_index=0\nH 0 zz 0\n";
        let err = parse_structure(text).unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn two_molecular_units_resolve_qubit_to_v() {
        let text = "4\nLattice=\"10 0 0 0 10 0 0 0 12\" qubit_index=0\n\
                    V 0 0 0\nH 1.2 0 0\nV 5 5 6\nH 6.2 5 6\n";
        let cell = parse_structure(text).unwrap();
        assert_eq!(cell.qubit_element(), "V");
        assert_eq!(cell.qubits_per_cell(), 2);
    }

    #[test]
    fn bath_empty_when_radius_below_nearest_atom() {
        let cell = cubic_cell(5.0, vec![("V", [0.0, 0.0, 0.0]), ("H", [0.5, 0.5, 0.5])], 0);
        let reg = SpeciesRegistry::builtin();
        let bath = build_bath(&cell, &reg, &["H"], 2.0, &cell.qubit_position()).unwrap();
        assert!(bath.is_empty());
    }

    /// Brute-force oracle: enumerate lattice shifts over a fixed +-3 cube and
    /// apply the same sphere and center-exclusion rules.
    fn brute_force_count(a: f64, r: f64, central: Vector3<f64>) -> usize {
        let mut count = 0;
        for nx in -3..=3i64 {
            for ny in -3..=3i64 {
                for nz in -3..=3i64 {
                    let pos = Vector3::new(nx as f64, ny as f64, nz as f64) * a;
                    let dist = (pos - central).norm();
                    if dist <= r && dist > CENTRAL_EXCLUSION_ANGSTROM {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn lattice_points_in_sphere_match_brute_force() {
        // H on the qubit site's own lattice: the coincident image is excluded,
        // leaving 32 of the 33 lattice points within two cell lengths.
        let cell = cubic_cell(5.0, vec![("H", [0.0, 0.0, 0.0])], 0);
        let reg = SpeciesRegistry::builtin();
        let central = cell.qubit_position();
        let bath = build_bath(&cell, &reg, &["H"], 10.0, &central).unwrap();
        assert_eq!(bath.len(), brute_force_count(5.0, 10.0, central));
        assert_eq!(bath.len(), 32);
    }

    #[test]
    fn doubling_radius_scales_count_by_volume() {
        let cell = cubic_cell(5.0, vec![("V", [0.0, 0.0, 0.0]), ("H", [0.5, 0.5, 0.5])], 0);
        let reg = SpeciesRegistry::builtin();
        let central = cell.qubit_position();
        let small = build_bath(&cell, &reg, &["H"], 20.0, &central).unwrap().len();
        let large = build_bath(&cell, &reg, &["H"], 40.0, &central).unwrap().len();
        let ratio = large as f64 / small as f64;
        assert!((ratio - 8.0).abs() / 8.0 < 0.1, "ratio {ratio}");
    }

    #[test]
    fn bath_ordering_is_deterministic_and_sorted() {
        let cell = cubic_cell(
            4.0,
            vec![("V", [0.0, 0.0, 0.0]), ("H", [0.3, 0.1, 0.7]), ("H", [0.8, 0.6, 0.2])],
            0,
        );
        let reg = SpeciesRegistry::builtin();
        let central = cell.qubit_position();
        let bath1 = build_bath(&cell, &reg, &["H"], 9.0, &central).unwrap();
        let bath2 = build_bath(&cell, &reg, &["H"], 9.0, &central).unwrap();
        assert_eq!(bath1.len(), bath2.len());
        for (a, b) in bath1.iter().zip(&bath2) {
            assert_eq!(a.position, b.position);
        }
        for w in bath1.windows(2) {
            let (d0, d1) = (
                (w[0].position - central).norm(),
                (w[1].position - central).norm(),
            );
            assert!(d0 <= d1 + 1e-12);
        }
    }

    #[test]
    fn bath_is_invariant_under_atom_reordering() {
        let text_a = "3\nLattice=\"6 0 0 0 6 0 0 0 6\" qubit_index=0\n\
                      V 0 0 0\nH 1 2 3\nH 4 1 2\n";
        let text_b = "3\nLattice=\"6 0 0 0 6 0 0 0 6\" qubit_index=0\n\
                      V 0 0 0\nH 4 1 2\nH 1 2 3\n";
        let reg = SpeciesRegistry::builtin();
        let cell_a = parse_structure(text_a).unwrap();
        let cell_b = parse_structure(text_b).unwrap();
        let bath_a = build_bath(&cell_a, &reg, &["H"], 8.0, &cell_a.qubit_position()).unwrap();
        let bath_b = build_bath(&cell_b, &reg, &["H"], 8.0, &cell_b.qubit_position()).unwrap();
        assert_eq!(bath_a.len(), bath_b.len());
        for (a, b) in bath_a.iter().zip(&bath_b) {
            assert!((a.position - b.position).norm() < 1e-12);
        }
    }

    #[test]
    fn substitute_h_for_d_keeps_positions() {
        let cell = cubic_cell(
            5.0,
            vec![("V", [0.0, 0.0, 0.0]), ("H", [0.5, 0.5, 0.5]), ("C13", [0.25, 0.25, 0.25])],
            0,
        );
        let reg = SpeciesRegistry::builtin();
        let bath = build_bath(&cell, &reg, &["H", "C13"], 7.0, &cell.qubit_position()).unwrap();
        let swapped = substitute_isotope(&bath, "H", "D", &reg).unwrap();
        assert_eq!(bath.len(), swapped.len());
        for (orig, sub) in bath.iter().zip(&swapped) {
            assert_eq!(orig.position, sub.position);
            if orig.species.name == "H" {
                assert_eq!(sub.species.name, "D");
            } else {
                assert_eq!(sub.species.name, orig.species.name);
            }
        }
        assert!(swapped.iter().any(|s| s.species.name == "D"));
        assert!(swapped.iter().any(|s| s.species.name == "C13"));

        let empty = substitute_isotope(&[], "H", "D", &reg).unwrap();
        assert!(empty.is_empty());
        assert!(substitute_isotope(&bath, "H", "Nope", &reg).is_err());
    }

    #[test]
    fn electron_sampling_extremes_and_reproducibility() {
        let sites: Vec<Vector3<f64>> = (0..100)
            .map(|i| Vector3::new(i as f64, 0.0, 0.0))
            .collect();
        let e = SpeciesRegistry::builtin().get("e").unwrap();
        assert!(sample_electron_bath(&sites, 0.0, 1, e.clone()).spins.is_empty());
        assert_eq!(sample_electron_bath(&sites, 1.0, 1, e.clone()).spins.len(), 100);
        let a = sample_electron_bath(&sites, 0.3, 7, e.clone());
        let b = sample_electron_bath(&sites, 0.3, 7, e.clone());
        assert_eq!(a.spins.len(), b.spins.len());
        for (x, y) in a.spins.iter().zip(&b.spins) {
            assert_eq!(x.position, y.position);
        }
        let c = sample_electron_bath(&sites, 0.3, 8, e);
        assert!(a.spins.len() != c.spins.len() || a.spins.iter().zip(&c.spins).any(|(x, y)| x.position != y.position));
    }

    #[test]
    fn electron_sampling_follows_binomial_statistics() {
        // Mean occupied count over many seeds stays within 3 sigma of n*f.
        let sites: Vec<Vector3<f64>> = (0..10_000)
            .map(|i| Vector3::new(i as f64, 0.0, 0.0))
            .collect();
        let e = SpeciesRegistry::builtin().get("e").unwrap();
        let f = 0.02;
        let n_seeds = 500;
        let total: usize = (0..n_seeds)
            .map(|seed| sample_electron_bath(&sites, f, seed, e.clone()).spins.len())
            .sum();
        let mean = total as f64 / n_seeds as f64;
        let sigma_of_mean = (10_000.0 * f * (1.0 - f) / n_seeds as f64).sqrt();
        assert!((mean - 200.0).abs() < 3.0 * sigma_of_mean, "mean {mean}");
    }

    #[test]
    fn molarity_matches_reference_pairings() {
        // Cell volumes implied by the published fraction <-> molarity pairs.
        let votpp = cubic_cell(1487.6f64.cbrt(), vec![("V", [0.0; 3]), ("V", [0.5, 0.5, 0.5])], 0);
        let c = concentration_to_molar(0.02, &votpp, 2).unwrap();
        assert!((c - 44.65).abs() / 44.65 < 0.01, "votpp 2% -> {c} mM");

        let cu = cubic_cell(2214.0f64.cbrt(), vec![("Cu", [0.0; 3]), ("Cu", [0.5, 0.5, 0.5])], 0);
        let c = concentration_to_molar(1e-4, &cu, 2).unwrap();
        assert!((c - 0.15).abs() / 0.15 < 0.01, "cu 0.01% -> {c} mM");

        assert_eq!(concentration_to_molar(0.0, &votpp, 2).unwrap(), 0.0);
        // Linearity in f.
        let c1 = concentration_to_molar(0.01, &votpp, 2).unwrap();
        let c3 = concentration_to_molar(0.03, &votpp, 2).unwrap();
        assert!((c3 - 3.0 * c1).abs() < 1e-12);
    }

    #[test]
    fn qubit_lattice_sites_exclude_center() {
        let cell = cubic_cell(5.0, vec![("V", [0.0, 0.0, 0.0]), ("H", [0.5, 0.5, 0.5])], 0);
        let central = cell.qubit_position();
        let sites = qubit_lattice_sites(&cell, 10.0, &central);
        assert_eq!(sites.len(), 32);
        assert!(sites.iter().all(|p| (p - central).norm() > 1.0));
    }
}
