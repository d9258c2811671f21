//! Exact, independent ground truths at desk scale.
//!
//! Everything here works directly from the model's terms in the Z basis and
//! never touches the loop machinery, except [`enumerate_z`] which is the
//! loop-side sum the spectral quantities are checked against. The headline
//! identity under test across modules: the number of consistent
//! (boundary state, operator-type) assignments of a configuration equals
//! `2^{L(x)}`, and consequently
//! `sum_x 2^{L(x)} prod T(x_k) = 2^{N + 2B} <+^N|(-H)^{2B}|+^N>`.

use crate::hamiltonian::{operator_alphabet, BipartiteModel, SlotKind};
use crate::loopcfg::{loop_count, Configuration};
use crate::util::CompensatedSum;
use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Dense-vector site cap (amplitude arrays of length `2^N`).
pub const DENSE_SITE_CAP: usize = 24;
/// Full spectral decompositions stay below this many sites.
pub const SPECTRUM_SITE_CAP: usize = 10;
/// Brute-force consistency counting guards.
pub const COUNT_SITE_CAP: usize = 12;
pub const COUNT_LEN_CAP: usize = 8;
/// Configuration-enumeration guard for [`enumerate_z`].
pub const ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("model is invalid: {0:?}")]
    InvalidModel(Vec<crate::hamiltonian::Violation>),
    #[error("size cap exceeded: {0}")]
    CapExceeded(String),
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("sector diagonalization requires all fields to vanish")]
    FieldsPresent,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] crate::hamiltonian::ModelError),
}

fn ensure_valid(model: &BipartiteModel) -> Result<(), OracleError> {
    let v = model.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(OracleError::InvalidModel(v))
    }
}

/// Real amplitude list over the `2^N` Z-basis states. After the stoquastic
/// rotation every operator here is real, so real vectors suffice.
#[derive(Clone, Debug)]
pub struct DenseState {
    pub amps: Vec<f64>,
}

impl DenseState {
    pub fn zeros(n_sites: usize) -> Result<Self, OracleError> {
        if n_sites > DENSE_SITE_CAP {
            return Err(OracleError::CapExceeded(format!(
                "{n_sites} sites exceeds the dense cap of {DENSE_SITE_CAP}"
            )));
        }
        Ok(DenseState {
            amps: vec![0.0; 1usize << n_sites],
        })
    }

    /// `|+^N>`: uniform amplitudes `2^{-N/2}`.
    pub fn plus(n_sites: usize) -> Result<Self, OracleError> {
        let mut s = Self::zeros(n_sites)?;
        let amp = (1.0 / (s.amps.len() as f64)).sqrt();
        s.amps.fill(amp);
        Ok(s)
    }

    pub fn dot(&self, other: &DenseState) -> f64 {
        let mut sum = CompensatedSum::new();
        for (a, b) in self.amps.iter().zip(&other.amps) {
            sum.add(a * b);
        }
        sum.value()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
        }
    }
}

/// Matrix-free action of `-H` on a Z-basis amplitude vector:
/// `-H = sum_e w (I+S)/2 + sum_f v (I^F+S)/2 + sum_m g (1+X)`.
/// All contributions are non-negative (stoquasticity by construction).
pub fn apply_negh(model: &BipartiteModel, state: &DenseState) -> Result<DenseState, OracleError> {
    ensure_valid(model)?;
    let n = model.n_sites();
    if state.amps.len() != 1usize << n {
        return Err(OracleError::Unsupported(
            "state dimension does not match the model".into(),
        ));
    }
    let mut out = DenseState::zeros(n)?;
    for &(i, j, w) in model.afm_edges() {
        let mask = (1usize << i) | (1usize << j);
        for (b, &amp) in state.amps.iter().enumerate() {
            if amp == 0.0 {
                continue;
            }
            let anti = ((b >> i) ^ (b >> j)) & 1 == 1;
            if anti {
                out.amps[b] += 0.5 * w * amp;
                out.amps[b ^ mask] += 0.5 * w * amp;
            }
        }
    }
    for &(i, j, v) in model.fm_edges() {
        let mask = (1usize << i) | (1usize << j);
        for (b, &amp) in state.amps.iter().enumerate() {
            if amp == 0.0 {
                continue;
            }
            let anti = ((b >> i) ^ (b >> j)) & 1 == 1;
            if anti {
                out.amps[b ^ mask] += 0.5 * v * amp;
            } else {
                out.amps[b] += 0.5 * v * amp;
            }
        }
    }
    for (m, &g) in model.fields().iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let bit = 1usize << m;
        for (b, &amp) in state.amps.iter().enumerate() {
            if amp == 0.0 {
                continue;
            }
            out.amps[b] += g * amp;
            out.amps[b ^ bit] += g * amp;
        }
    }
    Ok(out)
}

/// Action of a bare dual-pair operator: `I+S` for an AFM kind, `I^F+S` for an
/// FM kind, `1+X` for a vertex kind. Unit coupling; used by observable
/// cross-checks.
pub fn apply_pair_sum(
    n_sites: usize,
    kind: SlotKind,
    state: &DenseState,
) -> Result<DenseState, OracleError> {
    if state.amps.len() != 1usize << n_sites {
        return Err(OracleError::Unsupported(
            "state dimension does not match n_sites".into(),
        ));
    }
    let mut out = DenseState::zeros(n_sites)?;
    match kind {
        SlotKind::AfmBridge { i, j } => {
            let (i, j) = (i as usize, j as usize);
            let mask = (1usize << i) | (1usize << j);
            for (b, &amp) in state.amps.iter().enumerate() {
                if ((b >> i) ^ (b >> j)) & 1 == 1 {
                    out.amps[b] += amp;
                    out.amps[b ^ mask] += amp;
                }
            }
        }
        SlotKind::FmBridge { i, j } => {
            let (i, j) = (i as usize, j as usize);
            let mask = (1usize << i) | (1usize << j);
            for (b, &amp) in state.amps.iter().enumerate() {
                if ((b >> i) ^ (b >> j)) & 1 == 1 {
                    out.amps[b ^ mask] += amp;
                } else {
                    out.amps[b] += amp;
                }
            }
        }
        SlotKind::Vertex { site } => {
            let bit = 1usize << site as usize;
            for (b, &amp) in state.amps.iter().enumerate() {
                out.amps[b] += amp;
                out.amps[b ^ bit] += amp;
            }
        }
    }
    Ok(out)
}

/// `<+^N| (-H)^p |+^N>` by repeated application. Safe for the enumeration
/// scales (`p` up to a few dozen); use [`m_b_state`] for large powers.
pub fn plus_moment(model: &BipartiteModel, p: usize) -> Result<f64, OracleError> {
    let n = model.n_sites();
    let plus = DenseState::plus(n)?;
    let mut v = plus.clone();
    for _ in 0..p {
        v = apply_negh(model, &v)?;
    }
    Ok(plus.dot(&v))
}

/// The normalized projected state `(-H)^B |+^N> / ||...||`.
pub fn m_b_state(model: &BipartiteModel, b: u64) -> Result<DenseState, OracleError> {
    let mut v = DenseState::plus(model.n_sites())?;
    for _ in 0..b {
        v = apply_negh(model, &v)?;
        let n = v.norm();
        if n == 0.0 {
            return Err(OracleError::Unsupported(
                "projected state vanished; the model has no dynamics".into(),
            ));
        }
        v.normalize();
    }
    Ok(v)
}

/// `<M_B| H |M_B>`.
pub fn m_b_energy(model: &BipartiteModel, b: u64) -> Result<f64, OracleError> {
    let m = m_b_state(model, b)?;
    Ok(-m.dot(&apply_negh(model, &m)?))
}

/// `<M_B| O |M_B>` for a bare dual-pair observable.
pub fn m_b_pair_expectation(
    model: &BipartiteModel,
    b: u64,
    kind: SlotKind,
) -> Result<f64, OracleError> {
    let m = m_b_state(model, b)?;
    Ok(m.dot(&apply_pair_sum(model.n_sites(), kind, &m)?))
}

const POWER_ITER_BUDGET: usize = 200_000;

/// Ground energy and one ground vector via shifted power iteration.
/// The shift `norm_bound` makes `-H + shift` positive semidefinite, so the
/// dominant eigenvalue is the Perron root; convergence is declared when the
/// Rayleigh quotient stalls. Degenerate ground spaces return some vector in
/// the span; only the energy is contractual.
pub fn exact_ground_energy(model: &BipartiteModel) -> Result<(f64, DenseState), OracleError> {
    ensure_valid(model)?;
    let shift = model.norm_bound();
    let mut x = DenseState::plus(model.n_sites())?;
    let mut rho_prev = f64::NAN;
    let mut stall = 0;
    for _ in 0..POWER_ITER_BUDGET {
        let mut y = apply_negh(model, &x)?;
        for (yb, xb) in y.amps.iter_mut().zip(&x.amps) {
            *yb += shift * xb;
        }
        let rho = x.dot(&y);
        y.normalize();
        x = y;
        if (rho - rho_prev).abs() <= 1e-13 * rho.abs().max(1.0) {
            stall += 1;
            if stall >= 3 {
                return Ok((shift - rho, x));
            }
        } else {
            stall = 0;
        }
        rho_prev = rho;
    }
    Err(OracleError::NoConvergence(POWER_ITER_BUDGET))
}

/// Ground energy of a field-free model from the Hamming-weight-`|A|` sector.
///
/// AFM and FM terms conserve total Z, and the ground space contains a state
/// supported on Z-basis strings of weight `|A|` (the smaller sublattice), so
/// diagonalizing the `C(N, |A|)`-dimensional sector matrix recovers the exact
/// ground energy at sizes far beyond the dense cap when `|A|` is small.
pub fn lieb_mattis_ground_energy(model: &BipartiteModel) -> Result<f64, OracleError> {
    ensure_valid(model)?;
    if model.fields().iter().any(|&g| g != 0.0) {
        return Err(OracleError::FieldsPresent);
    }
    let n = model.n_sites();
    if n >= 63 {
        return Err(OracleError::CapExceeded("sector basis needs n < 63".into()));
    }
    let k = model.n_small();
    // Lexicographically ordered sector basis via Gosper's hack.
    let mut basis: Vec<u64> = Vec::new();
    if k == 0 {
        basis.push(0);
    } else {
        let mut mask = (1u64 << k) - 1;
        let limit = 1u64 << n;
        while mask < limit {
            basis.push(mask);
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
    }
    let dim = basis.len();
    if dim > 20_000 {
        return Err(OracleError::CapExceeded(format!(
            "sector dimension {dim} too large"
        )));
    }
    let index = |mask: u64| basis.binary_search(&mask).expect("sector closed under terms");
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    for (a, &mask) in basis.iter().enumerate() {
        for &(i, j, w) in model.afm_edges() {
            if ((mask >> i) ^ (mask >> j)) & 1 == 1 {
                mat[(a, a)] += 0.5 * w;
                let b = index(mask ^ (1u64 << i) ^ (1u64 << j));
                mat[(b, a)] += 0.5 * w;
            }
        }
        for &(i, j, v) in model.fm_edges() {
            if ((mask >> i) ^ (mask >> j)) & 1 == 1 {
                let b = index(mask ^ (1u64 << i) ^ (1u64 << j));
                mat[(b, a)] += 0.5 * v;
            } else {
                mat[(a, a)] += 0.5 * v;
            }
        }
    }
    let eig = SymmetricEigen::new(mat);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(-lambda_max)
}

/// Dimension of the Hamming-weight-`|A|` sector, for reports.
pub fn lieb_mattis_sector_dim(model: &BipartiteModel) -> u64 {
    let n = model.n_sites() as u64;
    let k = model.n_small() as u64;
    let mut c = 1u64;
    for t in 0..k {
        c = c * (n - t) / (t + 1);
    }
    c
}

/// Brute-force count of consistent (right boundary state, per-slot operator
/// type) assignments. Types: `{I, S}` for AFM slots, `{I^F, S}` for FM slots,
/// `{1, X}` for vertex slots; the rightmost slot acts first. Exact integer.
pub fn consistent_count(model: &BipartiteModel, config: &Configuration) -> Result<u64, OracleError> {
    ensure_valid(model)?;
    let n = model.n_sites();
    let len = config.len();
    if n > COUNT_SITE_CAP {
        return Err(OracleError::CapExceeded(format!(
            "{n} sites exceeds the counting cap {COUNT_SITE_CAP}"
        )));
    }
    if len > COUNT_LEN_CAP {
        return Err(OracleError::CapExceeded(format!(
            "length {len} exceeds the counting cap {COUNT_LEN_CAP}"
        )));
    }
    let mut count = 0u64;
    for sigma_r in 0..(1u32 << n) {
        'types: for type_mask in 0..(1u32 << len) {
            let mut state = sigma_r;
            for t in (0..len).rev() {
                let flip = (type_mask >> t) & 1 == 1;
                match config.slot(t) {
                    SlotKind::AfmBridge { i, j } => {
                        let anti = ((state >> i) ^ (state >> j)) & 1 == 1;
                        if !anti {
                            continue 'types;
                        }
                        if flip {
                            state ^= (1 << i) | (1 << j);
                        }
                    }
                    SlotKind::FmBridge { i, j } => {
                        let anti = ((state >> i) ^ (state >> j)) & 1 == 1;
                        if flip {
                            if !anti {
                                continue 'types;
                            }
                            state ^= (1 << i) | (1 << j);
                        } else if anti {
                            continue 'types;
                        }
                    }
                    SlotKind::Vertex { site } => {
                        if flip {
                            state ^= 1 << site;
                        }
                    }
                }
            }
            count += 1;
        }
    }
    Ok(count)
}

/// Loop-side partition value: `sum over all |alphabet|^{2B} configurations of
/// alpha^{L(x)} prod_k T(x_k)`, compensated summation.
pub fn enumerate_z(model: &BipartiteModel, b: u64, alpha: f64) -> Result<f64, OracleError> {
    let alphabet = operator_alphabet(model)?;
    let len = (2 * b) as usize;
    let a = alphabet.len() as u64;
    let states = a
        .checked_pow(len as u32)
        .filter(|&s| s <= ENUMERATION_CAP)
        .ok_or_else(|| {
            OracleError::CapExceeded(format!(
                "|alphabet|^(2B) = {a}^{len} exceeds the enumeration cap"
            ))
        })?;
    let n = alphabet.n_sites();
    let mut digits = vec![0usize; len];
    let mut sum = CompensatedSum::new();
    for _ in 0..states {
        let config = Configuration::new(digits.iter().map(|&d| alphabet.slot(d).kind).collect());
        let l = loop_count(n, &config);
        let mut t_prod = 1.0;
        for &d in &digits {
            t_prod *= alphabet.slot(d).weight;
        }
        sum.add(alpha.powi(l as i32) * t_prod);
        // Little-endian odometer.
        for d in digits.iter_mut() {
            *d += 1;
            if *d < a as usize {
                break;
            }
            *d = 0;
        }
    }
    Ok(sum.value())
}

/// Full spectral data of `-H` for leakage computations (N <= 10).
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Eigenvalues of `-H`, descending (lambda_0 = -E_0 first).
    pub lambdas: Vec<f64>,
    /// Squared overlaps `|<v_i|+^N>|^2`.
    pub overlaps_sq: Vec<f64>,
}

impl Spectrum {
    pub fn ground_energy(&self) -> f64 {
        -self.lambdas[0]
    }

    /// Exact operator norm `max_i |E_i|`.
    pub fn operator_norm(&self) -> f64 {
        self.lambdas
            .iter()
            .map(|l| l.abs())
            .fold(0.0, f64::max)
    }

    /// Squared overlap of `|+^N>` with the exact ground space.
    pub fn ground_overlap_sq(&self) -> f64 {
        let l0 = self.lambdas[0];
        self.lambdas
            .iter()
            .zip(&self.overlaps_sq)
            .filter(|(l, _)| (l0 - **l).abs() <= 1e-9 * l0.abs().max(1.0))
            .map(|(_, c)| c)
            .sum()
    }

    /// `<M_B| Pi_other |M_B>` where `Pi_other` projects onto eigenstates with
    /// energy above `E_0 + epsilon`. Exact up to rounding; `b = 0` gives the
    /// leakage of the trial state itself.
    pub fn leakage(&self, b: u64, epsilon: f64) -> f64 {
        let l0 = self.lambdas[0];
        if l0 <= 0.0 {
            return 0.0;
        }
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for (&l, &c) in self.lambdas.iter().zip(&self.overlaps_sq) {
            // (l/l0)^{2B}; even power, so the magnitude suffices.
            let r = (l / l0).abs().powf(2.0 * b as f64);
            let w = r * c;
            den.add(w);
            if l < l0 - epsilon {
                num.add(w);
            }
        }
        let d = den.value();
        if d <= 0.0 {
            return 0.0;
        }
        (num.value() / d).clamp(0.0, 1.0)
    }
}

/// Dense spectral decomposition of `-H` (N <= 10).
pub fn exact_spectrum(model: &BipartiteModel) -> Result<Spectrum, OracleError> {
    ensure_valid(model)?;
    let n = model.n_sites();
    if n > SPECTRUM_SITE_CAP {
        return Err(OracleError::CapExceeded(format!(
            "{n} sites exceeds the spectrum cap {SPECTRUM_SITE_CAP}"
        )));
    }
    let dim = 1usize << n;
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    for b in 0..dim {
        for &(i, j, w) in model.afm_edges() {
            if ((b >> i) ^ (b >> j)) & 1 == 1 {
                mat[(b, b)] += 0.5 * w;
                mat[(b ^ ((1 << i) | (1 << j)), b)] += 0.5 * w;
            }
        }
        for &(i, j, v) in model.fm_edges() {
            if ((b >> i) ^ (b >> j)) & 1 == 1 {
                mat[(b ^ ((1 << i) | (1 << j)), b)] += 0.5 * v;
            } else {
                mat[(b, b)] += 0.5 * v;
            }
        }
        for (m, &g) in model.fields().iter().enumerate() {
            if g != 0.0 {
                mat[(b, b)] += g;
                mat[(b ^ (1 << m), b)] += g;
            }
        }
    }
    let eig = SymmetricEigen::new(mat);
    let plus_amp = (1.0 / dim as f64).sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..dim)
        .map(|k| {
            let overlap: f64 = eig.eigenvectors.column(k).iter().sum::<f64>() * plus_amp;
            (eig.eigenvalues[k], overlap * overlap)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    Ok(Spectrum {
        lambdas: pairs.iter().map(|p| p.0).collect(),
        overlaps_sq: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Exact low-energy leakage `<M_B| Pi_other |M_B>` (N <= 10).
pub fn low_energy_leakage(model: &BipartiteModel, b: u64, epsilon: f64) -> Result<f64, OracleError> {
    Ok(exact_spectrum(model)?.leakage(b, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{path_model, star_model, BipartiteModel, Sublattice};

    fn single_edge() -> BipartiteModel {
        BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.0; 2],
        )
    }

    fn afm(i: usize, j: usize) -> SlotKind {
        SlotKind::afm(i, j)
    }

    #[test]
    fn apply_negh_on_basis_states() {
        let model = single_edge();
        // |up down> -> (|up down> + |down up>) / 2 under (I+S)/2.
        let mut s = DenseState::zeros(2).unwrap();
        s.amps[0b10] = 1.0;
        let out = apply_negh(&model, &s).unwrap();
        assert_eq!(out.amps[0b10], 0.5);
        assert_eq!(out.amps[0b01], 0.5);
        // Aligned states are annihilated.
        let mut aligned = DenseState::zeros(2).unwrap();
        aligned.amps[0b00] = 1.0;
        let out = apply_negh(&model, &aligned).unwrap();
        assert!(out.amps.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn ground_energies() {
        let (e0, _) = exact_ground_energy(&single_edge()).unwrap();
        assert!((e0 - (-1.0)).abs() < 1e-9);
        let (e0, _) = exact_ground_energy(&star_model(3, 1.0)).unwrap();
        assert!((e0 - (-1.5)).abs() < 1e-9);

        // N=2 with fields g = 0.25 on both sites: compare against the dense
        // spectrum of the same model.
        let fields = BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.25, 0.25],
        );
        let (e0, _) = exact_ground_energy(&fields).unwrap();
        let spec = exact_spectrum(&fields).unwrap();
        assert!((e0 - spec.ground_energy()).abs() < 1e-9);
        assert!(fields.norm_bound() >= spec.operator_norm());
    }

    #[test]
    fn lieb_mattis_matches_full_ed() {
        for model in [star_model(3, 1.0), star_model(5, 1.0), path_model(4, 1.0)] {
            let sector = lieb_mattis_ground_energy(&model).unwrap();
            let (full, _) = exact_ground_energy(&model).unwrap();
            assert!(
                (sector - full).abs() < 1e-10,
                "sector {sector} vs full {full}"
            );
        }
        // Star energies are -N/2 by total-spin algebra.
        assert!((lieb_mattis_ground_energy(&star_model(5, 1.0)).unwrap() + 2.5).abs() < 1e-10);
        assert!((lieb_mattis_ground_energy(&star_model(20, 1.0)).unwrap() + 10.0).abs() < 1e-9);
        assert_eq!(lieb_mattis_sector_dim(&star_model(20, 1.0)), 20);
    }

    #[test]
    fn lieb_mattis_two_center_complete_bipartite() {
        // |A| = 2 vs |B| = 6 complete bipartite: E0 = -7 from total-spin
        // algebra; the sector has dimension C(8, 2) = 28.
        let mut sub = vec![Sublattice::B; 8];
        sub[0] = Sublattice::A;
        sub[1] = Sublattice::A;
        let mut edges = Vec::new();
        for a in 0..2 {
            for b in 2..8 {
                edges.push((a, b, 1.0));
            }
        }
        let model = BipartiteModel::new(8, sub, edges, vec![], vec![0.0; 8]);
        assert_eq!(lieb_mattis_sector_dim(&model), 28);
        let sector = lieb_mattis_ground_energy(&model).unwrap();
        assert!((sector + 7.0).abs() < 1e-9);
        let (full, _) = exact_ground_energy(&model).unwrap();
        assert!((sector - full).abs() < 1e-9);
    }

    #[test]
    fn lieb_mattis_rejects_fields() {
        let model = BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.1, 0.0],
        );
        assert!(matches!(
            lieb_mattis_ground_energy(&model),
            Err(OracleError::FieldsPresent)
        ));
    }

    #[test]
    fn consistent_count_basics() {
        let model = star_model(3, 1.0);
        // Empty sequence: every right boundary state is consistent.
        assert_eq!(
            consistent_count(&model, &Configuration::empty()).unwrap(),
            8
        );
        // Single AFM slot on two sites: 2 boundary states x 2 types.
        let edge = single_edge();
        let c = consistent_count(&edge, &Configuration::new(vec![afm(0, 1)])).unwrap();
        assert_eq!(c, 4);
        // Fig-style path configuration: 2^5.
        let path = path_model(4, 1.0);
        let config = Configuration::new(vec![
            afm(0, 1),
            afm(0, 1),
            afm(1, 2),
            afm(2, 3),
            afm(1, 2),
        ]);
        assert_eq!(consistent_count(&path, &config).unwrap(), 32);
    }

    #[test]
    fn count_equals_two_to_loop_count_star() {
        let model = star_model(3, 1.0);
        let config = Configuration::new(vec![afm(0, 1), afm(0, 1)]);
        let l = loop_count(3, &config);
        assert_eq!(l, 4);
        assert_eq!(consistent_count(&model, &config).unwrap(), 1u64 << l);
    }

    #[test]
    fn enumerate_z_values() {
        let edge = single_edge();
        // B = 0: a single empty configuration of weight alpha^N.
        assert_eq!(enumerate_z(&edge, 0, 2.0).unwrap(), 4.0);
        // 2B = 2 on the single edge: one configuration with three loops.
        assert!((enumerate_z(&edge, 1, 2.0).unwrap() - 8.0).abs() < 1e-12);
        // Spectral cross-check: 2^{N+2B} <+|(-H)^2|+> = 16 * 1/2 = 8.
        let spectral = 16.0 * plus_moment(&edge, 2).unwrap();
        assert!((spectral - 8.0).abs() < 1e-12);
    }

    #[test]
    fn enumerate_z_matches_spectral_star() {
        let model = star_model(3, 1.0);
        for b in [1u64, 2] {
            let z = enumerate_z(&model, b, 2.0).unwrap();
            let spectral =
                2f64.powi((3 + 2 * b) as i32) * plus_moment(&model, 2 * b as usize).unwrap();
            assert!(
                (z - spectral).abs() <= 1e-10 * spectral.abs(),
                "b={b}: {z} vs {spectral}"
            );
        }
    }

    #[test]
    fn leakage_behaviour() {
        let model = star_model(3, 1.0);
        let spec = exact_spectrum(&model).unwrap();
        // Epsilon covering the whole spread: nothing leaks.
        assert_eq!(spec.leakage(0, 10.0), 0.0);
        // Monotone non-increasing in B.
        let eps = 0.1;
        let mut prev = spec.leakage(0, eps);
        for b in [1u64, 2, 4, 8, 16, 32] {
            let cur = spec.leakage(b, eps);
            assert!(cur <= prev + 1e-12);
            prev = cur;
        }
        // Certified B keeps leakage below delta.
        let delta = 0.05;
        let b = model.required_b(eps, delta).unwrap();
        assert!(spec.leakage(b, eps) < delta);
    }
}
