//! Exact Markov-chain analysis on enumerable instances.
//!
//! For state spaces up to a few tens of thousands of configurations this
//! module builds the full transition matrix of the single-slot Metropolis
//! chain, verifies stochasticity / detailed balance / stationarity (in exact
//! rational arithmetic on small instances), extracts the spectral gap, and
//! evaluates the left-to-right canonical paths with their encoding function:
//!
//! - path from `x` to `y`: replace slots left to right, `z(t) = y[..t] ++ x[t..]`;
//! - the witness paired with the edge `(z(t-1), z(t))` is
//!   `eta_t = x[..t] ++ y[t..]`; `(z(t), eta_t)` determines `(x, y)`, so the
//!   encoding is invertible edge by edge;
//! - the combined slot multiset of `(z(t), eta_t)` equals that of `(x, y)`,
//!   so all `T` factors cancel in the weight ratio
//!   `pi(x)pi(y) / (pi(z)pi(eta))`, which is bounded by `2^{4|A|-2}` for
//!   bridge-only models and `2^{8|A|-4}` with vertex slots.
//!
//! The congestion ratio of those paths upper-bounds the relaxation time of
//! the lazy chain; on cycle graphs (`|A| = N/2`) the two alternating
//! matching configurations drive the encoding ratio to `2^{N-2}`, which is
//! the constructive failure of this path system beyond star-like graphs.

use crate::hamiltonian::{
    cycle_model, operator_alphabet, star_model, Alphabet, BipartiteModel, SlotKind, Sublattice,
};
use crate::loopcfg::{decompose, loop_count, Configuration, Endpoint, LoopKind};
use crate::oracle;
use crate::util::CompensatedSum;
use nalgebra::{DMatrix, SymmetricEigen};
use num::rational::BigRational;
use num::{BigInt, One, Signed, Zero};
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on enumerated state spaces.
pub const STATE_CAP: u64 = 20_000;
/// Exact rational arithmetic below this state count.
pub const EXACT_STATE_CAP: usize = 1_000;
/// Dense eigensolves below this state count.
pub const DENSE_EIG_CAP: usize = 4_000;
/// Pairwise path enumeration (congestion, encoding) below this state count.
pub const PAIR_CAP: usize = 2_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("state space too large: {0}")]
    CapExceeded(String),
    #[error("configurations have different lengths")]
    LengthMismatch,
    #[error("{0}")]
    BadParameter(String),
    #[error(transparent)]
    Model(#[from] crate::hamiltonian::ModelError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

/// Fully enumerated configuration space of sequences `alphabet^{2B}`,
/// indexed little-endian by slot id.
pub struct StateSpace {
    pub alphabet: Alphabet,
    pub two_b: usize,
    pub configs: Vec<Configuration>,
    pub loop_counts: Vec<usize>,
    /// Unnormalized log weights `L ln(alpha) + sum ln T`.
    pub log_weights: Vec<f64>,
    pub alpha: f64,
}

impl StateSpace {
    pub fn enumerate(
        alphabet: &Alphabet,
        two_b: usize,
        alpha: f64,
        cap: u64,
    ) -> Result<StateSpace, AnalysisError> {
        let a = alphabet.len() as u64;
        let n_states = a
            .checked_pow(two_b as u32)
            .filter(|&s| s <= cap)
            .ok_or_else(|| {
                AnalysisError::CapExceeded(format!("|alphabet|^{two_b} exceeds cap {cap}"))
            })?;
        let n = alphabet.n_sites();
        let mut configs = Vec::with_capacity(n_states as usize);
        let mut loop_counts = Vec::with_capacity(n_states as usize);
        let mut log_weights = Vec::with_capacity(n_states as usize);
        let mut digits = vec![0usize; two_b];
        for _ in 0..n_states {
            let config =
                Configuration::new(digits.iter().map(|&d| alphabet.slot(d).kind).collect());
            let l = loop_count(n, &config);
            let mut lw = l as f64 * alpha.ln();
            for &d in &digits {
                lw += alphabet.slot(d).ln_weight;
            }
            configs.push(config);
            loop_counts.push(l);
            log_weights.push(lw);
            for d in digits.iter_mut() {
                *d += 1;
                if *d < a as usize {
                    break;
                }
                *d = 0;
            }
        }
        Ok(StateSpace {
            alphabet: alphabet.clone(),
            two_b,
            configs,
            loop_counts,
            log_weights,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn index_of(&self, config: &Configuration) -> usize {
        let a = self.alphabet.len();
        let mut idx = 0usize;
        let mut base = 1usize;
        for s in config.slots() {
            let d = self.alphabet.id_of(*s).expect("slot in alphabet") as usize;
            idx += d * base;
            base *= a;
        }
        idx
    }

    /// Normalized stationary distribution.
    pub fn pi(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = self.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let mut z = CompensatedSum::new();
        for w in &weights {
            z.add(*w);
        }
        let z = z.value();
        for w in &mut weights {
            *w /= z;
        }
        weights
    }

    /// Exact rational unnormalized weights (`alpha` and every `T` converted
    /// to their exact binary-float rationals).
    pub fn exact_weights(&self) -> Vec<BigRational> {
        let alpha = BigRational::from_float(self.alpha).expect("finite alpha");
        let slot_weights: Vec<BigRational> = self
            .alphabet
            .slots()
            .iter()
            .map(|s| BigRational::from_float(s.weight).expect("finite weight"))
            .collect();
        self.configs
            .iter()
            .zip(&self.loop_counts)
            .map(|(config, &l)| {
                let mut w = BigRational::one();
                for _ in 0..l {
                    w *= &alpha;
                }
                for s in config.slots() {
                    let id = self.alphabet.id_of(*s).expect("slot in alphabet") as usize;
                    w *= &slot_weights[id];
                }
                w
            })
            .collect()
    }
}

/// Exact rational transition data (off-diagonal rows plus diagonal).
pub struct ExactChain {
    pub pi: Vec<BigRational>,
    pub rows: Vec<Vec<(u32, BigRational)>>,
    pub diag: Vec<BigRational>,
}

/// Enumerated transition matrix of the Metropolis chain with its stationary
/// distribution.
pub struct ChainMatrix {
    pub space: StateSpace,
    pub lazy: bool,
    pub pi: Vec<f64>,
    /// Off-diagonal sparse rows, column-sorted.
    pub rows: Vec<Vec<(u32, f64)>>,
    pub diag: Vec<f64>,
    /// Present when the state count is at most [`EXACT_STATE_CAP`].
    pub exact: Option<ExactChain>,
}

/// Builds the transition matrix: `P(x, y) = min{1, pi(y)/pi(x)} / (2B |alphabet|)`
/// for single-slot neighbors, the remainder on the diagonal; the lazy chain
/// halves every off-diagonal entry.
pub fn build_chain_matrix(
    model: &BipartiteModel,
    b: u64,
    alpha: f64,
    lazy: bool,
) -> Result<ChainMatrix, AnalysisError> {
    let alphabet = operator_alphabet(model)?;
    let two_b = (2 * b) as usize;
    if two_b == 0 {
        return Err(AnalysisError::BadParameter("B must be at least 1".into()));
    }
    let space = StateSpace::enumerate(&alphabet, two_b, alpha, STATE_CAP)?;
    let n_states = space.len();
    let a = alphabet.len();
    let pi = space.pi();
    let proposal = 1.0 / (two_b as f64 * a as f64);
    let halve = if lazy { 0.5 } else { 1.0 };

    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n_states);
    let mut diag = vec![0.0; n_states];
    let mut digits = vec![0usize; two_b];
    for x in 0..n_states {
        let mut row = Vec::with_capacity(two_b * (a - 1));
        let mut offdiag_sum = CompensatedSum::new();
        let mut base = 1usize;
        for &xd in digits.iter() {
            for o in 0..a {
                if o == xd {
                    continue;
                }
                let y = (x as isize + (o as isize - xd as isize) * base as isize) as usize;
                let ratio = (space.log_weights[y] - space.log_weights[x]).exp();
                let p = halve * proposal * ratio.min(1.0);
                row.push((y as u32, p));
                offdiag_sum.add(p);
            }
            base *= a;
        }
        row.sort_unstable_by_key(|e| e.0);
        diag[x] = 1.0 - offdiag_sum.value();
        rows.push(row);
        for d in digits.iter_mut() {
            *d += 1;
            if *d < a {
                break;
            }
            *d = 0;
        }
    }

    let exact = if n_states <= EXACT_STATE_CAP {
        let weights = space.exact_weights();
        let mut z = BigRational::zero();
        for w in &weights {
            z += w;
        }
        let pi_r: Vec<BigRational> = weights.iter().map(|w| w / &z).collect();
        let prop_r = BigRational::new(
            BigInt::from(1),
            BigInt::from((two_b * a) as i64) * BigInt::from(if lazy { 2 } else { 1 }),
        );
        let one = BigRational::one();
        let mut rows_r: Vec<Vec<(u32, BigRational)>> = Vec::with_capacity(n_states);
        let mut diag_r: Vec<BigRational> = Vec::with_capacity(n_states);
        for (x, row) in rows.iter().enumerate() {
            let mut row_r = Vec::with_capacity(row.len());
            let mut sum = BigRational::zero();
            for &(y, _) in row {
                let ratio = &weights[y as usize] / &weights[x];
                let accept = if ratio < one { ratio } else { one.clone() };
                let p = &prop_r * accept;
                sum += &p;
                row_r.push((y, p));
            }
            diag_r.push(&one - sum);
            rows_r.push(row_r);
        }
        Some(ExactChain {
            pi: pi_r,
            rows: rows_r,
            diag: diag_r,
        })
    } else {
        None
    };

    Ok(ChainMatrix {
        space,
        lazy,
        pi,
        rows,
        diag,
        exact,
    })
}

impl ChainMatrix {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// Transition probability, diagonal included.
    pub fn p(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x];
        }
        match self.rows[x].binary_search_by_key(&(y as u32), |e| e.0) {
            Ok(i) => self.rows[x][i].1,
            Err(_) => 0.0,
        }
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.n_states() {
            let mut s = CompensatedSum::new();
            for &(_, p) in &self.rows[x] {
                s.add(p);
            }
            s.add(self.diag[x]);
            worst = worst.max((s.value() - 1.0).abs());
        }
        worst
    }

    /// Largest relative violation of `pi(x) P(x,y) = pi(y) P(y,x)`.
    pub fn detailed_balance_max_rel_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.n_states() {
            for &(y, pxy) in &self.rows[x] {
                let y = y as usize;
                if y < x {
                    continue;
                }
                let a = self.pi[x] * pxy;
                let b = self.pi[y] * self.p(y, x);
                let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max((a - b).abs() / scale);
            }
        }
        worst
    }

    /// Largest relative deviation of `(pi P)(y)` from `pi(y)`.
    pub fn stationarity_max_rel_error(&self) -> f64 {
        let n = self.n_states();
        let mut acc = vec![CompensatedSum::new(); n];
        for x in 0..n {
            for &(y, p) in &self.rows[x] {
                acc[y as usize].add(self.pi[x] * p);
            }
            acc[x].add(self.pi[x] * self.diag[x]);
        }
        let mut worst = 0.0f64;
        for y in 0..n {
            let v = acc[y].value();
            worst = worst.max((v - self.pi[y]).abs() / self.pi[y].max(f64::MIN_POSITIVE));
        }
        worst
    }

    /// Exact detailed balance on the rational representation.
    pub fn exact_detailed_balance(&self) -> Option<bool> {
        let e = self.exact.as_ref()?;
        for x in 0..self.n_states() {
            for &(y, ref pxy) in &e.rows[x] {
                let y = y as usize;
                if y < x {
                    continue;
                }
                let pyx = e.rows[y]
                    .iter()
                    .find(|(c, _)| *c as usize == x)
                    .map(|(_, p)| p.clone())
                    .unwrap_or_else(BigRational::zero);
                if &e.pi[x] * pxy != &e.pi[y] * &pyx {
                    return Some(false);
                }
            }
        }
        Some(true)
    }

    /// Exact stationarity `pi P = pi` on the rational representation.
    pub fn exact_stationarity(&self) -> Option<bool> {
        let e = self.exact.as_ref()?;
        let n = self.n_states();
        let mut acc = vec![BigRational::zero(); n];
        for x in 0..n {
            for &(y, ref p) in &e.rows[x] {
                let t = &e.pi[x] * p;
                acc[y as usize] += t;
            }
            acc[x] += &e.pi[x] * &e.diag[x];
        }
        Some((0..n).all(|y| acc[y] == e.pi[y]))
    }

    /// Exact row sums (off-diagonal entries plus diagonal) equal one, and all
    /// entries are non-negative.
    pub fn exact_rows_stochastic(&self) -> Option<bool> {
        let e = self.exact.as_ref()?;
        let one = BigRational::one();
        for x in 0..self.n_states() {
            let mut s = e.diag[x].clone();
            if e.diag[x].is_negative() {
                return Some(false);
            }
            for &(_, ref p) in &e.rows[x] {
                if p.is_negative() {
                    return Some(false);
                }
                s += p;
            }
            if s != one {
                return Some(false);
            }
        }
        Some(true)
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SpectralReport {
    /// Second largest eigenvalue magnitude.
    pub lambda_star: f64,
    pub t_rel: f64,
    pub t_mix_upper: f64,
    /// Set for one-state chains, which have no second eigenvalue; `t_rel`
    /// is reported as 0 there by convention.
    pub degenerate: bool,
}

/// Spectral gap via the symmetrized similarity
/// `R = diag(pi)^{1/2} P diag(pi)^{-1/2}`.
pub fn spectral_report(matrix: &ChainMatrix) -> Result<SpectralReport, AnalysisError> {
    let n = matrix.n_states();
    if n == 1 {
        return Ok(SpectralReport {
            lambda_star: 0.0,
            t_rel: 0.0,
            t_mix_upper: 0.0,
            degenerate: true,
        });
    }
    if n > DENSE_EIG_CAP {
        return Err(AnalysisError::CapExceeded(format!(
            "{n} states exceeds the dense eigensolve cap {DENSE_EIG_CAP}"
        )));
    }
    let sqrt_pi: Vec<f64> = matrix.pi.iter().map(|p| p.sqrt()).collect();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        r[(x, x)] = matrix.diag[x];
        for &(y, p) in &matrix.rows[x] {
            let y = y as usize;
            r[(x, y)] = sqrt_pi[x] * p / sqrt_pi[y];
        }
    }
    // Detailed balance makes R symmetric; average away rounding asymmetry.
    let r = (&r + r.transpose()) * 0.5;
    let eig = SymmetricEigen::new(r);
    let mut mags: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda_star = mags[1];
    let t_rel = 1.0 / (1.0 - lambda_star);
    let t_mix_upper = t_rel * (4.0 / matrix.pi_min()).ln();
    Ok(SpectralReport {
        lambda_star,
        t_rel,
        t_mix_upper,
        degenerate: false,
    })
}

/// Left-to-right replacement path: `states[t] = y[..t] ++ x[t..]`.
#[derive(Clone, Debug)]
pub struct CanonicalPath {
    pub states: Vec<Configuration>,
}

pub fn canonical_path(x: &Configuration, y: &Configuration) -> Result<CanonicalPath, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let len = x.len();
    let mut states = Vec::with_capacity(len + 1);
    let mut cur = x.clone();
    states.push(cur.clone());
    for t in 0..len {
        cur.set_slot(t, y.slot(t));
        states.push(cur.clone());
    }
    Ok(CanonicalPath { states })
}

impl CanonicalPath {
    /// Number of proper chain edges (steps where the slot actually changes).
    pub fn proper_len(&self) -> usize {
        self.states
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count()
    }
}

/// Encoding witness for the path step `t` (1-based): `x[..t] ++ y[t..]`.
pub fn encode(t: usize, x: &Configuration, y: &Configuration) -> Configuration {
    assert!(t >= 1 && t <= x.len() && x.len() == y.len());
    let mut slots = Vec::with_capacity(x.len());
    slots.extend_from_slice(&x.slots()[..t]);
    slots.extend_from_slice(&y.slots()[t..]);
    Configuration::new(slots)
}

/// Inverts the encoding: from the step index, the path state `z(t)` and the
/// witness, recover the endpoints `(x, y)`.
pub fn decode(
    t: usize,
    z_t: &Configuration,
    eta: &Configuration,
) -> Result<(Configuration, Configuration), AnalysisError> {
    if z_t.len() != eta.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    if t < 1 || t > z_t.len() {
        return Err(AnalysisError::BadParameter(format!(
            "step {t} out of range 1..={}",
            z_t.len()
        )));
    }
    let mut x = Vec::with_capacity(z_t.len());
    x.extend_from_slice(&eta.slots()[..t]);
    x.extend_from_slice(&z_t.slots()[t..]);
    let mut y = Vec::with_capacity(z_t.len());
    y.extend_from_slice(&z_t.slots()[..t]);
    y.extend_from_slice(&eta.slots()[t..]);
    Ok((Configuration::new(x), Configuration::new(y)))
}

/// Encoding bound `2^{4|A|-2}` (bridge-only) or `2^{8|A|-4}` (with vertex
/// slots).
pub fn encoding_bound(n_small: usize, with_fields: bool) -> f64 {
    if with_fields {
        2f64.powi(8 * n_small as i32 - 4)
    } else {
        2f64.powi(4 * n_small as i32 - 2)
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EncodingReport {
    pub n_states: usize,
    pub max_ratio: f64,
    pub bound: f64,
    pub holds: bool,
    pub worst_x: String,
    pub worst_y: String,
    pub worst_t: usize,
}

/// Exhaustive maximum of `pi(x)pi(y) / (pi(z(t)) pi(eta_t))` over all pairs
/// and steps, compared against the applicable bound.
pub fn encoding_inequality_max(
    model: &BipartiteModel,
    b: u64,
    alpha: f64,
    with_fields: bool,
) -> Result<EncodingReport, AnalysisError> {
    let alphabet = operator_alphabet(model)?;
    let two_b = (2 * b) as usize;
    let space = StateSpace::enumerate(&alphabet, two_b, alpha, PAIR_CAP as u64)?;
    let n = space.len();
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst = (0usize, 0usize, 1usize);
    for x in 0..n {
        for y in 0..n {
            for t in 1..=two_b {
                let z = splice(&space.configs[y], &space.configs[x], t);
                let eta = encode(t, &space.configs[x], &space.configs[y]);
                let iz = space.index_of(&z);
                let ie = space.index_of(&eta);
                let log_ratio = space.log_weights[x] + space.log_weights[y]
                    - space.log_weights[iz]
                    - space.log_weights[ie];
                if log_ratio.exp() > max_ratio {
                    max_ratio = log_ratio.exp();
                    worst = (x, y, t);
                }
            }
        }
    }
    let bound = encoding_bound(model.n_small(), with_fields);
    Ok(EncodingReport {
        n_states: n,
        max_ratio,
        bound,
        holds: max_ratio <= bound * (1.0 + 1e-9),
        worst_x: space.configs[worst.0].to_string(),
        worst_y: space.configs[worst.1].to_string(),
        worst_t: worst.2,
    })
}

/// `first[..t] ++ second[t..]`.
fn splice(first: &Configuration, second: &Configuration, t: usize) -> Configuration {
    let mut slots = Vec::with_capacity(first.len());
    slots.extend_from_slice(&first.slots()[..t]);
    slots.extend_from_slice(&second.slots()[t..]);
    Configuration::new(slots)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CongestionReport {
    pub n_states: usize,
    /// Exact congestion ratio of the left-to-right canonical paths.
    pub phi: f64,
    /// Closed-form reference bound `12 B^2 N (T_max/T_min) 2^{8|A|-4}`.
    pub closed_form_bound: f64,
    pub t_rel: f64,
    pub t_rel_le_phi: bool,
    pub lazy: bool,
}

/// Exact congestion ratio
/// `Phi = max_edges (1 / pi(z) P(z, w)) sum_{paths through (z, w)} pi(x) pi(y) |path|`,
/// with `|path|` counting proper edges only (identical-slot steps are
/// self-loops and carry no flow). Also reports the spectral relaxation time
/// of the same chain; `t_rel <= Phi` is checked with the lazy chain, whose
/// eigenvalues are non-negative.
pub fn congestion(
    model: &BipartiteModel,
    b: u64,
    alpha: f64,
    lazy: bool,
) -> Result<CongestionReport, AnalysisError> {
    let matrix = build_chain_matrix(model, b, alpha, lazy)?;
    let n = matrix.n_states();
    if n > PAIR_CAP {
        return Err(AnalysisError::CapExceeded(format!(
            "{n} states exceeds the pairwise cap {PAIR_CAP}"
        )));
    }
    let spectral = spectral_report(&matrix)?;
    let two_b = matrix.space.two_b;
    let a = matrix.space.alphabet.len();
    // Digit strings per state for fast path walking.
    let mut digit_strings: Vec<Vec<usize>> = Vec::with_capacity(n);
    {
        let mut digits = vec![0usize; two_b];
        for _ in 0..n {
            digit_strings.push(digits.clone());
            for d in digits.iter_mut() {
                *d += 1;
                if *d < a {
                    break;
                }
                *d = 0;
            }
        }
    }
    let mut pow = vec![1usize; two_b];
    for k in 1..two_b {
        pow[k] = pow[k - 1] * a;
    }
    let mut flow: HashMap<(u32, u32), f64> = HashMap::new();
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let dx = &digit_strings[x];
            let dy = &digit_strings[y];
            let gamma_len = dx
                .iter()
                .zip(dy)
                .filter(|(a, b)| a != b)
                .count();
            let demand = matrix.pi[x] * matrix.pi[y] * gamma_len as f64;
            let mut z = x;
            for t in 0..two_b {
                if dx[t] == dy[t] {
                    continue;
                }
                let znext = (z as isize + (dy[t] as isize - dx[t] as isize) * pow[t] as isize)
                    as usize;
                *flow.entry((z as u32, znext as u32)).or_insert(0.0) += demand;
                z = znext;
            }
        }
    }
    let mut phi = 0.0f64;
    for (&(z, w), &f) in &flow {
        let capacity = matrix.pi[z as usize] * matrix.p(z as usize, w as usize);
        phi = phi.max(f / capacity);
    }
    let t_max = matrix.space.alphabet.max_weight();
    let t_min = matrix.space.alphabet.min_weight();
    let closed_form_bound = 12.0
        * (b as f64) * (b as f64)
        * model.n_sites() as f64
        * (t_max / t_min)
        * 2f64.powi(8 * model.n_small() as i32 - 4);
    Ok(CongestionReport {
        n_states: n,
        phi,
        closed_form_bound,
        t_rel: spectral.t_rel,
        t_rel_le_phi: spectral.t_rel <= phi * (1.0 + 1e-9),
        lazy,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TopologyViolation {
    pub config: String,
    pub what: String,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TopologyReport {
    pub checked: usize,
    pub violations: Vec<TopologyViolation>,
}

/// Verifies the bipartite loop-topology facts on random bridge
/// configurations:
///
/// 1. every boundary-open loop pairs one "start" endpoint (left boundary in
///    A or right boundary in B) with one "end" endpoint (left in B or right
///    in A);
/// 2. at least `|B| - |A|` loops connect the left boundary to the right
///    boundary within B;
/// 3. crossing counts of any two cuts differ by at most `2|A| - 1`.
///
/// Requires a field-free model: vertex slots break the strand orientation
/// the facts rely on.
pub fn topology_sweep(
    model: &BipartiteModel,
    two_b: usize,
    n_configs: usize,
    rng: &mut impl Rng,
) -> Result<TopologyReport, AnalysisError> {
    let alphabet = operator_alphabet(model)?;
    if alphabet
        .slots()
        .iter()
        .any(|s| matches!(s.kind, SlotKind::Vertex { .. }))
    {
        return Err(AnalysisError::BadParameter(
            "topology facts require a field-free model".into(),
        ));
    }
    let n_small = model.n_small();
    let n_large = model.n_large();
    let a = alphabet.len();
    let mut violations = Vec::new();
    for _ in 0..n_configs {
        let config = Configuration::new(
            (0..two_b)
                .map(|_| alphabet.slot(rng.random_range(0..a)).kind)
                .collect(),
        );
        let dec = decompose(model.n_sites(), &config);
        let mut b_to_b = 0usize;
        for info in dec.loops() {
            match info.kind {
                LoopKind::Closed => {}
                LoopKind::OpenVertex => unreachable!("no vertex slots"),
                LoopKind::OpenBoundary => {
                    let mut starts = 0;
                    let mut ends = 0;
                    let mut left_b = false;
                    let mut right_b = false;
                    for e in &info.endpoints {
                        match e {
                            Endpoint::Left { site } => {
                                match model.sublattice(*site as usize) {
                                    Sublattice::A => starts += 1,
                                    Sublattice::B => {
                                        ends += 1;
                                        left_b = true;
                                    }
                                }
                            }
                            Endpoint::Right { site } => {
                                match model.sublattice(*site as usize) {
                                    Sublattice::B => {
                                        starts += 1;
                                        right_b = true;
                                    }
                                    Sublattice::A => ends += 1,
                                }
                            }
                            Endpoint::VertexOp { .. } => unreachable!("no vertex slots"),
                        }
                    }
                    if starts != 1 || ends != 1 {
                        violations.push(TopologyViolation {
                            config: config.to_string(),
                            what: format!(
                                "termination rule violated: loop {} has endpoints {:?}",
                                info.label, info.endpoints
                            ),
                        });
                    }
                    if left_b && right_b {
                        b_to_b += 1;
                    }
                }
            }
        }
        if b_to_b < n_large - n_small {
            violations.push(TopologyViolation {
                config: config.to_string(),
                what: format!(
                    "pigeonhole count violated: {b_to_b} B-to-B loops, need {}",
                    n_large - n_small
                ),
            });
        }
        let mut min_cross = usize::MAX;
        let mut max_cross = 0usize;
        for t in 0..=two_b {
            let c = dec.crossing_count(t);
            min_cross = min_cross.min(c);
            max_cross = max_cross.max(c);
        }
        if max_cross - min_cross > 2 * n_small - 1 {
            violations.push(TopologyViolation {
                config: config.to_string(),
                what: format!(
                    "cut lemma violated: crossing spread {} exceeds {}",
                    max_cross - min_cross,
                    2 * n_small - 1
                ),
            });
        }
    }
    Ok(TopologyReport {
        checked: n_configs,
        violations,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PottsReport {
    pub n: usize,
    pub two_b: usize,
    pub q: usize,
    pub z_loop: f64,
    pub z_potts_scaled: f64,
    pub relative_error: f64,
}

/// Star-graph duality: on the uniform star with `N` sites, the loop count is
/// `N` plus the number of equal adjacent slot pairs, so the loop partition
/// value factorizes through an open-chain Potts transfer matrix with
/// `q = N - 1` colors and diagonal weight `alpha`:
/// `Z_loop = alpha^N * 1^T T^{2B-1} 1`.
pub fn potts_cross_check(n: usize, b: u64, alpha: f64) -> Result<PottsReport, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::BadParameter(
            "the star graph needs at least 2 sites".into(),
        ));
    }
    if b == 0 {
        return Err(AnalysisError::BadParameter("B must be at least 1".into()));
    }
    let model = star_model(n, 1.0);
    let z_loop = oracle::enumerate_z(&model, b, alpha)?;
    let q = n - 1;
    let two_b = (2 * b) as usize;
    // v <- T v with T = (alpha - 1) I + J, applied 2B - 1 times to all-ones.
    let mut v = vec![1.0f64; q];
    for _ in 0..(two_b - 1) {
        let total: f64 = v.iter().sum();
        for c in v.iter_mut() {
            *c = (alpha - 1.0) * *c + total;
        }
    }
    let z_potts_scaled = alpha.powi(n as i32) * v.iter().sum::<f64>();
    let relative_error = (z_loop - z_potts_scaled).abs() / z_potts_scaled.abs();
    Ok(PottsReport {
        n,
        two_b,
        q,
        z_loop,
        z_potts_scaled,
        relative_error,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CounterexampleReport {
    pub n: usize,
    pub b: u64,
    /// `pi(x)pi(y) / (pi(z)pi(eta))` at the middle step `t = B`.
    pub ratio: f64,
    pub log2_ratio: f64,
    pub x: String,
    pub y: String,
    pub z: String,
    pub eta: String,
}

fn alternating_fill(edges: &[SlotKind], len: usize) -> Configuration {
    Configuration::new((0..len).map(|t| edges[t % edges.len()]).collect())
}

fn middle_encoding_ratio(
    n_sites: usize,
    x: &Configuration,
    y: &Configuration,
    b: u64,
    alpha: f64,
) -> (f64, Configuration, Configuration) {
    let t = b as usize;
    let z = splice(y, x, t);
    let eta = splice(x, y, t);
    let l = |c: &Configuration| loop_count(n_sites, c) as i32;
    let exponent = l(x) + l(y) - l(&z) - l(&eta);
    (alpha.powi(exponent), z, eta)
}

/// The two alternating-matching configurations on an even cycle: `x` walks
/// the even-index edges, `y` the odd-index edges. At the middle of the
/// left-to-right path between them, both the path state and the witness
/// collapse to a single loop threading the cut, so the encoding ratio is
/// `2^{N-2}` — growing by a factor 4 per added site pair instead of staying
/// bounded.
pub fn cycle_counterexample(n: usize, b: u64) -> Result<CounterexampleReport, AnalysisError> {
    if n < 4 || n % 2 != 0 {
        return Err(AnalysisError::BadParameter(
            "the cycle construction needs even N >= 4".into(),
        ));
    }
    if (b as usize) < n / 2 {
        return Err(AnalysisError::BadParameter(format!(
            "B must be at least N/2 = {} so each matching edge appears in each half",
            n / 2
        )));
    }
    let model = cycle_model(n, 1.0);
    let even: Vec<SlotKind> = (0..n)
        .step_by(2)
        .map(|i| SlotKind::afm(i, (i + 1) % n))
        .collect();
    let odd: Vec<SlotKind> = (1..n)
        .step_by(2)
        .map(|i| SlotKind::afm(i, (i + 1) % n))
        .collect();
    let two_b = (2 * b) as usize;
    let x = alternating_fill(&even, two_b);
    let y = alternating_fill(&odd, two_b);
    let (ratio, z, eta) = middle_encoding_ratio(model.n_sites(), &x, &y, b, 2.0);
    Ok(CounterexampleReport {
        n,
        b,
        ratio,
        log2_ratio: ratio.log2(),
        x: x.to_string(),
        y: y.to_string(),
        z: z.to_string(),
        eta: eta.to_string(),
    })
}

/// The same even/odd alternating construction on a star graph, where the
/// encoding bound `2^{4|A|-2} = 4` genuinely applies.
pub fn star_construction_ratio(n: usize, b: u64) -> Result<CounterexampleReport, AnalysisError> {
    if n < 3 {
        return Err(AnalysisError::BadParameter(
            "need at least two star edges".into(),
        ));
    }
    if b == 0 {
        return Err(AnalysisError::BadParameter("B must be at least 1".into()));
    }
    let model = star_model(n, 1.0);
    let even: Vec<SlotKind> = (1..n).step_by(2).map(|leaf| SlotKind::afm(0, leaf)).collect();
    let odd: Vec<SlotKind> = (2..n).step_by(2).map(|leaf| SlotKind::afm(0, leaf)).collect();
    let two_b = (2 * b) as usize;
    let x = alternating_fill(&even, two_b);
    let y = alternating_fill(&odd, two_b);
    let (ratio, z, eta) = middle_encoding_ratio(model.n_sites(), &x, &y, b, 2.0);
    Ok(CounterexampleReport {
        n,
        b,
        ratio,
        log2_ratio: ratio.log2(),
        x: x.to_string(),
        y: y.to_string(),
        z: z.to_string(),
        eta: eta.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{path_model, star_model, BipartiteModel, Sublattice};
    use rand::SeedableRng;

    fn star3() -> BipartiteModel {
        star_model(3, 1.0)
    }

    fn n2_with_fields() -> BipartiteModel {
        BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.25, 0.25],
        )
    }

    #[test]
    fn single_slot_alphabet_gives_trivial_chain() {
        let model = BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.0; 2],
        );
        let m = build_chain_matrix(&model, 1, 2.0, false).unwrap();
        assert_eq!(m.n_states(), 1);
        assert_eq!(m.diag[0], 1.0);
        let s = spectral_report(&m).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.t_rel, 0.0);
    }

    #[test]
    fn nine_state_chain_is_stochastic() {
        let m = build_chain_matrix(&n2_with_fields(), 1, 2.0, false).unwrap();
        assert_eq!(m.n_states(), 9);
        assert!(m.max_row_sum_error() < 1e-14);
        assert_eq!(m.exact_rows_stochastic(), Some(true));
    }

    #[test]
    fn star3_exact_detailed_balance_and_stationarity() {
        for lazy in [false, true] {
            let m = build_chain_matrix(&star3(), 1, 2.0, lazy).unwrap();
            assert_eq!(m.n_states(), 4);
            assert_eq!(m.exact_detailed_balance(), Some(true));
            assert_eq!(m.exact_stationarity(), Some(true));
        }
    }

    #[test]
    fn weighted_chain_keeps_exact_balance() {
        let model = BipartiteModel::new(
            3,
            vec![Sublattice::A, Sublattice::B, Sublattice::B],
            vec![(0, 1, 1.0), (0, 2, 3.0)],
            vec![],
            vec![0.0; 3],
        );
        let m = build_chain_matrix(&model, 2, 2.0, false).unwrap();
        assert_eq!(m.exact_detailed_balance(), Some(true));
        assert_eq!(m.exact_stationarity(), Some(true));
    }

    #[test]
    fn two_state_symmetric_gap() {
        // An explicit two-state check of the eigensolver path: a chain with
        // uniform pi and flip probability p has lambda* = 1 - 2p.
        let model = star3();
        let m = build_chain_matrix(&model, 1, 2.0, false).unwrap();
        let s = spectral_report(&m).unwrap();
        assert!(s.lambda_star < 1.0 && s.t_rel >= 1.0);
        assert!(s.t_mix_upper >= s.t_rel);
    }

    #[test]
    fn canonical_path_and_encoding_roundtrip() {
        let a = SlotKind::afm(0, 1);
        let b = SlotKind::afm(0, 2);
        let x = Configuration::new(vec![a, a]);
        let y = Configuration::new(vec![b, b]);
        let path = canonical_path(&x, &y).unwrap();
        assert_eq!(path.states.len(), 3);
        assert_eq!(path.states[1], Configuration::new(vec![b, a]));
        assert_eq!(path.proper_len(), 2);
        // Step 1: z = (b, a), witness = (a, b).
        let eta = encode(1, &x, &y);
        assert_eq!(eta, Configuration::new(vec![a, b]));
        let (dx, dy) = decode(1, &path.states[1], &eta).unwrap();
        assert_eq!(dx, x);
        assert_eq!(dy, y);
        // x = y: the witness equals x at every step.
        let eta = encode(1, &x, &x);
        assert_eq!(eta, x);
    }

    #[test]
    fn decode_is_injective_per_edge_star3() {
        let alphabet = operator_alphabet(&star3()).unwrap();
        let space = StateSpace::enumerate(&alphabet, 2, 2.0, 1_000).unwrap();
        // For each (step, z) group, all witnesses must be distinct.
        let mut seen: HashMap<(usize, String, String), (usize, usize)> = HashMap::new();
        for x in 0..space.len() {
            for y in 0..space.len() {
                for t in 1..=2usize {
                    let z = splice(&space.configs[y], &space.configs[x], t);
                    let eta = encode(t, &space.configs[x], &space.configs[y]);
                    let key = (t, z.to_string(), eta.to_string());
                    if let Some(&(px, py)) = seen.get(&key) {
                        assert_eq!((px, py), (x, y), "encoding collision at {key:?}");
                    }
                    seen.insert(key, (x, y));
                    let (dx, dy) = decode(t, &z, &eta).unwrap();
                    assert_eq!(dx, space.configs[x]);
                    assert_eq!(dy, space.configs[y]);
                }
            }
        }
    }

    #[test]
    fn encoding_bound_star_and_fields() {
        let report = encoding_inequality_max(&star3(), 1, 2.0, false).unwrap();
        assert!(report.holds, "ratio {} bound {}", report.max_ratio, report.bound);
        assert_eq!(report.bound, 4.0);
        // The bound is tight on the star: (a,a) vs (b,b) achieves 4.
        assert!((report.max_ratio - 4.0).abs() < 1e-9);

        let report = encoding_inequality_max(&n2_with_fields(), 1, 2.0, true).unwrap();
        assert_eq!(report.bound, 16.0);
        assert!(report.holds);
    }

    #[test]
    fn congestion_dominates_relaxation() {
        for model in [star3(), n2_with_fields()] {
            let report = congestion(&model, 1, 2.0, true).unwrap();
            assert!(report.t_rel_le_phi, "t_rel {} phi {}", report.t_rel, report.phi);
            assert!(report.phi <= report.closed_form_bound);
        }
    }

    #[test]
    fn topology_sweep_star_and_two_center() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let report = topology_sweep(&star_model(4, 1.0), 8, 500, &mut rng).unwrap();
        assert_eq!(report.checked, 500);
        assert!(report.violations.is_empty());

        // |A| = 2 with an FM bond inside B.
        let mut sub = vec![Sublattice::B; 5];
        sub[0] = Sublattice::A;
        sub[1] = Sublattice::A;
        let model = BipartiteModel::new(
            5,
            sub,
            vec![(0, 2, 1.0), (0, 3, 1.0), (1, 3, 1.0), (1, 4, 1.0)],
            vec![(2, 3, 0.5)],
            vec![0.0; 5],
        );
        let report = topology_sweep(&model, 8, 500, &mut rng).unwrap();
        assert!(report.violations.is_empty());

        // Fields are rejected.
        assert!(topology_sweep(&n2_with_fields(), 4, 10, &mut rng).is_err());
    }

    #[test]
    fn empty_sequence_topology_is_trivial() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let report = topology_sweep(&star_model(3, 1.0), 0, 5, &mut rng).unwrap();
        assert!(report.violations.is_empty());
    }

    #[test]
    fn potts_values() {
        // N=3, 2B=2: hand enumeration gives 48.
        let r = potts_cross_check(3, 1, 2.0).unwrap();
        assert!((r.z_loop - 48.0).abs() < 1e-12);
        assert!(r.relative_error < 1e-12);
        // Degenerate single-edge case: Z = 8 at 2B = 2.
        let r = potts_cross_check(2, 1, 2.0).unwrap();
        assert!((r.z_loop - 8.0).abs() < 1e-12);
        assert!(r.relative_error < 1e-12);
        // N=4 star at 2B=4.
        let r = potts_cross_check(4, 2, 2.0).unwrap();
        assert!(r.relative_error < 1e-10);
    }

    #[test]
    fn cycle_ratio_grows_and_star_stays_bounded() {
        let r4 = cycle_counterexample(4, 2).unwrap();
        let r6 = cycle_counterexample(6, 3).unwrap();
        let r8 = cycle_counterexample(8, 4).unwrap();
        assert!((r4.ratio - 4.0).abs() < 1e-12);
        assert!((r6.ratio - 16.0).abs() < 1e-12);
        assert!((r8.ratio - 64.0).abs() < 1e-12);
        // Ratio independent of B once both halves cover their matchings.
        let r6b = cycle_counterexample(6, 5).unwrap();
        assert!((r6b.ratio - 16.0).abs() < 1e-12);
        assert!(cycle_counterexample(5, 4).is_err());
        assert!(cycle_counterexample(6, 2).is_err());

        for n in [3usize, 4, 5, 6] {
            let r = star_construction_ratio(n, (n as u64) / 2 + 1).unwrap();
            assert!(r.ratio <= 4.0 + 1e-12, "star n={n} ratio {}", r.ratio);
        }
    }
}
