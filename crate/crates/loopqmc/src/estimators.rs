//! Observable and ground-energy estimation by mid-sequence insertion.
//!
//! Any observable that splits into the dual operator pair of one slot kind —
//! `I + S = 2 h` for an AFM bond, `I^F + S` for an FM bond, `1 + X` for a
//! site — is estimated from chain samples as
//! `w_O(x) = alpha^{L(x_O) - L(x)}`, where `x_O` is `x` with the bare
//! operator inserted after slot `B`. The inserted slot carries unit coupling,
//! so no `T` factor enters, and on the exact distribution
//! `sum_x pi(x) w_O(x) = <M_B| O |M_B>` holds identically.
//!
//! Energy assembles per-term estimates with `H`'s own coefficients:
//! `E = - sum_afm (w/2) E[w_{I+S}] - sum_fm (v/2) E[w_{I^F+S}]
//!      - sum_fields g E[w_{1+X}]`.
//! Error bars come from batch means with `floor(sqrt(n))` batches, which
//! absorbs autocorrelation without spectral estimation.

use crate::chain::SampleRecord;
use crate::hamiltonian::{operator_alphabet, BipartiteModel, SlotKind};
use crate::loopcfg::{loop_count, Configuration};
use crate::util::CompensatedSum;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("insertion estimator needs an even-length configuration, got {0}")]
    OddLength(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("record carries {got} measurement columns, expected {expected}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("the physical estimator requires alpha = 2, got {0}")]
    UnphysicalAlpha(f64),
    #[error(transparent)]
    Model(#[from] crate::hamiltonian::ModelError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

/// An observable expressible as one slot kind's dual pair, plus an affine
/// map applied after averaging: `estimate = scale * E[w_O] + offset`.
/// The slot may reference any edge or site of the model, whether or not it
/// appears in `H`.
#[derive(Clone, Debug)]
pub struct LoopObservable {
    pub label: String,
    pub kind: SlotKind,
    pub scale: f64,
    pub offset: f64,
}

/// Raw insertion measurement `w_O(x) = alpha^{L(x_O) - L(x)}` with the bare
/// operator inserted after slot `B` (position `len/2`).
pub fn measure(
    n_sites: usize,
    config: &Configuration,
    kind: SlotKind,
    alpha: f64,
) -> Result<f64, EstimatorError> {
    if config.len() % 2 != 0 {
        return Err(EstimatorError::OddLength(config.len()));
    }
    let mid = config.len() / 2;
    let inserted = config.insert(mid, kind).expect("mid position in range");
    let l0 = loop_count(n_sites, config) as i32;
    let l1 = loop_count(n_sites, &inserted) as i32;
    Ok(alpha.powi(l1 - l0))
}

/// Point estimate with batch-means error analysis.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EstimateResult {
    pub mean: f64,
    pub stderr: f64,
    pub batch_count: usize,
    /// Integrated autocorrelation time implied by the batch variance
    /// (0.5 for uncorrelated samples).
    pub autocorr: f64,
}

/// Batch-means reduction over a scalar series with `floor(sqrt(n))` batches;
/// a trailing remainder shorter than one batch is dropped.
pub fn batch_means(series: &[f64]) -> Result<EstimateResult, EstimatorError> {
    let n = series.len();
    let batch_count = (n as f64).sqrt().floor() as usize;
    if batch_count < 2 {
        return Err(EstimatorError::TooFewSamples { needed: 4, got: n });
    }
    let batch_len = n / batch_count;
    let used = batch_count * batch_len;
    let mut batch_mean = Vec::with_capacity(batch_count);
    for b in 0..batch_count {
        let mut s = CompensatedSum::new();
        for v in &series[b * batch_len..(b + 1) * batch_len] {
            s.add(*v);
        }
        batch_mean.push(s.value() / batch_len as f64);
    }
    let mut total = CompensatedSum::new();
    for m in &batch_mean {
        total.add(*m);
    }
    let mean = total.value() / batch_count as f64;
    let var_bm: f64 = batch_mean
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / (batch_count - 1) as f64;
    let stderr = (var_bm / batch_count as f64).sqrt();
    let var_sample: f64 = series[..used]
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (used - 1) as f64;
    let autocorr = if var_sample > 0.0 {
        (used as f64 * stderr * stderr / (2.0 * var_sample)).max(0.5)
    } else {
        0.5
    };
    Ok(EstimateResult {
        mean,
        stderr,
        batch_count,
        autocorr,
    })
}

/// One observable per Hamiltonian term, with the term's energy coefficient
/// in `scale`: `-w/2`, `-v/2`, `-g`.
pub fn energy_observables(model: &BipartiteModel) -> Vec<LoopObservable> {
    let mut out = Vec::new();
    for &(i, j, w) in model.afm_edges() {
        out.push(LoopObservable {
            label: format!("afm_{i}_{j}"),
            kind: SlotKind::afm(i, j),
            scale: -0.5 * w,
            offset: 0.0,
        });
    }
    for &(i, j, v) in model.fm_edges() {
        out.push(LoopObservable {
            label: format!("fm_{i}_{j}"),
            kind: SlotKind::fm(i, j),
            scale: -0.5 * v,
            offset: 0.0,
        });
    }
    for (m, &g) in model.fields().iter().enumerate() {
        if g > 0.0 {
            out.push(LoopObservable {
                label: format!("field_{m}"),
                kind: SlotKind::vertex(m),
                scale: -g,
                offset: 0.0,
            });
        }
    }
    out
}

/// One `1 + X` insertion per site (every site, whether or not a field acts
/// on it); the staggered order parameter is `N^{-1} sum_m (E[w_m] - 1)` in
/// the rotated frame where all signs align.
pub fn neel_observables(model: &BipartiteModel) -> Vec<LoopObservable> {
    let n = model.n_sites() as f64;
    (0..model.n_sites())
        .map(|m| LoopObservable {
            label: format!("neel_{m}"),
            kind: SlotKind::vertex(m),
            scale: 1.0 / n,
            offset: -1.0 / n,
        })
        .collect()
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TermEstimate {
    pub label: String,
    pub coeff: f64,
    pub mean_w: f64,
    pub contribution: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EnergyEstimate {
    pub result: EstimateResult,
    pub terms: Vec<TermEstimate>,
}

fn combined_series(
    observables: &[LoopObservable],
    records: &[SampleRecord],
) -> Result<Vec<f64>, EstimatorError> {
    records
        .iter()
        .map(|r| {
            if r.measurements.len() != observables.len() {
                return Err(EstimatorError::ColumnMismatch {
                    expected: observables.len(),
                    got: r.measurements.len(),
                });
            }
            Ok(observables
                .iter()
                .zip(&r.measurements)
                .map(|(ob, w)| ob.scale * w + ob.offset)
                .sum())
        })
        .collect()
}

/// Ground-energy estimate from records measured with
/// [`energy_observables`]. `alpha = 2` is required: only there does the
/// stationary distribution match the quantum expansion.
pub fn estimate_energy(
    model: &BipartiteModel,
    records: &[SampleRecord],
    alpha: f64,
) -> Result<EnergyEstimate, EstimatorError> {
    if (alpha - 2.0).abs() > 1e-12 {
        return Err(EstimatorError::UnphysicalAlpha(alpha));
    }
    if records.is_empty() {
        return Err(EstimatorError::TooFewSamples { needed: 4, got: 0 });
    }
    let observables = energy_observables(model);
    let series = combined_series(&observables, records)?;
    let result = batch_means(&series)?;
    let terms = observables
        .iter()
        .enumerate()
        .map(|(t, ob)| {
            let mut s = CompensatedSum::new();
            for r in records {
                s.add(r.measurements[t]);
            }
            let mean_w = s.value() / records.len() as f64;
            TermEstimate {
                label: ob.label.clone(),
                coeff: ob.scale,
                mean_w,
                contribution: ob.scale * mean_w,
            }
        })
        .collect();
    Ok(EnergyEstimate { result, terms })
}

/// Staggered-order estimate from records measured with [`neel_observables`].
pub fn estimate_neel(
    model: &BipartiteModel,
    records: &[SampleRecord],
    alpha: f64,
) -> Result<EstimateResult, EstimatorError> {
    if (alpha - 2.0).abs() > 1e-12 {
        return Err(EstimatorError::UnphysicalAlpha(alpha));
    }
    if records.is_empty() {
        return Err(EstimatorError::TooFewSamples { needed: 4, got: 0 });
    }
    let observables = neel_observables(model);
    let series = combined_series(&observables, records)?;
    batch_means(&series)
}

/// `sum_x pi(x) w_O(x)` by full enumeration, with the numerator evaluated as
/// the total weight of the extended `2B + 1` sequences (the direct
/// operator-string route). Cross-check target for the sampling estimator.
pub fn exact_pair_expectation(
    model: &BipartiteModel,
    b: u64,
    kind: SlotKind,
    alpha: f64,
) -> Result<f64, EstimatorError> {
    let alphabet = operator_alphabet(model)?;
    let len = (2 * b) as usize;
    let a = alphabet.len() as u64;
    let states = a
        .checked_pow(len as u32)
        .filter(|&s| s <= crate::oracle::ENUMERATION_CAP)
        .ok_or_else(|| {
            EstimatorError::Oracle(crate::oracle::OracleError::CapExceeded(format!(
                "|alphabet|^(2B) = {a}^{len} exceeds the enumeration cap"
            )))
        })?;
    let n = alphabet.n_sites();
    let mut digits = vec![0usize; len];
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for _ in 0..states {
        let config = Configuration::new(digits.iter().map(|&d| alphabet.slot(d).kind).collect());
        let mut t_prod = 1.0;
        for &d in &digits {
            t_prod *= alphabet.slot(d).weight;
        }
        let l = loop_count(n, &config) as i32;
        let extended = config.insert(len / 2, kind).expect("mid in range");
        let l_ext = loop_count(n, &extended) as i32;
        den.add(alpha.powi(l) * t_prod);
        num.add(alpha.powi(l_ext) * t_prod);
        for d in digits.iter_mut() {
            *d += 1;
            if *d < a as usize {
                break;
            }
            *d = 0;
        }
    }
    Ok(num.value() / den.value())
}

/// Energy expectation under the exact configuration distribution.
pub fn exact_energy_expectation(
    model: &BipartiteModel,
    b: u64,
    alpha: f64,
) -> Result<f64, EstimatorError> {
    let mut sum = CompensatedSum::new();
    for ob in energy_observables(model) {
        sum.add(ob.scale * exact_pair_expectation(model, b, ob.kind, alpha)? + ob.offset);
    }
    Ok(sum.value())
}

/// Staggered-order expectation under the exact configuration distribution.
pub fn exact_neel_expectation(
    model: &BipartiteModel,
    b: u64,
    alpha: f64,
) -> Result<f64, EstimatorError> {
    let mut sum = CompensatedSum::new();
    for ob in neel_observables(model) {
        sum.add(ob.scale * exact_pair_expectation(model, b, ob.kind, alpha)? + ob.offset);
    }
    Ok(sum.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{star_model, BipartiteModel, Sublattice};
    use crate::oracle;
    use rand::{Rng, SeedableRng};

    fn single_edge() -> BipartiteModel {
        BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.0; 2],
        )
    }

    #[test]
    fn measure_between_equal_bridges_closes_a_loop() {
        let config = Configuration::new(vec![SlotKind::afm(0, 1), SlotKind::afm(0, 1)]);
        let w = measure(2, &config, SlotKind::afm(0, 1), 2.0).unwrap();
        assert_eq!(w, 2.0);
    }

    #[test]
    fn vertex_insertions_follow_the_two_cases() {
        // Untouched strand: the insertion cuts an open loop, L grows by one.
        let w = measure(3, &Configuration::empty(), SlotKind::vertex(2), 2.0).unwrap();
        assert_eq!(w, 2.0);
        // Closed loop without vertex operators: the insertion opens it,
        // leaving L unchanged.
        let config = Configuration::new(vec![SlotKind::afm(0, 1), SlotKind::afm(0, 1)]);
        let w = measure(3, &config, SlotKind::vertex(1), 2.0).unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn measure_rejects_odd_length() {
        let config = Configuration::new(vec![SlotKind::afm(0, 1)]);
        assert!(matches!(
            measure(2, &config, SlotKind::afm(0, 1), 2.0),
            Err(EstimatorError::OddLength(1))
        ));
    }

    #[test]
    fn exact_pair_expectation_matches_projected_state() {
        // Loop-side enumeration against the dense projected state, including
        // a model with fields and one with an FM bond.
        let models = [
            single_edge(),
            star_model(3, 1.0),
            BipartiteModel::new(
                2,
                vec![Sublattice::A, Sublattice::B],
                vec![(0, 1, 1.0)],
                vec![],
                vec![0.25, 0.25],
            ),
            BipartiteModel::new(
                3,
                vec![Sublattice::A, Sublattice::B, Sublattice::B],
                vec![(0, 1, 1.0), (0, 2, 1.0)],
                vec![(1, 2, 0.5)],
                vec![0.0; 3],
            ),
        ];
        for model in &models {
            let b = 2;
            for kind in [
                SlotKind::afm(0, 1),
                SlotKind::vertex(0),
                SlotKind::vertex(model.n_sites() - 1),
            ] {
                let loop_side = exact_pair_expectation(model, b, kind, 2.0).unwrap();
                let ed_side = oracle::m_b_pair_expectation(model, b, kind).unwrap();
                assert!(
                    (loop_side - ed_side).abs() <= 1e-12 * ed_side.abs().max(1.0),
                    "kind {kind:?}: {loop_side} vs {ed_side}"
                );
            }
        }
    }

    #[test]
    fn exact_energy_matches_projected_energy() {
        let models = [
            single_edge(),
            star_model(3, 1.0),
            BipartiteModel::new(
                2,
                vec![Sublattice::A, Sublattice::B],
                vec![(0, 1, 1.0)],
                vec![],
                vec![0.25, 0.25],
            ),
        ];
        for model in &models {
            for b in [1u64, 2, 3] {
                let loop_side = exact_energy_expectation(model, b, 2.0).unwrap();
                let ed_side = oracle::m_b_energy(model, b).unwrap();
                assert!(
                    (loop_side - ed_side).abs() <= 1e-10 * ed_side.abs().max(1.0),
                    "b={b}: {loop_side} vs {ed_side}"
                );
            }
        }
    }

    #[test]
    fn exact_neel_matches_projected_state() {
        for model in [single_edge(), star_model(3, 1.0)] {
            let b = 2;
            let loop_side = exact_neel_expectation(&model, b, 2.0).unwrap();
            let n = model.n_sites() as f64;
            let mut ed_side = 0.0;
            for m in 0..model.n_sites() {
                ed_side +=
                    (oracle::m_b_pair_expectation(&model, b, SlotKind::vertex(m)).unwrap() - 1.0)
                        / n;
            }
            assert!((loop_side - ed_side).abs() <= 1e-12);
        }
    }

    #[test]
    fn batch_means_scaling_and_guards() {
        assert!(batch_means(&[1.0, 2.0]).is_err());
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let series: Vec<f64> = (0..40_000).map(|_| rng.random::<f64>()).collect();
        let small = batch_means(&series[..10_000]).unwrap();
        let large = batch_means(&series).unwrap();
        assert!(small.batch_count >= 2 && large.batch_count >= 2);
        // stderr should shrink roughly like 1/sqrt(n).
        let ratio = large.stderr / small.stderr;
        assert!(ratio > 0.3 && ratio < 0.8, "ratio {ratio}");
        // Uncorrelated input: autocorrelation estimate near 1/2.
        assert!(large.autocorr < 1.5);
    }

    #[test]
    fn estimator_on_iid_samples_from_exact_distribution() {
        // Draw iid configurations from pi on a small instance and check the
        // energy estimate against the projected-state energy.
        let model = star_model(3, 1.0);
        let alphabet = crate::hamiltonian::operator_alphabet(&model).unwrap();
        let b = 2u64;
        let len = (2 * b) as usize;
        let n_states = alphabet.len().pow(len as u32);
        let mut weights = Vec::with_capacity(n_states);
        let mut configs = Vec::with_capacity(n_states);
        let mut digits = vec![0usize; len];
        for _ in 0..n_states {
            let config =
                Configuration::new(digits.iter().map(|&d| alphabet.slot(d).kind).collect());
            let l = loop_count(3, &config) as i32;
            weights.push(2f64.powi(l));
            configs.push(config);
            for d in digits.iter_mut() {
                *d += 1;
                if *d < alphabet.len() {
                    break;
                }
                *d = 0;
            }
        }
        let total: f64 = weights.iter().sum();
        let observables = energy_observables(&model);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4242);
        let records: Vec<crate::chain::SampleRecord> = (0..20_000)
            .map(|i| {
                let mut u = rng.random::<f64>() * total;
                let mut pick = 0;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = k;
                        break;
                    }
                    u -= w;
                }
                let config = configs[pick].clone();
                let measurements = observables
                    .iter()
                    .map(|ob| measure(3, &config, ob.kind, 2.0).unwrap())
                    .collect();
                crate::chain::SampleRecord {
                    step: i as u64 + 1,
                    loop_count: loop_count(3, &config),
                    config,
                    acceptance_rate: 1.0,
                    measurements,
                }
            })
            .collect();
        let est = estimate_energy(&model, &records, 2.0).unwrap();
        let exact = oracle::m_b_energy(&model, b).unwrap();
        assert!(
            (est.result.mean - exact).abs() < 5.0 * est.result.stderr,
            "estimate {} +/- {} vs exact {exact}",
            est.result.mean,
            est.result.stderr
        );
        assert!(est.result.stderr < 0.05);
    }

    #[test]
    fn alpha_guard() {
        let model = single_edge();
        assert!(matches!(
            estimate_energy(&model, &[], 1.5),
            Err(EstimatorError::UnphysicalAlpha(_))
        ));
    }
}
