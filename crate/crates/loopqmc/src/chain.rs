//! Single-slot Metropolis chain over operator sequences.
//!
//! One chain step: pick a position `k` uniformly in `1..=2B`, pick a slot `o`
//! uniformly from the alphabet, and accept the replacement with probability
//! `min{1, ratio}` where `ratio` is the weight ratio of the two
//! configurations. Every replacement has positive weight, so the chain is
//! irreducible, and rejected proposals leave the state unchanged (the
//! transition matrix has self-loops).
//!
//! Reproducibility contract: the generator is a seeded ChaCha12 stream and
//! each step consumes draws in a fixed order — lazy coin (only when the lazy
//! chain is enabled), position, proposal, acceptance coin — with the
//! acceptance coin drawn even for moves that are accepted outright. Parallel
//! chains use the same seed on disjoint ChaCha streams.

use crate::estimators::{measure, LoopObservable};
use crate::hamiltonian::Alphabet;
use crate::loopcfg::{loop_count, Configuration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Clone, Copy, Debug)]
pub struct ChainParams {
    /// Half sequence length; the chain state has `2B` slots.
    pub b: usize,
    /// Total Metropolis steps (single-slot update attempts).
    pub steps: u64,
    /// Discarded prefix.
    pub burn_in: u64,
    /// Record every `thinning`-th post-burn-in state.
    pub thinning: u64,
    pub seed: u64,
    /// Loop fugacity; 2 is the physical spin-1/2 case.
    pub alpha: f64,
    /// Use the lazy chain `(I + P) / 2`. Off for sampling, on when comparing
    /// spectral gaps against congestion bounds (which assume non-negative
    /// eigenvalues).
    pub lazy: bool,
}

impl ChainParams {
    pub fn new(b: usize, steps: u64, seed: u64) -> Self {
        ChainParams {
            b,
            steps,
            burn_in: 0,
            thinning: 1,
            seed,
            alpha: 2.0,
            lazy: false,
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.b == 0 {
            return Err(ChainError::BadParams("B must be at least 1".into()));
        }
        if self.thinning == 0 {
            return Err(ChainError::BadParams("thinning must be at least 1".into()));
        }
        if self.steps < self.burn_in {
            return Err(ChainError::BadParams(
                "steps must be at least burn_in".into(),
            ));
        }
        if !(self.alpha > 0.0) {
            return Err(ChainError::BadParams("alpha must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Model(#[from] crate::hamiltonian::ModelError),
}

/// Chain state with cached loop count and slot-weight log sum. The caches
/// always equal a fresh recount of the configuration.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub config: Configuration,
    pub loop_count: usize,
    pub log_t_sum: f64,
}

impl ChainState {
    pub fn log_weight(&self, alpha: f64) -> f64 {
        self.loop_count as f64 * alpha.ln() + self.log_t_sum
    }

    pub fn caches_consistent(&self, alphabet: &Alphabet) -> bool {
        let l = loop_count(alphabet.n_sites(), &self.config);
        let sum: f64 = self
            .config
            .slots()
            .iter()
            .map(|s| alphabet.ln_weight_of(*s).expect("slot in alphabet"))
            .sum();
        l == self.loop_count && (sum - self.log_t_sum).abs() <= 1e-9 * sum.abs().max(1.0)
    }
}

/// RNG for chain number `stream` of a run: one seed, disjoint ChaCha streams.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Initial state: `2B` slots drawn independently and uniformly from the
/// alphabet. Any start works — the mixing bound is start-independent — and
/// this one is unbiased and cheap.
pub fn init(alphabet: &Alphabet, params: &ChainParams, rng: &mut impl Rng) -> Result<ChainState, ChainError> {
    params.validate()?;
    let a = alphabet.len();
    let config = Configuration::new(
        (0..2 * params.b)
            .map(|_| alphabet.slot(rng.random_range(0..a)).kind)
            .collect(),
    );
    let l = loop_count(alphabet.n_sites(), &config);
    let log_t_sum = config
        .slots()
        .iter()
        .map(|s| alphabet.ln_weight_of(*s).expect("slot in alphabet"))
        .sum();
    Ok(ChainState {
        config,
        loop_count: l,
        log_t_sum,
    })
}

/// One Metropolis step; returns whether the proposal was accepted. The
/// proposal ratio is computed by a full loop recount of the modified
/// configuration so the acceptance probability is exact.
pub fn step(
    alphabet: &Alphabet,
    state: &mut ChainState,
    params: &ChainParams,
    rng: &mut impl Rng,
) -> bool {
    let two_b = state.config.len();
    let lazy_go = if params.lazy {
        rng.random::<f64>() < 0.5
    } else {
        true
    };
    let k = rng.random_range(0..two_b);
    let o = rng.random_range(0..alphabet.len());
    let coin = rng.random::<f64>();
    if !lazy_go {
        return false;
    }
    let new_slot = *alphabet.slot(o);
    let old_kind = state.config.slot(k);
    if new_slot.kind == old_kind {
        return true;
    }
    let old_ln_t = alphabet.ln_weight_of(old_kind).expect("slot in alphabet");
    state.config.set_slot(k, new_slot.kind);
    let l_new = loop_count(alphabet.n_sites(), &state.config);
    let ratio = params.alpha.powi(l_new as i32 - state.loop_count as i32)
        * (new_slot.ln_weight - old_ln_t).exp();
    if coin < ratio.min(1.0) {
        state.loop_count = l_new;
        state.log_t_sum += new_slot.ln_weight - old_ln_t;
        true
    } else {
        state.config.set_slot(k, old_kind);
        false
    }
}

/// One retained sample.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    /// Step index (1-based) at which the state was recorded.
    pub step: u64,
    pub config: Configuration,
    pub loop_count: usize,
    /// Accepted proposals over all steps so far.
    pub acceptance_rate: f64,
    /// Raw insertion measurements `w_O`, one per requested observable.
    pub measurements: Vec<f64>,
}

/// Lazily evaluated record stream: `(steps - burn_in) / thinning` records,
/// deterministic given the seed.
pub struct SampleStream<'a> {
    alphabet: &'a Alphabet,
    observables: &'a [LoopObservable],
    params: ChainParams,
    state: ChainState,
    rng: ChaCha12Rng,
    step_count: u64,
    accepted: u64,
}

impl<'a> SampleStream<'a> {
    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.step_count == 0 {
            0.0
        } else {
            self.accepted as f64 / self.step_count as f64
        }
    }
}

impl Iterator for SampleStream<'_> {
    type Item = SampleRecord;

    fn next(&mut self) -> Option<SampleRecord> {
        while self.step_count < self.params.steps {
            let accepted = step(self.alphabet, &mut self.state, &self.params, &mut self.rng);
            self.step_count += 1;
            self.accepted += accepted as u64;
            let past_burn_in = self.step_count > self.params.burn_in;
            if past_burn_in && (self.step_count - self.params.burn_in) % self.params.thinning == 0 {
                let measurements = self
                    .observables
                    .iter()
                    .map(|ob| {
                        measure(
                            self.alphabet.n_sites(),
                            &self.state.config,
                            ob.kind,
                            self.params.alpha,
                        )
                        .expect("chain configurations have even length")
                    })
                    .collect();
                return Some(SampleRecord {
                    step: self.step_count,
                    config: self.state.config.clone(),
                    loop_count: self.state.loop_count,
                    acceptance_rate: self.accepted as f64 / self.step_count as f64,
                    measurements,
                });
            }
        }
        None
    }
}

/// Runs one chain, measuring the given observables on every retained sample.
pub fn run<'a>(
    alphabet: &'a Alphabet,
    params: &ChainParams,
    observables: &'a [LoopObservable],
) -> Result<SampleStream<'a>, ChainError> {
    run_stream(alphabet, params, observables, 0)
}

/// Same as [`run`] on ChaCha stream `stream`; independent chains of one run
/// pass their chain index here.
pub fn run_stream<'a>(
    alphabet: &'a Alphabet,
    params: &ChainParams,
    observables: &'a [LoopObservable],
    stream: u64,
) -> Result<SampleStream<'a>, ChainError> {
    params.validate()?;
    let mut rng = chain_rng(params.seed, stream);
    let state = init(alphabet, params, &mut rng)?;
    Ok(SampleStream {
        alphabet,
        observables,
        params: *params,
        state,
        rng,
        step_count: 0,
        accepted: 0,
    })
}
