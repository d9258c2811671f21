//! Configurations and their loop decomposition.
//!
//! A configuration is a sequence of operator slots laid out along an
//! imaginary-time axis. Drawing one world line per site, every slot cuts the
//! lines of the sites it touches into segments, and segments glue back
//! together by three local rules:
//!
//! - an AFM bridge joins the two segments below it and the two above it
//!   (both strands make a U-turn at the operator);
//! - an FM bridge passes strands through while swapping sites
//!   (below-`i` joins above-`j` and vice versa);
//! - a vertex operator terminates the segment below it and starts a fresh
//!   one above it.
//!
//! The connected classes are the *loops*; `L(x)` counts them, and with no
//! operators at all `L = N` (one untouched strand per site). Strands that
//! reach the sequence boundary or a vertex operator are open but are still
//! counted as loops. A configuration's unnormalized weight is
//! `alpha^{L(x)} * prod_k T(x_k)`.

use crate::hamiltonian::{Alphabet, SlotKind};
use crate::util::UnionFind;
use std::fmt;
use thiserror::Error;

/// An operator sequence. The Markov chain uses even length `2B`; the
/// insertion estimator also builds length `2B + 1`, and the empty sequence is
/// legal everywhere.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Configuration {
    slots: Vec<SlotKind>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("insert position {position} out of range for length {len}")]
    InsertOutOfRange { position: usize, len: usize },
}

impl Configuration {
    pub fn new(slots: Vec<SlotKind>) -> Self {
        Configuration { slots }
    }

    pub fn empty() -> Self {
        Configuration { slots: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[SlotKind] {
        &self.slots
    }

    pub fn slot(&self, k: usize) -> SlotKind {
        self.slots[k]
    }

    pub fn set_slot(&mut self, k: usize, kind: SlotKind) {
        self.slots[k] = kind;
    }

    /// Pure insertion: a new configuration with `kind` at `position`,
    /// shifting later slots right. The original is untouched.
    pub fn insert(&self, position: usize, kind: SlotKind) -> Result<Configuration, ConfigError> {
        if position > self.slots.len() {
            return Err(ConfigError::InsertOutOfRange {
                position,
                len: self.slots.len(),
            });
        }
        let mut slots = Vec::with_capacity(self.slots.len() + 1);
        slots.extend_from_slice(&self.slots[..position]);
        slots.push(kind);
        slots.extend_from_slice(&self.slots[position..]);
        Ok(Configuration { slots })
    }

    /// Replaces slot `k`, returning a new configuration.
    pub fn with_slot(&self, k: usize, kind: SlotKind) -> Configuration {
        let mut c = self.clone();
        c.slots[k] = kind;
        c
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for s in &self.slots {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
            first = false;
        }
        Ok(())
    }
}

/// How a loop terminates.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LoopKind {
    /// No endpoints: a proper closed loop in the bulk.
    Closed,
    /// Both endpoints on the left/right sequence boundary.
    OpenBoundary,
    /// At least one endpoint at a vertex operator.
    OpenVertex,
}

/// One termination event of an open loop.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Endpoint {
    /// Strand touches the left boundary on `site`.
    Left { site: u32 },
    /// Strand touches the right boundary on `site`.
    Right { site: u32 },
    /// Strand ends at the vertex operator in slot `position` (1-based) on
    /// `site`; `after` distinguishes the strand leaving the operator from the
    /// one arriving at it.
    VertexOp { position: u32, site: u32, after: bool },
}

/// One loop: its canonical label (the smallest segment index in the class),
/// its kind, and its endpoints (empty for closed loops, two otherwise).
#[derive(Clone, Debug)]
pub struct LoopInfo {
    pub label: u32,
    pub kind: LoopKind,
    pub endpoints: Vec<Endpoint>,
}

/// Full decomposition of a configuration into loops. Deterministic: the same
/// input always produces identical labels, so decompositions compare
/// bit-exactly across runs.
#[derive(Clone, Debug)]
pub struct LoopDecomposition {
    n_sites: usize,
    seq_len: usize,
    /// Event positions (1-based slot indices) per site, ascending.
    site_events: Vec<Vec<u32>>,
    /// CSR offsets: segments of site `s` occupy `seg_offset[s]..seg_offset[s+1]`.
    seg_offset: Vec<usize>,
    /// Canonical loop label per segment.
    seg_loop: Vec<u32>,
    loops: Vec<LoopInfo>,
}

fn check_sites(n_sites: usize, config: &Configuration) {
    for s in config.slots() {
        let ok = match *s {
            SlotKind::AfmBridge { i, j } | SlotKind::FmBridge { i, j } => {
                (i as usize) < n_sites && (j as usize) < n_sites && i != j
            }
            SlotKind::Vertex { site } => (site as usize) < n_sites,
        };
        assert!(ok, "slot {s} does not fit a model with {n_sites} sites");
    }
}

/// Loop count only, skipping label and endpoint bookkeeping. Agrees exactly
/// with [`decompose`]; the Markov chain calls this on every proposal.
pub fn loop_count(n_sites: usize, config: &Configuration) -> usize {
    check_sites(n_sites, config);
    let mut event_count = vec![0u32; n_sites];
    for s in config.slots() {
        match *s {
            SlotKind::AfmBridge { i, j } | SlotKind::FmBridge { i, j } => {
                event_count[i as usize] += 1;
                event_count[j as usize] += 1;
            }
            SlotKind::Vertex { site } => event_count[site as usize] += 1,
        }
    }
    let mut seg_offset = vec![0usize; n_sites + 1];
    for s in 0..n_sites {
        seg_offset[s + 1] = seg_offset[s] + event_count[s] as usize + 1;
    }
    let n_segments = seg_offset[n_sites];
    let mut uf = UnionFind::new(n_segments);
    let mut merges = 0usize;
    let mut cursor = vec![0u32; n_sites];
    for s in config.slots() {
        match *s {
            SlotKind::AfmBridge { i, j } => {
                let (i, j) = (i as usize, j as usize);
                let bi = (seg_offset[i] + cursor[i] as usize) as u32;
                let bj = (seg_offset[j] + cursor[j] as usize) as u32;
                merges += uf.union(bi, bj) as usize;
                merges += uf.union(bi + 1, bj + 1) as usize;
                cursor[i] += 1;
                cursor[j] += 1;
            }
            SlotKind::FmBridge { i, j } => {
                let (i, j) = (i as usize, j as usize);
                let bi = (seg_offset[i] + cursor[i] as usize) as u32;
                let bj = (seg_offset[j] + cursor[j] as usize) as u32;
                merges += uf.union(bi, bj + 1) as usize;
                merges += uf.union(bj, bi + 1) as usize;
                cursor[i] += 1;
                cursor[j] += 1;
            }
            SlotKind::Vertex { site } => cursor[site as usize] += 1,
        }
    }
    n_segments - merges
}

/// Decomposes a configuration into loops.
pub fn decompose(n_sites: usize, config: &Configuration) -> LoopDecomposition {
    check_sites(n_sites, config);
    let seq_len = config.len();
    let mut site_events: Vec<Vec<u32>> = vec![Vec::new(); n_sites];
    for (idx, s) in config.slots().iter().enumerate() {
        let t = (idx + 1) as u32;
        match *s {
            SlotKind::AfmBridge { i, j } | SlotKind::FmBridge { i, j } => {
                site_events[i as usize].push(t);
                site_events[j as usize].push(t);
            }
            SlotKind::Vertex { site } => site_events[site as usize].push(t),
        }
    }
    let mut seg_offset = vec![0usize; n_sites + 1];
    for s in 0..n_sites {
        seg_offset[s + 1] = seg_offset[s] + site_events[s].len() + 1;
    }
    let n_segments = seg_offset[n_sites];
    let mut uf = UnionFind::new(n_segments);
    let mut cursor = vec![0u32; n_sites];
    let mut vertex_events: Vec<(u32, u32, u32)> = Vec::new(); // (position, site, below segment)
    for (idx, s) in config.slots().iter().enumerate() {
        let t = (idx + 1) as u32;
        match *s {
            SlotKind::AfmBridge { i, j } => {
                let (i, j) = (i as usize, j as usize);
                let bi = (seg_offset[i] + cursor[i] as usize) as u32;
                let bj = (seg_offset[j] + cursor[j] as usize) as u32;
                uf.union(bi, bj);
                uf.union(bi + 1, bj + 1);
                cursor[i] += 1;
                cursor[j] += 1;
            }
            SlotKind::FmBridge { i, j } => {
                let (i, j) = (i as usize, j as usize);
                let bi = (seg_offset[i] + cursor[i] as usize) as u32;
                let bj = (seg_offset[j] + cursor[j] as usize) as u32;
                uf.union(bi, bj + 1);
                uf.union(bj, bi + 1);
                cursor[i] += 1;
                cursor[j] += 1;
            }
            SlotKind::Vertex { site } => {
                let s = site as usize;
                let below = (seg_offset[s] + cursor[s] as usize) as u32;
                vertex_events.push((t, site, below));
                cursor[s] += 1;
            }
        }
    }

    // Canonical labels: smallest segment index in each class.
    let mut min_of_root = vec![u32::MAX; n_segments];
    for seg in 0..n_segments as u32 {
        let r = uf.find(seg) as usize;
        if seg < min_of_root[r] {
            min_of_root[r] = seg;
        }
    }
    let mut seg_loop = vec![0u32; n_segments];
    for seg in 0..n_segments as u32 {
        seg_loop[seg as usize] = min_of_root[uf.find(seg) as usize];
    }

    // Collect endpoints onto their loops.
    let label_index = |label: u32, labels: &[u32]| labels.binary_search(&label).unwrap();
    let mut labels: Vec<u32> = (0..n_segments as u32)
        .filter(|&s| seg_loop[s as usize] == s)
        .collect();
    labels.sort_unstable();
    let mut endpoints: Vec<Vec<Endpoint>> = vec![Vec::new(); labels.len()];
    for site in 0..n_sites {
        let first = seg_offset[site] as u32;
        let last = (seg_offset[site + 1] - 1) as u32;
        endpoints[label_index(seg_loop[first as usize], &labels)].push(Endpoint::Left {
            site: site as u32,
        });
        endpoints[label_index(seg_loop[last as usize], &labels)].push(Endpoint::Right {
            site: site as u32,
        });
    }
    for &(position, site, below) in &vertex_events {
        endpoints[label_index(seg_loop[below as usize], &labels)].push(Endpoint::VertexOp {
            position,
            site,
            after: false,
        });
        endpoints[label_index(seg_loop[below as usize + 1], &labels)].push(Endpoint::VertexOp {
            position,
            site,
            after: true,
        });
    }
    let loops: Vec<LoopInfo> = labels
        .iter()
        .zip(endpoints)
        .map(|(&label, endpoints)| {
            let kind = if endpoints.is_empty() {
                LoopKind::Closed
            } else if endpoints
                .iter()
                .any(|e| matches!(e, Endpoint::VertexOp { .. }))
            {
                LoopKind::OpenVertex
            } else {
                LoopKind::OpenBoundary
            };
            debug_assert!(endpoints.is_empty() || endpoints.len() == 2);
            LoopInfo {
                label,
                kind,
                endpoints,
            }
        })
        .collect();

    LoopDecomposition {
        n_sites,
        seq_len,
        site_events,
        seg_offset,
        seg_loop,
        loops,
    }
}

impl LoopDecomposition {
    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    pub fn loops(&self) -> &[LoopInfo] {
        &self.loops
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Label of the loop owning the segment of `site` that spans the cut
    /// between slots `t` and `t + 1` (`t = 0` is before the first slot).
    pub fn loop_at_cut(&self, site: usize, t: usize) -> u32 {
        assert!(t <= self.seq_len, "cut {t} out of range");
        let k = self.site_events[site].partition_point(|&e| e as usize <= t);
        self.seg_loop[self.seg_offset[site] + k]
    }

    /// Number of distinct loops crossing the spatial cut between slots `t`
    /// and `t + 1`: the distinct labels among the `N` segments that span it.
    pub fn crossing_count(&self, t: usize) -> usize {
        let mut labels: Vec<u32> = (0..self.n_sites).map(|s| self.loop_at_cut(s, t)).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }
}

/// Loop count and log-weight `L ln(alpha) + sum_k ln T(x_k)` of a
/// configuration. All slots must belong to the alphabet.
pub fn log_weight(alphabet: &Alphabet, config: &Configuration, alpha: f64) -> (usize, f64) {
    assert!(alpha > 0.0, "alpha must be positive");
    let l = loop_count(alphabet.n_sites(), config);
    let mut sum = 0.0;
    for s in config.slots() {
        sum += alphabet
            .ln_weight_of(*s)
            .unwrap_or_else(|| panic!("slot {s} not in alphabet"));
    }
    (l, l as f64 * alpha.ln() + sum)
}

/// Metropolis ratio `alpha^{L' - L} * T(new) / T(old)` for replacing slot
/// `position` by `new_slot`, computed by recounting both configurations.
pub fn weight_ratio(
    alphabet: &Alphabet,
    config: &Configuration,
    position: usize,
    new_slot: SlotKind,
    alpha: f64,
) -> f64 {
    assert!(position < config.len(), "position out of range");
    let old_slot = config.slot(position);
    if old_slot == new_slot {
        return 1.0;
    }
    let t_old = alphabet
        .weight_of(old_slot)
        .unwrap_or_else(|| panic!("slot {old_slot} not in alphabet"));
    let t_new = alphabet
        .weight_of(new_slot)
        .unwrap_or_else(|| panic!("slot {new_slot} not in alphabet"));
    let l_old = loop_count(alphabet.n_sites(), config) as i32;
    let l_new = loop_count(alphabet.n_sites(), &config.with_slot(position, new_slot)) as i32;
    alpha.powi(l_new - l_old) * t_new / t_old
}
