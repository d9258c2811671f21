//! Bipartite Heisenberg models and the operator alphabet of the loop
//! representation.
//!
//! The Hamiltonian acts on `N` spin-1/2 sites split into sublattices `A` and
//! `B`:
//!
//! - antiferromagnetic exchange `-w_ij h_ij` on edges crossing the partition,
//!   where `h_ij` projects onto the two-site singlet;
//! - ferromagnetic exchange on edges inside one sublattice;
//! - staggered transverse fields `-g_m (1 ± X_m)`, the sign fixed by the
//!   sublattice of `m`.
//!
//! Conjugating one sublattice by `Z` makes every term stoquastic, and each
//! term splits into a pair of 0/1-matrix-element operators (identity/swap on
//! the antialigned subspace for AFM bonds, their aligned counterparts for FM
//! bonds, identity/spin-flip for fields). The loop representation works with
//! one *slot* per term carrying the pair; [`Alphabet`] lists the slots and
//! their weights `T`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Which side of the bipartition a site belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    fn flipped(self) -> Self {
        match self {
            Sublattice::A => Sublattice::B,
            Sublattice::B => Sublattice::A,
        }
    }
}

/// On-disk model description. Site indices are 0-based; unknown keys are
/// rejected so typos surface as parse errors rather than silent defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_sites: usize,
    pub sublattice: Vec<Sublattice>,
    pub afm_edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub fm_edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub fields: Vec<f64>,
}

/// A bipartite Heisenberg model. Immutable once built; construction silently
/// relabels the sublattices so that `|A| <= |B|` and remembers whether it did
/// so, letting reports echo the caller's original labels.
#[derive(Clone, Debug)]
pub struct BipartiteModel {
    n_sites: usize,
    sublattice: Vec<Sublattice>,
    relabeled: bool,
    afm_edges: Vec<(usize, usize, f64)>,
    fm_edges: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
}

/// A defect found by [`BipartiteModel::validate`]. Violations are data, not
/// errors: callers decide whether to abort.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    SublatticeLength { expected: usize, got: usize },
    FieldsLength { expected: usize, got: usize },
    SiteOutOfRange { site: usize },
    EdgeSelfLoop { site: usize },
    /// An AFM edge inside one sublattice: no proper 2-coloring matches the
    /// declared labels (odd cycles always trip this).
    AfmEdgeWithinSublattice { i: usize, j: usize },
    FmEdgeAcrossSublattices { i: usize, j: usize },
    NonPositiveWeight { i: usize, j: usize, weight: f64 },
    NegativeField { site: usize, field: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SublatticeLength { expected, got } => {
                write!(f, "sublattice array has length {got}, expected {expected}")
            }
            Violation::FieldsLength { expected, got } => {
                write!(f, "fields array has length {got}, expected {expected}")
            }
            Violation::SiteOutOfRange { site } => write!(f, "site index {site} out of range"),
            Violation::EdgeSelfLoop { site } => write!(f, "edge joins site {site} to itself"),
            Violation::AfmEdgeWithinSublattice { i, j } => write!(
                f,
                "AFM edge ({i}, {j}) stays within one sublattice; the declared labels admit no proper 2-coloring"
            ),
            Violation::FmEdgeAcrossSublattices { i, j } => {
                write!(f, "FM edge ({i}, {j}) crosses the bipartition")
            }
            Violation::NonPositiveWeight { i, j, weight } => {
                write!(f, "edge ({i}, {j}) has non-positive weight {weight}")
            }
            Violation::NegativeField { site, field } => {
                write!(f, "site {site} has negative field {field}")
            }
        }
    }
}

/// Errors from operations that need a valid model or a usable alphabet.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is invalid: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),
    #[error("operator alphabet is empty; the chain is undefined")]
    EmptyAlphabet,
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    DeltaOutOfRange(f64),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl BipartiteModel {
    pub fn new(
        n_sites: usize,
        sublattice: Vec<Sublattice>,
        afm_edges: Vec<(usize, usize, f64)>,
        fm_edges: Vec<(usize, usize, f64)>,
        fields: Vec<f64>,
    ) -> Self {
        let mut model = BipartiteModel {
            n_sites,
            sublattice,
            relabeled: false,
            afm_edges,
            fm_edges,
            fields,
        };
        if model.sublattice.len() == n_sites {
            let n_a = model
                .sublattice
                .iter()
                .filter(|s| **s == Sublattice::A)
                .count();
            if n_a * 2 > n_sites {
                for s in &mut model.sublattice {
                    *s = s.flipped();
                }
                model.relabeled = true;
            }
        }
        model
    }

    pub fn from_file(file: ModelFile) -> Self {
        let fields = if file.fields.is_empty() {
            vec![0.0; file.n_sites]
        } else {
            file.fields
        };
        Self::new(
            file.n_sites,
            file.sublattice,
            file.afm_edges,
            file.fm_edges,
            fields,
        )
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Internal label (normalized so `|A| <= |B|`).
    pub fn sublattice(&self, site: usize) -> Sublattice {
        self.sublattice[site]
    }

    /// The label the caller originally declared for `site`.
    pub fn original_sublattice(&self, site: usize) -> Sublattice {
        if self.relabeled {
            self.sublattice[site].flipped()
        } else {
            self.sublattice[site]
        }
    }

    pub fn relabeled(&self) -> bool {
        self.relabeled
    }

    pub fn afm_edges(&self) -> &[(usize, usize, f64)] {
        &self.afm_edges
    }

    pub fn fm_edges(&self) -> &[(usize, usize, f64)] {
        &self.fm_edges
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// Size of the smaller sublattice (after normalization).
    pub fn n_small(&self) -> usize {
        self.sublattice
            .iter()
            .filter(|s| **s == Sublattice::A)
            .count()
    }

    pub fn n_large(&self) -> usize {
        self.n_sites - self.n_small()
    }

    /// Reports every defect. An empty list means the declared sublattices
    /// form a proper 2-coloring of the AFM edges, FM edges stay inside one
    /// side, weights are positive, and fields are non-negative.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.sublattice.len() != self.n_sites {
            out.push(Violation::SublatticeLength {
                expected: self.n_sites,
                got: self.sublattice.len(),
            });
        }
        if self.fields.len() != self.n_sites {
            out.push(Violation::FieldsLength {
                expected: self.n_sites,
                got: self.fields.len(),
            });
        }
        let side = |site: usize| self.sublattice.get(site).copied();
        for &(i, j, w) in &self.afm_edges {
            if i >= self.n_sites {
                out.push(Violation::SiteOutOfRange { site: i });
                continue;
            }
            if j >= self.n_sites {
                out.push(Violation::SiteOutOfRange { site: j });
                continue;
            }
            if i == j {
                out.push(Violation::EdgeSelfLoop { site: i });
                continue;
            }
            if let (Some(a), Some(b)) = (side(i), side(j)) {
                if a == b {
                    out.push(Violation::AfmEdgeWithinSublattice { i, j });
                }
            }
            if !(w > 0.0) || !w.is_finite() {
                out.push(Violation::NonPositiveWeight { i, j, weight: w });
            }
        }
        for &(i, j, v) in &self.fm_edges {
            if i >= self.n_sites {
                out.push(Violation::SiteOutOfRange { site: i });
                continue;
            }
            if j >= self.n_sites {
                out.push(Violation::SiteOutOfRange { site: j });
                continue;
            }
            if i == j {
                out.push(Violation::EdgeSelfLoop { site: i });
                continue;
            }
            if let (Some(a), Some(b)) = (side(i), side(j)) {
                if a != b {
                    out.push(Violation::FmEdgeAcrossSublattices { i, j });
                }
            }
            if !(v > 0.0) || !v.is_finite() {
                out.push(Violation::NonPositiveWeight { i, j, weight: v });
            }
        }
        for (site, &g) in self.fields.iter().enumerate() {
            if !(g >= 0.0) || !g.is_finite() {
                out.push(Violation::NegativeField { site, field: g });
            }
        }
        out
    }

    fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidModel(v))
        }
    }

    /// Triangle-inequality bound on the operator norm of `H`:
    /// `sum w + sum v + 2 sum g`. Each AFM/FM pair sum has norm at most its
    /// coupling and each field term `g (1 ± X)` has norm `2g`, so this always
    /// dominates `||H||` while staying O(model size) to evaluate.
    pub fn norm_bound(&self) -> f64 {
        let w: f64 = self.afm_edges.iter().map(|e| e.2).sum();
        let v: f64 = self.fm_edges.iter().map(|e| e.2).sum();
        let g: f64 = self.fields.iter().sum();
        w + v + 2.0 * g
    }

    /// Smallest expansion order `B` for which the projected state
    /// `(-H)^B |+^N>` keeps all but `delta` of its weight within `epsilon` of
    /// the ground energy, using the `||H||` upper bound [`Self::norm_bound`]
    /// and the worst-case trial-state overlap `2^{-N}`:
    ///
    /// `B = ceil( (||H|| / 2 eps) * (N + ln 1/(delta 2^{-N})) )`, floored at 1.
    pub fn required_b(&self, epsilon: f64, delta: f64) -> Result<u64, ModelError> {
        if !(epsilon > 0.0) {
            return Err(ModelError::NonPositiveEpsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ModelError::DeltaOutOfRange(delta));
        }
        self.ensure_valid()?;
        let n = self.n_sites as f64;
        let norm = self.norm_bound();
        let b = (norm / (2.0 * epsilon)) * (n + (1.0 / delta).ln() + n * std::f64::consts::LN_2);
        Ok((b.ceil() as u64).max(1))
    }
}

/// One entry of the operator alphabet.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum SlotKind {
    /// AFM bond: both strands U-turn at the operator.
    AfmBridge { i: u32, j: u32 },
    /// FM bond: strands pass through and swap sites.
    FmBridge { i: u32, j: u32 },
    /// Field insertion: terminates one strand and starts another.
    Vertex { site: u32 },
}

impl SlotKind {
    pub fn afm(i: usize, j: usize) -> Self {
        SlotKind::AfmBridge {
            i: i as u32,
            j: j as u32,
        }
    }

    pub fn fm(i: usize, j: usize) -> Self {
        SlotKind::FmBridge {
            i: i as u32,
            j: j as u32,
        }
    }

    pub fn vertex(site: usize) -> Self {
        SlotKind::Vertex { site: site as u32 }
    }
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotKind::AfmBridge { i, j } => write!(f, "A:{i}-{j}"),
            SlotKind::FmBridge { i, j } => write!(f, "F:{i}-{j}"),
            SlotKind::Vertex { site } => write!(f, "V:{site}"),
        }
    }
}

/// A slot together with its weight `T` in the configuration measure.
#[derive(Clone, Copy, Debug)]
pub struct OperatorSlot {
    pub kind: SlotKind,
    pub weight: f64,
    pub ln_weight: f64,
}

/// The ordered operator alphabet of a model: AFM edges in declaration order,
/// then FM edges, then one vertex slot per site with a positive field.
///
/// Weights: `T = w` for AFM, `T = v` for FM, and `T = 2g` for vertex slots.
/// The factor 2 keeps the configuration measure `alpha^L prod T` exactly
/// proportional to the expansion of `<+|(-H)^{2B}|+>`: every bridge pair sum
/// enters `-H` as `T/2 * (pair)` and a field term as `g (1 + X) = T/2 * (1, X
/// pair)`, so one global `2^{-2B}` covers all slot types uniformly.
#[derive(Clone, Debug)]
pub struct Alphabet {
    n_sites: usize,
    slots: Vec<OperatorSlot>,
    index: HashMap<SlotKind, u32>,
}

impl Alphabet {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, id: usize) -> &OperatorSlot {
        &self.slots[id]
    }

    pub fn slots(&self) -> &[OperatorSlot] {
        &self.slots
    }

    pub fn id_of(&self, kind: SlotKind) -> Option<u32> {
        self.index.get(&kind).copied()
    }

    /// Weight `T` of a slot kind; `None` for kinds outside the alphabet.
    pub fn weight_of(&self, kind: SlotKind) -> Option<f64> {
        self.id_of(kind).map(|id| self.slots[id as usize].weight)
    }

    pub fn ln_weight_of(&self, kind: SlotKind) -> Option<f64> {
        self.id_of(kind)
            .map(|id| self.slots[id as usize].ln_weight)
    }

    pub fn min_weight(&self) -> f64 {
        self.slots.iter().map(|s| s.weight).fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.slots.iter().map(|s| s.weight).fold(0.0, f64::max)
    }
}

/// Builds the operator alphabet of a valid model.
pub fn operator_alphabet(model: &BipartiteModel) -> Result<Alphabet, ModelError> {
    model.ensure_valid()?;
    let mut slots = Vec::new();
    for &(i, j, w) in model.afm_edges() {
        slots.push(OperatorSlot {
            kind: SlotKind::afm(i, j),
            weight: w,
            ln_weight: w.ln(),
        });
    }
    for &(i, j, v) in model.fm_edges() {
        slots.push(OperatorSlot {
            kind: SlotKind::fm(i, j),
            weight: v,
            ln_weight: v.ln(),
        });
    }
    for (site, &g) in model.fields().iter().enumerate() {
        if g > 0.0 {
            let t = 2.0 * g;
            slots.push(OperatorSlot {
                kind: SlotKind::vertex(site),
                weight: t,
                ln_weight: t.ln(),
            });
        }
    }
    if slots.is_empty() {
        return Err(ModelError::EmptyAlphabet);
    }
    let index = slots
        .iter()
        .enumerate()
        .map(|(k, s)| (s.kind, k as u32))
        .collect();
    Ok(Alphabet {
        n_sites: model.n_sites(),
        slots,
        index,
    })
}

/// Star graph: site 0 is the hub (sublattice A), sites `1..n` are leaves.
pub fn star_model(n_sites: usize, weight: f64) -> BipartiteModel {
    let mut sub = vec![Sublattice::B; n_sites];
    sub[0] = Sublattice::A;
    let edges = (1..n_sites).map(|leaf| (0, leaf, weight)).collect();
    BipartiteModel::new(n_sites, sub, edges, Vec::new(), vec![0.0; n_sites])
}

/// Path graph with alternating sublattices.
pub fn path_model(n_sites: usize, weight: f64) -> BipartiteModel {
    let sub = (0..n_sites)
        .map(|i| {
            if i % 2 == 0 {
                Sublattice::A
            } else {
                Sublattice::B
            }
        })
        .collect();
    let edges = (0..n_sites.saturating_sub(1))
        .map(|i| (i, i + 1, weight))
        .collect();
    BipartiteModel::new(n_sites, sub, edges, Vec::new(), vec![0.0; n_sites])
}

/// Even cycle with alternating sublattices; both sides have `n/2` sites.
pub fn cycle_model(n_sites: usize, weight: f64) -> BipartiteModel {
    assert!(n_sites >= 4 && n_sites % 2 == 0, "cycle needs even n >= 4");
    let sub = (0..n_sites)
        .map(|i| {
            if i % 2 == 0 {
                Sublattice::A
            } else {
                Sublattice::B
            }
        })
        .collect();
    let edges = (0..n_sites)
        .map(|i| (i, (i + 1) % n_sites, weight))
        .collect();
    BipartiteModel::new(n_sites, sub, edges, Vec::new(), vec![0.0; n_sites])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star3() -> BipartiteModel {
        star_model(3, 1.0)
    }

    #[test]
    fn star_is_valid() {
        assert!(star_model(4, 1.0).validate().is_empty());
    }

    #[test]
    fn triangle_is_flagged() {
        // Odd cycle: whatever labels are declared, some AFM edge is internal.
        let model = BipartiteModel::new(
            3,
            vec![Sublattice::A, Sublattice::B, Sublattice::A],
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
            vec![],
            vec![0.0; 3],
        );
        let violations = model.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::AfmEdgeWithinSublattice { .. })));
    }

    #[test]
    fn path_graph_is_valid() {
        assert!(path_model(4, 1.0).validate().is_empty());
    }

    #[test]
    fn cross_partition_fm_and_bad_weights() {
        let model = BipartiteModel::new(
            3,
            vec![Sublattice::A, Sublattice::B, Sublattice::B],
            vec![(0, 1, -1.0)],
            vec![(0, 2, 1.0)],
            vec![0.0, -0.5, 0.0],
        );
        let v = model.validate();
        assert!(v.iter().any(|x| matches!(x, Violation::NonPositiveWeight { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::FmEdgeAcrossSublattices { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NegativeField { .. })));
    }

    #[test]
    fn relabeling_normalizes_small_side() {
        let model = BipartiteModel::new(
            3,
            vec![Sublattice::A, Sublattice::A, Sublattice::B],
            vec![(0, 2, 1.0), (1, 2, 1.0)],
            vec![],
            vec![0.0; 3],
        );
        assert!(model.relabeled());
        assert_eq!(model.n_small(), 1);
        assert_eq!(model.sublattice(2), Sublattice::A);
        assert_eq!(model.original_sublattice(2), Sublattice::B);
        assert!(model.validate().is_empty());
    }

    #[test]
    fn alphabet_sizes() {
        assert_eq!(operator_alphabet(&star_model(4, 1.0)).unwrap().len(), 3);
        assert_eq!(operator_alphabet(&path_model(4, 1.0)).unwrap().len(), 3);

        let mut fields = vec![0.0; 3];
        fields[0] = 0.5;
        let with_field = BipartiteModel::new(
            3,
            vec![Sublattice::A, Sublattice::B, Sublattice::B],
            vec![(0, 1, 1.0), (0, 2, 1.0)],
            vec![],
            fields,
        );
        let alpha = operator_alphabet(&with_field).unwrap();
        assert_eq!(alpha.len(), 3);
        assert_eq!(alpha.weight_of(SlotKind::vertex(0)), Some(1.0)); // T = 2g
    }

    #[test]
    fn empty_alphabet_is_an_error() {
        let model = BipartiteModel::new(2, vec![Sublattice::A, Sublattice::B], vec![], vec![], vec![0.0; 2]);
        assert!(matches!(
            operator_alphabet(&model),
            Err(ModelError::EmptyAlphabet)
        ));
    }

    #[test]
    fn norm_bound_values() {
        let single = BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.0; 2],
        );
        assert_eq!(single.norm_bound(), 1.0);
        assert_eq!(star3().norm_bound(), 2.0);
        let fields = BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.25, 0.25],
        );
        assert_eq!(fields.norm_bound(), 2.0);
    }

    #[test]
    fn required_b_matches_hand_value() {
        // Single edge, eps = 0.1, delta = 0.1:
        // B = ceil(5 * (2 + ln 40)) = 29.
        let single = BipartiteModel::new(
            2,
            vec![Sublattice::A, Sublattice::B],
            vec![(0, 1, 1.0)],
            vec![],
            vec![0.0; 2],
        );
        assert_eq!(single.required_b(0.1, 0.1).unwrap(), 29);
        // Trivially loose precision still returns at least 1.
        assert!(single.required_b(single.norm_bound(), 0.9).unwrap() >= 1);
        assert!(single.required_b(-1.0, 0.1).is_err());
        assert!(single.required_b(0.1, 1.5).is_err());
    }

    #[test]
    fn required_b_monotonicity() {
        let m = star3();
        let b1 = m.required_b(0.05, 0.05).unwrap();
        let b2 = m.required_b(0.1, 0.05).unwrap();
        let b3 = m.required_b(0.2, 0.05).unwrap();
        assert!(b1 >= b2 && b2 >= b3);
        let larger = star_model(5, 1.0);
        assert!(larger.required_b(0.05, 0.05).unwrap() >= b1);
    }

    #[test]
    fn model_file_roundtrip_rejects_unknown_keys() {
        let good = r#"{
            "n_sites": 3,
            "sublattice": ["A", "B", "B"],
            "afm_edges": [[0, 1, 1.0], [0, 2, 1.0]]
        }"#;
        let parsed: ModelFile = serde_json::from_str(good).unwrap();
        let model = BipartiteModel::from_file(parsed);
        assert!(model.validate().is_empty());
        assert_eq!(model.fields().len(), 3);

        let bad = r#"{ "n_sites": 2, "sublattice": ["A", "B"], "afm_edges": [], "typo": 3 }"#;
        assert!(serde_json::from_str::<ModelFile>(bad).is_err());
    }
}
