//! Labeled finite-dimensional state algebra: composite bases, product states,
//! unitaries, diagonal questions, and Born probabilities.
//!
//! A [`SubsystemLayout`] fixes an ordered list of named subsystems; basis
//! configurations are indexed row-major in layout order (first subsystem most
//! significant) and every amplitude vector in the crate shares that indexing.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Norm tolerance for accepting state vectors and local factors.
pub const NORM_TOL: f64 = 1e-10;
/// Tolerance for the unitarity check on dense matrices.
pub const UNITARY_TOL: f64 = 1e-10;

/// One named subsystem: a dimension and one label per basis index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    pub name: String,
    pub dim: usize,
    pub labels: Vec<String>,
}

impl Subsystem {
    pub fn new(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        Subsystem {
            name: name.into(),
            dim: labels.len(),
            labels,
        }
    }
}

/// Ordered list of subsystems indexing the composite space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemLayout {
    subsystems: Vec<Subsystem>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl SubsystemLayout {
    /// Compose a layout from subsystem specs, fixing row-major configuration
    /// indexing and the total dimension.
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::EmptyLayout);
        }
        for (i, sub) in subsystems.iter().enumerate() {
            if sub.dim < 2 {
                return Err(Error::DimensionTooSmall {
                    name: sub.name.clone(),
                    dim: sub.dim,
                });
            }
            if sub.labels.len() != sub.dim {
                return Err(Error::LabelCountMismatch {
                    name: sub.name.clone(),
                    dim: sub.dim,
                    labels: sub.labels.len(),
                });
            }
            if subsystems[..i].iter().any(|s| s.name == sub.name) {
                return Err(Error::DuplicateSubsystem(sub.name.clone()));
            }
            for (j, label) in sub.labels.iter().enumerate() {
                if sub.labels[..j].contains(label) {
                    return Err(Error::DuplicateLabel {
                        name: sub.name.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
        let mut total_dim = 1usize;
        for sub in &subsystems {
            total_dim = total_dim
                .checked_mul(sub.dim)
                .filter(|&d| d <= 1 << 24)
                .ok_or_else(|| {
                    Error::InvalidParameter("composite dimension too large".into())
                })?;
        }
        // strides[i] = product of dimensions after subsystem i
        let mut strides = vec![1usize; subsystems.len()];
        for i in (0..subsystems.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * subsystems[i + 1].dim;
        }
        Ok(SubsystemLayout {
            subsystems,
            strides,
            total_dim,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn n_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn subsystem(&self, idx: usize) -> &Subsystem {
        &self.subsystems[idx]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| Error::UnknownSubsystem(name.to_string()))
    }

    /// Index of `label` within subsystem `sub`.
    pub fn label_index(&self, sub: usize, label: &str) -> Result<usize> {
        let s = &self.subsystems[sub];
        s.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel {
                subsystem: s.name.clone(),
                label: label.to_string(),
            })
    }

    /// Flat row-major index of a configuration.
    pub fn flat_index(&self, config: &Configuration) -> usize {
        debug_assert_eq!(config.0.len(), self.subsystems.len());
        config
            .0
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Configuration of a flat index.
    pub fn config_of(&self, mut flat: usize) -> Configuration {
        let mut indices = vec![0usize; self.subsystems.len()];
        for (i, s) in self.strides.iter().enumerate() {
            indices[i] = flat / s;
            flat %= s;
        }
        Configuration(indices)
    }

    /// Component of the flat index belonging to subsystem `sub`.
    pub fn component(&self, flat: usize, sub: usize) -> usize {
        (flat / self.strides[sub]) % self.subsystems[sub].dim
    }

    pub fn configurations(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.total_dim).map(|f| self.config_of(f))
    }

    /// Render a configuration as its space-separated labels.
    pub fn format_config(&self, config: &Configuration) -> String {
        config
            .0
            .iter()
            .zip(&self.subsystems)
            .map(|(&c, s)| s.labels[c].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn check_same(a: &Arc<SubsystemLayout>, b: &Arc<SubsystemLayout>) -> Result<()> {
        if Arc::ptr_eq(a, b) || **a == **b {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }
}

/// One basis index per subsystem, in layout order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration(pub Vec<usize>);

/// Dense unit-norm complex amplitude vector over a layout's configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: Arc<SubsystemLayout>,
    amps: Vec<C64>,
}

impl PureState {
    /// Wrap an amplitude vector, rejecting non-normalized input.
    pub fn new(layout: Arc<SubsystemLayout>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                got: amps.len(),
            });
        }
        let norm = l2_norm(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(PureState { layout, amps })
    }

    /// Tensor product of per-subsystem local vectors, each of which must
    /// already be unit norm.
    pub fn product(layout: &Arc<SubsystemLayout>, locals: &[Vec<C64>]) -> Result<Self> {
        if locals.len() != layout.n_subsystems() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_subsystems(),
                got: locals.len(),
            });
        }
        for (local, sub) in locals.iter().zip(layout.subsystems()) {
            if local.len() != sub.dim {
                return Err(Error::DimensionMismatch {
                    expected: sub.dim,
                    got: local.len(),
                });
            }
            let norm = l2_norm(local);
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized { norm });
            }
        }
        let mut amps = vec![C64::new(1.0, 0.0)];
        for local in locals {
            let mut next = Vec::with_capacity(amps.len() * local.len());
            for a in &amps {
                for l in local {
                    next.push(a * l);
                }
            }
            amps = next;
        }
        Ok(PureState {
            layout: Arc::clone(layout),
            amps,
        })
    }

    /// Basis state with amplitude 1 at `config`.
    pub fn basis(layout: &Arc<SubsystemLayout>, config: &Configuration) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); layout.total_dim()];
        amps[layout.flat_index(config)] = C64::new(1.0, 0.0);
        PureState {
            layout: Arc::clone(layout),
            amps,
        }
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, config: &Configuration) -> C64 {
        self.amps[self.layout.flat_index(config)]
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amps)
    }

    /// Probability of `question` under the Born rule: the summed squared
    /// moduli over configurations the question accepts.
    pub fn born_probability(&self, question: &Question) -> Result<f64> {
        SubsystemLayout::check_same(&self.layout, &question.layout)?;
        let mut p = 0.0;
        for (f, a) in self.amps.iter().enumerate() {
            if question.matches_flat(&self.layout, f) {
                p += a.norm_sqr();
            }
        }
        Ok(p)
    }

    /// Euclidean norm of the amplitude difference.
    pub fn distance(&self, other: &PureState) -> Result<f64> {
        SubsystemLayout::check_same(&self.layout, &other.layout)?;
        let d: f64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok(d.sqrt())
    }
}

fn l2_norm(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// A diagonal predicate over configurations: per subsystem, an allowed set of
/// basis indices (`None` leaves the subsystem unconstrained).
#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    layout: Arc<SubsystemLayout>,
    allowed: Vec<Option<Vec<bool>>>,
}

impl Question {
    /// The trivial question that accepts every configuration.
    pub fn always_true(layout: &Arc<SubsystemLayout>) -> Self {
        Question {
            layout: Arc::clone(layout),
            allowed: vec![None; layout.n_subsystems()],
        }
    }

    /// Build a question from `(subsystem, allowed labels)` constraints.
    pub fn new(layout: &Arc<SubsystemLayout>, constraints: &[(&str, &[&str])]) -> Result<Self> {
        let mut q = Question::always_true(layout);
        for (name, labels) in constraints {
            let sub = layout.require(name)?;
            let mut mask = vec![false; layout.subsystem(sub).dim];
            for label in *labels {
                mask[layout.label_index(sub, label)?] = true;
            }
            q.allowed[sub] = match q.allowed[sub].take() {
                None => Some(mask),
                Some(prev) => Some(prev.iter().zip(&mask).map(|(a, b)| a & b).collect()),
            };
        }
        Ok(q)
    }

    /// The single-constraint question `subsystem = label`.
    pub fn outcome(layout: &Arc<SubsystemLayout>, subsystem: &str, label: &str) -> Result<Self> {
        Question::new(layout, &[(subsystem, &[label])])
    }

    /// Conjunction of two questions over the same layout.
    pub fn and(&self, other: &Question) -> Result<Question> {
        SubsystemLayout::check_same(&self.layout, &other.layout)?;
        let allowed = self
            .allowed
            .iter()
            .zip(&other.allowed)
            .map(|(a, b)| match (a, b) {
                (None, None) => None,
                (Some(m), None) | (None, Some(m)) => Some(m.clone()),
                (Some(m), Some(n)) => Some(m.iter().zip(n).map(|(x, y)| x & y).collect()),
            })
            .collect();
        Ok(Question {
            layout: Arc::clone(&self.layout),
            allowed,
        })
    }

    pub fn matches(&self, config: &Configuration) -> bool {
        config.0.iter().zip(&self.allowed).all(|(&c, mask)| match mask {
            None => true,
            Some(m) => m[c],
        })
    }

    /// Whether the configuration at `flat` (in this question's layout) is
    /// accepted.
    pub fn matches_index(&self, flat: usize) -> bool {
        self.matches_flat(&self.layout, flat)
    }

    fn matches_flat(&self, layout: &SubsystemLayout, flat: usize) -> bool {
        self.allowed.iter().enumerate().all(|(sub, mask)| match mask {
            None => true,
            Some(m) => m[layout.component(flat, sub)],
        })
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }
}

/// Unitary map over a layout's amplitude vectors.
///
/// Permutations are stored as exact index bijections and applied in O(dim)
/// without arithmetic; dense matrices act on a declared subset of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMap {
    layout: Arc<SubsystemLayout>,
    repr: UnitaryRepr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitaryRepr {
    /// `map[src] = dst` over flat configuration indices.
    Permutation(Vec<usize>),
    /// Row-major `k x k` matrix over the product of the target subsystems'
    /// dimensions, in target order.
    Dense {
        targets: Vec<usize>,
        matrix: Vec<C64>,
    },
}

impl UnitaryMap {
    pub fn identity(layout: &Arc<SubsystemLayout>) -> Self {
        UnitaryMap {
            layout: Arc::clone(layout),
            repr: UnitaryRepr::Permutation((0..layout.total_dim()).collect()),
        }
    }

    /// Permutation unitary from an explicit flat-index bijection.
    pub fn permutation(layout: &Arc<SubsystemLayout>, map: Vec<usize>) -> Result<Self> {
        if map.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                got: map.len(),
            });
        }
        let mut seen = vec![false; map.len()];
        for &dst in &map {
            if dst >= map.len() || seen[dst] {
                return Err(Error::NotBijection);
            }
            seen[dst] = true;
        }
        Ok(UnitaryMap {
            layout: Arc::clone(layout),
            repr: UnitaryRepr::Permutation(map),
        })
    }

    /// Permutation unitary defined by rewriting configurations in place.
    pub fn permutation_from_fn(
        layout: &Arc<SubsystemLayout>,
        f: impl Fn(&mut [usize]),
    ) -> Result<Self> {
        let map = (0..layout.total_dim())
            .map(|src| {
                let mut cfg = layout.config_of(src);
                f(&mut cfg.0);
                layout.flat_index(&cfg)
            })
            .collect();
        UnitaryMap::permutation(layout, map)
    }

    /// Dense unitary on the named target subsystems; the matrix is row-major
    /// over the product of target dimensions in the given order.
    pub fn dense(
        layout: &Arc<SubsystemLayout>,
        target_names: &[&str],
        matrix: Vec<C64>,
    ) -> Result<Self> {
        if target_names.is_empty() {
            return Err(Error::InvalidParameter("dense unitary needs targets".into()));
        }
        let mut targets = Vec::with_capacity(target_names.len());
        for name in target_names {
            let idx = layout.require(name)?;
            if targets.contains(&idx) {
                return Err(Error::DuplicateSubsystem((*name).to_string()));
            }
            targets.push(idx);
        }
        let k: usize = targets.iter().map(|&t| layout.subsystem(t).dim).product();
        if matrix.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: matrix.len(),
            });
        }
        // U U† = I
        let mut deviation = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let mut dot = C64::new(0.0, 0.0);
                for l in 0..k {
                    dot += matrix[i * k + l] * matrix[j * k + l].conj();
                }
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((dot - target).norm());
            }
        }
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(UnitaryMap {
            layout: Arc::clone(layout),
            repr: UnitaryRepr::Dense { targets, matrix },
        })
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }

    pub fn repr(&self) -> &UnitaryRepr {
        &self.repr
    }

    pub fn is_permutation(&self) -> bool {
        matches!(self.repr, UnitaryRepr::Permutation(_))
    }

    /// Image of a configuration under a permutation unitary.
    pub fn map_config(&self, config: &Configuration) -> Result<Configuration> {
        match &self.repr {
            UnitaryRepr::Permutation(map) => {
                let dst = map[self.layout.flat_index(config)];
                Ok(self.layout.config_of(dst))
            }
            UnitaryRepr::Dense { .. } => Err(Error::NotPermutation),
        }
    }

    /// Inverse map: composition with the original is the identity.
    pub fn adjoint(&self) -> UnitaryMap {
        let repr = match &self.repr {
            UnitaryRepr::Permutation(map) => {
                let mut inv = vec![0usize; map.len()];
                for (src, &dst) in map.iter().enumerate() {
                    inv[dst] = src;
                }
                UnitaryRepr::Permutation(inv)
            }
            UnitaryRepr::Dense { targets, matrix } => {
                let k = (matrix.len() as f64).sqrt().round() as usize;
                let mut adj = vec![C64::new(0.0, 0.0); matrix.len()];
                for i in 0..k {
                    for j in 0..k {
                        adj[j * k + i] = matrix[i * k + j].conj();
                    }
                }
                UnitaryRepr::Dense {
                    targets: targets.clone(),
                    matrix: adj,
                }
            }
        };
        UnitaryMap {
            layout: Arc::clone(&self.layout),
            repr,
        }
    }

    /// Apply to a state, producing a new state of the same norm.
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        SubsystemLayout::check_same(&self.layout, &state.layout)?;
        let amps = self.apply_amps(&state.amps)?;
        Ok(PureState {
            layout: Arc::clone(&state.layout),
            amps,
        })
    }

    /// Apply to a raw amplitude vector over this layout; the input need not
    /// be normalized (branch vectors, for instance).
    pub fn apply_amps(&self, amps: &[C64]) -> Result<Vec<C64>> {
        if amps.len() != self.layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.total_dim(),
                got: amps.len(),
            });
        }
        let out = match &self.repr {
            UnitaryRepr::Permutation(map) => {
                let mut out = vec![C64::new(0.0, 0.0); amps.len()];
                for (src, &dst) in map.iter().enumerate() {
                    out[dst] = amps[src];
                }
                out
            }
            UnitaryRepr::Dense { targets, matrix } => {
                let layout = &self.layout;
                let k: usize = targets.iter().map(|&t| layout.subsystem(t).dim).product();
                // offset into the flat index for each target-space index
                let mut offsets = vec![0usize; k];
                for (t, offset) in offsets.iter_mut().enumerate() {
                    let mut rem = t;
                    for &sub in targets.iter().rev() {
                        let dim = layout.subsystem(sub).dim;
                        *offset += (rem % dim) * layout.strides[sub];
                        rem /= dim;
                    }
                }
                let mut out = vec![C64::new(0.0, 0.0); amps.len()];
                for base in 0..layout.total_dim() {
                    // visit each fiber once, at its all-zero target element
                    if targets.iter().any(|&sub| layout.component(base, sub) != 0) {
                        continue;
                    }
                    for row in 0..k {
                        let mut acc = C64::new(0.0, 0.0);
                        for (col, &off) in offsets.iter().enumerate() {
                            acc += matrix[row * k + col] * amps[base + off];
                        }
                        out[base + offsets[row]] = acc;
                    }
                }
                out
            }
        };
        Ok(out)
    }

    /// Subsystems whose component this unitary can change: computed exactly
    /// for permutations, declared targets for dense maps.
    pub fn touched_subsystems(&self) -> Vec<usize> {
        match &self.repr {
            UnitaryRepr::Permutation(map) => {
                let n = self.layout.n_subsystems();
                let mut touched = vec![false; n];
                for (src, &dst) in map.iter().enumerate() {
                    if src != dst {
                        for (sub, hit) in touched.iter_mut().enumerate() {
                            if self.layout.component(src, sub) != self.layout.component(dst, sub) {
                                *hit = true;
                            }
                        }
                    }
                }
                (0..n).filter(|&s| touched[s]).collect()
            }
            UnitaryRepr::Dense { targets, .. } => {
                let mut t = targets.clone();
                t.sort_unstable();
                t
            }
        }
    }
}
