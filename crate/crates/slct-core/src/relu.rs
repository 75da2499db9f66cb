//! Learning coefficients for three-layer ReLU networks.
//!
//! The model is `h₊(x) = A^(1) relu(A^(2) x + B^(2))` on a box input domain
//! with uniform input density. The analysis pipeline is:
//!
//! 1. enumerate the activation regions (hidden-unit sign patterns) that meet
//!    the box with positive volume, by LP feasibility with an interior slack;
//! 2. remove dead units — units active in no positive-volume region — which
//!    leaves the model function unchanged;
//! 3. group surviving units into connected components of the co-activation
//!    graph (units jointly active somewhere interact; groups never jointly
//!    active contribute independent coordinate blocks);
//! 4. per group, the threshold is the closed-form linear value
//!    `λ(H^(1)_i, H^(2)_i, H^(3)+1, r_i)` — the `+1` absorbs the bias column
//!    into the input — with `r_i` the rank of the group's true affine map;
//!    groups combine additively via [`combine_independent`].

use crate::lct::{combine_independent, Lct};
use crate::linear::{lambda_linear, LinearError};
use crate::lp::sign_pattern_interior;
pub use crate::lp::INTERIOR_SLACK;
use crate::rank::matrix_rank;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

/// Exhaustive sign-pattern enumeration is capped at this hidden width.
pub const MAX_ENUMERATION_WIDTH: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReluError {
    #[error(
        "hidden width {0} exceeds the sign-pattern enumeration cap of {MAX_ENUMERATION_WIDTH}"
    )]
    TooManyUnits(usize),
    #[error("matrix shapes disagree: A1 is {a1_rows}x{a1_cols}, A2 is {a2_rows}x{a2_cols}, B2 has {b2_len} entries")]
    ShapeMismatch {
        a1_rows: usize,
        a1_cols: usize,
        a2_rows: usize,
        a2_cols: usize,
        b2_len: usize,
    },
    #[error("network must have at least one output and one input dimension")]
    EmptyDimension,
    #[error("domain lower/upper bounds have different lengths ({lower} vs {upper})")]
    DomainLengthMismatch { lower: usize, upper: usize },
    #[error("domain must have positive volume: lower[{index}] = {lower} does not lie below upper[{index}] = {upper}")]
    DomainNotPositive {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("domain bounds must be finite")]
    DomainNotFinite,
    #[error("domain dimension {got} does not match the network input dimension {want}")]
    DomainDimensionMismatch { got: usize, want: usize },
    #[error("group overrides are not a partition of the surviving units: {0}")]
    BadOverrides(String),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// A three-layer ReLU network `x ↦ A1·relu(A2 x + B2)`.
///
/// The hidden width may be zero (the constant-zero model) so that dead-unit
/// removal is closed over the type; inputs and outputs must be non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl ReluNetwork {
    pub fn new(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        b2: DVector<f64>,
    ) -> Result<ReluNetwork, ReluError> {
        if a1.ncols() != a2.nrows() || a2.nrows() != b2.len() {
            return Err(ReluError::ShapeMismatch {
                a1_rows: a1.nrows(),
                a1_cols: a1.ncols(),
                a2_rows: a2.nrows(),
                a2_cols: a2.ncols(),
                b2_len: b2.len(),
            });
        }
        if a1.nrows() == 0 || a2.ncols() == 0 {
            return Err(ReluError::EmptyDimension);
        }
        Ok(ReluNetwork { a1, a2, b2 })
    }

    pub fn output_dim(&self) -> usize {
        self.a1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.a2.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.a2.ncols()
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DMatrix<f64> {
        &self.a2
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    /// Evaluates the network at an input point.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let mut hidden = &self.a2 * x + &self.b2;
        hidden.apply(|v| *v = v.max(0.0));
        (&self.a1 * hidden).as_slice().to_vec()
    }

    /// Flattens parameters as [A1 row-major, A2 row-major, B2].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.a1.len() + self.a2.len() + self.b2.len());
        for i in 0..self.a1.nrows() {
            for j in 0..self.a1.ncols() {
                out.push(self.a1[(i, j)]);
            }
        }
        for i in 0..self.a2.nrows() {
            for j in 0..self.a2.ncols() {
                out.push(self.a2[(i, j)]);
            }
        }
        out.extend_from_slice(self.b2.as_slice());
        out
    }

    pub fn param_count(&self) -> usize {
        self.a1.len() + self.a2.len() + self.b2.len()
    }
}

/// An axis-aligned box of inputs carrying the uniform input density.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<InputDomain, ReluError> {
        if lower.len() != upper.len() {
            return Err(ReluError::DomainLengthMismatch {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ReluError::DomainNotFinite);
            }
            if lo >= hi {
                return Err(ReluError::DomainNotPositive {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(InputDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// One positive-volume activation region: the set of active hidden units and
/// a strict-interior witness point.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRegion {
    /// Active hidden units on the region, ascending 0-based indices.
    pub active: Vec<usize>,
    /// A point of the box strictly inside the region.
    pub witness: Vec<f64>,
    /// Always true for regions returned by [`enumerate_regions`]; kept so the
    /// record states what the LP certified.
    pub volume_positive: bool,
}

/// Enumerates every hidden-unit sign pattern whose region intersects the box
/// with positive volume. Feasibility of each pattern is decided by an LP that
/// maximizes the interior margin; patterns that only touch boundaries are
/// dropped.
pub fn enumerate_regions(
    net: &ReluNetwork,
    domain: &InputDomain,
) -> Result<Vec<ActivationRegion>, ReluError> {
    if domain.dim() != net.input_dim() {
        return Err(ReluError::DomainDimensionMismatch {
            got: domain.dim(),
            want: net.input_dim(),
        });
    }
    let h2 = net.hidden_dim();
    if h2 > MAX_ENUMERATION_WIDTH {
        return Err(ReluError::TooManyUnits(h2));
    }
    if h2 == 0 {
        return Ok(vec![ActivationRegion {
            active: Vec::new(),
            witness: domain.center(),
            volume_positive: true,
        }]);
    }

    let regions: Vec<ActivationRegion> = (0u32..1 << h2)
        .into_par_iter()
        .filter_map(|bits| {
            let mask: Vec<bool> = (0..h2).map(|i| bits >> i & 1 == 1).collect();
            let (witness, _margin) =
                sign_pattern_interior(&net.a2, &net.b2, &mask, domain.lower(), domain.upper())?;
            let active = (0..h2).filter(|&i| mask[i]).collect();
            Some(ActivationRegion {
                active,
                witness,
                volume_positive: true,
            })
        })
        .collect();
    Ok(regions)
}

/// Removes every hidden unit that is active in no region: drops column i of
/// A1, row i of A2 and entry i of B2. Returns the reduced network and the
/// removed unit indices (ascending, in the input network's numbering). The
/// model function on the domain is unchanged.
pub fn remove_dead_units(
    net: &ReluNetwork,
    regions: &[ActivationRegion],
) -> (ReluNetwork, Vec<usize>) {
    let h2 = net.hidden_dim();
    let mut alive = vec![false; h2];
    for region in regions {
        for &u in &region.active {
            alive[u] = true;
        }
    }
    let kept: Vec<usize> = (0..h2).filter(|&i| alive[i]).collect();
    let removed: Vec<usize> = (0..h2).filter(|&i| !alive[i]).collect();

    let a1 = net.a1.select_columns(kept.iter());
    let a2 = net.a2.select_rows(kept.iter());
    let b2 = DVector::from_iterator(kept.len(), kept.iter().map(|&i| net.b2[i]));
    let reduced = ReluNetwork { a1, a2, b2 };
    (reduced, removed)
}

/// Per-group data feeding the closed-form linear threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStats {
    /// Number of hidden units in the group (its hidden width).
    pub size: u32,
    /// Effective output count for the group; defaults to the full output dim.
    pub effective_outputs: u32,
    /// Rank of the group's true affine map `[A1_G·A2_G | A1_G·B2_G]`.
    pub rank: u32,
}

/// A partition of the (surviving) hidden units with per-group statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupDecomposition {
    /// Unit indices per group, each ascending; groups ordered by first unit.
    pub groups: Vec<Vec<usize>>,
    pub per_group: Vec<GroupStats>,
}

/// Caller-supplied replacement for the default grouping: a partition of the
/// surviving units plus an effective output count and a rank for each part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupOverrides {
    pub groups: Vec<Vec<usize>>,
    pub effective_outputs: Vec<u32>,
    pub ranks: Vec<u32>,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> DisjointSets {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

fn group_rank(net: &ReluNetwork, group: &[usize]) -> u32 {
    // Affine map of the group: x ↦ A1_G(A2_G x + B2_G); rank of the
    // H1 × (H3 + 1) matrix [A1_G·A2_G | A1_G·B2_G].
    let a1g = net.a1.select_columns(group.iter());
    let a2g = net.a2.select_rows(group.iter());
    let b2g = DVector::from_iterator(group.len(), group.iter().map(|&i| net.b2[i]));
    let linear_part = &a1g * &a2g;
    let bias_part = &a1g * &b2g;
    let h1 = net.output_dim();
    let h3 = net.input_dim();
    let mut aug = DMatrix::zeros(h1, h3 + 1);
    aug.view_mut((0, 0), (h1, h3)).copy_from(&linear_part);
    aug.view_mut((0, h3), (h1, 1)).copy_from(&bias_part);
    matrix_rank(&aug) as u32
}

fn validate_overrides(net: &ReluNetwork, ov: &GroupOverrides) -> Result<(), ReluError> {
    let h2 = net.hidden_dim();
    if ov.groups.len() != ov.effective_outputs.len() || ov.groups.len() != ov.ranks.len() {
        return Err(ReluError::BadOverrides(format!(
            "{} groups but {} effective-output entries and {} rank entries",
            ov.groups.len(),
            ov.effective_outputs.len(),
            ov.ranks.len()
        )));
    }
    let mut seen = vec![false; h2];
    for group in &ov.groups {
        if group.is_empty() {
            return Err(ReluError::BadOverrides("empty group".into()));
        }
        for &u in group {
            if u >= h2 {
                return Err(ReluError::BadOverrides(format!(
                    "unit index {u} out of range for hidden width {h2}"
                )));
            }
            if seen[u] {
                return Err(ReluError::BadOverrides(format!("unit {u} appears twice")));
            }
            seen[u] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(ReluError::BadOverrides(format!(
            "unit {missing} is not covered"
        )));
    }
    let h3_plus_1 = net.input_dim() as u32 + 1;
    for (i, group) in ov.groups.iter().enumerate() {
        let bound = ov.effective_outputs[i]
            .min(group.len() as u32)
            .min(h3_plus_1);
        if ov.ranks[i] > bound {
            return Err(ReluError::BadOverrides(format!(
                "rank {} of group {} exceeds min(H1'={}, H2={}, H3+1={})",
                ov.ranks[i],
                i + 1,
                ov.effective_outputs[i],
                group.len(),
                h3_plus_1
            )));
        }
    }
    Ok(())
}

/// Partitions the hidden units of a dead-unit-free network.
///
/// The default partition is the set of connected components of the
/// co-activation graph (an edge joins two units active together in some
/// region); each group gets the full output dimension as its effective output
/// count and the exact rank of its true affine map. Explicit overrides
/// replace the default wholesale after being checked for partition-ness and
/// rank bounds.
pub fn group_units(
    net: &ReluNetwork,
    regions: &[ActivationRegion],
    overrides: Option<&GroupOverrides>,
) -> Result<GroupDecomposition, ReluError> {
    let h2 = net.hidden_dim();
    if let Some(ov) = overrides {
        validate_overrides(net, ov)?;
        let mut groups: Vec<Vec<usize>> = ov.groups.clone();
        for g in &mut groups {
            g.sort_unstable();
        }
        let per_group = groups
            .iter()
            .zip(ov.effective_outputs.iter().zip(&ov.ranks))
            .map(|(g, (&h1, &r))| GroupStats {
                size: g.len() as u32,
                effective_outputs: h1,
                rank: r,
            })
            .collect();
        return Ok(GroupDecomposition { groups, per_group });
    }

    let mut sets = DisjointSets::new(h2);
    for region in regions {
        for pair in region.active.windows(2) {
            sets.union(pair[0], pair[1]);
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); h2];
    for u in 0..h2 {
        let root = sets.find(u);
        by_root[root].push(u);
    }
    let mut groups: Vec<Vec<usize>> = by_root.into_iter().filter(|g| !g.is_empty()).collect();
    groups.sort_by_key(|g| g[0]);

    let h1 = net.output_dim() as u32;
    let per_group = groups
        .iter()
        .map(|g| GroupStats {
            size: g.len() as u32,
            effective_outputs: h1,
            rank: group_rank(net, g),
        })
        .collect();
    Ok(GroupDecomposition { groups, per_group })
}

/// Full analysis result of a three-layer ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluAnalysis {
    pub lct: Lct,
    /// Grouping of the surviving units, in the input network's unit numbering.
    pub groups: GroupDecomposition,
    /// Dead units that were removed, ascending input-network indices.
    pub removed: Vec<usize>,
    /// True when every unit died: the truth is the constant-zero function and
    /// the threshold degenerates to (0, 1).
    pub degenerate: bool,
}

/// Computes the learning coefficient of a three-layer ReLU network over a box
/// domain: enumerate regions, drop dead units, group survivors, evaluate the
/// closed-form linear threshold per group, and combine additively.
///
/// Override groups, when given, are expressed in the input network's unit
/// numbering and must partition the surviving units exactly.
pub fn lambda_relu(
    net: &ReluNetwork,
    domain: &InputDomain,
    overrides: Option<&GroupOverrides>,
) -> Result<ReluAnalysis, ReluError> {
    let regions = enumerate_regions(net, domain)?;
    let (reduced, removed) = remove_dead_units(net, &regions);

    if reduced.hidden_dim() == 0 {
        if let Some(ov) = overrides {
            if !ov.groups.is_empty() {
                return Err(ReluError::BadOverrides(
                    "no units survive but overrides name groups".into(),
                ));
            }
        }
        return Ok(ReluAnalysis {
            lct: Lct::TRIVIAL,
            groups: GroupDecomposition {
                groups: Vec::new(),
                per_group: Vec::new(),
            },
            removed,
            degenerate: true,
        });
    }

    // Translate between the input numbering and the post-removal numbering.
    let h2 = net.hidden_dim();
    let mut to_reduced = vec![usize::MAX; h2];
    let kept: Vec<usize> = (0..h2).filter(|i| !removed.contains(i)).collect();
    for (new, &old) in kept.iter().enumerate() {
        to_reduced[old] = new;
    }

    let reduced_regions: Vec<ActivationRegion> = regions
        .iter()
        .map(|r| ActivationRegion {
            active: r.active.iter().map(|&u| to_reduced[u]).collect(),
            witness: r.witness.clone(),
            volume_positive: r.volume_positive,
        })
        .collect();

    let mapped_overrides = match overrides {
        None => None,
        Some(ov) => {
            let mut groups = Vec::with_capacity(ov.groups.len());
            for group in &ov.groups {
                let mut mapped = Vec::with_capacity(group.len());
                for &u in group {
                    if u >= h2 || to_reduced[u] == usize::MAX {
                        return Err(ReluError::BadOverrides(format!(
                            "unit {u} is not a surviving unit"
                        )));
                    }
                    mapped.push(to_reduced[u]);
                }
                groups.push(mapped);
            }
            Some(GroupOverrides {
                groups,
                effective_outputs: ov.effective_outputs.clone(),
                ranks: ov.ranks.clone(),
            })
        }
    };

    let decomposition = group_units(&reduced, &reduced_regions, mapped_overrides.as_ref())?;

    let mut parts = Vec::with_capacity(decomposition.groups.len());
    for stats in &decomposition.per_group {
        let widths = [
            stats.effective_outputs,
            stats.size,
            reduced.input_dim() as u32 + 1,
        ];
        parts.push(lambda_linear(&widths, stats.rank)?);
    }
    let lct = combine_independent(parts);

    let groups_original = GroupDecomposition {
        groups: decomposition
            .groups
            .iter()
            .map(|g| g.iter().map(|&u| kept[u]).collect())
            .collect(),
        per_group: decomposition.per_group.clone(),
    };

    Ok(ReluAnalysis {
        lct,
        groups: groups_original,
        removed,
        degenerate: false,
    })
}
