//! Accessibility distributions: numerical rank via SVD, spanning bracket
//! families, singular-state scans, involutivity certification, and the
//! conserved-momentum check for base-unactuated chains.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config;
use crate::lie::{evaluate_expr, BracketExpr, SmoothField};
use crate::model::{self, ChainModel};
use crate::pfl::{control_affine, ControlIdx, VectorFieldSet};
use crate::verify::Trajectory;
use crate::{Error, Result};

/// A set of bracket generators over one field set.
#[derive(Clone)]
pub struct Distribution {
    set: VectorFieldSet,
    generators: Vec<BracketExpr>,
}

impl Distribution {
    pub fn new(set: &VectorFieldSet, generators: Vec<BracketExpr>) -> Self {
        Distribution {
            set: set.clone(),
            generators,
        }
    }

    pub fn set(&self) -> &VectorFieldSet {
        &self.set
    }

    pub fn generators(&self) -> &[BracketExpr] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Columns of evaluated generators at x (relabeled coordinates).
    pub fn matrix_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let dim = self.set.dim();
        let mut m = DMatrix::zeros(dim, self.generators.len());
        for (j, expr) in self.generators.iter().enumerate() {
            let col = evaluate_expr(expr, &self.set, x)?;
            m.set_column(j, &col);
        }
        Ok(m)
    }
}

/// Rank verdict at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// The queried state, relabeled coordinates.
    pub state: Vec<f64>,
    /// Singular values of the column-scaled generator matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Relative singular-value tolerance used.
    pub tol: f64,
    /// Full state-space dimension 2N.
    pub dimension: usize,
    /// rank == 2N.
    pub accessible: bool,
}

/// Numerical rank of a column collection: columns below `zero_col` norm are
/// dropped to zero, the rest are normalized to unit length (the angle and
/// velocity rows carry different units, so raw magnitudes would skew the
/// spectrum), then singular values above `tol * sigma_max` are counted.
pub fn numeric_rank(columns: &DMatrix<f64>, tol: f64, zero_col: f64) -> (usize, Vec<f64>) {
    let mut scaled = columns.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm < zero_col {
            col.fill(0.0);
        } else {
            col /= norm;
        }
    }
    let mut svals: Vec<f64> = scaled
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    svals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smax = svals.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return (0, svals);
    }
    let rank = svals.iter().filter(|&&s| s > tol * smax).count();
    (rank, svals)
}

/// Rank of the distribution at a relabeled state.
pub fn rank_at(dist: &Distribution, x: &[f64], tol: f64) -> Result<RankReport> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let matrix = dist.matrix_at(x)?;
    let zero_col = config::zero_threshold(dist.set.field_scale(x));
    let (rank, singular_values) = numeric_rank(&matrix, tol, zero_col);
    let dimension = dist.set.dim();
    Ok(RankReport {
        state: x.to_vec(),
        singular_values,
        rank,
        tol,
        dimension,
        accessible: rank == dimension,
    })
}

/// Default bracket pair for the spanning family: (2, 3) when two controls
/// exist, else (2, 2).
pub fn default_pair(n: usize) -> (ControlIdx, ControlIdx) {
    let a = ControlIdx::new(2).unwrap();
    let b = ControlIdx::new(if n >= 3 { 3 } else { 2 }).unwrap();
    (a, b)
}

/// The 2N-field spanning family for a pendubot-type chain:
/// `{[g_a,[f,g_b]], g_2..g_n, [f,[g_a,[f,g_b]]], [f,g_2]..[f,g_n]}`.
/// For N = 2 the only choice is a = b = 2.
pub fn spanning_set(model: &ChainModel) -> Result<Distribution> {
    let (a, b) = default_pair(model.n());
    spanning_set_with_pair(model, a, b)
}

pub fn spanning_set_with_pair(
    model: &ChainModel,
    a: ControlIdx,
    b: ControlIdx,
) -> Result<Distribution> {
    if !model.is_pendubot_type() {
        return Err(Error::BaseUnactuated);
    }
    let set = control_affine(model);
    let n = model.n();
    if a.get() > n || b.get() > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.get().max(b.get()),
        });
    }
    let f = BracketExpr::drift;
    let mut gens = Vec::with_capacity(2 * n);
    let inner = BracketExpr::bracket(
        BracketExpr::control(a),
        BracketExpr::bracket(f(), BracketExpr::control(b)),
    );
    gens.push(inner.clone());
    for c in set.controls() {
        gens.push(BracketExpr::control(c));
    }
    gens.push(BracketExpr::bracket(f(), inner));
    for c in set.controls() {
        gens.push(BracketExpr::bracket(f(), BracketExpr::control(c)));
    }
    Ok(Distribution::new(&set, gens))
}

/// Every right-nested bracket of nesting depth <= `depth` over
/// `{f, g_2..g_n}`, including the generators themselves.
pub fn algebra_to_depth(model: &ChainModel, depth: usize) -> Distribution {
    let set = control_affine(model);
    let gens = crate::lie::right_nested_brackets(model.n() - 1, depth + 1);
    Distribution::new(&set, gens)
}

/// Axis of a configuration-angle grid: 1-based physical joint index and an
/// inclusive range walked in `step` increments.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub joint: usize,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

/// Grid over configuration angles; joints not listed stay at zero, and all
/// velocities are zero (singular sets are characterized at equilibria).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        for ax in &self.axes {
            if ax.joint == 0 || ax.joint > n {
                return Err(Error::InvalidParameters(format!(
                    "grid joint q{} out of range 1..={n}",
                    ax.joint
                )));
            }
            if !ax.step.is_finite() || ax.step <= 0.0 {
                return Err(Error::InvalidParameters(format!(
                    "grid step {} must be positive",
                    ax.step
                )));
            }
        }
        Ok(())
    }

    /// All grid points as physical angle vectors, row-major over the axes
    /// in listed order.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        let axis_values: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|ax| {
                let mut vals = Vec::new();
                let mut k = 0usize;
                loop {
                    let v = ax.min + k as f64 * ax.step;
                    if v > ax.max + 1e-12 {
                        break;
                    }
                    vals.push(v);
                    k += 1;
                }
                vals
            })
            .collect();
        if axis_values.iter().any(|v| v.is_empty()) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.axes.len()];
        loop {
            let mut q = vec![0.0; n];
            for (d, ax) in self.axes.iter().enumerate() {
                q[ax.joint - 1] = axis_values[d][idx[d]];
            }
            out.push(q);
            let mut carry = true;
            for d in (0..idx.len()).rev() {
                if !carry {
                    break;
                }
                idx[d] += 1;
                if idx[d] < axis_values[d].len() {
                    carry = false;
                } else {
                    idx[d] = 0;
                }
            }
            if carry {
                break;
            }
        }
        out
    }
}

/// One row of a singular-state scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    /// Physical configuration angles of the grid point.
    pub q_physical: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub accessible: bool,
    /// Analytic predicate P_ab at the scan's pair; zero marks the
    /// analytically singular set.
    pub predicate: f64,
}

/// Scan the spanning family's rank over a configuration grid (velocities
/// zero), reporting the numeric rank next to the analytic predicate so
/// tolerance artifacts are visible rather than silently merged.
pub fn singular_scan(model: &ChainModel, grid: &GridSpec) -> Result<Vec<ScanRow>> {
    let n = model.n();
    grid.validate(n)?;
    let (a, b) = default_pair(n);
    let dist = spanning_set_with_pair(model, a, b)?;
    let set = dist.set().clone();
    let mut rows = Vec::new();
    for q_phys in grid.points(n) {
        let st = model::State::equilibrium(model, &q_phys)?;
        let x = st.to_vector();
        let report = rank_at(&dist, x.as_slice(), config::RANK_TOL)?;
        let predicate = crate::lie::closed_form_p_ab(&set, x.as_slice(), a, b);
        rows.push(ScanRow {
            q_physical: q_phys,
            singular_values: report.singular_values,
            rank: report.rank,
            accessible: report.accessible,
            predicate,
        });
    }
    Ok(rows)
}

/// Outcome of sampling-based involutivity certification.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolutivityReport {
    /// True when every checked pair stayed in span on every usable sample.
    pub involutive: bool,
    /// Samples actually certified.
    pub samples_checked: usize,
    /// Samples skipped because the generator matrix itself lost rank there.
    pub samples_skipped: usize,
    /// Worst residual-to-threshold ratio observed.
    pub max_residual_ratio: f64,
}

/// Check closure under brackets on sampled states: for every pair (i, j),
/// the residual of `[f_i, f_j](x)` after least-squares projection onto the
/// generator span must stay below the involutivity threshold. This is a
/// falsification tool on N samples, not a symbolic proof.
pub fn involutivity_check(
    generators: &[SmoothField],
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<InvolutivityReport> {
    if generators.len() < 2 {
        return Err(Error::EmptyDistribution);
    }
    let set = generators[0].set().clone();
    for g in generators {
        if !g.set().same_set(&set) {
            return Err(Error::FieldSetMismatch);
        }
    }
    let n = set.n();
    let dim = set.dim();
    let mut involutive = true;
    let mut samples_checked = 0usize;
    let mut samples_skipped = 0usize;
    let mut max_ratio: f64 = 0.0;

    let mut pair_exprs = Vec::new();
    for i in 0..generators.len() {
        for j in i + 1..generators.len() {
            pair_exprs.push(BracketExpr::bracket(
                generators[i].expr().clone(),
                generators[j].expr().clone(),
            ));
        }
    }

    for _ in 0..n_samples {
        let x: Vec<f64> = (0..dim)
            .map(|i| {
                if i < n {
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            })
            .collect();
        let mut gmat = DMatrix::zeros(dim, generators.len());
        for (j, g) in generators.iter().enumerate() {
            gmat.set_column(j, &g.eval(&x)?);
        }
        // Projection onto a degenerate generator set is meaningless; skip.
        let (grank, _) = numeric_rank(&gmat, config::RANK_TOL, 0.0);
        if grank < generators.len() {
            samples_skipped += 1;
            continue;
        }
        samples_checked += 1;
        let svd = gmat.clone().svd(true, true);
        let col_scale = gmat
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
        for expr in &pair_exprs {
            let b = evaluate_expr(expr, &set, &x)?;
            let coeffs = svd.solve(&b, 1e-12).expect("svd solve");
            let residual = (&gmat * coeffs - &b).norm();
            let threshold =
                config::INVOLUTIVITY_TOL * f64::max(1.0, f64::max(col_scale, b.norm()));
            max_ratio = max_ratio.max(residual / threshold);
            if residual >= threshold {
                involutive = false;
            }
        }
    }
    Ok(InvolutivityReport {
        involutive,
        samples_checked,
        samples_skipped,
        max_residual_ratio: max_ratio,
    })
}

/// Maximum drift of the conserved generalized momentum (first row of
/// M(q) qdot in physical coordinates) along a simulated trajectory of a
/// base-unactuated chain.
pub fn momentum_invariant(model: &ChainModel, trajectory: &Trajectory) -> Result<f64> {
    if model.unactuated_joint() != 1 {
        return Err(Error::NotBaseUnactuated(model.unactuated_joint()));
    }
    let mut initial = None;
    let mut worst: f64 = 0.0;
    for sample in trajectory.samples() {
        let q = DVector::from_column_slice(&sample.q);
        let qd = DVector::from_column_slice(&sample.qdot);
        let m = model::inertia_matrix(model, &q);
        let p = (m * qd)[0];
        match initial {
            None => initial = Some(p),
            Some(p0) => worst = worst.max((p - p0).abs()),
        }
    }
    Ok(worst)
}
