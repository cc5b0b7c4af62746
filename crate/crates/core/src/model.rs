//! Dynamics of an N-link horizontal planar serial manipulator: inertia
//! matrix, its configuration gradient, and Coriolis terms.
//!
//! The closed form used for general N couples every pair of links through
//! the cosine of the angle sum between them. Kinetic energy in absolute link
//! angles is a quadratic form `W` with constant coefficients; mapping
//! absolute to joint rates gives `M(q)` as a double suffix sum of `W`.
//! Because only angle differences enter, `M` never depends on the base
//! angle `q_1`.
//!
//! All public entry points work in physical joint order (base to tip);
//! relabeled coordinates are introduced by [`crate::pfl`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::Scalar;
use crate::{Error, Result};

/// Physical parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Mass (kg).
    pub mass: f64,
    /// Moment of inertia about the center of mass (kg m^2).
    #[serde(rename = "inertia")]
    pub inertia_about_com: f64,
    /// Link length, joint to joint (m).
    pub length: f64,
    /// Distance from the joint to the center of mass (m).
    pub com_distance: f64,
}

impl LinkParams {
    /// Uniform thin rod of the given mass and length.
    pub fn uniform_rod(mass: f64, length: f64) -> Self {
        LinkParams {
            mass,
            inertia_about_com: mass * length * length / 12.0,
            length,
            com_distance: length / 2.0,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::InvalidParameters(format!(
                "link {}: {what} (mass {}, inertia {}, length {}, com_distance {})",
                index + 1,
                self.mass,
                self.inertia_about_com,
                self.length,
                self.com_distance
            )))
        };
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return fail("mass must be positive");
        }
        if !(self.inertia_about_com > 0.0 && self.inertia_about_com.is_finite()) {
            return fail("inertia must be positive");
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return fail("length must be positive");
        }
        if !(self.com_distance >= 0.0 && self.com_distance <= self.length) {
            return fail("com_distance must lie in [0, length]");
        }
        Ok(())
    }
}

/// Inertial aggregates of the kind the closed-form bracket expressions are
/// written in.
///
/// `alpha[i]` collects the terms multiplying `qdot_{i+1}^2` diagonally:
/// `alpha_i = m_i l_ci^2 + (sum of masses outboard of i) l_i^2 + I_i`.
/// For N = 2 `beta = [m2 l1 lc2]` and for N = 3
/// `beta = [m2 l1 lc2, m3 l1 l2, m3 l2 lc3, m3 l1 lc3]`, matching the
/// two- and three-link closed forms. For larger N, `beta` holds the pairwise
/// couplings `l_r (m_s l_cs + l_s * outboard mass)` in row-major `(r, s)`,
/// `r < s` order (for N = 3 the first two entries appear summed there).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Permutation between physical joint order and the analysis order that
/// stores the unactuated joint first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    /// `to_physical[r]` = 0-based physical index of relabeled joint r.
    to_physical: Vec<usize>,
}

impl Relabeling {
    fn new(n: usize, unactuated0: usize) -> Self {
        let mut to_physical = Vec::with_capacity(n);
        to_physical.push(unactuated0);
        to_physical.extend((0..n).filter(|&j| j != unactuated0));
        Relabeling { to_physical }
    }

    pub fn len(&self) -> usize {
        self.to_physical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_physical.is_empty()
    }

    /// 0-based physical joint index of relabeled joint `r` (0-based).
    pub fn physical_of(&self, r: usize) -> usize {
        self.to_physical[r]
    }

    /// 0-based relabeled index of physical joint `p` (0-based).
    pub fn relabeled_of(&self, p: usize) -> usize {
        self.to_physical.iter().position(|&x| x == p).unwrap()
    }

    pub fn is_identity(&self) -> bool {
        self.to_physical.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Permute a physical-order slice into relabeled order.
    pub fn to_relabeled<S: Copy>(&self, physical: &[S]) -> Vec<S> {
        self.to_physical.iter().map(|&p| physical[p]).collect()
    }

    /// Permute a relabeled-order slice back into physical order.
    pub fn to_physical_order<S: Copy>(&self, relabeled: &[S]) -> Vec<S> {
        let mut out = vec![relabeled[0]; relabeled.len()];
        for (r, &p) in self.to_physical.iter().enumerate() {
            out[p] = relabeled[r];
        }
        out
    }
}

/// An N-link horizontal planar chain with exactly one unactuated joint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    links: Vec<LinkParams>,
    /// 0-based physical index of the passive joint.
    unactuated0: usize,
    aggregates: AggregateParams,
    /// Pairwise coupling constants c[r][s] (r != s entries symmetric);
    /// diagonal holds alpha_i without the I term... see `coupling`.
    couplings: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    links: Vec<LinkParams>,
    unactuated_joint: usize,
}

impl ChainModel {
    /// Build and validate a model. `unactuated_joint` is 1-based, matching
    /// the model file format.
    pub fn new(links: Vec<LinkParams>, unactuated_joint: usize) -> Result<Self> {
        if links.len() < 2 {
            return Err(Error::InvalidParameters(format!(
                "need at least 2 links, got {}",
                links.len()
            )));
        }
        if unactuated_joint == 0 || unactuated_joint > links.len() {
            return Err(Error::InvalidParameters(format!(
                "unactuated_joint {} out of range 1..={}",
                unactuated_joint,
                links.len()
            )));
        }
        for (i, link) in links.iter().enumerate() {
            link.validate(i)?;
        }
        let n = links.len();
        let couplings = compute_couplings(&links);
        let aggregates = compute_aggregates(&links, &couplings);
        let model = ChainModel {
            links,
            unactuated0: unactuated_joint - 1,
            aggregates,
            couplings,
        };

        // Spot-check positive definiteness on random configurations; a
        // failure here means the parameter set is unusable.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_9d0f);
        for _ in 0..16 {
            let q: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect();
            let m = inertia_matrix(&model, &DVector::from_vec(q));
            if m.cholesky().is_none() {
                return Err(Error::NotPositiveDefinite);
            }
        }
        Ok(model)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        ChainModel::new(file.links, file.unactuated_joint)
    }

    pub fn to_json_string(&self) -> String {
        let file = ModelFile {
            links: self.links.clone(),
            unactuated_joint: self.unactuated0 + 1,
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    /// Number of links / joints.
    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[LinkParams] {
        &self.links
    }

    /// 1-based physical index of the passive joint.
    pub fn unactuated_joint(&self) -> usize {
        self.unactuated0 + 1
    }

    /// True when the base joint is actuated (pendubot-type).
    pub fn is_pendubot_type(&self) -> bool {
        self.unactuated0 != 0
    }

    pub fn aggregates(&self) -> &AggregateParams {
        &self.aggregates
    }

    pub fn relabeling(&self) -> Relabeling {
        Relabeling::new(self.n(), self.unactuated0)
    }

    /// Pairwise coupling constant between physical joints r and s (0-based,
    /// r != s): the cosine coefficient in the kinetic-energy form.
    pub(crate) fn coupling(&self, r: usize, s: usize) -> f64 {
        self.couplings[r * self.n() + s]
    }

    /// Diagonal kinetic coefficient of absolute angle r, including the
    /// rotational inertia.
    pub(crate) fn diag_coeff(&self, r: usize) -> f64 {
        self.couplings[r * self.n() + r] + self.links[r].inertia_about_com
    }
}

fn compute_couplings(links: &[LinkParams]) -> Vec<f64> {
    let n = links.len();
    // outboard[s] = total mass strictly beyond link s
    let mut outboard = vec![0.0; n];
    for s in (0..n.saturating_sub(1)).rev() {
        outboard[s] = outboard[s + 1] + links[s + 1].mass;
    }
    let mut c = vec![0.0; n * n];
    for r in 0..n {
        for s in 0..n {
            let v = if r == s {
                links[r].mass * links[r].com_distance * links[r].com_distance
                    + outboard[r] * links[r].length * links[r].length
            } else {
                let (lo, hi) = if r < s { (r, s) } else { (s, r) };
                links[lo].length
                    * (links[hi].mass * links[hi].com_distance + links[hi].length * outboard[hi])
            };
            c[r * n + s] = v;
        }
    }
    c
}

fn compute_aggregates(links: &[LinkParams], couplings: &[f64]) -> AggregateParams {
    let n = links.len();
    let alpha: Vec<f64> = (0..n)
        .map(|i| couplings[i * n + i] + links[i].inertia_about_com)
        .collect();
    let beta = match n {
        2 => vec![links[1].mass * links[0].length * links[1].com_distance],
        3 => vec![
            links[1].mass * links[0].length * links[1].com_distance,
            links[2].mass * links[0].length * links[1].length,
            links[2].mass * links[1].length * links[2].com_distance,
            links[2].mass * links[0].length * links[2].com_distance,
        ],
        _ => {
            let mut b = Vec::new();
            for r in 0..n {
                for s in r + 1..n {
                    b.push(couplings[r * n + s]);
                }
            }
            b
        }
    };
    AggregateParams { alpha, beta }
}

/// Joint state in relabeled order (unactuated joint first), carrying the
/// permutation back to physical joints.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    q: DVector<f64>,
    qdot: DVector<f64>,
    relabeling: Relabeling,
}

impl State {
    pub fn from_physical(model: &ChainModel, q: &[f64], qdot: &[f64]) -> Result<Self> {
        let n = model.n();
        if q.len() != n || qdot.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.len().max(qdot.len()),
            });
        }
        let relabeling = model.relabeling();
        Ok(State {
            q: DVector::from_vec(relabeling.to_relabeled(q)),
            qdot: DVector::from_vec(relabeling.to_relabeled(qdot)),
            relabeling,
        })
    }

    pub fn from_relabeled(model: &ChainModel, q: &[f64], qdot: &[f64]) -> Result<Self> {
        let n = model.n();
        if q.len() != n || qdot.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.len().max(qdot.len()),
            });
        }
        Ok(State {
            q: DVector::from_column_slice(q),
            qdot: DVector::from_column_slice(qdot),
            relabeling: model.relabeling(),
        })
    }

    /// Zero-velocity state from physical angles.
    pub fn equilibrium(model: &ChainModel, q: &[f64]) -> Result<Self> {
        let zeros = vec![0.0; q.len()];
        State::from_physical(model, q, &zeros)
    }

    pub fn q_relabeled(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn qdot_relabeled(&self) -> &DVector<f64> {
        &self.qdot
    }

    pub fn q_physical(&self) -> Vec<f64> {
        self.relabeling.to_physical_order(self.q.as_slice())
    }

    pub fn qdot_physical(&self) -> Vec<f64> {
        self.relabeling.to_physical_order(self.qdot.as_slice())
    }

    pub fn relabeling(&self) -> &Relabeling {
        &self.relabeling
    }

    pub fn is_equilibrium(&self) -> bool {
        self.qdot.iter().all(|&v| v == 0.0)
    }

    /// Stacked 2N vector (q; qdot) in relabeled order.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&self.q);
        x.rows_mut(n, n).copy_from(&self.qdot);
        x
    }
}

/// Kinetic coupling matrix in absolute link angles, generic over the scalar.
fn angle_sum_cos<S: Scalar>(q: &[S], lo: usize, hi: usize) -> S {
    // cos(theta_hi - theta_lo) with theta the absolute link angles:
    // the difference is q[lo+1] + ... + q[hi].
    let mut acc = S::zero();
    for qk in &q[lo + 1..=hi] {
        acc = acc + *qk;
    }
    acc.cos()
}

fn angle_sum_sin<S: Scalar>(q: &[S], lo: usize, hi: usize) -> S {
    let mut acc = S::zero();
    for qk in &q[lo + 1..=hi] {
        acc = acc + *qk;
    }
    acc.sin()
}

/// Inertia matrix entries, generic over the scalar; row-major n*n.
pub(crate) fn inertia_generic<S: Scalar>(model: &ChainModel, q: &[S]) -> Vec<S> {
    let n = model.n();
    debug_assert_eq!(q.len(), n);
    // W[r][s] in absolute angles.
    let mut w = vec![S::zero(); n * n];
    for r in 0..n {
        w[r * n + r] = S::from_f64(model.diag_coeff(r));
        for s in 0..r {
            let v = S::from_f64(model.coupling(r, s)) * angle_sum_cos(q, s, r);
            w[r * n + s] = v;
            w[s * n + r] = v;
        }
    }
    // M_ij = sum over r >= i, s >= j of W[r][s]: suffix-sum rows then columns.
    for r in 0..n {
        for s in (0..n - 1).rev() {
            w[r * n + s] = w[r * n + s] + w[r * n + s + 1];
        }
    }
    for s in 0..n {
        for r in (0..n - 1).rev() {
            w[r * n + s] = w[r * n + s] + w[(r + 1) * n + s];
        }
    }
    w
}

/// Third-order array dM_ij/dq_k, generic; index [(i * n + j) * n + k].
pub(crate) fn inertia_gradient_generic<S: Scalar>(model: &ChainModel, q: &[S]) -> Vec<S> {
    let n = model.n();
    let mut out = vec![S::zero(); n * n * n];
    // dW[r][s]/dq_k = -c_rs sin(theta_rs) for min(r,s) < k <= max(r,s).
    for k in 1..n {
        // dW for this k, then suffix sums.
        let mut dw = vec![S::zero(); n * n];
        for r in 0..n {
            for s in 0..r {
                if s < k && k <= r {
                    let v = -(S::from_f64(model.coupling(r, s)) * angle_sum_sin(q, s, r));
                    dw[r * n + s] = v;
                    dw[s * n + r] = v;
                }
            }
        }
        for r in 0..n {
            for s in (0..n - 1).rev() {
                dw[r * n + s] = dw[r * n + s] + dw[r * n + s + 1];
            }
        }
        for s in 0..n {
            for r in (0..n - 1).rev() {
                dw[r * n + s] = dw[r * n + s] + dw[(r + 1) * n + s];
            }
        }
        for i in 0..n {
            for j in 0..n {
                out[(i * n + j) * n + k] = dw[i * n + j];
            }
        }
    }
    // k = 0 slice stays zero: the base angle never enters M.
    out
}

/// Coriolis vector C_k = (dM_ik/dq_j - 1/2 dM_ij/dq_k) qdot_i qdot_j.
pub(crate) fn coriolis_generic<S: Scalar>(model: &ChainModel, q: &[S], qdot: &[S]) -> Vec<S> {
    let n = model.n();
    let grad = inertia_gradient_generic(model, q);
    let half = S::from_f64(0.5);
    let mut c = vec![S::zero(); n];
    for k in 0..n {
        let mut acc = S::zero();
        for i in 0..n {
            for j in 0..n {
                let term =
                    grad[(i * n + k) * n + j] - half * grad[(i * n + j) * n + k];
                acc = acc + term * qdot[i] * qdot[j];
            }
        }
        c[k] = acc;
    }
    c
}

/// Inertia matrix M(q), physical joint order. Symmetric positive definite
/// for every valid model.
pub fn inertia_matrix(model: &ChainModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = model.n();
    let m = inertia_generic(model, q.as_slice());
    DMatrix::from_row_slice(n, n, &m)
}

/// All partials dM_ij/dq_k as a vector of matrices indexed by k.
pub fn inertia_gradient(model: &ChainModel, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let n = model.n();
    let g = inertia_gradient_generic(model, q.as_slice());
    (0..n)
        .map(|k| {
            DMatrix::from_fn(n, n, |i, j| g[(i * n + j) * n + k])
        })
        .collect()
}

/// Coriolis vector C(q, qdot), physical joint order.
pub fn coriolis_vector(model: &ChainModel, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(coriolis_generic(model, q.as_slice(), qdot.as_slice()))
}

/// Kinetic energy 1/2 qdot' M qdot.
pub fn kinetic_energy(model: &ChainModel, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
    let m = inertia_matrix(model, q);
    0.5 * (qdot.transpose() * m * qdot)[(0, 0)]
}
