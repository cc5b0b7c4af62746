//! Partial feedback linearization: the control-affine system
//! `xdot = f(x) + sum_a g_a(x) u_a` in relabeled coordinates, plus torque
//! reconstruction for simulation.
//!
//! Relabeling happens here once: joints are permuted so the unactuated
//! joint is index 1, and every downstream module works in these
//! coordinates. Reports translate back through [`Relabeling`].

use std::sync::Arc;

use nalgebra::DVector;

use crate::dual::{Dual, Lift, Scalar, D1};
use crate::model::{self, ChainModel, Relabeling};
use crate::{Error, Result};

/// Index of a control field. Controls are indexed `g_2 .. g_n`; there
/// is no `g_1`, and this type cannot represent one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ControlIdx(usize);

impl ControlIdx {
    /// Accepts `a >= 2`; whether `a <= n` is checked by the field set.
    pub fn new(a: usize) -> Option<Self> {
        (a >= 2).then_some(ControlIdx(a))
    }

    /// The 1-based relabeled joint index (2..=n).
    pub fn get(&self) -> usize {
        self.0
    }
}

impl std::fmt::Display for ControlIdx {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "g{}", self.0)
    }
}

struct SetInner {
    model: ChainModel,
    relabeling: Relabeling,
}

/// Drift and control fields of the linearized system, evaluable at any
/// scalar of the dual tower. Cloning is cheap and clones share identity.
#[derive(Clone)]
pub struct VectorFieldSet {
    inner: Arc<SetInner>,
}

impl VectorFieldSet {
    pub fn model(&self) -> &ChainModel {
        &self.inner.model
    }

    pub fn relabeling(&self) -> &Relabeling {
        &self.inner.relabeling
    }

    /// Number of joints.
    pub fn n(&self) -> usize {
        self.inner.model.n()
    }

    /// State-space dimension 2N.
    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    /// Control indices 2..=n.
    pub fn controls(&self) -> impl Iterator<Item = ControlIdx> {
        (2..=self.n()).map(ControlIdx)
    }

    pub fn same_set(&self, other: &VectorFieldSet) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Relabeled inertia matrix entries (row-major n*n) at relabeled angles.
    pub(crate) fn inertia_relabeled<S: Scalar>(&self, q_rel: &[S]) -> Vec<S> {
        let n = self.n();
        let perm = &self.inner.relabeling;
        let mut q_phys = vec![S::zero(); n];
        for r in 0..n {
            q_phys[perm.physical_of(r)] = q_rel[r];
        }
        let m_phys = model::inertia_generic(&self.inner.model, &q_phys);
        let mut m = vec![S::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                m[a * n + b] = m_phys[perm.physical_of(a) * n + perm.physical_of(b)];
            }
        }
        m
    }

    /// Relabeled gradient dM_ab/dq_c (index [(a n + b) n + c]).
    pub(crate) fn inertia_gradient_relabeled<S: Scalar>(&self, q_rel: &[S]) -> Vec<S> {
        let n = self.n();
        let perm = &self.inner.relabeling;
        let mut q_phys = vec![S::zero(); n];
        for r in 0..n {
            q_phys[perm.physical_of(r)] = q_rel[r];
        }
        let g_phys = model::inertia_gradient_generic(&self.inner.model, &q_phys);
        let mut g = vec![S::zero(); n * n * n];
        for a in 0..n {
            let pa = perm.physical_of(a);
            for b in 0..n {
                let pb = perm.physical_of(b);
                for c in 0..n {
                    let pc = perm.physical_of(c);
                    g[(a * n + b) * n + c] = g_phys[(pa * n + pb) * n + pc];
                }
            }
        }
        g
    }

    /// Reduced drift acceleration of the passive joint:
    /// `(1/M11)(1/2 dM_ij/dq_1 qd_i qd_j - dM_i1/dq_j qd_i qd_j)`,
    /// all in relabeled coordinates.
    pub fn hat_f<S: Scalar>(&self, q_rel: &[S], qd_rel: &[S]) -> S {
        let n = self.n();
        let m = self.inertia_relabeled(q_rel);
        let g = self.inertia_gradient_relabeled(q_rel);
        let half = S::from_f64(0.5);
        let mut acc = S::zero();
        for i in 0..n {
            for j in 0..n {
                let term = half * g[(i * n + j) * n] - g[(i * n) * n + j];
                acc = acc + term * qd_rel[i] * qd_rel[j];
            }
        }
        acc / m[0]
    }

    /// Passive-joint coupling of control a: `-M_a1 / M_11` (relabeled).
    pub fn hat_g<S: Scalar>(&self, a: ControlIdx, q_rel: &[S]) -> S {
        let n = self.n();
        debug_assert!(a.get() <= n);
        let m = self.inertia_relabeled(q_rel);
        let a0 = a.get() - 1;
        -(m[a0 * n] / m[0])
    }

    /// Drift field f(x); x = (q; qdot) relabeled, length 2N.
    pub fn eval_drift<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let n = self.n();
        debug_assert_eq!(x.len(), 2 * n);
        let (q, qd) = x.split_at(n);
        let mut out = vec![S::zero(); 2 * n];
        out[..n].copy_from_slice(qd);
        out[n] = self.hat_f(q, qd);
        out
    }

    /// Control field g_a(x).
    pub fn eval_control<S: Scalar>(&self, a: ControlIdx, x: &[S]) -> Vec<S> {
        let n = self.n();
        debug_assert_eq!(x.len(), 2 * n);
        debug_assert!(a.get() >= 2 && a.get() <= n, "control index {} out of range", a.get());
        let q = &x[..n];
        let mut out = vec![S::zero(); 2 * n];
        out[n] = self.hat_g(a, q);
        out[n + a.get() - 1] = S::one();
        out
    }

    /// Largest field norm at x among f and the g_a; the scale used by the
    /// zero-threshold rules.
    pub fn field_scale(&self, x: &[f64]) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>().sqrt();
        let mut s = norm(&self.eval_drift(x));
        for a in self.controls() {
            s = s.max(norm(&self.eval_control(a, x)));
        }
        s
    }
}

/// Build the control-affine fields for a model.
pub fn control_affine(model: &ChainModel) -> VectorFieldSet {
    VectorFieldSet {
        inner: Arc::new(SetInner {
            model: model.clone(),
            relabeling: model.relabeling(),
        }),
    }
}

/// Torque reconstruction: maps (state, new inputs u) to physical joint
/// torques so that the closed loop realizes `qdd_a = u_a` exactly on the
/// actuated joints.
pub struct TorqueLaw {
    set: VectorFieldSet,
}

/// Inputs are indexed by control: `u[a - 2]` drives relabeled joint a.
pub fn torque_law(model: &ChainModel) -> TorqueLaw {
    TorqueLaw {
        set: control_affine(model),
    }
}

impl TorqueLaw {
    pub fn set(&self) -> &VectorFieldSet {
        &self.set
    }

    /// Physical joint torques for the given physical state and inputs.
    pub fn torques(&self, q_phys: &[f64], qd_phys: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        let n = self.set.n();
        if q_phys.len() != n || qd_phys.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q_phys.len().max(qd_phys.len()),
            });
        }
        if u.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                got: u.len(),
            });
        }
        let perm = self.set.relabeling();
        let q_rel = perm.to_relabeled(q_phys);
        let qd_rel = perm.to_relabeled(qd_phys);

        // Desired accelerations in relabeled order, then back to physical.
        let mut qdd_rel = vec![0.0; n];
        let mut passive = self.set.hat_f(&q_rel, &qd_rel);
        for a in self.set.controls() {
            passive += self.set.hat_g(a, &q_rel) * u[a.get() - 2];
            qdd_rel[a.get() - 1] = u[a.get() - 2];
        }
        qdd_rel[0] = passive;
        let qdd_phys = DVector::from_vec(perm.to_physical_order(&qdd_rel));

        let q = DVector::from_column_slice(q_phys);
        let qd = DVector::from_column_slice(qd_phys);
        let m = model::inertia_matrix(self.set.model(), &q);
        let c = model::coriolis_vector(self.set.model(), &q, &qd);
        let mut tau = m * qdd_phys + c;
        // The passive joint carries no actuator; its row is zero by
        // construction up to roundoff. Pin it exactly.
        tau[self.set.model().unactuated_joint() - 1] = 0.0;
        Ok(tau)
    }
}

/// Physical state layout used by the two- and three-link
/// closed-form field expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpecialCase {
    Pendubot2,
    Acrobot2,
    /// Three links; the payload is the 1-based unactuated joint.
    ThreeLink(usize),
}

/// Closed-form field set for N = 2, 3, written directly from the two- and
/// three-link expressions rather than the general assembly. Used to
/// cross-check [`control_affine`].
pub struct SpecializedFieldSet {
    case: SpecialCase,
    model: ChainModel,
    relabeling: Relabeling,
}

pub fn specialized_fields(model: &ChainModel) -> Result<SpecializedFieldSet> {
    let case = match (model.n(), model.unactuated_joint()) {
        (2, 2) => SpecialCase::Pendubot2,
        (2, 1) => SpecialCase::Acrobot2,
        (3, u) => SpecialCase::ThreeLink(u),
        (n, _) => return Err(Error::UnsupportedLinkCount(n)),
    };
    Ok(SpecializedFieldSet {
        case,
        model: model.clone(),
        relabeling: model.relabeling(),
    })
}

impl SpecializedFieldSet {
    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// Drift field at a relabeled state vector.
    pub fn eval_drift(&self, x_rel: &[f64]) -> Vec<f64> {
        let phys = self.to_physical_state(x_rel);
        let out = self.drift_physical(&phys);
        self.to_relabeled_rows(&out)
    }

    /// Control field g_a at a relabeled state vector.
    pub fn eval_control(&self, a: ControlIdx, x_rel: &[f64]) -> Vec<f64> {
        let phys = self.to_physical_state(x_rel);
        // Relabeled control a drives physical joint perm(a); the special
        // cases order their controls by physical joint index.
        let joint_phys = self.relabeling.physical_of(a.get() - 1);
        let out = self.control_physical(&phys, joint_phys);
        self.to_relabeled_rows(&out)
    }

    fn to_physical_state(&self, x_rel: &[f64]) -> Vec<f64> {
        let n = self.n();
        let q = self.relabeling.to_physical_order(&x_rel[..n]);
        let qd = self.relabeling.to_physical_order(&x_rel[n..]);
        let mut out = q;
        out.extend(qd);
        out
    }

    fn to_relabeled_rows(&self, v_phys: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; 2 * n];
        for r in 0..n {
            out[r] = v_phys[self.relabeling.physical_of(r)];
            out[n + r] = v_phys[n + self.relabeling.physical_of(r)];
        }
        out
    }

    fn drift_physical(&self, x: &[f64]) -> Vec<f64> {
        let agg = self.model.aggregates();
        match self.case {
            SpecialCase::Pendubot2 => {
                let (a2, b1) = (agg.alpha[1], agg.beta[0]);
                let s2 = x[1].sin();
                // f = (x3, x4, 0, -C2/M22), C2 = b1 x3^2 s2, M22 = a2
                vec![x[2], x[3], 0.0, -b1 * x[2] * x[2] * s2 / a2]
            }
            SpecialCase::Acrobot2 => {
                let (a1, a2, b1) = (agg.alpha[0], agg.alpha[1], agg.beta[0]);
                let (s2, c2) = x[1].sin_cos();
                let m11 = a1 + a2 + 2.0 * b1 * c2;
                let a1x = (2.0 * b1 * x[2] * x[3] * s2 + b1 * x[3] * x[3] * s2) / m11;
                vec![x[2], x[3], a1x, 0.0]
            }
            SpecialCase::ThreeLink(unactuated) => {
                let (s2, c2) = x[1].sin_cos();
                let (s3, c3) = x[2].sin_cos();
                let (s23, c23) = (x[1] + x[2]).sin_cos();
                let (a1, a2, a3) = (agg.alpha[0], agg.alpha[1], agg.alpha[2]);
                let (b12, b3, b4) = (agg.beta[0] + agg.beta[1], agg.beta[2], agg.beta[3]);
                let (x4, x5, x6) = (x[3], x[4], x[5]);
                match unactuated {
                    3 => {
                        let p = -(x4 * x4 * (b3 * s3 + b4 * s23)
                            + 2.0 * x4 * x5 * b3 * s3
                            + b3 * x5 * x5 * s3)
                            / a3;
                        vec![x4, x5, x6, 0.0, 0.0, p]
                    }
                    2 => {
                        let m22 = a2 + a3 + 2.0 * b3 * c3;
                        let c2v = x4 * x4 * (b12 * s2 + b4 * s23)
                            - 2.0 * b3 * x4 * x6 * s3
                            - 2.0 * b3 * x5 * x6 * s3
                            - b3 * x6 * x6 * s3;
                        vec![x4, x5, x6, 0.0, -c2v / m22, 0.0]
                    }
                    1 => {
                        let den = a1
                            + a2
                            + a3
                            + 2.0 * b12 * c2
                            + 2.0 * b3 * c3
                            + 2.0 * b4 * c23;
                        let num1 = b4 * (x5 + x6) * (2.0 * x4 + x5 + x6) * s23
                            + b3 * x6 * (2.0 * x4 + 2.0 * x5 + x6) * s3
                            + b12 * (2.0 * x4 + x5) * x5 * s2;
                        vec![x4, x5, x6, num1 / den, 0.0, 0.0]
                    }
                    _ => unreachable!("validated at construction"),
                }
            }
        }
    }

    fn control_physical(&self, x: &[f64], joint_phys0: usize) -> Vec<f64> {
        let agg = self.model.aggregates();
        match self.case {
            SpecialCase::Pendubot2 => {
                let (a2, b1) = (agg.alpha[1], agg.beta[0]);
                let c2 = x[1].cos();
                // g = (0, 0, 1, -M21/M22)
                vec![0.0, 0.0, 1.0, -(a2 + b1 * c2) / a2]
            }
            SpecialCase::Acrobot2 => {
                let (a1, a2, b1) = (agg.alpha[0], agg.alpha[1], agg.beta[0]);
                let c2 = x[1].cos();
                let m11 = a1 + a2 + 2.0 * b1 * c2;
                vec![0.0, 0.0, -(a2 + b1 * c2) / m11, 1.0]
            }
            SpecialCase::ThreeLink(unactuated) => {
                let c2 = x[1].cos();
                let c3 = x[2].cos();
                let c23 = (x[1] + x[2]).cos();
                let (a1, a2, a3) = (agg.alpha[0], agg.alpha[1], agg.alpha[2]);
                let (b12, b3, b4) = (agg.beta[0] + agg.beta[1], agg.beta[2], agg.beta[3]);
                match unactuated {
                    3 => {
                        let q1 = -(a3 + b3 * c3 + b4 * c23) / a3;
                        let q2 = -(a3 + b3 * c3) / a3;
                        match joint_phys0 {
                            0 => vec![0.0, 0.0, 0.0, 1.0, 0.0, q1],
                            1 => vec![0.0, 0.0, 0.0, 0.0, 1.0, q2],
                            _ => unreachable!(),
                        }
                    }
                    2 => {
                        let m22 = a2 + a3 + 2.0 * b3 * c3;
                        let m21 = a2 + a3 + b12 * c2 + 2.0 * b3 * c3 + b4 * c23;
                        let m23 = a3 + b3 * c3;
                        match joint_phys0 {
                            0 => vec![0.0, 0.0, 0.0, 1.0, -m21 / m22, 0.0],
                            2 => vec![0.0, 0.0, 0.0, 0.0, -m23 / m22, 1.0],
                            _ => unreachable!(),
                        }
                    }
                    1 => {
                        let den = a1
                            + a2
                            + a3
                            + 2.0 * b12 * c2
                            + 2.0 * b3 * c3
                            + 2.0 * b4 * c23;
                        let num2 = -a2 - a3 - b12 * c2 - 2.0 * b3 * c3 - b4 * c23;
                        let num3 = -a3 - b3 * c3 - b4 * c23;
                        match joint_phys0 {
                            1 => vec![0.0, 0.0, 0.0, num2 / den, 1.0, 0.0],
                            2 => vec![0.0, 0.0, 0.0, num3 / den, 0.0, 1.0],
                            _ => unreachable!(),
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Velocity sensitivity of hat_g, computed by differentiation; exactly zero
/// analytically since hat_g depends on q only.
pub fn hat_g_velocity_sensitivity(set: &VectorFieldSet, a: ControlIdx, x: &[f64]) -> f64 {
    let n = set.n();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let seeded: Vec<D1> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i == n + k {
                    Lift::seeded(v, 1.0)
                } else {
                    Dual::constant(v)
                }
            })
            .collect();
        let g = set.eval_control(a, &seeded);
        worst = worst.max(g[n].du.abs());
    }
    worst
}
