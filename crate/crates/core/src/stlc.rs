//! Good/bad bracket bookkeeping for small-time local controllability:
//! theta-degrees over exact rationals, the equilibrium-triviality
//! criterion, neutralization ledgers, and certificate search.
//!
//! A certificate here is sufficient evidence only. "No certificate" never
//! means "not STLC"; the underlying conditions are one-sided.

use std::cmp::Ordering;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::accessibility::{rank_at, spanning_set_with_pair};
use crate::config;
use crate::lie::{closed_form_p_ab, BracketExpr};
use crate::model::{ChainModel, State};
use crate::pfl::{control_affine, ControlIdx, VectorFieldSet};
use crate::{Error, Result};

/// Exact nonnegative rational, normalized with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidTheta("zero denominator".into()));
        }
        let sign = if (num < 0) != (den < 0) && num != 0 { -1 } else { 1 };
        let (n, d) = (num.unsigned_abs(), den.unsigned_abs());
        let g = gcd(n, d).max(1);
        Ok(Rational {
            num: sign * (n / g) as i64,
            den: (d / g) as i64,
        })
    }

    pub fn integer(v: i64) -> Self {
        Rational { num: v, den: 1 }
    }

    pub fn zero() -> Self {
        Rational::integer(0)
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    pub fn mul_count(&self, count: usize) -> Rational {
        Rational::new(self.num * count as i64, self.den).expect("den != 0")
    }

    pub fn add(&self, other: Rational) -> Rational {
        Rational::new(
            self.num * other.den + other.num * self.den,
            self.den * other.den,
        )
        .expect("den != 0")
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        // denominators are positive after normalization
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Weights theta_0 (for f) and theta_a (for each control), subject to
/// `theta_a >= theta_0 >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaAssignment {
    theta0: Rational,
    /// Indexed by control: entry a - 2 is theta_a.
    controls: Vec<Rational>,
}

impl ThetaAssignment {
    pub fn new(theta0: Rational, controls: Vec<Rational>) -> Result<Self> {
        if theta0.is_negative() {
            return Err(Error::InvalidTheta("theta_0 must be >= 0".into()));
        }
        for (i, t) in controls.iter().enumerate() {
            if *t < theta0 {
                return Err(Error::InvalidTheta(format!(
                    "theta_{} = {t} is below theta_0 = {theta0}",
                    i + 2
                )));
            }
        }
        Ok(ThetaAssignment { theta0, controls })
    }

    /// The pattern the certificate search uses: theta_0 = 1, the
    /// distinguished control at 1, every other control at 2.
    pub fn distinguished(n_controls: usize, dist: ControlIdx) -> Self {
        let controls = (0..n_controls)
            .map(|i| {
                if i + 2 == dist.get() {
                    Rational::integer(1)
                } else {
                    Rational::integer(2)
                }
            })
            .collect();
        ThetaAssignment {
            theta0: Rational::integer(1),
            controls,
        }
    }

    /// All weights 1: the theta-degree becomes the total degree.
    pub fn uniform(n_controls: usize) -> Self {
        ThetaAssignment {
            theta0: Rational::integer(1),
            controls: vec![Rational::integer(1); n_controls],
        }
    }

    pub fn theta0(&self) -> Rational {
        self.theta0
    }

    pub fn theta(&self, a: ControlIdx) -> Option<Rational> {
        self.controls.get(a.get() - 2).copied()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }
}

impl Serialize for ThetaAssignment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(1 + self.controls.len()))?;
        map.serialize_entry("theta0", &self.theta0)?;
        for (i, t) in self.controls.iter().enumerate() {
            map.serialize_entry(&format!("g{}", i + 2), t)?;
        }
        map.end()
    }
}

/// Sussmann's obstruction dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketClass {
    Good,
    Bad,
}

/// Bad iff the drift occurs an odd number of times and every control an
/// even number of times (including zero).
pub fn classify(expr: &BracketExpr) -> BracketClass {
    let bad = expr.delta0() % 2 == 1
        && expr.control_counts().all(|(_, count)| count % 2 == 0);
    if bad {
        BracketClass::Bad
    } else {
        BracketClass::Good
    }
}

/// Weighted occurrence count `sum_j theta_j delta^j`, in exact arithmetic.
pub fn theta_degree(expr: &BracketExpr, theta: &ThetaAssignment) -> Result<Rational> {
    let mut acc = theta.theta0().mul_count(expr.delta0());
    for (a, count) in expr.control_counts() {
        let t = theta.theta(a).ok_or_else(|| {
            Error::InvalidTheta(format!("no theta for control {a} in the assignment"))
        })?;
        acc = acc.add(t.mul_count(count));
    }
    Ok(acc)
}

/// Whether the bracket can be nonzero at an equilibrium: only brackets with
/// `sum_i delta^i - delta^0` equal to 0 or 1 survive there, and those with
/// the difference >= 2 vanish identically.
pub fn nontrivial_at_equilibrium(expr: &BracketExpr) -> bool {
    matches!(expr.control_excess(), 0 | 1)
}

/// Outcome for one bad bracket in the ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LedgerStatus {
    /// Vanishes at the equilibrium (or identically); no neutralization
    /// needed.
    Trivial { reason: String },
    /// A strictly lower theta-degree good bracket spans its value.
    Neutralized { by: String, reason: String },
    /// Cannot be neutralized under this assignment.
    Obstruction { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    #[serde(serialize_with = "expr_as_string")]
    pub expr: BracketExpr,
    pub theta_degree: Rational,
    #[serde(flatten)]
    pub status: LedgerStatus,
}

fn expr_as_string<S: Serializer>(
    expr: &BracketExpr,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&expr.to_string())
}

impl LedgerEntry {
    pub fn is_obstruction(&self) -> bool {
        matches!(self.status, LedgerStatus::Obstruction { .. })
    }
}

/// Enumerate the bad occurrence classes up to `degree_limit` (f odd, every
/// control even) and resolve each at the equilibrium under the assignment
/// with distinguished control `dist`.
///
/// Classes are represented by one right-nested bracket each; the
/// classification depends only on the counts, and the only classes that
/// need numeric evidence are the degree-3 ones, whose value is P_mm.
pub fn neutralization_ledger(
    set: &VectorFieldSet,
    x_e: &[f64],
    dist: ControlIdx,
    degree_limit: usize,
) -> Result<Vec<LedgerEntry>> {
    let n_controls = set.n() - 1;
    let theta = ThetaAssignment::distinguished(n_controls, dist);
    let p_scale = config::zero_threshold(set.field_scale(x_e));
    let mut entries = Vec::new();
    for class in bad_classes(n_controls, degree_limit) {
        let expr = class.representative();
        let td = theta_degree(&expr, &theta)?;
        let excess = expr.control_excess();
        let status = if excess >= 2 {
            LedgerStatus::Trivial {
                reason: "identically zero (two more controls than drifts)".into(),
            }
        } else if excess <= -1 {
            LedgerStatus::Trivial {
                reason: "vanishes at every equilibrium (more drifts than controls)".into(),
            }
        } else if expr.degree() == 3 {
            // [g_m, [f, g_m]]: the value is P_mm in the passive-velocity row.
            let m = class.lone_control().expect("degree-3 bad class");
            let p_mm = closed_form_p_ab(set, x_e, m, m);
            if p_mm.abs() < p_scale {
                LedgerStatus::Trivial {
                    reason: format!("P_{0}{0} = 0 at this equilibrium", m.get()),
                }
            } else if m != dist {
                let p_dm = closed_form_p_ab(set, x_e, dist, m);
                if p_dm.abs() >= p_scale {
                    let by = format!("[g{},[f,g{}]]", dist.get(), m.get());
                    LedgerStatus::Neutralized {
                        by,
                        reason: "good bracket of theta-degree 4 spans the passive row".into(),
                    }
                } else {
                    LedgerStatus::Obstruction {
                        reason: format!(
                            "P_{0}{0} != 0 and the candidate neutralizer value P_{1}{0} is 0",
                            m.get(),
                            dist.get()
                        ),
                    }
                }
            } else {
                LedgerStatus::Obstruction {
                    reason: format!(
                        "P_{0}{0} != 0: the lone bad bracket of the distinguished control \
                         has theta-degree 3, below every available good bracket",
                        m.get()
                    ),
                }
            }
        } else {
            // excess == 1 with degree >= 7: theta-degree is at least 7.
            LedgerStatus::Neutralized {
                by: "degree-5 spanning family".into(),
                reason: format!(
                    "theta-degree {td} exceeds the spanning family's maximum of 5"
                ),
            }
        };
        entries.push(LedgerEntry {
            expr,
            theta_degree: td,
            status,
        });
    }
    Ok(entries)
}

/// A bad occurrence class: delta0 odd, every control count even.
#[derive(Debug, Clone)]
struct BadClass {
    delta0: usize,
    /// (control, count) with count > 0 and even.
    controls: Vec<(ControlIdx, usize)>,
}

impl BadClass {
    fn lone_control(&self) -> Option<ControlIdx> {
        (self.controls.len() == 1).then(|| self.controls[0].0)
    }

    /// Canonical right-nested representative. A class with controls gets
    /// the innermost pair [f, g_c] so the classic degree-3 shape
    /// [g_m, [f, g_m]] (and its drift-wrapped extensions) appears verbatim.
    fn representative(&self) -> BracketExpr {
        if self.controls.is_empty() {
            let mut e = BracketExpr::drift();
            for _ in 1..self.delta0 {
                e = BracketExpr::bracket(BracketExpr::drift(), e);
            }
            return e;
        }
        let first = self.controls[0].0;
        let mut remaining_f = self.delta0;
        let mut e = if remaining_f > 0 {
            remaining_f -= 1;
            BracketExpr::bracket(BracketExpr::drift(), BracketExpr::control(first))
        } else {
            BracketExpr::control(first)
        };
        let mut remaining_first = self.controls[0].1 - 1;
        while remaining_first > 0 {
            e = BracketExpr::bracket(BracketExpr::control(first), e);
            remaining_first -= 1;
        }
        for &(c, count) in self.controls.iter().skip(1) {
            for _ in 0..count {
                e = BracketExpr::bracket(BracketExpr::control(c), e);
            }
        }
        for _ in 0..remaining_f {
            e = BracketExpr::bracket(BracketExpr::drift(), e);
        }
        e
    }
}

fn bad_classes(n_controls: usize, degree_limit: usize) -> Vec<BadClass> {
    let mut out = Vec::new();
    let mut delta0 = 1;
    while delta0 <= degree_limit {
        let budget = degree_limit - delta0;
        let mut counts = vec![0usize; n_controls];
        enumerate_even_counts(&mut counts, 0, budget, &mut |counts| {
            let controls: Vec<(ControlIdx, usize)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (ControlIdx::new(i + 2).unwrap(), c))
                .collect();
            out.push(BadClass { delta0, controls });
        });
        delta0 += 2;
    }
    out
}

fn enumerate_even_counts(
    counts: &mut Vec<usize>,
    idx: usize,
    budget: usize,
    emit: &mut impl FnMut(&[usize]),
) {
    if idx == counts.len() {
        emit(counts);
        return;
    }
    let mut c = 0;
    while c <= budget {
        counts[idx] = c;
        enumerate_even_counts(counts, idx + 1, budget - c, emit);
        c += 2;
    }
    counts[idx] = 0;
}

/// Numeric evidence backing a certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub p_ab: f64,
    pub p_aa: f64,
    pub p_bb: f64,
    pub spanning_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The sufficient conditions hold at this equilibrium.
    Certificate,
    /// The search failed. This does not claim the system is not STLC.
    NoCertificate,
}

#[derive(Debug, Clone, Serialize)]
pub struct StlcCertificate {
    /// Physical configuration angles of the tested equilibrium.
    pub state_physical_q: Vec<f64>,
    /// Relabeled stacked state (q; qdot).
    pub state_relabeled: Vec<f64>,
    /// (distinguished a, partner b), 1-based relabeled control indices.
    pub pair: Option<(usize, usize)>,
    pub theta: Option<ThetaAssignment>,
    pub evidence: Option<Evidence>,
    pub ledger: Vec<LedgerEntry>,
    pub verdict: Verdict,
    pub reason: String,
}

impl StlcCertificate {
    pub fn found(&self) -> bool {
        self.verdict == Verdict::Certificate
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization cannot fail")
    }
}

/// Search the distinguished-control theta patterns at a zero-velocity
/// state: pick a distinguished control d with P_dd = 0, require every
/// other bad degree-3 bracket neutralized (P_dm != 0 or P_mm = 0), and
/// certify the 2N-bracket family spans at the equilibrium for some
/// partner b.
pub fn certificate_search(model: &ChainModel, x_e: &State) -> Result<StlcCertificate> {
    if !model.is_pendubot_type() {
        return Err(Error::PAbIdenticallyZero);
    }
    let max_vel = x_e
        .qdot_relabeled()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_vel > 0.0 {
        return Err(Error::NonzeroVelocity(max_vel));
    }
    let set = control_affine(model);
    let x = x_e.to_vector();
    let x = x.as_slice();
    let p_scale = config::zero_threshold(set.field_scale(x));
    let n = model.n();

    let mut fallback_ledger: Option<(ControlIdx, Vec<LedgerEntry>)> = None;
    for d in set.controls() {
        let ledger = neutralization_ledger(&set, x, d, config::BAD_BRACKET_DEGREE_LIMIT)?;
        let clean = !ledger.iter().any(|e| e.is_obstruction());
        if fallback_ledger.is_none() {
            fallback_ledger = Some((d, ledger.clone()));
        }
        if !clean {
            continue;
        }
        // partner with nonzero coupling, for the spanning family
        for b in set.controls().filter(|&b| b != d) {
            let p_db = closed_form_p_ab(&set, x, d, b);
            if p_db.abs() < p_scale {
                continue;
            }
            let dist = spanning_set_with_pair(model, d, b)?;
            let report = rank_at(&dist, x, config::RANK_TOL)?;
            if report.rank == 2 * n {
                let theta = ThetaAssignment::distinguished(n - 1, d);
                let evidence = Evidence {
                    p_ab: p_db,
                    p_aa: closed_form_p_ab(&set, x, d, d),
                    p_bb: closed_form_p_ab(&set, x, b, b),
                    spanning_rank: report.rank,
                };
                return Ok(StlcCertificate {
                    state_physical_q: x_e.q_physical(),
                    state_relabeled: x.to_vec(),
                    pair: Some((d.get(), b.get())),
                    theta: Some(theta),
                    evidence: Some(evidence),
                    ledger,
                    verdict: Verdict::Certificate,
                    reason: format!(
                        "P_{}{} != 0, P_{}{} = 0, spanning rank {}",
                        d.get(),
                        b.get(),
                        d.get(),
                        d.get(),
                        report.rank
                    ),
                });
            }
        }
    }

    let (d, ledger) = fallback_ledger.expect("at least one control exists");
    let reason = if n == 2 {
        "single control: no pair (a, b) with a != b exists and the lone bad bracket \
         cannot be neutralized"
            .to_string()
    } else {
        "no distinguished control clears its ledger with a full-rank spanning family".to_string()
    };
    Ok(StlcCertificate {
        state_physical_q: x_e.q_physical(),
        state_relabeled: x.to_vec(),
        pair: None,
        theta: Some(ThetaAssignment::distinguished(n - 1, d)),
        evidence: None,
        ledger,
        verdict: Verdict::NoCertificate,
        reason,
    })
}
