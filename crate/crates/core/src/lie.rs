//! Vector fields on the 2N-dimensional state manifold, Lie brackets
//! computed by exact forward-mode differentiation, and the closed-form
//! bracket components P_a and P_ab.
//!
//! Bracket expressions are formal trees over `{f, g_2, .., g_n}`. Numeric
//! evaluation recurses on the tree: `[X, Y](x) = DY(x) X(x) - DX(x) Y(x)`,
//! where each Jacobian-vector product is one directional-derivative pass at
//! the next dual level. No algebraic simplification is attempted; numeric
//! evaluation is ground truth.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::config;
use crate::dual::{seed_direction, Lift};
use crate::model::{AggregateParams, ChainModel};
use crate::pfl::{ControlIdx, VectorFieldSet};
use crate::{Error, Result};

/// Leaf symbol of a bracket expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// The drift field f.
    Drift,
    /// A control field g_a, a = 2..=n.
    Control(ControlIdx),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Drift => write!(f, "f"),
            Symbol::Control(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    Leaf(Symbol),
    Pair(Box<BracketExpr>, Box<BracketExpr>),
}

/// A formal nested-bracket tree with cached occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BracketExpr {
    node: Node,
    /// Occurrences of f.
    delta0: usize,
    /// Occurrences of g_a at index a - 2.
    deltas: Vec<usize>,
    depth: usize,
}

impl BracketExpr {
    pub fn drift() -> Self {
        BracketExpr {
            node: Node::Leaf(Symbol::Drift),
            delta0: 1,
            deltas: Vec::new(),
            depth: 0,
        }
    }

    pub fn control(a: ControlIdx) -> Self {
        let mut deltas = vec![0; a.get() - 1];
        deltas[a.get() - 2] = 1;
        BracketExpr {
            node: Node::Leaf(Symbol::Control(a)),
            delta0: 0,
            deltas,
            depth: 0,
        }
    }

    pub fn leaf(sym: Symbol) -> Self {
        match sym {
            Symbol::Drift => Self::drift(),
            Symbol::Control(a) => Self::control(a),
        }
    }

    pub fn bracket(left: BracketExpr, right: BracketExpr) -> Self {
        let delta0 = left.delta0 + right.delta0;
        let mut deltas = vec![0; left.deltas.len().max(right.deltas.len())];
        for (i, d) in left.deltas.iter().enumerate() {
            deltas[i] += d;
        }
        for (i, d) in right.deltas.iter().enumerate() {
            deltas[i] += d;
        }
        let depth = 1 + left.depth.max(right.depth);
        BracketExpr {
            node: Node::Pair(Box::new(left), Box::new(right)),
            delta0,
            deltas,
            depth,
        }
    }

    /// Occurrence count of f.
    pub fn delta0(&self) -> usize {
        self.delta0
    }

    /// Occurrence count of g_a.
    pub fn delta(&self, a: ControlIdx) -> usize {
        self.deltas.get(a.get() - 2).copied().unwrap_or(0)
    }

    /// Occurrence counts of the controls actually present, as (index, count).
    pub fn control_counts(&self) -> impl Iterator<Item = (ControlIdx, usize)> + '_ {
        self.deltas
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, &d)| (ControlIdx::new(i + 2).unwrap(), d))
    }

    /// Total degree: occurrences of all generating fields.
    pub fn degree(&self) -> usize {
        self.delta0 + self.deltas.iter().sum::<usize>()
    }

    /// Nesting depth (a leaf has depth 0).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `sum_i delta^i - delta^0`, the quantity the equilibrium-triviality
    /// criterion is stated in.
    pub fn control_excess(&self) -> isize {
        self.deltas.iter().sum::<usize>() as isize - self.delta0 as isize
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.node, Node::Leaf(_))
    }

    /// The leaf symbol, when this is a leaf.
    pub fn leaf_symbol(&self) -> Option<Symbol> {
        match &self.node {
            Node::Leaf(s) => Some(*s),
            Node::Pair(..) => None,
        }
    }

    /// The two children, when this is a bracket node.
    pub fn as_pair(&self) -> Option<(&BracketExpr, &BracketExpr)> {
        match &self.node {
            Node::Leaf(_) => None,
            Node::Pair(l, r) => Some((l, r)),
        }
    }

    /// Largest control index mentioned, if any.
    pub fn max_control(&self) -> Option<usize> {
        self.deltas
            .iter()
            .rposition(|&d| d > 0)
            .map(|i| i + 2)
    }
}

impl fmt::Display for BracketExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Leaf(sym) => write!(f, "{sym}"),
            Node::Pair(l, r) => write!(f, "[{l},{r}]"),
        }
    }
}

impl FromStr for BracketExpr {
    type Err = Error;

    /// Parses the parenthesized text form, e.g. `[g2,[f,g3]]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser {
            text: s.as_bytes(),
            pos: 0,
        };
        let expr = p.expr()?;
        p.skip_ws();
        if p.pos != p.text.len() {
            return Err(Error::Parse(format!(
                "trailing input at byte {} in {s:?}",
                p.pos
            )));
        }
        Ok(expr)
    }
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<BracketExpr> {
        self.skip_ws();
        match self.text.get(self.pos) {
            Some(b'[') => {
                self.pos += 1;
                let left = self.expr()?;
                self.expect(b',')?;
                let right = self.expr()?;
                self.expect(b']')?;
                Ok(BracketExpr::bracket(left, right))
            }
            Some(b'f') => {
                self.pos += 1;
                Ok(BracketExpr::drift())
            }
            Some(b'g') => {
                self.pos += 1;
                let start = self.pos;
                while self
                    .text
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_digit())
                {
                    self.pos += 1;
                }
                if start == self.pos {
                    return Err(Error::Parse("expected control index after 'g'".into()));
                }
                let idx: usize = std::str::from_utf8(&self.text[start..self.pos])
                    .unwrap()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad control index: {e}")))?;
                let a = ControlIdx::new(idx)
                    .ok_or_else(|| Error::Parse(format!("control index {idx} must be >= 2")))?;
                Ok(BracketExpr::control(a))
            }
            other => Err(Error::Parse(format!(
                "expected 'f', 'g<k>' or '[' at byte {}, found {:?}",
                self.pos,
                other.map(|&c| c as char)
            ))),
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.text.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected {:?} at byte {}",
                c as char, self.pos
            )))
        }
    }
}

fn eval_symbol<S: Lift>(sym: Symbol, set: &VectorFieldSet, x: &[S]) -> Vec<S> {
    match sym {
        Symbol::Drift => set.eval_drift(x),
        Symbol::Control(a) => set.eval_control(a, x),
    }
}

fn eval_generic<S: Lift>(expr: &BracketExpr, set: &VectorFieldSet, x: &[S]) -> Vec<S> {
    match &expr.node {
        Node::Leaf(sym) => eval_symbol(*sym, set, x),
        Node::Pair(left, right) => {
            let lv = eval_generic::<S>(left, set, x);
            let rv = eval_generic::<S>(right, set, x);
            // DY . X in the epsilon channel of one lifted pass, ditto DX . Y.
            let dy_x = eval_generic::<S::Up>(right, set, &seed_direction(x, &lv));
            let dx_y = eval_generic::<S::Up>(left, set, &seed_direction(x, &rv));
            dy_x.into_iter()
                .zip(dx_y)
                .map(|(a, b)| S::eps(a) - S::eps(b))
                .collect()
        }
    }
}

fn check_expr(expr: &BracketExpr, set: &VectorFieldSet, x_len: usize, extra_depth: usize) -> Result<()> {
    if x_len != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: x_len,
        });
    }
    if let Some(a) = expr.max_control() {
        if a > set.n() {
            return Err(Error::DimensionMismatch {
                expected: set.n(),
                got: a,
            });
        }
    }
    let limit = config::MAX_BRACKET_DEPTH;
    if expr.depth() + extra_depth > limit {
        return Err(Error::DepthExceeded {
            depth: expr.depth() + extra_depth,
            limit,
        });
    }
    Ok(())
}

/// Evaluate a bracket expression at a relabeled state vector.
pub fn evaluate_expr(expr: &BracketExpr, set: &VectorFieldSet, x: &[f64]) -> Result<DVector<f64>> {
    check_expr(expr, set, x.len(), 0)?;
    Ok(DVector::from_vec(eval_generic::<f64>(expr, set, x)))
}

/// A vector field defined by a bracket expression over a field set. Exact
/// Jacobians come from one more dual level.
#[derive(Clone)]
pub struct SmoothField {
    set: VectorFieldSet,
    expr: BracketExpr,
    label: String,
}

impl SmoothField {
    pub fn from_expr(set: &VectorFieldSet, expr: BracketExpr) -> Self {
        let label = expr.to_string();
        SmoothField {
            set: set.clone(),
            expr,
            label,
        }
    }

    pub fn drift(set: &VectorFieldSet) -> Self {
        Self::from_expr(set, BracketExpr::drift())
    }

    pub fn control(set: &VectorFieldSet, a: ControlIdx) -> Self {
        Self::from_expr(set, BracketExpr::control(a))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn expr(&self) -> &BracketExpr {
        &self.expr
    }

    pub fn set(&self) -> &VectorFieldSet {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        evaluate_expr(&self.expr, &self.set, x)
    }

    /// Exact Jacobian: one seeded pass per state coordinate.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_expr(&self.expr, &self.set, x.len(), 1)?;
        let dim = self.set.dim();
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let seeded: Vec<crate::dual::D1> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| Lift::seeded(v, if i == j { 1.0 } else { 0.0 }))
                .collect();
            let col = eval_generic::<crate::dual::D1>(&self.expr, &self.set, &seeded);
            for (i, v) in col.iter().enumerate() {
                jac[(i, j)] = v.du;
            }
        }
        Ok(jac)
    }
}

/// Lie bracket of two fields over the same field set:
/// `[X, Y](x) = DY(x) X(x) - DX(x) Y(x)`.
pub fn bracket(x: &SmoothField, y: &SmoothField) -> Result<SmoothField> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if !x.set.same_set(&y.set) {
        return Err(Error::FieldSetMismatch);
    }
    Ok(SmoothField::from_expr(
        &x.set,
        BracketExpr::bracket(x.expr.clone(), y.expr.clone()),
    ))
}

/// Closed form for the passive-velocity component of `[f, g_a]`:
/// `P_a = (1/M11)(dM_i1/dq_a qd_i - dM_ia/dq_1 qd_i)`, relabeled indices.
pub fn closed_form_p_a(set: &VectorFieldSet, x: &[f64], a: ControlIdx) -> f64 {
    let n = set.n();
    let (q, qd) = x.split_at(n);
    let m = set.inertia_relabeled(q);
    let g = set.inertia_gradient_relabeled(q);
    let a0 = a.get() - 1;
    let mut acc = 0.0;
    for i in 0..n {
        acc += (g[(i * n) * n + a0] - g[(i * n + a0) * n]) * qd[i];
    }
    acc / m[0]
}

/// Closed form for the passive-velocity component of `[g_a, [f, g_b]]`:
/// `P_ab = (1/M11^2) d(M_a1 M_b1)/dq_1 - (1/M11) dM_ab/dq_1
///         - (M_a1 M_b1 / M11^3) dM_11/dq_1`. Symmetric in (a, b) and a
/// function of the configuration only.
pub fn closed_form_p_ab(set: &VectorFieldSet, x: &[f64], a: ControlIdx, b: ControlIdx) -> f64 {
    let n = set.n();
    let q = &x[..n];
    let m = set.inertia_relabeled(q);
    let g = set.inertia_gradient_relabeled(q);
    let (a0, b0) = (a.get() - 1, b.get() - 1);
    let m11 = m[0];
    let ma1 = m[a0 * n];
    let mb1 = m[b0 * n];
    let da1 = g[(a0 * n) * n];
    let db1 = g[(b0 * n) * n];
    let dab = g[(a0 * n + b0) * n];
    let d11 = g[0];
    (da1 * mb1 + ma1 * db1) / (m11 * m11) - dab / m11 - ma1 * mb1 * d11 / (m11 * m11 * m11)
}

/// One entry of the two-/three-link closed-form catalog.
pub struct CatalogEntry {
    /// Catalog name (A1..A4, R1..R3, V1, V2).
    pub name: &'static str,
    /// The bracket whose component this closed form equals (relabeled
    /// control indices).
    pub expr: BracketExpr,
    /// 0-based row of the evaluated bracket, in relabeled coordinates.
    pub component: usize,
    eval: fn(&AggregateParams, &[f64]) -> f64,
}

impl CatalogEntry {
    /// Evaluate the closed form. `x_phys` is the physical-order state
    /// (physical q then physical qdot).
    pub fn eval_physical(&self, agg: &AggregateParams, x_phys: &[f64]) -> f64 {
        (self.eval)(agg, x_phys)
    }

    /// Evaluate the closed form at a relabeled state vector.
    pub fn eval_closed_form(&self, model: &ChainModel, x_rel: &[f64]) -> f64 {
        let n = model.n();
        let perm = model.relabeling();
        let mut x_phys = perm.to_physical_order(&x_rel[..n]);
        x_phys.extend(perm.to_physical_order(&x_rel[n..]));
        (self.eval)(model.aggregates(), &x_phys)
    }
}

fn g(a: usize) -> BracketExpr {
    BracketExpr::control(ControlIdx::new(a).unwrap())
}

fn br(l: BracketExpr, r: BracketExpr) -> BracketExpr {
    BracketExpr::bracket(l, r)
}

/// The named closed-form bracket components for two- and three-link
/// models. Empty for the three-link with the middle joint unactuated,
/// which has no special-cased forms and follows the general path.
pub fn closed_form_catalog(model: &ChainModel) -> Result<Vec<CatalogEntry>> {
    let n = model.n();
    let u = model.unactuated_joint();
    let f = BracketExpr::drift;
    let entries: Vec<CatalogEntry> = match (n, u) {
        (2, 2) => vec![
            CatalogEntry {
                name: "A1",
                expr: g(2),
                component: 2,
                eval: |p, x| -(p.alpha[1] + p.beta[0] * x[1].cos()) / p.alpha[1],
            },
            CatalogEntry {
                name: "A2",
                expr: br(f(), g(2)),
                component: 2,
                eval: |p, x| p.beta[0] * (2.0 * x[2] + x[3]) * x[1].sin() / p.alpha[1],
            },
            CatalogEntry {
                name: "A3",
                expr: br(g(2), br(f(), g(2))),
                component: 2,
                eval: |p, x| -p.beta[0] * p.beta[0] * (2.0 * x[1]).sin() / (p.alpha[1] * p.alpha[1]),
            },
            CatalogEntry {
                name: "A4",
                expr: br(f(), br(g(2), br(f(), g(2)))),
                component: 2,
                eval: |p, x| {
                    -2.0 * p.beta[0] * p.beta[0] * x[3] * (2.0 * x[1]).cos()
                        / (p.alpha[1] * p.alpha[1])
                },
            },
        ],
        (2, 1) => vec![
            CatalogEntry {
                name: "A1",
                expr: f(),
                component: 2,
                eval: |p, x| {
                    let m11 = p.alpha[0] + p.alpha[1] + 2.0 * p.beta[0] * x[1].cos();
                    (2.0 * p.beta[0] * x[2] * x[3] * x[1].sin()
                        + p.beta[0] * x[3] * x[3] * x[1].sin())
                        / m11
                },
            },
            CatalogEntry {
                name: "A2",
                expr: g(2),
                component: 2,
                eval: |p, x| {
                    let m11 = p.alpha[0] + p.alpha[1] + 2.0 * p.beta[0] * x[1].cos();
                    -(p.alpha[1] + p.beta[0] * x[1].cos()) / m11
                },
            },
            CatalogEntry {
                name: "A3",
                expr: br(f(), br(f(), g(2))),
                component: 0,
                eval: |p, x| {
                    let (a1, a2, b1) = (p.alpha[0], p.alpha[1], p.beta[0]);
                    let m11 = a1 + a2 + 2.0 * b1 * x[1].cos();
                    2.0 * b1
                        * (a1 * x[2] + a2 * (x[2] + x[3]) + b1 * (2.0 * x[2] + x[3]) * x[1].cos())
                        * x[1].sin()
                        / (m11 * m11)
                },
            },
        ],
        (3, 3) => vec![
            CatalogEntry {
                name: "R1",
                expr: br(g(2), br(f(), g(3))),
                component: 3,
                eval: |p, x| {
                    let (b3, b4, a3) = (p.beta[2], p.beta[3], p.alpha[2]);
                    -b3 * (b3 * (2.0 * x[2]).sin() + b4 * (x[1] + 2.0 * x[2]).sin()) / (a3 * a3)
                },
            },
            CatalogEntry {
                name: "R2",
                expr: br(g(2), br(f(), g(2))),
                component: 3,
                eval: |p, x| {
                    let (b3, b4, a3) = (p.beta[2], p.beta[3], p.alpha[2]);
                    -b4 * (b4 * (2.0 * (x[1] + x[2])).sin() + 2.0 * b3 * (x[1] + 2.0 * x[2]).sin())
                        / (a3 * a3)
                        - b3 * b3 * (2.0 * x[2]).sin() / (a3 * a3)
                },
            },
            CatalogEntry {
                name: "R3",
                expr: br(g(3), br(f(), g(3))),
                component: 3,
                eval: |p, x| {
                    let (b3, a3) = (p.beta[2], p.alpha[2]);
                    -b3 * b3 * (2.0 * x[2]).sin() / (a3 * a3)
                },
            },
        ],
        (3, 1) => vec![
            CatalogEntry {
                name: "V1",
                expr: br(f(), g(2)),
                component: 3,
                eval: |p, x| {
                    let (b12, b3, b4) = (p.beta[0] + p.beta[1], p.beta[2], p.beta[3]);
                    let den = p.alpha.iter().sum::<f64>()
                        + 2.0 * b12 * x[1].cos()
                        + 2.0 * b3 * x[2].cos()
                        + 2.0 * b4 * (x[1] + x[2]).cos();
                    let num4 = -b12 * (2.0 * x[3] + x[4]) * x[1].sin()
                        - b4 * (2.0 * x[3] + x[4] + x[5]) * (x[1] + x[2]).sin();
                    num4 / den
                },
            },
            CatalogEntry {
                name: "V2",
                expr: br(f(), g(3)),
                component: 3,
                eval: |p, x| {
                    let (b3, b4) = (p.beta[2], p.beta[3]);
                    let den = p.alpha.iter().sum::<f64>()
                        + 2.0 * (p.beta[0] + p.beta[1]) * x[1].cos()
                        + 2.0 * b3 * x[2].cos()
                        + 2.0 * b4 * (x[1] + x[2]).cos();
                    let num5 = -b3 * (2.0 * x[3] + 2.0 * x[4] + x[5]) * x[2].sin()
                        - b4 * (2.0 * x[3] + x[4] + x[5]) * (x[1] + x[2]).sin();
                    num5 / den
                },
            },
        ],
        (3, 2) => Vec::new(),
        (n, _) => return Err(Error::UnsupportedLinkCount(n)),
    };
    Ok(entries)
}

/// All right-nested brackets `[X_k, [X_{k-1}, [...]]]` of total degree
/// 1..=max_degree over f and the first `n_controls` control fields. Every
/// element of the bracket algebra is a linear combination of these.
pub fn right_nested_brackets(n_controls: usize, max_degree: usize) -> Vec<BracketExpr> {
    let symbols: Vec<Symbol> = std::iter::once(Symbol::Drift)
        .chain((2..2 + n_controls).map(|a| Symbol::Control(ControlIdx::new(a).unwrap())))
        .collect();
    let mut out: Vec<BracketExpr> = Vec::new();
    let mut frontier: Vec<BracketExpr> = symbols.iter().map(|&s| BracketExpr::leaf(s)).collect();
    out.extend(frontier.iter().cloned());
    for _ in 2..=max_degree {
        let mut next = Vec::with_capacity(frontier.len() * symbols.len());
        for inner in &frontier {
            for &s in &symbols {
                next.push(BracketExpr::bracket(BracketExpr::leaf(s), inner.clone()));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Convenience: norm-scaled zero test for an evaluated bracket, using the
/// crate's shared triviality rule.
pub fn is_trivial_at(set: &VectorFieldSet, value: &DVector<f64>, x: &[f64]) -> bool {
    value.norm() < config::zero_threshold(set.field_scale(x))
}
