//! Acceptance suite: the qualitative results the library must reproduce,
//! each with pinned tolerances. Criteria run sequentially and print one
//! line each; the process exits nonzero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use planarctl::accessibility::{
    algebra_to_depth, involutivity_check, rank_at, spanning_set, Distribution,
};
use planarctl::config;
use planarctl::lie::{
    bracket, closed_form_p_a, closed_form_p_ab, evaluate_expr, right_nested_brackets, BracketExpr,
    SmoothField,
};
use planarctl::model::{ChainModel, LinkParams, State};
use planarctl::pfl::{control_affine, ControlIdx};
use planarctl::stlc::{certificate_search, theta_degree, Rational};
use planarctl::verify::{fd_bracket_oracle, simulate, Drive, SimOptions};

use std::f64::consts::PI;

fn pendubot2() -> ChainModel {
    ChainModel::new(
        vec![
            LinkParams::uniform_rod(1.2, 0.9),
            LinkParams::uniform_rod(0.8, 0.7),
        ],
        2,
    )
    .unwrap()
}

fn acrobot2() -> ChainModel {
    ChainModel::new(
        vec![
            LinkParams::uniform_rod(1.2, 0.9),
            LinkParams::uniform_rod(0.8, 0.7),
        ],
        1,
    )
    .unwrap()
}

fn rods(n: usize, unactuated: usize) -> ChainModel {
    let links = (0..n)
        .map(|i| LinkParams::uniform_rod(1.0 + 0.1 * i as f64, 1.0 - 0.05 * i as f64))
        .collect();
    ChainModel::new(links, unactuated).unwrap()
}

fn cidx(a: usize) -> ControlIdx {
    ControlIdx::new(a).unwrap()
}

fn random_state(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..2 * n)
        .map(|i| {
            if i < n {
                rng.gen_range(-PI..PI)
            } else {
                rng.gen_range(-2.0..2.0)
            }
        })
        .collect()
}

fn assert_under(elapsed: Duration, bound: Duration, what: &str) {
    assert!(
        elapsed < bound,
        "{what} took {elapsed:.2?}, bound {bound:.2?}"
    );
}

// 1. Two-link pendubot spanning family: rank 4 at 1000 generic states,
//    rank < 4 exactly on the singular set. Runtime < 1 s.
fn criterion_01_pendubot_spanning_rank() {
    let model = pendubot2();
    let dist = spanning_set(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut checked = 0;
    while checked < 1000 {
        let x = random_state(2, &mut rng);
        // x[0] is the relabeled passive angle = the physical elbow angle
        if (2.0 * x[0]).sin().abs() < 0.05 {
            continue;
        }
        let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
        assert_eq!(report.rank, 4, "rank 4 expected at {x:?}");
        checked += 1;
    }
    for k in -4i32..=4 {
        let x = [
            k as f64 * PI / 2.0,
            rng.gen_range(-PI..PI),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ];
        let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
        assert!(report.rank < 4, "rank must drop at elbow = {k} pi/2");
    }
    assert_under(start.elapsed(), Duration::from_secs(1), "criterion 1 sweep");
}

// 2. Two-link pendubot: no certificate at any equilibrium, with the lone
//    bad bracket named as the obstruction at generic ones.
fn criterion_02_pendubot_no_certificate() {
    let model = pendubot2();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for k in 0..40 {
        let elbow = if k % 5 == 0 {
            (k as f64 / 5.0) * PI / 2.0
        } else {
            rng.gen_range(-PI..PI)
        };
        let x_e = State::equilibrium(&model, &[rng.gen_range(-PI..PI), elbow]).unwrap();
        let cert = certificate_search(&model, &x_e).unwrap();
        assert!(!cert.found(), "unexpected certificate at elbow {elbow}");
        if (2.0 * elbow).sin().abs() > 1e-3 {
            let obstruction = cert
                .ledger
                .iter()
                .find(|e| e.is_obstruction())
                .expect("obstruction entry must exist at a generic equilibrium");
            assert_eq!(obstruction.expr.to_string(), "[g2,[f,g2]]");
        }
    }
}

// 3. Two-link acrobot: depth-4 algebra has rank exactly 3 generically and
//    exactly 2 at zero-velocity states.
fn criterion_03_acrobot_ranks() {
    let model = acrobot2();
    let dist = algebra_to_depth(&model, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..1000 {
        let x = random_state(2, &mut rng);
        let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
        assert_eq!(report.rank, 3, "generic rank at {x:?}");
    }
    for _ in 0..1000 {
        let x = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), 0.0, 0.0];
        let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
        assert_eq!(report.rank, 2, "equilibrium rank at {x:?}");
    }
}

// 4. Acrobot momentum constancy along a driven trajectory. Runtime < 1 s.
fn criterion_04_acrobot_momentum() {
    let model = acrobot2();
    let x0 = State::from_physical(&model, &[0.3, -0.6], &[0.25, 0.1]).unwrap();
    let drive = Drive::sinusoid_inputs(vec![1.5], vec![2.0]);
    let start = Instant::now();
    let traj = simulate(&model, &x0, &drive, 5.0, &SimOptions::default()).unwrap();
    let drift = planarctl::accessibility::momentum_invariant(&model, &traj).unwrap();
    assert!(drift < 1e-7, "momentum drift {drift}");
    assert_under(
        start.elapsed(),
        Duration::from_secs(1),
        "criterion 4 simulation",
    );
}

// 5. Three-link configuration 1: six-bracket family spans wherever
//    R_1 is away from zero, and the characterized equilibrium set
//    certifies 50/50 with the expected theta-degrees.
fn criterion_05_three_link_config1() {
    let model = rods(3, 3);
    let dist = spanning_set(&model).unwrap();
    let set = dist.set().clone();
    assert_eq!(dist.len(), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..1000 {
        let x = random_state(3, &mut rng);
        let r1 = closed_form_p_ab(&set, &x, cidx(2), cidx(3));
        if r1.abs() > 1e-6 {
            let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
            assert_eq!(report.rank, 6, "rank 6 expected where |R_1| = {r1}");
        }
    }

    let mut hits = 0;
    for _ in 0..50 {
        let k = rng.gen_range(0..4) as f64;
        let x2 = loop {
            let v: f64 = rng.gen_range(-PI..PI);
            if v.sin().abs() > 0.05 {
                break v;
            }
        };
        let q = [rng.gen_range(-PI..PI), x2, k * PI / 2.0];
        let x_e = State::equilibrium(&model, &q).unwrap();
        let cert = certificate_search(&model, &x_e).unwrap();
        assert!(cert.found(), "no certificate at {q:?}: {}", cert.reason);
        hits += 1;
        // theta-degrees of ([g2,[f,g3]], [g2,[f,g2]], [g3,[f,g3]]) under
        // the returned pattern must be (4,3,5) or (4,5,3)
        let theta = cert.theta.as_ref().unwrap();
        let degs = (
            theta_degree(&"[g2,[f,g3]]".parse().unwrap(), theta).unwrap(),
            theta_degree(&"[g2,[f,g2]]".parse().unwrap(), theta).unwrap(),
            theta_degree(&"[g3,[f,g3]]".parse().unwrap(), theta).unwrap(),
        );
        let i = Rational::integer;
        assert!(
            degs == (i(4), i(3), i(5)) || degs == (i(4), i(5), i(3)),
            "unexpected theta-degrees {degs:?}"
        );
    }
    assert_eq!(hits, 50);
}

// 6. Three-link configuration 3: control brackets vanish, the five-field
//    family is involutive, and the algebra never exceeds rank 5.
fn criterion_06_three_link_config3() {
    let model = rods(3, 1);
    let set = control_affine(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let g2 = SmoothField::control(&set, cidx(2));
    let g3 = SmoothField::control(&set, cidx(3));
    let f = SmoothField::drift(&set);
    let fg2 = bracket(&f, &g2).unwrap();
    let fg3 = bracket(&f, &g3).unwrap();

    for _ in 0..1000 {
        let x = random_state(3, &mut rng);
        assert!(bracket(&g2, &g3).unwrap().eval(&x).unwrap().norm() < 1e-9);
        for gi in [&g2, &g3] {
            for fgj in [&fg2, &fg3] {
                let v = bracket(gi, fgj).unwrap().eval(&x).unwrap();
                assert!(v.norm() < 1e-9, "[g_i,[f,g_j]] = {}", v.norm());
            }
        }
    }

    let report = involutivity_check(
        &[f.clone(), g2, g3, fg2.clone(), fg3.clone()],
        config::INVOLUTIVITY_SAMPLES,
        &mut rng,
    )
    .unwrap();
    assert!(
        report.involutive,
        "five-field family not involutive (ratio {})",
        report.max_residual_ratio
    );

    // depth-4 right-nested algebra plus the bracketed-pair field
    let mut gens = right_nested_brackets(2, 5);
    gens.push(BracketExpr::bracket(fg2.expr().clone(), fg3.expr().clone()));
    let dist = Distribution::new(&set, gens);
    let mut generic_full = 0;
    for _ in 0..150 {
        let x = random_state(3, &mut rng);
        let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
        assert!(report.rank <= 5, "rank {} > 5 at {x:?}", report.rank);
        if report.rank == 5 {
            generic_full += 1;
        }
    }
    assert!(generic_full >= 148, "generic dimension 5 missed too often");
}

// 7. N = 4, 5 closed forms against the dual-number and finite-difference
//    bracket oracles; velocity independence by differentiation.
//    Runtime < 10 s total.
fn criterion_07_nlink_closed_forms() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for model in [rods(4, 4), rods(5, 3)] {
        let set = control_affine(&model);
        let n = model.n();
        for _ in 0..500 {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                let expr: BracketExpr = format!("[f,g{}]", a.get()).parse().unwrap();
                let closed = closed_form_p_a(&set, &x, a);
                let dual = evaluate_expr(&expr, &set, &x).unwrap()[n];
                let fd = fd_bracket_oracle(&set, &expr, &x, 1.0).unwrap()[n];
                let scale = 1.0 + closed.abs();
                assert!((closed - dual).abs() / scale < 1e-7);
                assert!((closed - fd).abs() / scale < 1e-7, "P_a vs FD");
            }
        }
        for _ in 0..500 {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                for b in set.controls().filter(|b| b.get() >= a.get()) {
                    let expr: BracketExpr =
                        format!("[g{},[f,g{}]]", a.get(), b.get()).parse().unwrap();
                    let closed = closed_form_p_ab(&set, &x, a, b);
                    let dual = evaluate_expr(&expr, &set, &x).unwrap()[n];
                    let fd = fd_bracket_oracle(&set, &expr, &x, 1.0).unwrap()[n];
                    let scale = 1.0 + closed.abs();
                    assert!((closed - dual).abs() / scale < 1e-5);
                    assert!((closed - fd).abs() / scale < 1e-5, "P_ab vs FD");
                }
            }
        }
        // velocity independence of the P_ab row, by differentiation
        for _ in 0..10 {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                for b in set.controls().filter(|b| b.get() >= a.get()) {
                    let expr: BracketExpr =
                        format!("[g{},[f,g{}]]", a.get(), b.get()).parse().unwrap();
                    let field = SmoothField::from_expr(&set, expr);
                    let jac = field.jacobian(&x).unwrap();
                    for col in n..2 * n {
                        assert!(
                            jac[(n, col)].abs() < 1e-10,
                            "P_ab velocity sensitivity {}",
                            jac[(n, col)]
                        );
                    }
                }
            }
        }
    }
    assert_under(
        start.elapsed(),
        Duration::from_secs(10),
        "criterion 7 oracle sweeps",
    );
}

// 8. N = 4, 5 base-unactuated: P_ab and Q_a vanish and the algebra stays
//    below full rank everywhere.
fn criterion_08_nlink_base_unactuated() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for model in [rods(4, 1), rods(5, 1)] {
        let set = control_affine(&model);
        let n = model.n();
        let mut worst_p: f64 = 0.0;
        for _ in 0..500 {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                for b in set.controls().filter(|b| b.get() >= a.get()) {
                    let expr: BracketExpr =
                        format!("[g{},[f,g{}]]", a.get(), b.get()).parse().unwrap();
                    let v = evaluate_expr(&expr, &set, &x).unwrap();
                    worst_p = worst_p.max(v.norm());
                }
            }
        }
        assert!(worst_p < 1e-9, "P_ab residual {worst_p}");
        let worst_q =
            planarctl::verify::qa_vanishing_check(&model, 500, &mut rng).unwrap();
        assert!(worst_q < 1e-9, "Q_a residual {worst_q}");

        // depth-3 right-nested algebra plus the [[f,g_a],[f,g_b]] pairs
        let mut gens = right_nested_brackets(n - 1, 4);
        let fg: Vec<BracketExpr> = set
            .controls()
            .map(|a| {
                BracketExpr::bracket(BracketExpr::drift(), BracketExpr::control(a))
            })
            .collect();
        for i in 0..fg.len() {
            for j in i + 1..fg.len() {
                gens.push(BracketExpr::bracket(fg[i].clone(), fg[j].clone()));
            }
        }
        let dist = Distribution::new(&set, gens);
        let samples = if n == 4 { 150 } else { 80 };
        let mut generic_full = 0;
        for _ in 0..samples {
            let x = random_state(n, &mut rng);
            let report = rank_at(&dist, &x, config::RANK_TOL).unwrap();
            assert!(
                report.rank < 2 * n,
                "rank {} exceeds 2N-1 at {x:?}",
                report.rank
            );
            if report.rank == 2 * n - 1 {
                generic_full += 1;
            }
        }
        assert!(
            generic_full >= samples - 2,
            "generic dimension 2N-1 missed too often ({generic_full}/{samples})"
        );
    }
}

// 9. Equilibrium-triviality pruning: every normal-form bracket to degree 7
//    outside the nontrivial classes vanishes where the criterion says.
fn criterion_09_triviality_pruning() {
    let model = pendubot2();
    let set = control_affine(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let exprs: Vec<BracketExpr> = right_nested_brackets(1, 7)
        .into_iter()
        .filter(|e| !matches!(e.control_excess(), 0 | 1))
        .collect();
    assert!(exprs.len() > 100);
    let equilibria: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), 0.0, 0.0])
        .collect();
    let generic: Vec<Vec<f64>> = (0..100).map(|_| random_state(2, &mut rng)).collect();
    for expr in &exprs {
        let states: &[Vec<f64>] = if expr.control_excess() >= 2 {
            &generic
        } else {
            &equilibria
        };
        for x in states {
            let v = evaluate_expr(expr, &set, x).unwrap();
            let thresh = config::zero_threshold(set.field_scale(x));
            assert!(
                v.norm() < thresh,
                "{expr} (excess {}) = {} at {x:?}",
                expr.control_excess(),
                v.norm()
            );
        }
    }
}

// 10. Velocity-homogeneity scaling law: lambda-scaling recovers the
//     predicted integer exponents of configuration and velocity rows.
fn criterion_10_scaling_law() {
    let model = rods(3, 3);
    let set = control_affine(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    // 20 brackets with varied drift/control balance
    let picks: Vec<BracketExpr> = right_nested_brackets(2, 4)
        .into_iter()
        .filter(|e| e.degree() >= 2 && e.control_excess() <= 1)
        .step_by(2)
        .take(20)
        .collect();
    assert_eq!(picks.len(), 20);
    let n = 3;
    for expr in &picks {
        let predicted = expr.delta0() as isize
            - expr.control_counts().map(|(_, c)| c as isize).sum::<isize>();
        for lam in [2.0_f64, 3.0] {
            let x = random_state(n, &mut rng);
            let mut xs = x.clone();
            for v in xs[n..].iter_mut() {
                *v *= lam;
            }
            let base = evaluate_expr(expr, &set, &x).unwrap();
            let scaled = evaluate_expr(expr, &set, &xs).unwrap();
            for i in 0..2 * n {
                let deg = if i < n { predicted } else { predicted + 1 };
                if deg < 0 || base[i].abs() < 1e-7 {
                    let cap = 1e-7 * lam.powi(deg.max(0) as i32 + 1);
                    assert!(
                        scaled[i].abs() < cap.max(1e-7),
                        "{expr} row {i} should stay zero"
                    );
                } else {
                    let measured = (scaled[i] / base[i]).abs().ln() / lam.ln();
                    assert!(
                        (measured - deg as f64).abs() < 1e-6,
                        "{expr} row {i}: exponent {measured} vs {deg}"
                    );
                }
            }
        }
    }
}

fn main() {
    let criteria: Vec<(&str, fn())> = vec![
        (
            "criterion 01 pendubot spanning rank",
            criterion_01_pendubot_spanning_rank,
        ),
        (
            "criterion 02 pendubot no certificate",
            criterion_02_pendubot_no_certificate,
        ),
        ("criterion 03 acrobot ranks", criterion_03_acrobot_ranks),
        ("criterion 04 acrobot momentum", criterion_04_acrobot_momentum),
        (
            "criterion 05 three-link config 1",
            criterion_05_three_link_config1,
        ),
        (
            "criterion 06 three-link config 3",
            criterion_06_three_link_config3,
        ),
        (
            "criterion 07 N-link closed forms",
            criterion_07_nlink_closed_forms,
        ),
        (
            "criterion 08 N-link base-unactuated",
            criterion_08_nlink_base_unactuated,
        ),
        (
            "criterion 09 triviality pruning",
            criterion_09_triviality_pruning,
        ),
        ("criterion 10 scaling law", criterion_10_scaling_law),
    ];

    let mut failures = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("{name}: PASS ({:.2?})", start.elapsed()),
            Err(err) => {
                failures += 1;
                let msg = err
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| err.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                println!("{name}: FAIL ({msg})");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
