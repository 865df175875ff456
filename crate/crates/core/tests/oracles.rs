//! The library checked against independent reference computations:
//! quadrature for expectations and marginals, brute-force search for
//! maximum likelihood.

mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use irtvi::models::{Matrix, ModelSpec};
use irtvi::optim::{nll, sgd_train, TrainConfig};
use irtvi::synth::{generate_synthetic, SynthConfig};
use irtvi::vi::{elbo_mc, GaussianVariational, VIParams, ViKind};

use support::*;

#[test]
fn gauss_hermite_matches_published_tables() {
    let (x, w) = gauss_hermite(5);
    let want_x = [-2.020182870456086, -0.9585724646138185, 0.0, 0.9585724646138185, 2.020182870456086];
    let want_w = [0.019953242059045913, 0.39361932315224116, 0.9453087204829419, 0.39361932315224116, 0.019953242059045913];
    for i in 0..5 {
        assert!((x[i] - want_x[i]).abs() < 1e-13, "node {i}: {}", x[i]);
        assert!((w[i] - want_w[i]).abs() < 1e-13, "weight {i}: {}", w[i]);
    }

    let (x, w) = gauss_hermite(64);
    assert!((x[63] - 10.526123167960547).abs() < 1e-11);
    assert!((w[63] / 5.535706535856702e-49 - 1.0).abs() < 1e-9);
    assert!((x[32] - 0.13830224498700971).abs() < 1e-13);
    assert!((w[32] - 0.2713774249413039).abs() < 1e-13);
    let total: f64 = w.iter().sum();
    assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    // exact for polynomials up to degree 127
    let fourth: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
    assert!((fourth - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
}

#[test]
fn one_cell_evidence_matches_trapezoid_integral() {
    let d = dataset(&[("s", "q", "c", 1)]);
    let mut p = VIParams {
        kind: ViKind::RaschVi,
        student: vec![GaussianVariational::new(0.0, 1.0).unwrap()],
        skill: vec![],
        skill_rows: 0,
        dims: 0,
        b_q: vec![-0.7],
        b_qd: Matrix::zeros(1, 0),
    };
    for b_q in [-0.7, 2.5] {
        p.b_q[0] = b_q;
        let quad = log_evidence(&p, &d, 64);
        // trapezoid on [-12, 12] with 240k panels
        let n = 240_000;
        let h = 24.0 / n as f64;
        let f = |b: f64| {
            logistic_ref(b + b_q) * (-0.5 * b * b).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let mut sum = 0.5 * (f(-12.0) + f(12.0));
        for i in 1..n {
            sum += f(-12.0 + i as f64 * h);
        }
        let trap = (sum * h).ln();
        assert!((quad - trap).abs() < 1e-9, "{quad} vs {trap}");
    }
}

#[test]
fn rasch_sgd_reaches_the_brute_force_optimum() {
    // Row sums (1, 2, 2), column sums (2, 2, 1): the maximum is interior.
    let d = dataset(&[
        ("s0", "q0", "c", 1),
        ("s0", "q1", "c", 0),
        ("s0", "q2", "c", 0),
        ("s1", "q0", "c", 1),
        ("s1", "q1", "c", 1),
        ("s1", "q2", "c", 0),
        ("s2", "q0", "c", 0),
        ("s2", "q1", "c", 1),
        ("s2", "q2", "c", 1),
    ]);
    let cells = cells_by_student(&d);
    let (gb_s, gb_q, grid_nll) = rasch_grid_mle(&cells, 3, -4.0, 4.0, 0.02);
    for &v in gb_q.iter().chain(&gb_s) {
        assert!(v.abs() < 3.9, "grid optimum on the boundary: {v}");
    }

    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 20_000,
        batch_size: 9,
        l2_penalty: 0.0,
        convergence_tol: 0.0,
        ..TrainConfig::default()
    };
    let (p, report) = sgd_train(ModelSpec::rasch(), &d, &cfg, None).unwrap();
    assert!(report.final_nll <= grid_nll + 1e-9, "{} vs {grid_nll}", report.final_nll);
    assert!((nll(&p, &d) - report.final_nll).abs() < 1e-12);
    // gauge-free comparison: every cell logit
    for s in 0..3 {
        for q in 0..3 {
            let got = p.logit(s, q, d.class_of()).unwrap();
            let want = gb_s[s] + gb_q[q];
            assert!((got - want).abs() < 0.03, "cell ({s},{q}): {got} vs {want}");
        }
    }
}

fn random_vi(kind: ViKind, d: &irtvi::data::Dataset, dims: usize, rng: &mut ChaCha8Rng) -> VIParams {
    let gv = |rng: &mut ChaCha8Rng| {
        GaussianVariational::new(rng.random_range(-1.5..1.5), rng.random_range(0.2..1.5)).unwrap()
    };
    let rows = match kind {
        ViKind::RaschVi => 0,
        ViKind::InteractionVi => d.num_students(),
        ViKind::ClassInteractionVi => d.num_classes(),
    };
    let dims = if kind == ViKind::RaschVi { 0 } else { dims };
    let q = d.num_questions();
    VIParams {
        kind,
        student: (0..d.num_students()).map(|_| gv(rng)).collect(),
        skill: (0..rows * dims).map(|_| gv(rng)).collect(),
        skill_rows: rows,
        dims,
        b_q: (0..q).map(|_| rng.random_range(-2.0..2.0)).collect(),
        b_qd: Matrix::from_vec(q, dims, (0..q * dims).map(|_| rng.random_range(-1.5..1.5)).collect())
            .unwrap(),
    }
}

fn small_instance(rng: &mut ChaCha8Rng) -> irtvi::data::Dataset {
    let mut rows = Vec::new();
    let names = ["s0", "s1", "s2"];
    let qs = ["q0", "q1", "q2", "q3"];
    for (i, s) in names.iter().enumerate() {
        for q in qs {
            if rng.random_bool(0.8) || i == 0 {
                rows.push((*s, q, if i == 2 { "c1" } else { "c0" }, u8::from(rng.random_bool(0.5))));
            }
        }
    }
    dataset(&rows)
}

#[test]
fn mc_elbo_is_unbiased_for_the_quadrature_elbo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in [ViKind::RaschVi, ViKind::InteractionVi, ViKind::ClassInteractionVi] {
        let d = small_instance(&mut rng);
        let p = random_vi(kind, &d, 1, &mut rng);
        let exact = elbo_quadrature(&p, &d, 64);
        let draws: Vec<f64> = (0..200).map(|seed| elbo_mc(&p, &d, 1, seed).unwrap()).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - exact).abs() < 4.0 * se,
            "{kind}: MC mean {mean} vs quadrature {exact} (se {se})"
        );
    }
}

#[test]
fn elbo_is_below_the_evidence_at_any_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        for kind in [ViKind::RaschVi, ViKind::InteractionVi, ViKind::ClassInteractionVi] {
            let d = small_instance(&mut rng);
            let p = random_vi(kind, &d, 1, &mut rng);
            let elbo = elbo_quadrature(&p, &d, 48);
            let ev = log_evidence(&p, &d, 48);
            assert!(elbo <= ev + 1e-9, "{kind}: elbo {elbo} > evidence {ev}");
        }
    }
}

#[test]
fn two_dimensional_skills_integrate_consistently() {
    // With independent per-student skills the interaction evidence factorises
    // by student, so the class form with one student per class must agree.
    let d = dataset(&[
        ("s0", "q0", "a", 1),
        ("s0", "q1", "a", 0),
        ("s1", "q0", "b", 0),
        ("s1", "q2", "b", 1),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inter = random_vi(ViKind::InteractionVi, &d, 2, &mut rng);
    let mut class = inter.clone();
    class.kind = ViKind::ClassInteractionVi;
    let a = log_evidence(&inter, &d, 24);
    let b = log_evidence(&class, &d, 24);
    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
}

#[test]
fn synthetic_correct_rate_matches_the_generating_integral() {
    let cfg = SynthConfig {
        students: 100_000,
        questions: 3,
        dims: 0,
        mean_bq: -1.0,
        seed: 21,
        ..SynthConfig::default()
    };
    let (d, truth) = generate_synthetic(&cfg).unwrap();
    let (x, w) = gauss_hermite(64);
    let expected: f64 = truth
        .b_q
        .iter()
        .map(|bq| {
            x.iter()
                .zip(&w)
                .map(|(x, w)| w / std::f64::consts::PI.sqrt() * logistic_ref(2f64.sqrt() * x + bq))
                .sum::<f64>()
        })
        .sum::<f64>()
        / 3.0;
    let rate = d.correct_rate();
    let se = (expected * (1.0 - expected) / d.len() as f64).sqrt();
    assert!((rate - expected).abs() < 4.0 * se, "{rate} vs {expected} (se {se})");
}
