//! Reference computations for the integration tests.
//!
//! Everything here is written from the model definitions directly and shares
//! no numerical code with the library: its own Gauss–Hermite rule, its own
//! stable `ln(1 + e^z)`, its own likelihood loops.
#![allow(dead_code)]

use std::f64::consts::PI;

use irtvi::data::{build_dataset_labelled, Dataset, LabelledRow};
use irtvi::vi::{ViKind, VIParams};

/// `ln(1 + e^z)` without overflow.
pub fn softplus_ref(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn logistic_ref(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-likelihood of `y` under logit `z`.
pub fn log_bernoulli(y: u8, z: f64) -> f64 {
    f64::from(y) * z - softplus_ref(z)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Physicists' Gauss–Hermite rule for ∫ e^{-x²} f(x) dx, nodes ascending.
///
/// Newton iteration on the orthonormal Hermite recurrence with the usual
/// asymptotic starting guesses for the largest roots.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Tensor-product Gauss–Hermite rule for expectations under independent
/// normals: returns `(points, log_weights)` where each point has one
/// coordinate per `(mu, sigma)` pair and the weights sum to one.
pub fn normal_grid(mus: &[f64], sigmas: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (x, w) = gauss_hermite(n);
    let lw: Vec<f64> = w.iter().map(|w| (w / PI.sqrt()).ln()).collect();
    let mut points = vec![Vec::new()];
    let mut logw = vec![0.0];
    for (&mu, &sigma) in mus.iter().zip(sigmas) {
        let mut np = Vec::with_capacity(points.len() * n);
        let mut nw = Vec::with_capacity(points.len() * n);
        for (p, pw) in points.iter().zip(&logw) {
            for i in 0..n {
                let mut q = p.clone();
                q.push(mu + 2f64.sqrt() * sigma * x[i]);
                np.push(q);
                nw.push(pw + lw[i]);
            }
        }
        points = np;
        logw = nw;
    }
    (points, logw)
}

/// Response cells of each student: `(question, y)`.
pub fn cells_by_student(d: &Dataset) -> Vec<Vec<(usize, u8)>> {
    let mut out = vec![Vec::new(); d.num_students()];
    for r in d.responses() {
        out[r.student].push((r.question, r.y));
    }
    out
}

/// Log-likelihood of one student's cells at ability `b` and skill vector `k`.
pub fn student_loglik(p: &VIParams, cells: &[(usize, u8)], b: f64, k: &[f64]) -> f64 {
    cells
        .iter()
        .map(|&(q, y)| {
            let inter: f64 = (0..p.dims).map(|j| k[j] * p.b_qd.row(q)[j]).sum();
            log_bernoulli(y, b + p.b_q[q] + inter)
        })
        .sum()
}

fn skill_row(p: &VIParams, s: usize, class_of: &[usize]) -> Option<usize> {
    match p.kind {
        ViKind::RaschVi => None,
        ViKind::InteractionVi => Some(s),
        ViKind::ClassInteractionVi => Some(class_of[s]),
    }
}

/// Closed-form KL(N(μ, σ²) ‖ N(0, 1)).
pub fn kl_std_normal(mu: f64, sigma: f64) -> f64 {
    0.5 * (sigma * sigma + mu * mu - 1.0) - sigma.ln()
}

/// ELBO with every expectation done by `n`-node Gauss–Hermite quadrature.
pub fn elbo_quadrature(p: &VIParams, d: &Dataset, n: usize) -> f64 {
    let cells = cells_by_student(d);
    let mut total = 0.0;
    for (s, cells) in cells.iter().enumerate() {
        let mut mus = vec![p.student[s].mu];
        let mut sigmas = vec![p.student[s].sigma()];
        if let Some(row) = skill_row(p, s, d.class_of()) {
            for j in 0..p.dims {
                mus.push(p.skill_at(row, j).mu);
                sigmas.push(p.skill_at(row, j).sigma());
            }
        }
        let (points, logw) = normal_grid(&mus, &sigmas, n);
        total += points
            .iter()
            .zip(&logw)
            .map(|(pt, lw)| lw.exp() * student_loglik(p, cells, pt[0], &pt[1..]))
            .sum::<f64>();
    }
    let kl: f64 = p
        .student
        .iter()
        .chain(&p.skill)
        .map(|g| kl_std_normal(g.mu, g.sigma()))
        .sum();
    total - kl
}

/// log ∫ p(y_s | b, k) N(b; 0, 1) N(k; 0, I) db dk for one student.
fn log_marginal_student(p: &VIParams, cells: &[(usize, u8)], dims: usize, n: usize) -> f64 {
    let (points, logw) = normal_grid(&vec![0.0; 1 + dims], &vec![1.0; 1 + dims], n);
    let terms: Vec<f64> = points
        .iter()
        .zip(&logw)
        .map(|(pt, lw)| lw + student_loglik(p, cells, pt[0], &pt[1..]))
        .collect();
    log_sum_exp(&terms)
}

/// Exact log evidence of the data at the question parameters stored in `p`,
/// integrating every latent against its standard normal prior with `n`
/// nodes per dimension.
pub fn log_evidence(p: &VIParams, d: &Dataset, n: usize) -> f64 {
    let cells = cells_by_student(d);
    match p.kind {
        ViKind::RaschVi => cells.iter().map(|c| log_marginal_student(p, c, 0, n)).sum(),
        ViKind::InteractionVi => {
            cells.iter().map(|c| log_marginal_student(p, c, p.dims, n)).sum()
        }
        ViKind::ClassInteractionVi => {
            // Abilities are integrated per student inside the shared class
            // vector integral.
            let (bx, bw) = normal_grid(&[0.0], &[1.0], n);
            let (kpts, kw) = normal_grid(&vec![0.0; p.dims], &vec![1.0; p.dims], n);
            let mut total = 0.0;
            for c in 0..d.num_classes() {
                let members: Vec<usize> =
                    (0..d.num_students()).filter(|&s| d.class_of()[s] == c).collect();
                let outer: Vec<f64> = kpts
                    .iter()
                    .zip(&kw)
                    .map(|(k, lkw)| {
                        lkw + members
                            .iter()
                            .map(|&s| {
                                let inner: Vec<f64> = bx
                                    .iter()
                                    .zip(&bw)
                                    .map(|(b, lbw)| lbw + student_loglik(p, &cells[s], b[0], k))
                                    .collect();
                                log_sum_exp(&inner)
                            })
                            .sum::<f64>()
                    })
                    .collect();
                total += log_sum_exp(&outer);
            }
            total
        }
    }
}

/// Builds a dataset from `(student, question, class, y)` tuples.
pub fn dataset(rows: &[(&str, &str, &str, u8)]) -> Dataset {
    let rows: Vec<LabelledRow> = rows
        .iter()
        .map(|&(s, q, c, y)| LabelledRow {
            student_id: s.into(),
            question_id: q.into(),
            class_id: c.into(),
            y,
        })
        .collect();
    build_dataset_labelled(&rows).expect("valid test dataset")
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Rasch maximum likelihood by brute force: question easiness on a grid with
/// the first question pinned to 0, abilities profiled out exactly per
/// student (the NLL is convex in each ability). Returns `(b_s, b_q, nll)`.
pub fn rasch_grid_mle(
    cells: &[Vec<(usize, u8)>],
    questions: usize,
    lo: f64,
    hi: f64,
    step: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let steps = ((hi - lo) / step).round() as usize;
    let free = questions - 1;
    let mut idx = vec![0usize; free];
    let mut best = (Vec::new(), Vec::new(), f64::INFINITY);
    loop {
        let mut b_q = vec![0.0];
        b_q.extend(idx.iter().map(|&i| lo + i as f64 * step));
        let mut b_s = Vec::with_capacity(cells.len());
        let mut total = 0.0;
        for c in cells {
            let nll = |b: f64| -> f64 { c.iter().map(|&(q, y)| -log_bernoulli(y, b + b_q[q])).sum() };
            let (b, v) = golden_min(nll, -12.0, 12.0, 80);
            b_s.push(b);
            total += v;
        }
        if total < best.2 {
            best = (b_s, b_q, total);
        }
        // odometer over the free coordinates
        let mut k = 0;
        while k < free {
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == free {
            break;
        }
    }
    best
}
