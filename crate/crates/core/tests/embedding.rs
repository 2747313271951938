use dynkt::data::{generate_synthetic, Dataset, DatasetBuilder, Interaction, SyntheticConfig};
use dynkt::embedding::{online_update, train_mf, FactorModel, MfTrainConfig, OnlineScope};
use dynkt::mathcore::{Matrix, SeededRng};
use proptest::prelude::*;

fn random_instance(seed: u64) -> (FactorModel, Dataset) {
    let mut rng = SeededRng::new(seed);
    let mut b = DatasetBuilder::new();
    for _ in 0..30 {
        let s = rng.below(5);
        let q = rng.below(7);
        let r = u8::from(rng.uniform() < 0.5);
        b.push(&format!("s{s}"), &format!("q{q}"), r, None, None);
    }
    let ds = b.build().unwrap();
    let d = 3;
    let mut m = FactorModel::zeros(ds.num_questions(), ds.num_students(), d);
    m.w = Matrix::random_normal(m.w.rows(), d, 0.7, &mut rng);
    m.z = Matrix::random_normal(m.z.rows(), d, 0.7, &mut rng);
    m.b.iter_mut().for_each(|v| *v = rng.normal());
    m.c.iter_mut().for_each(|v| *v = rng.normal());
    m.lambda = 0.3;
    m.mu = 0.2;
    (m, ds)
}

/// Batch objective whose gradient `FactorModel::gradient` returns.
fn batch_objective(m: &FactorModel, batch: &[Interaction], n: usize) -> f64 {
    let loss: f64 = batch
        .iter()
        .map(|it| {
            let p = m.predict(it.student, it.question).value();
            if it.response == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    let reg = m.lambda * (m.w.frobenius_sq() + m.z.frobenius_sq()) + m.mu * m.w.l1();
    loss + reg * batch.len() as f64 / n as f64
}

fn param(m: &mut FactorModel, kind: u8, i: usize) -> &mut f64 {
    match kind {
        0 => &mut m.w.as_mut_slice()[i],
        1 => &mut m.z.as_mut_slice()[i],
        2 => &mut m.b[i],
        _ => &mut m.c[i],
    }
}

fn fd_check(seed: u64) {
    let (mut m, ds) = random_instance(seed);
    let batch = &ds.interactions()[..12];
    let n = ds.len();
    let g = m.gradient(batch, n).unwrap();
    let h = 1e-5;
    let (rows_w, rows_z) = (m.w.rows(), m.z.rows());
    let mut params: Vec<(u8, usize, f64)> = Vec::new();
    params.extend((0..rows_w * 3).map(|i| (0, i, g.w.as_slice()[i])));
    params.extend((0..rows_z * 3).map(|i| (1, i, g.z.as_slice()[i])));
    params.extend((0..rows_w).map(|i| (2, i, g.b[i])));
    params.extend((0..rows_z).map(|i| (3, i, g.c[i])));
    for (kind, i, analytic) in params {
        let orig = *param(&mut m, kind, i);
        *param(&mut m, kind, i) = orig + h;
        let up = batch_objective(&m, batch, n);
        *param(&mut m, kind, i) = orig - h;
        let down = batch_objective(&m, batch, n);
        *param(&mut m, kind, i) = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        assert!(rel < 1e-4, "seed {seed}: numeric {numeric} analytic {analytic}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..1_000_000) {
        fd_check(seed);
    }
}

#[test]
fn hand_fixture_objective() {
    let mut b = DatasetBuilder::new();
    b.push("a", "x", 1, None, None);
    b.push("a", "y", 0, None, None);
    b.push("b", "x", 0, None, None);
    let ds = b.build().unwrap();
    let mut m = FactorModel::zeros(2, 2, 2);
    m.w = Matrix::from_vec(2, 2, vec![0.5, -1.0, 0.25, 2.0]).unwrap();
    m.z = Matrix::from_vec(2, 2, vec![1.0, 0.5, -0.5, 1.5]).unwrap();
    m.b = vec![0.1, -0.2];
    m.c = vec![0.3, -0.4];
    m.lambda = 0.5;
    m.mu = 0.25;
    // Logits by hand: (a,x) 0.5-0.5+0.1+0.3 = 0.4; (a,y) 0.25+1.0-0.2+0.3 = 1.35;
    // (b,x) -0.25-1.5+0.1-0.4 = -2.05.
    let lse = |x: f64| (1.0 + x.exp()).ln();
    let loss = lse(-0.4) + lse(1.35) + lse(-2.05);
    let l2 = (0.25 + 1.0 + 0.0625 + 4.0) + (1.0 + 0.25 + 0.25 + 2.25);
    let l1 = 0.5 + 1.0 + 0.25 + 2.0;
    let expected = loss + 0.5 * l2 + 0.25 * l1;
    assert!((m.objective(&ds).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn full_batch_descent() {
    let (mut m, ds) = random_instance(7);
    m.mu = 0.0;
    let n = ds.len();
    let mut last = m.objective(&ds).unwrap();
    for _ in 0..50 {
        let g = m.gradient(ds.interactions(), n).unwrap();
        for (p, gv) in m.w.as_mut_slice().iter_mut().zip(g.w.as_slice()) {
            *p -= 1e-3 * gv;
        }
        for (p, gv) in m.z.as_mut_slice().iter_mut().zip(g.z.as_slice()) {
            *p -= 1e-3 * gv;
        }
        for (p, gv) in m.b.iter_mut().zip(&g.b) {
            *p -= 1e-3 * gv;
        }
        for (p, gv) in m.c.iter_mut().zip(&g.c) {
            *p -= 1e-3 * gv;
        }
        let now = m.objective(&ds).unwrap();
        assert!(now <= last);
        last = now;
    }
}

fn static_data(seed: u64) -> Dataset {
    let cfg = SyntheticConfig::new(60, 20, 3, 20);
    generate_synthetic(&cfg, &mut SeededRng::new(seed)).unwrap().0
}

#[test]
fn l1_produces_exact_zeros() {
    let ds = static_data(1);
    let zeros = |mu: f64| {
        let cfg = MfTrainConfig {
            dim: 4,
            lambda: 0.0,
            mu,
            epochs: 10,
            ..Default::default()
        };
        let (m, _) = train_mf(&ds, &cfg, &mut SeededRng::new(3)).unwrap();
        m.w.as_slice().iter().filter(|v| v.abs() < 1e-8).count()
    };
    assert!(zeros(1.0) > zeros(0.0));
}

#[test]
fn training_is_deterministic() {
    let ds = static_data(2);
    let cfg = MfTrainConfig {
        dim: 3,
        epochs: 3,
        mu: 0.05,
        ..Default::default()
    };
    let a = train_mf(&ds, &cfg, &mut SeededRng::new(9)).unwrap();
    let b = train_mf(&ds, &cfg, &mut SeededRng::new(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_online_update_is_identity() {
    let (m, _) = random_instance(3);
    let cfg = MfTrainConfig::default();
    assert_eq!(online_update(&m, &[], &cfg, OnlineScope::StudentsOnly).unwrap(), m);
}

#[test]
fn online_update_recovers_new_student_direction() {
    let d = 2;
    let mut total = 0.0;
    for seed in 0..20 {
        let mut rng = SeededRng::new(seed);
        let mut m = FactorModel::zeros(50, 1, d);
        m.w = Matrix::random_normal(50, d, 1.0, &mut rng);
        m.lambda = 0.1;
        let truth: Vec<f64> = (0..d).map(|_| 2.0 * rng.normal()).collect();
        let history: Vec<Interaction> = (0..20)
            .map(|t| {
                let q = rng.below(50);
                let logit: f64 = m.w.row(q).iter().zip(&truth).map(|(a, b)| a * b).sum();
                let r = u8::from(rng.uniform() < 1.0 / (1.0 + (-logit).exp()));
                Interaction {
                    student: 1,
                    question: q,
                    response: r,
                    skill: None,
                    timestamp: None,
                    position: t,
                }
            })
            .collect();
        let cfg = MfTrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            lambda: 0.1,
            ..Default::default()
        };
        let up = online_update(&m, &history, &cfg, OnlineScope::StudentsOnly).unwrap();
        assert_eq!(up.w, m.w);
        assert_eq!(up.b, m.b);
        let z = up.z.row(1);
        let dot: f64 = z.iter().zip(&truth).map(|(a, b)| a * b).sum();
        let nz = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nt = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
        total += dot / (nz * nt).max(1e-12);
    }
    assert!(total / 20.0 > 0.7, "mean cosine {}", total / 20.0);
}
