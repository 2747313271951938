use dynkt::analysis::{classical_mds, double_center, pairwise_distances, skill_cluster_score, top_eigenpairs, EmbeddingProjection};
use dynkt::mathcore::{Matrix, SeededRng};

fn planar(k: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(k, 2, |_, j| if j == 0 { 3.0 * rng.normal() } else { rng.normal() })
}

#[test]
fn planar_round_trip() {
    let mut rng = SeededRng::new(17);
    for &k in &[3, 10, 50, 200] {
        let x = planar(k, &mut rng);
        let ids: Vec<usize> = (0..k).collect();
        let d = pairwise_distances(&x, &ids).unwrap();
        let p = classical_mds(&d, 2).unwrap();
        assert!(p.stress < 1e-6, "k={k} stress={}", p.stress);
        let r = pairwise_distances(&p.coordinates, &ids).unwrap();
        for (a, b) in r.as_slice().iter().zip(d.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
        for c in 0..2 {
            let mean: f64 = (0..k).map(|i| p.coordinates.get(i, c)).sum::<f64>() / k as f64;
            assert!(mean.abs() < 1e-9);
        }
    }
}

#[test]
fn isotropic_cloud_round_trip() {
    // Nearly equal top eigenvalues.
    let k = 60;
    let x = Matrix::from_fn(k, 2, |i, j| {
        let a = i as f64 * std::f64::consts::TAU / k as f64;
        if j == 0 { a.cos() } else { a.sin() }
    });
    let d = pairwise_distances(&x, &(0..k).collect::<Vec<_>>()).unwrap();
    assert!(classical_mds(&d, 2).unwrap().stress < 1e-6);
}

#[test]
fn relabeling_only_rotates() {
    let mut rng = SeededRng::new(3);
    let x = planar(30, &mut rng);
    let ids: Vec<usize> = (0..30).collect();
    let mut perm = ids.clone();
    rng.shuffle(&mut perm);
    let a = classical_mds(&pairwise_distances(&x, &ids).unwrap(), 2).unwrap();
    let b = classical_mds(&pairwise_distances(&x, &perm).unwrap(), 2).unwrap();
    let ra = pairwise_distances(&a.coordinates, &perm).unwrap();
    let rb = pairwise_distances(&b.coordinates, &ids).unwrap();
    for (u, v) in ra.as_slice().iter().zip(rb.as_slice()) {
        assert!((u - v).abs() < 1e-9, "{u} {v}");
    }
}

fn cubic_roots(m: &Matrix) -> [f64; 3] {
    // Characteristic polynomial of a symmetric 3x3 matrix, solved with the
    // trigonometric form for three real roots.
    let g = |i, j| m.get(i, j);
    let tr = g(0, 0) + g(1, 1) + g(2, 2);
    let minors = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) + g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0) + g(1, 1) * g(2, 2)
        - g(1, 2) * g(2, 1);
    let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
        + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
    // x^3 - tr x^2 + minors x - det = 0, substitute x = t + tr/3.
    let p = minors - tr * tr / 3.0;
    let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
    let r = (-p / 3.0).max(0.0).sqrt();
    let mut roots = [tr / 3.0; 3];
    if r > 0.0 {
        let phi = (-q / (2.0 * r.powi(3))).clamp(-1.0, 1.0).acos() / 3.0;
        for (k, root) in roots.iter_mut().enumerate() {
            *root = tr / 3.0 + 2.0 * r * (phi - std::f64::consts::TAU * k as f64 / 3.0).cos();
        }
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

#[test]
fn power_iteration_matches_characteristic_polynomial() {
    let mut rng = SeededRng::new(99);
    for _ in 0..50 {
        let x = Matrix::from_fn(3, 3, |_, _| rng.normal());
        let d = pairwise_distances(&x, &[0, 1, 2]).unwrap();
        let b = double_center(&d);
        let roots = cubic_roots(&b);
        let pairs = top_eigenpairs(&b, 3, &[]).unwrap();
        for (k, (value, _)) in pairs.iter().enumerate() {
            assert!((value - roots[k]).abs() < 1e-8, "{value} vs {}", roots[k]);
        }
    }
}

#[test]
fn shuffled_labels_near_chance() {
    let mut rng = SeededRng::new(8);
    let s = 4;
    let k = 200;
    let x = planar(k, &mut rng);
    let mut labels: Vec<usize> = (0..k).map(|i| i % s).collect();
    let mut total = 0.0;
    for _ in 0..20 {
        rng.shuffle(&mut labels);
        let p = EmbeddingProjection {
            coordinates: x.clone(),
            question_ids: (0..k).map(|i| i.to_string()).collect(),
            skill_ids: labels.iter().map(|l| Some(l.to_string())).collect(),
            stress: 0.0,
            eigenvalues: vec![],
        };
        total += skill_cluster_score(&p).unwrap();
    }
    assert!((total / 20.0 - 1.0 / s as f64).abs() < 0.1);
}

#[test]
fn triangle_inequality() {
    let mut rng = SeededRng::new(1);
    let x = Matrix::from_fn(12, 4, |_, _| rng.normal());
    let d = pairwise_distances(&x, &(0..12).collect::<Vec<_>>()).unwrap();
    for i in 0..12 {
        for j in 0..12 {
            for k in 0..12 {
                assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
            }
        }
    }
}
