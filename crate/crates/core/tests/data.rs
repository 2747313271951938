use std::path::PathBuf;

use dynkt::data::{
    generate_synthetic, load_assistments, load_cognitive_tutor, split_students, Dataset, DatasetBuilder,
    DedupPolicy, SyntheticConfig,
};
use dynkt::mathcore::SeededRng;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn assistments_fixture_counts() {
    let (ds, st) = load_assistments(fixture("assistments_mini.csv"), DedupPolicy::Discard).unwrap();
    assert_eq!(st.rows_read, 6);
    assert_eq!(st.not_original_removed, 1);
    assert_eq!(st.interactions, 3);
    assert_eq!(ds.len(), 3);

    let (ds, st) = load_assistments(fixture("assistments_mini.csv"), DedupPolicy::Merge).unwrap();
    assert_eq!(st.interactions, 4);
    assert_eq!(ds.num_students(), 2);
    assert!(ds.skills().unwrap().iter().any(|s| s == "11+12"));
}

#[test]
fn cognitive_tutor_fixture_counts() {
    let (ds, st) = load_cognitive_tutor(fixture("cognitive_tutor_mini.tsv")).unwrap();
    assert_eq!(st.interactions, 5);
    assert_eq!(ds.len(), 5);
    assert_eq!(ds.num_questions(), 4);
    assert_eq!(ds.num_students(), 2);
    assert_eq!(ds.num_skills(), Some(2));
}

/// Cleaning an already clean export again changes nothing.
#[test]
fn dedup_is_idempotent() {
    let (ds, _) = load_assistments(fixture("assistments_mini.csv"), DedupPolicy::Discard).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clean.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(["order_id", "user_id", "problem_id", "correct", "skill_id", "original"]).unwrap();
    for (i, it) in ds.interactions().iter().enumerate() {
        w.write_record([
            i.to_string(),
            ds.students().raw(it.student).unwrap().to_owned(),
            ds.questions().raw(it.question).unwrap().to_owned(),
            it.response.to_string(),
            it.skill.and_then(|k| ds.skills().unwrap().raw(k)).unwrap_or("").to_owned(),
            "1".to_owned(),
        ])
        .unwrap();
    }
    w.flush().unwrap();
    drop(w);
    let (again, st) = load_assistments(&path, DedupPolicy::Discard).unwrap();
    assert_eq!(st.rows_read, st.interactions);
    assert_eq!(again.interactions(), ds.interactions());
}

/// Chi-square statistic (1 df) of a 2x2 table, or None when an expected
/// cell count is below 5.
fn chi_square_2x2(a: [u32; 2], b: [u32; 2]) -> Option<f64> {
    let n = (a[0] + a[1] + b[0] + b[1]) as f64;
    let rows = [(a[0] + a[1]) as f64, (b[0] + b[1]) as f64];
    let cols = [(a[0] + b[0]) as f64, (a[1] + b[1]) as f64];
    let obs = [[a[0] as f64, a[1] as f64], [b[0] as f64, b[1] as f64]];
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            if e < 5.0 {
                return None;
            }
            stat += (obs[i][j] - e).powi(2) / e;
        }
    }
    Some(stat)
}

#[test]
fn static_generator_is_stationary() {
    const CRITICAL_1DF_001: f64 = 6.635;
    let (mut tested, mut kept) = (0usize, 0usize);
    for seed in 0..20 {
        let cfg = SyntheticConfig::new(200, 40, 4, 40);
        let (ds, _) = generate_synthetic(&cfg, &mut SeededRng::new(seed)).unwrap();
        let mut halves = vec![[[0u32; 2]; 2]; ds.num_questions()];
        for it in ds.interactions() {
            let half = usize::from(it.position >= cfg.seq_len / 2);
            halves[it.question][half][it.response as usize] += 1;
        }
        for [a, b] in halves {
            if let Some(stat) = chi_square_2x2(a, b) {
                tested += 1;
                kept += usize::from(stat < CRITICAL_1DF_001);
            }
        }
    }
    assert!(tested >= 700, "only {tested} questions had enough data");
    let frac = kept as f64 / tested as f64;
    assert!(frac >= 0.95, "{kept}/{tested} questions passed");
}

#[test]
fn synthetic_same_seed_same_data() {
    let cfg = SyntheticConfig::new(30, 10, 3, 12).dynamics(0.1, 0.3).skills(3);
    let a = generate_synthetic(&cfg, &mut SeededRng::new(42)).unwrap();
    let b = generate_synthetic(&cfg, &mut SeededRng::new(42)).unwrap();
    assert_eq!(a, b);
}

fn random_dataset(seed: u64, n_rows: usize, tagged: bool) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let mut b = DatasetBuilder::new();
    for _ in 0..n_rows {
        let s = format!("s{}", rng.below(6));
        let q = format!("q {}", rng.below(9));
        let skill = format!("k,{}", rng.below(3));
        let ts = (rng.uniform() < 0.5).then(|| rng.below(1000) as i64);
        b.push(&s, &q, u8::from(rng.uniform() < 0.5), tagged.then_some(skill.as_str()), ts);
    }
    b.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_is_a_partition(seed in 0u64..1000, frac in 0.2f64..0.8) {
        let ds = random_dataset(seed, 40, false);
        let (train, test) = split_students(&ds, frac, &mut SeededRng::new(seed)).unwrap();
        prop_assert_eq!(train.num_students() + test.num_students(), ds.num_students());
        prop_assert_eq!(train.len() + test.len(), ds.len());
        let mut names: Vec<&str> = train.students().iter().chain(test.students().iter()).collect();
        names.sort_unstable();
        names.dedup();
        prop_assert_eq!(names.len(), ds.num_students());
    }

    #[test]
    fn canonical_round_trip(seed in 0u64..1000, tagged in any::<bool>()) {
        let ds = random_dataset(seed, 30, tagged);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.save_canonical(&path).unwrap();
        let back = Dataset::load_canonical(&path).unwrap();
        prop_assert_eq!(back, ds);
    }
}
