use std::collections::BTreeMap;

use keyforge::eval::*;
use keyforge::features::{observe, FeatureSpec, Window};
use keyforge::he::HeParams;

fn small(users: usize, minutes: f64) -> PopulationConfig {
    PopulationConfig { users, session_minutes: minutes, ..Default::default() }
}

fn read_dir(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn generator_is_deterministic_and_writes_two_sessions_per_user() {
    let cfg = small(10, 3.0);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let (pop, data) = generate_population(&cfg, 42).unwrap();
        pop.write(&data, dir.path()).unwrap();
    }
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    assert_eq!(fa, fb);
    assert_eq!(fa.keys().filter(|k| k.ends_with(".csv")).count(), 20);
    assert!(fa.contains_key("population.json"));
    let (_, other) = generate_population(&cfg, 43).unwrap();
    assert_ne!(generate_population(&cfg, 42).unwrap().1, other);

    let loaded = Dataset::load(a.path()).unwrap();
    assert_eq!(loaded, generate_population(&cfg, 42).unwrap().1);
}

#[test]
fn loading_rejects_a_lone_session() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u1_s1.csv"), "0,E,down\n90,E,up\n").unwrap();
    assert!(Dataset::load(dir.path()).is_err());
    assert!(Dataset::load(tempfile::tempdir().unwrap().path()).is_err());
}

#[test]
fn invalid_population_config_is_rejected() {
    assert!(generate_population(&small(0, 1.0), 1).is_err());
    assert!(generate_population(&small(2, -1.0), 1).is_err());
    let bad = PopulationConfig { noise_sd: (5.0, 1.0), ..small(2, 1.0) };
    assert!(generate_population(&bad, 1).is_err());
}

#[test]
fn keyhold_means_follow_the_configured_means() {
    let cfg = PopulationConfig { block_shift_sd: 0.0, session_shift_sd: 0.0, ..small(3, 20.0) };
    let (pop, data) = generate_population(&cfg, 5).unwrap();
    let keys: Vec<String> = std::iter::once("Spacebar".to_string()).chain("ETAOINSHRDLUCMWYGPBVK".chars().map(String::from)).collect();
    let spec: Vec<FeatureSpec> = keys.iter().map(|k| FeatureSpec::keyhold(k)).collect();
    let mut checked = 0;
    for (user, u) in pop.users.iter().zip(&data.users) {
        let sample = observe(&u.train, &spec).window(Window::all());
        for (k, vals) in keys.iter().zip(&sample.values) {
            let m = vals.len() as f64;
            if m < 30.0 {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / m;
            let bound = 3.0 * user.hold_sd[k] / m.sqrt();
            assert!((mean - user.hold_mean[k]).abs() <= bound, "{} {k}: {mean} vs {}", user.id, user.hold_mean[k]);
            checked += 1;
        }
    }
    assert!(checked >= 50, "{checked}");
}

fn quick_config() -> EvalConfig {
    EvalConfig { kappas: (-4..=24).map(|k| 2f64.powf(k as f64 / 4.0)).collect(), ..Default::default() }
}

#[test]
fn zero_effort_counts_every_pair() {
    let (_, data) = generate_population(&small(4, 12.0), 9).unwrap();
    let cfg = quick_config();
    let users = prepare(&data, &cfg).unwrap();
    let r = run_zero_effort(&data, &cfg).unwrap();
    let slices: Vec<u64> = users.iter().map(|u| u.test_rows.len() as u64).collect();
    let total: u64 = slices.iter().sum();
    assert_eq!(r.users, 4);
    assert!(r.skipped_users.is_empty());
    for p in &r.sweep {
        assert_eq!(p.genuine_trials, total);
        assert_eq!(p.impostor_trials, total * 3);
        assert!((0.0..=1.0).contains(&p.far) && (0.0..=1.0).contains(&p.frr));
        assert_eq!(p.far, p.false_accepts as f64 / p.impostor_trials as f64);
    }
    let all: u64 = users.iter().map(|u| u.test_slices as u64).sum();
    assert_eq!(r.total_slices, all);
    assert_eq!(r.availability, total as f64 / all as f64);
    // deterministic
    assert_eq!(r, run_zero_effort(&data, &cfg).unwrap());
    let json = serde_json::to_value(&r).unwrap();
    for key in ["sweep", "eer", "availability", "entropy_pct", "key_bits", "skipped_pairs"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn separated_users_have_no_errors_at_moderate_kappa() {
    let cfg = PopulationConfig {
        hold_mean: (100.0, 60.0),
        gap_mean: (190.0, 60.0),
        noise_sd: (1.0, 2.0),
        block_shift_sd: 0.0,
        session_shift_sd: 0.0,
        ..small(5, 12.0)
    };
    let (_, data) = generate_population(&cfg, 3).unwrap();
    let r = run_zero_effort(&data, &quick_config()).unwrap();
    assert_eq!((r.eer.far, r.eer.frr), (0.0, 0.0), "{:?}", r.sweep);
}

#[test]
fn indistinguishable_users_accept_impostors_like_themselves() {
    let mut pop = SyntheticPopulation::draw(&small(4, 12.0), 11).unwrap();
    for k in 1..4 {
        let id = pop.users[k].id.clone();
        pop.users[k] = SyntheticUser { id, ..pop.users[0].clone() };
    }
    let data = pop.sessions();
    let r = run_zero_effort(&data, &quick_config()).unwrap();
    let mut compared = 0;
    for p in &r.sweep {
        if p.frr > 0.05 && p.frr < 0.95 {
            // the impostor success rate tracks the genuine success rate
            assert!((p.far - (1.0 - p.frr)).abs() < 0.25, "{p:?}");
            compared += 1;
        }
    }
    assert!(compared > 0);
}

#[test]
fn rates_move_monotonically_with_kappa() {
    let (_, data) = generate_population(&small(12, 40.0), 4).unwrap();
    for r in [run_zero_effort(&data, &quick_config()).unwrap(), run_crossval_lda(&data, &quick_config()).unwrap()] {
        for w in r.sweep.windows(2) {
            assert!(w[1].far >= w[0].far, "{:?}", r.mode);
            assert!(w[1].frr <= w[0].frr, "{:?}", r.mode);
        }
        assert_eq!(r.sweep.first().unwrap().far, 0.0);
        assert!(r.sweep.last().unwrap().frr < 0.1, "{:?}", r.sweep);
    }
}

#[test]
fn cross_validation_keeps_the_impostor_out() {
    let (_, data) = generate_population(&small(6, 16.0), 8).unwrap();
    let cfg = quick_config();
    let r = run_crossval_lda(&data, &cfg).unwrap();
    assert_eq!(r.folds, 6);
    assert!(r.skipped_folds.is_empty());

    let mut users = prepare(&data, &cfg).unwrap();
    for imp in 0..users.len() {
        let fold = crossval_fold(&users, imp, &cfg).unwrap();
        assert!(!fold.enrolled.contains(&imp));
        assert_eq!(fold.enrolled.len(), 5);
        assert_eq!(fold.model.output_dim(), 4);
    }
    // changing the impostor's data leaves its fold untouched
    let before = crossval_fold(&users, 2, &cfg).unwrap();
    for row in &mut users[2].train_rows {
        row.iter_mut().for_each(|x| *x = 255.0 - *x);
    }
    users[2].test_rows.clear();
    let after = crossval_fold(&users, 2, &cfg).unwrap();
    assert_eq!(before.model, after.model);
    assert_eq!(before.templates, after.templates);
    assert_ne!(crossval_fold(&users, 0, &cfg).unwrap().model, crossval_fold(&prepare(&data, &cfg).unwrap(), 0, &cfg).unwrap().model);

    assert!(run_crossval_lda(&Dataset { users: data.users[..2].to_vec() }, &cfg).is_err());
}

#[test]
fn lda_lowers_the_error_rate_on_a_correlated_population() {
    let (_, data) = generate_population(&small(30, 30.0), 21).unwrap();
    let cfg = EvalConfig::default();
    let plain = run_zero_effort(&data, &cfg).unwrap();
    let lda = run_crossval_lda(&data, &cfg).unwrap();
    assert!(lda.eer.rate < plain.eer.rate, "{:?} vs {:?}", lda.eer, plain.eer);
}

#[test]
fn bench_counts_fit_the_cost_formulas() {
    let config = BenchConfig {
        grid: parse_grid("n=2,3,4;m=2,3,5").unwrap(),
        params: HeParams { modulus_bits: 256, ..HeParams::default() },
        bits: 8,
        seed: 3,
    };
    let report = bench_pplda(&config).unwrap();
    assert_eq!(report.rows.len(), 9);
    for r in &report.rows {
        let (n, m) = (r.n as u64, r.m as u64);
        assert_eq!(r.user_ops.encryptions, 2 * n * n + 2 * n);
        assert_eq!(r.user_ops.exponentiations, m * n * n);
        assert_eq!(r.es_ops.exponentiations, (3 * m + 1) * n * n);
        assert_eq!(r.es_ops.additions, (4 * m + 4) * n * n + 2 * n);
        assert_eq!(r.es_ops.rerandomizations, (m + 1) * n);
        assert_eq!(r.es_ops.decryptions + r.user_ops.decryptions, 0);
        assert_eq!(r.mp_ops.decryptions, 2 * n * n + n);
        assert_eq!(r.es_output_ciphertexts as u64, 2 * n * n + n);
    }
    let fit = |q: &str| report.fits.iter().find(|f| f.quantity == q).unwrap().clone();
    let enc = fit("user encryptions");
    assert!(enc.max_residual < 1e-6);
    assert_eq!((enc.coefficient("n^2"), enc.coefficient("n"), enc.coefficient("m n^2")), (2.0, 2.0, 0.0));
    assert_eq!(fit("user exponentiations").coefficient("m n^2"), 1.0);
    assert_eq!(fit("mp decryptions").coefficient("m n^2"), 0.0);
    assert!(fit("user-es bytes").coefficient("m n^2") > 0.0);
    // ES to MP traffic does not depend on m
    for n in [2, 3, 4] {
        let sizes: Vec<usize> = report.rows.iter().filter(|r| r.n == n).map(|r| r.es_mp_bytes).collect();
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        assert!((hi - lo) as f64 / (lo as f64) < 0.02, "{sizes:?}");
    }
    assert_eq!(parse_grid("2x3,4x5").unwrap(), vec![(2, 3), (4, 5)]);
    assert!(parse_grid("n=2").is_err() && parse_grid("0x1").is_err());
}
