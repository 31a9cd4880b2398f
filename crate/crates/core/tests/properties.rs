use proptest::prelude::*;
use proptest::sample::subsequence;

use fedrob::aggregators::{cwmed, cwtm, geometric_median, mean, static_output, AggregatorKind, GmOptions};
use fedrob::attacks::{apply_attack, AttackConfig, AttackKind, DeepSetSurface, SimilarityMatrix, StaticSurface};
use fedrob::harness::{evaluate, generate_synthetic, EvalOptions, SyntheticSpec};
use fedrob::nn::{Architecture, DeepSetModel, Pooling};
use fedrob::rng::{stream, Purpose};
use fedrob::simplex::{margin, model_dissimilarity, project_softmax, Margin, ProbitPanel};
use fedrob::training::deepset_tm_classify;

fn probit(logits: &[f64]) -> Vec<f64> {
    project_softmax(logits).unwrap().into_inner()
}

/// n rows of K logits, mapped onto the simplex.
fn panel_rows(n: std::ops::Range<usize>, k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (n, k).prop_flat_map(|(n, k)| {
        prop::collection::vec(prop::collection::vec(-6.0f64..6.0, k), n)
            .prop_map(|rows| rows.iter().map(|r| probit(r)).collect())
    })
}

fn permute<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| v[i].clone()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn small_model(k: usize, seed: u64) -> DeepSetModel {
    DeepSetModel::new(
        Architecture {
            classes: k,
            embed: 6,
            rho_hidden: 10,
            mu_hidden: 10,
        },
        seed,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_is_coordinate_permutation_invariant(
        (v, perm) in prop::collection::vec(-5.0f64..5.0, 2..12)
            .prop_flat_map(|l| { let k = l.len(); (Just(l), Just((0..k).collect::<Vec<_>>()).prop_shuffle()) })
    ) {
        let p = probit(&v);
        let m = margin(&p).unwrap();
        prop_assert_eq!(m, margin(&permute(&p, &perm)).unwrap());
        match m {
            Margin::Finite(x) => prop_assert!(x >= 0.0),
            Margin::Infinite => {}
        }
    }

    #[test]
    fn dissimilarity_is_permutation_invariant_and_bounded(
        rows in panel_rows(1..12, 2..8),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut rng = stream(seed, Purpose::Data, &[]);
        let (n, k) = (rows.len(), rows[0].len());
        let mut clients: Vec<usize> = (0..n).collect();
        let mut coords: Vec<usize> = (0..k).collect();
        clients.shuffle(&mut rng);
        coords.shuffle(&mut rng);
        let base = ProbitPanel::new("p", 0, rows.clone()).unwrap();
        let shuffled: Vec<Vec<f64>> = permute(&rows, &clients).iter().map(|r| permute(r, &coords)).collect();
        let other = ProbitPanel::new("p", 0, shuffled).unwrap();
        let (a, b) = (model_dissimilarity(&base), model_dissimilarity(&other));
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=0.5).contains(&a));
        match margin(&base.mean()).unwrap() {
            Margin::Finite(x) => prop_assert!(x >= 0.0),
            Margin::Infinite => {}
        }
    }

    #[test]
    fn rules_are_translation_equivariant(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 3..10),
        shift in prop::collection::vec(-10.0f64..10.0, 3),
        f_frac in 0.0f64..1.0,
    ) {
        let n = rows.len();
        let f = ((n - 1) / 2) as f64 * f_frac;
        let f = f as usize;
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let add = |v: Vec<f64>| -> Vec<f64> { v.iter().zip(&shift).map(|(a, b)| a + b).collect() };
        prop_assert!(max_diff(&add(mean(&rows)), &mean(&moved)) < 1e-12);
        prop_assert!(max_diff(&add(cwtm(&rows, f).unwrap()), &cwtm(&moved, f).unwrap()) < 1e-12);
        prop_assert!(max_diff(&add(cwmed(&rows).unwrap()), &cwmed(&moved).unwrap()) < 1e-12);
        let gm = |r: &[Vec<f64>]| geometric_median(r, GmOptions::default()).unwrap().point;
        prop_assert!(max_diff(&add(gm(&rows)), &gm(&moved)) < 1e-6);
    }

    #[test]
    fn trimmed_mean_special_cases(rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..12)) {
        prop_assert_eq!(cwtm(&rows, 0).unwrap(), mean(&rows));
        let n = rows.len();
        if n % 2 == 1 {
            prop_assert_eq!(cwmed(&rows).unwrap(), cwtm(&rows, (n - 1) / 2).unwrap());
        }
    }

    #[test]
    fn deepset_output_on_simplex_and_invariant(
        rows in panel_rows(3..12, 2..6),
        seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        let k = rows[0].len();
        let model = small_model(k, seed);
        let f = (rows.len() - 1) / 2;
        let mut rng = stream(seed, Purpose::Data, &[1]);
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        for pooling in [Pooling::Mean, Pooling::TrimmedMean(f)] {
            let p = model.forward(&rows, pooling).unwrap().probs;
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(max_diff(&p, &model.forward(&shuffled, pooling).unwrap().probs) < 1e-12);
        }
        let doubled: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        prop_assert!(max_diff(
            &model.forward(&rows, Pooling::Mean).unwrap().probs,
            &model.forward(&doubled, Pooling::Mean).unwrap().probs,
        ) < 1e-12);
    }

    #[test]
    fn static_rules_permutation_invariant(rows in panel_rows(3..12, 2..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut stream(seed, Purpose::Data, &[2]));
        let f = (rows.len() - 1) / 2;
        for rule in AggregatorKind::static_suite() {
            let a = static_output(&rule, &rows, f).unwrap();
            let b = static_output(&rule, &shuffled, f).unwrap();
            prop_assert!(max_diff(&a, &b) < 1e-12, "{rule}");
        }
    }

    #[test]
    fn every_attack_stays_in_the_corruption_set(
        rows in panel_rows(5..12, 2..6),
        adv_pick in subsequence((0..5usize).collect::<Vec<_>>(), 0..=2),
        label_pick in 0usize..100,
        seed in 0u64..1000,
    ) {
        let k = rows[0].len();
        let n = rows.len();
        let f = (n - 1) / 2;
        let adv: Vec<usize> = adv_pick.into_iter().filter(|&i| i < n).take(f).collect();
        let panel = ProbitPanel::new("p", label_pick % k, rows).unwrap();
        let model = small_model(k, seed);
        let similarity = SimilarityMatrix::identity(k);
        let surfaces: Vec<Box<dyn fedrob::attacks::AttackSurface>> = vec![
            Box::new(StaticSurface { rule: AggregatorKind::Cwtm, f }),
            Box::new(StaticSurface { rule: AggregatorKind::Gm, f }),
            Box::new(DeepSetSurface { model: &model, pooling: Pooling::TrimmedMean(f) }),
        ];
        for surface in &surfaces {
            for kind in AttackKind::ALL {
                let cfg = AttackConfig {
                    kind,
                    pgd_steps: 10,
                    similarity: Some(similarity.clone()),
                    ..AttackConfig::new(kind)
                };
                let mut rng = stream(seed, Purpose::Attack, &[]);
                let out = apply_attack(&panel, &adv, &cfg, surface.as_ref(), &mut rng).unwrap();
                prop_assert!(out.verify(&panel, f).is_ok(), "{kind}");
            }
        }
    }

    #[test]
    fn deepset_tm_ignores_f_outliers_among_identical_rows(
        honest in prop::collection::vec(-4.0f64..4.0, 4),
        outliers in prop::collection::vec(prop::collection::vec(-8.0f64..8.0, 4), 1..=3),
        seed in 0u64..1000,
    ) {
        let f = outliers.len();
        let n = 2 * f + 3;
        let row = probit(&honest);
        let model = small_model(4, seed);
        let clean = vec![row.clone(); n];
        let mut attacked = clean.clone();
        for (slot, o) in attacked.iter_mut().zip(&outliers) {
            *slot = probit(o);
        }
        prop_assert_eq!(
            deepset_tm_classify(&model, &clean, f).unwrap(),
            deepset_tm_classify(&model, &attacked, f).unwrap()
        );
    }
}

#[test]
fn worst_case_is_min_over_attack_columns() {
    let data = generate_synthetic(&SyntheticSpec {
        samples: 80,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let mut opts = EvalOptions::new(4, vec![1, 2]);
    opts.attack.similarity = Some(data.similarity.clone());
    opts.attack.pgd_steps = 10;
    let report = evaluate(
        &data.dataset.panels,
        &AggregatorKind::static_suite(),
        &AttackKind::ALL,
        &opts,
        None,
    )
    .unwrap();
    for a in &report.aggregators {
        let mut min = f64::INFINITY;
        for c in &a.attacks {
            let m = c.accuracy.per_seed.iter().sum::<f64>() / c.accuracy.per_seed.len() as f64;
            min = min.min(m);
        }
        assert!((a.worst_case - min).abs() < 1e-12, "{}", a.aggregator);
        assert!(a.decomposition_holds);
    }
}
