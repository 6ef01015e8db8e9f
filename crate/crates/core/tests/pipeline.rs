use reshuffle::analysis::{
    check_bound, epoch_deviations, sigma_shuffle_sq, sigma_star_sq, vt_bound_check, BoundOptions, Estimation, TheoremId,
};
use reshuffle::data::{group_minibatches, parse_libsvm, serialize_libsvm, synthetic_classification};
use reshuffle::optim::{
    point_metrics, run, run_batched, run_batched_ensemble, run_ensemble, solve_reference, Reference, RunConfig,
    StepSchedule,
};
use reshuffle::problem::{Grouped, Logistic, LogisticSpec, Quadratic, QuadraticSpec};
use reshuffle::{MethodKind, Permutation, Problem, Vector};

const TOY: &str = "\
1 1:0.5 3:-2.0
-1 2:1
+1 1:1.5 2:-0.5 3:0.25
0 3:1

1 1:-1 2:2
";

fn toy_logistic() -> Logistic {
    let data = parse_libsvm(TOY).unwrap();
    assert_eq!(data.num_samples(), 5);
    assert_eq!(data.dim(), 3);
    Logistic::new(LogisticSpec {
        dataset: data,
        lambda: 0.1,
    })
    .unwrap()
}

#[test]
fn libsvm_to_reference_solution() {
    let p = toy_logistic();
    let sol = solve_reference(&p, None, Some(1e-10)).unwrap();
    assert!(sol.grad_norm <= 1e-10);
    assert!(p.gradient(&sol.x).norm() <= 1e-10);
    // strongly convex: every method converges toward the same point
    let gamma = 0.1 / p.constants().l;
    for kind in MethodKind::ALL {
        let cfg = RunConfig::new(kind, StepSchedule::constant(gamma).unwrap(), 1500, Vector::zeros(3)).with_seed(4);
        let tr = run(&cfg, &p).unwrap();
        assert!(
            tr.last().dist_sq(&sol.x) < 0.05,
            "{kind}: {}",
            tr.last().dist_sq(&sol.x)
        );
    }
}

#[test]
fn round_trip_preserves_the_objective() {
    let data = synthetic_classification(50, 6, 2);
    let again = parse_libsvm(&serialize_libsvm(&data)).unwrap();
    let a = Logistic::new(LogisticSpec {
        dataset: data,
        lambda: 0.01,
    })
    .unwrap();
    let b = Logistic::new(LogisticSpec {
        dataset: again,
        lambda: 0.01,
    })
    .unwrap();
    let x = Vector::from_vec(vec![0.3, -0.2, 1.0, 0.0, 0.5, -1.5]);
    assert_eq!(a.value(&x).to_bits(), b.value(&x).to_bits());
    assert_eq!(a.gradient(&x), b.gradient(&x));
}

#[test]
fn decreasing_schedule_reaches_the_optimum() {
    let q = Quadratic::new(QuadraticSpec::scalar(&[0.0, 3.0, 6.0, 9.0])).unwrap();
    let epochs = 2000;
    let k0 = reshuffle::optim::default_k0((epochs * 4) as u64);
    let schedule = StepSchedule::capped_inverse(1.0, 1.0, k0, 3.0).unwrap();
    let reference = Reference {
        x_star: Some(Vector::scalar(4.5)),
        f_star: None,
    };
    for kind in [MethodKind::Rr, MethodKind::So, MethodKind::Ig] {
        let tr = run(&RunConfig::new(kind, schedule, epochs, Vector::scalar(-20.0)), &q).unwrap();
        let m = point_metrics(&q, tr.last(), &reference);
        assert!(m.dist_sq.unwrap() < 1e-4, "{kind}: {m:?}");
    }
}

#[test]
fn minibatch_runs_match_the_grouped_problem() {
    let data = synthetic_classification(32, 4, 3);
    let p = Logistic::new(LogisticSpec {
        dataset: data,
        lambda: 0.05,
    })
    .unwrap();
    let cfg = RunConfig::new(
        MethodKind::Ig,
        StepSchedule::constant(0.3).unwrap(),
        5,
        Vector::zeros(4),
    );
    // IG over file-order groups is the same computation as IG on the grouped problem
    let batched = run_batched(&cfg, &p, 8).unwrap();
    let grouped = Grouped::new(p.clone(), group_minibatches(32, 8, &Permutation::identity(32)).unwrap()).unwrap();
    let direct = run(&cfg, &grouped).unwrap();
    assert_eq!(batched.steps_per_epoch, 4);
    for (a, b) in batched.epoch_iterates.iter().zip(&direct.epoch_iterates) {
        assert!(a.dist_sq(b) < 1e-24);
    }
    let seeds: Vec<u64> = (0..8).collect();
    let rr = RunConfig {
        method: MethodKind::Rr,
        ..cfg
    };
    let ens = run_batched_ensemble(&rr, &p, 5, &seeds).unwrap();
    assert!(ens.iter().all(|t| t.steps_per_epoch == 7));
    assert_ne!(ens[0].epoch_iterates, ens[1].epoch_iterates);
}

#[test]
fn variance_feeds_the_bound() {
    let q = Quadratic::new(QuadraticSpec::scalar(&[-2.0, 0.0, 1.0, 5.0])).unwrap();
    let x_star = q.minimizer();
    let gamma = 0.2;
    let exact = sigma_shuffle_sq(&q, &x_star, gamma, Estimation::Exact).unwrap();
    let mc = sigma_shuffle_sq(
        &q,
        &x_star,
        gamma,
        Estimation::MonteCarlo {
            num_perms: 20_000,
            seed: 1,
        },
    )
    .unwrap();
    assert!((exact.sigma_shuffle_sq - mc.sigma_shuffle_sq).abs() <= 3.0 * mc.ci_halfwidth);
    assert_eq!(exact.sigma_star_sq, sigma_star_sq(&q, &x_star).unwrap());

    let seeds: Vec<u64> = (0..1000).collect();
    let cfg = RunConfig::new(
        MethodKind::Rr,
        StepSchedule::constant(gamma).unwrap(),
        40,
        Vector::scalar(10.0),
    );
    let ens = run_ensemble(&cfg, &q, &seeds).unwrap();
    let exact_check = check_bound(TheoremId::Thm1, &q, &ens, gamma, &BoundOptions::default()).unwrap();
    let mc_check = check_bound(
        TheoremId::Thm1,
        &q,
        &ens,
        gamma,
        &BoundOptions {
            shuffle: Estimation::MonteCarlo {
                num_perms: 5000,
                seed: 2,
            },
            ..BoundOptions::default()
        },
    )
    .unwrap();
    assert!(exact_check.pass && mc_check.pass);
    assert_eq!(exact_check.observed, mc_check.observed);
}

#[test]
fn deviations_need_recorded_iterates() {
    let q = Quadratic::new(QuadraticSpec::scalar(&[0.0, 1.0, 2.0])).unwrap();
    let seeds: Vec<u64> = (0..50).collect();
    let cfg = RunConfig::new(
        MethodKind::Rr,
        StepSchedule::constant(0.1).unwrap(),
        3,
        Vector::scalar(4.0),
    );
    let bare = run_ensemble(&cfg, &q, &seeds).unwrap();
    assert!(epoch_deviations(&bare[0], 0).is_err());
    assert!(vt_bound_check(&q, &bare, 0).is_err());
    let full = run_ensemble(&cfg.with_inner(1), &q, &seeds).unwrap();
    assert!(vt_bound_check(&q, &full, 2).unwrap().pass);
    // thinned recording does not give full epochs
    let thin = run_ensemble(
        &RunConfig::new(
            MethodKind::Rr,
            StepSchedule::constant(0.1).unwrap(),
            3,
            Vector::scalar(4.0),
        )
        .with_inner(2),
        &q,
        &seeds,
    )
    .unwrap();
    assert!(epoch_deviations(&thin[0], 0).is_err());
}
