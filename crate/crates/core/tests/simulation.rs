use promise_persuasion::dp_solve;
use promise_persuasion::instances::{random_instance, vc_instance, Graph};
use promise_persuasion::scheme::scheme_values;
use promise_persuasion::simulate::{simulate, DeviationPolicy};

const STDERRS: f64 = 4.0;

#[test]
fn k4_sender_mean_matches_exact_value() {
    let inst = vc_instance(&Graph::complete(4));
    let r = dp_solve(&inst, 0.5).unwrap();
    let exact = scheme_values(&inst, &r.scheme).unwrap().sender_value(&inst);
    let report = simulate(&inst, &r.scheme, 100_000, 7, None).unwrap();
    assert!(report.sender.stderr > 0.0);
    assert!(
        (report.sender.mean - exact).abs() <= STDERRS * report.sender.stderr,
        "mean {} vs exact {exact} (stderr {})",
        report.sender.mean,
        report.sender.stderr
    );
}

#[test]
fn random_instance_receiver_mean_matches_exact_value() {
    let inst = random_instance(4, 3, 2, 2, 3).unwrap();
    let r = dp_solve(&inst, 0.6).unwrap();
    let values = scheme_values(&inst, &r.scheme).unwrap();
    let exact: f64 = (0..inst.num_states())
        .map(|s| inst.beta[s] * values.receiver(0, s, 0))
        .sum();
    let report = simulate(&inst, &r.scheme, 50_000, 1, None).unwrap();
    assert!((report.receiver.mean - exact).abs() <= STDERRS * report.receiver.stderr);
}

#[test]
fn one_shot_deviations_do_not_pay_beyond_epsilon() {
    let eps = 0.6;
    let inst = random_instance(12, 2, 3, 2, 3).unwrap();
    let r = dp_solve(&inst, eps).unwrap();
    for step in 0..inst.horizon {
        for action in 0..inst.num_actions() {
            let report = simulate(&inst, &r.scheme, 20_000, 3, Some(DeviationPolicy { step, action })).unwrap();
            let d = report.deviation.unwrap();
            assert!(
                d.receiver.mean <= report.receiver.mean + eps + STDERRS * d.combined_stderr,
                "deviating to {action} at {step} gains {}",
                d.receiver.mean - report.receiver.mean
            );
        }
    }
}

#[test]
fn simulation_is_seeded() {
    let inst = random_instance(4, 3, 2, 2, 2).unwrap();
    let r = dp_solve(&inst, 0.6).unwrap();
    let a = simulate(&inst, &r.scheme, 5_000, 99, None).unwrap();
    let b = simulate(&inst, &r.scheme, 5_000, 99, None).unwrap();
    let c = simulate(&inst, &r.scheme, 5_000, 100, None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a.episode_seeds, c.episode_seeds);
}
