use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use refcomm::color::{balanced_counts, generate_mixed, ColorContext, Condition, GenerationConfig};
use refcomm::error::Error;
use refcomm::harness::eval::make_director;
use refcomm::harness::grid::{
    fit_end_turn_threshold, grid_cell, mean_features, post_description_state, GridCell,
};
use refcomm::harness::reward_space::{dominance_interval, reward_space, PolicyStats};
use refcomm::harness::sweep::{sweep, SweepKind};
use refcomm::harness::{
    calibrate_threshold, evaluate, run_episodes, summarize, CalibrationConfig, EvalSettings, ExperimentConfig,
    Manifest,
};
use refcomm::lexicon::Lexicon;
use refcomm::matcher::{MatcherKind, MatcherProfile};
use refcomm::parallel::Execution;
use refcomm::policies::{DirectorAction, PolicyKind};
use refcomm::rl::{QNetwork, RewardParams};

fn contexts(n: usize, seed: u64) -> Vec<ColorContext> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_mixed(balanced_counts(n), &GenerationConfig::default(), &mut rng).unwrap()
}

fn settings(profile: MatcherProfile) -> EvalSettings {
    EvalSettings {
        profile,
        rewards: RewardParams::default(),
        seed: 21,
        replicates: 2,
    }
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let lex = Lexicon::default();
    let ctxs = contexts(90, 1);
    for policy in [PolicyKind::Direct, PolicyKind::Extended, PolicyKind::Mixed] {
        let d = make_director(&policy).unwrap();
        let s = settings(MatcherProfile::clarifying());
        let a = run_episodes(d.as_ref(), &ctxs, &lex, &s, Execution::Sequential).unwrap();
        let b = run_episodes(d.as_ref(), &ctxs, &lex, &s, Execution::Parallel).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn summary_recomputed_from_episodes() {
    let lex = Lexicon::default();
    let ctxs = contexts(60, 2);
    let d = make_director(&PolicyKind::Mixed).unwrap();
    let s = settings(MatcherProfile::clarifying());
    let eps = run_episodes(d.as_ref(), &ctxs, &lex, &s, Execution::Sequential).unwrap();
    assert_eq!(eps.len(), 120);
    let r = summarize("mixed", &eps);
    let n = eps.len() as f64;
    let succ = eps.iter().filter(|e| e.success).count() as f64;
    let terms: usize = eps.iter().map(|e| e.term_count).sum();
    // Reward decomposes into outcome and per-term cost.
    let rw = RewardParams::default();
    let want_reward = (succ * rw.r_success + (n - succ) * rw.r_failure + terms as f64 * rw.r_term) / n;
    assert!((r.success_rate - succ / n).abs() < 1e-12);
    assert!((r.avg_reward - want_reward).abs() < 1e-12);
    assert!((r.avg_terms - terms as f64 / n).abs() < 1e-12);
    let p = succ / n;
    assert!((r.ci_half_width - 1.959964 * (p * (1.0 - p) / n).sqrt()).abs() < 1e-5);
    let per: usize = r.per_condition.values().map(|c| c.episodes).sum();
    assert_eq!(per, eps.len());
    for cond in [Condition::Far, Condition::Split, Condition::Close] {
        assert_eq!(r.per_condition[&cond].episodes, 40);
    }
}

#[test]
fn repeated_sweep_values_reproduce_each_other() {
    let lex = Lexicon::default();
    let ctxs = contexts(30, 3);
    let policies = [PolicyKind::Direct, PolicyKind::Extended];
    let s = settings(MatcherProfile::always_select());
    let pts = sweep(SweepKind::Tau, &[3.0, 3.0], &policies, &ctxs, &lex, &s, Execution::Parallel).unwrap();
    assert_eq!(pts[0].results, pts[1].results);
    // The swept point at the base value equals a plain evaluation.
    let base = MatcherProfile {
        tau: Some(3.0),
        ..MatcherProfile::always_select()
    };
    let plain = evaluate(&PolicyKind::Direct, &ctxs, &lex, &settings(base), Execution::Sequential).unwrap();
    assert_eq!(pts[0].results[0], plain);
}

#[test]
fn zero_threshold_clarifier_never_clarifies() {
    let lex = Lexicon::default();
    let ctxs = contexts(45, 4);
    let always = MatcherProfile::always_select();
    let clar = MatcherProfile {
        kind: MatcherKind::Clarifying,
        select_threshold: 0.0,
        ..always.clone()
    };
    for policy in [PolicyKind::Direct, PolicyKind::Extended] {
        let a = evaluate(&policy, &ctxs, &lex, &settings(always.clone()), Execution::Parallel).unwrap();
        let b = evaluate(&policy, &ctxs, &lex, &settings(clar.clone()), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.clarification_rate, 0.0);
    }
}

fn stats(policy: &str, success_rate: f64, avg_terms: f64) -> PolicyStats {
    PolicyStats {
        policy: policy.into(),
        success_rate,
        avg_terms,
    }
}

#[test]
fn reward_space_extremes() {
    let rw = RewardParams::default();
    let s = [stats("a", 0.85, 1.0), stats("b", 0.90, 2.0), stats("c", 0.88, 1.5)];
    let rows = reward_space(&s, &[0.0, -1.0], &rw);
    assert_eq!(rows.len(), 6);
    let best: Vec<(&str, f64)> = rows.iter().filter(|r| r.best).map(|r| (r.policy.as_str(), r.r_term)).collect();
    // Free talk favors the most accurate policy; costly talk the most terse.
    assert_eq!(best, [("b", 0.0), ("a", -1.0)]);
    let a = &rows[0];
    assert!((a.expected_reward - (0.85 - 0.15 * 0.8)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn dominance_interval_matches_a_scan(
        sr in prop::collection::vec(0.5f64..1.0, 3),
        terms in prop::collection::vec(1.0f64..3.0, 3),
    ) {
        let rw = RewardParams::default();
        let all: Vec<PolicyStats> = (0..3).map(|i| stats(&i.to_string(), sr[i], terms[i])).collect();
        let bounds = (-0.2, 0.0);
        let interval = dominance_interval(&all[0], &all[1..], &rw, bounds);
        for k in 0..=400 {
            let x = bounds.0 + (bounds.1 - bounds.0) * k as f64 / 400.0;
            let w = all[0].expected_reward(x, &rw);
            let wins = all[1..].iter().all(|r| w > r.expected_reward(x, &rw) + 1e-9);
            let loses = all[1..].iter().any(|r| w < r.expected_reward(x, &rw) - 1e-9);
            match interval {
                Some(i) if i.contains(x) => prop_assert!(!loses, "x {x} {i:?}"),
                _ => prop_assert!(!wins || (k == 0 || k == 400), "x {x} {interval:?}"),
            }
        }
    }
}

#[test]
fn grid_states_respect_the_simplex() {
    let f = mean_features(&contexts(30, 5));
    assert!(post_description_state(0.8, 0.5, &f).is_none());
    let s = post_description_state(0.34, 0.33, &f).unwrap();
    assert!((s[0] + s[1] + s[2] - 1.0).abs() < 1e-12);
    let net = QNetwork::zeros(refcomm::rl::STATE_DIM, 16, DirectorAction::COUNT);
    assert_eq!(grid_cell(&net, 0.9, 0.2, &f).action, None);
    assert!(grid_cell(&net, 0.5, 0.2, &f).action.is_some());
}

fn cell(p_target: f64, end: bool) -> GridCell {
    GridCell {
        p_target,
        p_distractor: 0.0,
        action: Some(if end {
            DirectorAction::EndTurn
        } else {
            DirectorAction::NegateClosestDistractor
        }),
    }
}

#[test]
fn threshold_fit_on_synthetic_cells() {
    let clean: Vec<_> = (0..10).map(|i| cell(i as f64 / 10.0, i >= 7)).collect();
    let fit = fit_end_turn_threshold(&clean).unwrap();
    assert_eq!(fit.threshold, 0.7);
    assert_eq!(fit.agreement, 1.0);
    let mut noisy = clean.clone();
    noisy[2] = cell(0.2, true);
    let fit = fit_end_turn_threshold(&noisy).unwrap();
    assert_eq!((fit.threshold, fit.agreement), (0.7, 0.9));
    assert!(fit_end_turn_threshold(&[]).is_none());
}

#[test]
fn manifest_hash_is_stable() {
    let a = ExperimentConfig::default();
    assert_eq!(a.hash(), ExperimentConfig::default().hash());
    assert_eq!(a.hash().len(), 64);
    let b = ExperimentConfig {
        replicates: 2,
        ..a.clone()
    };
    assert_ne!(a.hash(), b.hash());

    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("x.txt"), "abc").unwrap();
    let mut m = Manifest::new("evaluate", &a);
    m.record(tmp.path(), "x.txt").unwrap();
    m.write(tmp.path()).unwrap();
    let back = Manifest::load(tmp.path()).unwrap();
    assert_eq!(back, m);
    assert_eq!(
        back.outputs["x.txt"],
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn calibrated_threshold_reproduces_its_rate() {
    let lex = Lexicon::default();
    let ctxs = contexts(90, 6);
    let d = make_director(&PolicyKind::Direct).unwrap();
    let s = settings(MatcherProfile::clarifying());
    let config = CalibrationConfig {
        target_rate: 0.1,
        tolerance: 0.04,
        ..CalibrationConfig::default()
    };
    let cal = calibrate_threshold(d.as_ref(), &ctxs, &lex, &s, &config, Execution::Parallel).unwrap();
    assert!((cal.clarification_rate - 0.1).abs() <= 0.02 + 1e-12 || cal.iterations == config.max_iterations);
    let check = MatcherProfile {
        select_threshold: cal.threshold,
        ..MatcherProfile::clarifying()
    };
    let again = evaluate(&PolicyKind::Direct, &ctxs, &lex, &settings(check), Execution::Sequential).unwrap();
    assert_eq!(again.clarification_rate, cal.clarification_rate);
    assert_eq!(again, cal.result);
}

#[test]
fn invalid_configs_are_rejected() {
    let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
        Box::new(|c| c.test_contexts = 0),
        Box::new(|c| c.sweeps.tau.clear()),
        Box::new(|c| c.sweeps.alpha.push(f64::NAN)),
        Box::new(|c| c.policies = vec!["telepathy".into()]),
        Box::new(|c| c.grid_resolution = 1),
        Box::new(|c| c.calibration.lo = 2.0),
    ];
    for mutate in cases {
        let mut c = ExperimentConfig::default();
        mutate(&mut c);
        assert!(c.validate().is_err(), "{c:?}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.json");
    std::fs::write(&p, "{not json").unwrap();
    assert!(matches!(ExperimentConfig::load(&p), Err(Error::Json(_))));
    assert!(ExperimentConfig::default().validate().is_ok());
}
