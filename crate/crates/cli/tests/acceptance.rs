//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 4 to 9 compare simulated policies against reference behaviour
//! that depends on the description model; they are reported but do not fail
//! the run. The rest are exact or self-contained and must pass.

use std::path::Path;
use std::time::Instant;

use clap::Parser as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use refcomm::coherence::{DialogueState, Role};
use refcomm::color::{balanced_counts, generate_mixed, ColorContext, Condition, GenerationConfig};
use refcomm::episode::EpisodeRecord;
use refcomm::harness::eval::make_director;
use refcomm::harness::grid::{fit_end_turn_threshold, mean_features, policy_grid};
use refcomm::harness::reward_space::{dominance_interval, PolicyStats};
use refcomm::harness::{
    calibrate_threshold, eval_settings, evaluate, evaluate_director, generate_splits, run_episodes, EvalResult,
    EvalSettings, ExperimentConfig,
};
use refcomm::lexicon::Lexicon;
use refcomm::logical_form::LogicalForm;
use refcomm::matcher::{gamma_perturb, noisy_finger, MatcherKind, MatcherProfile};
use refcomm::parallel::Execution;
use refcomm::parser::{realize, Parser};
use refcomm::policies::PolicyKind;
use refcomm::rl::adam::AdamConfig;
use refcomm::rl::{td_delta, train, DqnLearner, LearnedDirector, QNetwork, ReplayMemory, Transition, STATE_DIM};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Criteria whose failure fails the run.
const REQUIRED: [usize; 6] = [1, 2, 3, 10, 11, 12];

fn main() {
    // `cargo test -- <filter>` passes arguments through; a filter that does
    // not name this target skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let started = Instant::now();
    let world = World::new();
    let criteria: Vec<(usize, &str, Box<dyn Fn(&World) -> Outcome>)> = vec![
        (1, "noise-model oracles", Box::new(|_| noise_oracles())),
        (2, "incremental posterior equals batch product", Box::new(|_| posterior_oracle())),
        (3, "dqn math", Box::new(|_| dqn_math())),
        (4, "clarification narrows the extended-direct gap", Box::new(gap_under_clarification)),
        (5, "extended beats direct across alpha", Box::new(alpha_sweep)),
        (6, "gains concentrate in close contexts", Box::new(close_gains)),
        (7, "mixed wins a reward-space interval", Box::new(mixed_interval)),
        (8, "dqn against the always-select matcher", Box::new(dqn_always_select)),
        (9, "dqn against the clarifying matcher", Box::new(dqn_clarifying)),
        (10, "calibration", Box::new(calibration)),
        (11, "parser round trip and golden suite", Box::new(|w| parser_suite(w))),
        (12, "evaluate and train are byte-reproducible", Box::new(|_| determinism())),
    ];
    let mut required_failed = Vec::new();
    for (id, name, check) in criteria {
        let t = Instant::now();
        let o = check(&world);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} C{id:<2} {name}: {} ({:.1}s)", o.detail, t.elapsed().as_secs_f64());
        if !o.pass && REQUIRED.contains(&id) {
            required_failed.push(id);
        }
    }
    println!("acceptance finished in {:.0}s", started.elapsed().as_secs_f64());
    if !required_failed.is_empty() {
        eprintln!("required criteria failed: {required_failed:?}");
        std::process::exit(1);
    }
}

struct World {
    config: ExperimentConfig,
    lexicon: Lexicon,
    train: Vec<ColorContext>,
    test: Vec<ColorContext>,
}

impl World {
    fn new() -> Self {
        let config = ExperimentConfig::default();
        let (train, test) = generate_splits(&config).unwrap();
        World {
            lexicon: Lexicon::default(),
            config,
            train,
            test,
        }
    }

    fn settings(&self, profile: MatcherProfile) -> EvalSettings {
        EvalSettings {
            profile,
            ..eval_settings(&self.config)
        }
    }

    fn eval(&self, policy: PolicyKind, profile: MatcherProfile) -> EvalResult {
        evaluate(&policy, &self.test, &self.lexicon, &self.settings(profile), Execution::Parallel).unwrap()
    }
}

fn noise_oracles() -> Outcome {
    let t = Instant::now();
    let finger = noisy_finger([1.0, 0.0, 0.0], 4.5);
    let z = 4.5f64.exp() + 2.0;
    let closed = [4.5f64.exp() / z, 1.0 / z, 1.0 / z];
    let mut ok = finger.iter().zip(closed).all(|(a, b)| (a - b).abs() < 1e-12)
        && finger.iter().zip([0.9783, 0.0109, 0.0109]).all(|(a, b)| (a - b).abs() < 1e-4);
    let p = [0.6, 0.3, 0.1];
    let mut worst: f64 = 0.0;
    for (k, alpha) in [0.05, 0.15, 1.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let mut mean = [0.0; 3];
        let n = 100_000;
        for _ in 0..n {
            let d = gamma_perturb(p, alpha, &mut rng);
            for i in 0..3 {
                mean[i] += d[i] / n as f64;
            }
        }
        for i in 0..3 {
            worst = worst.max((mean[i] - p[i]).abs());
        }
    }
    ok &= worst <= 0.01 && t.elapsed().as_secs_f64() < 10.0;
    outcome(
        ok,
        format!("noisy_finger {finger:.4?}, worst Dirichlet mean error {worst:.4}"),
    )
}

fn posterior_oracle() -> Outcome {
    let lex = Lexicon::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ctxs = generate_mixed(balanced_counts(30), &GenerationConfig::default(), &mut rng).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let len = rng.random_range(1..=6);
        let mut s = DialogueState::new(ctxs[k % ctxs.len()].clone());
        let mut batch = [1.0; 3];
        for step in 0..len {
            let raw: [f64; 3] = std::array::from_fn(|_| rng.random_range(1e-3..1.0));
            let z: f64 = raw.iter().sum();
            let f = raw.map(|x| x / z);
            let id = lex.terms()[(k + step) % lex.len()].id.clone();
            s = s
                .attach_with_distribution(&LogicalForm::describe(id), Role::Director, Some(f))
                .unwrap();
            for i in 0..3 {
                batch[i] *= f[i];
            }
        }
        let z: f64 = batch.iter().sum();
        for i in 0..3 {
            worst = worst.max((s.posterior[i] - batch[i] / z).abs());
        }
    }
    outcome(worst <= 1e-12, format!("10000 chains, max deviation {worst:.2e}"))
}

fn dqn_math() -> Outcome {
    let t = Instant::now();
    // 2-2-2 network with hand-set weights; Q(s=[1, .5]) = (2.6, 0.55).
    let net = QNetwork::from_parts(2, 2, 2, vec![1.0, -1.0, 0.5, 2.0, 0.0, -0.5, 1.0, 2.0, -1.0, 0.5, 0.1, -0.2])
        .unwrap();
    let zero = QNetwork::zeros(2, 2, 2);
    let a = Transition::new(vec![1.0, 0.5], 0, 0.3, vec![0.0, 1.0], false);
    let b = Transition::new(vec![0.0, 1.0], 1, -0.8, vec![1.0, 0.5], true);
    let d = td_delta(&[&a, &b], &net, &zero, 0.9);
    // Q(s=[0, 1]) = relu(-1, 1.5) -> (3.1, 0.55); terminal target is r.
    let td_ok = (d[0] - (2.6 - 0.3)).abs() < 1e-15 && (d[1] - (0.55 + 0.8)).abs() < 1e-15;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut net = QNetwork::random(STATE_DIM, 16, 6, &mut rng);
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let samples: Vec<(&[f64], usize, f64)> = xs
            .iter()
            .map(|x| (x.as_slice(), rng.random_range(0..6), rng.random_range(-1.0..1.0)))
            .collect();
        let loss = |n: &QNetwork| {
            samples.iter().map(|(x, a, y)| (n.forward(x)[*a] - y).powi(2)).sum::<f64>() / samples.len() as f64
        };
        let g = net.squared_error_gradient(&samples);
        let h = 1e-6;
        for i in 0..net.params().len() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net);
            net.params_mut()[i] = orig - h;
            let down = loss(&net);
            net.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = g.grads[i].abs().max(numeric.abs());
            if scale > 1e-6 {
                worst = worst.max((g.grads[i] - numeric).abs() / scale);
            }
        }
    }

    // s0 -a0-> s1 (0), s0 -a1-> end (.5), s1 -a0-> end (1), s1 -a1-> end (0); gamma .9.
    let (s0, s1) = (vec![1.0, 0.0], vec![0.0, 1.0]);
    let mut memory = ReplayMemory::new(16);
    for tr in [
        Transition::new(s0.clone(), 0, 0.0, s1.clone(), false),
        Transition::new(s0.clone(), 1, 0.5, s0.clone(), true),
        Transition::new(s1.clone(), 0, 1.0, s1.clone(), true),
        Transition::new(s1.clone(), 1, 0.0, s1.clone(), true),
    ] {
        memory.push(tr);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut learner = DqnLearner::new(QNetwork::random(2, 16, 2, &mut rng), AdamConfig::with_lr(3e-3), 0.9, 100);
    let q_star = [[0.9, 0.5], [1.0, 0.0]];
    let error = |n: &QNetwork| {
        [&s0, &s1]
            .iter()
            .zip(q_star)
            .flat_map(|(s, q)| n.forward(s).into_iter().zip(q).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };
    for _ in 0..20_000 {
        let batch = memory.sample(16, &mut rng);
        learner.update(&batch).unwrap();
    }
    let q_err = error(&learner.policy);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        td_ok && worst <= 1e-4 && q_err < 1e-2 && secs < 60.0,
        format!("td exact {td_ok}, worst gradient rel. error {worst:.1e}, mini-MDP max|Q-Q*| {q_err:.2e}"),
    )
}

fn noisy(kind: MatcherKind) -> MatcherProfile {
    let base = match kind {
        MatcherKind::AlwaysSelect => MatcherProfile::always_select(),
        MatcherKind::Clarifying => MatcherProfile::clarifying(),
    };
    MatcherProfile {
        tau: Some(4.5),
        alpha: Some(0.15),
        select_threshold: 0.95,
        ..base
    }
}

fn gap_under_clarification(w: &World) -> Outcome {
    let gap = |kind| {
        let d = w.eval(PolicyKind::Direct, noisy(kind));
        let e = w.eval(PolicyKind::Extended, noisy(kind));
        e.success_rate - d.success_rate
    };
    let always = gap(MatcherKind::AlwaysSelect);
    let clar = gap(MatcherKind::Clarifying);
    let reduction = if always > 0.0 { (always - clar) / always } else { f64::NAN };
    outcome(
        always > 0.0 && clar < always && reduction >= 0.5,
        format!("gap always-select {always:+.3}, clarifying {clar:+.3}, reduction {reduction:.2}"),
    )
}

fn alpha_sweep(w: &World) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.03, 0.05, 0.1, 0.15, 0.3] {
        let p = MatcherProfile {
            alpha: Some(alpha),
            ..noisy(MatcherKind::AlwaysSelect)
        };
        let gap = w.eval(PolicyKind::Extended, p.clone()).success_rate - w.eval(PolicyKind::Direct, p).success_rate;
        pass &= gap >= 0.0;
        if alpha == 0.05 {
            pass &= gap >= 0.08;
        }
        parts.push(format!("{alpha}:{gap:+.3}"));
    }
    outcome(pass, format!("extended-direct gap by alpha {}", parts.join(" ")))
}

fn close_gains(w: &World) -> Outcome {
    let p = noisy(MatcherKind::AlwaysSelect);
    let d = w.eval(PolicyKind::Direct, p.clone());
    let e = w.eval(PolicyKind::Extended, p);
    let gain = |c: Condition| e.per_condition[&c].successes as f64 - d.per_condition[&c].successes as f64;
    let total: f64 = [Condition::Far, Condition::Split, Condition::Close].into_iter().map(gain).sum();
    let close = gain(Condition::Close);
    let share = if total > 0.0 { close / total } else { f64::NAN };
    outcome(
        total > 0.0 && share >= 0.6,
        format!(
            "gains far {:+} split {:+} close {:+}, close share {share:.2}",
            gain(Condition::Far),
            gain(Condition::Split),
            close
        ),
    )
}

fn mixed_interval(w: &World) -> Outcome {
    let profile = w.config.matcher.clone();
    let stats: Vec<PolicyStats> = [PolicyKind::Direct, PolicyKind::Extended, PolicyKind::Mixed]
        .into_iter()
        .map(|p| PolicyStats::from(&w.eval(p, profile.clone())))
        .collect();
    let interval = dominance_interval(&stats[2], &stats[..2], &w.config.rewards, (-0.5, 0.5));
    let summary = stats
        .iter()
        .map(|s| format!("{} {:.3}/{:.2}", s.policy, s.success_rate, s.avg_terms))
        .collect::<Vec<_>>()
        .join(", ");
    match interval {
        Some(i) => outcome(
            i.distance(-0.025) <= 0.01,
            format!("mixed wins on ({:.4}, {:.4}); {summary}", i.lo, i.hi),
        ),
        None => outcome(false, format!("mixed never wins; {summary}")),
    }
}

fn trained_director(w: &World, profile: MatcherProfile) -> LearnedDirector {
    let config = ExperimentConfig {
        matcher: profile,
        ..w.config.clone()
    };
    let out = train(&w.train, &w.lexicon, &config.train_config()).unwrap();
    LearnedDirector::new(out.network, "dqn").unwrap()
}

fn dqn_always_select(w: &World) -> Outcome {
    let profile = MatcherProfile::always_select();
    let dqn = trained_director(w, profile.clone());
    let s = w.settings(profile.clone());
    let r = evaluate_director(&dqn, &w.test, &w.lexicon, &s, Execution::Parallel).unwrap();
    let direct = w.eval(PolicyKind::Direct, profile.clone());
    let extended = w.eval(PolicyKind::Extended, profile);
    let reward_ok = r.avg_reward >= direct.avg_reward - 0.005 && r.avg_reward >= extended.avg_reward - 0.005;
    let success_ok = r.success_rate >= direct.success_rate - 0.01 && r.success_rate <= extended.success_rate + 0.01;
    let cells = policy_grid(dqn.network(), w.config.grid_resolution, &mean_features(&w.test));
    let fit = fit_end_turn_threshold(&cells);
    let grid_ok = fit.is_some_and(|f| f.agreement >= 0.95 && (0.70..=0.95).contains(&f.threshold));
    let fit_text = fit.map_or("none".into(), |f| format!("{:.2} (agreement {:.2})", f.threshold, f.agreement));
    outcome(
        reward_ok && success_ok && grid_ok,
        format!(
            "dqn {:.3}/{:.3}, direct {:.3}/{:.3}, extended {:.3}/{:.3} (success/reward); end-turn threshold {fit_text}",
            r.success_rate, r.avg_reward, direct.success_rate, direct.avg_reward, extended.success_rate, extended.avg_reward
        ),
    )
}

fn dqn_clarifying(w: &World) -> Outcome {
    let profile = MatcherProfile::clarifying();
    let dqn = trained_director(w, profile.clone());
    let s = w.settings(profile.clone());
    let episodes: Vec<EpisodeRecord> = run_episodes(&dqn, &w.test, &w.lexicon, &s, Execution::Parallel).unwrap();
    let n = episodes.len() as f64;
    let one = episodes.iter().filter(|e| e.opening_descriptions() == 1).count() as f64 / n;
    let answered = episodes.iter().all(|e| e.all_clarifications_answered());
    let reward = episodes.iter().map(|e| e.reward).sum::<f64>() / n;
    let direct = w.eval(PolicyKind::Direct, profile);
    outcome(
        one >= 0.9 && answered && (reward - direct.avg_reward).abs() <= 0.01,
        format!(
            "one-description openings {one:.3}, all answered {answered}, reward dqn {reward:.3} vs direct {:.3}",
            direct.avg_reward
        ),
    )
}

fn calibration(w: &World) -> Outcome {
    let director = make_director(&PolicyKind::Direct).unwrap();
    let cal = calibrate_threshold(
        director.as_ref(),
        &w.test,
        &w.lexicon,
        &w.settings(MatcherProfile::clarifying()),
        &w.config.calibration,
        Execution::Parallel,
    );
    let direct = w.eval(PolicyKind::Direct, w.config.matcher.clone()).success_rate;
    let bracket = (direct - 0.90).abs() <= 0.05;
    match cal {
        Ok(c) => outcome(
            (c.clarification_rate - 0.03).abs() <= 0.01 && bracket,
            format!(
                "threshold {:.4} gives clarification rate {:.3}; direct success {direct:.3}",
                c.threshold, c.clarification_rate
            ),
        ),
        Err(e) => outcome(false, format!("calibration failed: {e}; direct success {direct:.3}")),
    }
}

fn parser_suite(w: &World) -> Outcome {
    let parser = Parser::with_lexicon(&w.lexicon).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut round_trips = 0;
    for _ in 0..1000 {
        let id = w.lexicon.terms()[rng.random_range(0..w.lexicon.len())].id.clone();
        let lf = match rng.random_range(0..4) {
            0 => LogicalForm::clarify_term(id),
            1 => LogicalForm::clarify_patch(rng.random_range(0..3)),
            2 => LogicalForm::affirm_term(id),
            _ => LogicalForm::negate_term(id),
        };
        round_trips += usize::from(parser.parse_best(&realize(&lf, &w.lexicon)).as_ref() == Some(&lf));
    }
    #[derive(serde::Deserialize)]
    struct Golden {
        utterance: String,
        top: Option<LogicalForm>,
    }
    let golden: Vec<Golden> = include_str!("../../core/tests/data/parse_golden.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let matched = golden.iter().filter(|g| parser.parse_best(&g.utterance) == g.top).count();
    outcome(
        round_trips == 1000 && golden.len() >= 25 && matched == golden.len(),
        format!("round trip {round_trips}/1000, golden {matched}/{}", golden.len()),
    )
}

fn cli(args: &[&str]) {
    let cli = refcomm_cli::Cli::try_parse_from(std::iter::once("refcomm").chain(args.iter().copied())).unwrap();
    refcomm_cli::run(cli, &mut std::io::sink()).unwrap();
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names
        .iter()
        .all(|n| std::fs::read(a.join(n)).ok().is_some_and(|x| Some(x) == std::fs::read(b.join(n)).ok()))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    let body = json!({
        "seeds": {"contexts": 3, "eval": 4, "train": 5},
        "train_contexts": 300,
        "test_contexts": 300,
        "train": {"episodes": 3000}
    });
    std::fs::write(&config, body.to_string()).unwrap();
    let config = config.to_str().unwrap();
    let run = |cmd: &str, out: &Path| cli(&[cmd, "--config", config, "--out", out.to_str().unwrap()]);
    let mut ok = true;
    for (cmd, files) in [
        ("evaluate", &["manifest.json", "results.json", "results.csv"][..]),
        ("train", &["manifest.json", "weights.json", "train_log.csv", "eval.json"][..]),
    ] {
        let (a, b) = (tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b")));
        run(cmd, &a);
        run(cmd, &b);
        ok &= same_files(&a, &b, files);
    }
    outcome(ok, format!("manifests and outputs identical across two runs: {ok}"))
}
