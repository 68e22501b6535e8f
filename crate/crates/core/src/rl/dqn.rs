//! Vanilla DQN: policy and target networks, TD targets over replay minibatches,
//! and the training loop against the simulated matcher.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coherence::{DialogueState, Role};
use crate::color::ColorContext;
use crate::episode::Director;
use crate::error::{Error, Result};
use crate::lexicon::DescriptionModel;
use crate::matcher::{Matcher, MatcherAction, MatcherKind, MatcherProfile};
use crate::policies::{execute_action, legal_actions, DirectorAction};
use crate::rl::adam::{Adam, AdamConfig};
use crate::rl::network::QNetwork;
use crate::rl::replay::{ReplayMemory, Transition};
use crate::rl::reward::{reward, Outcome, RewardParams};
use crate::rl::state::{encode_state, STATE_DIM};

/// Largest Q-value among the allowed actions (all of them when `legal` is empty).
fn masked_max(q: &[f64], legal: &[bool]) -> f64 {
    q.iter()
        .enumerate()
        .filter(|(i, _)| legal.is_empty() || legal[*i])
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the best allowed action; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], legal: &[bool]) -> usize {
    let mut best = None;
    for (i, v) in q.iter().enumerate() {
        if !legal.is_empty() && !legal[i] {
            continue;
        }
        match best {
            Some((_, b)) if *v <= b => {}
            _ => best = Some((i, *v)),
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}

/// Bootstrapped target `r + gamma * max_a' Q_target(s', a')`, or `r` when terminal.
pub fn td_target(t: &Transition, target: &QNetwork, gamma: f64) -> f64 {
    if t.terminal {
        t.r
    } else {
        let next = target.forward(&t.s_next);
        let best = masked_max(&next, &t.next_legal);
        t.r + gamma * if best.is_finite() { best } else { 0.0 }
    }
}

/// `Q_policy(s, a) - target` for every transition in the batch.
pub fn td_delta(batch: &[&Transition], policy: &QNetwork, target: &QNetwork, gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| policy.forward(&t.s)[t.a] - td_target(t, target, gamma))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: f64,
    pub mean_abs_q: f64,
}

/// Policy network, target network and optimizer state.
#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub policy: QNetwork,
    pub target: QNetwork,
    adam: Adam,
    gamma: f64,
    target_sync: usize,
    max_mean_abs_q: f64,
    updates: usize,
}

impl DqnLearner {
    pub fn new(policy: QNetwork, adam: AdamConfig, gamma: f64, target_sync: usize) -> Self {
        let len = policy.params().len();
        DqnLearner {
            target: policy.clone(),
            policy,
            adam: Adam::new(adam, len),
            gamma,
            target_sync: target_sync.max(1),
            max_mean_abs_q: 1e3,
            updates: 0,
        }
    }

    pub fn with_divergence_limit(mut self, limit: f64) -> Self {
        self.max_mean_abs_q = limit;
        self
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// One Adam step on the mean squared TD error of `batch`.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| td_target(t, &self.target, self.gamma))
            .collect();
        let samples: Vec<(&[f64], usize, f64)> = batch
            .iter()
            .zip(&targets)
            .map(|(t, y)| (t.s.as_slice(), t.a, *y))
            .collect();
        let g = self.policy.squared_error_gradient(&samples);
        if !(g.mean_abs_q <= self.max_mean_abs_q) {
            return Err(Error::Diverged {
                update: self.updates,
                mean_abs_q: g.mean_abs_q,
            });
        }
        self.adam.step(self.policy.params_mut(), &g.grads)?;
        self.updates += 1;
        if self.updates % self.target_sync == 0 {
            self.target = self.policy.clone();
        }
        Ok(UpdateStats {
            loss: g.loss,
            mean_abs_q: g.mean_abs_q,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub hidden: usize,
    /// Defaults to a per-matcher rate when absent.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub max_mean_abs_q: f64,
    pub seed: u64,
    pub rewards: RewardParams,
    pub matcher: MatcherProfile,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 50_000,
            hidden: 64,
            learning_rate: None,
            batch_size: 64,
            replay_capacity: 50_000,
            target_sync: 500,
            warmup: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            max_mean_abs_q: 1e3,
            seed: 0,
            rewards: RewardParams::default(),
            matcher: MatcherProfile::always_select(),
        }
    }
}

impl TrainConfig {
    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.matcher.kind {
            MatcherKind::AlwaysSelect => 1e-2,
            MatcherKind::Clarifying => 7.5e-5,
        })
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = (self.episodes as f64 * self.epsilon_decay_fraction).max(1.0);
        let frac = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        self.rewards.validate()?;
        self.matcher.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.episodes == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("episodes, hidden and batch_size must be positive");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity must hold at least one batch");
        }
        if !(self.learning_rate() > 0.0) {
            return bad("learning rate must be positive");
        }
        for e in [self.epsilon_start, self.epsilon_end, self.epsilon_decay_fraction] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon settings must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub reward: f64,
    pub success: bool,
    pub epsilon: f64,
    /// Mean minibatch loss over the episode's updates.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QNetwork,
    pub log: Vec<TrainLogRow>,
    pub updates: usize,
}

fn choose_action<R: Rng + ?Sized>(
    net: &QNetwork,
    s: &[f64],
    legal: &[bool; DirectorAction::COUNT],
    epsilon: f64,
    rng: &mut R,
) -> DirectorAction {
    let index = if rng.random::<f64>() < epsilon {
        let options: Vec<usize> = (0..DirectorAction::COUNT).filter(|&i| legal[i]).collect();
        options[rng.random_range(0..options.len())]
    } else {
        masked_argmax(&net.forward(s), legal)
    };
    DirectorAction::from_index(index).expect("action index in range")
}

/// Train a director against the configured matcher, cycling through `contexts`.
/// Single-threaded and fully determined by `config.seed`.
pub fn train(
    contexts: &[ColorContext],
    model: &dyn DescriptionModel,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if contexts.is_empty() {
        return Err(Error::InvalidConfig("no training contexts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = QNetwork::random(STATE_DIM, config.hidden, DirectorAction::COUNT, &mut rng);
    let mut learner = DqnLearner::new(
        net,
        AdamConfig::with_lr(config.learning_rate()),
        config.rewards.gamma,
        config.target_sync,
    )
    .with_divergence_limit(config.max_mean_abs_q);
    let mut memory = ReplayMemory::new(config.replay_capacity);
    let mut log = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let context = &contexts[episode % contexts.len()];
        let epsilon = config.epsilon(episode);
        let mut state = DialogueState::new(context.clone());
        let mut matcher = Matcher::new(config.matcher.clone());
        let mut losses = Vec::new();
        let (ep_reward, success) = loop {
            let s = encode_state(&state);
            let legal = legal_actions(&state, model);
            let action = choose_action(&learner.policy, &s, &legal, epsilon, &mut rng);
            let (_, mut next) = execute_action(action, &state, model)?;
            let mut terminal = None;
            if next.turn == Role::Matcher {
                let reply = matcher.step(&next, model, &mut rng)?;
                next = next.attach(&reply.to_logical_form(), Role::Matcher, model)?;
                if let MatcherAction::Select(i) = reply {
                    let ok = i == context.target();
                    let outcome = if ok { Outcome::Success } else { Outcome::Failure };
                    terminal = Some((reward(outcome, next.term_count, &config.rewards), ok));
                }
            }
            let s_next = encode_state(&next);
            let r = terminal.map_or(0.0, |(r, _)| r);
            let next_legal = legal_actions(&next, model);
            memory.push(
                Transition::new(s.to_vec(), action.index(), r, s_next.to_vec(), terminal.is_some())
                    .with_next_legal(&next_legal),
            );
            if memory.len() >= config.warmup.max(config.batch_size) {
                let batch = memory.sample(config.batch_size, &mut rng);
                losses.push(learner.update(&batch)?.loss);
            }
            state = next;
            if let Some(done) = terminal {
                break done;
            }
        };
        log.push(TrainLogRow {
            episode,
            reward: ep_reward,
            success,
            epsilon,
            loss: if losses.is_empty() {
                None
            } else {
                Some(losses.iter().sum::<f64>() / losses.len() as f64)
            },
        });
    }
    Ok(TrainOutcome {
        updates: learner.updates(),
        network: learner.policy,
        log,
    })
}

pub fn write_train_log<W: std::io::Write>(w: W, log: &[TrainLogRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in log {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| Error::io("training log", e))?;
    Ok(())
}

/// Greedy director backed by a trained network.
#[derive(Debug, Clone)]
pub struct LearnedDirector {
    network: QNetwork,
    label: String,
}

impl LearnedDirector {
    pub fn new(network: QNetwork, label: impl Into<String>) -> Result<Self> {
        if network.inputs() != STATE_DIM || network.outputs() != DirectorAction::COUNT {
            return Err(Error::WeightMismatch(format!(
                "director networks map {STATE_DIM} inputs to {} outputs",
                DirectorAction::COUNT
            )));
        }
        Ok(LearnedDirector {
            network,
            label: label.into(),
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.network
    }

    pub fn q_values(&self, state: &DialogueState) -> Vec<f64> {
        self.network.forward(&encode_state(state))
    }

    pub fn greedy<M: DescriptionModel + ?Sized>(&self, state: &DialogueState, model: &M) -> DirectorAction {
        let legal = legal_actions(state, model);
        let index = masked_argmax(&self.q_values(state), &legal);
        DirectorAction::from_index(index).expect("action index in range")
    }
}

impl Director for LearnedDirector {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn next_action(
        &self,
        _turn_start: &DialogueState,
        current: &DialogueState,
        _taken: &[DirectorAction],
        model: &dyn DescriptionModel,
    ) -> Result<DirectorAction> {
        Ok(self.greedy(current, model))
    }
}
