//! Simulated matchers and their noise models.
//!
//! Semantic noise perturbs every grounding distribution independently with a
//! Dirichlet draw before the matcher multiplies them together; selection noise
//! is a temperature softmax over the resulting belief ("noisy finger").

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::coherence::DialogueState;
use crate::error::{Error, Result};
use crate::lexicon::{argmax, conservative_score, DescriptionModel};
use crate::logical_form::LogicalForm;

/// Shape guard keeping every Gamma draw well defined.
pub const SHAPE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    AlwaysSelect,
    Clarifying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherProfile {
    pub kind: MatcherKind,
    /// Select once the most likely patch reaches this belief.
    pub select_threshold: f64,
    /// Fraction of clarifications that ask about a random term.
    pub clar_error_rate: f64,
    pub max_clarifications: usize,
    /// Selection temperature; `None` selects the most likely patch.
    pub tau: Option<f64>,
    /// Semantic noise concentration; `None` disables semantic noise.
    pub alpha: Option<f64>,
    /// Multiplier applied to `alpha` before it scales a distribution. With the
    /// default of 1 the Dirichlet concentration is `alpha * p`; 100 reads the
    /// probabilities as percentages.
    pub alpha_scale: f64,
}

impl Default for MatcherProfile {
    fn default() -> Self {
        MatcherProfile {
            kind: MatcherKind::AlwaysSelect,
            select_threshold: 0.95,
            clar_error_rate: 0.10,
            max_clarifications: 2,
            tau: Some(4.5),
            alpha: Some(0.15),
            alpha_scale: 1.0,
        }
    }
}

impl MatcherProfile {
    pub fn always_select() -> Self {
        MatcherProfile::default()
    }

    pub fn clarifying() -> Self {
        MatcherProfile {
            kind: MatcherKind::Clarifying,
            ..MatcherProfile::default()
        }
    }

    /// No semantic or selection noise.
    pub fn noiseless(mut self) -> Self {
        self.tau = None;
        self.alpha = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        prob("select_threshold", self.select_threshold)?;
        prob("clar_error_rate", self.clar_error_rate)?;
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("tau must be positive, got {t}")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidConfig(format!("alpha must be positive, got {a}")));
            }
        }
        if !(self.alpha_scale > 0.0 && self.alpha_scale.is_finite()) {
            return Err(Error::InvalidConfig("alpha_scale must be positive".into()));
        }
        Ok(())
    }

    fn concentration(&self) -> Option<f64> {
        self.alpha.map(|a| a * self.alpha_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherAction {
    Select(usize),
    Clarify(LogicalForm),
}

impl MatcherAction {
    pub fn to_logical_form(&self) -> LogicalForm {
        match self {
            MatcherAction::Select(i) => LogicalForm::select(*i),
            MatcherAction::Clarify(lf) => lf.clone(),
        }
    }
}

/// `ln G` for `G ~ Gamma(shape, 1)`, stable for very small shapes.
fn ln_gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0)
            .expect("positive shape")
            .sample(rng)
            .ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let boosted = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>();
        boosted.ln() + u.ln() / shape
    }
}

fn log_normalize(logw: [f64; 3]) -> [f64; 3] {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logw.iter().map(|w| (w - m).exp()).sum::<f64>().ln();
    logw.map(|w| w - lse)
}

/// Dirichlet draw with concentration `alpha * p`, returned as log-probabilities.
pub fn gamma_perturb_log<R: Rng + ?Sized>(p: [f64; 3], alpha: f64, rng: &mut R) -> [f64; 3] {
    log_normalize(p.map(|pi| ln_gamma_sample(alpha * pi + SHAPE_EPSILON, rng)))
}

/// Dirichlet draw with concentration `alpha * p`; its mean is `p`.
pub fn gamma_perturb<R: Rng + ?Sized>(p: [f64; 3], alpha: f64, rng: &mut R) -> [f64; 3] {
    gamma_perturb_log(p, alpha, rng).map(f64::exp)
}

/// `softmax(tau * p)`.
pub fn noisy_finger(p: [f64; 3], tau: f64) -> [f64; 3] {
    let scaled = p.map(|x| tau * x);
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scaled.map(|x| (x - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

fn sample_categorical<R: Rng + ?Sized>(p: [f64; 3], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    2
}

fn argmax_random_ties<R: Rng + ?Sized>(p: [f64; 3], rng: &mut R) -> usize {
    let best = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..3).filter(|&i| p[i] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// A simulated matcher for one episode. It remembers the noisy reading of
/// every grounding contribution it has already interpreted.
#[derive(Debug, Clone)]
pub struct Matcher {
    profile: MatcherProfile,
    readings: Vec<(usize, [f64; 3])>,
}

impl Matcher {
    pub fn new(profile: MatcherProfile) -> Self {
        Matcher {
            profile,
            readings: Vec::new(),
        }
    }

    pub fn profile(&self) -> &MatcherProfile {
        &self.profile
    }

    /// The matcher's (noisy) belief over the patches given everything said so far.
    pub fn belief<R: Rng + ?Sized>(&mut self, state: &DialogueState, rng: &mut R) -> [f64; 3] {
        let concentration = self.profile.concentration();
        for (id, factor) in state.factors() {
            if self.readings.iter().any(|(seen, _)| *seen == id) {
                continue;
            }
            let reading = match concentration {
                Some(a) => gamma_perturb_log(factor, a, rng),
                None => factor.map(f64::ln),
            };
            self.readings.push((id, reading));
        }
        let mut total = [0.0; 3];
        for (_, r) in &self.readings {
            for i in 0..3 {
                total[i] += r[i];
            }
        }
        if total.iter().all(|x| *x == f64::NEG_INFINITY) {
            return [1.0 / 3.0; 3];
        }
        log_normalize(total).map(f64::exp)
    }

    /// The matcher's move after the director ends its turn.
    pub fn step<M: DescriptionModel + ?Sized, R: Rng + ?Sized>(
        &mut self,
        state: &DialogueState,
        model: &M,
        rng: &mut R,
    ) -> Result<MatcherAction> {
        if state.closed {
            return Err(Error::DialogueClosed);
        }
        if state.turn != crate::coherence::Role::Matcher {
            return Err(Error::WrongTurn { expected: "matcher" });
        }
        let belief = self.belief(state, rng);
        let p = &self.profile;
        let confident = belief.iter().copied().fold(0.0, f64::max) >= p.select_threshold;
        let may_clarify =
            p.kind == MatcherKind::Clarifying && state.clarifications < p.max_clarifications;
        if !may_clarify || confident {
            let choice = match p.tau {
                Some(tau) => sample_categorical(noisy_finger(belief, tau), rng),
                None => argmax_random_ties(belief, rng),
            };
            return Ok(MatcherAction::Select(choice));
        }

        let lexicon = model.lexicon();
        let error_roll: f64 = rng.random();
        let term = if error_roll < p.clar_error_rate {
            &lexicon.terms()[rng.random_range(0..lexicon.len())]
        } else {
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| belief[b].total_cmp(&belief[a]).then(a.cmp(&b)));
            let patches = state.context().patches();
            let (top, second) = (&patches[order[0]], &patches[order[1]]);
            let scores: Vec<f64> = lexicon
                .terms()
                .iter()
                .map(|t| conservative_score(model, t, top, &[second]))
                .collect();
            &lexicon.terms()[argmax(&scores)]
        };
        Ok(MatcherAction::Clarify(LogicalForm::clarify_term(term.id.clone())))
    }
}
