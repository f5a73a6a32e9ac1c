use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_from_logits, InferenceSession, ParameterSet};
use crate::rng::Rng;
use crate::tokenizer::{IntervalLadder, TokenId, Vocabulary};

pub const DEFAULT_ROLLOUTS: usize = 20;
pub const DEFAULT_WINDOW: usize = 2048;
pub const DEFAULT_MAX_GENERATED: usize = 8192;
pub const READMISSION_WINDOW_MINUTES: f64 = 30.0 * 1440.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub n_rollouts: usize,
    pub context_window: usize,
    pub max_generated_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            n_rollouts: DEFAULT_ROLLOUTS,
            context_window: DEFAULT_WINDOW,
            max_generated_tokens: DEFAULT_MAX_GENERATED,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rollouts == 0 || self.max_generated_tokens == 0 || self.context_window == 0 {
            return Err(Error::invalid("rollout count, window and token cap must be positive"));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid(format!("temperature {} must be non-negative", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    IcuMortality,
    Readmission30d,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::IcuMortality, Task::Readmission30d];

    pub fn name(self) -> &'static str {
        match self {
            Task::IcuMortality => "icu_mortality",
            Task::Readmission30d => "readmission_30d",
        }
    }

    pub fn stop_rules(self) -> StopRules {
        match self {
            Task::IcuMortality => StopRules { death: true, discharge: true, admission: false, max_elapsed_minutes: None },
            Task::Readmission30d => StopRules {
                death: true,
                discharge: false,
                admission: true,
                max_elapsed_minutes: Some(READMISSION_WINDOW_MINUTES),
            },
        }
    }

    /// Terminal state counted as the event.
    pub fn event(self) -> Terminal {
        match self {
            Task::IcuMortality => Terminal::Death,
            Task::Readmission30d => Terminal::Admission,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::invalid(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Death,
    Discharge,
    Admission,
    TimeExceeded,
    Censored,
}

impl Terminal {
    pub fn name(self) -> &'static str {
        match self {
            Terminal::Death => "death",
            Terminal::Discharge => "discharge",
            Terminal::Admission => "admission",
            Terminal::TimeExceeded => "time_exceeded",
            Terminal::Censored => "censored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOutcome {
    pub terminal: Terminal,
    pub tokens_generated: usize,
    pub simulated_elapsed_minutes: f64,
}

/// Which generated tokens end a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRules {
    pub death: bool,
    /// Hospital or ICU discharge.
    pub discharge: bool,
    pub admission: bool,
    /// Stop once the summed interval durations exceed this.
    pub max_elapsed_minutes: Option<f64>,
}

/// Token ids with rollout meaning, plus nominal interval durations.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRoles {
    pub death: TokenId,
    pub discharge: TokenId,
    pub icu_discharge: TokenId,
    pub admission: TokenId,
    pub icu_admission: TokenId,
    durations: Vec<Option<f64>>,
}

impl TokenRoles {
    pub fn from_vocab(vocab: &Vocabulary) -> Self {
        let ladder = IntervalLadder::standard();
        let s = vocab.specials();
        let durations = (0..vocab.len() as u32)
            .map(|i| vocab.interval_class(TokenId(i)).map(|c| ladder.duration(c)))
            .collect();
        TokenRoles {
            death: s.death,
            discharge: s.discharge,
            icu_discharge: s.icu_discharge,
            admission: s.admission,
            icu_admission: s.icu_admission,
            durations,
        }
    }

    pub fn duration(&self, t: TokenId) -> Option<f64> {
        self.durations.get(t.index()).copied().flatten()
    }
}

/// Generation state for one rollout.
pub trait SamplerState: Send {
    /// Draws the next token from the current state.
    fn sample(&mut self, rng: &mut Rng) -> Result<TokenId>;
    /// Appends a token, sliding the window if it is full.
    fn push(&mut self, token: TokenId) -> Result<()>;
    /// Independent copy, so a shared prefix is only processed once.
    fn fork(&self) -> Box<dyn SamplerState + '_>;
}

/// Source of rollout states: a trained model or a test stub.
pub trait TokenSampler: Sync {
    fn begin<'a>(&'a self, context: &[TokenId]) -> Result<Box<dyn SamplerState + 'a>>;
}

/// Samples from a trained model with a key/value cache.
pub struct ModelSampler<'p> {
    pub params: &'p ParameterSet<f32>,
    pub window: usize,
    pub temperature: f64,
}

struct ModelState<'p> {
    session: InferenceSession<'p, f32>,
    temperature: f64,
}

impl SamplerState for ModelState<'_> {
    fn sample(&mut self, rng: &mut Rng) -> Result<TokenId> {
        sample_from_logits(self.session.logits(), self.temperature, rng)
    }
    fn push(&mut self, token: TokenId) -> Result<()> {
        self.session.push(token)
    }
    fn fork(&self) -> Box<dyn SamplerState + '_> {
        Box::new(ModelState { session: self.session.clone(), temperature: self.temperature })
    }
}

impl TokenSampler for ModelSampler<'_> {
    fn begin<'a>(&'a self, context: &[TokenId]) -> Result<Box<dyn SamplerState + 'a>> {
        let mut session = InferenceSession::new(self.params, self.window)?;
        session.reset(context)?;
        Ok(Box::new(ModelState { session, temperature: self.temperature }))
    }
}

/// Stub drawing from a fixed categorical distribution, or replaying a
/// script of tokens (cycling) when set.
#[derive(Debug, Clone)]
pub struct StubSampler {
    pub choices: Vec<(TokenId, f64)>,
    pub script: Vec<TokenId>,
}

impl StubSampler {
    pub fn always(t: TokenId) -> Self {
        StubSampler { choices: vec![(t, 1.0)], script: Vec::new() }
    }

    pub fn categorical(choices: Vec<(TokenId, f64)>) -> Self {
        StubSampler { choices, script: Vec::new() }
    }

    pub fn scripted(script: Vec<TokenId>) -> Self {
        StubSampler { choices: Vec::new(), script }
    }
}

#[derive(Clone)]
struct StubState<'s> {
    stub: &'s StubSampler,
    emitted: usize,
}

impl SamplerState for StubState<'_> {
    fn sample(&mut self, rng: &mut Rng) -> Result<TokenId> {
        if !self.stub.script.is_empty() {
            return Ok(self.stub.script[self.emitted % self.stub.script.len()]);
        }
        let total: f64 = self.stub.choices.iter().map(|c| c.1).sum();
        let mut u = rng.gen::<f64>() * total;
        for &(t, w) in &self.stub.choices {
            if u < w {
                return Ok(t);
            }
            u -= w;
        }
        self.stub.choices.last().map(|c| c.0).ok_or(Error::EmptyInput("stub choices"))
    }
    fn push(&mut self, _token: TokenId) -> Result<()> {
        self.emitted += 1;
        Ok(())
    }
    fn fork(&self) -> Box<dyn SamplerState + '_> {
        Box::new(self.clone())
    }
}

impl TokenSampler for StubSampler {
    fn begin<'a>(&'a self, _context: &[TokenId]) -> Result<Box<dyn SamplerState + 'a>> {
        Ok(Box::new(StubState { stub: self, emitted: 0 }))
    }
}

/// Samples, appends and checks stop rules until one fires or the cap is hit.
pub fn simulate_rollout(
    state: &mut dyn SamplerState,
    roles: &TokenRoles,
    rules: &StopRules,
    max_generated: usize,
    rng: &mut Rng,
) -> Result<TrajectoryOutcome> {
    let mut elapsed = 0.0;
    for n in 1..=max_generated {
        let t = state.sample(rng)?;
        let terminal = if rules.death && t == roles.death {
            Some(Terminal::Death)
        } else if rules.discharge && (t == roles.discharge || t == roles.icu_discharge) {
            Some(Terminal::Discharge)
        } else if rules.admission && t == roles.admission {
            Some(Terminal::Admission)
        } else {
            if let Some(d) = roles.duration(t) {
                elapsed += d;
            }
            match rules.max_elapsed_minutes {
                Some(limit) if elapsed > limit => Some(Terminal::TimeExceeded),
                _ => None,
            }
        };
        if let Some(terminal) = terminal {
            return Ok(TrajectoryOutcome { terminal, tokens_generated: n, simulated_elapsed_minutes: elapsed });
        }
        if n < max_generated {
            state.push(t)?;
        }
    }
    Ok(TrajectoryOutcome { terminal: Terminal::Censored, tokens_generated: max_generated, simulated_elapsed_minutes: elapsed })
}
