//! Flat `key = value` experiment configuration.

use std::collections::HashSet;
use std::path::PathBuf;

use caia_core::Tolerances;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Verify,
    DemoPaperExample,
    Pair,
    DelayPhase,
    DelayMagnitude,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Verify => "verify",
            Experiment::DemoPaperExample => "demo-paper-example",
            Experiment::Pair => "pair",
            Experiment::DelayPhase => "delay-phase",
            Experiment::DelayMagnitude => "delay-magnitude",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Experiment::Pair => 10,
            Experiment::DelayPhase => 100_000,
            Experiment::DelayMagnitude => 1_000,
            Experiment::Verify | Experiment::DemoPaperExample => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Aided,
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub k_users: usize,
    pub n: usize,
    /// Pairs in the synthesized target; `None` means `n` (every value paired).
    pub n1: Option<usize>,
    pub channel: ChannelKind,
    pub p: f64,
    pub psi: f64,
    pub sigma: f64,
    pub noise_variance: f64,
    /// Overrides `(p·ψ)^{-1/2}` when set.
    pub delta_phi: Option<f64>,
    pub delta_t_over_t: f64,
    pub trials: usize,
    pub targets: usize,
    pub seed: u64,
    pub tol: Tolerances,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        Self {
            experiment,
            k_users: 3,
            n: 3,
            n1: None,
            channel: ChannelKind::Aided,
            p: 100.0,
            psi: 1.0,
            sigma: 1.0,
            noise_variance: 1.0,
            delta_phi: None,
            delta_t_over_t: 0.05,
            trials: experiment.default_trials(),
            targets: 1_000,
            seed: 0,
            tol: Tolerances::default(),
            out: None,
        }
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(experiment: Experiment, text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::defaults(experiment);
        let mut seen = HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Usage(format!("config line {}: {msg}", no + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(at)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("`{key}` has invalid value `{value}`"))
        }
        match key {
            "experiment" => {
                if value != self.experiment.name() {
                    return Err(format!("config is for `{value}` but `{}` was requested", self.experiment.name()));
                }
            }
            "K" | "k" => self.k_users = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "n1" => self.n1 = Some(num(key, value)?),
            "channel" => {
                self.channel = match value {
                    "aided" => ChannelKind::Aided,
                    "generic" => ChannelKind::Generic,
                    _ => return Err(format!("`channel` must be aided or generic, got `{value}`")),
                }
            }
            "p" => self.p = num(key, value)?,
            "psi" => self.psi = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "noise_variance" => self.noise_variance = num(key, value)?,
            "delta_phi" => self.delta_phi = Some(num(key, value)?),
            "delta_t_over_t" => self.delta_t_over_t = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "targets" => self.targets = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "value_match_tol" => self.tol.value_match = num(key, value)?,
            "rank_multiplier" => self.tol.rank_multiplier = num(key, value)?,
            "span_angle_tol" => self.tol.span_angle = num(key, value)?,
            "decode_tol" => self.tol.decode = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Usage(msg.to_string()));
        if self.k_users < 3 {
            return bad("K must be at least 3");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if let Some(n1) = self.n1 {
            if n1 > self.n || 3 * n1 < 2 * self.n {
                return bad("n1 must lie in ceil(2n/3)..=n");
            }
        }
        for (name, v) in [("p", self.p), ("psi", self.psi), ("sigma", self.sigma), ("delta_t_over_t", self.delta_t_over_t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("{name} must be positive")));
            }
        }
        if !(self.noise_variance >= 0.0) {
            return bad("noise_variance must be nonnegative");
        }
        if let Some(d) = self.delta_phi {
            if !(d > 0.0 && d <= std::f64::consts::PI) {
                return bad("delta_phi must lie in (0, pi]");
            }
        }
        if self.trials == 0 || self.targets == 0 {
            return bad("trials and targets must be positive");
        }
        let t = &self.tol;
        if [t.value_match, t.rank_multiplier, t.span_angle, t.decode].iter().any(|v| !(*v >= 0.0)) {
            return bad("tolerances must be nonnegative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_overrides() {
        let cfg = ExperimentConfig::parse(
            Experiment::DelayPhase,
            "# phase run\np = 400 # louder\n\npsi=0.25\ntrials = 50\nchannel = generic\n",
        )
        .unwrap();
        assert_eq!(cfg.p, 400.0);
        assert_eq!(cfg.psi, 0.25);
        assert_eq!(cfg.trials, 50);
        assert_eq!(cfg.channel, ChannelKind::Generic);
        assert_eq!(cfg.k_users, 3);
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["bogus = 1", "p = abc", "p", "p = 1\np = 2", "n = 3\nn1 = 1", "experiment = pair", "sigma = -1"] {
            assert!(
                matches!(ExperimentConfig::parse(Experiment::Verify, text), Err(CliError::Usage(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn per_experiment_trial_defaults() {
        assert_eq!(ExperimentConfig::defaults(Experiment::DelayPhase).trials, 100_000);
        assert_eq!(ExperimentConfig::defaults(Experiment::Pair).trials, 10);
    }
}
