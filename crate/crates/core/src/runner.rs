//! One interface over the four particle filters, used by the experiment harness and
//! the stability probe.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{otpf_step, NetworkShape, OtpfState, ParticleUpdate, TrainSchedule};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::filters::{enkf_step, sir_step};
use crate::rng::Rng;
use crate::ssm::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    OtpfInteracting,
    OtpfResampled,
    Enkf,
    Sir,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [Self::OtpfInteracting, Self::OtpfResampled, Self::Enkf, Self::Sir];

    pub fn name(self) -> &'static str {
        match self {
            Self::OtpfInteracting => "otpf_interacting",
            Self::OtpfResampled => "otpf_resampled",
            Self::Enkf => "enkf",
            Self::Sir => "sir",
        }
    }

    pub fn is_otpf(self) -> bool {
        matches!(self, Self::OtpfInteracting | Self::OtpfResampled)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown filter `{s}`")))
    }
}

/// Settings shared by the transport filters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OtpfSettings {
    pub schedule: TrainSchedule,
    pub shape: NetworkShape,
}

/// What one step reports besides the new ensemble.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    /// SIR: effective sample size before resampling.
    pub ess: Option<f64>,
    /// SIR: every weight underflowed and uniform weights were used.
    pub underflow: bool,
    /// Transport filters: outer iterations, final objective and tail mean of the run.
    pub train: Option<TrainSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSummary {
    pub iterations: usize,
    pub final_objective: f64,
    pub tail_mean: f64,
    pub gap_proxy: f64,
}

/// A filter together with its current ensemble and, for the transport filters, the
/// networks carried between steps.
#[derive(Debug, Clone)]
pub struct FilterRunner {
    kind: FilterKind,
    spec: ModelSpec,
    settings: OtpfSettings,
    ensemble: Ensemble,
    otpf: Option<OtpfState>,
}

impl FilterRunner {
    /// The transport filters draw their initial network weights from `rng`.
    pub fn new(kind: FilterKind, spec: ModelSpec, initial: Ensemble, settings: OtpfSettings, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        if initial.dim() != spec.n {
            return Err(Error::Dimension {
                what: "initial ensemble",
                expected: spec.n,
                got: initial.dim(),
            });
        }
        settings.schedule.validate()?;
        let otpf = kind.is_otpf().then(|| {
            let mut s = OtpfState::new(spec.n, spec.m, settings.shape, settings.schedule.learning_rate, rng);
            s.time_index = initial.t;
            s
        });
        Ok(Self {
            kind,
            spec,
            settings,
            ensemble: initial,
            otpf,
        })
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn otpf_state(&self) -> Option<&OtpfState> {
        self.otpf.as_ref()
    }

    /// Advances the ensemble by one time step given the observation `y`.
    pub fn step(&mut self, y: &[f64], rng: &mut Rng) -> Result<StepDiagnostics> {
        let mut diag = StepDiagnostics::default();
        self.ensemble = match self.kind {
            FilterKind::Enkf => enkf_step(&self.ensemble, y, &self.spec, rng)?,
            FilterKind::Sir => {
                let out = sir_step(&self.ensemble, y, &self.spec, rng)?;
                diag.ess = Some(out.ess);
                diag.underflow = out.underflow;
                out.ensemble
            }
            FilterKind::OtpfInteracting | FilterKind::OtpfResampled => {
                let update = if self.kind == FilterKind::OtpfInteracting {
                    ParticleUpdate::Interacting
                } else {
                    ParticleUpdate::Resampled
                };
                let state = self.otpf.as_mut().expect("transport filter carries its state");
                let (ens, report) = otpf_step(update, &self.ensemble, y, &self.spec, state, &self.settings.schedule, rng)?;
                diag.train = Some(TrainSummary {
                    iterations: report.iterations,
                    final_objective: report.final_objective,
                    tail_mean: report.tail_mean,
                    gap_proxy: report.gap_proxy,
                });
                ens
            }
        };
        Ok(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::ObsKind;

    #[test]
    fn names_round_trip() {
        for k in FilterKind::ALL {
            assert_eq!(k.name().parse::<FilterKind>().unwrap(), k);
        }
        assert!("kalman".parse::<FilterKind>().is_err());
    }

    #[test]
    fn runner_advances_time() {
        let spec = ModelSpec::benchmark(1, ObsKind::Linear);
        let mut settings = OtpfSettings::default();
        settings.schedule.initial_iterations = 8;
        settings.schedule.floor_iterations = 4;
        for kind in FilterKind::ALL {
            let mut rng = rng_from_seed(2);
            let init = Ensemble::gaussian(&[0.0], 1.0, 64, &mut rng);
            let mut r = FilterRunner::new(kind, spec, init, settings, &mut rng).unwrap();
            for t in 1..=3 {
                let d = r.step(&[0.5], &mut rng).unwrap();
                assert_eq!(r.ensemble().t, t);
                assert_eq!(d.ess.is_some(), kind == FilterKind::Sir);
                assert_eq!(d.train.is_some(), kind.is_otpf());
            }
        }
    }
}
