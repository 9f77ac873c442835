use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{NetworkShape, OtpfState};
use crate::error::{Error, Result};
use crate::nn::{AdamState, IcnnParams, TransportNetParams};

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint of an [`OtpfState`]: the flat parameter vectors of both
/// networks, both ADAM states and the time index they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub time_index: usize,
    pub n: usize,
    pub m: usize,
    pub shape: NetworkShape,
    pub icnn: Vec<f64>,
    pub transport: Vec<f64>,
    pub adam_icnn: AdamState,
    pub adam_transport: AdamState,
}

impl Checkpoint {
    pub fn from_state(state: &OtpfState) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            time_index: state.time_index,
            n: state.icnn.state_dim(),
            m: state.icnn.obs_dim(),
            shape: state.shape(),
            icnn: state.icnn.as_slice().to_vec(),
            transport: state.transport.as_slice().to_vec(),
            adam_icnn: state.adam_icnn.clone(),
            adam_transport: state.adam_transport.clone(),
        }
    }

    pub fn into_state(self) -> Result<OtpfState> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!("unsupported checkpoint version {}", self.version)));
        }
        let icnn = IcnnParams::from_flat(self.n, self.m, self.shape.icnn_units, self.icnn)?;
        let transport = TransportNetParams::from_flat(self.n, self.m, self.shape.width, self.shape.blocks, self.transport)?;
        if self.adam_icnn.len() != icnn.as_slice().len() || self.adam_transport.len() != transport.as_slice().len() {
            return Err(Error::Invalid("optimizer state does not match the network sizes".into()));
        }
        Ok(OtpfState {
            icnn,
            transport,
            adam_icnn: self.adam_icnn,
            adam_transport: self.adam_transport,
            time_index: self.time_index,
            budget: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{train_bayes_map, TrainSchedule, TrainingPool};
    use crate::rng::rng_from_seed;

    #[test]
    fn checkpoint_restores_state_exactly() {
        let mut rng = rng_from_seed(3);
        let mut state = OtpfState::new(2, 2, NetworkShape { icnn_units: 4, width: 6, blocks: 2 }, 1e-2, &mut rng);
        let xs: Vec<f64> = (0..80).map(|i| (i as f64).cos()).collect();
        let pool = TrainingPool::new(2, 2, xs.clone(), xs).unwrap();
        state.budget = 3;
        train_bayes_map(&pool, &TrainSchedule::default(), &mut state, &mut rng).unwrap();
        state.time_index = 4;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_state(&state).save(&path).unwrap();
        let restored = Checkpoint::load(&path).unwrap().into_state().unwrap();
        assert_eq!(restored.time_index, 4);
        assert_eq!(restored.icnn, state.icnn);
        assert_eq!(restored.transport, state.transport);
        assert_eq!(restored.adam_icnn, state.adam_icnn);
        assert_eq!(restored.adam_transport, state.adam_transport);
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let mut rng = rng_from_seed(3);
        let state = OtpfState::new(1, 1, NetworkShape::default(), 1e-2, &mut rng);
        let mut ckpt = Checkpoint::from_state(&state);
        ckpt.icnn.pop();
        assert!(ckpt.into_state().is_err());
    }
}
