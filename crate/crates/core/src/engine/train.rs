use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{resnet_eval, AdamConfig, AdamState, Direction, IcnnParams, ResNetCache, TransportNetParams};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    /// ADAM ascent steps on `T` per descent step on `f`.
    pub inner_iterations: usize,
    pub initial_iterations: usize,
    pub floor_iterations: usize,
    pub batch_size: usize,
    pub warm_start: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            inner_iterations: 10,
            initial_iterations: 1024,
            floor_iterations: 64,
            batch_size: 32,
            warm_start: true,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        for (name, v) in [
            ("train.inner_iterations", self.inner_iterations),
            ("train.initial_iterations", self.initial_iterations),
            ("train.floor_iterations", self.floor_iterations),
            ("train.batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.floor_iterations > self.initial_iterations {
            return Err(Error::config(
                "train.floor_iterations",
                "must not exceed train.initial_iterations",
            ));
        }
        Ok(())
    }
}

/// Outer iterations at filtering step `t >= 1`: `max(initial / 2^(t-1), floor)`.
pub fn iteration_schedule(t: usize, schedule: &TrainSchedule) -> usize {
    let halvings = t.saturating_sub(1);
    let budget = if halvings >= usize::BITS as usize {
        0
    } else {
        schedule.initial_iterations >> halvings
    };
    budget.max(schedule.floor_iterations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub icnn_units: usize,
    pub width: usize,
    pub blocks: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            icnn_units: 32,
            width: 32,
            blocks: 2,
        }
    }
}

/// Networks and optimizer state carried across filtering steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OtpfState {
    pub icnn: IcnnParams,
    pub transport: TransportNetParams,
    pub adam_icnn: AdamState,
    pub adam_transport: AdamState,
    /// Time index of the ensemble the state was last used with.
    pub time_index: usize,
    /// Outer iterations for the next training run.
    pub budget: usize,
}

impl OtpfState {
    pub fn new(n: usize, m: usize, shape: NetworkShape, learning_rate: f64, rng: &mut Rng) -> Self {
        let icnn = IcnnParams::init(n, m, shape.icnn_units, rng);
        let transport = TransportNetParams::init(n, m, shape.width, shape.blocks, rng);
        let cfg = AdamConfig::with_learning_rate(learning_rate);
        Self {
            adam_icnn: AdamState::new(icnn.as_slice().len(), cfg),
            adam_transport: AdamState::new(transport.as_slice().len(), cfg),
            icnn,
            transport,
            time_index: 0,
            budget: 0,
        }
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape {
            icnn_units: self.icnn.units(),
            width: self.transport.width(),
            blocks: self.transport.blocks(),
        }
    }

    /// Fresh networks and optimizer moments, keeping the time index.
    pub fn reinitialize(&mut self, rng: &mut Rng) {
        let lr = self.adam_icnn.config.learning_rate;
        let fresh = Self::new(self.icnn.state_dim(), self.icnn.obs_dim(), self.shape(), lr, rng);
        *self = Self {
            time_index: self.time_index,
            budget: self.budget,
            ..fresh
        };
    }
}

fn mean_and_spread(data: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let len = (data.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(a, v)| *a += v / len);
    }
    for row in data.chunks_exact(dim) {
        var.iter_mut().zip(row).zip(&mean).for_each(|((a, v), mu)| *a += (v - mu).powi(2) / len);
    }
    (mean, var)
}

fn scale_or_one(var: f64) -> f64 {
    if var > 1e-24 {
        var.sqrt()
    } else {
        1.0
    }
}

/// `N` joint samples `(x_i, y_i)` from which training batches are drawn.
///
/// The networks work in standardized coordinates. Observations are shifted and
/// scaled per coordinate. States are shifted per coordinate but scaled by one common
/// factor (the root mean coordinate variance): translations and isotropic scalings
/// commute with quadratic-cost transport maps, so a map learned in these coordinates
/// and mapped back solves the original problem. [`TrainingPool::x`] and
/// [`TrainingPool::y`] return standardized samples; [`TrainingPool::map_point`]
/// evaluates a transport network on raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPool {
    n: usize,
    m: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    state_mean: Vec<f64>,
    state_scale: f64,
    obs_mean: Vec<f64>,
    obs_scale: Vec<f64>,
}

impl TrainingPool {
    pub fn new(n: usize, m: usize, mut xs: Vec<f64>, mut ys: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 || xs.is_empty() || xs.len() % n != 0 {
            return Err(Error::Invalid("training states do not form whole vectors".into()));
        }
        check_len("training observations", xs.len() / n * m, ys.len())?;
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training pool"));
        }
        let (state_mean, var) = mean_and_spread(&xs, n);
        let state_scale = scale_or_one(var.iter().sum::<f64>() / n as f64);
        let (obs_mean, var) = mean_and_spread(&ys, m);
        let obs_scale: Vec<f64> = var.into_iter().map(scale_or_one).collect();
        for x in xs.chunks_exact_mut(n) {
            x.iter_mut().zip(&state_mean).for_each(|(v, mu)| *v = (*v - mu) / state_scale);
        }
        for y in ys.chunks_exact_mut(m) {
            for ((v, mu), s) in y.iter_mut().zip(&obs_mean).zip(&obs_scale) {
                *v = (*v - mu) / s;
            }
        }
        Ok(Self {
            n,
            m,
            xs,
            ys,
            state_mean,
            state_scale,
            obs_mean,
            obs_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Standardized state of sample `i`.
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.n..(i + 1) * self.n]
    }

    /// Standardized observation of sample `i`.
    pub fn y(&self, i: usize) -> &[f64] {
        &self.ys[i * self.m..(i + 1) * self.m]
    }

    pub fn standardize_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.state_mean).map(|(v, mu)| (v - mu) / self.state_scale).collect()
    }

    pub fn unstandardize_state(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.state_mean).map(|(v, mu)| mu + self.state_scale * v).collect()
    }

    pub fn standardize_obs(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.obs_mean)
            .zip(&self.obs_scale)
            .map(|((v, mu), s)| (v - mu) / s)
            .collect()
    }

    /// `T` trained on this pool, applied to a raw state and observation.
    pub fn map_point(&self, t: &TransportNetParams, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.n, x.len())?;
        check_len("observation", self.m, y.len())?;
        let z = resnet_eval(t, &self.standardize_state(x), &self.standardize_obs(y))?;
        Ok(self.unstandardize_state(&z))
    }

    pub fn state_mean(&self) -> &[f64] {
        &self.state_mean
    }

    pub fn state_scale(&self) -> f64 {
        self.state_scale
    }

    pub fn obs_mean(&self) -> &[f64] {
        &self.obs_mean
    }

    pub fn obs_scale(&self) -> &[f64] {
        &self.obs_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    /// Batch objective of the last outer iteration.
    pub final_objective: f64,
    /// Mean batch objective over the final decile of outer iterations.
    pub tail_mean: f64,
    /// One batch objective per outer iteration.
    pub trace: Vec<f64>,
    /// Tail mean minus the oracle objective when one is supplied, otherwise the
    /// decrease of the decile mean over the last two deciles.
    pub gap_proxy: f64,
}

impl TrainReport {
    fn from_trace(trace: Vec<f64>) -> Self {
        let len = trace.len();
        let dec = (len / 10).max(1);
        let mean = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
        let tail = &trace[len.saturating_sub(dec)..];
        let prev = &trace[len.saturating_sub(2 * dec)..len.saturating_sub(dec)];
        let tail_mean = mean(tail);
        let gap_proxy = if prev.is_empty() { 0.0 } else { mean(prev) - tail_mean };
        Self {
            iterations: len,
            final_objective: trace.last().copied().unwrap_or(f64::NAN),
            tail_mean,
            trace,
            gap_proxy,
        }
    }

    pub fn with_oracle(mut self, oracle_objective: f64) -> Self {
        self.gap_proxy = self.tail_mean - oracle_objective;
        self
    }
}

/// Empirical min-max objective: mean of `f(x, y)` over the joint batch plus mean of
/// `x . T(x, y) - f(T(x, y), y)` over the independent batch.
pub fn minimax_objective(
    f: &IcnnParams,
    t: &TransportNetParams,
    joint: &[(&[f64], &[f64])],
    indep: &[(&[f64], &[f64])],
) -> Result<f64> {
    if joint.is_empty() || indep.is_empty() {
        return Err(Error::Invalid("objective batches must be nonempty".into()));
    }
    let (n, m) = (f.state_dim(), f.obs_dim());
    if t.state_dim() != n || t.obs_dim() != m {
        return Err(Error::Invalid("potential and transport net have different dimensions".into()));
    }
    for (x, y) in joint.iter().chain(indep) {
        check_len("objective state sample", n, x.len())?;
        check_len("objective observation sample", m, y.len())?;
    }
    let joint_term = joint.iter().map(|(x, y)| f.eval_unchecked(x, y)).sum::<f64>() / joint.len() as f64;
    let mut cache = ResNetCache::default();
    let indep_term = indep
        .iter()
        .map(|(x, y)| {
            let tx = t.forward(x, y, &mut cache);
            let dot: f64 = x.iter().zip(tx).map(|(a, b)| a * b).sum();
            dot - f.eval_unchecked(tx, y)
        })
        .sum::<f64>()
        / indep.len() as f64;
    Ok(joint_term + indep_term)
}

/// Runs `state.budget` outer iterations on `pool`.
///
/// Each outer iteration draws a batch of indices without replacement and a fresh
/// permutation `rho` of the pool's observation column. The joint batch is
/// `(x_i, y_i)`, the independent batch `(x_i, y_rho(i))`. `T` then takes
/// `inner_iterations` ADAM ascent steps, `f` one ADAM descent step followed by the
/// projection `W_k <- max(W_k, 0)`.
pub fn train_bayes_map(
    pool: &TrainingPool,
    schedule: &TrainSchedule,
    state: &mut OtpfState,
    rng: &mut Rng,
) -> Result<TrainReport> {
    let (n, m) = (state.icnn.state_dim(), state.icnn.obs_dim());
    check_len("training pool state dimension", n, pool.n)?;
    check_len("training pool observation dimension", m, pool.m)?;
    let size = pool.len();
    let batch = schedule.batch_size;
    if size < batch {
        return Err(Error::Invalid(format!("training pool of {size} samples is smaller than the batch size {batch}")));
    }
    let scale = 1.0 / batch as f64;
    let mut rho: Vec<usize> = (0..size).collect();
    let mut grad_t = vec![0.0; state.transport.as_slice().len()];
    let mut grad_f = vec![0.0; state.icnn.as_slice().len()];
    let mut caches = vec![ResNetCache::default(); batch];
    let mut fx = vec![0.0; n];
    let mut upstream = vec![0.0; n];
    let mut trace = Vec::with_capacity(state.budget);

    for iteration in 0..state.budget {
        let idx = index::sample(rng, size, batch);
        rho.shuffle(rng);

        for _ in 0..schedule.inner_iterations {
            grad_t.iter_mut().for_each(|g| *g = 0.0);
            for (cache, i) in caches.iter_mut().zip(idx.iter()) {
                let x = pool.x(i);
                let y = pool.y(rho[i]);
                let tx = state.transport.forward(x, y, cache);
                state.icnn.grad_x_into(tx, y, &mut fx);
                for ((u, xv), gv) in upstream.iter_mut().zip(x).zip(&fx) {
                    *u = scale * (xv - gv);
                }
                state.transport.backward_accumulate(cache, &upstream, &mut grad_t);
            }
            state
                .adam_transport
                .step(state.transport.as_mut_slice(), &grad_t, Direction::Ascent)?;
        }

        grad_f.iter_mut().for_each(|g| *g = 0.0);
        let mut objective = 0.0;
        let cache = &mut caches[0];
        for i in idx.iter() {
            let (x, y, y_ind) = (pool.x(i), pool.y(i), pool.y(rho[i]));
            objective += state.icnn.eval_unchecked(x, y);
            state.icnn.backward_accumulate(x, y, scale, &mut grad_f);
            let tx = state.transport.forward(x, y_ind, cache);
            let dot: f64 = x.iter().zip(tx).map(|(a, b)| a * b).sum();
            objective += dot - state.icnn.eval_unchecked(tx, y_ind);
            state.icnn.backward_accumulate(tx, y_ind, -scale, &mut grad_f);
        }
        objective *= scale;
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration,
                value: objective,
            });
        }
        trace.push(objective);
        state.adam_icnn.step(state.icnn.as_mut_slice(), &grad_f, Direction::Descent)?;
        for w in state.icnn.w_mut() {
            *w = w.max(0.0);
        }
    }
    Ok(TrainReport::from_trace(trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn schedule_halves_down_to_floor() {
        let s = TrainSchedule::default();
        assert_eq!(iteration_schedule(1, &s), 1024);
        assert_eq!(iteration_schedule(2, &s), 512);
        assert_eq!(iteration_schedule(5, &s), 64);
        assert_eq!(iteration_schedule(10, &s), 64);
        assert_eq!(iteration_schedule(500, &s), 64);
    }

    #[test]
    fn schedule_validation() {
        let mut s = TrainSchedule::default();
        assert!(s.validate().is_ok());
        s.floor_iterations = 2048;
        assert!(s.validate().is_err());
        s = TrainSchedule { batch_size: 0, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn objective_with_zero_potential_and_identity_map() {
        // f = 0, T(x, y) = x: objective is the mean of |x|^2 over the independent batch.
        let f = IcnnParams::zeros(2, 1, 3);
        let t = TransportNetParams::from_affine(2, 1, 4, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        let xs = [[1.0, 2.0], [-1.0, 0.5]];
        let ys = [[3.0], [-2.0]];
        let joint: Vec<(&[f64], &[f64])> = vec![(&xs[0], &ys[0])];
        let indep: Vec<(&[f64], &[f64])> = vec![(&xs[0], &ys[1]), (&xs[1], &ys[0])];
        let v = minimax_objective(&f, &t, &joint, &indep).unwrap();
        assert!((v - (5.0 + 1.25) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn objective_with_half_square_potential() {
        // f = |x|^2 / 2 as (x)_+^2/2 + (-x)_+^2/2, T = x: objective = E|X|^2.
        let f = IcnnParams::from_flat(1, 1, 2, vec![0.5, 0.5, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let t = TransportNetParams::from_affine(1, 1, 2, 1, &[1.0, 0.0], &[0.0]).unwrap();
        let xs = [[1.5], [-0.5], [2.0]];
        let ys = [[0.3], [0.1], [-0.7]];
        let pairs: Vec<(&[f64], &[f64])> = xs.iter().zip(&ys).map(|(x, y)| (&x[..], &y[..])).collect();
        let v = minimax_objective(&f, &t, &pairs, &pairs).unwrap();
        let expected = (2.25 + 0.25 + 4.0) / 3.0;
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn objective_rejects_bad_batches() {
        let f = IcnnParams::zeros(1, 1, 2);
        let t = TransportNetParams::zeros(1, 1, 2, 1);
        let x = [1.0];
        let y2 = [1.0, 2.0];
        assert!(minimax_objective(&f, &t, &[], &[(&x, &x)]).is_err());
        assert!(minimax_objective(&f, &t, &[(&x, &y2)], &[(&x, &x)]).is_err());
    }

    #[test]
    fn training_keeps_potential_convex_and_is_deterministic() {
        let mut rng = rng_from_seed(1);
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.1).collect();
        let pool = TrainingPool::new(1, 1, xs, ys).unwrap();
        let schedule = TrainSchedule::default();
        let mut a = OtpfState::new(1, 1, NetworkShape::default(), 1e-2, &mut rng);
        a.budget = 40;
        let mut b = a.clone();
        let ra = train_bayes_map(&pool, &schedule, &mut a, &mut rng_from_seed(9)).unwrap();
        let rb = train_bayes_map(&pool, &schedule, &mut b, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.trace.len(), 40);
        assert!(a.icnn.w().iter().all(|w| *w >= 0.0));
        assert_eq!(a.adam_transport.steps_taken(), 400);
        assert_eq!(a.adam_icnn.steps_taken(), 40);
    }

    #[test]
    fn pool_standardization() {
        let xs: Vec<f64> = (0..300).map(|i| 5.0 + 3.0 * (i as f64 * 0.71).sin()).collect();
        let ys: Vec<f64> = (0..300).map(|i| -40.0 + 20.0 * (i as f64 * 1.3).cos()).collect();
        let pool = TrainingPool::new(2, 2, xs.clone(), ys.clone()).unwrap();
        for d in 0..2 {
            let col: Vec<f64> = (0..pool.len()).map(|i| pool.y(i)[d]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        // One common state scale: mean coordinate variance 1.
        let var: f64 = (0..pool.len()).map(|i| pool.x(i).iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / pool.len() as f64 / 2.0;
        assert!((var - 1.0).abs() < 1e-12);
        let x = [1.5, -2.0];
        let back = pool.unstandardize_state(&pool.standardize_state(&x));
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
        assert_eq!(pool.standardize_obs(&ys[..2]), pool.y(0).to_vec());

        // A map that is the identity in standardized coordinates is the identity.
        let t = TransportNetParams::from_affine(2, 2, 4, 1, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[0.0, 0.0]).unwrap();
        let out = pool.map_point(&t, &x, &[3.0, 4.0]).unwrap();
        assert!((out[0] - x[0]).abs() < 1e-12 && (out[1] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn constant_observations_keep_unit_scale() {
        let pool = TrainingPool::new(1, 1, vec![1.0, 2.0, 3.0], vec![7.0; 3]).unwrap();
        assert_eq!(pool.obs_scale(), &[1.0]);
        assert_eq!(pool.y(1), &[0.0]);
    }

    #[test]
    fn pool_smaller_than_batch_is_rejected() {
        let pool = TrainingPool::new(1, 1, vec![0.0; 10], vec![0.0; 10]).unwrap();
        let mut state = OtpfState::new(1, 1, NetworkShape::default(), 1e-2, &mut rng_from_seed(0));
        state.budget = 1;
        assert!(train_bayes_map(&pool, &TrainSchedule::default(), &mut state, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn report_statistics() {
        let r = TrainReport::from_trace((0..20).map(|i| 20.0 - i as f64).collect());
        assert_eq!(r.iterations, 20);
        assert_eq!(r.final_objective, 1.0);
        assert_eq!(r.tail_mean, 1.5);
        assert_eq!(r.gap_proxy, 2.0);
        assert_eq!(r.clone().with_oracle(1.0).gap_proxy, 0.5);
    }
}
