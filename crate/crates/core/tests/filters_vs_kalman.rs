use otpf::filters::{enkf_step, sir_step};
use otpf::oracles::{kalman_step, GaussianBelief};
use otpf::rng::rng_from_seed;
use otpf::{Ensemble, ModelSpec, ObsKind};

fn moments(e: &Ensemble) -> (f64, f64) {
    let xs = e.coordinate(0);
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v)
}

fn kalman(prior_mean: f64, prior_var: f64, y: f64, spec: &ModelSpec) -> (f64, f64) {
    // Scalar recursion written out independently of the oracle module.
    let a = 1.0 - spec.alpha;
    let p_pred = a * a * prior_var + spec.process_variance();
    let k = p_pred / (p_pred + spec.obs_variance());
    (a * prior_mean + k * (y - a * prior_mean), (1.0 - k) * p_pred)
}

#[test]
fn one_step_against_kalman() {
    let spec = ModelSpec::benchmark(1, ObsKind::Linear);
    let n = 10_000;
    for (seed, y) in [(1u64, 1.2), (2, -0.4), (3, 2.5)] {
        let mut rng = rng_from_seed(seed);
        let prior = Ensemble::gaussian(&[0.5], 1.0, n, &mut rng);
        let (pm, pv) = moments(&prior);
        let (km, kv) = kalman(pm, pv, y, &spec);
        let oracle = kalman_step(
            &GaussianBelief::new(nalgebra::DVector::from_element(1, pm), nalgebra::DMatrix::from_element(1, 1, pv)).unwrap(),
            &[y],
            &spec,
        )
        .unwrap();
        assert!((oracle.mean[0] - km).abs() < 1e-12 && (oracle.covariance[(0, 0)] - kv).abs() < 1e-12);

        let se = (kv / n as f64).sqrt();
        // Relative standard error of a sample variance is about sqrt(2 / n).
        let var_se = kv * (2.0 / n as f64).sqrt();
        let enkf = enkf_step(&prior, &[y], &spec, &mut rng).unwrap();
        let (m, v) = moments(&enkf);
        assert!((m - km).abs() < 3.0 * se, "enkf mean {m} vs {km}");
        assert!((v - kv).abs() < 3.0 * var_se, "enkf var {v} vs {kv}");
        let sir = sir_step(&prior, &[y], &spec, &mut rng).unwrap();
        let (m, v) = moments(&sir.ensemble);
        // Resampling adds noise; the effective size bounds the precision.
        let se = (kv / sir.ess).sqrt();
        assert!((m - km).abs() < 3.0 * se, "sir mean {m} vs {km}");
        assert!((v - kv).abs() < 3.0 * kv * (2.0 / sir.ess).sqrt(), "sir var {v} vs {kv}");
    }
}

#[test]
fn two_dimensional_enkf_tracks_kalman() {
    let spec = ModelSpec::benchmark(2, ObsKind::Linear);
    let n = 10_000;
    let mut rng = rng_from_seed(8);
    let mut ens = Ensemble::gaussian(&[0.0, 0.0], 1.0, n, &mut rng);
    let mut b = GaussianBelief::standard(2);
    for y in [[0.3, -1.0], [1.1, 0.2], [0.0, 0.7], [-0.5, -0.5]] {
        ens = enkf_step(&ens, &y, &spec, &mut rng).unwrap();
        b = kalman_step(&b, &y, &spec).unwrap();
        let m = ens.mean();
        for i in 0..2 {
            // Deviation accumulated over steps; 4 standard errors of the current step.
            assert!((m[i] - b.mean[i]).abs() < 4.0 * (b.covariance[(i, i)] / n as f64).sqrt());
        }
    }
}
