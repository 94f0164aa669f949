//! Throughput of the online estimation path and its training stages.

use criterion::{criterion_group, criterion_main, Criterion};
use extorq::harness::{optimize_excitation, train_residual_models, ExperimentConfig};
use extorq::observer::{AdaptationMode, Observer, PerJointModel};
use extorq::{em_fit, kmp_predict, simulate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

struct Setup {
    config: ExperimentConfig,
    model: extorq::ManipulatorModel,
    kmp: PerJointModel<extorq::KmpModel>,
    static_var: DVector<f64>,
    eval: extorq::SampledTrajectory,
}

fn setup() -> Setup {
    let mut config = ExperimentConfig::planar2();
    config.train_duration = 10.0;
    config.eval_duration = 4.0;
    config.excitation.ga.population = 16;
    config.excitation.ga.generations = 10;
    let model = config.build_model();
    let excitation = optimize_excitation(&config, config.seed).unwrap();
    let train = simulate(
        &model,
        &config.friction,
        |t| excitation.eval(t),
        |_| DVector::zeros(2),
        config.t_s,
        config.train_duration,
        config.seed,
    )
    .unwrap();
    let trained = train_residual_models(&model, &train, &config).unwrap();
    let eval = simulate(
        &model,
        &config.friction,
        |t| excitation.eval(t),
        |_| DVector::zeros(2),
        config.t_s,
        config.eval_duration,
        config.seed + 1,
    )
    .unwrap();
    Setup {
        static_var: trained.mean_model_var.clone(),
        kmp: PerJointModel(trained.kmp),
        config,
        model,
        eval,
    }
}

fn bench_online_step(c: &mut Criterion) {
    let s = setup();
    c.bench_function("observer_step_variance_aware", |b| {
        let filter = s.config.filter.build(2, s.config.t_s, &s.static_var);
        let mut observer =
            Observer::new(&s.model, &s.kmp, filter, AdaptationMode::VarianceAware).unwrap();
        let mut k = 0;
        b.iter(|| {
            let out = observer
                .step(&s.eval.q[k], &s.eval.dq[k], &s.eval.tau_m[k])
                .unwrap();
            k = (k + 1) % s.eval.len();
            black_box(out.estimate[0])
        });
    });
}

fn bench_kernel_predict(c: &mut Criterion) {
    let s = setup();
    let joint = &s.kmp.0[0];
    c.bench_function("kmp_predict_n20", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        b.iter(|| {
            let q = DVector::from_element(1, rng.random_range(-2.5..2.5));
            black_box(kmp_predict(joint, &q).mean[0])
        });
    });
}

fn bench_em_fit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = DMatrix::from_fn(2000, 2, |_, c| {
        if c == 0 {
            rng.random_range(-2.0..2.0)
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    c.bench_function("em_fit_2000x2_k8", |b| {
        b.iter(|| black_box(em_fit(&data, 8, 7).unwrap().fit.iterations));
    });
}

fn bench_simulate(c: &mut Criterion) {
    let config = ExperimentConfig::planar2();
    let model = config.build_model();
    c.bench_function("simulate_one_second", |b| {
        b.iter(|| {
            let traj = simulate(
                &model,
                &config.friction,
                |t| {
                    (
                        DVector::from_column_slice(&[0.3 * (1.2 * t).sin(), 1.5]),
                        DVector::from_column_slice(&[0.36 * (1.2 * t).cos(), 0.0]),
                        DVector::from_column_slice(&[-0.432 * (1.2 * t).sin(), 0.0]),
                    )
                },
                |_| DVector::zeros(2),
                config.t_s,
                1.0,
                9,
            )
            .unwrap();
            black_box(traj.len())
        });
    });
}

criterion_group!(
    benches,
    bench_online_step,
    bench_kernel_predict,
    bench_em_fit,
    bench_simulate
);
criterion_main!(benches);
