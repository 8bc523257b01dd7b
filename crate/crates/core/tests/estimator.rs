//! Statistical properties of the U-statistic estimator.

use mim_core::estimator::{
    build_ustat, expected_ustat_reference, iterate_leaps, KernelSpec, LabelMap, LeapSchedule, UStatOptions,
};
use mim_core::linalg::op_norm;
use mim_core::models::{sample, Dataset, LinkSpec, PlantedModel};
use mim_core::{subspace_distance, Streams, Subspace};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Order-`k` single-index sign model: `E[y h_k(z)]` for `y = sign(z)`.
fn sign_hermite_coefficient(k: usize) -> f64 {
    let a = (2.0 / std::f64::consts::PI).sqrt();
    match k {
        1 => a,
        3 => -a / 6f64.sqrt(),
        _ => unreachable!(),
    }
}

#[test]
fn expectation_is_preserved() {
    // With the identity label embedding, E U_n = E[yφ] E[yφ]ᵀ = c_k² w wᵀ.
    let d = 4;
    let reps = 200;
    let n = 500;
    let kernel = KernelSpec::ExplicitEmbedding {
        maps: vec![LabelMap::Coordinate { index: 0 }],
    };
    let model = PlantedModel::new(d, LinkSpec::parity(1, 0.0), 7).unwrap();
    let w = model.w_star().row(0).transpose();
    for k in [1usize, 3] {
        let mut sum = DMatrix::<f64>::zeros(d, d);
        let mut sq = DMatrix::<f64>::zeros(d, d);
        for rep in 0..reps {
            let data = sample(&model, n, 1000 + rep).unwrap();
            let u = build_ustat(&data, k, &kernel, &UStatOptions::default()).unwrap();
            sum += &u.matrix;
            sq += u.matrix.component_mul(&u.matrix);
        }
        let mean = &sum / reps as f64;
        let c2 = sign_hermite_coefficient(k).powi(2);
        let expected = &w * w.transpose() * c2;
        for i in 0..d {
            for j in 0..d {
                let var = (sq[(i, j)] / reps as f64 - mean[(i, j)].powi(2)).max(0.0);
                let se = (var / reps as f64).sqrt();
                let diff = (mean[(i, j)] - expected[(i, j)]).abs();
                assert!(diff <= 5.0 * se, "k={k} ({i},{j}): {} vs {} (se {se})", mean[(i, j)], expected[(i, j)]);
            }
        }
    }
}

#[test]
fn deviation_shrinks_like_inverse_root_n() {
    // Parity r=2, RBF σ=1 on y ∈ {±1}: E U = (1 − e^{−2}) / π² · Π_W.
    let d = 32;
    let model = PlantedModel::new(d, LinkSpec::parity(2, 0.0), 3).unwrap();
    let reference = model.index_space().projector() * ((1.0 - (-2f64).exp()) / std::f64::consts::PI.powi(2));
    let kernel: KernelSpec = "rbf:sigma=1".parse().unwrap();
    let sizes = [2_000usize, 8_000, 32_000];
    let mut mean_dev = [0.0; 3];
    for seed in 0..10u64 {
        let data = sample(&model, sizes[2], 500 + seed).unwrap();
        for (slot, &n) in sizes.iter().enumerate() {
            let opts = UStatOptions {
                seed,
                ..UStatOptions::default()
            };
            let u = build_ustat(&data.slice(0..n), 2, &kernel, &opts).unwrap();
            mean_dev[slot] += op_norm(&(&u.matrix - &reference)) / 10.0;
        }
    }
    eprintln!("mean deviations {mean_dev:?}");
    assert!(mean_dev[0] > mean_dev[1] && mean_dev[1] > mean_dev[2]);
    // Geometric mean of the two per-quadrupling ratios.
    let ratio = (mean_dev[2] / mean_dev[0]).sqrt();
    assert!(ratio <= 0.5, "quadrupling n shrinks the deviation by {ratio} on average: {mean_dev:?}");
}

/// `span{w}` turned by angle `asin(δ)` towards a unit vector orthogonal to the index space.
fn tilted(w: &DMatrix<f64>, away: &DMatrix<f64>, delta: f64) -> Subspace {
    let cos = (1.0 - delta * delta).sqrt();
    Subspace::span(&(w * cos + away * delta))
}

#[test]
fn reference_matrix_is_lipschitz_in_the_conditioning_subspace() {
    let d = 8;
    let model = PlantedModel::new(d, LinkSpec::staircase(), 12).unwrap();
    let w1 = DMatrix::from_column_slice(d, 1, model.w_star().row(0).transpose().as_slice());
    let mut rng = Streams::new(2).rng("test-tilt", 0);
    let g = DMatrix::from_fn(d, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let away = (DMatrix::identity(d, d) - model.index_space().projector()) * g;
    let away = &away / away.norm();
    let kernel = KernelSpec::default();
    let opts = UStatOptions::default();
    let reference = |s: &Subspace| {
        expected_ustat_reference(&model, 1, &kernel, Some(s), 200_000, 4, 77, &opts)
            .unwrap()
            .matrix
    };
    let base = reference(&tilted(&w1, &away, 0.0));
    let change = |delta: f64| {
        let s = tilted(&w1, &away, delta);
        assert!((subspace_distance(&s, &Subspace::span(&w1)).unwrap() - delta).abs() < 1e-9);
        op_norm(&(reference(&s) - &base))
    };
    let c = change(0.05) / 0.05;
    let at_tenth = change(0.1);
    eprintln!("C = {c}, change at 0.1 = {at_tenth}");
    assert!(c > 0.0);
    assert!(at_tenth <= 2.0 * c * 0.1, "change {at_tenth} exceeds 2·C·δ = {}", 2.0 * c * 0.1);
}

fn rotate(data: &Dataset, q: &DMatrix<f64>) -> Dataset {
    let d = data.d();
    let mut x = Vec::with_capacity(data.n() * d);
    for i in 0..data.n() {
        let row = nalgebra::DVector::from_column_slice(data.x_row(i));
        x.extend((q * row).iter());
    }
    Dataset::new(x, data.y().to_vec(), d, data.seed(), data.model_tag().to_string()).unwrap()
}

#[test]
fn recovery_is_rotation_equivariant() {
    let d = 10;
    let mut rng = Streams::new(6).rng("test-rotation", 0);
    let q = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
    let cases = [
        (LinkSpec::parity(2, 0.0), LeapSchedule::uniform(&[(2, 2)]), 4000),
        (LinkSpec::staircase(), LeapSchedule::uniform(&[(1, 1), (1, 1), (1, 1)]), 6000),
        (LinkSpec::norm_squared(2), LeapSchedule::uniform(&[(2, 2)]), 3000),
    ];
    for (link, schedule, n) in cases {
        let model = PlantedModel::new(d, link.clone(), 1).unwrap();
        let data = sample(&model, n, 2).unwrap();
        let opts = UStatOptions {
            seed: 5,
            ..UStatOptions::default()
        };
        let kernel = KernelSpec::default();
        let a = iterate_leaps(&data, &schedule, &kernel, &opts).unwrap();
        let b = iterate_leaps(&rotate(&data, &q), &schedule, &kernel, &opts).unwrap();
        let moved = a.subspace.mapped(&q);
        let dist = subspace_distance(&moved, &b.subspace).unwrap();
        assert!(dist < 1e-6, "{}: {dist}", link.name());
    }
}
