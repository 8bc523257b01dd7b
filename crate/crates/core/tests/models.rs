//! Distributional properties of planted models and the subspace metric.

use mim_core::models::{catalog, sample, PlantedModel};
use mim_core::{subspace_distance, Streams, Subspace};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

const N: usize = 100_000;

#[test]
fn latent_coordinates_have_unit_second_moment() {
    for link in catalog() {
        let model = PlantedModel::new(10, link.clone(), 21).unwrap();
        let data = sample(&model, N, 22).unwrap();
        let r = model.r();
        let mut sq = vec![0.0; r];
        let mut fourth = vec![0.0; r];
        for i in 0..N {
            for (j, z) in model.latent(data.x_row(i)).into_iter().enumerate() {
                sq[j] += z * z;
                fourth[j] += z.powi(4);
            }
        }
        for j in 0..r {
            let m = sq[j] / N as f64;
            let se = ((fourth[j] / N as f64 - m * m) / N as f64).sqrt();
            assert!((m - 1.0).abs() <= 5.0 * se, "{}: E z_{j}² = {m} ± {se}", link.name());
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut stat) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        stat = stat.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    stat
}

#[test]
fn label_law_does_not_depend_on_the_frame() {
    // 1% critical value of the two-sample KS statistic with equal sizes.
    let critical = 1.628 * (2.0 / N as f64).sqrt();
    for link in catalog() {
        let m1 = PlantedModel::new(12, link.clone(), 1).unwrap();
        let m2 = PlantedModel::new(12, link.clone(), 2).unwrap();
        assert!(subspace_distance(&m1.index_space(), &m2.index_space()).unwrap() > 0.5);
        let y1 = sample(&m1, N, 101).unwrap().y().to_vec();
        let y2 = sample(&m2, N, 202).unwrap().y().to_vec();
        let ks = ks_statistic(&y1, &y2);
        assert!(ks < critical, "{}: KS {ks} ≥ {critical}", link.name());
    }
}

fn random_subspace(rng: &mut impl Rng, d: usize, s: usize) -> Subspace {
    let m = DMatrix::from_fn(d, s, |_, _| rng.sample(StandardNormal));
    Subspace::span(&m)
}

#[test]
fn subspace_distance_is_a_pseudometric() {
    let mut rng = Streams::new(4).rng("test-metric", 0);
    for t in 0..100 {
        let d = 6;
        let dims = [1 + t % 3, 1 + (t / 3) % 3, 1 + (t / 9) % 3];
        let a = random_subspace(&mut rng, d, dims[0]);
        let b = random_subspace(&mut rng, d, dims[1]);
        let c = random_subspace(&mut rng, d, dims[2]);
        let ab = subspace_distance(&a, &b).unwrap();
        let ba = subspace_distance(&b, &a).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
        let bc = subspace_distance(&b, &c).unwrap();
        let ac = subspace_distance(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-10, "triangle fails: {ac} > {ab} + {bc}");
        assert!(subspace_distance(&a, &a).unwrap() < 1e-12);
        assert!((0.0..=1.0).contains(&ab));
    }
}

#[test]
fn sampling_ignores_thread_count() {
    let model = PlantedModel::new(9, mim_core::models::LinkSpec::staircase(), 3).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| sample(&model, 10_000, 8).unwrap());
    let b = three.install(|| sample(&model, 10_000, 8).unwrap());
    assert_eq!(a.x(), b.x());
    assert_eq!(a.y(), b.y());
}
