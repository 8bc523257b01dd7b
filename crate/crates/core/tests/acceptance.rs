//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! to stderr (uncaptured) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use mim_core::estimator::{
    build_ustat, recover_single_leap, KernelSpec, LeapSchedule, PathChoice, UStatOptions,
};
use mim_core::harness::{run_recovery, threshold_sweep, EstimatorConfig, ExperimentConfig, RunSpec};
use mim_core::hermite::{hermite_tensor, HermiteBuilder};
use mim_core::leap::{
    chi_sq_check, info_leap_decomposition, leap_decomposition, Conditioning, ConditionedSample, LeapBudget,
    LeapConfig, McSample,
};
use mim_core::linalg::op_norm;
use mim_core::models::{catalog, plant_subspace, sample, Activation, Dataset, LinkSpec, PlantedModel};
use mim_core::{subspace_distance, MemoryBudget, Streams, Subspace};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// One named sub-check of a criterion.
struct Check {
    what: String,
    ok: bool,
}

fn check(what: impl Into<String>, ok: bool) -> Check {
    Check { what: what.into(), ok }
}

fn within(what: &str, elapsed: Duration, limit_s: u64) -> Check {
    check(format!("{what} took {:.1}s (limit {limit_s}s)", elapsed.as_secs_f64()), elapsed.as_secs() <= limit_s)
}

fn verdict(number: u32, title: &str, checks: Vec<Check>) {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.ok).map(|c| c.what.as_str()).collect();
    let line = if failed.is_empty() {
        format!("criterion {number}: PASS {title}")
    } else {
        format!("criterion {number}: FAIL {title} [{}]", failed.join("; "))
    };
    let mut err = std::io::stderr().lock();
    writeln!(err, "{line}").unwrap();
    for c in &checks {
        writeln!(err, "    {} {}", if c.ok { "ok  " } else { "FAIL" }, c.what).unwrap();
    }
    drop(err);
    assert!(failed.is_empty(), "{line}");
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn schedule_spec(link: &str, r: usize, d: usize, n: usize, seed: u64, steps: &[(usize, usize)]) -> RunSpec {
    RunSpec {
        link: link.into(),
        r,
        noise: None,
        k_star: None,
        d,
        n,
        seed,
        estimator: EstimatorConfig {
            schedule: Some(LeapSchedule::uniform(steps)),
            adaptive: None,
            kernel: "rbf".into(),
            path: PathChoice::Auto,
            n_features: 2048,
        },
    }
}

#[test]
fn criterion_01_leap_exponent_fixtures() {
    let start = Instant::now();
    let cfg = LeapConfig::default();
    let budget = LeapBudget::default();
    let mut checks = Vec::new();
    for r in 1..=3 {
        let link = LinkSpec::parity(r, 0.0);
        let g = leap_decomposition(&link, &cfg, &budget).unwrap();
        let i = info_leap_decomposition(&link, &cfg, &budget).unwrap();
        checks.push(check(format!("parity r={r}: k* = {} (want {r})", g.k_star), g.k_star == r));
        checks.push(check(format!("parity r={r}: l* = {} (want {r})", i.k_star), i.k_star == r));
    }
    let stair = leap_decomposition(&LinkSpec::staircase(), &cfg, &budget).unwrap();
    checks.push(check(format!("staircase: k* = {} (want 1)", stair.k_star), stair.k_star == 1));
    checks.push(check(
        format!("staircase: leaps {:?}, dims {:?} (want three unit leaps)", stair.leaps, stair.steps.iter().map(|s| s.added_dim).collect::<Vec<_>>()),
        stair.leaps == [1, 1, 1] && stair.steps.iter().all(|s| s.added_dim == 1),
    ));
    let norm = leap_decomposition(&LinkSpec::norm_squared(2), &cfg, &budget).unwrap();
    checks.push(check(
        format!("‖z‖²: k* = {}, leaps {:?} (want a single leap of order 2)", norm.k_star, norm.leaps),
        norm.k_star == 2 && norm.leaps == [2],
    ));
    let half = leap_decomposition(&LinkSpec::halfspaces(), &cfg, &budget).unwrap();
    checks.push(check(format!("two halfspaces: k* = {} (want ≤ 2)", half.k_star), half.k_star <= 2));
    let relu = leap_decomposition(&LinkSpec::relu_net(), &cfg, &budget).unwrap();
    checks.push(check(format!("ReLU net with biases: k* = {} (want ≤ 2)", relu.k_star), relu.k_star <= 2));
    let he3 = leap_decomposition(&LinkSpec::shallow_orthogonal(2, Activation::He(3)), &cfg, &budget).unwrap();
    checks.push(check(
        format!("shallow He3 net: k* = {}, leaps {:?} (want k* = 3)", he3.k_star, he3.leaps),
        he3.k_star == 3,
    ));
    checks.push(within("criterion", start.elapsed(), 300));
    verdict(1, "leap exponents of the fixture links", checks);
}

#[test]
fn criterion_02_parity_second_order_moment_norm() {
    let start = Instant::now();
    let budget = LeapBudget::default();
    let sample = McSample::draw(&LinkSpec::parity(2, 0.0), &budget).unwrap();
    let cond = ConditionedSample::new(&sample, &Subspace::empty(2), Conditioning::Generative, &budget).unwrap();
    let m = cond.moment(2, &MemoryBudget::default()).unwrap();
    let target = (2.0 / std::f64::consts::PI).powi(2);
    verdict(
        2,
        "λ₂² of parity r=2",
        vec![
            check(
                format!("λ̂₂² = {:.5} ± {:.5}, oracle {target:.5}", m.lambda_sq, m.lambda_sq_se),
                (m.lambda_sq - target).abs() <= 0.02,
            ),
            within("criterion", start.elapsed(), 60),
        ],
    );
}

#[test]
fn criterion_03_chi_square_identity() {
    let start = Instant::now();
    let budget = LeapBudget::default();
    let parity = chi_sq_check(&LinkSpec::parity(2, 0.0), &Subspace::empty(2), 6, &budget).unwrap();
    let noise = LinkSpec::Noise { r: 2, discrete: true };
    let factorized = chi_sq_check(&noise, &Subspace::empty(2), 6, &budget).unwrap();
    verdict(
        3,
        "χ² against partial sums of λ_k²",
        vec![
            check(format!("parity r=2: χ² = {:.4} (want 1)", parity.chi_sq), (parity.chi_sq - 1.0).abs() <= 0.01),
            check(
                format!("parity r=2: Σ_{{k≤6}} λ̂_k² = {:.4} (want [0.9, 1.05])", parity.partial_sum),
                (0.9..=1.05).contains(&parity.partial_sum),
            ),
            check(format!("independent labels: χ² = {:.4}", factorized.chi_sq), factorized.chi_sq <= 0.01),
            check(
                format!("independent labels: Σ λ̂_k² = {:.4}", factorized.partial_sum),
                factorized.partial_sum <= 0.01,
            ),
            within("criterion", start.elapsed(), 120),
        ],
    );
}

#[test]
fn criterion_04_parity_moment_tensor() {
    let start = Instant::now();
    let (d, n) = (8, 1_000_000);
    let model = PlantedModel::new(d, LinkSpec::parity(2, 0.0), 21).unwrap();
    let data = sample(&model, n, 22).unwrap();
    let mut builder = HermiteBuilder::new(2, d, &MemoryBudget::default()).unwrap();
    let mut sum = vec![0.0; d * d];
    let mut sq = vec![0.0; d * d];
    for i in 0..n {
        let y = data.y()[i];
        for (e, h) in builder.compute(data.x_row(i)).iter().enumerate() {
            sum[e] += y * h;
            sq[e] += (y * h).powi(2);
        }
    }
    let w = model.w_star();
    let scale = (2.0 / std::f64::consts::PI) * 2f64.sqrt();
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let e = a * d + b;
            let mean = sum[e] / n as f64;
            let se = ((sq[e] / n as f64 - mean * mean) / n as f64).sqrt();
            let sym = 0.5 * (w[(0, a)] * w[(1, b)] + w[(1, a)] * w[(0, b)]);
            worst = worst.max((mean - scale * sym).abs() / se);
        }
    }
    verdict(
        4,
        "E[Y h₂(X)] for parity r=2",
        vec![
            check(format!("largest entry deviation {worst:.2} SE (limit 5)"), worst <= 5.0),
            within("criterion", start.elapsed(), 120),
        ],
    );
}

/// Hermite tensor of order `k` of the `r`-dimensional projection `frame · x`.
fn projected_hermite(k: usize, frame: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let z = frame * DVector::from_column_slice(x);
    hermite_tensor(k, z.as_slice()).unwrap().entries().to_vec()
}

#[test]
fn criterion_05_hermite_correlation_identity() {
    let start = Instant::now();
    let (d, r, n) = (8, 2, 200_000);
    let mut worst: f64 = 0.0;
    let mut rng = Streams::new(31).rng("acceptance-correlation", 0);
    for pair in 0..10u64 {
        let w = plant_subspace(d, r, 100 + pair).unwrap();
        let w2 = plant_subspace(d, r, 200 + pair).unwrap();
        let overlap = op_norm(&(&w * w2.transpose()));
        let xs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, d)).collect();
        for k in 1..=3 {
            let len = r.pow(k as u32);
            let feats: Vec<(Vec<f64>, Vec<f64>)> =
                xs.iter().map(|x| (projected_hermite(k, &w, x), projected_hermite(k, &w2, x))).collect();
            let mut cross = DMatrix::<f64>::zeros(len, len);
            for (a, b) in &feats {
                cross += DVector::from_column_slice(a) * DVector::from_column_slice(b).transpose();
            }
            cross /= n as f64;
            let svd = cross.clone().svd(true, true);
            let top = svd.singular_values.imax();
            let estimate = svd.singular_values[top];
            let u = svd.u.as_ref().unwrap().column(top).into_owned();
            let v = svd.v_t.as_ref().unwrap().row(top).transpose();
            // Delta method: the norm moves with uᵀ C v.
            let proj: Vec<f64> = feats
                .iter()
                .map(|(a, b)| u.dot(&DVector::from_column_slice(a)) * v.dot(&DVector::from_column_slice(b)))
                .collect();
            let mean = proj.iter().sum::<f64>() / n as f64;
            let var = proj.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            worst = worst.max((estimate - overlap.powi(k as i32)).abs() / se);
        }
    }
    verdict(
        5,
        "Hermite correlation identity over 10 frame pairs",
        vec![
            check(format!("largest deviation {worst:.2} SE (limit 3)"), worst <= 3.0),
            within("criterion", start.elapsed(), 300),
        ],
    );
}

#[test]
fn criterion_06_exact_and_feature_paths_agree() {
    let start = Instant::now();
    let links = catalog();
    let mut rng = Streams::new(41).rng("acceptance-paths", 0);
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    for instance in 0..20u64 {
        let link = links[instance as usize % links.len()].clone();
        let k = 1 + (instance as usize % 3);
        let d = rng.random_range(link.r().max(4)..=if k == 3 { 8 } else { 16 });
        let n = rng.random_range(500..=2000);
        let model = PlantedModel::new(d, link.clone(), instance).unwrap();
        let data = sample(&model, n, 1000 + instance).unwrap();
        let kernel = KernelSpec::default();
        let base = UStatOptions { seed: instance, allow_label_gram: false, ..UStatOptions::default() };
        let exact = build_ustat(&data, k, &kernel, &UStatOptions { path: PathChoice::ExactPairwise, ..base }).unwrap();
        let feat = build_ustat(&data, k, &kernel, &UStatOptions { path: PathChoice::FeatureExpansion, ..base }).unwrap();
        let rel = op_norm(&(&exact.matrix - &feat.matrix)) / op_norm(&exact.matrix);
        if rel > worst {
            worst = rel;
            worst_case = format!("{} d={d} n={n} k={k} via {}", link.name(), feat.path.tag());
        }
    }
    verdict(
        6,
        "exact pairwise against random features",
        vec![
            check(format!("largest relative discrepancy {:.2}% ({worst_case})", 100.0 * worst), worst <= 0.05),
            within("criterion", start.elapsed(), 300),
        ],
    );
}

#[test]
fn criterion_07_single_leap_recovery() {
    let start = Instant::now();
    let errors: Vec<f64> = (1..=5)
        .map(|seed| run_recovery(&schedule_spec("parity", 2, 32, 20_000, seed, &[(2, 2)])).unwrap().error.unwrap())
        .collect();
    let med = median(errors.clone());
    let model = PlantedModel::new(32, LinkSpec::parity(2, 0.0), 1).unwrap();
    let data = sample(&model, 20_000, 1).unwrap();
    let mut y = data.y().to_vec();
    y.shuffle(&mut Streams::new(1).rng("acceptance-shuffle", 0));
    let shuffled = Dataset::new(data.x().to_vec(), y, 32, 1, "shuffled".into()).unwrap();
    let control = recover_single_leap(&shuffled, 2, 2, &KernelSpec::default(), &UStatOptions::default()).unwrap();
    let control_error = subspace_distance(&control.subspace, &model.index_space()).unwrap();
    verdict(
        7,
        "single-leap recovery of parity r=2",
        vec![
            check(format!("median error {med:.4} over {errors:.4?} (limit 0.15)"), med <= 0.15),
            check(format!("shuffled-label error {control_error:.4} (want ≥ 0.9)"), control_error >= 0.9),
            within("criterion", start.elapsed(), 180),
        ],
    );
}

#[test]
fn criterion_08_sequential_recovery() {
    let start = Instant::now();
    let errors: Vec<f64> = (1..=5)
        .map(|seed| {
            run_recovery(&schedule_spec("staircase", 3, 32, 60_000, seed, &[(1, 1), (1, 1), (1, 1)]))
                .unwrap()
                .error
                .unwrap()
        })
        .collect();
    let med = median(errors.clone());
    verdict(
        8,
        "sequential recovery of the staircase",
        vec![
            check(format!("median error {med:.4} over {errors:.4?} (limit 0.2)"), med <= 0.2),
            within("criterion", start.elapsed(), 300),
        ],
    );
}

fn parity_sweep(r: usize, dims: &[usize], n_min: usize, n_max: usize) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "v": 1,
        "model": {"link": "parity", "r": r, "d": dims, "k_star": r},
        "estimator": {"schedule": {"steps": [{"k": r, "s": r}]}, "kernel": "rbf"},
        "grid": {"search": {"n_min": n_min, "n_max": n_max}},
        "target_error": 0.3,
        "seeds": [1, 2, 3, 4, 5]
    }))
    .unwrap()
}

#[test]
fn criterion_09_scaling_law() {
    let mut checks = Vec::new();
    for (r, dims, n_min, n_max, band) in [
        (2, vec![16, 32, 64, 128], 200, 64_000, 0.8..=1.2),
        (3, vec![16, 24, 32, 48], 2_000, 250_000, 1.2..=1.8),
    ] {
        let start = Instant::now();
        let table = threshold_sweep(&parity_sweep(r, &dims, n_min, n_max), &mut |_| Ok(())).unwrap();
        let thresholds: Vec<String> = table
            .rows
            .iter()
            .map(|row| format!("d={} n*={}", row.d, row.n_star.map_or("censored".into(), |n| n.to_string())))
            .collect();
        match &table.fit {
            Some(fit) => checks.push(check(
                format!(
                    "parity r={r}: slope {:.3} ± {:.3} (want {:?}); {}",
                    fit.slope,
                    fit.slope_se.unwrap_or(f64::NAN),
                    band,
                    thresholds.join(", ")
                ),
                band.contains(&fit.slope),
            )),
            None => checks.push(check(format!("parity r={r}: no slope fit; {}", thresholds.join(", ")), false)),
        }
        checks.push(within(&format!("parity r={r} sweep"), start.elapsed(), 900));
    }
    verdict(9, "threshold scaling slopes", checks);
}

#[test]
fn criterion_10_invariant_suite() {
    let start = Instant::now();
    let cfg = LeapConfig::default();
    let budget = LeapBudget::default();
    let mem = MemoryBudget::default();
    let mut checks = Vec::new();

    let mut rotation_failures = Vec::new();
    let mut order_failures = Vec::new();
    let mut bound_failures = Vec::new();
    for (i, link) in catalog().into_iter().enumerate() {
        let r = link.r();
        let g = leap_decomposition(&link, &cfg, &budget).unwrap();
        let info = info_leap_decomposition(&link, &cfg, &budget).unwrap();
        if g.k_star > info.k_star {
            order_failures.push(format!("{} ({} > {})", link.name(), g.k_star, info.k_star));
        }
        if r >= 2 {
            let q = plant_subspace(r, r, 60 + i as u64).unwrap();
            let rotation: Vec<Vec<f64>> = (0..r).map(|a| q.row(a).iter().copied().collect()).collect();
            let turned = leap_decomposition(&link.clone().rotated(rotation), &cfg, &budget).unwrap();
            let (mut a, mut b) = (g.leaps.clone(), turned.leaps.clone());
            a.sort_unstable();
            b.sort_unstable();
            if g.k_star != turned.k_star || a != b {
                rotation_failures.push(link.name());
            }
        }
        let sample = McSample::draw(&link, &budget).unwrap();
        let cond = ConditionedSample::new(&sample, &Subspace::empty(r), Conditioning::Generative, &budget).unwrap();
        for k in 1..=4 {
            let m = cond.moment(k, &mem).unwrap();
            if m.lambda_sq > binom(r + k - 1, k) + 3.0 * m.lambda_sq_se {
                bound_failures.push(format!("{} k={k}", link.name()));
            }
        }
    }
    checks.push(check(format!("k* rotation invariant (failures {rotation_failures:?})"), rotation_failures.is_empty()));
    checks.push(check(format!("k* ≤ l* on the catalog (failures {order_failures:?})"), order_failures.is_empty()));
    checks.push(check(format!("λ̂_k² ≤ binom(r+k−1, k) + 3 SE (failures {bound_failures:?})"), bound_failures.is_empty()));

    // Orthonormality of h_0..h_3 in d = 3.
    let (d, n) = (3, 200_000);
    let mut builders: Vec<HermiteBuilder> = (0..=3).map(|k| HermiteBuilder::new(k, d, &mem).unwrap()).collect();
    let mut rng = Streams::new(51).rng("acceptance-orthonormal", 0);
    let lens: Vec<usize> = (0..=3).map(|k| d.pow(k)).collect();
    let mut sum: Vec<Vec<f64>> = Vec::new();
    let mut sq: Vec<Vec<f64>> = Vec::new();
    for j in 0..=3 {
        for k in j..=3 {
            sum.push(vec![0.0; lens[j] * lens[k]]);
            sq.push(vec![0.0; lens[j] * lens[k]]);
        }
    }
    for _ in 0..n {
        let x = gaussian(&mut rng, d);
        let h: Vec<Vec<f64>> = builders.iter_mut().map(|b| b.compute(&x).to_vec()).collect();
        let mut slot = 0;
        for j in 0..=3 {
            for k in j..=3 {
                let mut e = 0;
                for a in &h[j] {
                    for b in &h[k] {
                        sum[slot][e] += a * b;
                        sq[slot][e] += (a * b).powi(2);
                        e += 1;
                    }
                }
                slot += 1;
            }
        }
    }
    let mut worst_sigma: f64 = 0.0;
    let mut slot = 0;
    for j in 0..=3usize {
        for k in j..=3usize {
            for e in 0..sum[slot].len() {
                let mean = sum[slot][e] / n as f64;
                let se = ((sq[slot][e] / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
                // Within one order, E[h_k ⊗ h_k] is the symmetrizer, whose (a, b) entry
                // is the fraction of permutations taking multi-index a to b.
                let expected = if j == k { symmetrizer_entry(k, d, e / lens[k], e % lens[k]) } else { 0.0 };
                if se > 0.0 {
                    worst_sigma = worst_sigma.max((mean - expected).abs() / se);
                } else if (mean - expected).abs() > 1e-9 {
                    worst_sigma = f64::INFINITY;
                }
            }
            slot += 1;
        }
    }
    checks.push(check(format!("Hermite second moments within {worst_sigma:.2} SE of the symmetrizer (limit 5)"), worst_sigma <= 5.0));

    // h_k(x) = (1/√k!) E_W[(x + iW)^{⊗k}].
    let mut worst_integral: f64 = 0.0;
    for (d, k) in [(2usize, 2usize), (3, 3)] {
        let x = gaussian(&mut rng, d);
        let h = hermite_tensor(k, &x).unwrap();
        let len = h.entries().len();
        let scale = 1.0 / (1..=k).map(|i| i as f64).product::<f64>().sqrt();
        let mut s = vec![0.0; len];
        let mut s2 = vec![0.0; len];
        for _ in 0..n {
            let w = gaussian(&mut rng, d);
            for (e, (acc, acc2)) in s.iter_mut().zip(s2.iter_mut()).enumerate() {
                let (mut re, mut im) = (1.0, 0.0);
                for a in multi_index(e, k, d) {
                    (re, im) = (re * x[a] - im * w[a], re * w[a] + im * x[a]);
                }
                *acc += re * scale;
                *acc2 += (re * scale).powi(2);
            }
        }
        for e in 0..len {
            let mean = s[e] / n as f64;
            let se = ((s2[e] / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
            worst_integral = worst_integral.max((mean - h.entries()[e]).abs() / (se + 1e-12));
        }
    }
    checks.push(check(format!("integral representation within {worst_integral:.2} SE (limit 5)"), worst_integral <= 5.0));

    // Determinism of seeded runs.
    let link = LinkSpec::staircase();
    let same_leaps = {
        let a = leap_decomposition(&link, &cfg, &budget).unwrap().report(&link);
        let b = leap_decomposition(&link, &cfg, &budget).unwrap().report(&link);
        serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap()
    };
    checks.push(check("leap decomposition reruns identically", same_leaps));
    let model = PlantedModel::new(12, LinkSpec::shallow_orthogonal(2, Activation::Tanh), 3).unwrap();
    let same_data = sample(&model, 1500, 4).unwrap() == sample(&model, 1500, 4).unwrap();
    checks.push(check("sampling reruns identically", same_data));
    let data = sample(&model, 1500, 4).unwrap();
    let opts = UStatOptions { seed: 9, allow_label_gram: false, ..UStatOptions::default() };
    let u1 = build_ustat(&data, 2, &KernelSpec::default(), &opts).unwrap();
    let u2 = build_ustat(&data, 2, &KernelSpec::default(), &opts).unwrap();
    checks.push(check("random-feature U-statistic reruns identically", u1.matrix == u2.matrix));
    let spec = schedule_spec("staircase", 3, 12, 6000, 2, &[(1, 1), (1, 1), (1, 1)]);
    let same_run = run_recovery(&spec).unwrap().same_outcome(&run_recovery(&spec).unwrap());
    checks.push(check("recovery run reruns identically", same_run));

    checks.push(within("criterion", start.elapsed(), 600));
    verdict(10, "invariant suite", checks);
}

/// Multi-index of linear position `e` in a `d`-dimensional order-`k` tensor, big-endian.
fn multi_index(mut e: usize, k: usize, d: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for slot in idx.iter_mut().rev() {
        *slot = e % d;
        e /= d;
    }
    idx
}

/// `(1/k!) Σ_π 1[b = π(a)]`: the entry of the symmetrizer on `(R^d)^{⊗k}`.
fn symmetrizer_entry(k: usize, d: usize, a: usize, b: usize) -> f64 {
    let mut ia = multi_index(a, k, d);
    let mut ib = multi_index(b, k, d);
    ia.sort_unstable();
    ib.sort_unstable();
    if ia != ib {
        return 0.0;
    }
    let idx = multi_index(a, k, d);
    let mut fixing = 1.0;
    for v in 0..d {
        let c = idx.iter().filter(|&&i| i == v).count();
        fixing *= (1..=c).map(|i| i as f64).product::<f64>();
    }
    let total: f64 = (1..=k).map(|i| i as f64).product();
    fixing / total
}
