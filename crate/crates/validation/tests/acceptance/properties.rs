//! Deterministic re-runs of the property suites against independent oracles.

use alice_core::eval::average_precision;
use alice_core::models::MlpObjective;
use alice_core::transfer::{LogisticObjective, TransferClassifier};
use alice_core::{fit_gaussians, AliceEstimator, ClassId, ErrorFunction, GaussianConfig, GaussianSet, LabelSpace, ProbabilityVector};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = (&'static str, Result<(), String>);

fn brute_ap(scores: &[f64], positives: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..scores.len() {
        if positives[i] {
            let above = (0..scores.len()).filter(|j| scores[*j] >= scores[i]).count();
            let hits = (0..scores.len()).filter(|j| positives[*j] && scores[*j] >= scores[i]).count();
            total += hits as f64 / above as f64;
            count += 1;
        }
    }
    total / count as f64
}

fn ranking(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(1..=200);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-30..30) as f64 / 3.0).collect();
    let mut positives: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    if !positives.iter().any(|p| *p) {
        let i = rng.random_range(0..n);
        positives[i] = true;
    }
    (scores, positives)
}

fn ap_brute_force() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..500 {
        let (s, p) = ranking(&mut rng);
        let got = average_precision(&s, &p).map_err(|e| e.to_string())?;
        let want = brute_ap(&s, &p);
        if (got - want).abs() > 1e-12 {
            return Err(format!("case {case}: {got} vs {want}"));
        }
    }
    Ok(())
}

fn ap_monotone_invariance() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let transforms: [fn(f64) -> f64; 3] = [|s| 3.0 * s - 7.0, |s| (s / 4.0).exp(), |s| s * s * s + s];
    for case in 0..500 {
        let (s, p) = ranking(&mut rng);
        let a = average_precision(&s, &p).map_err(|e| e.to_string())?;
        for f in transforms {
            let mapped: Vec<f64> = s.iter().map(|v| f(*v)).collect();
            let b = average_precision(&mapped, &p).map_err(|e| e.to_string())?;
            if (a - b).abs() > 1e-12 {
                return Err(format!("case {case}: {a} vs {b}"));
            }
        }
    }
    Ok(())
}

fn inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = Array2::<f64>::zeros((n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = a[[i, j]];
        }
        m[[i, n + i]] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|x, y| m[[*x, col]].abs().total_cmp(&m[[*y, col]].abs())).unwrap();
        for j in 0..2 * n {
            m.swap([col, j], [pivot, j]);
        }
        let p = m[[col, col]];
        for j in 0..2 * n {
            m[[col, j]] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[[r, col]];
                for j in 0..2 * n {
                    m[[r, j]] -= f * m[[col, j]];
                }
            }
        }
    }
    m.slice(ndarray::s![.., n..]).to_owned()
}

fn mahalanobis() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..20 {
        let d = 1 + trial % 6;
        let z = Array2::from_shape_fn((50, d), |_| rng.random_range(-1.0..1.0));
        let mix = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        let x = z.dot(&mix);
        let space = LabelSpace::range(0, 1, "c").unwrap();
        let set = fit_gaussians(x.view(), &[ClassId(0); 50], &space, &GaussianConfig::default()).map_err(|e| e.to_string())?;
        let g = set.get(ClassId(0)).unwrap();
        let inv = inverse(g.covariance());
        for _ in 0..10 {
            let q = Array1::from_shape_fn(d, |_| rng.random_range(-4.0..4.0));
            let diff = &q - g.mean();
            let want = diff.dot(&inv.dot(&diff)).sqrt();
            let got = g.mahalanobis(q.view()).map_err(|e| e.to_string())?;
            if (got - want).abs() > 1e-8 * want {
                return Err(format!("d = {d}: {got} vs {want}"));
            }
        }
    }
    Ok(())
}

fn finite_differences(value: &dyn Fn(&Array1<f64>) -> f64, grad: &Array1<f64>, theta: &Array1<f64>) -> Result<(), String> {
    for i in 0..theta.len() {
        let h = 1e-5 * (1.0 + theta[i].abs());
        let (mut up, mut dn) = (theta.clone(), theta.clone());
        up[i] += h;
        dn[i] -= h;
        let fd = (value(&up) - value(&dn)) / (2.0 * h);
        if (fd - grad[i]).abs() > 1e-5 * fd.abs().max(grad[i].abs()).max(1e-3) {
            return Err(format!("parameter {i}: analytic {} vs {fd}", grad[i]));
        }
    }
    Ok(())
}

fn gradients() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for reg in [0.0, 1e-3, 1.0] {
        let x = Array2::from_shape_fn((30, 4), |_| rng.random_range(-2.0..2.0));
        let targets: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let obj = LogisticObjective::new(x.view(), targets, 3, reg);
        let theta = Array1::from_shape_fn(obj.n_params(), |_| rng.random_range(-1.0..1.0));
        let (_, g) = obj.value_and_gradient(&theta);
        finite_differences(&|t| obj.value(t), &g, &theta).map_err(|e| format!("logistic λ = {reg}: {e}"))?;
    }
    for wd in [0.0, 1e-2] {
        let x = Array2::from_shape_fn((25, 3), |_| rng.random_range(-2.0..2.0));
        let targets: Vec<usize> = (0..25).map(|_| rng.random_range(0..4)).collect();
        let obj = MlpObjective::new(x.view(), targets, 6, 4, wd);
        let theta = Array1::from_shape_fn(obj.n_params(), |_| rng.random_range(-1.0..1.0));
        let (_, g) = obj.value_and_gradient(&theta);
        finite_differences(&|t| obj.value(t), &g, &theta).map_err(|e| format!("mlp decay {wd}: {e}"))?;
    }
    Ok(())
}

const K: usize = 3;

fn fixture() -> (GaussianSet, AliceEstimator) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centers = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
    let x = Array2::from_shape_fn((150, 2), |(i, j)| centers[i % K][j] + rng.random_range(-1.5..1.5));
    let labels: Vec<ClassId> = (0..150).map(|i| ClassId((i % K) as i64)).collect();
    let space = LabelSpace::range(0, K, "p").unwrap();
    let set = fit_gaussians(x.view(), &labels, &space, &GaussianConfig::default()).unwrap();
    let w = Array2::from_shape_fn((2, K), |_| rng.random_range(-1.0..1.0));
    let b = Array1::from_shape_fn(K, |_| rng.random_range(-0.5..0.5));
    let transfer = TransferClassifier::from_parts(w, b, space, 1.0).unwrap();
    let est = AliceEstimator::new(set.clone(), transfer, ErrorFunction::zero_one()).unwrap();
    (set, est)
}

fn prediction(rng: &mut ChaCha8Rng) -> ProbabilityVector {
    let v: Vec<f64> = (0..K).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = v.iter().sum();
    let mut p: Vec<f64> = v.iter().map(|x| x / s).collect();
    p[K - 1] = 1.0 - p[..K - 1].iter().sum::<f64>();
    ProbabilityVector::new(p).unwrap()
}

fn survival() -> Result<(), String> {
    let (set, _) = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let g = &set.gaussians()[rng.random_range(0..K)];
        let (a, b): (f64, f64) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let (lo, hi) = (a.min(b), a.max(b));
        if g.survival(lo) < g.survival(hi) {
            return Err(format!("survival({lo}) < survival({hi})"));
        }
    }
    Ok(())
}

fn score_monotone_and_bounded() -> Result<(), String> {
    let (set, base) = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fns = [
        ErrorFunction::zero_one(),
        ErrorFunction::top_k(2),
        ErrorFunction::cross_entropy(),
        ErrorFunction::mean_squared(),
        ErrorFunction::distributional(),
    ];
    for _ in 0..1000 {
        let est = base.variant(fns[rng.random_range(0..fns.len())], base.ablations());
        let x = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
        let x = ArrayView1::from(&x[..]);
        let p = prediction(&mut rng);
        let (a, b): (f64, f64) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let s_lo = est.score(x, &p, lo).map_err(|e| e.to_string())?;
        let s_hi = est.score(x, &p, hi).map_err(|e| e.to_string())?;
        let pd = set.p_in_distribution(x).map_err(|e| e.to_string())?;
        if s_lo > s_hi || s_hi > pd + 1e-12 || s_lo < 0.0 {
            return Err(format!("{}: δ {lo} → {s_lo}, δ {hi} → {s_hi}, p(D|x) {pd}", est.error_fn()));
        }
    }
    Ok(())
}

fn zero_one_confidence() -> Result<(), String> {
    let (set, est) = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let x = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
        let x = ArrayView1::from(&x[..]);
        let p = prediction(&mut rng);
        let delta = rng.random_range(1e-9..0.999_999);
        let s = est.score(x, &p, delta).map_err(|e| e.to_string())?;
        let want = set.p_in_distribution(x).unwrap() * est.transfer().predict_proba(x).unwrap()[p.argmax()];
        if (s - want).abs() > 1e-12 {
            return Err(format!("{s} vs {want}"));
        }
    }
    Ok(())
}

pub fn all() -> Vec<Check> {
    vec![
        ("AP equals brute force on 500 instances", ap_brute_force()),
        ("Mahalanobis matches explicit inverse", mahalanobis()),
        ("analytic gradients match finite differences", gradients()),
        ("survival non-increasing", survival()),
        ("score non-decreasing in δ and bounded by p(D|x)", score_monotone_and_bounded()),
        ("zero-one score equals p(D|x)·p̂(argmax)", zero_one_confidence()),
        ("AP invariant under monotone transforms", ap_monotone_invariance()),
    ]
}
