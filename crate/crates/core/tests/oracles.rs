//! Closed-form and Monte-Carlo oracles for the distribution primitives.

use candle_core::{DType, Device, Tensor};
use rand_distr::{Distribution, StandardNormal};

use nuq::distributions::{kl_diag_gaussian, reparam_gaussian_sample, GaussianParams, TruncNormalParams, TruncNormalSampler};
use nuq::seeding;

const N: usize = 1_000_000;

fn t(v: &[f64], shape: &[usize]) -> Tensor {
    Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
}

fn values(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

#[test]
fn reparam_moments_match() {
    let mut rng = seeding::rng(1);
    let noise: Vec<f64> = (0..N).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p = GaussianParams::new(t(&vec![2.0; N], &[N]), t(&vec![4.0; N], &[N])).unwrap();
    let x = values(&reparam_gaussian_sample(&p, &t(&noise, &[N])).unwrap());
    let (m, v) = mean_var(&x);
    let se_mean = (4.0 / N as f64).sqrt();
    // Var of the sample variance of a normal is 2σ⁴/n.
    let se_var = (2.0 * 16.0 / N as f64).sqrt();
    assert!((m - 2.0).abs() < 3.0 * se_mean, "mean {m}");
    assert!((v - 4.0).abs() < 3.0 * se_var, "variance {v}");
}

#[test]
fn unit_shift_kl_is_one_half() {
    let q = GaussianParams::new(t(&[1.0], &[1, 1]), t(&[1.0], &[1, 1])).unwrap();
    let p = GaussianParams::new(t(&[0.0], &[1, 1]), t(&[1.0], &[1, 1])).unwrap();
    let kl = values(&kl_diag_gaussian(&q, &p).unwrap())[0];
    assert!((kl - 0.5).abs() < 1e-12);

    let mut rng = seeding::rng(2);
    let mc = (0..N)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            let x = 1.0 + e;
            -0.5 * e * e + 0.5 * x * x
        })
        .sum::<f64>()
        / N as f64;
    assert!((mc - 0.5).abs() < 0.01 * 0.5, "monte carlo {mc}");
}

#[test]
fn half_normal_mean() {
    let sampler = TruncNormalSampler { s_min: 1e-9, ..TruncNormalSampler::default() };
    let p = TruncNormalParams::new(t(&vec![0.0; N], &[N]), t(&vec![1.0; N], &[N])).unwrap();
    let mut rng = seeding::rng(3);
    let s = values(&sampler.sample(&p, &mut rng).unwrap().s);
    let (m, _) = mean_var(&s);
    let expected = (2.0 / std::f64::consts::PI).sqrt();
    let se = ((1.0 - 2.0 / std::f64::consts::PI) / N as f64).sqrt();
    assert!((m - expected).abs() < 3.0 * se, "mean {m} vs {expected}");
    assert!(s.iter().all(|&x| x >= 1e-9));
}
