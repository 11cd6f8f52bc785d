use crate::error::{NuqError, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const PSNR_CAP: f64 = 100.0;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid-mode filtering: output is `(h-10) x (w-10)`.
fn filter(img: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn check_shapes(a: usize, b: usize, h: usize, w: usize) -> Result<()> {
    if a != b || a != h * w {
        return Err(NuqError::Shape(format!("frames of {a} and {b} pixels for {h}x{w}")));
    }
    Ok(())
}

/// Mean structural similarity over all positions where an 11×11 Gaussian
/// window (σ = 1.5) fits, for pixels in [0,1].
pub fn ssim<T: Into<f64> + Copy>(a: &[T], b: &[T], height: usize, width: usize) -> Result<f64> {
    check_shapes(a.len(), b.len(), height, width)?;
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(NuqError::Shape(format!("SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    let a: Vec<f64> = a.iter().map(|&v| v.into()).collect();
    let b: Vec<f64> = b.iter().map(|&v| v.into()).collect();
    let k = gaussian_taps();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter(&a, height, width, &k);
    let mu_b = filter(&b, height, width, &k);
    let aa = filter(&prod(&a, &a), height, width, &k);
    let bb = filter(&prod(&b, &b), height, width, &k);
    let ab = filter(&prod(&a, &b), height, width, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / n as f64)
}

/// Peak signal-to-noise ratio in dB, capped at 100 dB.
pub fn psnr<T: Into<f64> + Copy>(a: &[T], b: &[T], max_val: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(NuqError::Shape(format!("frames of {} and {} pixels", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(&x, &y)| (x.into() - y.into()).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((20.0 * (max_val / mse.sqrt()).log10()).min(PSNR_CAP))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn identical_frames() {
        let a: Vec<f64> = (0..256).map(|i| (i % 17) as f64 / 16.0).collect();
        assert!((ssim(&a, &a, 16, 16).unwrap() - 1.0).abs() < 1e-12);
        let c = vec![0.5f64; 256];
        assert!((ssim(&c, &c, 16, 16).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP);
    }

    #[test]
    fn psnr_by_hand() {
        let a = vec![0.2f64; 64];
        let b = vec![0.3f64; 64];
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let z = vec![0.0f64; 4];
        let o = vec![1.0f64; 4];
        assert!(psnr(&z, &o, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let a = vec![0.0f64; 256];
        assert!(matches!(ssim(&a, &a[..255], 16, 16), Err(NuqError::Shape(_))));
        assert!(matches!(ssim(&a[..100], &a[..100], 10, 10), Err(NuqError::Shape(_))));
        assert!(matches!(psnr(&a, &a[..3], 1.0), Err(NuqError::Shape(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ssim_is_symmetric_and_bounded(
            a in proptest::collection::vec(0.0f64..=1.0, 144),
            b in proptest::collection::vec(0.0f64..=1.0, 144),
        ) {
            let ab = ssim(&a, &b, 12, 12).unwrap();
            let ba = ssim(&b, &a, 12, 12).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn psnr_decreases_with_noise_amplitude(base in proptest::collection::vec(0.0f64..=1.0, 64), amp in 0.01f64..0.4) {
            let noisy = |s: f64| -> Vec<f64> {
                base.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { s } else { -s }).collect()
            };
            let lo = psnr(&base, &noisy(amp), 1.0).unwrap();
            let hi = psnr(&base, &noisy(amp * 1.5), 1.0).unwrap();
            prop_assert!(hi < lo);
        }
    }
}
