//! Exact kernels standing in for the approximated applications.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

/// Link lengths of the planar two-link arm.
pub const ARM_L1: f64 = 0.5;
pub const ARM_L2: f64 = 0.5;

/// Joint angles `(θ1, θ2)` placing the end effector at `(x, y)`.
///
/// Law-of-cosines closed form with `θ2 = +acos(..)` (the branch is fixed).
/// `None` when the point is out of reach.
pub fn inverse_kinematics(x: f64, y: f64) -> Option<[f64; 2]> {
    let r2 = x * x + y * y;
    let cos_t2 = (r2 - ARM_L1 * ARM_L1 - ARM_L2 * ARM_L2) / (2.0 * ARM_L1 * ARM_L2);
    if !(-1.0..=1.0).contains(&cos_t2) {
        return None;
    }
    let t2 = cos_t2.acos();
    let t1 = y.atan2(x) - (ARM_L2 * t2.sin()).atan2(ARM_L1 + ARM_L2 * t2.cos());
    Some([t1, t2])
}

pub fn forward_kinematics(t1: f64, t2: f64) -> [f64; 2] {
    [
        ARM_L1 * t1.cos() + ARM_L2 * (t1 + t2).cos(),
        ARM_L1 * t1.sin() + ARM_L2 * (t1 + t2).sin(),
    ]
}

const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Clamped Sobel gradient magnitude of a row-major 3×3 patch.
pub fn sobel(patch: &[f64]) -> f64 {
    let gx: f64 = patch.iter().zip(SOBEL_X).map(|(p, k)| p * k).sum();
    let gy: f64 = patch.iter().zip(SOBEL_Y).map(|(p, k)| p * k).sum();
    (gx * gx + gy * gy).sqrt().min(1.0)
}

/// FFT twiddle factor `(cos 2πt, sin 2πt)`.
pub fn twiddle(t: f64) -> [f64; 2] {
    let a = 2.0 * PI * t;
    [a.cos(), a.sin()]
}

/// Bessel function of the first kind, order zero.
///
/// Miller's algorithm: the recurrence `J_{k-1} = (2k/z) J_k - J_{k+1}` run
/// downward from an order well above `z`, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j0(z: f64) -> f64 {
    let z = z.abs();
    if z < 1e-8 {
        return 1.0 - 0.25 * z * z;
    }
    let start = 2 * ((z as usize + 30 + (40.0 * z).sqrt() as usize) / 2);
    let mut next = 0.0;
    let mut cur = 1e-30;
    let mut even_sum = cur;
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / z) * cur - next;
        next = cur;
        cur = prev;
        if (k - 1) % 2 == 0 && k > 1 {
            even_sum += cur;
        }
        if cur.abs() > 1e200 {
            cur *= 1e-200;
            next *= 1e-200;
            even_sum *= 1e-200;
        }
    }
    cur / (cur + 2.0 * even_sum)
}

/// Global minimum of `J0` (at `z ≈ 3.8317`).
pub const BESSEL_J0_MIN: f64 = -0.402_759_395_702_553;

/// Radial scale applied to the bessel inputs.
pub const BESSEL_SCALE: f64 = 10.0;

pub fn bessel_surface(x1: f64, x2: f64) -> f64 {
    bessel_j0(BESSEL_SCALE * (x1 * x1 + x2 * x2).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Black–Scholes price of a European option.
///
/// With zero time value (`σ√T = 0`) the discounted intrinsic value is
/// returned.
pub fn black_scholes(spot: f64, strike: f64, rate: f64, vol: f64, maturity: f64, call: bool) -> f64 {
    let vt = vol * maturity.sqrt();
    let disc_strike = strike * (-rate * maturity).exp();
    if vt <= 0.0 {
        return if call {
            (spot - disc_strike).max(0.0)
        } else {
            (disc_strike - spot).max(0.0)
        };
    }
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * maturity) / vt;
    let d2 = d1 - vt;
    if call {
        spot * normal_cdf(d1) - disc_strike * normal_cdf(d2)
    } else {
        disc_strike * normal_cdf(-d2) - spot * normal_cdf(-d1)
    }
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-D DCT-II of a row-major 8×8 block.
pub fn dct8x8(block: &[f64]) -> Vec<f64> {
    let c = dct_matrix();
    // rows first: tmp = B Cᵀ, then out = C tmp.
    let mut tmp = [0.0; 64];
    for x in 0..8 {
        for v in 0..8 {
            tmp[x * 8 + v] = (0..8).map(|y| block[x * 8 + y] * c[v][y]).sum();
        }
    }
    let mut out = vec![0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            out[u * 8 + v] = (0..8).map(|x| c[u][x] * tmp[x * 8 + v]).sum();
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coeffs: &[f64]) -> Vec<f64> {
    let c = dct_matrix();
    let mut tmp = [0.0; 64];
    for x in 0..8 {
        for v in 0..8 {
            tmp[x * 8 + v] = (0..8).map(|u| c[u][x] * coeffs[u * 8 + v]).sum();
        }
    }
    let mut out = vec![0.0; 64];
    for x in 0..8 {
        for y in 0..8 {
            out[x * 8 + y] = (0..8).map(|v| tmp[x * 8 + v] * c[v][y]).sum();
        }
    }
    out
}

/// Attainable `[min, max]` of each DCT coefficient over blocks in `[0, 1]^64`.
pub fn dct_coefficient_ranges() -> Vec<(f64, f64)> {
    let c = dct_matrix();
    let mut ranges = Vec::with_capacity(64);
    for u in 0..8 {
        for v in 0..8 {
            let (mut lo, mut hi) = (0.0, 0.0);
            for x in 0..8 {
                for y in 0..8 {
                    let b = c[u][x] * c[v][y];
                    if b < 0.0 {
                        lo += b;
                    } else {
                        hi += b;
                    }
                }
            }
            ranges.push((lo, hi));
        }
    }
    ranges
}

/// Euclidean RGB distance scaled into `[0, 1]` by `√3`.
pub fn color_distance(pixel: &[f64], centroid: &[f64]) -> f64 {
    let d2: f64 = pixel.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
    d2.sqrt() / 3f64.sqrt()
}
