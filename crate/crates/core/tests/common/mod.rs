//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's math: matrices are plain nested
//! vectors, integrals are composite Simpson sums and derivatives are central
//! differences.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

pub fn naive_matvec(rows: usize, cols: usize, data: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..cols {
            y[r] += data[r * cols + c] * x[c];
        }
    }
    y
}

/// Determinant and inverse by Gauss-Jordan elimination with partial pivoting.
pub fn det_and_inverse(a: &Mat) -> (f64, Mat) {
    let n = a.len();
    let mut m = a.clone();
    let mut inv = identity(n);
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if pivot != col {
            m.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col];
        det *= p;
        for k in 0..n {
            m[col][k] /= p;
            inv[col][k] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for k in 0..n {
                    m[r][k] -= f * m[col][k];
                    inv[r][k] -= f * inv[col][k];
                }
            }
        }
    }
    (det, inv)
}

/// `KL(N(mu1, s1) ‖ N(mu0, s0))` from the general matrix formula.
pub fn gaussian_kl(mu1: &[f64], s1: &Mat, mu0: &[f64], s0: &Mat) -> f64 {
    let n = mu1.len();
    let (det0, inv0) = det_and_inverse(s0);
    let (det1, _) = det_and_inverse(s1);
    let mut trace = 0.0;
    for i in 0..n {
        for k in 0..n {
            trace += inv0[i][k] * s1[k][i];
        }
    }
    let d: Vec<f64> = mu0.iter().zip(mu1).map(|(a, b)| a - b).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for k in 0..n {
            quad += d[i] * inv0[i][k] * d[k];
        }
    }
    0.5 * (trace + quad - n as f64 + (det0 / det1).ln())
}

/// Multiplication by `i` on the stacked `[re…, im…]` layout.
pub fn times_i(z: &[f64]) -> Vec<f64> {
    let k = z.len() / 2;
    let mut w = vec![0.0; z.len()];
    for j in 0..k {
        w[j] = -z[j + k];
        w[j + k] = z[j];
    }
    w
}

/// Covariance of `h z + n`, `h ~ CN(0, 1)`: `½(zzᵀ + (iz)(iz)ᵀ) + σn² I`.
pub fn rbf_covariance(z: &[f64], sigma_n2: f64) -> Mat {
    let w = times_i(z);
    let n = z.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * (z[i] * z[j] + w[i] * w[j]) + if i == j { sigma_n2 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn scaled_identity(n: usize, s: f64) -> Mat {
    let mut m = identity(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = s;
    }
    m
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// `KL(Laplace(z, bn) ‖ Laplace(0, b0))` for one component by quadrature,
/// split at the kinks of the integrand.
pub fn laplace_kl_quadrature(z: f64, bn: f64, b0: f64) -> f64 {
    let p = |x: f64| (-(x - z).abs() / bn).exp() / (2.0 * bn);
    let q = |x: f64| (-x.abs() / b0).exp() / (2.0 * b0);
    let f = |x: f64| {
        let px = p(x);
        if px == 0.0 {
            0.0
        } else {
            px * (px.ln() - q(x).ln())
        }
    };
    let (lo, hi) = (z.min(0.0), z.max(0.0));
    let reach = 60.0 * bn;
    simpson(f, lo - reach, lo, 40_000) + simpson(f, lo, hi, 40_000) + simpson(f, hi, hi + reach, 40_000)
}

/// `KL(Cauchy(z, gn) ‖ Cauchy(0, g0))` for one component, integrated in the
/// angle variable `x = z + gn tan θ` so the heavy tails become a finite
/// interval with density `1/π`.
pub fn cauchy_kl_quadrature(z: f64, gn: f64, g0: f64) -> f64 {
    let log_ratio = |x: f64| {
        let lp = (gn / std::f64::consts::PI).ln() - ((x - z).powi(2) + gn * gn).ln();
        let lq = (g0 / std::f64::consts::PI).ln() - (x * x + g0 * g0).ln();
        lp - lq
    };
    // endpoint limit: the ratio of densities tends to gn/g0
    let f = |t: f64| {
        let edge = std::f64::consts::FRAC_PI_2 - t.abs();
        if edge < 1e-12 {
            (gn / g0).ln()
        } else {
            log_ratio(z + gn * t.tan())
        }
    };
    let half = std::f64::consts::FRAC_PI_2;
    simpson(f, -half, half, 200_000) / std::f64::consts::PI
}

/// Central difference of `f` along every coordinate of `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Worst entrywise relative error, with `floor` guarding entries near zero.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard normal upper tail by Simpson integration of the density.
pub fn q_reference(x: f64) -> f64 {
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(phi, x, x + 40.0, 400_000)
}

/// QPSK block error rate `1 − (1 − Q(√(2 SNR_bit)))²` with `SNR_bit = SNR/2`.
pub fn qpsk_bler_reference(snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    let p = q_reference((2.0 * snr / 2.0).sqrt());
    1.0 - (1.0 - p).powi(2)
}
