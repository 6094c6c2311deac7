//! Exact-length complex FFT.
//!
//! Lengths whose prime factors are all small run through a recursive
//! mixed-radix decimation-in-time transform (radix 2, 4 and a generic odd
//! radix). Lengths with a large prime factor are computed with Bluestein's
//! chirp-z algorithm on top of a power-of-two plan. No zero padding of the
//! caller's data ever happens: a 48000-point clip is transformed as 48000
//! points.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Largest prime handled by the generic radix butterfly before switching the
/// whole transform to Bluestein.
const MAX_DIRECT_RADIX: usize = 61;

#[derive(Debug)]
enum Algorithm {
    MixedRadix {
        factors: Vec<usize>,
    },
    Bluestein {
        inner: Arc<FftPlan>,
        chirp: Vec<Complex64>,
        kernel: Vec<Complex64>,
    },
}

/// A reusable forward/inverse transform of one fixed length.
#[derive(Debug)]
pub struct FftPlan {
    len: usize,
    /// `exp(-2πi j / len)` for `j in 0..len`.
    twiddles: Vec<Complex64>,
    algorithm: Algorithm,
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let twiddles = (0..len)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / len as f64))
            .collect();
        let factors = factorize(len);
        let algorithm = if factors.iter().any(|&p| p > MAX_DIRECT_RADIX) {
            bluestein(len)
        } else {
            Algorithm::MixedRadix { factors }
        };
        Self {
            len,
            twiddles,
            algorithm,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform, `X[k] = Σ x[j] e^{-2πi jk/n}`, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len, "buffer length does not match plan");
        match &self.algorithm {
            Algorithm::MixedRadix { factors } => {
                let input = data.to_vec();
                let mut scratch = vec![Complex64::ZERO; factors.iter().copied().max().unwrap_or(1)];
                self.mixed_radix(&input, 1, data, factors, 1, &mut scratch);
            }
            Algorithm::Bluestein {
                inner,
                chirp,
                kernel,
            } => {
                let m = inner.len();
                let mut a = vec![Complex64::ZERO; m];
                for (dst, (x, c)) in a.iter_mut().zip(data.iter().zip(chirp)) {
                    *dst = x * c;
                }
                inner.forward(&mut a);
                for (v, k) in a.iter_mut().zip(kernel) {
                    *v *= k;
                }
                inner.inverse_unscaled(&mut a);
                let scale = 1.0 / m as f64;
                for (out, (v, c)) in data.iter_mut().zip(a.iter().zip(chirp)) {
                    *out = v * c * scale;
                }
            }
        }
    }

    /// Unnormalized inverse transform (no `1/n` factor), in place.
    pub fn inverse_unscaled(&self, data: &mut [Complex64]) {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward(data);
        for v in data.iter_mut() {
            *v = v.conj();
        }
    }

    /// Inverse transform including the `1/n` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_unscaled(data);
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Decimation in time: `out` receives the DFT of the `out.len()` samples
    /// `input[0], input[stride], ...`. `tw_stride` maps the sub-transform's
    /// roots of unity onto the full-length twiddle table.
    fn mixed_radix(
        &self,
        input: &[Complex64],
        stride: usize,
        out: &mut [Complex64],
        factors: &[usize],
        tw_stride: usize,
        scratch: &mut [Complex64],
    ) {
        let p = factors[0];
        let m = out.len() / p;
        if m == 1 {
            for (r, o) in out.iter_mut().enumerate() {
                *o = input[r * stride];
            }
        } else {
            for r in 0..p {
                self.mixed_radix(
                    &input[r * stride..],
                    stride * p,
                    &mut out[r * m..(r + 1) * m],
                    &factors[1..],
                    tw_stride * p,
                    scratch,
                );
            }
        }

        let t = &mut scratch[..p];
        for k in 0..m {
            for (r, slot) in t.iter_mut().enumerate() {
                let v = out[r * m + k];
                *slot = if r == 0 || k == 0 {
                    v
                } else {
                    v * self.twiddles[r * k * tw_stride]
                };
            }
            match p {
                2 => {
                    out[k] = t[0] + t[1];
                    out[k + m] = t[0] - t[1];
                }
                4 => {
                    let a = t[0] + t[2];
                    let b = t[0] - t[2];
                    let c = t[1] + t[3];
                    // -i * (t1 - t3)
                    let d = t[1] - t[3];
                    let d = Complex64::new(d.im, -d.re);
                    out[k] = a + c;
                    out[k + m] = b + d;
                    out[k + 2 * m] = a - c;
                    out[k + 3 * m] = b - d;
                }
                _ => {
                    let root_step = self.len / p;
                    for s in 0..p {
                        let mut acc = t[0];
                        for (r, &v) in t.iter().enumerate().skip(1) {
                            acc += v * self.twiddles[(r * s % p) * root_step];
                        }
                        out[k + s * m] = acc;
                    }
                }
            }
        }
    }
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    while n % 4 == 0 && n > 4 {
        factors.push(4);
        n /= 4;
    }
    let mut p = 2;
    while n > 1 {
        if p * p > n {
            factors.push(n);
            break;
        }
        while n % p == 0 {
            factors.push(p);
            n /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if factors.is_empty() {
        factors.push(1);
    }
    factors
}

fn bluestein(len: usize) -> Algorithm {
    let m = (2 * len - 1).next_power_of_two();
    let inner = plan(m);
    // exp(-iπ k²/n), with k² reduced mod 2n to keep the phase exact.
    let two_n = 2 * len as u128;
    let chirp: Vec<Complex64> = (0..len)
        .map(|k| {
            let q = (k as u128 * k as u128) % two_n;
            Complex64::from_polar(1.0, -PI * q as f64 / len as f64)
        })
        .collect();
    let mut kernel = vec![Complex64::ZERO; m];
    kernel[0] = chirp[0].conj();
    for k in 1..len {
        kernel[k] = chirp[k].conj();
        kernel[m - k] = chirp[k].conj();
    }
    inner.forward(&mut kernel);
    Algorithm::Bluestein {
        inner,
        chirp,
        kernel,
    }
}

/// Returns a shared plan for `len`, building it on first use.
pub fn plan(len: usize) -> Arc<FftPlan> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().expect("fft plan cache poisoned").get(&len) {
        return Arc::clone(p);
    }
    // Built outside the lock: Bluestein plans recurse into `plan`.
    let built = Arc::new(FftPlan::new(len));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    Arc::clone(guard.entry(len).or_insert(built))
}
