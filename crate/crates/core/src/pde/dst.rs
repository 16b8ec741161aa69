//! Type-I discrete sine transform,
//! `y_k = sum_{j=1}^{M} x_j sin(pi j k / (M + 1))` for `k = 1..M`.
//!
//! Short lines use the direct `O(M^2)` sum against a precomputed table;
//! longer lines go through a complex FFT of the odd extension of length
//! `2(M + 1)`. Applying the transform twice multiplies by `(M + 1) / 2`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Lines up to this length use the direct sum.
pub const DIRECT_MAX: usize = 64;

#[derive(Clone)]
enum Kernel {
    Direct { table: Vec<f64> },
    Fast { fft: Arc<dyn Fft<f64>> },
}

/// A planned sine transform of fixed length.
#[derive(Clone)]
pub struct SineTransform {
    len: usize,
    kernel: Kernel,
}

impl SineTransform {
    pub fn new(len: usize) -> Self {
        if len <= DIRECT_MAX {
            Self::direct(len)
        } else {
            Self::fast(len)
        }
    }

    pub fn direct(len: usize) -> Self {
        let n1 = (len + 1) as f64;
        let mut table = Vec::with_capacity(len * len);
        for k in 1..=len {
            for j in 1..=len {
                // reduce j*k mod 2(M+1) so the sine argument stays in [0, 2pi)
                let r = (j * k) % (2 * (len + 1));
                table.push((PI * r as f64 / n1).sin());
            }
        }
        SineTransform {
            len,
            kernel: Kernel::Direct { table },
        }
    }

    pub fn fast(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (len + 1));
        SineTransform {
            len,
            kernel: Kernel::Fast { fft },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Scratch buffer sized for [`SineTransform::apply`].
    pub fn scratch(&self) -> Scratch {
        match &self.kernel {
            Kernel::Direct { .. } => Scratch {
                real: vec![0.0; self.len],
                complex: Vec::new(),
                fft: Vec::new(),
            },
            Kernel::Fast { fft } => Scratch {
                real: Vec::new(),
                complex: vec![Complex64::new(0.0, 0.0); 2 * (self.len + 1)],
                fft: vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            },
        }
    }

    /// Transforms `line` in place.
    pub fn apply(&self, line: &mut [f64], scratch: &mut Scratch) {
        debug_assert_eq!(line.len(), self.len);
        let m = self.len;
        match &self.kernel {
            Kernel::Direct { table } => {
                let out = &mut scratch.real;
                for (k, row) in table.chunks_exact(m).enumerate() {
                    out[k] = row.iter().zip(line.iter()).map(|(s, x)| s * x).sum();
                }
                line.copy_from_slice(out);
            }
            Kernel::Fast { fft } => {
                let buf = &mut scratch.complex;
                buf[0] = Complex64::new(0.0, 0.0);
                buf[m + 1] = Complex64::new(0.0, 0.0);
                for (j, &x) in line.iter().enumerate() {
                    buf[j + 1] = Complex64::new(x, 0.0);
                    buf[2 * (m + 1) - 1 - j] = Complex64::new(-x, 0.0);
                }
                fft.process_with_scratch(buf, &mut scratch.fft);
                for (k, y) in line.iter_mut().enumerate() {
                    *y = -0.5 * buf[k + 1].im;
                }
            }
        }
    }
}

pub struct Scratch {
    real: Vec<f64>,
    complex: Vec<Complex64>,
    fft: Vec<Complex64>,
}
