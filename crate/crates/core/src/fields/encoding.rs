use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sinusoidal features `[x, sin(2^l π x), cos(2^l π x)]` for `l = 0..octaves`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub octaves: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(octaves: usize) -> Self {
        Self { octaves, include_input: true }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (usize::from(self.include_input) + 2 * self.octaves)
    }

    pub fn encode(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if self.include_input {
            out.extend_from_slice(x);
        }
        for l in 0..self.octaves {
            let f = (1u64 << l) as f64 * PI;
            out.extend(x.iter().map(|v| (f * v).sin()));
            out.extend(x.iter().map(|v| (f * v).cos()));
        }
    }

    /// Gradient with respect to the raw input given the gradient of the features.
    pub fn backward(&self, x: &[f64], d_features: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut dx = vec![0.0; n];
        let mut at = 0;
        if self.include_input {
            dx.copy_from_slice(&d_features[..n]);
            at = n;
        }
        for l in 0..self.octaves {
            let f = (1u64 << l) as f64 * PI;
            for i in 0..n {
                dx[i] += d_features[at + i] * f * (f * x[i]).cos();
                dx[i] -= d_features[at + n + i] * f * (f * x[i]).sin();
            }
            at += 2 * n;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_encodes_to_sines_zero_cosines_one() {
        let pe = PositionalEncoding::new(4);
        let mut out = Vec::new();
        pe.encode(&[0.0; 3], &mut out);
        assert_eq!(out.len(), pe.output_dim(3));
        assert_eq!(out.len(), 27);
        for l in 0..4 {
            let base = 3 + 6 * l;
            assert!(out[base..base + 3].iter().all(|v| *v == 0.0));
            assert!(out[base + 3..base + 6].iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn dimension_without_input() {
        let pe = PositionalEncoding { octaves: 6, include_input: false };
        assert_eq!(pe.output_dim(6), 72);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let pe = PositionalEncoding::new(5);
        let x = [0.13, -0.41, 0.27];
        let w: Vec<f64> = (0..pe.output_dim(3)).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let f = |x: &[f64]| {
            let mut e = Vec::new();
            pe.encode(x, &mut e);
            e.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = pe.backward(&x, &w);
        for i in 0..3 {
            let (mut a, mut b) = (x, x);
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}
