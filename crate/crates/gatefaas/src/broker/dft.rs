//! Direct-summation DFT, used to check the fft function's output. The
//! angle index `k*n` is reduced mod `N` before scaling.

use std::f64::consts::PI;

/// `X[k] = sum_n x[n] e^{-2 pi i k n / N}`, returned as `(re, im)`.
pub fn dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for (j, &v) in x.iter().enumerate() {
            let a = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            sr += v * a.cos();
            si += v * a.sin();
        }
        re[k] = sr;
        im[k] = si;
    }
    (re, im)
}

/// Largest `|got - want| / (1 + |want|)` over both components.
pub fn max_relative_error(got: (&[f64], &[f64]), want: (&[f64], &[f64])) -> f64 {
    let one = |g: &[f64], w: &[f64]| {
        g.iter()
            .zip(w)
            .map(|(g, w)| (g - w).abs() / (1.0 + w.abs()))
            .fold(0.0, f64::max)
    };
    if got.0.len() != want.0.len() || got.1.len() != want.1.len() {
        return f64::INFINITY;
    }
    one(got.0, want.0).max(one(got.1, want.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_transforms() {
        let (re, im) = dft(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(re, vec![1.0; 4]);
        assert!(im.iter().all(|v| v.abs() < 1e-15));
        let (re, im) = dft(&[1.0, 1.0, 1.0, 1.0]);
        assert!((re[0] - 4.0).abs() < 1e-15);
        assert!(re[1..].iter().chain(&im).all(|v| v.abs() < 1e-12));
        // cos(2 pi n / 8) puts N/2 at bins 1 and 7
        let x: Vec<f64> = (0..8).map(|n| (2.0 * PI * n as f64 / 8.0).cos()).collect();
        let (re, _) = dft(&x);
        assert!((re[1] - 4.0).abs() < 1e-12 && (re[7] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_infinite_error() {
        assert!(max_relative_error((&[1.0], &[0.0]), (&[], &[])).is_infinite());
    }
}
