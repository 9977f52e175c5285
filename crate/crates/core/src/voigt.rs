//! Faddeeva function and Voigt profile.
//!
//! w(z) for Im z ≥ 0 uses Weideman's rational expansion (SIAM J. Numer. Anal.
//! 31, 1497, 1994) with N = 64 terms; the coefficients are computed once from a
//! discrete cosine sum of (L² + t²)·exp(−t²) on t = L·tan(θ/2).

use std::f64::consts::PI;
use std::sync::OnceLock;

const N: usize = 64;

struct Weideman {
    l: f64,
    /// a_1 … a_N.
    a: [f64; N],
}

fn table() -> &'static Weideman {
    static T: OnceLock<Weideman> = OnceLock::new();
    T.get_or_init(|| {
        let m = 2 * N;
        let l = (N as f64 / 2f64.sqrt()).sqrt();
        // f_k for k = −M+1 … M−1; f_{−M} = 0.
        let f: Vec<(i64, f64)> = ((-(m as i64) + 1)..(m as i64))
            .map(|k| {
                let theta = k as f64 * PI / m as f64;
                let t = l * (theta / 2.0).tan();
                (k, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        let mut a = [0.0; N];
        for (n, slot) in a.iter_mut().enumerate() {
            let n = (n + 1) as f64;
            let s: f64 = f.iter().map(|&(k, fk)| fk * (PI * n * k as f64 / m as f64).cos()).sum();
            *slot = s / (2 * m) as f64;
        }
        Weideman { l, a }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cx {
    re: f64,
    im: f64,
}

impl Cx {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn add(self, o: Cx) -> Cx {
        Cx::new(self.re + o.re, self.im + o.im)
    }
    fn mul(self, o: Cx) -> Cx {
        Cx::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn div(self, o: Cx) -> Cx {
        let d = o.re * o.re + o.im * o.im;
        Cx::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    fn scale(self, k: f64) -> Cx {
        Cx::new(self.re * k, self.im * k)
    }
}

/// Faddeeva w(x + iy) for y ≥ 0 as (Re, Im).
pub fn faddeeva(x: f64, y: f64) -> (f64, f64) {
    let t = table();
    // iz = −y + ix
    let lmiz = Cx::new(t.l + y, -x);
    let lpiz = Cx::new(t.l - y, x);
    let z = lpiz.div(lmiz);
    let mut p = Cx::new(0.0, 0.0);
    for &c in t.a.iter().rev() {
        p = p.mul(z).add(Cx::new(c, 0.0));
    }
    let inv = Cx::new(1.0, 0.0).div(lmiz);
    let w = p.scale(2.0).mul(inv).mul(inv).add(inv.scale(1.0 / PI.sqrt()));
    (w.re, w.im)
}

/// Unit-area Voigt profile at detuning `x` for Gaussian standard deviation `sigma`
/// and Lorentzian half width `gamma` (same units as `x`).
pub fn voigt(x: f64, sigma: f64, gamma: f64) -> f64 {
    if sigma <= 0.0 {
        return gamma / (PI * (x * x + gamma * gamma));
    }
    let s2 = sigma * std::f64::consts::SQRT_2;
    if gamma <= 0.0 {
        return (-(x / s2).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
    }
    let (re, _) = faddeeva(x / s2, gamma / s2);
    re / (sigma * (2.0 * PI).sqrt())
}

/// Gaussian standard deviation for a full width at half maximum.
pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_axis_is_gaussian() {
        for x in [0.0, 0.3, 1.0, 2.5] {
            let (re, _) = faddeeva(x, 0.0);
            assert!((re - (-x * x).exp()).abs() < 1e-9, "x={x} re={re}");
        }
    }

    #[test]
    fn known_value_at_origin() {
        // w(i) = e·erfc(1)
        let (re, im) = faddeeva(0.0, 1.0);
        assert!((re - 0.427_583_576_155_807).abs() < 1e-10);
        assert!(im.abs() < 1e-12);
    }
}
