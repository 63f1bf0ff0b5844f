//! Complex polynomials over pairs of reals.
//!
//! The complex plane is treated as a two-dimensional real state space, so all
//! arithmetic here is written out on `(re, im)` pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct C2 {
    pub re: f64,
    pub im: f64,
}

impl C2 {
    pub const ZERO: C2 = C2 { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        C2 { re, im }
    }

    pub fn add(self, o: C2) -> C2 {
        C2::new(self.re + o.re, self.im + o.im)
    }

    pub fn sub(self, o: C2) -> C2 {
        C2::new(self.re - o.re, self.im - o.im)
    }

    pub fn mul(self, o: C2) -> C2 {
        C2::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn div(self, o: C2) -> C2 {
        let den = o.re * o.re + o.im * o.im;
        C2::new(
            (self.re * o.re + self.im * o.im) / den,
            (self.im * o.re - self.re * o.im) / den,
        )
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Polynomial with real coefficients, leading coefficient first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Leading zeros are dropped; the remaining degree must be at least 1.
    pub fn new(coeffs: &[f64]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidFunction("polynomial coefficients must be finite".into()));
        }
        let first = coeffs.iter().position(|&c| c != 0.0).unwrap_or(coeffs.len());
        let coeffs = coeffs[first..].to_vec();
        if coeffs.len() < 2 {
            return Err(Error::InvalidFunction("polynomial degree must be at least 1".into()));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `(p(z), p'(z))` by Horner's scheme.
    pub fn eval_with_derivative(&self, z: C2) -> (C2, C2) {
        let mut p = C2::ZERO;
        let mut dp = C2::ZERO;
        for &c in &self.coeffs {
            dp = dp.mul(z).add(p);
            p = p.mul(z).add(C2::new(c, 0.0));
        }
        (p, dp)
    }

    pub fn eval(&self, z: C2) -> C2 {
        self.eval_with_derivative(z).0
    }

    /// One Newton step `z - p(z)/p'(z)`; `|p'(z)| < critical_tol` is an error.
    pub fn newton_step(&self, z: C2, critical_tol: f64) -> Result<C2> {
        let (p, dp) = self.eval_with_derivative(z);
        let dn = dp.norm();
        if dn < critical_tol || !dn.is_finite() {
            return Err(Error::CriticalPoint { re: z.re, im: z.im, derivative_norm: dn });
        }
        Ok(z.sub(p.div(dp)))
    }

    /// All complex roots by Weierstrass (Durand-Kerner) iteration, sorted by
    /// real part then imaginary part.
    pub fn roots(&self) -> Vec<C2> {
        let n = self.degree();
        let lead = self.coeffs[0];
        let monic: Vec<f64> = self.coeffs.iter().map(|c| c / lead).collect();
        let monic = Polynomial { coeffs: monic };
        // Cauchy bound for the initial circle.
        let radius = 1.0 + monic.coeffs[1..].iter().map(|c| c.abs()).fold(0.0, f64::max);
        let seed = C2::new(0.4, 0.9);
        let mut roots: Vec<C2> = (0..n)
            .map(|k| {
                let mut w = C2::new(1.0, 0.0);
                for _ in 0..k {
                    w = w.mul(seed);
                }
                let s = radius / w.norm().max(1e-300);
                C2::new(w.re * s * 0.5, w.im * s * 0.5)
            })
            .collect();
        for _ in 0..2000 {
            let mut delta: f64 = 0.0;
            for i in 0..n {
                let mut den = C2::new(1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        den = den.mul(roots[i].sub(roots[j]));
                    }
                }
                if den.norm() == 0.0 {
                    continue;
                }
                let step = monic.eval(roots[i]).div(den);
                roots[i] = roots[i].sub(step);
                delta = delta.max(step.norm());
            }
            if delta < 1e-15 {
                break;
            }
        }
        let key = |z: &C2| ((z.re * 1e8).round() as i64, (z.im * 1e8).round() as i64);
        roots.sort_by_key(key);
        roots
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_value_and_derivative() {
        // z^3 - 2z + 2 at z = 1 + i
        let p = Polynomial::new(&[1.0, 0.0, -2.0, 2.0]).unwrap();
        let z = C2::new(1.0, 1.0);
        let (v, d) = p.eval_with_derivative(z);
        // (1+i)^3 = -2 + 2i; -2(1+i) = -2 - 2i; sum + 2 = -2 + 0i
        assert_eq!(v, C2::new(-2.0, 0.0));
        // 3(1+i)^2 - 2 = 6i - 2
        assert_eq!(d, C2::new(-2.0, 6.0));
    }

    #[test]
    fn degree_zero_rejected_and_leading_zeros_stripped() {
        assert!(Polynomial::new(&[0.0, 3.0]).is_err());
        assert_eq!(Polynomial::new(&[0.0, 1.0, -1.0]).unwrap().degree(), 1);
    }

    #[test]
    fn roots_of_unity_cubed() {
        let p = Polynomial::new(&[1.0, 0.0, 0.0, -1.0]).unwrap();
        let roots = p.roots();
        assert_eq!(roots.len(), 3);
        for r in &roots {
            assert!(p.eval(*r).norm() < 1e-12);
        }
        assert!((roots[2].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_roots_of_z2_minus_1_sorted() {
        let roots = Polynomial::new(&[1.0, 0.0, -1.0]).unwrap().roots();
        assert!((roots[0].re + 1.0).abs() < 1e-12 && roots[0].im.abs() < 1e-12);
        assert!((roots[1].re - 1.0).abs() < 1e-12 && roots[1].im.abs() < 1e-12);
    }
}
