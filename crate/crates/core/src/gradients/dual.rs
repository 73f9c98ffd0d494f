//! Forward-mode dual numbers with a fixed-width partial vector.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by the plain shader (`f64`) and the
/// differentiated shader ([`Dual`]). Writing the shading formulas once
/// against this trait keeps value and derivative paths textually identical.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(v: f64) -> Self;

    /// A variable with value `v` whose derivative with respect to partial
    /// `slot` is `dv`. Plain scalars ignore the derivative.
    fn variable(v: f64, slot: Option<usize>, dv: f64) -> Self;

    fn value(self) -> f64;

    fn sqrt(self) -> Self;

    fn powi(self, n: i32) -> Self;

    fn recip(self) -> Self;

    /// `max(self, c)`. At the kink the constant branch wins, so the
    /// derivative there is zero.
    fn max_const(self, c: f64) -> Self;

    /// Same derivatives, different value.
    fn with_value(self, v: f64) -> Self;
}

impl Real for f64 {
    #[inline(always)]
    fn constant(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn variable(v: f64, _slot: Option<usize>, _dv: f64) -> Self {
        v
    }

    #[inline(always)]
    fn value(self) -> f64 {
        self
    }

    #[inline(always)]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline(always)]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }

    #[inline(always)]
    fn recip(self) -> Self {
        1.0 / self
    }

    #[inline(always)]
    fn max_const(self, c: f64) -> Self {
        if self > c {
            self
        } else {
            c
        }
    }

    #[inline(always)]
    fn with_value(self, v: f64) -> Self {
        v
    }
}

/// A value together with its partial derivatives against `N` parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub value: f64,
    pub partials: [f64; N],
}

impl<const N: usize> Dual<N> {
    #[inline(always)]
    fn scale_partials(&self, k: f64) -> [f64; N] {
        let mut d = self.partials;
        for x in &mut d {
            *x *= k;
        }
        d
    }

    #[inline(always)]
    fn chain(self, value: f64, deriv: f64) -> Self {
        Dual {
            value,
            partials: self.scale_partials(deriv),
        }
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline(always)]
    fn constant(v: f64) -> Self {
        Dual {
            value: v,
            partials: [0.0; N],
        }
    }

    #[inline(always)]
    fn variable(v: f64, slot: Option<usize>, dv: f64) -> Self {
        let mut partials = [0.0; N];
        if let Some(k) = slot {
            partials[k] = dv;
        }
        Dual { value: v, partials }
    }

    #[inline(always)]
    fn value(self) -> f64 {
        self.value
    }

    #[inline(always)]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }

    #[inline(always)]
    fn powi(self, n: i32) -> Self {
        self.chain(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }

    #[inline(always)]
    fn recip(self) -> Self {
        let r = 1.0 / self.value;
        self.chain(r, -r * r)
    }

    #[inline(always)]
    fn max_const(self, c: f64) -> Self {
        if self.value > c {
            self
        } else {
            Self::constant(c)
        }
    }

    #[inline(always)]
    fn with_value(self, v: f64) -> Self {
        Dual {
            value: v,
            partials: self.partials,
        }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn add(self, o: Self) -> Self {
        let mut d = self.partials;
        for (a, b) in d.iter_mut().zip(o.partials) {
            *a += b;
        }
        Dual {
            value: self.value + o.value,
            partials: d,
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        let mut d = self.partials;
        for (a, b) in d.iter_mut().zip(o.partials) {
            *a -= b;
        }
        Dual {
            value: self.value - o.value,
            partials: d,
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.partials[i] * o.value + self.value * o.partials[i];
        }
        Dual {
            value: self.value * o.value,
            partials: d,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn div(self, o: Self) -> Self {
        // Value computed as a plain quotient so it rounds like `f64`.
        let q = self.value / o.value;
        let inv = 1.0 / o.value;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.partials[i] - q * o.partials[i]) * inv;
        }
        Dual { value: q, partials: d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn neg(self) -> Self {
        Dual {
            value: -self.value,
            partials: self.scale_partials(-1.0),
        }
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn add(self, c: f64) -> Self {
        Dual {
            value: self.value + c,
            partials: self.partials,
        }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn sub(self, c: f64) -> Self {
        Dual {
            value: self.value - c,
            partials: self.partials,
        }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn mul(self, c: f64) -> Self {
        Dual {
            value: self.value * c,
            partials: self.scale_partials(c),
        }
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;

    #[inline(always)]
    fn div(self, c: f64) -> Self {
        let inv = 1.0 / c;
        Dual {
            value: self.value / c,
            partials: self.scale_partials(inv),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<2>;

    fn x(v: f64) -> D2 {
        D2::variable(v, Some(0), 1.0)
    }

    fn y(v: f64) -> D2 {
        D2::variable(v, Some(1), 1.0)
    }

    #[test]
    fn product_and_quotient_rules() {
        let f = x(3.0) * y(2.0) / (x(3.0) + 1.0);
        // f = xy / (x + 1): df/dx = y / (x+1)^2, df/dy = x / (x+1)
        assert!((f.value - 1.5).abs() < 1e-15);
        assert!((f.partials[0] - 2.0 / 16.0).abs() < 1e-15);
        assert!((f.partials[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn elementary_functions() {
        let s = x(4.0).sqrt();
        assert_eq!((s.value, s.partials[0]), (2.0, 0.25));
        let p = (D2::constant(1.0) - x(0.5)).powi(5);
        assert!((p.partials[0] + 5.0 * 0.5f64.powi(4)).abs() < 1e-15);
        let r = x(2.0).recip();
        assert_eq!(r.partials[0], -0.25);
        let n = -(x(2.0) * 3.0 - 1.0) / 2.0;
        assert_eq!((n.value, n.partials[0]), (-2.5, -1.5));
    }

    #[test]
    fn value_path_rounds_like_f64() {
        let (a, b) = (0.1f64, 0.7f64);
        let q = D2::constant(a) / D2::constant(b);
        assert_eq!(q.value.to_bits(), (a / b).to_bits());
        assert_eq!((D2::constant(a) / b).value.to_bits(), (a / b).to_bits());
        assert_eq!(D2::constant(b).powi(5).value.to_bits(), b.powi(5).to_bits());
    }

    #[test]
    fn max_const_kink_takes_constant_branch() {
        assert_eq!(x(0.5).max_const(0.5).partials, [0.0, 0.0]);
        assert_eq!(x(0.6).max_const(0.5).partials, [1.0, 0.0]);
        assert_eq!(x(0.4).max_const(0.5).value, 0.5);
    }
}
