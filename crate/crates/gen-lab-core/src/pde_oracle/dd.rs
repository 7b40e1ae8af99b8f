//! Minimal double-double arithmetic (~31 significant digits), used to keep
//! the sphere-Laplacian stencil's cancellation below the f64 noise floor at
//! the smallest validated step sizes. Error-free transforms use mul_add.

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: e }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let e = a.mul_add(b, -p);
    Dd { hi: p, lo: e }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let e = b - (s - a);
    Dd { hi: s, lo: e }
}

impl Dd {
    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, other: Dd) -> Dd {
        let s = two_sum(self.hi, other.hi);
        let t = two_sum(self.lo, other.lo);
        let mut lo = s.lo + t.hi;
        let r = quick_two_sum(s.hi, lo);
        lo = t.lo + r.lo;
        quick_two_sum(r.hi, lo)
    }

    pub fn sub(self, other: Dd) -> Dd {
        self.add(Dd {
            hi: -other.hi,
            lo: -other.lo,
        })
    }

    pub fn mul(self, other: Dd) -> Dd {
        let p = two_prod(self.hi, other.hi);
        let lo = p.lo + self.hi * other.lo + self.lo * other.hi;
        quick_two_sum(p.hi, lo)
    }

    pub fn scale(self, c: f64) -> Dd {
        self.mul(Dd::from(c))
    }

    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul(Dd::from(q1)));
        let q2 = r.hi / other.hi;
        let r2 = r.sub(other.mul(Dd::from(q2)));
        let q3 = r2.hi / other.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 {
            return Dd::default();
        }
        let y = Dd::from(self.hi.sqrt());
        // one Newton step: y + (a - y^2) / (2y)
        let r = self.sub(y.mul(y));
        y.add(r.div(y.scale(2.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_keeps_cancelled_bits() {
        // (1 + 2^-60) - 1 is lost in f64 but survives in double-double
        let tiny = (2.0f64).powi(-60);
        let x = Dd::from(1.0).add(Dd::from(tiny));
        let diff = x.sub(Dd::from(1.0));
        assert_eq!(diff.value(), tiny);
    }

    #[test]
    fn mul_matches_exact_small_integers() {
        let a = Dd::from(3.0).mul(Dd::from(7.0));
        assert_eq!(a.value(), 21.0);
        // product error term is captured: (1 + 2^-30)^2 = 1 + 2^-29 + 2^-60
        let x = Dd::from(1.0).add(Dd::from((2.0f64).powi(-30)));
        let sq = x.mul(x);
        let expect_lo = (2.0f64).powi(-60);
        let back = sq.sub(Dd::from(1.0)).sub(Dd::from((2.0f64).powi(-29)));
        assert!((back.value() - expect_lo).abs() < 1e-25);
    }

    #[test]
    fn div_and_sqrt_refine_beyond_f64() {
        let third = Dd::from(1.0).div(Dd::from(3.0));
        let three_thirds = third.scale(3.0);
        assert!((three_thirds.sub(Dd::from(1.0)).value()).abs() < 1e-30);

        let two = Dd::from(2.0);
        let r = two.sqrt();
        let err = r.mul(r).sub(two).value().abs();
        assert!(err < 1e-30, "sqrt(2)^2 off by {err}");
    }
}
