//! Three-component momentum vectors and the parallel/perpendicular split.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A momentum (or momentum-like) vector in internal units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Momentum(pub [f64; 3]);

impl Momentum {
    pub const ZERO: Momentum = Momentum([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Momentum([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, o: &Momentum) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn cross(&self, o: &Momentum) -> Momentum {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Momentum([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Unit vector along `self`; fails for the zero vector.
    pub fn unit(&self) -> Result<Momentum> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateDirection("zero or non-finite vector has no direction"));
        }
        Ok(*self / n)
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{what} has non-finite components: {:?}", self.0)))
        }
    }
}

/// Splits `p` into its components parallel and perpendicular to `q`.
pub fn decompose(p: Momentum, q: Momentum) -> Result<(Momentum, Momentum)> {
    let q2 = q.norm2();
    if q2 == 0.0 {
        return Err(Error::DegenerateDirection("decompose requires a nonzero reference vector"));
    }
    let parallel = q * (p.dot(&q) / q2);
    Ok((parallel, p - parallel))
}

impl Index<usize> for Momentum {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for Momentum {
    type Output = Momentum;
    fn add(self, o: Momentum) -> Momentum {
        Momentum([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Momentum {
    type Output = Momentum;
    fn sub(self, o: Momentum) -> Momentum {
        Momentum([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for Momentum {
    type Output = Momentum;
    fn neg(self) -> Momentum {
        Momentum([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for Momentum {
    type Output = Momentum;
    fn mul(self, s: f64) -> Momentum {
        Momentum([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<Momentum> for f64 {
    type Output = Momentum;
    fn mul(self, p: Momentum) -> Momentum {
        p * self
    }
}

impl Div<f64> for Momentum {
    type Output = Momentum;
    fn div(self, s: f64) -> Momentum {
        Momentum([self.0[0] / s, self.0[1] / s, self.0[2] / s])
    }
}

impl AddAssign for Momentum {
    fn add_assign(&mut self, o: Momentum) {
        *self = *self + o;
    }
}

impl SubAssign for Momentum {
    fn sub_assign(&mut self, o: Momentum) {
        *self = *self - o;
    }
}

impl From<[f64; 3]> for Momentum {
    fn from(v: [f64; 3]) -> Self {
        Momentum(v)
    }
}
