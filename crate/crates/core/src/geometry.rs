//! Exact 2×2 linear algebra and the projective line.
//!
//! Directions live on RP¹ and are stored as angles in `[0, π)`. The one-step
//! cocycle quantities are the transport `G(v) = Mv/|Mv|` and its fiber
//! derivative `g(v) = |det M| / |Mv|²`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on `|det|` below which a matrix is treated as singular.
pub const DET_FLOOR: f64 = 1e-300;
/// Relative gap between singular values below which a matrix is conformal.
pub const CONFORMAL_TOL: f64 = 1e-12;
/// Relative tolerance on the discriminant used by [`classify_linear`].
pub const DISCRIMINANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }

    /// Direction spanned by this vector; `None` for the zero vector.
    pub fn direction(self) -> Option<Direction> {
        if self.x == 0.0 && self.y == 0.0 || !self.is_finite() {
            None
        } else {
            Some(Direction::new(self.y.atan2(self.x)))
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Row-major 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub const fn diag(p: f64, q: f64) -> Self {
        Self::new(p, 0.0, 0.0, q)
    }

    pub const fn scalar(s: f64) -> Self {
        Self::diag(s, s)
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Fails with `SingularMatrix` when `|det|` is below [`DET_FLOOR`].
    pub fn check_invertible(&self) -> Result<f64> {
        let det = self.det();
        if !self.is_finite() || !(det.abs() >= DET_FLOOR) {
            return Err(Error::SingularMatrix { det });
        }
        Ok(det)
    }

    pub fn inverse(&self) -> Result<Mat2> {
        let det = self.check_invertible()?;
        Ok(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Eigenvalues ordered by decreasing modulus.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.det();
        if disc >= 0.0 {
            let r = disc.sqrt();
            // Avoid cancellation in the smaller root.
            let big = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
            let small = if big != 0.0 { self.det() / big } else { 0.0 };
            [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
        } else {
            let im = (-disc).sqrt();
            [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
        }
    }

    /// Eigendirection for a real eigenvalue `lambda`.
    pub fn eigendirection(&self, lambda: f64) -> Option<Direction> {
        // Rows of (M - λI); take the better-conditioned one.
        let r1 = Vec2::new(self.a - lambda, self.b);
        let r2 = Vec2::new(self.c, self.d - lambda);
        let row = if r1.norm() >= r2.norm() { r1 } else { r2 };
        if row.norm() == 0.0 {
            return None;
        }
        Vec2::new(-row.y, row.x).direction()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

/// A point of RP¹, stored as an angle in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Direction(f64);

impl Direction {
    pub const HORIZONTAL: Direction = Direction(0.0);
    pub const VERTICAL: Direction = Direction(PI / 2.0);

    pub fn new(theta: f64) -> Self {
        let mut t = theta.rem_euclid(PI);
        if t >= PI {
            t = 0.0;
        }
        Direction(t)
    }

    pub fn theta(self) -> f64 {
        self.0
    }

    pub fn unit(self) -> Vec2 {
        let (s, c) = self.0.sin_cos();
        Vec2::new(c, s)
    }

    pub fn perp(self) -> Direction {
        Direction::new(self.0 + PI / 2.0)
    }

    pub fn rotated(self, delta: f64) -> Direction {
        Direction::new(self.0 + delta)
    }

    /// RP¹ distance, in `[0, π/2]`.
    pub fn distance(self, other: Direction) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(PI - d)
    }

    /// Signed shortest offset from `self` to `other`, in `(-π/2, π/2]`.
    pub fn offset_to(self, other: Direction) -> f64 {
        let mut d = other.0 - self.0;
        if d > PI / 2.0 {
            d -= PI;
        } else if d <= -PI / 2.0 {
            d += PI;
        }
        d
    }
}

/// `|tan ∠(u, v)|` measured with the RP¹ distance.
pub fn slope(u: Direction, v: Direction) -> f64 {
    u.distance(v).tan().abs()
}

/// Characteristic directions of an invertible, non-conformal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularPair {
    /// Most contracted direction.
    pub e: Direction,
    /// Most expanded direction.
    pub f: Direction,
    pub g_e: f64,
    pub g_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinearClass {
    HyperbolicSaddle,
    NodeTwoRealEigen,
    Homothety,
    Elliptic,
    Parabolic,
}

/// One-step fiber derivative `|det M| / |M u|²`.
pub fn g_step(m: &Mat2, v: Direction) -> Result<f64> {
    let det = m.check_invertible()?;
    let mu = m.apply(v.unit());
    Ok(det.abs() / mu.dot(mu))
}

/// `ln g_step`, computed without forming the ratio.
pub fn log_g_step(m: &Mat2, v: Direction) -> Result<f64> {
    let det = m.check_invertible()?;
    let mu = m.apply(v.unit());
    Ok(det.abs().ln() - 2.0 * mu.norm().ln())
}

/// Projective transport `M u / |M u|`.
pub fn g_transport(m: &Mat2, v: Direction) -> Result<Direction> {
    m.check_invertible()?;
    let mu = m.apply(v.unit());
    mu.direction().ok_or(Error::SingularMatrix { det: m.det() })
}

/// Transport and fiber log-derivative in one pass.
pub fn step_cocycle(m: &Mat2, v: Direction) -> Result<(Direction, f64)> {
    let det = m.check_invertible()?;
    let mu = m.apply(v.unit());
    let dir = mu.direction().ok_or(Error::SingularMatrix { det })?;
    Ok((dir, det.abs().ln() - 2.0 * mu.norm().ln()))
}

/// Most expanded direction of `m` (right singular vector of the larger
/// singular value). Well conditioned even when `m` is numerically rank one.
pub fn most_expanded_direction(m: &Mat2) -> Direction {
    let p = m.a * m.a + m.c * m.c;
    let q = m.a * m.b + m.c * m.d;
    let r = m.b * m.b + m.d * m.d;
    Direction::new(0.5 * (2.0 * q).atan2(p - r))
}

pub fn singular_pair(m: &Mat2) -> Result<SingularPair> {
    let det = m.check_invertible()?;
    let p = m.a * m.a + m.c * m.c;
    let q = m.a * m.b + m.c * m.d;
    let r = m.b * m.b + m.d * m.d;
    let half_sum = 0.5 * (p + r);
    let rad = (0.5 * (p - r)).hypot(q);
    let s1_sq = half_sum + rad;
    let s1 = s1_sq.sqrt();
    let s2 = det.abs() / s1;
    if s1 - s2 <= CONFORMAL_TOL * s1 {
        return Err(Error::ConformalMatrix);
    }
    let f = Direction::new(0.5 * (2.0 * q).atan2(p - r));
    let g_e = s1_sq / det.abs();
    Ok(SingularPair {
        e: f.perp(),
        f,
        g_e,
        g_f: 1.0 / g_e,
    })
}

pub fn classify_linear(m: &Mat2) -> Result<LinearClass> {
    let det = m.check_invertible()?;
    let tr = m.trace();
    let disc = tr * tr - 4.0 * det;
    let scale = tr * tr + det.abs();
    let rel = disc / scale;
    let entry_scale = m.max_abs();
    let is_scalar = m.b.abs() <= DISCRIMINANT_TOL * entry_scale
        && m.c.abs() <= DISCRIMINANT_TOL * entry_scale
        && (m.a - m.d).abs() <= DISCRIMINANT_TOL * entry_scale;
    if is_scalar {
        return Ok(LinearClass::Homothety);
    }
    if rel.abs() <= DISCRIMINANT_TOL {
        return Ok(LinearClass::Parabolic);
    }
    if rel < 0.0 {
        return Ok(LinearClass::Elliptic);
    }
    let [big, small] = m.eigenvalues();
    if big.re.abs() > 1.0 && small.re.abs() < 1.0 {
        Ok(LinearClass::HyperbolicSaddle)
    } else {
        Ok(LinearClass::NodeTwoRealEigen)
    }
}
