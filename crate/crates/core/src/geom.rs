//! Small fixed-size vector/tensor types used throughout the solvers.

use crate::float;
use core::ops::{Add, Mul, Neg, Sub};

/// 2D point or vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        float::hypot2(self.x, self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        float::hypot2(self.x - o.x, self.y - o.y)
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

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Symmetric 2x2 tensor (strains and stresses).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, yy: 0.0, xy: 0.0 };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Sym2 { xx, yy, xy }
    }

    pub fn identity() -> Self {
        Sym2::new(1.0, 1.0, 0.0)
    }

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    /// Full double contraction `self : other`.
    pub fn ddot(self, o: Sym2) -> f64 {
        self.xx * o.xx + self.yy * o.yy + 2.0 * self.xy * o.xy
    }

    /// Matrix-vector product.
    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    pub fn scale(self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.yy * s, self.xy * s)
    }

    /// Eigen decomposition. Returns eigenvalues `(d1, d2)` with `d1 >= d2`
    /// and the orthonormal eigenvector matrix `Q = [q1 | q2]` as columns.
    ///
    /// For (numerically) repeated eigenvalues the eigenvectors fall back to
    /// the coordinate axes; the spectral split is basis-independent there.
    pub fn eigen(self) -> ([f64; 2], [Vec2; 2]) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = float::hypot2(half_diff, self.xy);
        let scale = self.xx.abs().max(self.yy.abs()).max(self.xy.abs());
        if radius <= 1e-14 * scale.max(1e-300) {
            return ([mean, mean], [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]);
        }
        let d1 = mean + radius;
        let d2 = mean - radius;
        // Eigenvector for d1: pick the numerically stable column.
        let q1 = if half_diff >= 0.0 {
            Vec2::new(half_diff + radius, self.xy)
        } else {
            Vec2::new(self.xy, radius - half_diff)
        };
        let n = q1.norm();
        let q1 = Vec2::new(q1.x / n, q1.y / n);
        let q2 = Vec2::new(-q1.y, q1.x);
        ([d1, d2], [q1, q2])
    }

    /// Rank-one symmetric tensor `v v^T` scaled by `s`.
    pub fn outer(v: Vec2, s: f64) -> Sym2 {
        Sym2::new(s * v.x * v.x, s * v.y * v.y, s * v.x * v.y)
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.yy + o.yy, self.xy + o.xy)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.yy - o.yy, self.xy - o.xy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_diagonal() {
        let ([d1, d2], [q1, q2]) = Sym2::new(2.0, -1.0, 0.0).eigen();
        assert_eq!(d1, 2.0);
        assert_eq!(d2, -1.0);
        assert!((q1.dot(q2)).abs() < 1e-15);
        assert!((q1.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_shear() {
        let e = Sym2::new(0.0, 0.0, 1.0);
        let ([d1, d2], [q1, q2]) = e.eigen();
        assert!((d1 - 1.0).abs() < 1e-15);
        assert!((d2 + 1.0).abs() < 1e-15);
        // Reconstruction d1 q1 q1^T + d2 q2 q2^T = E.
        let rec = Sym2::outer(q1, d1) + Sym2::outer(q2, d2);
        assert!((rec.xx - e.xx).abs() < 1e-14);
        assert!((rec.yy - e.yy).abs() < 1e-14);
        assert!((rec.xy - e.xy).abs() < 1e-14);
    }

    #[test]
    fn eigen_repeated() {
        let ([d1, d2], [q1, q2]) = Sym2::new(3.0, 3.0, 0.0).eigen();
        assert_eq!(d1, 3.0);
        assert_eq!(d2, 3.0);
        assert_eq!(q1, Vec2::new(1.0, 0.0));
        assert_eq!(q2, Vec2::new(0.0, 1.0));
    }
}
