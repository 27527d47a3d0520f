//! Tensor Gauss-Legendre quadrature on the reference cell `[0,1]^2`.

use alloc::vec::Vec;

/// Gauss-Legendre abscissae/weights on `[-1, 1]`, exact through degree `2n-1`.
fn gauss_m11(n: usize) -> &'static [(f64, f64)] {
    match n {
        1 => &[(0.0, 2.0)],
        2 => &[
            (-0.5773502691896257, 1.0),
            (0.5773502691896257, 1.0),
        ],
        3 => &[
            (-0.7745966692414834, 0.5555555555555556),
            (0.0, 0.8888888888888888),
            (0.7745966692414834, 0.5555555555555556),
        ],
        4 => &[
            (-0.8611363115940526, 0.3478548451374538),
            (-0.3399810435848563, 0.6521451548625461),
            (0.3399810435848563, 0.6521451548625461),
            (0.8611363115940526, 0.3478548451374538),
        ],
        5 => &[
            (-0.9061798459386640, 0.2369268850561891),
            (-0.5384693101056831, 0.4786286704993665),
            (0.0, 0.5688888888888889),
            (0.5384693101056831, 0.4786286704993665),
            (0.9061798459386640, 0.2369268850561891),
        ],
        6 => &[
            (-0.9324695142031521, 0.1713244923791704),
            (-0.6612093864662645, 0.3607615730481386),
            (-0.2386191860831969, 0.4679139345726910),
            (0.2386191860831969, 0.4679139345726910),
            (0.6612093864662645, 0.3607615730481386),
            (0.9324695142031521, 0.1713244923791704),
        ],
        7 => &[
            (-0.9491079123427585, 0.1294849661688697),
            (-0.7415311855993945, 0.2797053914892766),
            (-0.4058451513773972, 0.3818300505051189),
            (0.0, 0.4179591836734694),
            (0.4058451513773972, 0.3818300505051189),
            (0.7415311855993945, 0.2797053914892766),
            (0.9491079123427585, 0.1294849661688697),
        ],
        8 => &[
            (-0.9602898564975363, 0.1012285362903763),
            (-0.7966664774136267, 0.2223810344533745),
            (-0.5255324099163290, 0.3137066458778873),
            (-0.1834346424956498, 0.3626837833783620),
            (0.1834346424956498, 0.3626837833783620),
            (0.5255324099163290, 0.3137066458778873),
            (0.7966664774136267, 0.2223810344533745),
            (0.9602898564975363, 0.1012285362903763),
        ],
        _ => panic!("unsupported Gauss order {n}"),
    }
}

/// Nodes and weights on `[0, 1]`; weights sum to 1.
pub fn gauss_01(n: usize) -> Vec<(f64, f64)> {
    gauss_m11(n)
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Tensor product rule on the reference square `[0,1]^2`.
#[derive(Debug, Clone)]
pub struct CellRule {
    /// `(xi, eta, weight)`; weights sum to 1.
    pub points: Vec<(f64, f64, f64)>,
    pub order: usize,
}

impl CellRule {
    pub fn tensor(n: usize) -> Self {
        let g = gauss_01(n);
        let mut points = Vec::with_capacity(n * n);
        for &(eta, wy) in &g {
            for &(xi, wx) in &g {
                points.push((xi, eta, wx * wy));
            }
        }
        CellRule { points, order: n }
    }
}
