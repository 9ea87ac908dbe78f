//! Quadrature rules on reference simplices.
//!
//! Points are stored in barycentric coordinates (`dim + 1` entries, the
//! remainder of the fixed-size array unused) with weights that sum to one;
//! integrals are obtained by scaling with the element volume. With linear
//! shape functions the stress integrand is element-wise constant, so the
//! one-point and the degree-2 rules give numerically identical stiffness
//! contributions; the degree-2 rule is the default and keeps load terms with
//! spatially varying coefficients exact to quadratic order.

use serde::Deserialize;

/// Which rule to integrate element contributions with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Single centroid point, exact for affine integrands.
    OnePoint,
    /// Degree-2 rule: 3 points on triangles, 4 points on tetrahedra.
    #[default]
    Standard,
}

/// One quadrature point: barycentric coordinates plus weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub barycentric: [f64; 4],
    pub weight: f64,
}

impl QuadratureRule {
    /// Quadrature points for a simplex of the given dimension.
    pub fn points(&self, dim: usize) -> Vec<QuadPoint> {
        match (self, dim) {
            (QuadratureRule::OnePoint, 2) => {
                let c = 1.0 / 3.0;
                vec![QuadPoint { barycentric: [c, c, c, 0.0], weight: 1.0 }]
            }
            (QuadratureRule::OnePoint, 3) => {
                vec![QuadPoint { barycentric: [0.25, 0.25, 0.25, 0.25], weight: 1.0 }]
            }
            (QuadratureRule::Standard, 2) => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                let w = 1.0 / 3.0;
                vec![
                    QuadPoint { barycentric: [a, b, b, 0.0], weight: w },
                    QuadPoint { barycentric: [b, a, b, 0.0], weight: w },
                    QuadPoint { barycentric: [b, b, a, 0.0], weight: w },
                ]
            }
            (QuadratureRule::Standard, 3) => {
                // Classic degree-2 rule with points at
                // (5 + 3 sqrt(5))/20 and (5 - sqrt(5))/20.
                let a = 0.585_410_196_624_968_5;
                let b = 0.138_196_601_125_010_5;
                let w = 0.25;
                vec![
                    QuadPoint { barycentric: [a, b, b, b], weight: w },
                    QuadPoint { barycentric: [b, a, b, b], weight: w },
                    QuadPoint { barycentric: [b, b, a, b], weight: w },
                    QuadPoint { barycentric: [b, b, b, a], weight: w },
                ]
            }
            _ => unreachable!("dimension is 2 or 3"),
        }
    }
}
