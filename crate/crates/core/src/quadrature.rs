//! Gauss quadrature rules for facet and element integrals.
//!
//! Facet rules return physical-space points with weights that already
//! include the surface Jacobian, so integrals are plain weighted sums.
//! Triangle rules come from a Duffy-collapsed tensor grid, which keeps
//! all weights positive at every order.

use crate::geometry::{add, cross, norm, scale, sub, Point3};

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    match n {
        1 => (&[0.00000000000000000e+00], &[2.00000000000000000e+00]),
        2 => (&[-5.77350269189625731e-01, 5.77350269189625731e-01], &[1.00000000000000000e+00, 1.00000000000000000e+00]),
        3 => (&[-7.74596669241483404e-01, 0.00000000000000000e+00, 7.74596669241483404e-01], &[5.55555555555555691e-01, 8.88888888888888840e-01, 5.55555555555555691e-01]),
        4 => (&[-8.61136311594052573e-01, -3.39981043584856257e-01, 3.39981043584856257e-01, 8.61136311594052573e-01], &[3.47854845137453683e-01, 6.52145154862546206e-01, 6.52145154862546206e-01, 3.47854845137453683e-01]),
        5 => (&[-9.06179845938663964e-01, -5.38469310105683108e-01, 0.00000000000000000e+00, 5.38469310105683108e-01, 9.06179845938663964e-01], &[2.36926885056189418e-01, 4.78628670499366193e-01, 5.68888888888888999e-01, 4.78628670499366193e-01, 2.36926885056189418e-01]),
        6 => (&[-9.32469514203152050e-01, -6.61209386466264482e-01, -2.38619186083196932e-01, 2.38619186083196932e-01, 6.61209386466264482e-01, 9.32469514203152050e-01], &[1.71324492379169746e-01, 3.60761573048138939e-01, 4.67913934572691370e-01, 4.67913934572691370e-01, 3.60761573048138939e-01, 1.71324492379169746e-01]),
        7 => (&[-9.49107912342758486e-01, -7.41531185599394460e-01, -4.05845151377397184e-01, 0.00000000000000000e+00, 4.05845151377397184e-01, 7.41531185599394460e-01, 9.49107912342758486e-01], &[1.29484966168870647e-01, 2.79705391489276589e-01, 3.81830050505118312e-01, 4.17959183673468959e-01, 3.81830050505118312e-01, 2.79705391489276589e-01, 1.29484966168870647e-01]),
        8 => (&[-9.60289856497536176e-01, -7.96666477413626728e-01, -5.25532409916328991e-01, -1.83434642495649780e-01, 1.83434642495649780e-01, 5.25532409916328991e-01, 7.96666477413626728e-01, 9.60289856497536176e-01], &[1.01228536290376689e-01, 2.22381034453374343e-01, 3.13706645877887047e-01, 3.62683783378361768e-01, 3.62683783378361768e-01, 3.13706645877887047e-01, 2.22381034453374343e-01, 1.01228536290376689e-01]),
        _ => panic!("gauss_legendre: unsupported order {n} (supported 1..=8)"),
    }
}

/// One facet quadrature point: physical position, weight (with Jacobian),
/// and the shape function values of the facet's vertices at this point.
#[derive(Debug, Clone, Copy)]
pub struct FacetQp {
    pub point: Point3,
    pub weight: f64,
    pub shape: [f64; 4],
}

/// Quadrature points for a tri3 facet at the given order.
///
/// Duffy map of an order x order tensor Gauss grid from the unit square
/// onto the reference triangle; exact at least to polynomial degree
/// `order - 1` and weights are always positive.
pub fn tri_rule(verts: &[Point3; 3], order: usize) -> Vec<FacetQp> {
    let (x, w) = gauss_legendre(order);
    let e1 = sub(verts[1], verts[0]);
    let e2 = sub(verts[2], verts[0]);
    let area2 = norm(cross(e1, e2)); // twice the triangle area
    let mut out = Vec::with_capacity(order * order);
    for (i, &xi) in x.iter().enumerate() {
        let u = 0.5 * (xi + 1.0);
        for (j, &xj) in x.iter().enumerate() {
            let t = 0.5 * (xj + 1.0);
            // collapsed coordinates: (a, b) = (u, t(1-u)), jacobian (1-u)/4
            let a = u;
            let b = t * (1.0 - u);
            let jac = 0.25 * (1.0 - u);
            let weight = w[i] * w[j] * jac * area2;
            let l0 = 1.0 - a - b;
            let point = add(verts[0], add(scale(e1, a), scale(e2, b)));
            out.push(FacetQp {
                point,
                weight,
                shape: [l0, a, b, 0.0],
            });
        }
    }
    out
}

/// Quadrature points for a quad4 facet treated as a bilinear patch.
pub fn quad_rule(verts: &[Point3; 4], order: usize) -> Vec<FacetQp> {
    let (x, w) = gauss_legendre(order);
    let mut out = Vec::with_capacity(order * order);
    for (i, &xi) in x.iter().enumerate() {
        for (j, &eta) in x.iter().enumerate() {
            let shp = [
                0.25 * (1.0 - xi) * (1.0 - eta),
                0.25 * (1.0 + xi) * (1.0 - eta),
                0.25 * (1.0 + xi) * (1.0 + eta),
                0.25 * (1.0 - xi) * (1.0 + eta),
            ];
            let dxi = [
                -0.25 * (1.0 - eta),
                0.25 * (1.0 - eta),
                0.25 * (1.0 + eta),
                -0.25 * (1.0 + eta),
            ];
            let deta = [
                -0.25 * (1.0 - xi),
                -0.25 * (1.0 + xi),
                0.25 * (1.0 + xi),
                0.25 * (1.0 - xi),
            ];
            let mut point = [0.0; 3];
            let mut tx = [0.0; 3];
            let mut te = [0.0; 3];
            for a in 0..4 {
                for d in 0..3 {
                    point[d] += shp[a] * verts[a][d];
                    tx[d] += dxi[a] * verts[a][d];
                    te[d] += deta[a] * verts[a][d];
                }
            }
            let jac = norm(cross(tx, te));
            out.push(FacetQp {
                point,
                weight: w[i] * w[j] * jac,
                shape: shp,
            });
        }
    }
    out
}

/// 4-point tetrahedron rule, exact to degree 2; weights are fractions of
/// the element volume.
pub const TET4_POINTS: [[f64; 4]; 4] = {
    // barycentric coordinates (a, b, b, b) permuted
    const A: f64 = 0.585_410_196_624_968_5; // (5 + 3 sqrt 5)/20
    const B: f64 = 0.138_196_601_125_010_5; // (5 - sqrt 5)/20
    [
        [A, B, B, B],
        [B, A, B, B],
        [B, B, A, B],
        [B, B, B, A],
    ]
};
