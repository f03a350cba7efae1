//! Numerical integration on reference simplices and on mesh faces.
//!
//! Rules are collapsed tensor-product Gauss-Legendre rules (Duffy map). The
//! simplex Jacobian of the collapse is kept inside the weight, with the
//! per-direction point counts raised so the full integrand stays polynomial;
//! this yields strictly positive weights and prescribed exactness at any
//! degree, from one rule family.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Quadrature rule on the reference simplex of dimension `dim`.
///
/// Points are stored in barycentric coordinates (`dim + 1` entries used);
/// weights sum to the reference volume `1/dim!`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub dim: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Cartesian coordinates of point `i` on the reference simplex
    /// (vertex 0 at the origin, vertex `k` at `e_k`).
    pub fn point_cartesian(&self, i: usize) -> [f64; 3] {
        let b = &self.points[i];
        [b[1], b[2], b[3]]
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the point counts used here (n <= 12 at degree 20).
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n and derivative by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { p1 } else { p1 };
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Newton was seeded from the large-x end; sort ascending for determinism.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    let nodes_sorted: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
    let weights_sorted: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    (nodes_sorted, weights_sorted)
}

/// Rule on the reference simplex exact for all polynomials of total degree
/// `degree`.
pub fn simplex_rule(dim: usize, degree: usize) -> Result<QuadRule> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dim {dim} not in 1..=3")));
    }
    if degree > 20 {
        return Err(Error::InvalidParameter(format!(
            "quadrature degree {degree} exceeds the supported maximum 20"
        )));
    }
    let pts_for = |extra: usize| (degree + extra) / 2 + 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match dim {
        1 => {
            let (xa, wa) = gauss_legendre(pts_for(0));
            for (&a, &w) in xa.iter().zip(&wa) {
                let x = 0.5 * (1.0 + a);
                points.push([1.0 - x, x, 0.0, 0.0]);
                weights.push(w * 0.5);
            }
        }
        2 => {
            let (xa, wa) = gauss_legendre(pts_for(0));
            let (xb, wb) = gauss_legendre(pts_for(1));
            for (&b, &vb) in xb.iter().zip(&wb) {
                for (&a, &va) in xa.iter().zip(&wa) {
                    let x = (1.0 + a) * (1.0 - b) / 4.0;
                    let y = (1.0 + b) / 2.0;
                    points.push([1.0 - x - y, x, y, 0.0]);
                    weights.push(va * vb * (1.0 - b) / 8.0);
                }
            }
        }
        3 => {
            let (xa, wa) = gauss_legendre(pts_for(0));
            let (xb, wb) = gauss_legendre(pts_for(1));
            let (xc, wc) = gauss_legendre(pts_for(2));
            for (&c, &vc) in xc.iter().zip(&wc) {
                for (&b, &vb) in xb.iter().zip(&wb) {
                    for (&a, &va) in xa.iter().zip(&wa) {
                        let x = (1.0 + a) * (1.0 - b) * (1.0 - c) / 8.0;
                        let y = (1.0 + b) * (1.0 - c) / 4.0;
                        let z = (1.0 + c) / 2.0;
                        points.push([1.0 - x - y - z, x, y, z]);
                        weights.push(va * vb * vc * (1.0 - b) * (1.0 - c) * (1.0 - c) / 64.0);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(QuadRule {
        dim,
        points,
        weights,
        exact_degree: degree,
    })
}

/// Maps a reference rule onto a mesh element: physical points plus weights
/// scaled by `|det J|`.
pub fn map_to_element(
    rule: &QuadRule,
    mesh: &Mesh,
    element: usize,
) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
    assert_eq!(rule.dim, mesh.dim());
    let det = mesh.jacobian_det(element);
    let h = mesh.element_diameter(element);
    if det.abs() <= 1e-14 * h.powi(mesh.dim() as i32).max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateElement {
            element,
            volume: det.abs(),
        });
    }
    let verts = mesh.element_vertices(element);
    let mut points = Vec::with_capacity(rule.len());
    let mut weights = Vec::with_capacity(rule.len());
    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
        let mut p = [0.0; 3];
        for (local, v) in verts.iter().enumerate() {
            for d in 0..3 {
                p[d] += bary[local] * v[d];
            }
        }
        points.push(p);
        weights.push(w * det.abs());
    }
    Ok((points, weights))
}

/// Quadrature on a mesh face: physical points, weights scaled by the face
/// measure, and the face's unit normal (plus-to-minus orientation).
pub fn face_rule_and_map(
    mesh: &Mesh,
    face: usize,
    degree: usize,
) -> Result<(Vec<[f64; 3]>, Vec<f64>, [f64; 3])> {
    let f = mesh.face(face);
    let normal = f.normal;
    let verts = mesh.face_vertices(face);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match mesh.dim() {
        2 => {
            let (xa, wa) = gauss_legendre(degree / 2 + 1);
            let (p0, p1) = (verts[0], verts[1]);
            for (&a, &w) in xa.iter().zip(&wa) {
                let t = 0.5 * (1.0 + a);
                points.push([
                    p0[0] + t * (p1[0] - p0[0]),
                    p0[1] + t * (p1[1] - p0[1]),
                    0.0,
                ]);
                weights.push(w * 0.5 * f.measure);
            }
        }
        3 => {
            let tri = simplex_rule(2, degree)?;
            for (bary, &w) in tri.points.iter().zip(&tri.weights) {
                let mut p = [0.0; 3];
                for (local, v) in verts.iter().enumerate() {
                    for d in 0..3 {
                        p[d] += bary[local] * v[d];
                    }
                }
                points.push(p);
                // reference triangle has measure 1/2
                weights.push(w * 2.0 * f.measure);
            }
        }
        _ => unreachable!(),
    }
    Ok((points, weights, normal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh;
    use approx::assert_abs_diff_eq;

    /// Exact integral of x^a y^b z^c over the unit simplex of dimension d:
    /// a! b! c! / (a + b + c + d)!.
    fn exact_monomial(dim: usize, e: [usize; 3]) -> f64 {
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(e[0]) * fact(e[1]) * fact(e[2]) / fact(e[0] + e[1] + e[2] + dim)
    }

    fn integrate(rule: &QuadRule, e: [usize; 3]) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(b, &w)| {
                w * b[1].powi(e[0] as i32) * b[2].powi(e[1] as i32) * b[3].powi(e[2] as i32)
            })
            .sum()
    }

    #[test]
    fn gauss_legendre_basics() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            // exactness up to degree 2n-1
            for d in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(d as i32)).sum();
                let want = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
                assert_abs_diff_eq!(got, want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn weights_positive_and_sum_to_reference_volume() {
        for dim in 1..=3 {
            for degree in 0..=20 {
                let rule = simplex_rule(dim, degree).unwrap();
                assert!(rule.weights.iter().all(|&w| w > 0.0));
                let volume = 1.0 / (1..=dim).map(|k| k as f64).product::<f64>();
                assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), volume, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn triangle_constant_and_x2y2() {
        let rule = simplex_rule(2, 4).unwrap();
        assert_abs_diff_eq!(integrate(&rule, [0, 0, 0]), 0.5, epsilon = 1e-14);
        // 2! 2! / 6! = 1/180
        assert_abs_diff_eq!(integrate(&rule, [2, 2, 0]), 1.0 / 180.0, epsilon = 1e-15);
    }

    #[test]
    fn exhaustive_monomial_sweep() {
        // every monomial up to the requested degree, all dims
        for dim in 1..=3usize {
            for degree in [2usize, 6, 11] {
                let rule = simplex_rule(dim, degree).unwrap();
                for a in 0..=degree {
                    for b in 0..=(if dim >= 2 { degree - a } else { 0 }) {
                        for c in 0..=(if dim == 3 { degree - a - b } else { 0 }) {
                            let e = [a, b, c];
                            assert_abs_diff_eq!(
                                integrate(&rule, e),
                                exact_monomial(dim, e),
                                epsilon = 1e-13
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_degree_over_20() {
        assert!(simplex_rule(2, 21).is_err());
    }

    #[test]
    fn mapped_rule_scales_by_jacobian() {
        // triangle (0,0),(2,0),(0,2): |det J| = 4
        let m = mesh::Mesh::from_raw(
            2,
            vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            vec![[0, 1, 2, usize::MAX]],
        )
        .unwrap();
        let rule = simplex_rule(2, 3).unwrap();
        let (_, w) = map_to_element(&rule, &m, 0).unwrap();
        let sum: f64 = w.iter().sum();
        assert_abs_diff_eq!(sum, 2.0, epsilon = 1e-13); // area
        for (a, b) in w.iter().zip(&rule.weights) {
            assert_abs_diff_eq!(*a, 4.0 * b, epsilon = 1e-14);
        }
    }

    #[test]
    fn mapped_centroid_oracle() {
        // integral of x over an affine triangle equals area * centroid_x
        let verts = [[0.3, -0.2, 0.0], [1.7, 0.4, 0.0], [0.9, 2.1, 0.0]];
        let m = mesh::Mesh::from_raw(2, verts.to_vec(), vec![[0, 1, 2, usize::MAX]]).unwrap();
        let rule = simplex_rule(2, 2).unwrap();
        let (p, w) = map_to_element(&rule, &m, 0).unwrap();
        let got: f64 = p.iter().zip(&w).map(|(p, &w)| w * p[0]).sum();
        let area = m.element_volume(0);
        let cx = (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0;
        assert_abs_diff_eq!(got, area * cx, epsilon = 1e-13);
    }

    #[test]
    fn face_rules_basic() {
        // unit edge and a 3-4-5 edge
        let m = mesh::Mesh::from_raw(
            2,
            vec![[0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [-1.0, 1.0, 0.0]],
            vec![[0, 1, 2, usize::MAX]],
        )
        .unwrap();
        let fid = (0..m.n_faces())
            .find(|&f| {
                let vs = m.face_vertices(f);
                vs.iter().any(|v| v[0] == 3.0)
                    && vs.iter().any(|v| v[0] == 0.0 && v[1] == 0.0)
            })
            .unwrap();
        let (_, w, n) = face_rule_and_map(&m, fid, 4).unwrap();
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 5.0, epsilon = 1e-13);
        assert_abs_diff_eq!(n[0] * n[0] + n[1] * n[1], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn face_line_integral_oracle() {
        // x^2 on the edge (0,0)-(1,1): parametrize (t,t), ds = sqrt(2) dt
        let m = mesh::Mesh::from_raw(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
            vec![[0, 2, 1, usize::MAX]],
        )
        .unwrap();
        let fid = (0..m.n_faces())
            .find(|&f| {
                let vs = m.face_vertices(f);
                vs.iter().all(|v| (v[0] - v[1]).abs() < 1e-14)
            })
            .unwrap();
        let (p, w, _) = face_rule_and_map(&m, fid, 4).unwrap();
        let got: f64 = p.iter().zip(&w).map(|(p, &w)| w * p[0] * p[0]).sum();
        let want = std::f64::consts::SQRT_2 / 3.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-13);
    }
}
