//! Broken polynomial spaces: componentwise `P_k` velocity and `P_{k-1}`
//! pressure on every element, fully discontinuous, plus one scalar
//! multiplier dof that pins the pressure mean to zero.
//!
//! The scalar basis on the reference simplex is nodal Lagrange on the
//! equispaced lattice, represented in the monomial basis with coefficients
//! from an inverted Vandermonde matrix (degrees here stay <= 6, where this is
//! well conditioned). Physical gradients and Hessians come from the affine
//! map, so they are exact.

use std::sync::Arc;

use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Which variable a basis evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Velocity,
    Pressure,
}

/// Scalar Lagrange basis on the reference simplex.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub dim: usize,
    pub degree: usize,
    pub n_basis: usize,
    exponents: Vec<[usize; 3]>,
    /// Reference (cartesian) coordinates of the Lagrange nodes.
    pub nodes: Vec<[f64; 3]>,
    /// Column i holds the monomial coefficients of basis function i.
    coeffs: Vec<f64>,
}

/// Monomial exponents of total degree <= `degree`, graded lexicographic.
fn monomials(dim: usize, degree: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=degree {
        match dim {
            2 => {
                for a in (0..=total).rev() {
                    out.push([a, total - a, 0]);
                }
            }
            3 => {
                for a in (0..=total).rev() {
                    for b in (0..=(total - a)).rev() {
                        out.push([a, b, total - a - b]);
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    out
}

fn lattice_nodes(dim: usize, degree: usize) -> Vec<[f64; 3]> {
    if degree == 0 {
        let c = 1.0 / (dim as f64 + 1.0);
        return vec![if dim == 2 { [c, c, 0.0] } else { [c, c, c] }];
    }
    let k = degree as f64;
    let mut out = Vec::new();
    match dim {
        2 => {
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    out.push([a as f64 / k, b as f64 / k, 0.0]);
                }
            }
        }
        3 => {
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    for c in 0..=(degree - a - b) {
                        out.push([a as f64 / k, b as f64 / k, c as f64 / k]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

fn eval_monomial(e: [usize; 3], p: [f64; 3]) -> f64 {
    p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32)
}

fn eval_monomial_grad(e: [usize; 3], p: [f64; 3]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for d in 0..3 {
        if e[d] > 0 {
            let mut de = e;
            de[d] -= 1;
            g[d] = e[d] as f64 * eval_monomial(de, p);
        }
    }
    g
}

fn eval_monomial_hess(e: [usize; 3], p: [f64; 3]) -> [[f64; 3]; 3] {
    let mut h = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let mut de = e;
            let coef;
            if a == b {
                if e[a] < 2 {
                    continue;
                }
                coef = (e[a] * (e[a] - 1)) as f64;
                de[a] -= 2;
            } else {
                if e[a] == 0 || e[b] == 0 {
                    continue;
                }
                coef = (e[a] * e[b]) as f64;
                de[a] -= 1;
                de[b] -= 1;
            }
            let v = coef * eval_monomial(de, p);
            h[a][b] = v;
            h[b][a] = v;
        }
    }
    h
}

impl ReferenceBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let exponents = monomials(dim, degree);
        let nodes = lattice_nodes(dim, degree);
        let n = exponents.len();
        assert_eq!(nodes.len(), n);
        let mut v = faer::Mat::<f64>::zeros(n, n);
        for (m, &node) in nodes.iter().enumerate() {
            for (j, &e) in exponents.iter().enumerate() {
                v[(m, j)] = eval_monomial(e, node);
            }
        }
        let lu = v.partial_piv_lu();
        let inv = lu.solve(faer::Mat::<f64>::identity(n, n));
        let mut coeffs = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                // coeffs[mono j][basis i]
                coeffs[j * n + i] = inv[(j, i)];
            }
        }
        ReferenceBasis {
            dim,
            degree,
            n_basis: n,
            exponents,
            nodes,
            coeffs,
        }
    }

    fn coeff(&self, mono: usize, basis: usize) -> f64 {
        self.coeffs[mono * self.n_basis + basis]
    }

    /// Values of every basis function at reference points,
    /// laid out `[basis][point]`.
    pub fn values(&self, points: &[[f64; 3]]) -> Vec<f64> {
        let n = self.n_basis;
        let np = points.len();
        let mut out = vec![0.0; n * np];
        for (q, &p) in points.iter().enumerate() {
            for (j, &e) in self.exponents.iter().enumerate() {
                let m = eval_monomial(e, p);
                for i in 0..n {
                    out[i * np + q] += self.coeff(j, i) * m;
                }
            }
        }
        out
    }

    /// Reference-coordinate gradients, laid out `[basis][point][3]`.
    pub fn gradients(&self, points: &[[f64; 3]]) -> Vec<f64> {
        let n = self.n_basis;
        let np = points.len();
        let mut out = vec![0.0; n * np * 3];
        for (q, &p) in points.iter().enumerate() {
            for (j, &e) in self.exponents.iter().enumerate() {
                let g = eval_monomial_grad(e, p);
                for i in 0..n {
                    let c = self.coeff(j, i);
                    let base = (i * np + q) * 3;
                    out[base] += c * g[0];
                    out[base + 1] += c * g[1];
                    out[base + 2] += c * g[2];
                }
            }
        }
        out
    }

    /// Reference-coordinate Hessians, `[basis][point][3][3]` flattened.
    pub fn hessians(&self, points: &[[f64; 3]]) -> Vec<f64> {
        let n = self.n_basis;
        let np = points.len();
        let mut out = vec![0.0; n * np * 9];
        for (q, &p) in points.iter().enumerate() {
            for (j, &e) in self.exponents.iter().enumerate() {
                let h = eval_monomial_hess(e, p);
                for i in 0..n {
                    let c = self.coeff(j, i);
                    let base = (i * np + q) * 9;
                    for a in 0..3 {
                        for b in 0..3 {
                            out[base + 3 * a + b] += c * h[a][b];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Basis values and physical-space gradients at a set of points.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub n_basis: usize,
    pub n_points: usize,
    values: Vec<f64>,
    gradients: Vec<f64>,
}

impl BasisEval {
    pub fn value(&self, basis: usize, point: usize) -> f64 {
        self.values[basis * self.n_points + point]
    }

    pub fn gradient(&self, basis: usize, point: usize) -> [f64; 3] {
        let b = (basis * self.n_points + point) * 3;
        [
            self.gradients[b],
            self.gradients[b + 1],
            self.gradients[b + 2],
        ]
    }
}

/// Per-basis physical Hessians at a set of points.
#[derive(Debug, Clone)]
pub struct BasisHessians {
    pub n_basis: usize,
    pub n_points: usize,
    data: Vec<f64>,
}

impl BasisHessians {
    pub fn hessian(&self, basis: usize, point: usize) -> [[f64; 3]; 3] {
        let b = (basis * self.n_points + point) * 9;
        let mut h = [[0.0; 3]; 3];
        for a in 0..3 {
            for c in 0..3 {
                h[a][c] = self.data[b + 3 * a + c];
            }
        }
        h
    }

    pub fn laplacian(&self, basis: usize, point: usize) -> f64 {
        let b = (basis * self.n_points + point) * 9;
        self.data[b] + self.data[b + 4] + self.data[b + 8]
    }
}

/// Dof layout of the broken velocity/pressure pair on a mesh.
#[derive(Clone)]
pub struct DgSpace {
    mesh: Arc<Mesh>,
    k: usize,
    vel_basis: ReferenceBasis,
    pre_basis: ReferenceBasis,
}

impl DgSpace {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<Mesh> {
        self.mesh.clone()
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// Scalar velocity basis functions per element.
    pub fn n_vel_local(&self) -> usize {
        self.vel_basis.n_basis
    }

    pub fn n_pre_local(&self) -> usize {
        self.pre_basis.n_basis
    }

    pub fn n_vel_dofs(&self) -> usize {
        self.mesh.n_elements() * self.dim() * self.n_vel_local()
    }

    pub fn n_pre_dofs(&self) -> usize {
        self.mesh.n_elements() * self.n_pre_local()
    }

    /// Total system size including the pressure-mean multiplier.
    pub fn n_total_dofs(&self) -> usize {
        self.n_vel_dofs() + self.n_pre_dofs() + 1
    }

    /// Global dof of (element, velocity component, local basis).
    /// Element-major, then component, then local index.
    pub fn vel_dof(&self, element: usize, comp: usize, local: usize) -> usize {
        debug_assert!(comp < self.dim() && local < self.n_vel_local());
        (element * self.dim() + comp) * self.n_vel_local() + local
    }

    pub fn pre_dof(&self, element: usize, local: usize) -> usize {
        debug_assert!(local < self.n_pre_local());
        self.n_vel_dofs() + element * self.n_pre_local() + local
    }

    pub fn multiplier_dof(&self) -> usize {
        self.n_vel_dofs() + self.n_pre_dofs()
    }

    pub fn reference_basis(&self, field: Field) -> &ReferenceBasis {
        match field {
            Field::Velocity => &self.vel_basis,
            Field::Pressure => &self.pre_basis,
        }
    }

    /// Evaluates the scalar basis at physical points inside the element.
    pub fn eval_basis(&self, element: usize, points: &[[f64; 3]], field: Field) -> BasisEval {
        let refc: Vec<[f64; 3]> = points
            .iter()
            .map(|&p| self.mesh.to_reference(element, p))
            .collect();
        self.eval_basis_ref(element, &refc, field)
    }

    /// Same as [`DgSpace::eval_basis`] with points already in reference
    /// coordinates of the element.
    pub fn eval_basis_ref(
        &self,
        element: usize,
        ref_points: &[[f64; 3]],
        field: Field,
    ) -> BasisEval {
        let basis = self.reference_basis(field);
        let values = basis.values(ref_points);
        let ref_grads = basis.gradients(ref_points);
        let gradients = self.push_gradients(element, basis.n_basis, ref_points.len(), &ref_grads);
        BasisEval {
            n_basis: basis.n_basis,
            n_points: ref_points.len(),
            values,
            gradients,
        }
    }

    /// Assembly fast path: reference values/gradients tabulated once per
    /// rule, with only the gradient push-forward done per element.
    pub(crate) fn eval_from_tables(
        &self,
        element: usize,
        values: &[f64],
        ref_grads: &[f64],
        n_points: usize,
        field: Field,
    ) -> BasisEval {
        let n_basis = self.reference_basis(field).n_basis;
        let gradients = self.push_gradients(element, n_basis, n_points, ref_grads);
        BasisEval {
            n_basis,
            n_points,
            values: values.to_vec(),
            gradients,
        }
    }

    fn push_gradients(
        &self,
        element: usize,
        n_basis: usize,
        n_points: usize,
        ref_grads: &[f64],
    ) -> Vec<f64> {
        let jt = self.mesh.grad_map(element); // J^{-T}
        let d = self.dim();
        let mut out = vec![0.0; n_basis * n_points * 3];
        for i in 0..n_basis {
            for q in 0..n_points {
                let b = (i * n_points + q) * 3;
                for r in 0..d {
                    let mut acc = 0.0;
                    for c in 0..d {
                        acc += jt[r][c] * ref_grads[b + c];
                    }
                    out[b + r] = acc;
                }
            }
        }
        out
    }

    /// Physical Hessians of the velocity basis at physical points.
    pub fn second_derivatives(&self, element: usize, points: &[[f64; 3]]) -> BasisHessians {
        let refc: Vec<[f64; 3]> = points
            .iter()
            .map(|&p| self.mesh.to_reference(element, p))
            .collect();
        self.second_derivatives_ref(element, &refc)
    }

    pub fn second_derivatives_ref(
        &self,
        element: usize,
        ref_points: &[[f64; 3]],
    ) -> BasisHessians {
        let basis = &self.vel_basis;
        let ref_hess = basis.hessians(ref_points);
        let jt = self.mesh.grad_map(element);
        let d = self.dim();
        let np = ref_points.len();
        let mut out = vec![0.0; basis.n_basis * np * 9];
        // H_phys = J^{-T} H_ref J^{-1}, exact for the affine map
        for i in 0..basis.n_basis {
            for q in 0..np {
                let b = (i * np + q) * 9;
                for a in 0..d {
                    for c in 0..d {
                        let mut acc = 0.0;
                        for r in 0..d {
                            for s in 0..d {
                                acc += jt[a][r] * ref_hess[b + 3 * r + s] * jt[c][s];
                            }
                        }
                        out[b + 3 * a + c] = acc;
                    }
                }
            }
        }
        BasisHessians {
            n_basis: basis.n_basis,
            n_points: np,
            data: out,
        }
    }

    /// Physical positions of the Lagrange nodes of an element.
    pub fn node_positions(&self, element: usize, field: Field) -> Vec<[f64; 3]> {
        let basis = self.reference_basis(field);
        let verts = self.mesh.element_vertices(element);
        let d = self.dim();
        basis
            .nodes
            .iter()
            .map(|&r| {
                let mut p = verts[0];
                for c in 0..d {
                    for x in 0..3 {
                        p[x] += r[c] * (verts[c + 1][x] - verts[0][x]);
                    }
                }
                p
            })
            .collect()
    }

    /// Interpolates a scalar function on one element (nodal interpolation).
    pub fn interpolate_scalar(
        &self,
        element: usize,
        field: Field,
        f: impl Fn([f64; 3]) -> f64,
    ) -> Vec<f64> {
        self.node_positions(element, field)
            .into_iter()
            .map(f)
            .collect()
    }
}

/// Builds the broken `P_k x P_{k-1}` layout; `k` must be at least 1.
pub fn build_space(mesh: Arc<Mesh>, k: usize) -> Result<DgSpace> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "velocity degree k must be >= 1".into(),
        ));
    }
    if k > 6 {
        return Err(Error::InvalidParameter(format!(
            "velocity degree k = {k} unsupported (max 6)"
        )));
    }
    let dim = mesh.dim();
    Ok(DgSpace {
        mesh,
        k,
        vel_basis: ReferenceBasis::new(dim, k),
        pre_basis: ReferenceBasis::new(dim, k - 1),
    })
}
