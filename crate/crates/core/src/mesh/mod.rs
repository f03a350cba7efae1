//! Conforming simplicial meshes (triangles in 2D, tetrahedra in 3D).
//!
//! Elements carry two vertex orderings: a positively oriented geometric one
//! used by quadrature and assembly, and a tagged (Maubach/Traxler) ordering
//! that drives bisection refinement; the refinement edge of an element is
//! always the edge between the first and last vertex of the tagged ordering.
//! Meshes are immutable after construction; [`refine`] returns a new mesh.

mod generate;
mod refine;

pub use generate::{generate_cube, generate_lshape, generate_square, generate_thick_lshape};
pub use refine::refine;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Element {
    /// Vertex ids, positively oriented; the first `dim + 1` entries are used.
    pub verts: [usize; 4],
    /// Tagged vertex ordering for bisection (refinement edge = first/last).
    pub(crate) bisect: [usize; 4],
    /// Maubach type tag, cycles mod `dim` under bisection.
    pub(crate) tag: u8,
    /// Bisection depth relative to the generated mesh.
    pub generation: u32,
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Vertex ids, sorted ascending; the first `dim` entries are used.
    pub verts: [usize; 3],
    /// Owner on the plus side (always present).
    pub plus: usize,
    /// Owner on the minus side; `None` on the boundary.
    pub minus: Option<usize>,
    /// Unit normal pointing from plus to minus (outward on the boundary).
    pub normal: [f64; 3],
    /// Length scale `h_F`: the diameter of the face.
    pub diameter: f64,
    /// Face measure: length in 2D, area in 3D.
    pub measure: f64,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<[f64; 3]>,
    elements: Vec<Element>,
    faces: Vec<Face>,
    /// Face ids per element, same local order as the omitted vertex.
    elem_faces: Vec<[usize; 4]>,
    diameters: Vec<f64>,
    volumes: Vec<f64>,
    /// Cached inverse-transpose Jacobians of the affine reference maps.
    grad_maps: Vec<[[f64; 3]; 3]>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity.
    ///
    /// Element orientation is fixed up automatically. Refinement edges
    /// default to the longest edge of each element (tag 0), which is the
    /// appropriate initial assignment for generated and imported meshes.
    pub fn from_raw(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        elements: Vec<[usize; 4]>,
    ) -> Result<Self> {
        let tagged = elements
            .iter()
            .map(|&vs| {
                let bisect = longest_edge_order(dim, &vertices, vs);
                (bisect, 0u8, 0u32)
            })
            .collect();
        Self::new_tagged(dim, vertices, tagged)
    }

    /// Builds a mesh from tagged element orderings (generators, refinement).
    pub(crate) fn new_tagged(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        tagged: Vec<([usize; 4], u8, u32)>,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("mesh dim {dim} not 2 or 3")));
        }
        let mut elements = Vec::with_capacity(tagged.len());
        for (bisect, tag, generation) in tagged {
            let mut verts = bisect;
            if signed_volume(dim, &vertices, verts) < 0.0 {
                verts.swap(dim - 1, dim);
            }
            let vol = signed_volume(dim, &vertices, verts);
            if vol <= 0.0 {
                return Err(Error::DegenerateElement {
                    element: elements.len(),
                    volume: vol,
                });
            }
            elements.push(Element {
                verts,
                bisect,
                tag,
                generation,
            });
        }
        let (faces, elem_faces) = build_faces(dim, &vertices, &elements)?;
        let diameters = elements
            .iter()
            .map(|e| simplex_diameter(dim, &vertices, e.verts))
            .collect();
        let volumes: Vec<f64> = elements
            .iter()
            .map(|e| signed_volume(dim, &vertices, e.verts))
            .collect();
        let grad_maps = elements
            .iter()
            .map(|e| inverse_jacobian_t(dim, &vertices, e.verts))
            .collect();
        Ok(Mesh {
            dim,
            vertices,
            elements,
            faces,
            elem_faces,
            diameters,
            volumes,
            grad_maps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 3] {
        self.vertices[v]
    }

    pub fn element(&self, e: usize) -> &Element {
        &self.elements[e]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Face ids bounding element `e` (`dim + 1` entries).
    pub fn element_faces(&self, e: usize) -> &[usize] {
        &self.elem_faces[e][..self.dim + 1]
    }

    pub fn element_vertex_ids(&self, e: usize) -> &[usize] {
        &self.elements[e].verts[..self.dim + 1]
    }

    pub fn element_vertices(&self, e: usize) -> Vec<[f64; 3]> {
        self.element_vertex_ids(e)
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn face_vertices(&self, f: usize) -> Vec<[f64; 3]> {
        self.faces[f].verts[..self.dim]
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        self.diameters[e]
    }

    /// Largest element diameter (the mesh size h).
    pub fn mesh_size(&self) -> f64 {
        self.diameters.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        let d_factorial = if self.dim == 2 { 2.0 } else { 6.0 };
        self.volumes[e] / d_factorial
    }

    /// Determinant of the affine map from the reference simplex.
    pub fn jacobian_det(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    /// `J^{-T}` of the affine reference map; maps reference gradients to
    /// physical gradients.
    pub fn grad_map(&self, e: usize) -> &[[f64; 3]; 3] {
        &self.grad_maps[e]
    }

    /// Maps a physical point into reference coordinates of element `e`.
    pub fn to_reference(&self, e: usize, p: [f64; 3]) -> [f64; 3] {
        let verts = self.element_vertex_ids(e);
        let v0 = self.vertices[verts[0]];
        let jt = &self.grad_maps[e]; // J^{-T}
        let d = [p[0] - v0[0], p[1] - v0[1], p[2] - v0[2]];
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            for k in 0..self.dim {
                // (J^{-1})_{ik} = (J^{-T})_{ki}
                out[i] += jt[k][i] * d[k];
            }
        }
        out
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_volume(e)).sum()
    }

    /// Local endpoints (positions within `verts`) of the refinement edge.
    pub fn refinement_edge_local(&self, e: usize) -> (usize, usize) {
        let el = &self.elements[e];
        let a = el.bisect[0];
        let b = el.bisect[self.dim];
        let pos = |v| el.verts[..self.dim + 1].iter().position(|&w| w == v).unwrap();
        (pos(a), pos(b))
    }

    /// Smallest corner angle (2D) or dihedral angle (3D) over the mesh, in
    /// radians. Shape-regularity proxy used by the refinement tests.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for e in 0..self.n_elements() {
            let vs = self.element_vertices(e);
            if self.dim == 2 {
                for i in 0..3 {
                    let a = vs[i];
                    let b = vs[(i + 1) % 3];
                    let c = vs[(i + 2) % 3];
                    let u = sub(b, a);
                    let v = sub(c, a);
                    let cos = dot(u, v) / (norm(u) * norm(v));
                    min = min.min(cos.clamp(-1.0, 1.0).acos());
                }
            } else {
                // dihedral angle along each of the 6 edges
                for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
                    let others: Vec<usize> = (0..4).filter(|&k| k != i && k != j).collect();
                    let (k, l) = (others[0], others[1]);
                    let n1 = cross(sub(vs[j], vs[i]), sub(vs[k], vs[i]));
                    let n2 = cross(sub(vs[j], vs[i]), sub(vs[l], vs[i]));
                    let cos = dot(n1, n2) / (norm(n1) * norm(n2));
                    min = min.min(cos.clamp(-1.0, 1.0).acos());
                }
            }
        }
        min
    }

    /// Writes the documented plain-text format: a `dim n_vertices n_elements`
    /// header, vertex coordinate lines, then 0-based element index lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.dim, self.n_vertices(), self.n_elements())?;
        for v in &self.vertices {
            let coords: Vec<String> = (0..self.dim).map(|d| format!("{:.17e}", v[d])).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        for e in &self.elements {
            let ids: Vec<String> = e.verts[..self.dim + 1]
                .iter()
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{}", ids.join(" "))?;
        }
        Ok(())
    }

    /// Reads the plain-text format written by [`Mesh::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty mesh file".into()))??;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad mesh header: {e}")))?;
        if head.len() != 3 {
            return Err(Error::Config("mesh header must be: dim nv ne".into()));
        }
        let (dim, nv, ne) = (head[0], head[1], head[2]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines
                .next()
                .ok_or_else(|| Error::Config("truncated vertex block".into()))??;
            let c: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad vertex line: {e}")))?;
            if c.len() != dim {
                return Err(Error::Config("wrong coordinate count".into()));
            }
            let mut v = [0.0; 3];
            v[..dim].copy_from_slice(&c);
            vertices.push(v);
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = lines
                .next()
                .ok_or_else(|| Error::Config("truncated element block".into()))??;
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad element line: {e}")))?;
            if ids.len() != dim + 1 {
                return Err(Error::Config("wrong vertex count per element".into()));
            }
            let mut vs = [usize::MAX; 4];
            vs[..dim + 1].copy_from_slice(&ids);
            elements.push(vs);
        }
        Mesh::from_raw(dim, vertices, elements)
    }
}

/// Conformity and geometry audit: face ownership counts, unit normals,
/// positive volumes, diameter definition.
pub fn audit(mesh: &Mesh) -> Result<()> {
    let mut owners: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for e in 0..mesh.n_elements() {
        let ids = mesh.element_vertex_ids(e);
        for skip in 0..=mesh.dim() {
            let mut key: Vec<usize> = ids
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &v)| v)
                .collect();
            key.sort_unstable();
            owners.entry(key).or_default().push(e);
        }
    }
    for (key, own) in &owners {
        if own.is_empty() || own.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "facet {key:?} has {} owners",
                own.len()
            )));
        }
    }
    if owners.len() != mesh.n_faces() {
        return Err(Error::InvalidParameter(format!(
            "face records ({}) do not match facet count ({})",
            mesh.n_faces(),
            owners.len()
        )));
    }
    for f in 0..mesh.n_faces() {
        let face = mesh.face(f);
        let n = face.normal;
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (len - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("face {f} normal not unit")));
        }
        let key: Vec<usize> = {
            let mut k = face.verts[..mesh.dim()].to_vec();
            k.sort_unstable();
            k
        };
        let own = &owners[&key];
        if own.len() == 1 && face.minus.is_some() || own.len() == 2 && face.minus.is_none() {
            return Err(Error::InvalidParameter(format!(
                "face {f} boundary flag inconsistent"
            )));
        }
    }
    for e in 0..mesh.n_elements() {
        if mesh.element_volume(e) <= 0.0 {
            return Err(Error::DegenerateElement {
                element: e,
                volume: mesh.element_volume(e),
            });
        }
        let d = simplex_diameter(mesh.dim(), &mesh.vertices, mesh.elements[e].verts);
        if (d - mesh.element_diameter(e)).abs() > 1e-12 * d {
            return Err(Error::InvalidParameter(format!("element {e} diameter stale")));
        }
    }
    Ok(())
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Signed volume scaled by dim! (i.e. the Jacobian determinant).
fn signed_volume(dim: usize, vertices: &[[f64; 3]], verts: [usize; 4]) -> f64 {
    let v0 = vertices[verts[0]];
    if dim == 2 {
        let a = sub(vertices[verts[1]], v0);
        let b = sub(vertices[verts[2]], v0);
        a[0] * b[1] - a[1] * b[0]
    } else {
        let a = sub(vertices[verts[1]], v0);
        let b = sub(vertices[verts[2]], v0);
        let c = sub(vertices[verts[3]], v0);
        dot(a, cross(b, c))
    }
}

fn simplex_diameter(dim: usize, vertices: &[[f64; 3]], verts: [usize; 4]) -> f64 {
    let mut max = 0.0f64;
    for i in 0..=dim {
        for j in (i + 1)..=dim {
            max = max.max(norm(sub(vertices[verts[i]], vertices[verts[j]])));
        }
    }
    max
}

fn inverse_jacobian_t(dim: usize, vertices: &[[f64; 3]], verts: [usize; 4]) -> [[f64; 3]; 3] {
    let v0 = vertices[verts[0]];
    let mut out = [[0.0; 3]; 3];
    if dim == 2 {
        let a = sub(vertices[verts[1]], v0);
        let b = sub(vertices[verts[2]], v0);
        let det = a[0] * b[1] - a[1] * b[0];
        // J = [a b] columnwise; J^{-1} = adj / det; out = (J^{-1})^T
        let inv = [[b[1] / det, -b[0] / det], [-a[1] / det, a[0] / det]];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = inv[j][i];
            }
        }
    } else {
        let a = sub(vertices[verts[1]], v0);
        let b = sub(vertices[verts[2]], v0);
        let c = sub(vertices[verts[3]], v0);
        let det = dot(a, cross(b, c));
        let r0 = cross(b, c);
        let r1 = cross(c, a);
        let r2 = cross(a, b);
        // rows of J^{-1} are the reciprocal vectors; out = (J^{-1})^T
        for i in 0..3 {
            out[i][0] = r0[i] / det;
            out[i][1] = r1[i] / det;
            out[i][2] = r2[i] / det;
        }
    }
    out
}

fn longest_edge_order(dim: usize, vertices: &[[f64; 3]], verts: [usize; 4]) -> [usize; 4] {
    let mut best = (0usize, 1usize);
    let mut best_len = -1.0f64;
    for i in 0..=dim {
        for j in (i + 1)..=dim {
            let len = norm(sub(vertices[verts[i]], vertices[verts[j]]));
            // ties broken toward lexicographically smallest local pair
            if len > best_len + 1e-14 * len.max(1.0) {
                best = (i, j);
                best_len = len;
            }
        }
    }
    let mut order = [usize::MAX; 4];
    order[0] = verts[best.0];
    order[dim] = verts[best.1];
    let mut mid = 1;
    for i in 0..=dim {
        if i != best.0 && i != best.1 {
            order[mid] = verts[i];
            mid += 1;
        }
    }
    order
}

fn build_faces(
    dim: usize,
    vertices: &[[f64; 3]],
    elements: &[Element],
) -> Result<(Vec<Face>, Vec<[usize; 4]>)> {
    let mut map: HashMap<[usize; 3], Vec<(usize, usize)>> = HashMap::new();
    for (e, el) in elements.iter().enumerate() {
        for skip in 0..=dim {
            let mut key = [usize::MAX; 3];
            let mut k = 0;
            for (i, &v) in el.verts[..dim + 1].iter().enumerate() {
                if i != skip {
                    key[k] = v;
                    k += 1;
                }
            }
            key[..dim].sort_unstable();
            map.entry(key).or_default().push((e, skip));
        }
    }
    // Deterministic face numbering: sorted by vertex key.
    let mut keys: Vec<[usize; 3]> = map.keys().copied().collect();
    keys.sort_unstable();
    let mut faces = Vec::with_capacity(keys.len());
    let mut elem_faces = vec![[usize::MAX; 4]; elements.len()];
    for key in keys {
        let mut own = map.remove(&key).unwrap();
        own.sort_unstable();
        if own.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "facet {key:?} shared by {} elements",
                own.len()
            )));
        }
        let plus = own[0].0;
        let minus = own.get(1).map(|&(e, _)| e);
        let pts: Vec<[f64; 3]> = key[..dim].iter().map(|&v| vertices[v]).collect();
        let (mut normal, measure, diameter) = if dim == 2 {
            let t = sub(pts[1], pts[0]);
            let len = norm(t);
            ([t[1] / len, -t[0] / len, 0.0], len, len)
        } else {
            let n = cross(sub(pts[1], pts[0]), sub(pts[2], pts[0]));
            let len = norm(n);
            let diam = norm(sub(pts[0], pts[1]))
                .max(norm(sub(pts[1], pts[2])))
                .max(norm(sub(pts[0], pts[2])));
            ([n[0] / len, n[1] / len, n[2] / len], len / 2.0, diam)
        };
        // orient away from the plus element
        let mut fc = [0.0; 3];
        for p in &pts {
            for d in 0..3 {
                fc[d] += p[d] / dim as f64;
            }
        }
        let mut ec = [0.0; 3];
        for &v in elements[plus].verts[..dim + 1].iter() {
            for d in 0..3 {
                ec[d] += vertices[v][d] / (dim + 1) as f64;
            }
        }
        if dot(normal, sub(fc, ec)) < 0.0 {
            for n in normal.iter_mut() {
                *n = -*n;
            }
        }
        let fid = faces.len();
        for &(e, skip) in &own {
            elem_faces[e][skip] = fid;
        }
        faces.push(Face {
            verts: key,
            plus,
            minus,
            normal,
            diameter,
            measure,
        });
    }
    Ok((faces, elem_faces))
}
