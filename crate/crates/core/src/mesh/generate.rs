//! Structured mesh generators for the four benchmark domains.
//!
//! 2D cells are split by the lower-left to upper-right diagonal; 3D cells by
//! the six-tetrahedra Kuhn triangulation around the main diagonal. The tagged
//! element orderings put the diagonal as the refinement edge (type 0), which
//! makes the generated meshes compatible for recursive bisection.

use super::Mesh;
use crate::error::{Error, Result};

struct GridBuilder {
    n: usize,
    offset: [f64; 3],
    cell: f64,
    vertex_ids: std::collections::HashMap<(usize, usize, usize), usize>,
    vertices: Vec<[f64; 3]>,
    tagged: Vec<([usize; 4], u8, u32)>,
}

impl GridBuilder {
    fn new(n: usize, offset: [f64; 3], cell: f64) -> Self {
        GridBuilder {
            n,
            offset,
            cell,
            vertex_ids: Default::default(),
            vertices: Vec::new(),
            tagged: Vec::new(),
        }
    }

    fn vertex(&mut self, i: usize, j: usize, k: usize) -> usize {
        let n = self.n;
        let _ = n;
        if let Some(&id) = self.vertex_ids.get(&(i, j, k)) {
            return id;
        }
        let id = self.vertices.len();
        self.vertices.push([
            self.offset[0] + self.cell * i as f64,
            self.offset[1] + self.cell * j as f64,
            self.offset[2] + self.cell * k as f64,
        ]);
        self.vertex_ids.insert((i, j, k), id);
        id
    }

    fn cell_2d(&mut self, i: usize, j: usize) {
        let a = self.vertex(i, j, 0);
        let b = self.vertex(i + 1, j, 0);
        let c = self.vertex(i + 1, j + 1, 0);
        let d = self.vertex(i, j + 1, 0);
        // refinement edge = diagonal a-c in both triangles
        self.tagged.push(([a, b, c, usize::MAX], 0, 0));
        self.tagged.push(([a, d, c, usize::MAX], 0, 0));
    }

    fn cell_3d(&mut self, i: usize, j: usize, k: usize) {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let base = [i, j, k];
        for perm in PERMS {
            let mut steps = [base; 4];
            for s in 1..4 {
                steps[s] = steps[s - 1];
                steps[s][perm[s - 1]] += 1;
            }
            let ids = [
                self.vertex(steps[0][0], steps[0][1], steps[0][2]),
                self.vertex(steps[1][0], steps[1][1], steps[1][2]),
                self.vertex(steps[2][0], steps[2][1], steps[2][2]),
                self.vertex(steps[3][0], steps[3][1], steps[3][2]),
            ];
            // refinement edge = main diagonal (first to last)
            self.tagged.push((ids, 0, 0));
        }
    }
}

/// The square `(-1,1)^2` cut into `n x n` cells of two triangles each.
pub fn generate_square(n: usize) -> Mesh {
    assert!(n >= 1, "n must be positive");
    let mut g = GridBuilder::new(n, [-1.0, -1.0, 0.0], 2.0 / n as f64);
    for j in 0..n {
        for i in 0..n {
            g.cell_2d(i, j);
        }
    }
    Mesh::new_tagged(2, g.vertices, g.tagged).expect("structured mesh is valid")
}

/// The L-shaped domain `(-1,1)^2 \ (-1,0)^2`; `n` must be even so the
/// re-entrant corner lies on the grid.
pub fn generate_lshape(n: usize) -> Result<Mesh> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "L-shape subdivision n = {n} must be positive and even"
        )));
    }
    let mut g = GridBuilder::new(n, [-1.0, -1.0, 0.0], 2.0 / n as f64);
    for j in 0..n {
        for i in 0..n {
            // skip cells inside the removed quadrant (-1,0)^2
            if i < n / 2 && j < n / 2 {
                continue;
            }
            g.cell_2d(i, j);
        }
    }
    Mesh::new_tagged(2, g.vertices, g.tagged)
}

/// The unit cube `(0,1)^3`, six Kuhn tetrahedra per cell.
pub fn generate_cube(n: usize) -> Mesh {
    assert!(n >= 1, "n must be positive");
    let mut g = GridBuilder::new(n, [0.0, 0.0, 0.0], 1.0 / n as f64);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                g.cell_3d(i, j, k);
            }
        }
    }
    Mesh::new_tagged(3, g.vertices, g.tagged).expect("structured mesh is valid")
}

/// The thick L-shaped domain
/// `(-0.5,0.5) x (0,1) x (-0.5,0.5) \ ((0,0.5) x (0,1) x (0,0.5))`.
pub fn generate_thick_lshape(n: usize) -> Result<Mesh> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "thick-L subdivision n = {n} must be positive and even"
        )));
    }
    let mut g = GridBuilder::new(n, [-0.5, 0.0, -0.5], 1.0 / n as f64);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                // removed block: x in (0, 0.5), z in (0, 0.5)
                if i >= n / 2 && k >= n / 2 {
                    continue;
                }
                g.cell_3d(i, j, k);
            }
        }
    }
    Mesh::new_tagged(3, g.vertices, g.tagged)
}
