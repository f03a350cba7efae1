//! Conforming bisection refinement.
//!
//! Newest-vertex bisection in 2D and tagged (Maubach/Traxler) bisection in
//! 3D are the same algorithm at different dimension: an element is bisected
//! at the midpoint of its refinement edge (first/last vertex of the tagged
//! ordering), and an edge may only be bisected once all elements sharing it
//! have it as their refinement edge, which the closure establishes
//! recursively. Generated meshes carry compatible initial tags, so the
//! recursion terminates.

use std::collections::HashMap;

use super::Mesh;
use crate::error::{Error, Result};

const MAX_CLOSURE_DEPTH: usize = 10_000;

struct Node {
    bisect: [usize; 4],
    tag: u8,
    generation: u32,
    alive: bool,
}

struct Arena {
    dim: usize,
    vertices: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    /// Edge (sorted vertex pair) to ids of elements registered on it. Dead
    /// elements are filtered out on read.
    edge_elems: HashMap<(usize, usize), Vec<usize>>,
    midpoints: HashMap<(usize, usize), usize>,
    bisections: usize,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Arena {
    fn from_mesh(mesh: &Mesh) -> Self {
        let mut arena = Arena {
            dim: mesh.dim(),
            vertices: (0..mesh.n_vertices()).map(|v| mesh.vertex(v)).collect(),
            nodes: Vec::with_capacity(2 * mesh.n_elements()),
            edge_elems: HashMap::new(),
            midpoints: HashMap::new(),
            bisections: 0,
        };
        for el in mesh.elements() {
            arena.spawn(el.bisect, el.tag, el.generation);
        }
        arena
    }

    fn spawn(&mut self, bisect: [usize; 4], tag: u8, generation: u32) -> usize {
        let id = self.nodes.len();
        let d = self.dim;
        for i in 0..=d {
            for j in (i + 1)..=d {
                self.edge_elems
                    .entry(edge_key(bisect[i], bisect[j]))
                    .or_default()
                    .push(id);
            }
        }
        self.nodes.push(Node {
            bisect,
            tag,
            generation,
            alive: true,
        });
        id
    }

    fn refinement_edge(&self, id: usize) -> (usize, usize) {
        let b = &self.nodes[id].bisect;
        edge_key(b[0], b[self.dim])
    }

    fn sharers(&self, edge: (usize, usize)) -> Vec<usize> {
        self.edge_elems
            .get(&edge)
            .map(|ids| {
                ids.iter()
                    .copied()
                    .filter(|&id| self.nodes[id].alive)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn midpoint(&mut self, edge: (usize, usize)) -> usize {
        if let Some(&z) = self.midpoints.get(&edge) {
            return z;
        }
        let a = self.vertices[edge.0];
        let b = self.vertices[edge.1];
        let z = self.vertices.len();
        self.vertices.push([
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
        ]);
        self.midpoints.insert(edge, z);
        z
    }

    /// Bisects every element in `group`; all must share `edge` as their
    /// refinement edge.
    fn bisect_group(&mut self, edge: (usize, usize), group: &[usize]) {
        let z = self.midpoint(edge);
        let d = self.dim;
        for &id in group {
            let (bisect, tag, generation) = {
                let n = &self.nodes[id];
                (n.bisect, n.tag as usize, n.generation)
            };
            let new_tag = ((tag + 1) % d) as u8;

            let mut c1 = [usize::MAX; 4];
            c1[0] = bisect[0];
            c1[1] = z;
            for i in 1..d {
                c1[i + 1] = bisect[i];
            }

            let mut c2 = [usize::MAX; 4];
            c2[0] = bisect[d];
            c2[1] = z;
            let mut k = 2;
            for i in 1..=tag {
                c2[k] = bisect[i];
                k += 1;
            }
            for i in ((tag + 1)..d).rev() {
                c2[k] = bisect[i];
                k += 1;
            }

            self.nodes[id].alive = false;
            self.spawn(c1, new_tag, generation + 1);
            self.spawn(c2, new_tag, generation + 1);
            self.bisections += 1;
        }
    }

    /// Bisects element `root` after recursively making its refinement-edge
    /// neighborhood compatible.
    fn ensure_bisected(&mut self, root: usize) -> Result<()> {
        let mut stack = vec![root];
        while let Some(&top) = stack.last() {
            if !self.nodes[top].alive {
                stack.pop();
                continue;
            }
            let edge = self.refinement_edge(top);
            let group = self.sharers(edge);
            match group
                .iter()
                .find(|&&s| self.refinement_edge(s) != edge)
            {
                Some(&incompatible) => {
                    stack.push(incompatible);
                    if stack.len() > MAX_CLOSURE_DEPTH {
                        return Err(Error::InvalidParameter(
                            "bisection closure did not terminate; incompatible edge tags"
                                .into(),
                        ));
                    }
                }
                None => {
                    self.bisect_group(edge, &group);
                }
            }
        }
        Ok(())
    }
}

/// Bisects every marked element at least once and applies conforming
/// closure. Unknown ids are rejected; an empty mark set returns a copy.
pub fn refine(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    let mut ids: Vec<usize> = marked.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if let Some(&bad) = ids.iter().find(|&&e| e >= mesh.n_elements()) {
        return Err(Error::InvalidParameter(format!(
            "marked element {bad} out of range"
        )));
    }
    if ids.is_empty() {
        return Ok(mesh.clone());
    }
    let mut arena = Arena::from_mesh(mesh);
    for &e in &ids {
        arena.ensure_bisected(e)?;
    }
    let tagged: Vec<([usize; 4], u8, u32)> = arena
        .nodes
        .iter()
        .filter(|n| n.alive)
        .map(|n| (n.bisect, n.tag, n.generation))
        .collect();
    Mesh::new_tagged(mesh.dim(), arena.vertices, tagged)
}

#[cfg(test)]
mod tests {
    use super::super::{audit, generate_cube, generate_lshape, generate_square, generate_thick_lshape};
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_triangles_mark_both() {
        let m = generate_square(1);
        let r = refine(&m, &[0, 1]).unwrap();
        assert_eq!(r.n_elements(), 4);
        audit(&r).unwrap();
        assert_abs_diff_eq!(r.total_volume(), 4.0, epsilon = 1e-12);
        assert!(r.elements().iter().all(|e| e.generation == 1));
    }

    #[test]
    fn empty_mark_is_identity() {
        let m = generate_lshape(4).unwrap();
        let r = refine(&m, &[]).unwrap();
        assert_eq!(r.n_elements(), m.n_elements());
        assert_eq!(r.n_vertices(), m.n_vertices());
    }

    #[test]
    fn lshape_corner_refinement_conforms() {
        let m = generate_lshape(2).unwrap();
        // the two elements touching the re-entrant corner (0,0)
        let corner: Vec<usize> = (0..m.n_elements())
            .filter(|&e| {
                m.element_vertices(e)
                    .iter()
                    .any(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14)
            })
            .collect();
        assert!(!corner.is_empty());
        let r = refine(&m, &corner).unwrap();
        audit(&r).unwrap();
        assert_abs_diff_eq!(r.total_volume(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn refinement_never_shrinks() {
        let m = generate_cube(1);
        let r = refine(&m, &[0]).unwrap();
        assert!(r.n_elements() > m.n_elements());
        assert!(r
            .elements()
            .iter()
            .all(|e| { super::super::audit(&r).is_ok() && e.generation <= 3 }));
        audit(&r).unwrap();
        assert_abs_diff_eq!(r.total_volume(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_marks_stay_conforming() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let meshes: Vec<Mesh> = vec![
            generate_square(2),
            generate_lshape(2).unwrap(),
            generate_cube(2),
            generate_thick_lshape(2).unwrap(),
        ];
        for mut m in meshes {
            let volume = m.total_volume();
            for _ in 0..6 {
                let count = 1 + rng.gen_range(0..m.n_elements() / 2 + 1);
                let marked: Vec<usize> =
                    (0..count).map(|_| rng.gen_range(0..m.n_elements())).collect();
                m = refine(&m, &marked).unwrap();
                audit(&m).unwrap();
                assert_abs_diff_eq!(m.total_volume(), volume, epsilon = 1e-12 * volume);
            }
        }
    }

    #[test]
    fn uniform_bisection_keeps_shape_regularity() {
        for (mut m, name) in [
            (generate_square(2), "square"),
            (generate_lshape(2).unwrap(), "lshape"),
            (generate_cube(1), "cube"),
            (generate_thick_lshape(2).unwrap(), "thick-l"),
        ] {
            let initial = m.min_angle();
            for _ in 0..5 {
                let all: Vec<usize> = (0..m.n_elements()).collect();
                m = refine(&m, &all).unwrap();
            }
            audit(&m).unwrap();
            assert!(
                m.min_angle() >= 0.5 * initial,
                "{name}: min angle dropped from {initial} to {}",
                m.min_angle()
            );
        }
    }
}
