//! Incremental Delaunay tetrahedralization.
//!
//! Bowyer–Watson construction with an explicit infinite vertex, so the
//! complex is always closed: every face has exactly two incident cells and
//! hull updates need no special casing. All branching predicates are
//! sign-exact (see [`super::predicates`]), which makes the output independent
//! of floating-point noise.
//!
//! Conventions:
//! - every stored cell (v0, v1, v2, v3) is positively oriented
//!   (det[v1−v0, v2−v0, v3−v0] > 0, with the infinite vertex acting as a
//!   point far along the outward hull normal);
//! - `face_of(t, i)` returns the face opposite corner i, oriented outward
//!   (an interior point q of the cell satisfies det[f1−f0, f2−f0, q−f0] < 0);
//! - a cell is "in conflict" with a point p when p lies inside **or on** its
//!   circumsphere. Counting the boundary as conflict resolves cospherical
//!   ties (points on a common sphere, e.g. cube corners) deterministically
//!   and guarantees that no cavity boundary face is ever coplanar with p,
//!   so refilled cells are never degenerate.

use nalgebra::Vector3;

use super::predicates::{in_circle_coplanar, in_sphere, orient};
use crate::error::{Error, Result};
use crate::seeding::substream_rng;
use rand_chacha::rand_core::RngCore;

const INF: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

struct Cell {
    verts: [u32; 4],
    /// neighbors[i] shares the face opposite verts[i].
    neighbors: [u32; 4],
    alive: bool,
}

impl Cell {
    fn infinite_slot(&self) -> Option<usize> {
        self.verts.iter().position(|&v| v == INF)
    }
}

/// Face opposite corner `i`, outward-oriented for a positively stored cell.
fn face_slots(i: usize) -> [usize; 3] {
    match i {
        0 => [1, 2, 3],
        1 => [0, 3, 2],
        2 => [0, 1, 3],
        3 => [0, 2, 1],
        _ => unreachable!(),
    }
}

pub struct Tetrahedralization {
    points: Vec<Vector3<f64>>,
    cells: Vec<Cell>,
    /// Number of input points that exactly coincided with an earlier point
    /// and were therefore not inserted.
    pub duplicate_count: usize,
}

impl Tetrahedralization {
    /// Tetrahedralizes the given points. Fails when fewer than four points
    /// are given or all points are coplanar.
    pub fn build(points: &[Vector3<f64>]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "tetrahedralization needs at least 4 points, got {}",
                points.len()
            )));
        }
        let mut tri = Tetrahedralization {
            points: points.to_vec(),
            cells: Vec::new(),
            duplicate_count: 0,
        };
        let seed_cell = tri.bootstrap()?;
        let bootstrap_verts = tri.cells[seed_cell as usize].verts;
        let mut rng = substream_rng(0x9e3779b9, "geom.delaunay.walk");
        let mut hint = seed_cell;
        for idx in 0..points.len() as u32 {
            if bootstrap_verts.contains(&idx) {
                continue;
            }
            if let Some(h) = tri.insert(idx, hint, &mut rng)? {
                hint = h;
            }
        }
        Ok(tri)
    }

    /// Alive finite cells as index quadruples, each positively oriented with
    /// ascending-sorted vertices up to the final orientation swap, the list
    /// sorted lexicographically.
    pub fn finite_cells(&self) -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        for cell in &self.cells {
            if !cell.alive || cell.infinite_slot().is_some() {
                continue;
            }
            let mut v: [usize; 4] = std::array::from_fn(|i| cell.verts[i] as usize);
            v.sort_unstable();
            let o = orient(
                &self.points[v[0]],
                &self.points[v[1]],
                &self.points[v[2]],
                &self.points[v[3]],
            );
            debug_assert_ne!(o, 0, "stored cell must not be flat");
            if o < 0 {
                v.swap(2, 3);
            }
            out.push(v);
        }
        out.sort_unstable();
        out
    }

    fn point(&self, v: u32) -> &Vector3<f64> {
        &self.points[v as usize]
    }

    fn face_verts(&self, cell: u32, slot: usize) -> [u32; 3] {
        let c = &self.cells[cell as usize];
        let s = face_slots(slot);
        [c.verts[s[0]], c.verts[s[1]], c.verts[s[2]]]
    }

    /// Finds four non-coplanar points, creates the first cell and the four
    /// infinite cells around it.
    fn bootstrap(&mut self) -> Result<u32> {
        let pts = &self.points;
        let i0 = 0u32;
        let i1 = (1..pts.len() as u32)
            .find(|&j| pts[j as usize] != pts[0])
            .ok_or_else(|| Error::DegenerateGeometry("all points coincide".into()))?;
        let collinear = |a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>| {
            use robust::{orient2d, Coord};
            (0..3).all(|axis| {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let q = |w: &Vector3<f64>| Coord { x: w[u], y: w[v] };
                orient2d(q(a), q(b), q(c)) == 0.0
            })
        };
        let i2 = (0..pts.len() as u32)
            .find(|&j| {
                j != i0 && j != i1 && !collinear(&pts[0], &pts[i1 as usize], &pts[j as usize])
            })
            .ok_or_else(|| Error::DegenerateGeometry("all points collinear".into()))?;
        let mut quad = [i0, i1, i2, 0];
        let i3 = (0..pts.len() as u32)
            .find(|&j| {
                j != i0
                    && j != i1
                    && j != i2
                    && orient(
                        &pts[i0 as usize],
                        &pts[i1 as usize],
                        &pts[i2 as usize],
                        &pts[j as usize],
                    ) != 0
            })
            .ok_or_else(|| Error::DegenerateGeometry("all points coplanar".into()))?;
        quad[3] = i3;
        if orient(
            &pts[quad[0] as usize],
            &pts[quad[1] as usize],
            &pts[quad[2] as usize],
            &pts[quad[3] as usize],
        ) < 0
        {
            quad.swap(1, 2);
        }

        let t0 = self.alloc(quad);
        for i in 0..4 {
            let f = self.face_verts(t0, i);
            let inf = self.alloc([f[0], f[1], f[2], INF]);
            self.cells[t0 as usize].neighbors[i] = inf;
            self.cells[inf as usize].neighbors[3] = t0;
        }
        // Stitch the infinite cells to each other across hull edges.
        let mut ring: Vec<(u32, u32, u32, usize)> = Vec::new();
        for inf in 1..5u32 {
            for slot in 0..3usize {
                let f = self.face_verts(inf, slot);
                let mut fin: Vec<u32> = f.iter().copied().filter(|&v| v != INF).collect();
                fin.sort_unstable();
                ring.push((fin[0], fin[1], inf, slot));
            }
        }
        ring.sort_unstable();
        for pair in ring.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            debug_assert_eq!((a.0, a.1), (b.0, b.1));
            self.cells[a.2 as usize].neighbors[a.3] = b.2;
            self.cells[b.2 as usize].neighbors[b.3] = a.2;
        }
        Ok(t0)
    }

    fn alloc(&mut self, verts: [u32; 4]) -> u32 {
        let id = self.cells.len() as u32;
        self.cells.push(Cell {
            verts,
            neighbors: [NONE; 4],
            alive: true,
        });
        id
    }

    fn in_conflict(&self, cell: u32, p: &Vector3<f64>) -> bool {
        let c = &self.cells[cell as usize];
        if let Some(k) = c.infinite_slot() {
            let f = self.face_verts(cell, k);
            let (a, b, cc) = (self.point(f[0]), self.point(f[1]), self.point(f[2]));
            match orient_face(a, b, cc, p) {
                -1 => true, // strictly in the unbounded region
                1 => false,
                _ => in_circle_coplanar(a, b, cc, p) >= 0,
            }
        } else {
            let [a, b, cc, d] = c.verts;
            in_sphere(
                self.point(a),
                self.point(b),
                self.point(cc),
                self.point(d),
                p,
            ) >= 0
        }
    }

    /// Walks from `hint` to a cell whose closed region contains `p`.
    fn locate(&self, p: &Vector3<f64>, hint: u32, rng: &mut rand_chacha::ChaCha12Rng) -> u32 {
        let mut t = hint;
        if !self.cells[t as usize].alive || self.cells[t as usize].infinite_slot().is_some() {
            t = self
                .cells
                .iter()
                .position(|c| c.alive && c.infinite_slot().is_none())
                .expect("complex always holds a finite cell") as u32;
        }
        let max_steps = 4 * self.cells.len() + 64;
        let mut steps = 0usize;
        loop {
            if self.cells[t as usize].infinite_slot().is_some() {
                return t;
            }
            // Stochastic face order breaks walk cycles on degenerate input.
            let r = (rng.next_u64() % 4) as usize;
            let mut moved = false;
            for k in 0..4 {
                let i = (k + r) % 4;
                let f = self.face_verts(t, i);
                let s = orient_face(self.point(f[0]), self.point(f[1]), self.point(f[2]), p);
                if s > 0 {
                    t = self.cells[t as usize].neighbors[i];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return t;
            }
            steps += 1;
            if steps > max_steps {
                // Extremely degenerate walk; fall back to an exhaustive scan.
                return self
                    .cells
                    .iter()
                    .enumerate()
                    .position(|(i, c)| c.alive && self.in_conflict(i as u32, p))
                    .expect("some cell is always in conflict") as u32;
            }
        }
    }

    /// Inserts point `idx`. Returns a new finite cell usable as the next walk
    /// hint, or None when the point was a duplicate.
    fn insert(
        &mut self,
        idx: u32,
        hint: u32,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> Result<Option<u32>> {
        let p = self.points[idx as usize];
        let start = self.locate(&p, hint, rng);
        for &v in &self.cells[start as usize].verts {
            if v != INF && *self.point(v) == p {
                self.duplicate_count += 1;
                return Ok(None);
            }
        }
        debug_assert!(self.in_conflict(start, &p));

        // Conflict region by BFS; discovery order is deterministic.
        let mut conflict: Vec<u32> = vec![start];
        let mut in_set = vec![false; self.cells.len()];
        in_set[start as usize] = true;
        let mut cursor = 0;
        while cursor < conflict.len() {
            let t = conflict[cursor];
            cursor += 1;
            for i in 0..4 {
                let n = self.cells[t as usize].neighbors[i];
                if !in_set[n as usize] && self.in_conflict(n, &p) {
                    in_set[n as usize] = true;
                    conflict.push(n);
                }
            }
        }

        // Cavity boundary: faces whose outer neighbor is not in conflict.
        let mut boundary: Vec<(u32, usize)> = Vec::new();
        for &t in &conflict {
            for i in 0..4 {
                let n = self.cells[t as usize].neighbors[i];
                if !in_set[n as usize] {
                    boundary.push((t, i));
                }
            }
        }
        if boundary.is_empty() {
            return Err(Error::DegenerateGeometry(format!(
                "empty cavity boundary while inserting point {idx}"
            )));
        }

        // Refill: one new cell per boundary face, glued to the old outside
        // neighbor, then stitched to its siblings across the cavity ring.
        let mut ring: Vec<(u32, u32, u32, usize)> = Vec::new();
        let mut hint_out = None;
        for &(t_in, slot) in &boundary {
            let f = self.face_verts(t_in, slot);
            let t_out = self.cells[t_in as usize].neighbors[slot];
            // Reversing the outward face and appending p keeps the stored
            // orientation positive.
            let fresh = self.alloc([f[0], f[2], f[1], idx]);
            self.cells[fresh as usize].neighbors[3] = t_out;
            let back = self.cells[t_out as usize]
                .neighbors
                .iter()
                .position(|&n| n == t_in)
                .expect("neighbor links are mutual");
            self.cells[t_out as usize].neighbors[back] = fresh;
            if self.cells[fresh as usize].infinite_slot().is_none() {
                hint_out = Some(fresh);
            }
            for s in 0..3usize {
                let nf = self.face_verts(fresh, s);
                let mut edge: Vec<u32> = nf.iter().copied().filter(|&v| v != idx).collect();
                edge.sort_unstable();
                ring.push((edge[0], edge[1], fresh, s));
            }
        }
        ring.sort_unstable();
        if ring.len() % 2 != 0 {
            return Err(Error::DegenerateGeometry(format!(
                "non-manifold cavity while inserting point {idx}"
            )));
        }
        for pair in ring.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            if (a.0, a.1) != (b.0, b.1) {
                return Err(Error::DegenerateGeometry(format!(
                    "non-manifold cavity while inserting point {idx}"
                )));
            }
            self.cells[a.2 as usize].neighbors[a.3] = b.2;
            self.cells[b.2 as usize].neighbors[b.3] = a.2;
        }
        for &t in &conflict {
            self.cells[t as usize].alive = false;
        }
        Ok(hint_out)
    }

    /// Structural validation used by tests: orientation of every finite cell,
    /// mutual neighbor links, and the hull convention for infinite cells.
    #[cfg(test)]
    pub fn check_invariants(&self) {
        for (id, c) in self.cells.iter().enumerate() {
            if !c.alive {
                continue;
            }
            if let Some(k) = c.infinite_slot() {
                let f = self.face_verts(id as u32, k);
                let fin = c.neighbors[k];
                let fc = &self.cells[fin as usize];
                assert!(fc.alive && fc.infinite_slot().is_none());
                let opp = fc
                    .verts
                    .iter()
                    .find(|v| !f.contains(v))
                    .expect("finite neighbor has an opposite vertex");
                assert_eq!(
                    orient_face(
                        self.point(f[0]),
                        self.point(f[1]),
                        self.point(f[2]),
                        self.point(*opp)
                    ),
                    1,
                    "hull face of cell {id} badly oriented"
                );
            } else {
                let [a, b, cc, d] = c.verts;
                assert_eq!(
                    orient(self.point(a), self.point(b), self.point(cc), self.point(d)),
                    1,
                    "finite cell {id} not positively oriented"
                );
            }
            for i in 0..4 {
                let n = c.neighbors[i];
                assert!(self.cells[n as usize].alive, "dead neighbor of {id}");
                assert!(
                    self.cells[n as usize].neighbors.contains(&(id as u32)),
                    "neighbor link of {id} not mutual"
                );
            }
        }
    }
}

/// Sign of det[b−a, c−a, p−a]; +1 when p is on the outer side of the
/// outward-oriented face (a, b, c).
fn orient_face(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, p: &Vector3<f64>) -> i8 {
    orient(a, b, c, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn single_tet() {
        let pts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.)];
        let tri = Tetrahedralization::build(&pts).unwrap();
        tri.check_invariants();
        assert_eq!(tri.finite_cells(), vec![[0, 1, 2, 3]]);
    }

    #[test]
    fn centroid_splits_into_four() {
        let pts = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(0., 1., 0.),
            v(0., 0., 1.),
            v(0.25, 0.25, 0.25),
        ];
        let tri = Tetrahedralization::build(&pts).unwrap();
        tri.check_invariants();
        let cells = tri.finite_cells();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|t| t.contains(&4)));
    }

    #[test]
    fn cube_corners_are_handled() {
        // All eight corners are cospherical: every tie-break path is taken.
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(v(x, y, z));
                }
            }
        }
        let tri = Tetrahedralization::build(&pts).unwrap();
        tri.check_invariants();
        let cells = tri.finite_cells();
        // A cube decomposes into 5 or 6 tetrahedra depending on tie-breaks.
        assert!(
            cells.len() == 5 || cells.len() == 6,
            "got {} cells",
            cells.len()
        );
        let total_volume: f64 = cells
            .iter()
            .map(|t| {
                let m = nalgebra::Matrix3::from_columns(&[
                    pts[t[1]] - pts[t[0]],
                    pts[t[2]] - pts[t[0]],
                    pts[t[3]] - pts[t[0]],
                ]);
                m.determinant() / 6.0
            })
            .sum();
        assert!((total_volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coplanar_input_rejected() {
        let pts = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(0., 1., 0.),
            v(1., 1., 0.),
            v(0.3, 0.7, 0.),
        ];
        match Tetrahedralization::build(&pts) {
            Err(Error::DegenerateGeometry(_)) => {}
            Err(other) => panic!("expected degenerate-geometry error, got {other:?}"),
            Ok(_) => panic!("expected degenerate-geometry error, got a triangulation"),
        }
    }

    #[test]
    fn integer_lattice_tetrahedralizes_and_fills_volume() {
        // A 4×4×4 lattice is saturated with cospherical and coplanar
        // subsets; every tie-break path gets exercised. The hull is the
        // 3×3×3 cube, so the cell volumes must sum to 27 exactly.
        let mut pts = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    pts.push(v(x as f64, y as f64, z as f64));
                }
            }
        }
        let tri = Tetrahedralization::build(&pts).unwrap();
        tri.check_invariants();
        let total: f64 = tri
            .finite_cells()
            .iter()
            .map(|t| {
                let m = nalgebra::Matrix3::from_columns(&[
                    pts[t[1]] - pts[t[0]],
                    pts[t[2]] - pts[t[0]],
                    pts[t[3]] - pts[t[0]],
                ]);
                m.determinant() / 6.0
            })
            .sum();
        assert!((total - 27.0).abs() < 1e-9, "lattice volume {total}");
    }

    #[test]
    fn cospherical_cloud_on_unit_sphere() {
        // Every point lies on one common sphere: the global worst case for
        // in-sphere ties. Any valid triangulation of the hull is acceptable;
        // structural invariants and positive volumes must hold.
        let mut pts = Vec::new();
        let n = 60;
        for i in 0..n {
            // Fibonacci sphere: deterministic, no duplicates.
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let theta = golden * i as f64;
            pts.push(v(r * theta.cos(), y, r * theta.sin()));
        }
        let tri = Tetrahedralization::build(&pts).unwrap();
        tri.check_invariants();
        let cells = tri.finite_cells();
        assert!(!cells.is_empty());
        for t in &cells {
            assert_eq!(
                orient(&pts[t[0]], &pts[t[1]], &pts[t[2]], &pts[t[3]]),
                1,
                "flat cell {t:?}"
            );
        }
    }

    #[test]
    fn duplicates_are_skipped() {
        let pts = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(0., 1., 0.),
            v(0., 0., 1.),
            v(1., 0., 0.),
        ];
        let tri = Tetrahedralization::build(&pts).unwrap();
        assert_eq!(tri.duplicate_count, 1);
        assert_eq!(tri.finite_cells(), vec![[0, 1, 2, 3]]);
    }
}
