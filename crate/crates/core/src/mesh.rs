//! Triangulations of the unit disc.
//!
//! The coarse mesh consists of four affine patches around the origin. Each
//! refinement splits every triangle into four children through its edge
//! midpoints; midpoints of boundary edges are pushed radially onto the unit
//! circle, so the polygonal boundary converges to the circle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::text;

pub type Point = [f64; 2];

/// Number of coarse patches.
pub const PATCHES: usize = 4;

/// Relative area below which a deformed triangle counts as inverted.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    level: u32,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<usize>,
    patch: Vec<u32>,
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

impl Mesh {
    /// Builds a mesh from raw parts. Patch ids are taken from the refinement
    /// ordering (children of triangle `t` are `4t..4t+4`).
    pub fn from_parts(level: u32, nodes: Vec<Point>, triangles: Vec<[usize; 3]>, mut boundary: Vec<usize>) -> Self {
        boundary.sort_unstable();
        boundary.dedup();
        let shift = 2 * level;
        let patch = (0..triangles.len()).map(|t| (t >> shift) as u32).collect();
        Mesh {
            level,
            nodes,
            triangles,
            boundary,
            patch,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Sorted boundary node indices.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn patch_ids(&self) -> &[u32] {
        &self.patch
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary.binary_search(&node).is_ok()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn min_signed_area(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.triangle_area(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let p = self.vertices(t);
            for i in 0..3 {
                let (o, u, v) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let e1 = [u[0] - o[0], u[1] - o[1]];
                let e2 = [v[0] - o[0], v[1] - o[1]];
                let cos = (e1[0] * e2[0] + e1[1] * e2[1]) / (e1[0].hypot(e1[1]) * e2[0].hypot(e2[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Longest edge length.
    pub fn mesh_width(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.n_triangles() {
            let p = self.vertices(t);
            for i in 0..3 {
                let (u, v) = (p[i], p[(i + 1) % 3]);
                h = h.max((u[0] - v[0]).hypot(u[1] - v[1]));
            }
        }
        h
    }

    /// Same connectivity, nodes moved by `displacement`.
    pub fn displace(&self, displacement: &[Point]) -> Result<Mesh> {
        if displacement.len() != self.n_nodes() {
            return Err(Error::Dimension {
                expected: self.n_nodes(),
                got: displacement.len(),
            });
        }
        let nodes: Vec<Point> = self
            .nodes
            .iter()
            .zip(displacement)
            .map(|(x, d)| [x[0] + d[0], x[1] + d[1]])
            .collect();
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let area = signed_area(nodes[a], nodes[b], nodes[c]);
            if area <= DEGENERATE_AREA_RATIO * self.triangle_area(t) {
                return Err(Error::DegenerateDeformation { triangle: t, area });
            }
        }
        Ok(Mesh {
            nodes,
            ..self.clone()
        })
    }

    /// Writes the ASCII mesh format.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "nodes {} triangles {} level {}",
            self.n_nodes(),
            self.n_triangles(),
            self.level
        );
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", text::fmt(p[0]), text::fmt(p[1]));
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let b: Vec<String> = self.boundary.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "{}", b.join(" "));
        s
    }

    pub fn load(input: &str) -> Result<Mesh> {
        const WHAT: &str = "mesh";
        let mut lines = input.lines();
        let h = text::header_value(lines.next(), &["nodes", "triangles", "level"], WHAT)?;
        let (n, m, level) = (h[0], h[1], h[2] as u32);
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let mut toks = lines.next().unwrap_or("").split_whitespace();
            nodes.push([text::parse_f64(toks.next(), WHAT)?, text::parse_f64(toks.next(), WHAT)?]);
        }
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let mut toks = lines.next().unwrap_or("").split_whitespace();
            let mut t = [0; 3];
            for v in &mut t {
                *v = text::parse_usize(toks.next(), WHAT)?;
                if *v >= n {
                    return Err(Error::format(WHAT, format!("node index {v} out of range")));
                }
            }
            triangles.push(t);
        }
        let boundary = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| text::parse_usize(Some(t), WHAT))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mesh::from_parts(level, nodes, triangles, boundary))
    }
}

/// Unit disc mesh with `4 * 4^level` triangles.
pub fn build_disc_mesh(level: u32) -> Mesh {
    let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let triangles = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]];
    let mut mesh = Mesh::from_parts(0, nodes, triangles, vec![1, 2, 3, 4]);
    for _ in 0..level {
        mesh = refine(&mesh);
    }
    mesh
}

/// Regular red refinement with radial projection of boundary midpoints.
///
/// Parent nodes keep their indices; new midpoints follow, ordered by their
/// (smaller, larger) parent index pair.
pub fn refine(mesh: &Mesh) -> Mesh {
    // edge -> number of adjacent triangles
    let mut edges: BTreeMap<(usize, usize), u8> = BTreeMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }

    let mut nodes = mesh.nodes.clone();
    let mut boundary = mesh.boundary.clone();
    let mut midpoint = BTreeMap::new();
    for (&(a, b), &count) in &edges {
        let (p, q) = (mesh.nodes[a], mesh.nodes[b]);
        let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        if count == 1 {
            let r = m[0].hypot(m[1]);
            m = [m[0] / r, m[1] / r];
            boundary.push(nodes.len());
        }
        midpoint.insert((a, b), nodes.len());
        nodes.push(m);
    }

    let mid = |a: usize, b: usize| midpoint[&(a.min(b), a.max(b))];
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut patch = Vec::with_capacity(4 * mesh.n_triangles());
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        patch.extend([mesh.patch[t]; 4]);
    }
    boundary.sort_unstable();
    Mesh {
        level: mesh.level + 1,
        nodes,
        triangles,
        boundary,
        patch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::f64::consts::PI;

    /// Area of the regular n-gon inscribed in the unit circle.
    fn inscribed_polygon_area(n: usize) -> f64 {
        0.5 * n as f64 * (2.0 * PI / n as f64).sin()
    }

    #[test]
    fn coarse_mesh() {
        let m = build_disc_mesh(0);
        assert_eq!(m.n_triangles(), 4);
        assert_eq!(m.n_nodes(), 5);
        assert_eq!(m.boundary(), &[1, 2, 3, 4]);
        assert_eq!(m.area(), 2.0);
    }

    #[test]
    fn triangle_counts_and_orientation() {
        for level in 0..=6 {
            let m = build_disc_mesh(level);
            assert_eq!(m.n_triangles(), PATCHES * 4usize.pow(level));
            assert!(m.min_signed_area() > 0.0);
            for &b in m.boundary() {
                let p = m.nodes()[b];
                assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
            }
            // Euler characteristic of a disc: V - E + F = 1
            let mut edges = HashMap::new();
            for t in m.triangles() {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            assert!(edges.values().all(|&c| c == 1 || c == 2));
            let n_boundary_edges = edges.values().filter(|&&c| c == 1).count();
            assert_eq!(n_boundary_edges, m.boundary().len());
            assert_eq!(m.n_nodes() as i64 - edges.len() as i64 + m.n_triangles() as i64, 1);
        }
    }

    #[test]
    fn area_converges_like_inscribed_polygon() {
        let mut errors = vec![];
        for level in 0..=5 {
            let m = build_disc_mesh(level);
            let n_boundary = m.boundary().len();
            assert_eq!(n_boundary, 4 << level);
            let area = m.area();
            // projected chord midpoints bisect the arc, so the boundary is a
            // regular inscribed polygon
            assert!((area - inscribed_polygon_area(n_boundary)).abs() < 1e-12);
            errors.push(PI - area);
        }
        assert!(errors[4] < 2e-2);
        for w in errors[2..].windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn level_two_has_64_triangles() {
        assert_eq!(build_disc_mesh(2).n_triangles(), 64);
    }

    #[test]
    fn refine_keeps_parents() {
        let m0 = build_disc_mesh(2);
        let m1 = refine(&m0);
        assert_eq!(m1.n_triangles(), 4 * m0.n_triangles());
        assert_eq!(&m1.nodes()[..m0.n_nodes()], m0.nodes());
        assert_eq!(refine(&build_disc_mesh(0)).n_triangles(), 16);
        assert_eq!(refine(&refine(&m0)), build_disc_mesh(4));
    }

    #[test]
    fn min_angle_bounded() {
        for level in 0..=6 {
            assert!(build_disc_mesh(level).min_angle_degrees() >= 20.0);
        }
    }

    #[test]
    fn patch_ids_follow_coarse_triangles() {
        let m = build_disc_mesh(3);
        for (t, &p) in m.patch_ids().iter().enumerate() {
            assert_eq!(p as usize, t / 64);
            let c = m.vertices(t).iter().fold([0.0; 2], |s, v| [s[0] + v[0], s[1] + v[1]]);
            let angle = c[1].atan2(c[0]).rem_euclid(2.0 * PI);
            assert_eq!((angle / (PI / 2.0)) as u32, p);
        }
    }

    #[test]
    fn displacement_cases() {
        let m = build_disc_mesh(3);
        let zero = vec![[0.0; 2]; m.n_nodes()];
        assert_eq!(m.displace(&zero).unwrap(), m);

        let shift = vec![[0.1, 0.0]; m.n_nodes()];
        let moved = m.displace(&shift).unwrap();
        for t in 0..m.n_triangles() {
            assert!((moved.triangle_area(t) - m.triangle_area(t)).abs() < 1e-15);
        }

        let collapse: Vec<Point> = m.nodes().iter().map(|p| [-p[0], -p[1]]).collect();
        assert!(matches!(m.displace(&collapse), Err(Error::DegenerateDeformation { .. })));

        assert!(matches!(m.displace(&zero[1..]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn displace_back_and_forth() {
        let m = build_disc_mesh(4);
        let d: Vec<Point> = m
            .nodes()
            .iter()
            .map(|p| [0.05 * (3.0 * p[1]).sin(), 0.04 * (2.0 * p[0]).cos()])
            .collect();
        let neg: Vec<Point> = d.iter().map(|v| [-v[0], -v[1]]).collect();
        let back = m.displace(&d).unwrap().displace(&neg).unwrap();
        for (a, b) in back.nodes().iter().zip(m.nodes()) {
            assert!((a[0] - b[0]).abs() <= 1e-14 && (a[1] - b[1]).abs() <= 1e-14);
        }
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let m = build_disc_mesh(3);
        let text = m.dump();
        assert!(text.starts_with("nodes 145 triangles 256 level 3\n"));
        let back = Mesh::load(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.dump(), text);
    }

    #[test]
    fn load_rejects_garbage() {
        assert!(Mesh::load("").is_err());
        assert!(Mesh::load("nodes 1 triangles 0 level 0\nx 0\n\n").is_err());
        assert!(Mesh::load("nodes 1 triangles 1 level 0\n0 0\n0 0 7\n\n").is_err());
    }
}
