//! Linear (P1) finite elements on triangle meshes.
//!
//! All coefficient-dependent integrals use the three-point edge-midpoint rule,
//! which is exact for quadratics. Element contributions are computed
//! independently (in parallel for large meshes) and scattered into the global
//! arrays in element order, so results do not depend on the thread count.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::SparseMatrix;
use crate::text;

/// Relative residual for the conjugate gradient solver.
pub const CG_RTOL: f64 = 1e-10;

/// Element count from which element loops run in parallel.
const PAR_THRESHOLD: usize = 2048;

pub type Tensor = [[f64; 2]; 2];

/// One value per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        NodalField { values }
    }

    pub fn zeros(n: usize) -> Self {
        NodalField { values: vec![0.0; n] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        NodalField {
            values: mesh.nodes().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() == n {
            Ok(())
        } else {
            Err(Error::MeshMismatch(n, self.len()))
        }
    }

    /// `self - other`
    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.check_len(self.len())?;
        Ok(NodalField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self> {
        other.check_len(self.len())?;
        Ok(NodalField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        NodalField {
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dump(&self) -> String {
        let mut s = format!("field {}\n", self.len());
        for v in &self.values {
            let _ = writeln!(s, "{}", text::fmt(*v));
        }
        s
    }

    pub fn load(input: &str) -> Result<Self> {
        let mut lines = input.lines();
        let n = text::header_value(lines.next(), &["field"], "field")?[0];
        let values = (0..n)
            .map(|_| text::parse_f64(lines.next().map(str::trim), "field"))
            .collect::<Result<Vec<_>>>()?;
        Ok(NodalField { values })
    }
}

/// Geometry of one P1 element.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
    /// Edge midpoints `(p0+p1)/2, (p1+p2)/2, (p2+p0)/2`.
    pub quad_points: [Point; 3],
}

/// Basis function values at the edge-midpoint quadrature points: row q, column i.
const PHI_AT_QUAD: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

impl Element {
    pub fn new(p: [Point; 3]) -> Self {
        let area = crate::mesh::signed_area(p[0], p[1], p[2]);
        let inv = 1.0 / (2.0 * area);
        let mut grads = [[0.0; 2]; 3];
        for (i, g) in grads.iter_mut().enumerate() {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            *g = [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
        }
        let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        Element {
            area,
            grads,
            quad_points: [mid(p[0], p[1]), mid(p[1], p[2]), mid(p[2], p[0])],
        }
    }

    /// Gradient of the P1 function with nodal values `v`.
    pub fn gradient(&self, v: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += v[i] * self.grads[i][0];
            g[1] += v[i] * self.grads[i][1];
        }
        g
    }

    /// Unit-coefficient stiffness matrix, row-major.
    pub fn laplace(&self) -> [f64; 9] {
        let mut k = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (self.grads[i], self.grads[j]);
                k[3 * i + j] = self.area * (a[0] * b[0] + a[1] * b[1]);
            }
        }
        k
    }

    pub fn mass(&self) -> [f64; 9] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [d, o, o, o, d, o, o, o, d]
    }
}

/// Sparsity pattern of the P1 matrices of one mesh topology together with
/// the scatter positions of every element entry. Shared by all meshes that
/// differ only in node coordinates.
#[derive(Debug, Clone)]
pub struct Assembler {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    scatter: Vec<[usize; 9]>,
}

impl Assembler {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_nodes();
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in mesh.triangles() {
            for &a in t {
                adj[a].extend_from_slice(t);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = vec![];
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let scatter = mesh
            .triangles()
            .iter()
            .map(|t| {
                let mut pos = [0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        let r = row_ptr[t[i]]..row_ptr[t[i] + 1];
                        pos[3 * i + j] = r.start + col_idx[r].binary_search(&t[j]).unwrap();
                    }
                }
                pos
            })
            .collect();
        Assembler {
            n,
            row_ptr,
            col_idx,
            scatter,
        }
    }

    fn check_mesh(&self, mesh: &Mesh) {
        assert_eq!(mesh.n_nodes(), self.n, "mesh does not match assembler topology");
        assert_eq!(mesh.n_triangles(), self.scatter.len(), "mesh does not match assembler topology");
    }

    fn element_map<T: Send>(&self, mesh: &Mesh, f: impl Fn(usize, &Element) -> T + Sync) -> Vec<T> {
        let run = |t: usize| f(t, &Element::new(mesh.vertices(t)));
        if mesh.n_triangles() >= PAR_THRESHOLD {
            (0..mesh.n_triangles()).into_par_iter().map(run).collect()
        } else {
            (0..mesh.n_triangles()).map(run).collect()
        }
    }

    fn scatter_matrix(&self, locals: &[[f64; 9]]) -> SparseMatrix {
        let mut values = vec![0.0; self.col_idx.len()];
        for (pos, local) in self.scatter.iter().zip(locals) {
            for k in 0..9 {
                values[pos[k]] += local[k];
            }
        }
        SparseMatrix::from_csr(self.n, self.n, self.row_ptr.clone(), self.col_idx.clone(), values)
    }

    fn scatter_vector(&self, mesh: &Mesh, locals: &[[f64; 3]]) -> Vec<f64> {
        let mut b = vec![0.0; self.n];
        for (t, local) in mesh.triangles().iter().zip(locals) {
            for i in 0..3 {
                b[t[i]] += local[i];
            }
        }
        b
    }

    /// `K_ij = Σ_T ∫_T c ∇φ_i·∇φ_j`, with `c` sampled at the edge midpoints.
    pub fn stiffness(&self, mesh: &Mesh, coeff: impl Fn(Point) -> f64 + Sync) -> Result<SparseMatrix> {
        self.check_mesh(mesh);
        let locals = self.element_map(mesh, |_, e| {
            let mut c = 0.0;
            for q in &e.quad_points {
                let v = coeff(*q);
                if !(v > 0.0) {
                    return Err(Error::NonPositiveCoefficient { value: v, x: q[0], y: q[1] });
                }
                c += v;
            }
            let c = c / 3.0;
            let mut k = e.laplace();
            k.iter_mut().for_each(|v| *v *= c);
            Ok(k)
        });
        let locals = locals.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(self.scatter_matrix(&locals))
    }

    /// Stiffness for a matrix-valued coefficient `tensor(triangle, point)`.
    pub fn stiffness_tensor(&self, mesh: &Mesh, tensor: impl Fn(usize, Point) -> Tensor + Sync) -> Result<SparseMatrix> {
        self.check_mesh(mesh);
        let locals = self.element_map(mesh, |t, e| {
            let mut a = [[0.0; 2]; 2];
            for q in &e.quad_points {
                let m = tensor(t, *q);
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if !(det > 0.0 && m[0][0] > 0.0) {
                    return Err(Error::NonPositiveCoefficient { value: det, x: q[0], y: q[1] });
                }
                for r in 0..2 {
                    for s in 0..2 {
                        a[r][s] += m[r][s] / 3.0;
                    }
                }
            }
            let mut k = [0.0; 9];
            for i in 0..3 {
                let gi = e.grads[i];
                let agi = [a[0][0] * gi[0] + a[0][1] * gi[1], a[1][0] * gi[0] + a[1][1] * gi[1]];
                for j in 0..3 {
                    let gj = e.grads[j];
                    k[3 * i + j] = e.area * (agi[0] * gj[0] + agi[1] * gj[1]);
                }
            }
            Ok(k)
        });
        let locals = locals.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(self.scatter_matrix(&locals))
    }

    pub fn mass(&self, mesh: &Mesh) -> SparseMatrix {
        self.check_mesh(mesh);
        let locals = self.element_map(mesh, |_, e| e.mass());
        self.scatter_matrix(&locals)
    }

    /// `b_i = ∫ f φ_i` with the edge-midpoint rule.
    pub fn load(&self, mesh: &Mesh, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        self.load_by_element(mesh, |_, x| f(x))
    }

    /// Load vector for an integrand that may depend on the element.
    pub fn load_by_element(&self, mesh: &Mesh, f: impl Fn(usize, Point) -> f64 + Sync) -> Vec<f64> {
        self.check_mesh(mesh);
        let locals = self.element_map(mesh, |t, e| {
            let fq = e.quad_points.map(|x| f(t, x));
            let mut b = [0.0; 3];
            for (q, row) in PHI_AT_QUAD.iter().enumerate() {
                for i in 0..3 {
                    b[i] += e.area / 3.0 * fq[q] * row[i];
                }
            }
            b
        });
        self.scatter_vector(mesh, &locals)
    }

    /// Load vector of the linearized problem, `b_i = -∫ a_r ∇u0·∇φ_i`.
    pub fn perturbation_load(&self, mesh: &Mesh, a_r: impl Fn(Point) -> f64 + Sync, u0: &NodalField) -> Result<Vec<f64>> {
        self.check_mesh(mesh);
        u0.check_len(self.n)?;
        let u = u0.values();
        let tris = mesh.triangles();
        let locals = self.element_map(mesh, |t, e| {
            let [a, b, c] = tris[t];
            let g = e.gradient([u[a], u[b], u[c]]);
            let r: f64 = e.quad_points.iter().map(|q| a_r(*q)).sum::<f64>() / 3.0;
            let mut out = [0.0; 3];
            for (i, o) in out.iter_mut().enumerate() {
                *o = -e.area * r * (g[0] * e.grads[i][0] + g[1] * e.grads[i][1]);
            }
            out
        });
        Ok(self.scatter_vector(mesh, &locals))
    }
}

pub fn assemble_stiffness(mesh: &Mesh, coeff: impl Fn(Point) -> f64 + Sync) -> Result<SparseMatrix> {
    Assembler::new(mesh).stiffness(mesh, coeff)
}

pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    Assembler::new(mesh).mass(mesh)
}

pub fn assemble_load(mesh: &Mesh, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
    Assembler::new(mesh).load(mesh, f)
}

pub fn assemble_perturbation_load(mesh: &Mesh, a_r: impl Fn(Point) -> f64 + Sync, u0: &NodalField) -> Result<Vec<f64>> {
    Assembler::new(mesh).perturbation_load(mesh, a_r, u0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Stiffness matrix restricted to interior nodes with a Jacobi
/// preconditioner, ready for repeated solves with different loads.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    n: usize,
    interior: Vec<usize>,
    matrix: SparseMatrix,
    inv_diag: Vec<f64>,
    rtol: f64,
}

impl DirichletSystem {
    pub fn new(k: &SparseMatrix, boundary: &[usize]) -> Self {
        let n = k.n_rows();
        let mut is_boundary = vec![false; n];
        for &b in boundary {
            is_boundary[b] = true;
        }
        let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
        let matrix = k.submatrix(&interior);
        let inv_diag = matrix.diagonal().iter().map(|d| 1.0 / d).collect();
        DirichletSystem {
            n,
            interior,
            matrix,
            inv_diag,
            rtol: CG_RTOL,
        }
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Preconditioned conjugate gradients on the interior unknowns; boundary
    /// values are exactly zero.
    pub fn solve(&self, b: &[f64]) -> Result<(NodalField, SolveStats)> {
        assert_eq!(b.len(), self.n);
        let m = self.interior.len();
        let rhs: Vec<f64> = self.interior.iter().map(|&i| b[i]).collect();
        let bnorm = norm(&rhs);
        let mut x = vec![0.0; m];
        let mut stats = SolveStats::default();
        if bnorm > 0.0 {
            let cap = 10 * m.max(1);
            let mut r = rhs;
            let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(r, d)| r * d).collect();
            let mut p = z.clone();
            let mut ap = vec![0.0; m];
            let mut rz = dot(&r, &z);
            let mut res = 1.0;
            loop {
                if res <= self.rtol {
                    break;
                }
                if stats.iterations >= cap {
                    return Err(Error::SolverDiverged {
                        iterations: stats.iterations,
                        residual: res,
                    });
                }
                self.matrix.matvec_into(&p, &mut ap);
                let alpha = rz / dot(&p, &ap);
                for k in 0..m {
                    x[k] += alpha * p[k];
                    r[k] -= alpha * ap[k];
                }
                stats.iterations += 1;
                res = norm(&r) / bnorm;
                for k in 0..m {
                    z[k] = r[k] * self.inv_diag[k];
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for k in 0..m {
                    p[k] = z[k] + beta * p[k];
                }
            }
            stats.relative_residual = res;
        }
        let mut u = vec![0.0; self.n];
        for (k, &i) in self.interior.iter().enumerate() {
            u[i] = x[k];
        }
        Ok((NodalField::new(u), stats))
    }
}

pub fn solve_dirichlet(k: &SparseMatrix, b: &[f64], boundary: &[usize]) -> Result<NodalField> {
    DirichletSystem::new(k, boundary).solve(b).map(|(u, _)| u)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sobolev norms of P1 fields on a fixed mesh.
#[derive(Debug, Clone)]
pub struct Norms {
    mesh: Mesh,
    laplace: SparseMatrix,
    mass: SparseMatrix,
}

impl Norms {
    pub fn new(mesh: &Mesh) -> Self {
        let asm = Assembler::new(mesh);
        let laplace = asm.stiffness(mesh, |_| 1.0).expect("unit coefficient is positive");
        Norms {
            mesh: mesh.clone(),
            laplace,
            mass: asm.mass(mesh),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn laplace(&self) -> &SparseMatrix {
        &self.laplace
    }

    /// `sqrt(vᵀ (K₁ + M) v)`
    pub fn h1(&self, v: &NodalField) -> f64 {
        let v = v.values();
        (self.laplace.quadratic_form(v) + self.mass.quadratic_form(v)).max(0.0).sqrt()
    }

    pub fn l2(&self, v: &NodalField) -> f64 {
        self.mass.quadratic_form(v.values()).max(0.0).sqrt()
    }

    /// `Σ_T ∫_T |v| + ‖∇v‖₂`, with |v| integrated by the edge-midpoint rule.
    pub fn w11(&self, v: &NodalField) -> f64 {
        let v = v.values();
        let mut total = 0.0;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let e = Element::new(self.mesh.vertices(t));
            let vals = [v[tri[0]], v[tri[1]], v[tri[2]]];
            let g = e.gradient(vals);
            let mut abs = 0.0;
            for row in &PHI_AT_QUAD {
                abs += (row[0] * vals[0] + row[1] * vals[1] + row[2] * vals[2]).abs();
            }
            total += e.area * (abs / 3.0 + g[0].hypot(g[1]));
        }
        total
    }

    /// H¹ distance between the P1 field `v` and a smooth function given by
    /// its values and gradient, integrated element by element.
    pub fn h1_error(&self, v: &NodalField, exact: impl Fn(Point) -> f64, grad: impl Fn(Point) -> [f64; 2]) -> f64 {
        let v = v.values();
        let mut total = 0.0;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let e = Element::new(self.mesh.vertices(t));
            let vals = [v[tri[0]], v[tri[1]], v[tri[2]]];
            let g = e.gradient(vals);
            for (q, row) in PHI_AT_QUAD.iter().enumerate() {
                let x = e.quad_points[q];
                let vh = row[0] * vals[0] + row[1] * vals[1] + row[2] * vals[2];
                let ge = grad(x);
                let d = [g[0] - ge[0], g[1] - ge[1]];
                total += e.area / 3.0 * ((vh - exact(x)).powi(2) + d[0] * d[0] + d[1] * d[1]);
            }
        }
        total.sqrt()
    }
}

pub fn h1_norm(mesh: &Mesh, v: &NodalField) -> f64 {
    Norms::new(mesh).h1(v)
}

pub fn l2_norm(mesh: &Mesh, v: &NodalField) -> f64 {
    Norms::new(mesh).l2(v)
}

pub fn w11_norm(mesh: &Mesh, v: &NodalField) -> f64 {
    Norms::new(mesh).w11(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disc_mesh;
    use std::f64::consts::PI;

    fn unit_triangle() -> Mesh {
        Mesh::from_parts(0, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![])
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn reference_element_matrices() {
        let m = unit_triangle();
        let k = assemble_stiffness(&m, |_| 1.0).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            assert_close(&k.to_dense()[i], &expect[i], 1e-15);
        }
        let k2 = assemble_stiffness(&m, |_| 2.0).unwrap();
        assert_eq!(k2, k.scaled(2.0));

        let mass = assemble_mass(&m);
        let a = 0.5 / 12.0;
        let expect = [[2.0 * a, a, a], [a, 2.0 * a, a], [a, a, 2.0 * a]];
        for i in 0..3 {
            assert_close(&mass.to_dense()[i], &expect[i], 1e-16);
        }
    }

    #[test]
    fn nonpositive_coefficient_is_rejected() {
        let m = build_disc_mesh(1);
        let err = assemble_stiffness(&m, |p| p[0] + 0.1).unwrap_err();
        assert!(matches!(err, Error::NonPositiveCoefficient { .. }));
        assert!(assemble_stiffness(&m, |_| f64::NAN).is_err());
    }

    #[test]
    fn stiffness_structure() {
        let m = build_disc_mesh(3);
        let k = assemble_stiffness(&m, |p| 1.0 + 0.3 * p[0] * p[1]).unwrap();
        assert!(k.asymmetry() <= 1e-12 * k.max_abs());
        let ones = vec![1.0; m.n_nodes()];
        let k1 = assemble_stiffness(&m, |_| 1.0).unwrap();
        for (i, s) in k1.matvec(&ones).iter().enumerate() {
            assert!(s.abs() < 1e-12, "row {i} sums to {s}");
        }
        // additivity in the coefficient
        let a = |p: Point| 1.0 + p[0].powi(2);
        let b = |p: Point| 2.0 + (3.0 * p[1]).sin();
        let ka = assemble_stiffness(&m, a).unwrap();
        let kb = assemble_stiffness(&m, b).unwrap();
        let kab = assemble_stiffness(&m, |p| a(p) + b(p)).unwrap();
        let sum: Vec<f64> = ka.values().iter().zip(kb.values()).map(|(x, y)| x + y).collect();
        assert_close(kab.values(), &sum, 1e-12);
    }

    #[test]
    fn mass_and_load() {
        let m = build_disc_mesh(4);
        let mass = assemble_mass(&m);
        assert!((mass.sum() - m.area()).abs() < 1e-12);
        assert!((mass.sum() - PI).abs() < 2e-2);

        let b1 = assemble_load(&m, |_| 1.0);
        let rows = mass.matvec(&vec![1.0; m.n_nodes()]);
        assert_close(&b1, &rows, 1e-15);
        assert!(assemble_load(&m, |_| 0.0).iter().all(|&v| v == 0.0));
        let bx: f64 = assemble_load(&m, |p| p[0]).iter().sum();
        assert!(bx.abs() < 1e-12);
    }

    #[test]
    fn perturbation_load_is_linear() {
        let m = build_disc_mesh(3);
        let u0 = NodalField::interpolate(&m, |p| 1.0 - p[0] * p[0] - 0.5 * p[1] * p[1]);
        let zero = assemble_perturbation_load(&m, |_| 0.0, &u0).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let c = 0.37;
        let b = assemble_perturbation_load(&m, |_| c, &u0).unwrap();
        let k1 = assemble_stiffness(&m, |_| 1.0).unwrap();
        let expect: Vec<f64> = k1.matvec(u0.values()).iter().map(|v| -c * v).collect();
        assert_close(&b, &expect, 1e-14);

        let ar = |p: Point| (p[0] - p[1]).abs();
        let b1 = assemble_perturbation_load(&m, ar, &u0).unwrap();
        let b2 = assemble_perturbation_load(&m, |p| 2.0 * ar(p), &u0).unwrap();
        for (x, y) in b1.iter().zip(&b2) {
            assert_eq!(2.0 * x, *y);
        }
        assert!(assemble_perturbation_load(&m, ar, &NodalField::zeros(3)).is_err());
    }

    #[test]
    fn poisson_on_disc() {
        let analytic = |p: Point| 0.25 * (1.0 - p[0] * p[0] - p[1] * p[1]);
        let m = build_disc_mesh(5);
        let k = assemble_stiffness(&m, |_| 1.0).unwrap();
        let b = assemble_load(&m, |_| 1.0);
        let (u, stats) = DirichletSystem::new(&k, m.boundary()).solve(&b).unwrap();
        assert!((u.values()[0] - analytic([0.0, 0.0])).abs() < 5e-3);
        assert!(stats.relative_residual <= CG_RTOL);
        for &i in m.boundary() {
            assert_eq!(u.values()[i], 0.0);
        }
        // residual on interior rows
        let r = k.matvec(u.values());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m.n_nodes() {
            if !m.is_boundary(i) {
                num += (r[i] - b[i]).powi(2);
                den += b[i] * b[i];
            }
        }
        assert!(num.sqrt() <= 1.01e-10 * den.sqrt());

        let k2 = assemble_stiffness(&m, |_| 2.0).unwrap();
        let u2 = solve_dirichlet(&k2, &b, m.boundary()).unwrap();
        for (a, b) in u2.values().iter().zip(u.values()) {
            assert!((2.0 * a - b).abs() < 1e-9 * u.max_abs());
        }

        let zero = solve_dirichlet(&k, &vec![0.0; m.n_nodes()], m.boundary()).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iteration_cap_reports_divergence() {
        let m = build_disc_mesh(4);
        let k = assemble_stiffness(&m, |_| 1.0).unwrap();
        let b = assemble_load(&m, |_| 1.0);
        let sys = DirichletSystem::new(&k, m.boundary()).with_rtol(0.0);
        assert!(matches!(sys.solve(&b), Err(Error::SolverDiverged { .. })));
    }

    #[test]
    fn norms_of_simple_fields() {
        let m = build_disc_mesh(4);
        let norms = Norms::new(&m);
        let zero = NodalField::zeros(m.n_nodes());
        assert_eq!(norms.h1(&zero), 0.0);
        assert_eq!(norms.w11(&zero), 0.0);
        assert_eq!(norms.l2(&zero), 0.0);

        let x1 = NodalField::interpolate(&m, |p| p[0]);
        let h1_sq = norms.h1(&x1).powi(2);
        assert!((h1_sq - 1.25 * PI).abs() < 3e-2, "{h1_sq}");

        let one = NodalField::new(vec![1.0; m.n_nodes()]);
        assert!((norms.w11(&one) - PI).abs() < 2e-2);
        assert!((norms.w11(&one) - m.area()).abs() < 1e-12);
        assert!((h1_norm(&m, &one).powi(2) - m.area()).abs() < 1e-12);
        assert!((l2_norm(&m, &one).powi(2) - m.area()).abs() < 1e-12);
        assert!((w11_norm(&m, &x1) - norms.w11(&x1)).abs() == 0.0);
    }

    #[test]
    fn field_dump_round_trip() {
        let f = NodalField::new(vec![0.1, -1.0 / 3.0, 1e-300, 0.0]);
        let s = f.dump();
        assert!(s.starts_with("field 4\n"));
        assert_eq!(NodalField::load(&s).unwrap(), f);
        assert!(NodalField::load("field 2\n1.0\n").is_err());
    }
}
