//! Per-sample solves of the diffusion problem on the deformed domain.
//!
//! For a sample `(y, z)` the disc is deformed by the vector field at `z`.
//! On the deformed mesh we solve
//!
//! * `-div(a_s ∇u0) = f`, the smooth problem,
//! * `-div(a_s ∇δu) = div(a_r(y) ∇u0)`, its first-order correction,
//! * `-div((a_s + ε a_r(y)) ∇u_ε) = f`, the full problem,
//!
//! all with homogeneous Dirichlet data. The deformed mesh has the reference
//! topology, so nodal vectors are already the pull-backs to the unit disc.

use crate::error::{Error, Result};
use crate::fem::{Assembler, DirichletSystem, NodalField, Norms, SolveStats, Tensor};
use crate::fields::{Sample, ScalarFieldKL, VectorFieldKL, HOLD_ALL};
use crate::mesh::{Mesh, Point};

/// Everything that depends on the domain parameters only.
struct Deformed {
    mesh: Mesh,
    system: DirichletSystem,
    load: Vec<f64>,
}

/// Result of [`SampleSolver::solve_sample`].
#[derive(Debug, Clone)]
pub struct SampleSolve {
    pub u0: NodalField,
    pub delta_u: NodalField,
    /// One solution per requested amplitude.
    pub u_eps: Vec<NodalField>,
    pub stats_u0: SolveStats,
    pub stats_delta_u: SolveStats,
    pub stats_u_eps: Vec<SolveStats>,
    pub min_area: f64,
}

pub struct SampleSolver<'a> {
    mesh: &'a Mesh,
    displacement: &'a VectorFieldKL,
    coefficient: &'a ScalarFieldKL,
    assembler: Assembler,
    norms: Norms,
    source: f64,
}

impl<'a> SampleSolver<'a> {
    pub fn new(mesh: &'a Mesh, displacement: &'a VectorFieldKL, coefficient: &'a ScalarFieldKL) -> Result<Self> {
        if displacement.n_nodes() != mesh.n_nodes() {
            return Err(Error::MeshMismatch(mesh.n_nodes(), displacement.n_nodes()));
        }
        Ok(SampleSolver {
            mesh,
            displacement,
            coefficient,
            assembler: Assembler::new(mesh),
            norms: Norms::new(mesh),
            source: 1.0,
        })
    }

    /// Constant right-hand side (default 1).
    pub fn with_source(mut self, f: f64) -> Self {
        self.source = f;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Norms on the reference mesh.
    pub fn norms(&self) -> &Norms {
        &self.norms
    }

    /// Number of coefficient and domain parameters.
    pub fn n_params(&self) -> (usize, usize) {
        (self.coefficient.n_params(), self.displacement.n_params())
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        let (n, m) = self.n_params();
        for (expected, got) in [(n, sample.y.len()), (m, sample.z.len())] {
            if expected != got {
                return Err(Error::Dimension { expected, got });
            }
        }
        Ok(())
    }

    /// The deformed mesh `V(·, z)`, required to stay inside the hold-all.
    pub fn deform(&self, z: &[f64]) -> Result<Mesh> {
        let d = self.displacement.eval_displacement(z)?;
        let mesh = self.mesh.displace(&d)?;
        if let Some(p) = mesh
            .nodes()
            .iter()
            .find(|p| !(p[0].abs() <= HOLD_ALL && p[1].abs() <= HOLD_ALL))
        {
            return Err(Error::OutOfHoldAll(p[0], p[1]));
        }
        Ok(mesh)
    }

    // Nodes are inside the convex hold-all, so every quadrature point is too
    // and lookups cannot fail; NaN would be rejected by the assembler anyway.
    fn smooth(&self, x: Point) -> f64 {
        self.coefficient.eval_smooth(x).unwrap_or(f64::NAN)
    }

    fn prepare(&self, z: &[f64]) -> Result<Deformed> {
        let mesh = self.deform(z)?;
        let k = self.assembler.stiffness(&mesh, |x| self.smooth(x))?;
        let system = DirichletSystem::new(&k, mesh.boundary());
        let f = self.source;
        let load = self.assembler.load(&mesh, |_| f);
        Ok(Deformed { mesh, system, load })
    }

    fn delta_u_on(&self, d: &Deformed, y: &[f64], u0: &NodalField) -> Result<(NodalField, SolveStats)> {
        let rough = |x: Point| self.coefficient.eval_rough(x, y).unwrap_or(f64::NAN);
        let b = self.assembler.perturbation_load(&d.mesh, rough, u0)?;
        d.system.solve(&b)
    }

    fn u_eps_on(&self, d: &Deformed, y: &[f64], eps: f64) -> Result<(NodalField, SolveStats)> {
        if eps == 0.0 {
            return d.system.solve(&d.load);
        }
        let coeff = |x: Point| match self.coefficient.eval_parts(x, y) {
            Ok((s, r)) => s + eps * r,
            Err(_) => f64::NAN,
        };
        let k = self.assembler.stiffness(&d.mesh, coeff)?;
        DirichletSystem::new(&k, d.mesh.boundary()).solve(&d.load)
    }

    pub fn solve_u0(&self, z: &[f64]) -> Result<NodalField> {
        let d = self.prepare(z)?;
        Ok(d.system.solve(&d.load)?.0)
    }

    pub fn solve_delta_u(&self, sample: &Sample, u0: &NodalField) -> Result<NodalField> {
        self.check_sample(sample)?;
        let d = self.prepare(&sample.z)?;
        Ok(self.delta_u_on(&d, &sample.y, u0)?.0)
    }

    pub fn solve_u_eps(&self, sample: &Sample, eps: f64) -> Result<NodalField> {
        self.check_sample(sample)?;
        let d = self.prepare(&sample.z)?;
        Ok(self.u_eps_on(&d, &sample.y, eps)?.0)
    }

    /// `u0`, `δu` and `u_ε` for every amplitude in `eps`, sharing the
    /// deformed geometry and the smooth system.
    pub fn solve_sample(&self, sample: &Sample, eps: &[f64]) -> Result<SampleSolve> {
        self.check_sample(sample)?;
        let d = self.prepare(&sample.z)?;
        let (u0, stats_u0) = d.system.solve(&d.load)?;
        let (delta_u, stats_delta_u) = self.delta_u_on(&d, &sample.y, &u0)?;
        let mut u_eps = Vec::with_capacity(eps.len());
        let mut stats_u_eps = Vec::with_capacity(eps.len());
        for &e in eps {
            let (u, s) = if e == 0.0 {
                (u0.clone(), stats_u0)
            } else {
                self.u_eps_on(&d, &sample.y, e)?
            };
            u_eps.push(u);
            stats_u_eps.push(s);
        }
        Ok(SampleSolve {
            min_area: d.mesh.min_signed_area(),
            u0,
            delta_u,
            u_eps,
            stats_u0,
            stats_delta_u,
            stats_u_eps,
        })
    }

    /// `u0` together with `u_ε` at `y` and at `-y` for every amplitude.
    pub fn solve_antithetic(&self, sample: &Sample, eps: &[f64]) -> Result<(NodalField, Vec<NodalField>, Vec<NodalField>)> {
        self.check_sample(sample)?;
        let d = self.prepare(&sample.z)?;
        let u0 = d.system.solve(&d.load)?.0;
        let flipped = sample.antithetic();
        let mut plus = Vec::with_capacity(eps.len());
        let mut minus = Vec::with_capacity(eps.len());
        for &e in eps {
            plus.push(self.u_eps_on(&d, &sample.y, e)?.0);
            minus.push(self.u_eps_on(&d, &flipped.y, e)?.0);
        }
        Ok((u0, plus, minus))
    }

    /// `‖u_ε - u0 - ε δu‖` in H¹ on the reference disc, one value per
    /// amplitude.
    pub fn taylor_remainders(&self, sample: &Sample, eps: &[f64]) -> Result<Vec<f64>> {
        let s = self.solve_sample(sample, eps)?;
        eps.iter()
            .zip(&s.u_eps)
            .map(|(&e, u)| Ok(self.norms.h1(&u.sub(&s.u0)?.add_scaled(-e, &s.delta_u)?)))
            .collect()
    }

    /// `u0` computed on the reference mesh with the transported tensor
    /// `a_s(V) det(DV) (DVᵀ DV)⁻¹` and source `f det(DV)`.
    pub fn solve_u0_transported(&self, z: &[f64]) -> Result<NodalField> {
        let deformed = self.deform(z)?;
        let maps: Vec<(Point, Point, Tensor)> = (0..self.mesh.n_triangles())
            .map(|t| element_map(self.mesh.vertices(t), deformed.vertices(t)))
            .collect();
        let k = self.assembler.stiffness_tensor(self.mesh, |t, q| {
            let (p0, v0, j) = maps[t];
            let x = apply(p0, v0, &j, q);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let g = [
                [j[0][0] * j[0][0] + j[1][0] * j[1][0], j[0][0] * j[0][1] + j[1][0] * j[1][1]],
                [j[0][1] * j[0][0] + j[1][1] * j[1][0], j[0][1] * j[0][1] + j[1][1] * j[1][1]],
            ];
            let gdet = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let s = self.smooth(x) * det / gdet;
            [[s * g[1][1], -s * g[0][1]], [-s * g[1][0], s * g[0][0]]]
        })?;
        let f = self.source;
        let b = self.assembler.load_by_element(self.mesh, |t, _| {
            let j = maps[t].2;
            f * (j[0][0] * j[1][1] - j[0][1] * j[1][0])
        });
        Ok(DirichletSystem::new(&k, self.mesh.boundary()).solve(&b)?.0)
    }
}

/// Affine map between a reference and a deformed triangle: `x ↦ v0 + J (x - p0)`.
fn element_map(p: [Point; 3], v: [Point; 3]) -> (Point, Point, Tensor) {
    let e = |a: Point, b: Point| [b[0] - a[0], b[1] - a[1]];
    let (p1, p2) = (e(p[0], p[1]), e(p[0], p[2]));
    let (v1, v2) = (e(v[0], v[1]), e(v[0], v[2]));
    let det = p1[0] * p2[1] - p2[0] * p1[1];
    let inv = [[p2[1] / det, -p2[0] / det], [-p1[1] / det, p1[0] / det]];
    let mut j = [[0.0; 2]; 2];
    for (r, row) in j.iter_mut().enumerate() {
        let w = [v1[r], v2[r]];
        for (c, x) in row.iter_mut().enumerate() {
            *x = w[0] * inv[0][c] + w[1] * inv[1][c];
        }
    }
    (p[0], v[0], j)
}

fn apply(p0: Point, v0: Point, j: &Tensor, x: Point) -> Point {
    let d = [x[0] - p0[0], x[1] - p0[1]];
    [v0[0] + j[0][0] * d[0] + j[0][1] * d[1], v0[1] + j[1][0] * d[0] + j[1][1] * d[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_coefficient_kl, build_vector_field_kl, draw_sample, mean_coefficient, HoldAllGrid};
    use crate::mesh::build_disc_mesh;

    struct Setup {
        mesh: Mesh,
        vf: VectorFieldKL,
        sf: ScalarFieldKL,
    }

    fn random_setup(level: u32) -> Setup {
        let mesh = build_disc_mesh(level);
        let vf = build_vector_field_kl(&mesh, 1e-2).unwrap();
        let sf = build_coefficient_kl(32, 1e-2).unwrap();
        Setup { mesh, vf, sf }
    }

    #[test]
    fn unit_disc_poisson() {
        let mesh = build_disc_mesh(5);
        let vf = VectorFieldKL::identity(&mesh);
        let sf = ScalarFieldKL::deterministic(HoldAllGrid::new(16), |_| 1.0);
        let solver = SampleSolver::new(&mesh, &vf, &sf).unwrap();
        let u = solver.solve_u0(&[]).unwrap();
        assert!((u.values()[0] - 0.25).abs() < 5e-3);
        assert!(u.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn point_symmetry_with_even_coefficient() {
        let mesh = build_disc_mesh(4);
        let vf = VectorFieldKL::identity(&mesh);
        let sf = ScalarFieldKL::deterministic(HoldAllGrid::new(64), mean_coefficient);
        let solver = SampleSolver::new(&mesh, &vf, &sf).unwrap();
        let u = solver.solve_u0(&[]).unwrap();
        let nodes = mesh.nodes();
        for (i, p) in nodes.iter().enumerate() {
            let j = nodes
                .iter()
                .position(|q| (q[0] + p[0]).abs() < 1e-12 && (q[1] + p[1]).abs() < 1e-12)
                .unwrap();
            assert!((u.values()[i] - u.values()[j]).abs() < 1e-9 * u.max_abs());
        }
    }

    #[test]
    fn correction_is_linear_in_y() {
        let s = random_setup(3);
        let solver = SampleSolver::new(&s.mesh, &s.vf, &s.sf).unwrap();
        let a = draw_sample(1, 0, s.sf.n_params(), s.vf.n_params());
        let mut b = draw_sample(1, 1, s.sf.n_params(), s.vf.n_params());
        b.z = a.z.clone();
        let u0 = solver.solve_u0(&a.z).unwrap();
        let da = solver.solve_delta_u(&a, &u0).unwrap();
        let db = solver.solve_delta_u(&b, &u0).unwrap();
        let sum = Sample {
            y: a.y.iter().zip(&b.y).map(|(p, q)| 2.0 * p - 0.5 * q).collect(),
            z: a.z.clone(),
        };
        let ds = solver.solve_delta_u(&sum, &u0).unwrap();
        let expect = da.scaled(2.0).add_scaled(-0.5, &db).unwrap();
        let norms = solver.norms();
        assert!(norms.h1(&ds.sub(&expect).unwrap()) <= 1e-9 * norms.h1(&expect));

        let zero = Sample::zeros(s.sf.n_params(), s.vf.n_params());
        let mut z0 = zero.clone();
        z0.z = a.z.clone();
        assert_eq!(solver.solve_delta_u(&z0, &u0).unwrap().max_abs(), 0.0);
        let anti = solver.solve_delta_u(&a.antithetic(), &u0).unwrap();
        assert!(norms.h1(&anti.add_scaled(1.0, &da).unwrap()) <= 1e-9 * norms.h1(&da));
    }

    #[test]
    fn zero_amplitude_reproduces_u0_exactly() {
        let s = random_setup(3);
        let solver = SampleSolver::new(&s.mesh, &s.vf, &s.sf).unwrap();
        let sample = draw_sample(7, 3, s.sf.n_params(), s.vf.n_params());
        let u0 = solver.solve_u0(&sample.z).unwrap();
        assert_eq!(solver.solve_u_eps(&sample, 0.0).unwrap(), u0);
        let r = solver.taylor_remainders(&sample, &[0.0, 0.5, 0.25]).unwrap();
        assert_eq!(r[0], 0.0);
        let ratio = r[1] / r[2];
        assert!((3.2..=5.0).contains(&ratio), "ratio {ratio}");
        let full = solver.solve_sample(&sample, &[0.0]).unwrap();
        assert_eq!(full.u0, u0);
        assert!(full.min_area > 0.0);
        assert!(u0.values().iter().all(|&v| v >= -1e-14));
    }

    #[test]
    fn transported_tensor_matches_deformed_solve() {
        for level in 3..=5u32 {
            let mesh = build_disc_mesh(level);
            let vf = build_vector_field_kl(&mesh, 1e-2).unwrap();
            let sf = ScalarFieldKL::deterministic(HoldAllGrid::new(64), mean_coefficient);
            let solver = SampleSolver::new(&mesh, &vf, &sf).unwrap();
            let z = draw_sample(11, level as u64, 0, vf.n_params()).z;
            let direct = solver.solve_u0(&z).unwrap();
            let pulled = solver.solve_u0_transported(&z).unwrap();
            let norms = solver.norms();
            let diff = norms.h1(&direct.sub(&pulled).unwrap());
            assert!(diff <= 1e-8 * norms.h1(&direct), "level {level}: {diff}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = random_setup(2);
        let solver = SampleSolver::new(&s.mesh, &s.vf, &s.sf).unwrap();
        let short = Sample::zeros(1, 1);
        assert!(matches!(solver.solve_u_eps(&short, 0.1), Err(Error::Dimension { .. })));
        let mut big = Sample::zeros(s.sf.n_params(), s.vf.n_params());
        big.z[0] = 1e3;
        assert!(solver.solve_u0(&big.z).is_err());
        let mut rough = Sample::zeros(s.sf.n_params(), s.vf.n_params());
        rough.y.iter_mut().for_each(|v| *v = 1.7);
        assert!(matches!(
            solver.solve_u_eps(&rough, -100.0),
            Err(Error::NonPositiveCoefficient { .. })
        ));
        let other = build_disc_mesh(3);
        assert!(SampleSolver::new(&other, &s.vf, &s.sf).is_err());
    }
}
