//! The random inputs: a Karhunen–Loève expanded vector field that deforms the
//! disc, and a rough random diffusion coefficient given on the hold-all
//! square `[-2, 2]²`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::Assembler;
use crate::lowrank::{self, CovarianceOracle, KLBasis};
use crate::mesh::{Mesh, Point};
use crate::sparse::SparseMatrix;
use crate::text;

/// Half-width of the support of the uniform parameters (unit variance).
pub const PARAM_BOUND: f64 = 1.732_050_807_568_877_2;

/// Half-width of the hold-all square.
pub const HOLD_ALL: f64 = 2.0;

/// Name of the generator recorded in output artifacts.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64(seed), stream = sample index";

/// Relative accuracy of the pivoted Cholesky factor, as a fraction of the
/// truncation budget.
const FACTOR_TOL_RATIO: f64 = 1e-2;

const MAX_RANK: usize = 2000;

/// Covariance of the vector field at two material points.
pub fn vector_covariance(x: Point, xp: Point) -> [[f64; 2]; 2] {
    let d2 = |a: Point, b: Point| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let r2 = d2(x, xp);
    let c12 = (-0.1 * d2([2.0 * x[0], 2.0 * x[1]], xp)).exp();
    let c21 = (-0.1 * d2(x, [2.0 * xp[0], 2.0 * xp[1]])).exp();
    [
        [5e-3 * (-2.0 * r2).exp(), 1e-3 * c12],
        [1e-3 * c21, 5e-3 * (-0.5 * r2).exp()],
    ]
}

/// Tensor-product hat function supported on `[-1, 1]²`.
pub fn g_hat(x: Point) -> f64 {
    (1.0 - x[0].abs()).max(0.0) * (1.0 - x[1].abs()).max(0.0)
}

/// Mean of the diffusion coefficient.
pub fn mean_coefficient(x: Point) -> f64 {
    1.0 + (x[0] * x[0] - x[1] * x[1]) / 40.0
}

/// Covariance of the rough coefficient part at unit amplitude.
pub fn coefficient_covariance(x: Point, xp: Point) -> f64 {
    let r2 = (x[0] - xp[0]).powi(2) + (x[1] - xp[1]).powi(2);
    (2.0 * (-r2 / 32.0).exp() + 9.0 * g_hat(x) * g_hat(xp)) / 100.0
}

/// Stacked `2n × 2n` covariance of the nodal vector field: x-components
/// first, then y-components.
pub struct VectorCovarianceOracle<'a> {
    nodes: &'a [Point],
}

impl<'a> VectorCovarianceOracle<'a> {
    pub fn new(nodes: &'a [Point]) -> Self {
        VectorCovarianceOracle { nodes }
    }
}

impl CovarianceOracle for VectorCovarianceOracle<'_> {
    fn dim(&self) -> usize {
        2 * self.nodes.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let n = self.nodes.len();
        vector_covariance(self.nodes[i % n], self.nodes[j % n])[i / n][j / n]
    }
}

/// Mass-weighted KL basis of `oracle`, truncated so that the relative L²
/// error of the expansion is at most `tol`.
pub fn kl_basis(oracle: &dyn CovarianceOracle, mass: &SparseMatrix, block: usize, tol: f64) -> Result<KLBasis> {
    let variance_tol = tol * tol;
    let factor = lowrank::pivoted_cholesky(oracle, variance_tol * FACTOR_TOL_RATIO, MAX_RANK)?;
    let mut basis = lowrank::reduced_eigs(&factor, mass, block)?;
    basis.total_variance = lowrank::weighted_trace(oracle, mass, block);
    Ok(lowrank::truncate(&basis, variance_tol))
}

/// `V(X, z) = X + Σ_k z_k v_k(X)` on the nodes of the reference mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldKL {
    pub mean: Vec<Point>,
    /// Modes of length `2n`, already scaled by the square root of their
    /// eigenvalue.
    pub basis: KLBasis,
}

impl VectorFieldKL {
    /// The deterministic identity map (no modes).
    pub fn identity(mesh: &Mesh) -> Self {
        VectorFieldKL {
            mean: mesh.nodes().to_vec(),
            basis: KLBasis {
                mu: vec![],
                vectors: vec![],
                total_variance: 0.0,
                truncation_tol: 0.0,
            },
        }
    }

    pub fn n_params(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn n_nodes(&self) -> usize {
        self.mean.len()
    }

    pub fn eval_displacement(&self, z: &[f64]) -> Result<Vec<Point>> {
        if z.len() != self.n_params() {
            return Err(Error::Dimension {
                expected: self.n_params(),
                got: z.len(),
            });
        }
        let n = self.n_nodes();
        let mut d = vec![[0.0; 2]; n];
        for (v, &zk) in self.basis.vectors.iter().zip(z) {
            for (i, di) in d.iter_mut().enumerate() {
                di[0] += zk * v[i];
                di[1] += zk * v[n + i];
            }
        }
        Ok(d)
    }

    /// Pointwise variance `Σ_k v_k(i)²` of the stacked components.
    pub fn nodal_variance(&self) -> Vec<f64> {
        let mut var = vec![0.0; 2 * self.n_nodes()];
        for v in &self.basis.vectors {
            for (s, x) in var.iter_mut().zip(v) {
                *s += x * x;
            }
        }
        var
    }

    pub fn dump(&self) -> String {
        let mut s = format!("vectorfield {}\n", self.n_nodes());
        for p in &self.mean {
            let _ = writeln!(s, "{} {}", text::fmt(p[0]), text::fmt(p[1]));
        }
        s.push_str(&self.basis.dump());
        s
    }

    pub fn load(input: &str) -> Result<Self> {
        const WHAT: &str = "vectorfield";
        let mut lines = input.lines();
        let n = text::header_value(lines.next(), &["vectorfield"], WHAT)?[0];
        let mut mean = Vec::with_capacity(n);
        for _ in 0..n {
            let mut t = lines.next().unwrap_or("").split_whitespace();
            mean.push([text::parse_f64(t.next(), WHAT)?, text::parse_f64(t.next(), WHAT)?]);
        }
        let basis = KLBasis::read(&mut lines)?;
        if basis.n_modes() > 0 && basis.dim() != 2 * n {
            return Err(Error::format(WHAT, "mode length does not match node count"));
        }
        Ok(VectorFieldKL { mean, basis })
    }
}

pub fn build_vector_field_kl(mesh: &Mesh, tol: f64) -> Result<VectorFieldKL> {
    let oracle = VectorCovarianceOracle::new(mesh.nodes());
    let mass = Assembler::new(mesh).mass(mesh);
    let basis = kl_basis(&oracle, &mass, 2, tol)?;
    Ok(VectorFieldKL {
        mean: mesh.nodes().to_vec(),
        basis,
    })
}

/// Uniform vertex grid on the hold-all square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldAllGrid {
    cells: usize,
}

/// Containing cell of a point: four vertex indices with bilinear weights.
#[derive(Debug, Clone, Copy)]
pub struct CellLookup {
    pub vertices: [usize; 4],
    pub weights: [f64; 4],
}

impl HoldAllGrid {
    pub fn new(cells: usize) -> Self {
        assert!(cells > 0);
        HoldAllGrid { cells }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        2.0 * HOLD_ALL / self.cells as f64
    }

    pub fn n_vertices(&self) -> usize {
        (self.cells + 1) * (self.cells + 1)
    }

    pub fn vertex(&self, k: usize) -> Point {
        let m = self.cells + 1;
        let h = self.spacing();
        [-HOLD_ALL + (k % m) as f64 * h, -HOLD_ALL + (k / m) as f64 * h]
    }

    pub fn vertices(&self) -> Vec<Point> {
        (0..self.n_vertices()).map(|k| self.vertex(k)).collect()
    }

    /// Index arithmetic only; points on the upper/right edge fall into the
    /// last cell.
    pub fn locate(&self, x: Point) -> Result<CellLookup> {
        if !(x[0].abs() <= HOLD_ALL && x[1].abs() <= HOLD_ALL) {
            return Err(Error::OutOfHoldAll(x[0], x[1]));
        }
        let h = self.spacing();
        let m = self.cells + 1;
        let mut idx = [0usize; 2];
        let mut frac = [0.0; 2];
        for a in 0..2 {
            let s = (x[a] + HOLD_ALL) / h;
            let i = (s.floor() as usize).min(self.cells - 1);
            idx[a] = i;
            frac[a] = s - i as f64;
        }
        let base = idx[1] * m + idx[0];
        let (tx, ty) = (frac[0], frac[1]);
        Ok(CellLookup {
            vertices: [base, base + 1, base + m, base + m + 1],
            weights: [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty],
        })
    }

    /// Q1 mass matrix (tensor product of 1D linear-element mass matrices).
    pub fn mass(&self) -> SparseMatrix {
        let m = self.cells + 1;
        let h = self.spacing();
        let one_d = |i: usize, j: usize| -> f64 {
            if i == j {
                let ends = usize::from(i > 0) + usize::from(i < self.cells);
                h / 3.0 * ends as f64
            } else {
                h / 6.0
            }
        };
        let mut row_ptr = vec![0];
        let mut col_idx = vec![];
        let mut values = vec![];
        for r in 0..self.n_vertices() {
            let (ri, rj) = (r % m, r / m);
            for cj in rj.saturating_sub(1)..=(rj + 1).min(m - 1) {
                for ci in ri.saturating_sub(1)..=(ri + 1).min(m - 1) {
                    col_idx.push(cj * m + ci);
                    values.push(one_d(ri, ci) * one_d(rj, cj));
                }
            }
            row_ptr.push(values.len());
        }
        SparseMatrix::from_csr(self.n_vertices(), self.n_vertices(), row_ptr, col_idx, values)
    }
}

pub struct CoefficientCovarianceOracle {
    vertices: Vec<Point>,
}

impl CoefficientCovarianceOracle {
    pub fn new(grid: &HoldAllGrid) -> Self {
        CoefficientCovarianceOracle {
            vertices: grid.vertices(),
        }
    }
}

impl CovarianceOracle for CoefficientCovarianceOracle {
    fn dim(&self) -> usize {
        self.vertices.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        coefficient_covariance(self.vertices[i], self.vertices[j])
    }
}

/// `a(x, y) = a_s(x) + ε Σ_k y_k ψ_k(x)` with vertex values on the hold-all
/// grid and bilinear interpolation. Modes are stored at unit amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldKL {
    pub grid: HoldAllGrid,
    pub mean: Vec<f64>,
    pub basis: KLBasis,
}

impl ScalarFieldKL {
    /// A deterministic coefficient from vertex values of `f`.
    pub fn deterministic(grid: HoldAllGrid, f: impl Fn(Point) -> f64) -> Self {
        ScalarFieldKL {
            mean: grid.vertices().into_iter().map(f).collect(),
            grid,
            basis: KLBasis {
                mu: vec![],
                vectors: vec![],
                total_variance: 0.0,
                truncation_tol: 0.0,
            },
        }
    }

    pub fn n_params(&self) -> usize {
        self.basis.n_modes()
    }

    fn check_params(&self, y: &[f64]) -> Result<()> {
        if y.len() == self.n_params() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.n_params(),
                got: y.len(),
            })
        }
    }

    fn interp(values: &[f64], c: &CellLookup) -> f64 {
        c.vertices.iter().zip(&c.weights).map(|(&v, w)| w * values[v]).sum()
    }

    pub fn eval_smooth(&self, x: Point) -> Result<f64> {
        Ok(Self::interp(&self.mean, &self.grid.locate(x)?))
    }

    /// The rough part at unit amplitude.
    pub fn eval_rough(&self, x: Point, y: &[f64]) -> Result<f64> {
        self.check_params(y)?;
        let c = self.grid.locate(x)?;
        Ok(self
            .basis
            .vectors
            .iter()
            .zip(y)
            .map(|(v, yk)| yk * Self::interp(v, &c))
            .sum())
    }

    /// Smooth and unit-amplitude rough parts from a single cell lookup.
    pub fn eval_parts(&self, x: Point, y: &[f64]) -> Result<(f64, f64)> {
        self.check_params(y)?;
        let c = self.grid.locate(x)?;
        let rough = self
            .basis
            .vectors
            .iter()
            .zip(y)
            .map(|(v, yk)| yk * Self::interp(v, &c))
            .sum();
        Ok((Self::interp(&self.mean, &c), rough))
    }

    pub fn eval_coefficient(&self, x: Point, y: &[f64], eps: f64) -> Result<f64> {
        Ok(self.eval_smooth(x)? + eps * self.eval_rough(x, y)?)
    }

    /// `√3 · max_vertex Σ_k |ψ_k|`: the largest possible rough perturbation at
    /// unit amplitude.
    pub fn max_perturbation(&self) -> f64 {
        (0..self.grid.n_vertices())
            .map(|i| self.basis.vectors.iter().map(|v| v[i].abs()).sum::<f64>())
            .fold(0.0, f64::max)
            * PARAM_BOUND
    }

    pub fn dump(&self) -> String {
        let mut s = format!("scalarfield {}\n", self.grid.cells());
        let vals: Vec<String> = self.mean.iter().map(|x| text::fmt(*x)).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
        s.push_str(&self.basis.dump());
        s
    }

    pub fn load(input: &str) -> Result<Self> {
        const WHAT: &str = "scalarfield";
        let mut lines = input.lines();
        let cells = text::header_value(lines.next(), &["scalarfield"], WHAT)?[0];
        if cells == 0 {
            return Err(Error::format(WHAT, "zero cells"));
        }
        let grid = HoldAllGrid::new(cells);
        let mean = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| text::parse_f64(Some(t), WHAT))
            .collect::<Result<Vec<_>>>()?;
        if mean.len() != grid.n_vertices() {
            return Err(Error::format(WHAT, "mean block does not match the grid"));
        }
        let basis = KLBasis::read(&mut lines)?;
        if basis.n_modes() > 0 && basis.dim() != grid.n_vertices() {
            return Err(Error::format(WHAT, "mode length does not match the grid"));
        }
        Ok(ScalarFieldKL { grid, mean, basis })
    }
}

pub fn build_coefficient_kl(grid_cells: usize, tol: f64) -> Result<ScalarFieldKL> {
    if grid_cells < 16 {
        return Err(Error::Config(format!("grid_cells must be at least 16, got {grid_cells}")));
    }
    let grid = HoldAllGrid::new(grid_cells);
    let oracle = CoefficientCovarianceOracle::new(&grid);
    let basis = kl_basis(&oracle, &grid.mass(), 1, tol)?;
    let mean = grid.vertices().into_iter().map(mean_coefficient).collect();
    Ok(ScalarFieldKL { grid, mean, basis })
}

/// One realization of the parameters: `y` drives the coefficient, `z` the
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl Sample {
    pub fn zeros(n: usize, m: usize) -> Self {
        Sample {
            y: vec![0.0; n],
            z: vec![0.0; m],
        }
    }

    /// Same domain, opposite coefficient parameters.
    pub fn antithetic(&self) -> Self {
        Sample {
            y: self.y.iter().map(|v| -v).collect(),
            z: self.z.clone(),
        }
    }
}

/// I.i.d. components uniform on `[-√3, √3]`.
pub fn sample(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| PARAM_BOUND * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// Generator for stream `index` of `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample number `index`: `y` first, then `z`, from its own stream.
pub fn draw_sample(seed: u64, index: u64, n: usize, m: usize) -> Sample {
    let mut rng = stream_rng(seed, index);
    let y = sample(n, &mut rng);
    let z = sample(m, &mut rng);
    Sample { y, z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disc_mesh;

    #[test]
    fn covariance_formulas() {
        let c = vector_covariance([0.0, 0.0], [0.0, 0.0]);
        assert_eq!(c, [[5e-3, 1e-3], [1e-3, 5e-3]]);
        let (x, xp) = ([0.3, -0.2], [-0.5, 0.7]);
        let a = vector_covariance(x, xp);
        let b = vector_covariance(xp, x);
        assert_eq!(a[0][1], b[1][0]);
        assert_eq!(a[0][0], b[0][0]);

        let nodes = [x, xp, [0.1, 0.1]];
        let o = VectorCovarianceOracle::new(&nodes);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(o.entry(i, j), o.entry(j, i));
            }
        }

        assert!((coefficient_covariance([0.0, 0.0], [0.0, 0.0]) - 0.11).abs() < 1e-15);
        assert_eq!(g_hat([0.0, 0.0]), 1.0);
        assert_eq!(g_hat([1.0, 0.5]), 0.0);
        assert_eq!(g_hat([0.5, 0.5]), 0.25);
        assert_eq!(mean_coefficient([1.0, 0.0]), 1.025);
        assert_eq!(mean_coefficient([0.0, 1.0]), 0.975);
    }

    #[test]
    fn grid_lookup() {
        let g = HoldAllGrid::new(16);
        assert_eq!(g.spacing(), 0.25);
        let c = g.locate([-2.0, -2.0]).unwrap();
        assert_eq!(c.vertices[0], 0);
        assert_eq!(c.weights[0], 1.0);
        let c = g.locate([2.0, 2.0]).unwrap();
        assert_eq!(c.weights[3], 1.0);
        assert_eq!(c.vertices[3], g.n_vertices() - 1);
        let c = g.locate([0.1, -0.3]).unwrap();
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let x: f64 = c.vertices.iter().zip(&c.weights).map(|(&v, w)| w * g.vertex(v)[0]).sum();
        let y: f64 = c.vertices.iter().zip(&c.weights).map(|(&v, w)| w * g.vertex(v)[1]).sum();
        assert!((x - 0.1).abs() < 1e-15 && (y + 0.3).abs() < 1e-15);
        assert!(matches!(g.locate([2.1, 0.0]), Err(Error::OutOfHoldAll(..))));
        assert!(g.locate([f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn grid_mass_integrates_the_square() {
        let g = HoldAllGrid::new(8);
        let m = g.mass();
        assert!((m.sum() - 16.0).abs() < 1e-12);
        assert_eq!(m.asymmetry(), 0.0);
        // ∫ x² over the square = 64/3; bilinear interpolation overshoots by h²/6 · 16
        let x2: Vec<f64> = g.vertices().iter().map(|p| p[0] * p[0]).collect();
        let ones = vec![1.0; g.n_vertices()];
        let integral: f64 = m.matvec(&x2).iter().zip(&ones).map(|(a, b)| a * b).sum();
        let h = g.spacing();
        assert!((integral - (64.0 / 3.0 + 16.0 * h * h / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn displacement_is_linear() {
        let mesh = build_disc_mesh(2);
        let vf = build_vector_field_kl(&mesh, 0.1).unwrap();
        let m = vf.n_params();
        assert!(m > 0);
        let zero = vf.eval_displacement(&vec![0.0; m]).unwrap();
        assert!(zero.iter().all(|d| d == &[0.0, 0.0]));
        let z: Vec<f64> = (0..m).map(|k| (k as f64 * 0.7).sin()).collect();
        let z2: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        let d = vf.eval_displacement(&z).unwrap();
        let d2 = vf.eval_displacement(&z2).unwrap();
        for (a, b) in d.iter().zip(&d2) {
            assert!((2.0 * a[0] - b[0]).abs() < 1e-16 && (2.0 * a[1] - b[1]).abs() < 1e-16);
        }
        assert!(vf.eval_displacement(&z[1..]).is_err());
    }

    #[test]
    fn coefficient_evaluation() {
        let sf = build_coefficient_kl(32, 1e-2).unwrap();
        let n = sf.n_params();
        let zero = vec![0.0; n];
        let y: Vec<f64> = (0..n).map(|k| 1.5 * (k as f64 + 0.3).cos()).collect();
        let x = [0.37, -0.81];
        let smooth = sf.eval_smooth(x).unwrap();
        assert_eq!(sf.eval_coefficient(x, &zero, 1.0).unwrap(), smooth);
        assert_eq!(sf.eval_coefficient(x, &y, 0.0).unwrap(), smooth);
        assert!((sf.eval_smooth([1.0, 0.0]).unwrap() - 1.025).abs() < 1e-15);
        assert!((smooth - mean_coefficient(x)).abs() < 1e-4);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let avg = 0.5 * (sf.eval_coefficient(x, &y, 1.0).unwrap() + sf.eval_coefficient(x, &neg, 1.0).unwrap());
        assert!((avg - smooth).abs() <= 2.0 * f64::EPSILON);
        assert!(sf.eval_coefficient([3.0, 0.0], &y, 1.0).is_err());
        assert!(sf.eval_coefficient(x, &y[1..], 1.0).is_err());
        assert!(build_coefficient_kl(8, 1e-2).is_err());
    }

    #[test]
    fn sampling() {
        let mut rng = stream_rng(7, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| sample(1, &mut rng)[0]).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (1.0 / n).sqrt());
        assert!((var - 1.0).abs() < 0.05);
        assert!(draws.iter().all(|v| v.abs() <= PARAM_BOUND));

        assert_eq!(draw_sample(3, 11, 4, 5), draw_sample(3, 11, 4, 5));
        assert_ne!(draw_sample(3, 11, 4, 5), draw_sample(3, 12, 4, 5));
        assert!(sample(0, &mut rng).is_empty());
        let s = draw_sample(1, 2, 3, 4);
        assert_eq!(s.antithetic().antithetic(), s);
    }

    #[test]
    fn field_dumps_round_trip() {
        let mesh = build_disc_mesh(1);
        let vf = build_vector_field_kl(&mesh, 0.2).unwrap();
        assert_eq!(VectorFieldKL::load(&vf.dump()).unwrap(), vf);
        let sf = build_coefficient_kl(16, 0.2).unwrap();
        assert_eq!(ScalarFieldKL::load(&sf.dump()).unwrap(), sf);
    }
}
