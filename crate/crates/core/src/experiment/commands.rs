//! The experiment commands. Each one has a pure computation returning
//! in-memory results and a thin wrapper that writes artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::fem::{NodalField, Norms};
use crate::fields::{build_coefficient_kl, build_vector_field_kl, draw_sample, Sample, ScalarFieldKL, VectorFieldKL, RNG_ALGORITHM};
use crate::mesh::{build_disc_mesh, Mesh};
use crate::perturbation::SampleSolver;
use crate::text;
use crate::uq::{
    anisotropy_weights, field_error, mc_channels, quadrature_estimate, slope_fit, smolyak_rule, Moment, Statistics,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const VECTOR_FIELD_FILE: &str = "vector_field.kl";
pub const COEFFICIENT_FILE: &str = "coefficient.kl";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Comment line leading every CSV and manifest.
pub fn provenance(cfg: &ExperimentConfig, command: &str) -> String {
    format!(
        "# schema=1 command={command} version={VERSION} config={} seed={} rng={RNG_ALGORITHM}\n",
        cfg.hash(),
        cfg.seed
    )
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reference mesh with both random inputs.
#[derive(Debug, Clone)]
pub struct ExperimentFields {
    pub mesh: Mesh,
    pub vector_field: VectorFieldKL,
    pub coefficient: ScalarFieldKL,
}

impl ExperimentFields {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let mesh = build_disc_mesh(cfg.mesh_level);
        let vector_field = build_vector_field_kl(&mesh, cfg.kl_tol_v)?;
        let coefficient = build_coefficient_kl(cfg.grid_cells, cfg.kl_tol_a)?;
        Ok(ExperimentFields {
            mesh,
            vector_field,
            coefficient,
        })
    }

    /// Loads the artifacts of `build-kl` when they match the config and
    /// builds them otherwise.
    pub fn load_or_build(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = &cfg.output;
        let manifest = dir.join(MANIFEST_FILE);
        let matches = read_file(&manifest)
            .map(|m| m.lines().any(|l| l == format!("kl_key = {}", cfg.kl_key())))
            .unwrap_or(false);
        if !matches {
            return Self::build(cfg);
        }
        let mesh = build_disc_mesh(cfg.mesh_level);
        let vector_field = VectorFieldKL::load(&read_file(&dir.join(VECTOR_FIELD_FILE))?)?;
        let coefficient = ScalarFieldKL::load(&read_file(&dir.join(COEFFICIENT_FILE))?)?;
        if vector_field.n_nodes() != mesh.n_nodes() {
            return Err(Error::MeshMismatch(mesh.n_nodes(), vector_field.n_nodes()));
        }
        Ok(ExperimentFields {
            mesh,
            vector_field,
            coefficient,
        })
    }

    pub fn solver(&self) -> Result<SampleSolver<'_>> {
        SampleSolver::new(&self.mesh, &self.vector_field, &self.coefficient)
    }

    /// (N, M): coefficient and domain parameter counts.
    pub fn dims(&self) -> (usize, usize) {
        (self.coefficient.n_params(), self.vector_field.n_params())
    }

    pub fn manifest(&self, cfg: &ExperimentConfig) -> String {
        let (n, m) = self.dims();
        let v = &self.vector_field.basis;
        let a = &self.coefficient.basis;
        let mut s = provenance(cfg, "build-kl");
        let _ = writeln!(s, "kl_key = {}", cfg.kl_key());
        let _ = writeln!(s, "mesh_level = {}", cfg.mesh_level);
        let _ = writeln!(s, "mesh_nodes = {}", self.mesh.n_nodes());
        let _ = writeln!(s, "grid_cells = {}", cfg.grid_cells);
        let _ = writeln!(s, "modes_domain = {m}");
        let _ = writeln!(s, "modes_coefficient = {n}");
        let _ = writeln!(s, "variance_domain = {}", text::fmt(v.total_variance));
        let _ = writeln!(s, "discarded_domain = {}", text::fmt(v.discarded_variance()));
        let _ = writeln!(s, "variance_coefficient = {}", text::fmt(a.total_variance));
        let _ = writeln!(s, "discarded_coefficient = {}", text::fmt(a.discarded_variance()));
        let _ = writeln!(s, "max_perturbation = {}", text::fmt(self.coefficient.max_perturbation()));
        let _ = writeln!(s, "seed = {}", cfg.seed);
        s
    }
}

pub fn cmd_build_kl(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let fields = ExperimentFields::build(cfg)?;
    let dir = &cfg.output;
    Ok(vec![
        write_file(dir, VECTOR_FIELD_FILE, &fields.vector_field.dump())?,
        write_file(dir, COEFFICIENT_FILE, &fields.coefficient.dump())?,
        write_file(dir, MANIFEST_FILE, &fields.manifest(cfg))?,
    ])
}

/// Parameters of a single solve: explicit vectors, or a sample index drawn
/// from the configured seed. Missing vectors are zero.
#[derive(Debug, Clone, Default)]
pub struct SolveOneInput {
    pub y: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    pub sample: Option<u64>,
    pub eps: f64,
}

pub fn cmd_solve_one(cfg: &ExperimentConfig, input: &SolveOneInput) -> Result<Vec<PathBuf>> {
    let fields = ExperimentFields::load_or_build(cfg)?;
    let solver = fields.solver()?;
    let (n, m) = fields.dims();
    let drawn = input.sample.map(|i| draw_sample(cfg.seed, i, n, m));
    let sample = Sample {
        y: input
            .y
            .clone()
            .or_else(|| drawn.as_ref().map(|s| s.y.clone()))
            .unwrap_or_else(|| vec![0.0; n]),
        z: input
            .z
            .clone()
            .or_else(|| drawn.as_ref().map(|s| s.z.clone()))
            .unwrap_or_else(|| vec![0.0; m]),
    };
    let solve = solver.solve_sample(&sample, &[input.eps])?;
    let norms = solver.norms();
    let dir = &cfg.output;
    let mut written = vec![
        write_file(dir, "u_eps.field", &solve.u_eps[0].dump())?,
        write_file(dir, "u0.field", &solve.u0.dump())?,
        write_file(dir, "delta_u.field", &solve.delta_u.dump())?,
    ];
    if sample.z.iter().any(|&v| v != 0.0) {
        written.push(write_file(dir, "deformed_mesh.mesh", &solver.deform(&sample.z)?.dump())?);
    }
    let mut d = provenance(cfg, "solve-one");
    let _ = writeln!(d, "eps = {}", text::fmt(input.eps));
    let _ = writeln!(d, "h1_u_eps = {}", text::fmt(norms.h1(&solve.u_eps[0])));
    let _ = writeln!(d, "h1_u0 = {}", text::fmt(norms.h1(&solve.u0)));
    let _ = writeln!(d, "h1_delta_u = {}", text::fmt(norms.h1(&solve.delta_u)));
    let _ = writeln!(d, "cg_iterations_u0 = {}", solve.stats_u0.iterations);
    let _ = writeln!(d, "cg_iterations_delta_u = {}", solve.stats_delta_u.iterations);
    let _ = writeln!(d, "cg_iterations_u_eps = {}", solve.stats_u_eps[0].iterations);
    let _ = writeln!(d, "min_deformed_area = {}", text::fmt(solve.min_area));
    written.push(write_file(dir, "diagnostics.txt", &d)?);
    Ok(written)
}

/// Plain Monte Carlo statistics of `u0` followed by `u_ε` for every
/// configured amplitude.
pub fn mc_statistics(fields: &ExperimentFields, cfg: &ExperimentConfig) -> Result<Vec<Statistics>> {
    let solver = fields.solver()?;
    let (n, m) = fields.dims();
    mc_channels(cfg.n_mc, 1 + cfg.eps_list.len(), fields.mesh.n_nodes(), |i| {
        let s = solver.solve_sample(&draw_sample(cfg.seed, i as u64, n, m), &cfg.eps_list)?;
        Ok(std::iter::once(s.u0).chain(s.u_eps).collect())
    })
}

fn stderr_field(s: &Statistics) -> NodalField {
    let n = s.count.max(1) as f64;
    NodalField::new(s.variance().values().iter().map(|v| (v.max(0.0) / n).sqrt()).collect())
}

pub fn cmd_mc(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let fields = ExperimentFields::load_or_build(cfg)?;
    let stats = mc_statistics(&fields, cfg)?;
    let norms = Norms::new(&fields.mesh);
    let mut csv = provenance(cfg, "mc");
    csv.push_str("eps,mean_norm,var_norm,mc_stderr_mean,n_samples\n");
    let mut written = vec![];
    for (k, s) in stats.iter().enumerate() {
        let eps = if k == 0 { 0.0 } else { cfg.eps_list[k - 1] };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            text::fmt(eps),
            text::fmt(cfg.mean_norm.eval(&norms, &s.mean)),
            text::fmt(cfg.var_norm.eval(&norms, &s.variance())),
            text::fmt(cfg.mean_norm.eval(&norms, &stderr_field(s))),
            s.count
        );
        let name = if k == 0 { "mc_u0.stats".to_string() } else { format!("mc_eps_{k}.stats") };
        written.push(write_file(&cfg.output, &name, &s.dump())?);
    }
    written.insert(0, write_file(&cfg.output, "mc.csv", &csv)?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorStudy {
    /// Amplitudes, starting with 0.
    pub eps: Vec<f64>,
    /// One row of remainders per sample.
    pub remainders: Vec<Vec<f64>>,
    /// Fitted slope per sample over the positive amplitudes.
    pub slopes: Vec<f64>,
}

pub fn taylor_study(fields: &ExperimentFields, cfg: &ExperimentConfig) -> Result<TaylorStudy> {
    let solver = fields.solver()?;
    let (n, m) = fields.dims();
    let eps: Vec<f64> = std::iter::once(0.0).chain(cfg.eps_list.iter().copied()).collect();
    let remainders = (0..cfg.n_taylor)
        .into_par_iter()
        .map(|i| {
            solver
                .taylor_remainders(&draw_sample(cfg.seed, i as u64, n, m), &eps)
                .map_err(|e| Error::Sample {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let slopes = remainders
        .iter()
        .map(|r| slope_fit(&cfg.eps_list.iter().copied().zip(r[1..].iter().copied()).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(TaylorStudy {
        eps,
        remainders,
        slopes,
    })
}

pub fn cmd_taylor(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let fields = ExperimentFields::load_or_build(cfg)?;
    let study = taylor_study(&fields, cfg)?;
    let mut table = provenance(cfg, "taylor");
    table.push_str("sample,eps,remainder_h1\n");
    for (i, row) in study.remainders.iter().enumerate() {
        for (e, r) in study.eps.iter().zip(row) {
            let _ = writeln!(table, "{i},{},{}", text::fmt(*e), text::fmt(*r));
        }
    }
    let mut slopes = provenance(cfg, "taylor");
    slopes.push_str("sample,slope\n");
    for (i, s) in study.slopes.iter().enumerate() {
        let _ = writeln!(slopes, "{i},{}", text::fmt(*s));
    }
    Ok(vec![
        write_file(&cfg.output, "taylor.csv", &table)?,
        write_file(&cfg.output, "taylor_slopes.csv", &slopes)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub err_mean: f64,
    pub err_var: f64,
    pub mc_stderr_mean: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub slope_mean: f64,
    pub slope_var: f64,
    /// Mean and variance of `u0` by sparse quadrature over the domain
    /// parameters.
    pub baseline: Statistics,
    /// Monte Carlo statistics of `u_ε` over `±y` pairs, one per amplitude.
    pub u_eps: Vec<Statistics>,
}

/// Closed-form stand-in for the solver: `u0 + ε δu + ε² q` with fixed smooth
/// fields, for checking the estimator pipeline.
struct Synthetic {
    bubble: Vec<f64>,
    odd: Vec<f64>,
}

impl Synthetic {
    fn new(mesh: &Mesh) -> Self {
        let r2 = |p: &[f64; 2]| p[0] * p[0] + p[1] * p[1];
        Synthetic {
            bubble: mesh.nodes().iter().map(|p| 1.0 - r2(p)).collect(),
            odd: mesh.nodes().iter().map(|p| p[0] * (1.0 - r2(p))).collect(),
        }
    }

    fn u0(&self, z: &[f64]) -> NodalField {
        let s = 1.0 + 0.1 * z.first().copied().unwrap_or(0.0);
        NodalField::new(self.bubble.iter().map(|b| 0.25 * b * s).collect())
    }

    fn u_eps(&self, sample: &Sample, eps: f64) -> NodalField {
        let y = sample.y.first().copied().unwrap_or(0.0);
        let base = self.u0(&sample.z);
        let v = base
            .values()
            .iter()
            .zip(&self.odd)
            .zip(&self.bubble)
            .map(|((u, o), b)| u + eps * y * o + eps * eps * b * b / 8.0)
            .collect();
        NodalField::new(v)
    }
}

/// Errors of the perturbation approximation of mean and variance.
///
/// Each Monte Carlo draw `(y, z)` is paired with `(-y, z)` and all fields of
/// a draw share the same random numbers, so the differences `u_ε - u0`
/// estimated below carry noise of order `ε²/√n` rather than `1/√n`. The
/// variance difference is formed from the two variance estimators over the
/// same sample set. `u0` statistics for the baseline come from Smolyak
/// quadrature over the domain parameters.
pub fn convergence_study(fields: &ExperimentFields, cfg: &ExperimentConfig, synthetic: bool) -> Result<ConvergenceStudy> {
    let solver = fields.solver()?;
    let fake = Synthetic::new(&fields.mesh);
    let (n, m) = fields.dims();
    let eps = &cfg.eps_list;
    let pairs = cfg.n_mc.div_ceil(2);

    let solve_pair = |sample: &Sample| -> Result<(NodalField, Vec<NodalField>, Vec<NodalField>)> {
        if synthetic {
            let minus = sample.antithetic();
            Ok((
                fake.u0(&sample.z),
                eps.iter().map(|&e| fake.u_eps(sample, e)).collect(),
                eps.iter().map(|&e| fake.u_eps(&minus, e)).collect(),
            ))
        } else {
            solver.solve_antithetic(sample, eps)
        }
    };
    let channels = mc_channels(pairs, 1 + 3 * eps.len(), fields.mesh.n_nodes(), |i| {
        let (u0, plus, minus) = solve_pair(&draw_sample(cfg.seed, i as u64, n, m))?;
        let mut out = Vec::with_capacity(1 + 3 * eps.len());
        out.push(u0.clone());
        for (p, q) in plus.into_iter().zip(minus) {
            let centred = p.add_scaled(1.0, &q)?.scaled(0.5).sub(&u0)?;
            out.push(p);
            out.push(q);
            out.push(centred);
        }
        Ok(out)
    })?;

    let weights = if cfg.quad_anisotropic {
        let scales: Vec<f64> = fields.vector_field.basis.mu.iter().map(|mu| mu.sqrt()).collect();
        anisotropy_weights(&scales)
    } else {
        vec![1.0; m]
    };
    let baseline = if m == 0 {
        let u = if synthetic { fake.u0(&[]) } else { solver.solve_u0(&[])? };
        let n_nodes = u.len();
        Statistics {
            kind: crate::uq::StatisticsKind::Quadrature,
            count: 1,
            mean: u,
            second_central: NodalField::zeros(n_nodes),
        }
    } else {
        let rule = smolyak_rule(m, cfg.quad_level, &weights);
        quadrature_estimate(|z| if synthetic { Ok(fake.u0(z)) } else { solver.solve_u0(z) }, &rule)?
    };

    let norms = solver.norms();
    let u0 = channels[0].merge(&channels[0])?;
    let mut rows = vec![];
    let mut u_eps = vec![];
    for (k, &e) in eps.iter().enumerate() {
        let c = &channels[1 + 3 * k..4 + 3 * k];
        let both = c[0].merge(&c[1])?;
        rows.push(ConvergenceRow {
            eps: e,
            err_mean: field_error(norms, &both, &u0, Moment::Mean, cfg.mean_norm)?,
            err_var: field_error(norms, &both, &u0, Moment::Variance, cfg.var_norm)?,
            mc_stderr_mean: cfg.mean_norm.eval(norms, &stderr_field(&c[2])),
            n_samples: both.count,
        });
        u_eps.push(both);
    }
    let fit = |f: fn(&ConvergenceRow) -> f64| slope_fit(&rows.iter().map(|r| (r.eps, f(r))).collect::<Vec<_>>());
    Ok(ConvergenceStudy {
        slope_mean: fit(|r| r.err_mean)?,
        slope_var: fit(|r| r.err_var)?,
        rows,
        baseline,
        u_eps,
    })
}

pub fn cmd_convergence(cfg: &ExperimentConfig, synthetic: bool) -> Result<Vec<PathBuf>> {
    let fields = ExperimentFields::load_or_build(cfg)?;
    let study = convergence_study(&fields, cfg, synthetic)?;
    let dir = &cfg.output;
    let mut csv = provenance(cfg, if synthetic { "convergence-synthetic" } else { "convergence" });
    csv.push_str("eps,err_mean_h1,err_var_w11,mc_stderr_mean,n_samples\n");
    let (mut mean_dat, mut var_dat, mut guide_dat) = (String::new(), String::new(), String::new());
    for r in &study.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            text::fmt(r.eps),
            text::fmt(r.err_mean),
            text::fmt(r.err_var),
            text::fmt(r.mc_stderr_mean),
            r.n_samples
        );
        let _ = writeln!(mean_dat, "{} {}", text::fmt(r.eps), text::fmt(r.err_mean));
        let _ = writeln!(var_dat, "{} {}", text::fmt(r.eps), text::fmt(r.err_var));
        let _ = writeln!(guide_dat, "{} {}", text::fmt(r.eps), text::fmt(0.03 * r.eps * r.eps));
    }
    let _ = writeln!(csv, "# slope_mean={}", text::fmt(study.slope_mean));
    let _ = writeln!(csv, "# slope_var={}", text::fmt(study.slope_var));
    let mut written = vec![
        write_file(dir, "convergence.csv", &csv)?,
        write_file(dir, "convergence_mean.dat", &mean_dat)?,
        write_file(dir, "convergence_var.dat", &var_dat)?,
        write_file(dir, "convergence_guide.dat", &guide_dat)?,
        write_file(dir, "baseline_u0.stats", &study.baseline.dump())?,
    ];
    for (k, s) in study.u_eps.iter().enumerate() {
        written.push(write_file(dir, &format!("convergence_eps_{}.stats", k + 1), &s.dump())?);
    }
    Ok(written)
}
