//! Discrete Karhunen–Loève bases from covariance operators.
//!
//! The covariance matrix `C` is never formed: a greedy pivoted Cholesky
//! factorization `C ≈ L Lᵀ` pulls single columns from a [`CovarianceOracle`].
//! The generalized eigenproblem `M̂ C M̂ v = μ M̂ v` is then replaced by the
//! small symmetric problem `Lᵀ M̂ L ṽ = μ ṽ`, and `v = L ṽ` satisfies
//! `vᵢᵀ M̂ vⱼ = μᵢ δᵢⱼ`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::text;

/// Entry evaluator for a symmetric positive semi-definite matrix.
pub trait CovarianceOracle: Sync {
    fn dim(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    fn diag(&self, i: usize) -> f64 {
        self.entry(i, i)
    }
}

/// Dense matrix as an oracle; mostly useful in tests.
#[derive(Debug, Clone)]
pub struct DenseOracle(pub Vec<Vec<f64>>);

impl CovarianceOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }
}

#[derive(Debug, Clone)]
pub struct LowRankFactor {
    n: usize,
    /// Columns of `L` in pivot order.
    pub columns: Vec<Vec<f64>>,
    pub pivots: Vec<usize>,
    /// `trace(C - L Lᵀ)` after each step, starting with `trace(C)`.
    pub trace_history: Vec<f64>,
    /// The rank cap stopped the factorization before the tolerance was met.
    pub max_rank_reached: bool,
}

impl LowRankFactor {
    /// Wraps explicit columns (no pivot information).
    pub fn from_columns(n: usize, columns: Vec<Vec<f64>>) -> Self {
        assert!(columns.iter().all(|c| c.len() == n));
        LowRankFactor {
            n,
            columns,
            pivots: vec![],
            trace_history: vec![],
            max_rank_reached: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn trace_residual(&self) -> f64 {
        self.trace_history.last().copied().unwrap_or(0.0)
    }

    pub fn initial_trace(&self) -> f64 {
        self.trace_history.first().copied().unwrap_or(0.0)
    }

    /// `(L Lᵀ)_ij`
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.columns.iter().map(|c| c[i] * c[j]).sum()
    }
}

/// Greedy pivoted Cholesky. Stops once `trace(C - LLᵀ) <= tol * trace(C)` or
/// after `max_rank` columns. Ties in the pivot choice go to the lowest index.
pub fn pivoted_cholesky(oracle: &dyn CovarianceOracle, tol: f64, max_rank: usize) -> Result<LowRankFactor> {
    let n = oracle.dim();
    let mut d: Vec<f64> = (0..n).into_par_iter().map(|i| oracle.diag(i)).collect();
    let trace0: f64 = d.iter().sum();
    let mut factor = LowRankFactor {
        n,
        columns: vec![],
        pivots: vec![],
        trace_history: vec![trace0],
        max_rank_reached: false,
    };
    let floor = -1e-12 * trace0.abs();
    if let Some((i, &v)) = d.iter().enumerate().find(|(_, &v)| v < floor) {
        return Err(Error::NotPsd { index: i, value: v });
    }
    let mut residual = trace0;
    while residual > tol * trace0 {
        if factor.rank() == max_rank {
            factor.max_rank_reached = true;
            break;
        }
        let mut p = 0;
        for i in 1..n {
            if d[i] > d[p] {
                p = i;
            }
        }
        let pivot = d[p];
        if pivot <= 0.0 {
            break;
        }
        let s = pivot.sqrt();
        let prev = &factor.columns;
        let mut col: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut v = oracle.entry(i, p);
                for c in prev {
                    v -= c[i] * c[p];
                }
                v / s
            })
            .collect();
        for &q in &factor.pivots {
            col[q] = 0.0;
        }
        col[p] = s;
        for i in 0..n {
            d[i] -= col[i] * col[i];
            if d[i] < floor {
                return Err(Error::NotPsd { index: i, value: d[i] });
            }
        }
        d[p] = 0.0;
        for &q in &factor.pivots {
            d[q] = 0.0;
        }
        residual = d.iter().map(|v| v.max(0.0)).sum();
        factor.columns.push(col);
        factor.pivots.push(p);
        factor.trace_history.push(residual);
    }
    Ok(factor)
}

/// Eigenpairs `(μ_k, v_k)` with `v_iᵀ M̂ v_j = μ_i δ_ij`, μ descending.
#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    pub mu: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Total variance the truncation criterion is measured against.
    pub total_variance: f64,
    pub truncation_tol: f64,
}

impl KLBasis {
    pub fn n_modes(&self) -> usize {
        self.mu.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Variance not represented by the retained modes.
    pub fn discarded_variance(&self) -> f64 {
        (self.total_variance - self.mu.iter().sum::<f64>()).max(0.0)
    }

    pub fn dump(&self) -> String {
        let mut s = format!(
            "klbasis {} {} total {} tol {}\n",
            self.n_modes(),
            self.dim(),
            text::fmt(self.total_variance),
            text::fmt(self.truncation_tol)
        );
        for (mu, v) in self.mu.iter().zip(&self.vectors) {
            let _ = writeln!(s, "{}", text::fmt(*mu));
            let vals: Vec<String> = v.iter().map(|x| text::fmt(*x)).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        }
        s
    }

    pub fn load(input: &str) -> Result<Self> {
        let mut lines = input.lines();
        Self::read(&mut lines)
    }

    pub(crate) fn read<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        const WHAT: &str = "klbasis";
        let header = lines.next().ok_or_else(|| Error::format(WHAT, "missing header"))?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("klbasis") {
            return Err(Error::format(WHAT, "expected 'klbasis' header"));
        }
        let modes = text::parse_usize(toks.next(), WHAT)?;
        let n = text::parse_usize(toks.next(), WHAT)?;
        let mut total = None;
        let mut tol = 0.0;
        while let Some(key) = toks.next() {
            match key {
                "total" => total = Some(text::parse_f64(toks.next(), WHAT)?),
                "tol" => tol = text::parse_f64(toks.next(), WHAT)?,
                other => return Err(Error::format(WHAT, format!("unknown header key {other:?}"))),
            }
        }
        let mut mu = Vec::with_capacity(modes);
        let mut vectors = Vec::with_capacity(modes);
        for _ in 0..modes {
            mu.push(text::parse_f64(lines.next().map(str::trim), WHAT)?);
            let v = lines
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(|t| text::parse_f64(Some(t), WHAT))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != n {
                return Err(Error::format(WHAT, format!("mode has {} values, expected {n}", v.len())));
            }
            vectors.push(v);
        }
        Ok(KLBasis {
            total_variance: total.unwrap_or_else(|| mu.iter().sum()),
            mu,
            vectors,
            truncation_tol: tol,
        })
    }
}

/// Multiplies `x` by the block-diagonal matrix with `block` copies of `mass`.
pub fn block_matvec(mass: &SparseMatrix, block: usize, x: &[f64]) -> Vec<f64> {
    let m = mass.n_rows();
    assert_eq!(x.len(), block * m);
    let mut y = vec![0.0; x.len()];
    for b in 0..block {
        mass.matvec_into(&x[b * m..(b + 1) * m], &mut y[b * m..(b + 1) * m]);
    }
    y
}

/// Solves the reduced eigenproblem `Lᵀ M̂ L ṽ = μ ṽ` and lifts `v = L ṽ`.
pub fn reduced_eigs(factor: &LowRankFactor, mass: &SparseMatrix, block: usize) -> Result<KLBasis> {
    let n = factor.n();
    if n != block * mass.n_rows() {
        return Err(Error::Dimension {
            expected: block * mass.n_rows(),
            got: n,
        });
    }
    let r = factor.rank();
    let cols = &factor.columns;
    let weighted: Vec<Vec<f64>> = cols.par_iter().map(|c| block_matvec(mass, block, c)).collect();
    let mut g = DMatrix::<f64>::zeros(r, r);
    for j in 0..r {
        for i in 0..=j {
            let v: f64 = cols[i].iter().zip(&weighted[j]).map(|(a, b)| a * b).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let eig = g.try_symmetric_eigen(f64::EPSILON, 0).ok_or(Error::EigFailed(r))?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mu: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let vectors: Vec<Vec<f64>> = order
        .par_iter()
        .map(|&k| {
            let w = eig.eigenvectors.column(k);
            // fix the sign so that the largest coefficient is positive
            let big = (0..r).fold(0, |b, i| if w[i].abs() > w[b].abs() { i } else { b });
            let s = if r > 0 && w[big] < 0.0 { -1.0 } else { 1.0 };
            let mut v = vec![0.0; n];
            for (i, c) in cols.iter().enumerate() {
                let a = s * w[i];
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi += a * ci;
                }
            }
            v
        })
        .collect();
    Ok(KLBasis {
        total_variance: mu.iter().sum(),
        mu,
        vectors,
        truncation_tol: 0.0,
    })
}

/// Keeps the shortest leading set of modes whose discarded variance is at
/// most `tol * total_variance`.
pub fn truncate(basis: &KLBasis, tol: f64) -> KLBasis {
    let budget = tol * basis.total_variance;
    let mut kept = 0.0;
    let mut m = basis.n_modes();
    for (k, mu) in basis.mu.iter().enumerate() {
        if basis.total_variance - kept <= budget {
            m = k;
            break;
        }
        kept += mu;
    }
    KLBasis {
        mu: basis.mu[..m].to_vec(),
        vectors: basis.vectors[..m].to_vec(),
        total_variance: basis.total_variance,
        truncation_tol: tol,
    }
}

/// `trace(M̂ C)`, evaluated on the sparsity pattern of the mass matrix.
pub fn weighted_trace(oracle: &dyn CovarianceOracle, mass: &SparseMatrix, block: usize) -> f64 {
    let m = mass.n_rows();
    assert_eq!(oracle.dim(), block * m);
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for (j, v) in mass.row(i) {
                for b in 0..block {
                    s += v * oracle.entry(b * m + j, b * m + i);
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}
