//! Mean and variance fields: streaming Monte Carlo accumulation, weighted
//! quadrature, error norms and rate fits.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{NodalField, Norms};
use crate::fields::{draw_sample, Sample};
use crate::text;
use crate::uq::rules::QuadratureRule;

/// Samples accumulated sequentially before the tree merge.
pub const MC_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticsKind {
    MonteCarlo,
    Quadrature,
}

impl StatisticsKind {
    fn name(self) -> &'static str {
        match self {
            StatisticsKind::MonteCarlo => "mc",
            StatisticsKind::Quadrature => "quadrature",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub kind: StatisticsKind,
    /// Number of samples, or quadrature nodes.
    pub count: usize,
    pub mean: NodalField,
    /// Sum of squared deviations (Monte Carlo) or the weighted second
    /// central moment (quadrature).
    pub second_central: NodalField,
}

impl Statistics {
    pub fn empty(n: usize) -> Self {
        Statistics {
            kind: StatisticsKind::MonteCarlo,
            count: 0,
            mean: NodalField::zeros(n),
            second_central: NodalField::zeros(n),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.mean.len()
    }

    /// Welford update with one more sample.
    pub fn push(&mut self, x: &NodalField) -> Result<()> {
        x.check_len(self.n_nodes())?;
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        let mean = self.mean.values_mut();
        let m2 = self.second_central.values_mut();
        for (i, &xi) in x.values().iter().enumerate() {
            let delta = xi - mean[i];
            mean[i] += delta * inv;
            m2[i] += delta * (xi - mean[i]);
        }
        Ok(())
    }

    /// Pairwise combination of two Monte Carlo accumulators.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        other.mean.check_len(self.n_nodes())?;
        if other.count == 0 {
            return Ok(self.clone());
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mut out = self.clone();
        out.count += other.count;
        let mean = out.mean.values_mut();
        let m2 = out.second_central.values_mut();
        for i in 0..mean.len() {
            let delta = other.mean.values()[i] - mean[i];
            mean[i] += delta * nb / n;
            m2[i] += other.second_central.values()[i] + delta * delta * na * nb / n;
        }
        Ok(out)
    }

    pub fn variance(&self) -> NodalField {
        match self.kind {
            StatisticsKind::MonteCarlo => {
                let d = self.count.saturating_sub(1).max(1) as f64;
                self.second_central.scaled(1.0 / d)
            }
            StatisticsKind::Quadrature => self.second_central.clone(),
        }
    }

    /// Header line, then the mean and the variance as field blocks.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "statistics {} nodes {} count {}", self.kind.name(), self.n_nodes(), self.count);
        s.push_str(&self.mean.dump());
        s.push_str(&self.variance().dump());
        s
    }

    pub fn load(input: &str) -> Result<Self> {
        const WHAT: &str = "statistics";
        let mut parts = input.splitn(2, '\n');
        let header: Vec<&str> = parts.next().unwrap_or("").split_whitespace().collect();
        let (kind, n, count) = match header.as_slice() {
            ["statistics", kind, "nodes", n, "count", c] => (
                match *kind {
                    "mc" => StatisticsKind::MonteCarlo,
                    "quadrature" => StatisticsKind::Quadrature,
                    other => return Err(Error::format(WHAT, format!("unknown kind {other:?}"))),
                },
                text::parse_usize(Some(n), WHAT)?,
                text::parse_usize(Some(c), WHAT)?,
            ),
            _ => return Err(Error::format(WHAT, "bad header")),
        };
        let body = parts.next().unwrap_or("");
        let lines: Vec<&str> = body.lines().collect();
        if lines.len() < 2 * (n + 1) {
            return Err(Error::format(WHAT, "truncated field blocks"));
        }
        let mean = NodalField::load(&lines[..n + 1].join("\n"))?;
        let variance = NodalField::load(&lines[n + 1..2 * (n + 1)].join("\n"))?;
        mean.check_len(n)?;
        variance.check_len(n)?;
        let second_central = match kind {
            StatisticsKind::MonteCarlo => variance.scaled(count.saturating_sub(1).max(1) as f64),
            StatisticsKind::Quadrature => variance,
        };
        Ok(Statistics {
            kind,
            count,
            mean,
            second_central,
        })
    }
}

/// Merges neighbours level by level: `((0,1),(2,3)),...`.
pub fn tree_merge(mut parts: Vec<Statistics>) -> Result<Statistics> {
    assert!(!parts.is_empty());
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|c| if c.len() == 2 { c[0].merge(&c[1]) } else { Ok(c[0].clone()) })
            .collect::<Result<_>>()?;
    }
    Ok(parts.pop().unwrap())
}

/// Streams `n_samples` evaluations, each producing one field per channel.
/// Samples are grouped into blocks of [`MC_BLOCK`] that are accumulated
/// sequentially and then merged in a fixed tree, so the result does not
/// depend on how blocks are scheduled onto threads.
pub fn mc_channels<F>(n_samples: usize, n_channels: usize, n_nodes: usize, evaluate: F) -> Result<Vec<Statistics>>
where
    F: Fn(usize) -> Result<Vec<NodalField>> + Sync,
{
    let n_blocks = n_samples.div_ceil(MC_BLOCK).max(1);
    let blocks: Vec<Result<Vec<Statistics>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Statistics::empty(n_nodes); n_channels];
            for index in b * MC_BLOCK..((b + 1) * MC_BLOCK).min(n_samples) {
                let fields = evaluate(index).map_err(|e| Error::Sample {
                    index,
                    source: Box::new(e),
                })?;
                if fields.len() != n_channels {
                    return Err(Error::Dimension {
                        expected: n_channels,
                        got: fields.len(),
                    });
                }
                for (a, f) in acc.iter_mut().zip(&fields) {
                    a.push(f)?;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut per_channel: Vec<Vec<Statistics>> = vec![Vec::with_capacity(n_blocks); n_channels];
    for block in blocks {
        for (c, s) in block?.into_iter().enumerate() {
            per_channel[c].push(s);
        }
    }
    per_channel.into_iter().map(tree_merge).collect()
}

/// Plain Monte Carlo over i.i.d. samples `(y, z)` of dimensions `dims`.
pub fn mc_estimate<F>(solver: F, dims: (usize, usize), n_samples: usize, seed: u64) -> Result<Statistics>
where
    F: Fn(&Sample) -> Result<NodalField> + Sync,
{
    if n_samples < 2 {
        return Err(Error::Config(format!("need at least 2 samples, got {n_samples}")));
    }
    let first = solver(&draw_sample(seed, 0, dims.0, dims.1)).map_err(|e| Error::Sample {
        index: 0,
        source: Box::new(e),
    })?;
    let stats = mc_channels(n_samples, 1, first.len(), |i| {
        Ok(vec![solver(&draw_sample(seed, i as u64, dims.0, dims.1))?])
    })?;
    Ok(stats.into_iter().next().unwrap())
}

/// Weighted mean and centered second moment over the nodes of `rule`.
/// Negative combination weights can make the second moment slightly
/// negative; it is clamped at zero.
pub fn quadrature_estimate<F>(solver: F, rule: &QuadratureRule) -> Result<Statistics>
where
    F: Fn(&[f64]) -> Result<NodalField> + Sync,
{
    assert!(!rule.is_empty());
    let values = rule
        .nodes
        .par_iter()
        .enumerate()
        .map(|(index, z)| {
            solver(z).map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = values[0].len();
    let mut mean = vec![0.0; n];
    for (u, w) in values.iter().zip(&rule.weights) {
        u.check_len(n)?;
        for (m, v) in mean.iter_mut().zip(u.values()) {
            *m += w * v;
        }
    }
    let mut second = vec![0.0; n];
    for (u, w) in values.iter().zip(&rule.weights) {
        for i in 0..n {
            second[i] += w * (u.values()[i] - mean[i]).powi(2);
        }
    }
    second.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(Statistics {
        kind: StatisticsKind::Quadrature,
        count: rule.len(),
        mean: NodalField::new(mean),
        second_central: NodalField::new(second),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    H1,
    W11,
}

impl NormKind {
    pub fn eval(self, norms: &Norms, v: &NodalField) -> f64 {
        match self {
            NormKind::H1 => norms.h1(v),
            NormKind::W11 => norms.w11(v),
        }
    }
}

/// Norm of the difference of the selected moment fields.
pub fn field_error(norms: &Norms, a: &Statistics, b: &Statistics, which: Moment, norm: NormKind) -> Result<f64> {
    let diff = match which {
        Moment::Mean => a.mean.sub(&b.mean)?,
        Moment::Variance => a.variance().sub(&b.variance())?,
    };
    diff.check_len(norms.mesh().n_nodes())?;
    Ok(norm.eval(norms, &diff))
}

/// Least-squares slope of `log(error)` against `log(ε)`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::NonPositiveData);
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::NonPositiveData);
    }
    Ok(sxy / sxx)
}
