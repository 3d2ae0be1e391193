//! Quadrature rules for the uniform density on `[-√3, √3]^d`.

use std::collections::BTreeMap;

use crate::fields::PARAM_BOUND;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule for the uniform probability density on
/// `[-√3, √3]`; exact up to degree `2n - 1`.
pub fn gauss_legendre_1d(n: usize) -> QuadratureRule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule {
        nodes: nodes.iter().map(|x| vec![PARAM_BOUND * x]).collect(),
        weights,
    }
}

/// Sparse combination of Gauss–Legendre rules over the anisotropic index set
/// `{ℓ : Σ_j w_j ℓ_j ≤ level}`, with `ℓ_j + 1` points in direction `j`.
/// Combination weights can be negative; they always sum to one.
pub fn smolyak_rule(dim: usize, level: usize, weights: &[f64]) -> QuadratureRule {
    assert!(dim >= 1);
    assert_eq!(weights.len(), dim);
    assert!(weights.iter().all(|&w| w >= 1.0));
    let budget = level as f64 + 1e-9;
    let max_order = level + 1;
    let rules: Vec<QuadratureRule> = (1..=max_order).map(gauss_legendre_1d).collect();

    let mut indices = vec![];
    let mut current = vec![0usize; dim];
    collect_indices(0, 0.0, budget, weights, &mut current, &mut indices);

    let mut merged: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
    for idx in &indices {
        let c = combination_coefficient(idx, weights, budget);
        if c == 0 {
            continue;
        }
        let active: Vec<usize> = (0..dim).filter(|&j| idx[j] > 0).collect();
        let mut counter = vec![0usize; active.len()];
        loop {
            let mut x = vec![0.0; dim];
            let mut w = c as f64;
            for (k, &j) in active.iter().enumerate() {
                let r = &rules[idx[j]];
                x[j] = r.nodes[counter[k]][0];
                w *= r.weights[counter[k]];
            }
            let key = x.iter().map(|v| (v + 0.0).to_bits()).collect();
            merged.entry(key).or_insert((x, 0.0)).1 += w;
            if !advance(&mut counter, |k| idx[active[k]] + 1) {
                break;
            }
        }
    }
    let (nodes, weights) = merged.into_values().filter(|(_, w)| *w != 0.0).unzip();
    QuadratureRule { nodes, weights }
}

/// Anisotropy weights `1 + log2(s_max / s_j)` from per-direction scales.
pub fn anisotropy_weights(scales: &[f64]) -> Vec<f64> {
    let top = scales.iter().fold(0.0, |m: f64, s| m.max(*s));
    scales
        .iter()
        .map(|&s| if s > 0.0 { 1.0 + (top / s).log2() } else { f64::INFINITY })
        .map(|w| w.min(1e6))
        .collect()
}

fn collect_indices(j: usize, used: f64, budget: f64, w: &[f64], current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if j == current.len() {
        out.push(current.clone());
        return;
    }
    let mut l = 0;
    while used + w[j] * l as f64 <= budget {
        current[j] = l;
        collect_indices(j + 1, used + w[j] * l as f64, budget, w, current, out);
        l += 1;
    }
    current[j] = 0;
}

/// `Σ_{e ∈ {0,1}^d, ℓ+e ∈ Λ} (-1)^{|e|}`, enumerating only admissible `e`.
fn combination_coefficient(idx: &[usize], w: &[f64], budget: f64) -> i64 {
    let used: f64 = idx.iter().zip(w).map(|(&l, &wj)| l as f64 * wj).sum();
    fn walk(start: usize, room: f64, sign: i64, w: &[f64]) -> i64 {
        let mut total = sign;
        for j in start..w.len() {
            if w[j] <= room {
                total += walk(j + 1, room - w[j], -sign, w);
            }
        }
        total
    }
    walk(0, budget - used, 1, w)
}

/// Odometer increment; false once every digit has wrapped.
fn advance(counter: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in 0..counter.len() {
        counter[k] += 1;
        if counter[k] < radix(k) {
            return true;
        }
        counter[k] = 0;
    }
    false
}
