//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::uq::NormKind;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mesh_level: u32,
    pub kl_tol_v: f64,
    pub kl_tol_a: f64,
    pub grid_cells: usize,
    /// Positive and strictly ascending.
    pub eps_list: Vec<f64>,
    pub n_mc: usize,
    pub seed: u64,
    pub quad_level: usize,
    /// Derive Smolyak anisotropy weights from the vector field mode sizes.
    pub quad_anisotropic: bool,
    pub n_taylor: usize,
    pub mean_norm: NormKind,
    pub var_norm: NormKind,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh_level: 4,
            kl_tol_v: 1e-2,
            kl_tol_a: 1e-2,
            grid_cells: 256,
            eps_list: vec![0.03125, 0.0625, 0.125, 0.25, 0.5, 1.0],
            n_mc: 2000,
            seed: 1,
            quad_level: 2,
            quad_anisotropic: false,
            n_taylor: 5,
            mean_norm: NormKind::H1,
            var_norm: NormKind::W11,
            output: PathBuf::from("out"),
        }
    }
}

fn norm_name(n: NormKind) -> &'static str {
    match n {
        NormKind::H1 => "h1",
        NormKind::W11 => "w11",
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

impl ExperimentConfig {
    pub fn parse(input: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in input.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mesh_level" => self.mesh_level = num(key, value)?,
            "kl_tol_v" => self.kl_tol_v = num(key, value)?,
            "kl_tol_a" => self.kl_tol_a = num(key, value)?,
            "grid_cells" => self.grid_cells = num(key, value)?,
            "eps_list" => {
                self.eps_list = value
                    .split(',')
                    .map(|t| num(key, t.trim()))
                    .collect::<Result<_>>()?
            }
            "n_mc" => self.n_mc = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "quad_level" => self.quad_level = num(key, value)?,
            "quad_anisotropic" => self.quad_anisotropic = num(key, value)?,
            "n_taylor" => self.n_taylor = num(key, value)?,
            "mean_norm" | "var_norm" => {
                let n = match value {
                    "h1" => NormKind::H1,
                    "w11" => NormKind::W11,
                    _ => return Err(bad(key, value)),
                };
                if key == "mean_norm" {
                    self.mean_norm = n;
                } else {
                    self.var_norm = n;
                }
            }
            "output" => self.output = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.mesh_level > 9 {
            return fail(format!("mesh_level {} is too fine", self.mesh_level));
        }
        for (name, tol) in [("kl_tol_v", self.kl_tol_v), ("kl_tol_a", self.kl_tol_a)] {
            if !(tol > 0.0 && tol < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {tol}"));
            }
        }
        if self.grid_cells < 16 {
            return fail(format!("grid_cells must be at least 16, got {}", self.grid_cells));
        }
        if self.eps_list.is_empty() {
            return fail("eps_list is empty".into());
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) || self.eps_list.windows(2).any(|w| w[0] >= w[1]) {
            return fail("eps_list must be positive and strictly ascending".into());
        }
        if self.n_mc < 2 {
            return fail(format!("n_mc must be at least 2, got {}", self.n_mc));
        }
        if self.n_taylor == 0 {
            return fail("n_taylor must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let eps: Vec<String> = self.eps_list.iter().map(|e| format!("{e:?}")).collect();
        let _ = writeln!(s, "mesh_level = {}", self.mesh_level);
        let _ = writeln!(s, "kl_tol_v = {:?}", self.kl_tol_v);
        let _ = writeln!(s, "kl_tol_a = {:?}", self.kl_tol_a);
        let _ = writeln!(s, "grid_cells = {}", self.grid_cells);
        let _ = writeln!(s, "eps_list = {}", eps.join(", "));
        let _ = writeln!(s, "n_mc = {}", self.n_mc);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "quad_level = {}", self.quad_level);
        let _ = writeln!(s, "quad_anisotropic = {}", self.quad_anisotropic);
        let _ = writeln!(s, "n_taylor = {}", self.n_taylor);
        let _ = writeln!(s, "mean_norm = {}", norm_name(self.mean_norm));
        let _ = writeln!(s, "var_norm = {}", norm_name(self.var_norm));
        let _ = writeln!(s, "output = {}", self.output.display());
        s
    }

    /// SHA-256 of everything that influences numerical results.
    pub fn hash(&self) -> String {
        let canonical: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output"))
            .collect::<Vec<_>>()
            .join("\n");
        short_hash(&canonical)
    }

    /// Hash of the settings the KL artifacts depend on.
    pub fn kl_key(&self) -> String {
        short_hash(&format!(
            "{} {:?} {:?} {}",
            self.mesh_level, self.kl_tol_v, self.kl_tol_a, self.grid_cells
        ))
    }
}

fn short_hash(s: &str) -> String {
    Sha256::digest(s.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let cfg = ExperimentConfig::parse(
            "# desk run\nmesh_level = 3\neps_list = 0.25, 0.5,1 # trailing\nn_mc=100\nvar_norm = h1\n\n",
        )
        .unwrap();
        assert_eq!(cfg.mesh_level, 3);
        assert_eq!(cfg.eps_list, vec![0.25, 0.5, 1.0]);
        assert_eq!(cfg.n_mc, 100);
        assert_eq!(cfg.var_norm, NormKind::H1);
        assert_eq!(cfg.grid_cells, 256);
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_ne!(ExperimentConfig::default().hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.output = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn rejects_invalid_settings() {
        for text in [
            "eps_list = 0.5, 0.25",
            "eps_list = 0, 1",
            "eps_list = 1, 1",
            "n_mc = 1",
            "kl_tol_v = 1.5",
            "kl_tol_a = 0",
            "grid_cells = 8",
            "mesh_level = x",
            "colour = red",
            "mesh_level",
            "mean_norm = l7",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }
}
