//! Text containers for instances and iterate logs (JSON).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::synthetic::GeneratedInstance;
use crate::error::{Error, Result};
use crate::oracles::RecoveryInstance;

pub const INSTANCE_FORMAT: &str = "ampda-instance/1";
pub const ITERATES_FORMAT: &str = "ampda-iterates/1";

/// Self-describing instance file. `a` is stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: String,
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub mu: usize,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub b: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub x_true: Option<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_instance(
        inst: &RecoveryInstance,
        seed: Option<u64>,
        x_true: Option<&Array1<f64>>,
    ) -> Self {
        InstanceFile {
            format: INSTANCE_FORMAT.to_string(),
            m: inst.rows(),
            n: inst.cols(),
            lambda: inst.lambda,
            mu: inst.mu,
            k: inst.k,
            seed,
            lower: inst.lower.to_vec(),
            upper: inst.upper.to_vec(),
            b: inst.b.to_vec(),
            a: inst.a.rows().into_iter().map(|r| r.to_vec()).collect(),
            x_true: x_true.map(|x| x.to_vec()),
        }
    }

    pub fn from_generated(g: &GeneratedInstance) -> Self {
        Self::from_instance(&g.instance, Some(g.seed), Some(&g.x_true))
    }

    pub fn to_instance(&self) -> Result<RecoveryInstance> {
        if self.format != INSTANCE_FORMAT {
            return Err(Error::Argument(format!(
                "unsupported instance format `{}`",
                self.format
            )));
        }
        if self.a.len() != self.m || self.a.iter().any(|r| r.len() != self.n) {
            return Err(Error::Argument(format!(
                "matrix does not have shape {}x{}",
                self.m, self.n
            )));
        }
        let flat: Vec<f64> = self.a.iter().flatten().copied().collect();
        let a = Array2::from_shape_vec((self.m, self.n), flat)
            .map_err(|e| Error::Argument(e.to_string()))?;
        let inst = RecoveryInstance {
            a,
            b: Array1::from(self.b.clone()),
            lambda: self.lambda,
            mu: self.mu,
            k: self.k,
            lower: Array1::from(self.lower.clone()),
            upper: Array1::from(self.upper.clone()),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn x_true(&self) -> Option<Array1<f64>> {
        self.x_true.as_ref().map(|x| Array1::from(x.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Points visited by one solve, with the stepsize accepted at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateLog {
    pub format: String,
    pub sigma: f64,
    pub points: Vec<Vec<f64>>,
    /// `None` on the last point.
    pub alphas: Vec<Option<f64>>,
}

impl IterateLog {
    pub fn new(sigma: f64, points: Vec<Vec<f64>>, alphas: Vec<Option<f64>>) -> Self {
        IterateLog {
            format: ITERATES_FORMAT.to_string(),
            sigma,
            points,
            alphas,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let log: Self = read_json(path)?;
        if log.format != ITERATES_FORMAT {
            return Err(Error::Argument(format!(
                "unsupported iterate log format `{}`",
                log.format
            )));
        }
        if log.points.len() != log.alphas.len() {
            return Err(Error::Argument("iterate log has mismatched lengths".into()));
        }
        Ok(log)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_instance, SyntheticSpec};

    #[test]
    fn instance_round_trip() {
        let g =
            generate_instance(&SyntheticSpec::with_sizes(30, 10, 3, 1, 5.0, 1).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let file = InstanceFile::from_generated(&g);
        file.save(&path).unwrap();
        let back = InstanceFile::load(&path).unwrap();
        assert_eq!(file, back);
        let inst = back.to_instance().unwrap();
        assert_eq!(inst.a, g.instance.a);
        assert_eq!(inst.b, g.instance.b);
        assert_eq!(back.x_true().unwrap(), g.x_true);
    }

    #[test]
    fn rejects_malformed_instance() {
        let g =
            generate_instance(&SyntheticSpec::with_sizes(30, 10, 3, 1, 5.0, 1).unwrap()).unwrap();
        let mut file = InstanceFile::from_generated(&g);
        file.a.pop();
        assert!(file.to_instance().is_err());
        let mut file = InstanceFile::from_generated(&g);
        file.format = "other".into();
        assert!(file.to_instance().is_err());
    }
}
