use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DenseMatrix, Tape, Var};
use crate::{Error, Result};

/// Ordered collection of named parameter matrices.
///
/// Models hold indices into their `ParamSet`; binding the set onto a tape
/// yields one differentiable leaf per entry, in the same order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<DenseMatrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: DenseMatrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &DenseMatrix {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut DenseMatrix {
        &mut self.values[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn values(&self) -> &[DenseMatrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(DenseMatrix::len).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.param(v.clone())).collect()
    }

    /// Binds every entry as a constant (no gradients recorded).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.constant(v.clone())).collect()
    }

    /// Writes a `manifest.tsv` listing `name<TAB>rows<TAB>cols` plus one
    /// matrix file per entry into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            manifest.push_str(&format!("{name}\t{}\t{}\n", value.rows(), value.cols()));
            value.save(dir.join(format!("{name}.mat")))?;
        }
        let path = dir.join("manifest.tsv");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }

    /// Loads values saved by [`ParamSet::save`] into this set, checking names and shapes.
    pub fn load_into(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.tsv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let entries: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if entries.len() != self.len() {
            return Err(Error::data(format!(
                "{}: {} entries, model expects {}",
                path.display(),
                entries.len(),
                self.len()
            )));
        }
        for (i, line) in entries.iter().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[0] != self.names[i] {
                return Err(Error::data(format!(
                    "{}: line {} does not describe `{}`",
                    path.display(),
                    i + 1,
                    self.names[i]
                )));
            }
            let value = DenseMatrix::load(dir.join(format!("{}.mat", fields[0])))?;
            if value.shape() != self.values[i].shape() {
                return Err(Error::data(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    fields[0],
                    value.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = value;
        }
        Ok(())
    }
}

/// Gaussian init with standard deviation `1/sqrt(fan_in)`.
pub fn fan_in_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let std = 1.0 / (rows.max(1) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}
