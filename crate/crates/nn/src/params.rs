use std::collections::HashMap;

use ct2mr_tensor::{rng, Gradients, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{NnError, Result};

/// Standard deviation for weight initialization.
pub const WEIGHT_STD: f32 = 0.02;

/// Ordered collection of named parameter tensors. Insertion order is the
/// schema order and survives checkpoint round-trips.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect()
    }

    /// Require names and shapes to match `expected` exactly, in order.
    /// A renamed or reshaped parameter is a hard error, never a silent
    /// misassignment.
    pub fn validate_schema(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        if self.entries.len() != expected.len() {
            return Err(NnError::SchemaCount {
                expected: expected.len(),
                found: self.entries.len(),
            });
        }
        for (i, ((name, tensor), (exp_name, exp_shape))) in
            self.entries.iter().zip(expected).enumerate()
        {
            if name != exp_name || tensor.shape() != exp_shape.as_slice() {
                return Err(NnError::SchemaMismatch {
                    position: i,
                    expected: exp_name.clone(),
                    expected_shape: exp_shape.clone(),
                    found: name.clone(),
                    found_shape: tensor.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Parameters leased onto a tape for one forward/backward pass.
pub struct ParamVars<'t> {
    map: HashMap<String, Var<'t>>,
}

impl<'t> ParamVars<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    /// Assemble from explicit (name, var) pairs; used by gradient-check
    /// harnesses that lease perturbed copies of the parameters.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        ParamVars {
            map: pairs.into_iter().collect(),
        }
    }
}

/// Copy every parameter onto `tape` as a named leaf.
pub fn load_params<'t>(tape: &'t Tape, params: &ParamSet, requires_grad: bool) -> ParamVars<'t> {
    let map = params
        .iter()
        .map(|(name, t)| (name.to_string(), tape.leaf_named(t.clone(), requires_grad, name)))
        .collect();
    ParamVars { map }
}

/// Pull one gradient per parameter, in schema order.
pub fn collect_grads(
    params: &ParamSet,
    vars: &ParamVars<'_>,
    grads: &mut Gradients,
) -> Result<Vec<Tensor>> {
    params
        .iter()
        .map(|(name, t)| {
            let var = vars.get(name)?;
            let g = grads
                .take(var)
                .ok_or_else(|| NnError::MissingGradient(name.to_string()))?;
            if g.shape() != t.shape() {
                return Err(NnError::GradientShape {
                    name: name.to_string(),
                    expected: t.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            Ok(g)
        })
        .collect()
}

/// Tensor with entries drawn from Normal(0, std).
pub fn normal_tensor(shape: &[usize], std: f32, seed: u64) -> Tensor {
    let normal = Normal::new(0.0f32, std).expect("std > 0");
    let mut stream = rng::stream(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(&mut stream)).collect())
        .expect("shape/data agree")
}

/// Register `<name>.weight` [out, in, k, k] ~ Normal(0, 0.02) and a zero
/// `<name>.bias` [out].
pub fn register_conv(
    params: &mut ParamSet,
    name: &str,
    out_ch: usize,
    in_ch: usize,
    kh: usize,
    kw: usize,
    seed: u64,
) -> Result<()> {
    params.insert(
        format!("{name}.weight"),
        normal_tensor(&[out_ch, in_ch, kh, kw], WEIGHT_STD, seed),
    )?;
    params.insert(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?;
    Ok(())
}

/// Transposed-convolution weights use the [in, out, k, k] layout.
pub fn register_conv_transpose(
    params: &mut ParamSet,
    name: &str,
    in_ch: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    seed: u64,
) -> Result<()> {
    params.insert(
        format!("{name}.weight"),
        normal_tensor(&[in_ch, out_ch, kh, kw], WEIGHT_STD, seed),
    )?;
    params.insert(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?;
    Ok(())
}

/// Uniformly random tensor in [lo, hi), seeded.
pub fn uniform_tensor(shape: &[usize], lo: f32, hi: f32, seed: u64) -> Tensor {
    let mut stream = rng::stream(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| stream.gen_range(lo..hi)).collect())
        .expect("shape/data agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_rejects_duplicates() {
        let mut ps = ParamSet::new();
        ps.insert("a", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            ps.insert("a", Tensor::zeros(&[2])),
            Err(NnError::DuplicateParam(_))
        ));
    }

    #[test]
    fn conv_init_statistics() {
        let mut ps = ParamSet::new();
        register_conv(&mut ps, "c", 50, 8, 5, 5, 7).unwrap();
        let w = ps.get("c.weight").unwrap();
        assert_eq!(w.len(), 10_000);
        let mean: f64 = w.data().iter().map(|&v| v as f64).sum::<f64>() / w.len() as f64;
        let std: f64 = (w
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / w.len() as f64)
            .sqrt();
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((std - 0.02).abs() < 0.002, "std {std}");
        assert!(ps.get("c.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = normal_tensor(&[64, 3, 3, 3], WEIGHT_STD, 42);
        let b = normal_tensor(&[64, 3, 3, 3], WEIGHT_STD, 42);
        assert_eq!(a.data(), b.data());
        let c = normal_tensor(&[64, 3, 3, 3], WEIGHT_STD, 43);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn schema_validation_catches_renames() {
        let mut ps = ParamSet::new();
        ps.insert("enc.weight", Tensor::zeros(&[4, 2, 3, 3])).unwrap();
        let mut expected = ps.schema();
        ps.validate_schema(&expected).unwrap();
        expected[0].0 = "encoder.weight".to_string();
        assert!(matches!(
            ps.validate_schema(&expected),
            Err(NnError::SchemaMismatch { .. })
        ));
    }
}
