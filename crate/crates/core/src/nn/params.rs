use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::{ArrayD, ArrayView2, ArrayView3, ArrayView4, ArrayViewMut2, ArrayViewMut3, Ix2, Ix3, Ix4, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Handle to one tensor in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of named tensors. Learnable parameters, their
/// gradients and non-learnable buffers all use this container.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<ArrayD<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.values[id.0]
    }

    pub fn view2(&self, id: ParamId) -> ArrayView2<'_, f64> {
        self.values[id.0]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("rank-2 parameter")
    }

    pub fn view2_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f64> {
        self.values[id.0]
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("rank-2 parameter")
    }

    pub fn view3(&self, id: ParamId) -> ArrayView3<'_, f64> {
        self.values[id.0]
            .view()
            .into_dimensionality::<Ix3>()
            .expect("rank-3 parameter")
    }

    pub fn view3_mut(&mut self, id: ParamId) -> ArrayViewMut3<'_, f64> {
        self.values[id.0]
            .view_mut()
            .into_dimensionality::<Ix3>()
            .expect("rank-3 parameter")
    }

    /// Adds `delta` elementwise into parameter `id`.
    pub fn accumulate(&mut self, id: ParamId, delta: &[f64]) {
        for (v, d) in self.slice_mut(id).iter_mut().zip(delta) {
            *v += d;
        }
    }

    pub fn view4(&self, id: ParamId) -> ArrayView4<'_, f64> {
        self.values[id.0]
            .view()
            .into_dimensionality::<Ix4>()
            .expect("rank-4 parameter")
    }

    pub fn slice(&self, id: ParamId) -> &[f64] {
        self.values[id.0].as_slice().expect("parameters are contiguous")
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.values[id.0].as_slice_mut().expect("parameters are contiguous")
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(|v| ArrayD::zeros(v.raw_dim())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for v in &mut self.values {
            v.fill(0.0);
        }
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Locates the `flat`-th scalar across all tensors.
    pub fn locate(&self, mut flat: usize) -> (ParamId, usize) {
        for (i, v) in self.values.iter().enumerate() {
            if flat < v.len() {
                return (ParamId(i), flat);
            }
            flat -= v.len();
        }
        panic!("flat index out of range")
    }

    pub fn scalar(&self, flat: usize) -> f64 {
        let (id, off) = self.locate(flat);
        self.slice(id)[off]
    }

    pub fn set_scalar(&mut self, flat: usize, value: f64) {
        let (id, off) = self.locate(flat);
        self.slice_mut(id)[off] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        self.iter()
            .map(|(name, value)| {
                let mut bytes = Vec::with_capacity(value.len() * 8);
                for x in value.iter() {
                    bytes.extend_from_slice(&x.to_le_bytes());
                }
                TensorRecord {
                    name: name.to_string(),
                    shape: value.shape().to_vec(),
                    data: B64.encode(bytes),
                }
            })
            .collect()
    }

    /// Loads values from records; names and shapes must match this set exactly.
    pub fn load_records(&mut self, records: &[TensorRecord]) -> Result<()> {
        if records.len() != self.values.len() {
            return Err(Error::Schema(format!(
                "checkpoint holds {} tensors, model expects {}",
                records.len(),
                self.values.len()
            )));
        }
        for (i, rec) in records.iter().enumerate() {
            if rec.name != self.names[i] {
                return Err(Error::Schema(format!(
                    "tensor {i} is {:?}, expected {:?}",
                    rec.name, self.names[i]
                )));
            }
            if rec.shape != self.values[i].shape() {
                return Err(Error::Schema(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    rec.name,
                    rec.shape,
                    self.values[i].shape()
                )));
            }
            let bytes = B64
                .decode(&rec.data)
                .map_err(|e| Error::Schema(format!("tensor {:?}: {e}", rec.name)))?;
            if bytes.len() != self.values[i].len() * 8 {
                return Err(Error::Schema(format!("tensor {:?}: wrong payload length", rec.name)));
            }
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            self.values[i] = ArrayD::from_shape_vec(IxDyn(&rec.shape), data).expect("shape checked");
        }
        Ok(())
    }
}

/// Serialized tensor: little-endian f64 payload, base64 encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}
