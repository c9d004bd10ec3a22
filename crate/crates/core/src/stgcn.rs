//! Spatial-temporal graph convolution backbone: input standardization, a
//! stack of graph/temporal convolution units, per-subject global pooling and a
//! softmax activity classifier, trained with momentum SGD.

use ndarray::{Array1, Array2, Array4, Array5, ArrayD, ArrayView2, ArrayView5, Axis, IxDyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{AnnotationContainer, SampleRecord, COORDS, SUBJECTS};
use crate::graph::{PartitionStrategy, SkeletonGraph};
use crate::nn::gradcheck::{check_gradients, GradCheckReport};
use crate::nn::ops::{self, BatchNormCache, TemporalGeometry, Trace};
use crate::nn::optim::{step_lr, Sgd};
use crate::nn::{ParamId, ParamSet, TensorRecord};
use crate::taxonomy::ActivityLabel;

const BN_MOMENTUM: f64 = 0.1;
const EVAL_CHUNK: usize = 32;
pub const CHECKPOINT_FORMAT: &str = "duet-stgcn-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StgcnConfig {
    /// Output channels of each unit, in order.
    pub unit_channels: Vec<usize>,
    /// Zero-based indices of units whose temporal convolution has stride 2.
    pub strided_units: Vec<usize>,
    pub temporal_kernel: usize,
    pub dropout: f64,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub partition: PartitionStrategy,
    /// Keep the epoch with the best validation accuracy and stop once it is
    /// perfect. When false every epoch runs and the last one is kept.
    pub select_best: bool,
}

impl Default for StgcnConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl StgcnConfig {
    /// Nine units of 64/128/256 channels, temporal kernel 9, halving the
    /// frame axis at the fourth and seventh unit.
    pub fn reference() -> Self {
        StgcnConfig {
            unit_channels: vec![64, 64, 64, 128, 128, 128, 256, 256, 256],
            strided_units: vec![3, 6],
            temporal_kernel: 9,
            dropout: 0.5,
            lr0: 0.01,
            lr_decay: 0.1,
            lr_step_epochs: 10,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            partition: PartitionStrategy::Uniform,
            select_best: true,
        }
    }

    /// Narrow variant of the same topology that trains in minutes on one core.
    pub fn desk() -> Self {
        StgcnConfig {
            unit_channels: vec![8, 16, 16],
            strided_units: vec![1, 2],
            lr0: 0.05,
            epochs: 30,
            ..Self::reference()
        }
    }

    /// Two units of four channels, for gradient checks.
    pub fn tiny() -> Self {
        StgcnConfig {
            unit_channels: vec![4, 4],
            strided_units: vec![1],
            temporal_kernel: 3,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(format!("backbone config: {m}")));
        if self.temporal_kernel == 0 || self.temporal_kernel.is_multiple_of(2) {
            return fail(format!("temporal_kernel must be odd, got {}", self.temporal_kernel));
        }
        if self.unit_channels.contains(&0) {
            return fail("unit channel counts must be positive".into());
        }
        if let Some(&u) = self.strided_units.iter().find(|&&u| u >= self.unit_channels.len()) {
            return fail(format!("strided unit {u} does not exist"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0) || self.lr_step_epochs == 0 {
            return fail("learning-rate schedule must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        Ok(())
    }

    /// Pooled feature length: last unit width times the two subjects, or the
    /// raw coordinate count when there are no units.
    pub fn feature_dim(&self) -> usize {
        SUBJECTS * self.unit_channels.last().copied().unwrap_or(COORDS)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_lr(self.lr0, self.lr_decay, self.lr_step_epochs, epoch)
    }

    fn stride(&self, unit: usize) -> usize {
        if self.strided_units.contains(&unit) {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Batch statistics and dropout drawn from `dropout_seed`.
    Train {
        dropout_seed: u64,
    },
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Debug, Clone, Copy)]
enum Residual {
    None,
    Identity,
    Project { weight: ParamId, norm: NormIds },
}

#[derive(Debug, Clone, Copy)]
struct UnitIds {
    graph: ParamId,
    norm1: NormIds,
    temporal: ParamId,
    norm2: NormIds,
    residual: Residual,
    stride: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    in_gamma: ParamId,
    in_beta: ParamId,
    in_mean: ParamId,
    in_std: ParamId,
    units: Vec<UnitIds>,
    fc_weight: ParamId,
    fc_bias: ParamId,
}

struct UnitCache {
    input: Array4<f64>,
    norm1: BatchNormCache,
    hidden: Array4<f64>,
    norm2: BatchNormCache,
    mask: Option<Vec<f64>>,
    residual: Option<BatchNormCache>,
    output: Array4<f64>,
}

struct Cache {
    standardized: Array4<f64>,
    units: Vec<UnitCache>,
    last_dim: (usize, usize, usize, usize),
    features: Array2<f64>,
}

struct Pass {
    logits: Array2<f64>,
    features: Array2<f64>,
    trace: Trace,
    cache: Option<Cache>,
}

/// Trained (or freshly initialized) backbone: configuration, class list,
/// learnable parameters and non-learnable statistics.
#[derive(Debug, Clone)]
pub struct StgcnModel {
    config: StgcnConfig,
    classes: Vec<ActivityLabel>,
    graph: SkeletonGraph,
    params: ParamSet,
    buffers: ParamSet,
    layout: Layout,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-bound..bound))
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StgcnModel {
    pub fn new(config: StgcnConfig, graph: SkeletonGraph, classes: Vec<ActivityLabel>) -> Result<Self> {
        config.validate()?;
        if classes.len() < 2 {
            return Err(Error::Contract(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        if graph.strategy() != config.partition {
            return Err(Error::Contract("graph partition strategy differs from config".into()));
        }
        let v = graph.num_nodes();
        let k = graph.partitions().len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let ones = |n: usize| ArrayD::from_elem(IxDyn(&[n]), 1.0);
        let zeros = |n: usize| ArrayD::zeros(IxDyn(&[n]));
        let in_gamma = params.add("input.gamma", ArrayD::from_elem(IxDyn(&[v, COORDS]), 1.0));
        let in_beta = params.add("input.beta", ArrayD::zeros(IxDyn(&[v, COORDS])));
        let in_mean = buffers.add("input.mean", ArrayD::zeros(IxDyn(&[v, COORDS])));
        let in_std = buffers.add("input.std", ArrayD::from_elem(IxDyn(&[v, COORDS]), 1.0));
        let norm = |params: &mut ParamSet, buffers: &mut ParamSet, prefix: String, n: usize| NormIds {
            gamma: params.add(format!("{prefix}.gamma"), ones(n)),
            beta: params.add(format!("{prefix}.beta"), zeros(n)),
            mean: buffers.add(format!("{prefix}.running_mean"), zeros(n)),
            var: buffers.add(format!("{prefix}.running_var"), ones(n)),
        };
        let mut units = Vec::new();
        let mut c_in = COORDS;
        for (i, &c_out) in config.unit_channels.iter().enumerate() {
            let stride = config.stride(i);
            let graph_w = params.add(
                format!("unit{i}.graph.weight"),
                uniform(&mut rng, &[k, c_out, c_in], k * c_in),
            );
            let norm1 = norm(&mut params, &mut buffers, format!("unit{i}.norm1"), c_out);
            let kt = config.temporal_kernel;
            let temporal = params.add(
                format!("unit{i}.temporal.weight"),
                uniform(&mut rng, &[c_out, c_out * kt], c_out * kt),
            );
            let norm2 = norm(&mut params, &mut buffers, format!("unit{i}.norm2"), c_out);
            let residual = if i == 0 {
                Residual::None
            } else if c_in == c_out && stride == 1 {
                Residual::Identity
            } else {
                let weight = params.add(
                    format!("unit{i}.residual.weight"),
                    uniform(&mut rng, &[c_out, c_in], c_in),
                );
                let norm = norm(&mut params, &mut buffers, format!("unit{i}.residual.norm"), c_out);
                Residual::Project { weight, norm }
            };
            units.push(UnitIds {
                graph: graph_w,
                norm1,
                temporal,
                norm2,
                residual,
                stride,
            });
            c_in = c_out;
        }
        let features = config.feature_dim();
        let fc_weight = params.add("fc.weight", uniform(&mut rng, &[classes.len(), features], features));
        let fc_bias = params.add("fc.bias", zeros(classes.len()));
        Ok(StgcnModel {
            config,
            classes,
            graph,
            params,
            buffers,
            layout: Layout {
                in_gamma,
                in_beta,
                in_mean,
                in_std,
                units,
                fc_weight,
                fc_bias,
            },
        })
    }

    pub fn config(&self) -> &StgcnConfig {
        &self.config
    }

    /// Activity labels in dense output order.
    pub fn classes(&self) -> &[ActivityLabel] {
        &self.classes
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn buffers(&self) -> &ParamSet {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut ParamSet {
        &mut self.buffers
    }

    pub fn graph(&self) -> &SkeletonGraph {
        &self.graph
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn dense_index(&self, label: ActivityLabel) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }

    /// Sets the input standardization to per-joint, per-axis statistics of
    /// `batch` (pooled over samples, subjects and frames).
    pub fn fit_input_normalization(&mut self, batch: ArrayView5<f64>) -> Result<()> {
        self.check_batch(batch)?;
        let (b, m, t, v, c) = batch.dim();
        let count = (b * m * t) as f64;
        let mut mean = Array2::<f64>::zeros((v, c));
        let mut sq = Array2::<f64>::zeros((v, c));
        for sample in batch.outer_iter() {
            for subject in sample.outer_iter() {
                for frame in subject.outer_iter() {
                    mean += &frame;
                }
            }
        }
        mean /= count;
        for sample in batch.outer_iter() {
            for subject in sample.outer_iter() {
                for frame in subject.outer_iter() {
                    let d = &frame - &mean;
                    sq += &(&d * &d);
                }
            }
        }
        let std = (sq / count).mapv(|s| if s.sqrt() > 1e-9 { s.sqrt() } else { 1.0 });
        self.buffers
            .slice_mut(self.layout.in_mean)
            .copy_from_slice(mean.as_slice().unwrap());
        self.buffers
            .slice_mut(self.layout.in_std)
            .copy_from_slice(std.as_slice().unwrap());
        Ok(())
    }

    fn check_batch(&self, batch: ArrayView5<f64>) -> Result<()> {
        let (b, m, t, v, c) = batch.dim();
        if b == 0 || m != SUBJECTS || v != self.graph.num_nodes() || c != COORDS {
            return Err(Error::Contract(format!(
                "batch shape {:?} does not match (B>0, {SUBJECTS}, T, {}, {COORDS})",
                batch.shape(),
                self.graph.num_nodes()
            )));
        }
        if t < self.config.temporal_kernel {
            return Err(Error::Contract(format!(
                "{t} frames is shorter than the temporal kernel {}",
                self.config.temporal_kernel
            )));
        }
        Ok(())
    }

    /// `(B, M, T, V, C)` batch to standardized `(B*M, C, T, V)` instances,
    /// before the learnable per-joint scale and shift.
    fn standardize(&self, batch: ArrayView5<f64>) -> Array4<f64> {
        let (b, m, t, v, c) = batch.dim();
        let mean = self.buffers.view2(self.layout.in_mean);
        let std = self.buffers.view2(self.layout.in_std);
        let inv = std.mapv(|s| if s > 0.0 { 1.0 / s } else { 1.0 });
        Array4::from_shape_fn((b * m, c, t, v), |(n, ci, ti, vi)| {
            (batch[[n / m, n % m, ti, vi, ci]] - mean[[vi, ci]]) * inv[[vi, ci]]
        })
    }

    fn norm_forward(
        &self,
        p: &ParamSet,
        ids: NormIds,
        x: &Array4<f64>,
        mode: Mode,
    ) -> (Array4<f64>, Option<BatchNormCache>) {
        match mode {
            Mode::Train { .. } => {
                let (y, cache) = ops::batch_norm_train(x, p.slice(ids.gamma), p.slice(ids.beta));
                (y, Some(cache))
            }
            Mode::Eval => (
                ops::batch_norm_eval(
                    x,
                    p.slice(ids.gamma),
                    p.slice(ids.beta),
                    self.buffers.slice(ids.mean),
                    self.buffers.slice(ids.var),
                ),
                None,
            ),
        }
    }

    fn run(&self, p: &ParamSet, batch: ArrayView5<f64>, mode: Mode, keep: bool) -> Result<Pass> {
        self.check_batch(batch)?;
        let mut trace = Trace::default();
        let standardized = self.standardize(batch);
        let gamma = p.view2(self.layout.in_gamma);
        let beta = p.view2(self.layout.in_beta);
        let mut x = standardized.clone();
        for mut inst in x.outer_iter_mut() {
            for (ci, mut chan) in inst.outer_iter_mut().enumerate() {
                for mut frame in chan.outer_iter_mut() {
                    for (vi, val) in frame.iter_mut().enumerate() {
                        *val = *val * gamma[[vi, ci]] + beta[[vi, ci]];
                    }
                }
            }
        }
        let parts = self.graph.partitions();
        let mut caches = Vec::new();
        for (ui, unit) in self.layout.units.iter().enumerate() {
            let g = ops::graph_conv_forward(&x, parts, p.view3(unit.graph));
            let (mut hidden, norm1) = self.norm_forward(p, unit.norm1, &g, mode);
            drop(g);
            ops::relu_inplace(&mut hidden, &mut trace);
            let geo = TemporalGeometry::same(self.config.temporal_kernel, unit.stride);
            let tc = ops::temporal_conv_forward(&hidden, p.view2(unit.temporal), None, geo);
            let (mut z, norm2) = self.norm_forward(p, unit.norm2, &tc, mode);
            drop(tc);
            let mask = match mode {
                Mode::Train { dropout_seed } if self.config.dropout > 0.0 => {
                    let mask = ops::dropout_mask(z.len(), self.config.dropout, dropout_seed, ui as u64);
                    ops::apply_mask(z.as_slice_mut().unwrap(), &mask);
                    Some(mask)
                }
                _ => None,
            };
            let residual = match unit.residual {
                Residual::None => None,
                Residual::Identity => {
                    z += &x;
                    None
                }
                Residual::Project { weight, norm } => {
                    let geo1 = TemporalGeometry {
                        kernel: 1,
                        stride: unit.stride,
                        pad: 0,
                    };
                    let r = ops::temporal_conv_forward(&x, p.view2(weight), None, geo1);
                    let (r, cache) = self.norm_forward(p, norm, &r, mode);
                    z += &r;
                    cache
                }
            };
            ops::relu_inplace(&mut z, &mut trace);
            let input = std::mem::replace(&mut x, z);
            if keep {
                caches.push(UnitCache {
                    input,
                    norm1: norm1.expect("training pass"),
                    hidden,
                    norm2: norm2.expect("training pass"),
                    mask,
                    residual,
                    output: x.clone(),
                });
            }
        }
        let (n, c, t, v) = x.dim();
        let pooled = x
            .into_shape_with_order((n, c, t * v))
            .expect("contiguous")
            .mean_axis(Axis(2))
            .expect("non-empty");
        let features = pooled
            .into_shape_with_order((n / SUBJECTS, SUBJECTS * c))
            .expect("contiguous");
        let logits = ops::dense_forward(
            features.view(),
            p.view2(self.layout.fc_weight),
            ndarray::ArrayView1::from(p.slice(self.layout.fc_bias)),
        );
        let cache = keep.then(|| Cache {
            standardized,
            units: caches,
            last_dim: (n, c, t, v),
            features: features.clone(),
        });
        Ok(Pass {
            logits,
            features,
            trace,
            cache,
        })
    }

    fn norm_backward(
        dy: &Array4<f64>,
        cache: &BatchNormCache,
        p: &ParamSet,
        ids: NormIds,
        grads: &mut ParamSet,
    ) -> Array4<f64> {
        let c = cache.mean.len();
        let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
        let dx = ops::batch_norm_backward(dy, cache, p.slice(ids.gamma), &mut dg, &mut db);
        grads.accumulate(ids.gamma, &dg);
        grads.accumulate(ids.beta, &db);
        dx
    }

    fn backward(&self, p: &ParamSet, cache: &Cache, dlogits: &Array2<f64>, grads: &mut ParamSet) {
        let mut dw = Array2::<f64>::zeros(p.view2(self.layout.fc_weight).dim());
        let mut db = Array1::<f64>::zeros(dlogits.ncols());
        let dfeat = ops::dense_backward(
            dlogits.view(),
            cache.features.view(),
            p.view2(self.layout.fc_weight),
            &mut dw.view_mut(),
            &mut db.view_mut(),
        );
        grads.accumulate(self.layout.fc_weight, dw.as_slice().unwrap());
        grads.accumulate(self.layout.fc_bias, db.as_slice().unwrap());
        let (n, c, t, v) = cache.last_dim;
        let dpool = dfeat.into_shape_with_order((n, c)).expect("contiguous");
        let scale = 1.0 / (t * v) as f64;
        let mut dx = Array4::from_shape_fn((n, c, t, v), |(ni, ci, _, _)| dpool[[ni, ci]] * scale);
        let parts = self.graph.partitions();
        for (unit, uc) in self.layout.units.iter().zip(&cache.units).rev() {
            let mut dz = dx;
            ops::relu_backward_inplace(&mut dz, &uc.output);
            let mut dinput = Array4::<f64>::zeros(uc.input.dim());
            match unit.residual {
                Residual::None => {}
                Residual::Identity => dinput += &dz,
                Residual::Project { weight, norm } => {
                    let rc = uc.residual.as_ref().expect("training pass");
                    let dr = Self::norm_backward(&dz, rc, p, norm, grads);
                    let geo1 = TemporalGeometry {
                        kernel: 1,
                        stride: unit.stride,
                        pad: 0,
                    };
                    let mut dwr = Array2::<f64>::zeros(p.view2(weight).dim());
                    dinput +=
                        &ops::temporal_conv_backward(&dr, &uc.input, p.view2(weight), geo1, &mut dwr.view_mut(), None);
                    grads.accumulate(weight, dwr.as_slice().unwrap());
                }
            }
            if let Some(mask) = &uc.mask {
                ops::apply_mask(dz.as_slice_mut().unwrap(), mask);
            }
            let dtc = Self::norm_backward(&dz, &uc.norm2, p, unit.norm2, grads);
            let geo = TemporalGeometry::same(self.config.temporal_kernel, unit.stride);
            let mut dwt = Array2::<f64>::zeros(p.view2(unit.temporal).dim());
            let mut dh =
                ops::temporal_conv_backward(&dtc, &uc.hidden, p.view2(unit.temporal), geo, &mut dwt.view_mut(), None);
            grads.accumulate(unit.temporal, dwt.as_slice().unwrap());
            ops::relu_backward_inplace(&mut dh, &uc.hidden);
            let dg = Self::norm_backward(&dh, &uc.norm1, p, unit.norm1, grads);
            dinput += &ops::graph_conv_backward(
                &dg,
                &uc.input,
                parts,
                p.view3(unit.graph),
                &mut grads.view3_mut(unit.graph),
            );
            dx = dinput;
        }
        let mut dgamma = Array2::<f64>::zeros(p.view2(self.layout.in_gamma).dim());
        let mut dbeta = Array2::<f64>::zeros(dgamma.dim());
        for (inst_d, inst_x) in dx.outer_iter().zip(cache.standardized.outer_iter()) {
            for (ci, (cd, cx)) in inst_d.outer_iter().zip(inst_x.outer_iter()).enumerate() {
                for (fd, fx) in cd.outer_iter().zip(cx.outer_iter()) {
                    for vi in 0..fd.len() {
                        dgamma[[vi, ci]] += fd[vi] * fx[vi];
                        dbeta[[vi, ci]] += fd[vi];
                    }
                }
            }
        }
        grads.accumulate(self.layout.in_gamma, dgamma.as_slice().unwrap());
        grads.accumulate(self.layout.in_beta, dbeta.as_slice().unwrap());
    }

    /// Logits `(B, classes)`; `batch` is `(B, M, T, V, C)`.
    pub fn forward(&self, batch: ArrayView5<f64>) -> Result<Array2<f64>> {
        self.forward_mode(batch, Mode::Eval)
    }

    pub fn forward_mode(&self, batch: ArrayView5<f64>, mode: Mode) -> Result<Array2<f64>> {
        Ok(self.run(&self.params, batch, mode, false)?.logits)
    }

    pub fn probabilities(&self, batch: ArrayView5<f64>) -> Result<Array2<f64>> {
        Ok(ops::softmax(self.forward(batch)?.view()))
    }

    /// Pooled dyad features `(B, feature_dim)`: the first half is subject 0.
    pub fn extract_features(&self, batch: ArrayView5<f64>) -> Result<Array2<f64>> {
        Ok(self.run(&self.params, batch, Mode::Eval, false)?.features)
    }

    /// Mean cross-entropy of a training-mode pass and its gradient.
    pub fn loss_and_gradients(
        &self,
        params: &ParamSet,
        batch: ArrayView5<f64>,
        labels: &[usize],
        dropout_seed: u64,
    ) -> Result<(f64, ParamSet, Vec<BatchStats>)> {
        let pass = self.run(params, batch, Mode::Train { dropout_seed }, true)?;
        self.check_labels(labels, batch.dim().0)?;
        let (loss, dlogits) = ops::softmax_cross_entropy(pass.logits.view(), labels);
        let mut grads = params.zeros_like();
        let cache = pass.cache.expect("kept");
        self.backward(params, &cache, &dlogits, &mut grads);
        let mut stats = Vec::new();
        for (unit, uc) in self.layout.units.iter().zip(&cache.units) {
            stats.push(BatchStats::of(unit.norm1, &uc.norm1));
            stats.push(BatchStats::of(unit.norm2, &uc.norm2));
            if let (Residual::Project { norm, .. }, Some(rc)) = (unit.residual, &uc.residual) {
                stats.push(BatchStats::of(norm, rc));
            }
        }
        Ok((loss, grads, stats))
    }

    fn check_labels(&self, labels: &[usize], batch: usize) -> Result<()> {
        if labels.len() != batch {
            return Err(Error::Contract(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.classes.len()) {
            return Err(Error::Contract(format!("dense label {l} out of range")));
        }
        Ok(())
    }

    fn loss_fingerprint(
        &self,
        params: &ParamSet,
        batch: ArrayView5<f64>,
        labels: &[usize],
        dropout_seed: u64,
    ) -> (f64, u64) {
        let pass = self
            .run(params, batch, Mode::Train { dropout_seed }, false)
            .expect("batch validated");
        let (loss, _) = ops::softmax_cross_entropy(pass.logits.view(), labels);
        (loss, pass.trace.fingerprint())
    }

    fn apply_batch_stats(&mut self, stats: &[BatchStats]) {
        for s in stats {
            for (r, b) in self.buffers.slice_mut(s.mean).iter_mut().zip(&s.batch_mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            for (r, b) in self.buffers.slice_mut(s.var).iter_mut().zip(&s.batch_var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
        }
    }

    /// Dense predictions for a batch, evaluated in chunks.
    pub fn predict(&self, batch: ArrayView5<f64>) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(batch.dim().0);
        for start in (0..batch.dim().0).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(batch.dim().0);
            let logits = self.forward(batch.slice(ndarray::s![start..end, .., .., .., ..]))?;
            out.extend(logits.rows().into_iter().map(ops::argmax));
        }
        Ok(out)
    }

    /// Features for the named samples, in order.
    pub fn features_for<S: AsRef<str>>(&self, container: &AnnotationContainer, names: &[S]) -> Result<Array2<f64>> {
        let records = container.records(names)?;
        let mut out = Array2::<f64>::zeros((records.len(), self.feature_dim()));
        for (chunk_idx, chunk) in records.chunks(EVAL_CHUNK).enumerate() {
            let batch = stack_records(chunk)?;
            let f = self.extract_features(batch.view())?;
            let start = chunk_idx * EVAL_CHUNK;
            out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&f);
        }
        Ok(out)
    }

    /// Top-1 accuracy over the named samples.
    pub fn evaluate<S: AsRef<str>>(&self, container: &AnnotationContainer, names: &[S]) -> Result<f64> {
        let records = container.records(names)?;
        if records.is_empty() {
            return Err(Error::Contract("cannot evaluate on an empty name list".into()));
        }
        let targets = records
            .iter()
            .map(|r| {
                self.dense_index(r.label).ok_or_else(|| {
                    Error::Contract(format!(
                        "{}: label {} not among model classes",
                        r.frame_dir,
                        r.label.index()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut correct = 0;
        for (chunk, truth) in records.chunks(EVAL_CHUNK).zip(targets.chunks(EVAL_CHUNK)) {
            let batch = stack_records(chunk)?;
            let pred = self.predict(batch.view())?;
            correct += pred.iter().zip(truth).filter(|(p, t)| p == t).count();
        }
        Ok(correct as f64 / records.len() as f64)
    }

    pub fn to_checkpoint(&self, provenance: Option<serde_json::Value>) -> String {
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            classes: self.classes.clone(),
            graph_digest: self.graph.digest(),
            params: self.params.to_records(),
            buffers: self.buffers.to_records(),
            provenance,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_checkpoint(document: &str, graph: SkeletonGraph) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!("not a backbone checkpoint: {:?}", doc.format)));
        }
        if doc.graph_digest != graph.digest() {
            return Err(Error::Schema(
                "checkpoint was trained on a different skeleton graph".into(),
            ));
        }
        let mut model = StgcnModel::new(doc.config, graph, doc.classes)?;
        model.params.load_records(&doc.params)?;
        model.buffers.load_records(&doc.buffers)?;
        Ok(model)
    }
}

/// Batch statistics of one normalization layer, folded into its running
/// estimates after each optimizer step.
#[derive(Debug, Clone)]
pub struct BatchStats {
    mean: ParamId,
    var: ParamId,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchStats {
    fn of(ids: NormIds, cache: &BatchNormCache) -> Self {
        BatchStats {
            mean: ids.mean,
            var: ids.var,
            batch_mean: cache.mean.to_vec(),
            batch_var: cache.var_unbiased.to_vec(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    config: StgcnConfig,
    classes: Vec<ActivityLabel>,
    graph_digest: String,
    params: Vec<TensorRecord>,
    buffers: Vec<TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Stacks record keypoints into a `(B, M, T, V, C)` batch.
pub fn stack_records(records: &[&SampleRecord]) -> Result<Array5<f64>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Contract("empty batch".into()))?
        .keypoint
        .dim();
    let views = records
        .iter()
        .map(|r| {
            if r.keypoint.dim() == first {
                Ok(r.keypoint.view())
            } else {
                Err(Error::Contract(format!(
                    "{}: keypoint shape {:?} differs from {:?}",
                    r.frame_dir,
                    r.keypoint.shape(),
                    first
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ndarray::stack(Axis(0), &views).expect("shapes checked"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the kept epoch.
    pub model: StgcnModel,
    pub curve: Vec<EpochRecord>,
    pub val_accuracy: f64,
    pub best_epoch: usize,
}

/// Distinct activity labels of the listed samples, ascending.
pub fn dense_classes(container: &AnnotationContainer, names: &[&str]) -> Result<Vec<ActivityLabel>> {
    let mut classes: Vec<ActivityLabel> = container.records(names)?.iter().map(|r| r.label).collect();
    classes.sort();
    classes.dedup();
    Ok(classes)
}

/// Trains on `xsub_train` and selects the epoch with the best accuracy on
/// `xsub_value`. Output classes are the activities present in either list.
pub fn train(config: &StgcnConfig, graph: &SkeletonGraph, container: &AnnotationContainer) -> Result<TrainOutcome> {
    config.validate()?;
    let split = &container.split;
    if split.xsub_train.is_empty() || split.xsub_value.is_empty() {
        return Err(Error::Contract(
            "training needs non-empty train and validation lists".into(),
        ));
    }
    let all: Vec<&str> = split
        .xsub_train
        .iter()
        .chain(&split.xsub_value)
        .map(String::as_str)
        .collect();
    let classes = dense_classes(container, &all)?;
    let mut model = StgcnModel::new(config.clone(), graph.clone(), classes)?;
    let train_records = container.records(&split.xsub_train)?;
    let data = stack_records(&train_records)?;
    let labels: Vec<usize> = train_records
        .iter()
        .map(|r| model.dense_index(r.label).expect("class list covers train labels"))
        .collect();
    model.fit_input_normalization(data.view())?;

    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
    shuffler.set_stream(1);
    let mut optimizer = Sgd::new(config.momentum, config.weight_decay);
    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, StgcnModel)> = None;
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select(Axis(0), idx);
            let target: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let seed = mix(mix(config.seed, epoch as u64), bi as u64);
            let (loss, grads, stats) = model.loss_and_gradients(&model.params, batch.view(), &target, seed)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite loss {loss} at batch {bi}"),
                });
            }
            loss_sum += loss * idx.len() as f64;
            optimizer.step(&mut model.params, &grads, lr);
            model.apply_batch_stats(&stats);
        }
        let val_accuracy = model.evaluate(container, &split.xsub_value)?;
        curve.push(EpochRecord {
            epoch,
            lr,
            mean_loss: loss_sum / labels.len() as f64,
            val_accuracy,
        });
        if !config.select_best {
            if epoch + 1 == config.epochs {
                best = Some((val_accuracy, epoch, model.clone()));
            }
            continue;
        }
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, model.clone()));
        }
        // Later epochs can only tie, and ties keep the earlier epoch.
        if val_accuracy >= 1.0 {
            break;
        }
    }
    let (val_accuracy, best_epoch, model) = best.ok_or_else(|| Error::Contract("epochs must be positive".into()))?;
    Ok(TrainOutcome {
        model,
        curve,
        val_accuracy,
        best_epoch,
    })
}

/// Compares backpropagated gradients of a freshly initialized model with
/// central differences on `samples` random parameters. Dropout masks are
/// held fixed across evaluations.
pub fn gradient_check(
    config: &StgcnConfig,
    graph: &SkeletonGraph,
    batch: ArrayView5<f64>,
    labels: &[usize],
    num_classes: usize,
    epsilon: f64,
    samples: usize,
) -> Result<GradCheckReport> {
    let classes = (0..num_classes).map(ActivityLabel::new).collect::<Result<Vec<_>>>()?;
    let mut model = StgcnModel::new(config.clone(), graph.clone(), classes)?;
    model.fit_input_normalization(batch)?;
    let dropout_seed = mix(config.seed, 0x6772_6164);
    let (_, grads, _) = model.loss_and_gradients(&model.params, batch, labels, dropout_seed)?;
    Ok(check_gradients(
        &model.params,
        &grads,
        |p| model.loss_fingerprint(p, batch, labels, dropout_seed),
        samples,
        epsilon,
        config.seed ^ 0x5eed,
    ))
}

/// Per-sample predicted dense class from logits.
pub fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits.rows().into_iter().map(ops::argmax).collect()
}
