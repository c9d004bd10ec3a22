//! Kinesics head: a small 1-D convolutional classifier over frozen dyad
//! features, predicting kinesic communicative function.

use ndarray::{Array1, Array2, Array4, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gradcheck::{check_gradients, GradCheckReport};
use crate::nn::ops::{self, TemporalGeometry, Trace};
use crate::nn::optim::{step_lr, Sgd};
use crate::nn::{ParamId, ParamSet, TensorRecord};
use crate::taxonomy::{kinesic_function_of, ActivityLabel, KinesicFunction};

pub const CHECKPOINT_FORMAT: &str = "duet-head-checkpoint";
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub conv_channels: [usize; 2],
    /// Odd kernel; padding keeps the sequence length.
    pub conv_kernel: usize,
    pub dense_width: usize,
    /// Applied after the first dense layer only.
    pub dropout: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep the epoch with the best validation accuracy and stop once it is
    /// perfect. When false every epoch runs and the last one is kept.
    pub select_best: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            conv_channels: [64, 128],
            conv_kernel: 3,
            dense_width: 256,
            dropout: 0.5,
            lr: 0.01,
            lr_decay: 0.1,
            lr_step_epochs: 10,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            select_best: true,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(format!("head config: {m}")));
        if self.conv_kernel.is_multiple_of(2) {
            return fail(format!("conv_kernel must be odd, got {}", self.conv_kernel));
        }
        if self.conv_channels.contains(&0) || self.dense_width == 0 {
            return fail("layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) || self.lr_step_epochs == 0 || self.batch_size == 0 {
            return fail("learning rate, schedule and batch size must be positive".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_lr(self.lr, self.lr_decay, self.lr_step_epochs, epoch)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    conv1_w: ParamId,
    conv1_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
    fc1_w: ParamId,
    fc1_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct HeadModel {
    config: HeadConfig,
    feature_dim: usize,
    functions: Vec<KinesicFunction>,
    params: ParamSet,
    layout: Layout,
}

struct Cache {
    input: Array4<f64>,
    conv1: Array4<f64>,
    conv2: Array4<f64>,
    flat: Array2<f64>,
    mask: Option<Vec<f64>>,
    hidden1: Array2<f64>,
    hidden2: Array2<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ndarray::ArrayD<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    ndarray::ArrayD::from_shape_simple_fn(ndarray::IxDyn(shape), || rng.gen_range(-bound..bound))
}

impl HeadModel {
    /// `functions` lists the output classes in dense order.
    pub fn new(config: HeadConfig, feature_dim: usize, functions: Vec<KinesicFunction>) -> Result<Self> {
        config.validate()?;
        if !(2..=KinesicFunction::ALL.len()).contains(&functions.len()) {
            return Err(Error::Contract(format!(
                "head needs 2 to 5 output functions, got {}",
                functions.len()
            )));
        }
        if feature_dim == 0 {
            return Err(Error::Contract("feature dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let [c1, c2] = config.conv_channels;
        let k = config.conv_kernel;
        let (d, w, n) = (feature_dim, config.dense_width, functions.len());
        let zeros = |len: usize| ndarray::ArrayD::zeros(ndarray::IxDyn(&[len]));
        let mut params = ParamSet::new();
        let layout = Layout {
            conv1_w: params.add("conv1.weight", uniform(&mut rng, &[c1, k], k)),
            conv1_b: params.add("conv1.bias", zeros(c1)),
            conv2_w: params.add("conv2.weight", uniform(&mut rng, &[c2, c1 * k], c1 * k)),
            conv2_b: params.add("conv2.bias", zeros(c2)),
            fc1_w: params.add("fc1.weight", uniform(&mut rng, &[w, c2 * d], c2 * d)),
            fc1_b: params.add("fc1.bias", zeros(w)),
            fc2_w: params.add("fc2.weight", uniform(&mut rng, &[w, w], w)),
            fc2_b: params.add("fc2.bias", zeros(w)),
            out_w: params.add("out.weight", uniform(&mut rng, &[n, w], w)),
            out_b: params.add("out.bias", zeros(n)),
        };
        Ok(HeadModel {
            config,
            feature_dim,
            functions,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn functions(&self) -> &[KinesicFunction] {
        &self.functions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_features(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.feature_dim || x.nrows() == 0 {
            return Err(Error::Contract(format!(
                "features of shape {:?} do not match (B>0, {})",
                x.shape(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn run(&self, p: &ParamSet, x: ArrayView2<f64>, dropout_seed: Option<u64>) -> (Array2<f64>, Trace, Cache) {
        let mut trace = Trace::default();
        let (b, d) = x.dim();
        let geo = TemporalGeometry::same(self.config.conv_kernel, 1);
        let l = &self.layout;
        let input = x.to_owned().into_shape_with_order((b, 1, d, 1)).expect("contiguous");
        let mut conv1 = ops::temporal_conv_forward(&input, p.view2(l.conv1_w), Some(p.slice(l.conv1_b).into()), geo);
        ops::relu_inplace(&mut conv1, &mut trace);
        let mut conv2 = ops::temporal_conv_forward(&conv1, p.view2(l.conv2_w), Some(p.slice(l.conv2_b).into()), geo);
        ops::relu_inplace(&mut conv2, &mut trace);
        let flat = conv2
            .clone()
            .into_shape_with_order((b, self.config.conv_channels[1] * d))
            .expect("contiguous");
        let mut hidden1 = ops::dense_forward(flat.view(), p.view2(l.fc1_w), p.slice(l.fc1_b).into());
        let mask = dropout_seed.filter(|_| self.config.dropout > 0.0).map(|seed| {
            let mask = ops::dropout_mask(hidden1.len(), self.config.dropout, seed, 0);
            ops::apply_mask(hidden1.as_slice_mut().unwrap(), &mask);
            mask
        });
        hidden1.mapv_inplace(|v| v.max(0.0));
        trace_rows(&mut trace, &hidden1);
        let hidden2 = ops::dense_forward(hidden1.view(), p.view2(l.fc2_w), p.slice(l.fc2_b).into());
        let logits = ops::dense_forward(hidden2.view(), p.view2(l.out_w), p.slice(l.out_b).into());
        (
            logits,
            trace,
            Cache {
                input,
                conv1,
                conv2,
                flat,
                mask,
                hidden1,
                hidden2,
            },
        )
    }

    fn backward(&self, p: &ParamSet, cache: &Cache, dlogits: &Array2<f64>, grads: &mut ParamSet) {
        let l = &self.layout;
        let dense = |grads: &mut ParamSet, dy: &Array2<f64>, x: &Array2<f64>, w: ParamId, b: ParamId| {
            let mut dw = Array2::<f64>::zeros(p.view2(w).dim());
            let mut db = Array1::<f64>::zeros(dy.ncols());
            let dx = ops::dense_backward(dy.view(), x.view(), p.view2(w), &mut dw.view_mut(), &mut db.view_mut());
            grads.accumulate(w, dw.as_slice().unwrap());
            grads.accumulate(b, db.as_slice().unwrap());
            dx
        };
        let dh2 = dense(grads, dlogits, &cache.hidden2, l.out_w, l.out_b);
        let mut dh1 = dense(grads, &dh2, &cache.hidden1, l.fc2_w, l.fc2_b);
        ndarray::Zip::from(&mut dh1).and(&cache.hidden1).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        if let Some(mask) = &cache.mask {
            ops::apply_mask(dh1.as_slice_mut().unwrap(), mask);
        }
        let dflat = dense(grads, &dh1, &cache.flat, l.fc1_w, l.fc1_b);
        let mut dconv2 = dflat.into_shape_with_order(cache.conv2.dim()).expect("contiguous");
        ops::relu_backward_inplace(&mut dconv2, &cache.conv2);
        let geo = TemporalGeometry::same(self.config.conv_kernel, 1);
        let conv = |grads: &mut ParamSet, dy: &Array4<f64>, x: &Array4<f64>, w: ParamId, b: ParamId| {
            let mut dw = Array2::<f64>::zeros(p.view2(w).dim());
            let mut db = Array1::<f64>::zeros(dy.dim().1);
            let dx = ops::temporal_conv_backward(dy, x, p.view2(w), geo, &mut dw.view_mut(), Some(&mut db.view_mut()));
            grads.accumulate(w, dw.as_slice().unwrap());
            grads.accumulate(b, db.as_slice().unwrap());
            dx
        };
        let mut dconv1 = conv(grads, &dconv2, &cache.conv1, l.conv2_w, l.conv2_b);
        ops::relu_backward_inplace(&mut dconv1, &cache.conv1);
        conv(grads, &dconv1, &cache.input, l.conv1_w, l.conv1_b);
    }

    /// Class probabilities `(B, functions)` in evaluation mode.
    pub fn forward(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_features(features)?;
        let mut out = Array2::<f64>::zeros((features.nrows(), self.functions.len()));
        for start in (0..features.nrows()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(features.nrows());
            let (logits, _, _) = self.run(&self.params, features.slice(ndarray::s![start..end, ..]), None);
            out.slice_mut(ndarray::s![start..end, ..])
                .assign(&ops::softmax(logits.view()));
        }
        Ok(out)
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.forward(features)?.rows().into_iter().map(ops::argmax).collect())
    }

    pub fn loss_and_gradients(
        &self,
        params: &ParamSet,
        features: ArrayView2<f64>,
        labels: &[usize],
        dropout_seed: u64,
    ) -> Result<(f64, ParamSet)> {
        self.check_features(features)?;
        self.check_labels(labels, features.nrows())?;
        let (logits, _, cache) = self.run(params, features, Some(dropout_seed));
        let (loss, dlogits) = ops::softmax_cross_entropy(logits.view(), labels);
        let mut grads = params.zeros_like();
        self.backward(params, &cache, &dlogits, &mut grads);
        Ok((loss, grads))
    }

    fn check_labels(&self, labels: &[usize], rows: usize) -> Result<()> {
        if labels.len() != rows {
            return Err(Error::Contract(format!(
                "{} labels for {rows} feature rows",
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= self.functions.len()) {
            return Err(Error::Contract(format!("function label {l} out of range")));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, provenance: Option<serde_json::Value>) -> String {
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            feature_dim: self.feature_dim,
            functions: self.functions.clone(),
            params: self.params.to_records(),
            provenance,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_checkpoint(document: &str) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!("not a head checkpoint: {:?}", doc.format)));
        }
        let mut model = HeadModel::new(doc.config, doc.feature_dim, doc.functions)?;
        model.params.load_records(&doc.params)?;
        Ok(model)
    }
}

fn trace_rows(trace: &mut Trace, x: &Array2<f64>) {
    trace.absorb(x.as_slice().expect("contiguous"));
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    config: HeadConfig,
    feature_dim: usize,
    functions: Vec<KinesicFunction>,
    params: Vec<TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Dense function targets for activity labels: the distinct functions in
/// canonical order and each label's index into them.
pub fn function_targets(labels: &[ActivityLabel]) -> (Vec<KinesicFunction>, Vec<usize>) {
    let functions = crate::taxonomy::functions_present(labels);
    let targets = labels
        .iter()
        .map(|&l| functions.binary_search(&kinesic_function_of(l)).expect("listed"))
        .collect();
    (functions, targets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct HeadOutcome {
    pub model: HeadModel,
    pub curve: Vec<HeadEpoch>,
    pub val_accuracy: f64,
    pub best_epoch: usize,
}

/// Trains on dense function labels. See `HeadConfig::select_best` for which
/// epoch is kept.
pub fn head_train(
    config: &HeadConfig,
    functions: Vec<KinesicFunction>,
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    val_x: ArrayView2<f64>,
    val_y: &[usize],
) -> Result<HeadOutcome> {
    let mut distinct = train_y.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Contract(
            "head training set covers fewer than 2 functions".into(),
        ));
    }
    if val_y.is_empty() {
        return Err(Error::Contract("head validation set is empty".into()));
    }
    let mut model = HeadModel::new(config.clone(), train_x.ncols(), functions)?;
    model.check_features(train_x)?;
    model.check_labels(train_y, train_x.nrows())?;
    model.check_features(val_x)?;
    model.check_labels(val_y, val_x.nrows())?;

    let mut order: Vec<usize> = (0..train_y.len()).collect();
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
    shuffler.set_stream(1);
    let mut optimizer = Sgd::new(config.momentum, config.weight_decay);
    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, HeadModel)> = None;
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train_x.select(Axis(0), idx);
            let target: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let seed = config.seed ^ ((epoch as u64) << 32) ^ bi as u64;
            let (loss, grads) = model.loss_and_gradients(&model.params, batch.view(), &target, seed)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite head loss {loss} at batch {bi}"),
                });
            }
            loss_sum += loss * idx.len() as f64;
            optimizer.step(&mut model.params, &grads, lr);
        }
        let val_accuracy = head_evaluate(&model, val_x, val_y)?;
        curve.push(HeadEpoch {
            epoch,
            lr,
            mean_loss: loss_sum / train_y.len() as f64,
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
        if val_accuracy >= 1.0 {
            break;
        }
    }
    let (val_accuracy, best_epoch, model) = best.ok_or_else(|| Error::Contract("epochs must be positive".into()))?;
    Ok(HeadOutcome {
        model,
        curve,
        val_accuracy,
        best_epoch,
    })
}

/// Top-1 accuracy of the head on dense function labels.
pub fn head_evaluate(model: &HeadModel, features: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(Error::Contract(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let pred = model.predict(features)?;
    Ok(accuracy(&pred, labels))
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

/// Gradient check of a freshly initialized head with a fixed dropout mask.
pub fn head_gradient_check(
    config: &HeadConfig,
    functions: Vec<KinesicFunction>,
    features: ArrayView2<f64>,
    labels: &[usize],
    epsilon: f64,
    samples: usize,
) -> Result<GradCheckReport> {
    let model = HeadModel::new(config.clone(), features.ncols(), functions)?;
    let seed = config.seed ^ 0x6865_6164;
    let (_, grads) = model.loss_and_gradients(&model.params, features, labels, seed)?;
    Ok(check_gradients(
        &model.params,
        &grads,
        |p| {
            let (logits, trace, _) = model.run(p, features, Some(seed));
            (ops::softmax_cross_entropy(logits.view(), labels).0, trace.fingerprint())
        },
        samples,
        epsilon,
        config.seed ^ 0x5eed,
    ))
}

/// Principal-component projection of feature rows onto two axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Array2<f64>,
    /// Set when the input has no spread and the output is all zeros.
    pub warning: Option<String>,
}

/// Centers the rows and projects them on the top two principal directions.
/// Each direction's sign is fixed so its largest-magnitude loading is
/// positive; axes beyond the numerical rank are zero.
pub fn project_features_2d(features: ArrayView2<f64>) -> Result<Projection> {
    let (n, d) = features.dim();
    if n < 2 || d == 0 {
        return Err(Error::Contract(format!("projection needs at least 2 rows, got {n}")));
    }
    let mean = features.mean_axis(Axis(0)).expect("non-empty");
    let centered = &features - &mean;
    let matrix = nalgebra::DMatrix::from_fn(n, d, |i, j| centered[[i, j]]);
    let svd = matrix.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let mut coords = Array2::<f64>::zeros((n, 2));
    if !(top > 0.0) {
        return Ok(Projection {
            coords,
            warning: Some("all feature rows are identical; projection is zero".into()),
        });
    }
    let tolerance = top * 1e-12 * (n.max(d) as f64);
    for (axis, &k) in order.iter().take(2).enumerate() {
        if svd.singular_values[k] <= tolerance {
            continue;
        }
        let mut dir: Vec<f64> = v_t.row(k).iter().copied().collect();
        let pivot = dir
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, row) in centered.rows().into_iter().enumerate() {
            coords[[i, axis]] = row.iter().zip(&dir).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Projection { coords, warning: None })
}

/// Projection rows as CSV: `name,x,y,activity_label,function`.
pub fn projection_csv(names: &[String], labels: &[ActivityLabel], projection: &Projection) -> Result<String> {
    if names.len() != labels.len() || names.len() != projection.coords.nrows() {
        return Err(Error::Contract(
            "projection rows, names and labels differ in length".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["name", "x", "y", "activity_label", "function"])
        .map_err(io)?;
    for ((name, label), row) in names.iter().zip(labels).zip(projection.coords.rows()) {
        w.write_record([
            name.clone(),
            row[0].to_string(),
            row[1].to_string(),
            label.index().to_string(),
            kinesic_function_of(*label).as_str().to_string(),
        ])
        .map_err(io)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?).expect("utf-8"))
}
