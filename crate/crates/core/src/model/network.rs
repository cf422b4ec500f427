use std::collections::BTreeMap;

use super::layer::{ActShape, Conv2d, Dense, Layer};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::Tensor2D;

/// Ordered layer stack with validated shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: ActShape,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output shape.
    shapes: Vec<ActShape>,
}

/// A weighted layer whose input units can be removed, together with the layer
/// producing those units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneSite {
    pub consumer: usize,
    pub producer: usize,
    pub units: usize,
}

/// Per weighted layer, its input features as `units x samples`.
///
/// Conv inputs contribute one sample per spatial position, ordered
/// sample-major then row-major over `(h, w)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationCapture {
    pub features: BTreeMap<usize, Tensor2D>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `samples x output features`.
    pub outputs: Tensor2D,
    pub capture: Option<ActivationCapture>,
}

pub(crate) fn compose(input: ActShape, layers: &[Layer]) -> std::result::Result<Vec<ActShape>, (usize, String)> {
    let mut shapes = Vec::with_capacity(layers.len() + 1);
    shapes.push(input);
    let mut cur = input;
    for (i, l) in layers.iter().enumerate() {
        cur = l.output_shape(cur).map_err(|m| (i, m))?;
        shapes.push(cur);
    }
    Ok(shapes)
}

impl Network {
    pub fn new(input_shape: ActShape, layers: Vec<Layer>) -> Result<Self> {
        let shapes = compose(input_shape, &layers)
            .map_err(|(i, m)| Error::Shape(format!("layer {i}: {m}")))?;
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> ActShape {
        self.input_shape
    }

    pub fn output_shape(&self) -> ActShape {
        *self.shapes.last().expect("at least the input shape")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_input_shape(&self, i: usize) -> ActShape {
        self.shapes[i]
    }

    pub fn layer_output_shape(&self, i: usize) -> ActShape {
        self.shapes[i + 1]
    }

    pub fn into_parts(self) -> (ActShape, Vec<Layer>) {
        (self.input_shape, self.layers)
    }

    pub fn weighted_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].is_weighted()).collect()
    }

    /// Weighted layers whose input units map one-to-one onto the outputs of an
    /// upstream weighted layer (through relu / flatten). The first weighted
    /// layer reads raw data and is never a site; a dense layer behind a flatten
    /// of a conv map with more than one spatial position is not a site either.
    pub fn prune_sites(&self) -> Vec<PruneSite> {
        let mut sites = Vec::new();
        for consumer in self.weighted_layers() {
            let mut flattened_image = false;
            for j in (0..consumer).rev() {
                match &self.layers[j] {
                    Layer::Relu => continue,
                    Layer::Flatten => {
                        if self.shapes[j].positions() != 1 {
                            flattened_image = true;
                        }
                    }
                    Layer::Dense(_) | Layer::Conv2d(_) => {
                        if !flattened_image {
                            sites.push(PruneSite {
                                consumer,
                                producer: j,
                                units: self.shapes[consumer].units(),
                            });
                        }
                        break;
                    }
                }
            }
        }
        sites
    }

    pub fn forward(&self, batch: &Tensor2D, capture: bool) -> Result<ForwardOutput> {
        self.forward_with(batch, capture, Execution::default())
    }

    /// Runs a `samples x input features` batch through every layer, optionally
    /// recording each weighted layer's input. Samples are processed
    /// independently, so the execution policy does not change the result.
    pub fn forward_with(&self, batch: &Tensor2D, capture: bool, exec: Execution) -> Result<ForwardOutput> {
        if batch.cols() != self.input_shape.numel() {
            return Err(Error::Shape(format!(
                "batch has {} features per sample, network expects {} ({:?})",
                batch.cols(),
                self.input_shape.numel(),
                self.input_shape
            )));
        }
        let mut cap = capture.then(ActivationCapture::default);
        let mut act = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let in_shape = self.shapes[i];
            if let (Some(cap), true) = (cap.as_mut(), layer.is_weighted()) {
                cap.features.insert(i, unit_features(&act, in_shape));
            }
            act = match layer {
                Layer::Dense(d) => dense_forward(d, &act, exec),
                Layer::Conv2d(c) => conv_forward(c, &act, in_shape, self.shapes[i + 1], exec),
                Layer::Relu => {
                    let mut a = act;
                    a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    a
                }
                Layer::Flatten => act,
            };
        }
        Ok(ForwardOutput {
            outputs: act,
            capture: cap,
        })
    }
}

/// Rearranges `samples x numel` activations into `units x (samples·positions)`.
pub(crate) fn unit_features(act: &Tensor2D, shape: ActShape) -> Tensor2D {
    match shape {
        ActShape::Flat(_) => act.transpose(),
        ActShape::Image { channels, .. } => {
            let pos = shape.positions();
            let s = act.rows();
            let mut out = Tensor2D::zeros(channels, s * pos);
            for c in 0..channels {
                let orow = out.row_mut(c);
                for k in 0..s {
                    orow[k * pos..(k + 1) * pos].copy_from_slice(&act.row(k)[c * pos..(c + 1) * pos]);
                }
            }
            out
        }
    }
}

fn dense_forward(d: &Dense, x: &Tensor2D, exec: Execution) -> Tensor2D {
    let w: Vec<f64> = d.weight.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = d.bias.iter().map(|&v| v as f64).collect();
    let n_in = d.in_features;
    let mut out = Tensor2D::zeros(x.rows(), d.out_features);
    exec.for_each_chunk_mut(out.data_mut(), d.out_features, |s, row| {
        let xs = x.row(s);
        for (o, y) in row.iter_mut().enumerate() {
            let wo = &w[o * n_in..(o + 1) * n_in];
            *y = b[o] + wo.iter().zip(xs).map(|(a, c)| a * c).sum::<f64>();
        }
    });
    out
}

fn conv_forward(c: &Conv2d, x: &Tensor2D, in_shape: ActShape, out_shape: ActShape, exec: Execution) -> Tensor2D {
    let ActShape::Image { height: h, width: w, .. } = in_shape else {
        unreachable!("validated at construction")
    };
    let ActShape::Image { height: ho, width: wo, .. } = out_shape else {
        unreachable!("validated at construction")
    };
    let wt: Vec<f64> = c.weight.iter().map(|&v| v as f64).collect();
    let [kh, kw] = c.kernel;
    let (stride, pad) = (c.stride as isize, c.padding as isize);
    let out_numel = out_shape.numel();
    let mut out = Tensor2D::zeros(x.rows(), out_numel);
    if out_numel == 0 {
        return out;
    }
    exec.for_each_chunk_mut(out.data_mut(), out_numel, |s, y| {
        let xs = x.row(s);
        for o in 0..c.out_channels {
            let bias = c.bias[o] as f64;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias;
                    for i in 0..c.in_channels {
                        let plane = &xs[i * h * w..(i + 1) * h * w];
                        for a in 0..kh {
                            let iy = oy as isize * stride + a as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = c.widx(o, i, a, 0);
                            for b in 0..kw {
                                let ix = ox as isize * stride + b as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += wt[base + b] * plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                    y[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
    });
    out
}
