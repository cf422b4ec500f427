use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor2D;

/// Activation shape of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub enum ActShape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl ActShape {
    pub fn numel(&self) -> usize {
        match *self {
            ActShape::Flat(n) => n,
            ActShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    /// Prunable units: features for flat activations, channels for images.
    pub fn units(&self) -> usize {
        match *self {
            ActShape::Flat(n) => n,
            ActShape::Image { channels, .. } => channels,
        }
    }

    /// Spatial positions per sample (1 for flat activations).
    pub fn positions(&self) -> usize {
        match *self {
            ActShape::Flat(_) => 1,
            ActShape::Image { height, width, .. } => height * width,
        }
    }
}

impl TryFrom<Vec<usize>> for ActShape {
    type Error = String;

    fn try_from(v: Vec<usize>) -> std::result::Result<Self, String> {
        match v.as_slice() {
            [n] => Ok(ActShape::Flat(*n)),
            [c, h, w] => Ok(ActShape::Image {
                channels: *c,
                height: *h,
                width: *w,
            }),
            other => Err(format!("shape must have 1 or 3 dims, got {other:?}")),
        }
    }
}

impl From<ActShape> for Vec<usize> {
    fn from(s: ActShape) -> Self {
        match s {
            ActShape::Flat(n) => vec![n],
            ActShape::Image {
                channels,
                height,
                width,
            } => vec![channels, height, width],
        }
    }
}

/// Fully connected layer `y = W·x + b`, `W` stored `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != in_features * out_features {
            return Err(Error::Shape(format!(
                "dense weight has {} values, expected {out_features}x{in_features}",
                weight.len()
            )));
        }
        if bias.len() != out_features {
            return Err(Error::Shape(format!(
                "dense bias has {} values, expected {out_features}",
                bias.len()
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            weight,
            bias,
        })
    }

    pub fn from_matrix(w: &Tensor2D, bias: &[f64]) -> Result<Self> {
        Dense::new(
            w.cols(),
            w.rows(),
            w.data().iter().map(|&v| v as f32).collect(),
            bias.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn weight_matrix(&self) -> Tensor2D {
        Tensor2D::from_fn(self.out_features, self.in_features, |o, i| {
            self.weight[o * self.in_features + i] as f64
        })
    }
}

/// 2-D convolution with square stride and symmetric zero padding.
/// Kernel stored `(out_ch, in_ch, kH, kW)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if stride == 0 || kernel[0] == 0 || kernel[1] == 0 {
            return Err(Error::Shape("conv stride and kernel dims must be positive".into()));
        }
        if weight.len() != out_channels * in_channels * kernel[0] * kernel[1] {
            return Err(Error::Shape(format!(
                "conv kernel has {} values, expected {out_channels}x{in_channels}x{}x{}",
                weight.len(),
                kernel[0],
                kernel[1]
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "conv bias has {} values, expected {out_channels}",
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let hp = h + 2 * self.padding;
        let wp = w + 2 * self.padding;
        if hp < self.kernel[0] || wp < self.kernel[1] {
            return None;
        }
        Some(((hp - self.kernel[0]) / self.stride + 1, (wp - self.kernel[1]) / self.stride + 1))
    }

    #[inline]
    pub(crate) fn widx(&self, o: usize, i: usize, a: usize, b: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel[0] + a) * self.kernel[1] + b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Relu,
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    /// Number of input units (features or channels) a weighted layer consumes.
    pub fn input_units(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.in_features),
            Layer::Conv2d(c) => Some(c.in_channels),
            _ => None,
        }
    }

    pub fn output_units(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.out_features),
            Layer::Conv2d(c) => Some(c.out_channels),
            _ => None,
        }
    }

    /// Weights viewed as a matrix with one column per input unit.
    ///
    /// Dense: `out x in`. Conv: rows enumerate `(out_ch, kH, kW)` and columns
    /// the input channels, so right-multiplying by an `in x k` matrix mixes
    /// input channels as a 1x1 recombination folded into the kernel.
    pub fn input_weight_matrix(&self) -> Option<Tensor2D> {
        match self {
            Layer::Dense(d) => Some(d.weight_matrix()),
            Layer::Conv2d(c) => {
                let [kh, kw] = c.kernel;
                Some(Tensor2D::from_fn(c.out_channels * kh * kw, c.in_channels, |r, i| {
                    let o = r / (kh * kw);
                    let a = (r / kw) % kh;
                    let b = r % kw;
                    c.weight[c.widx(o, i, a, b)] as f64
                }))
            }
            _ => None,
        }
    }

    /// Replaces the weights from an [`Layer::input_weight_matrix`]-shaped matrix
    /// whose column count becomes the new input unit count.
    pub fn set_input_weight_matrix(&mut self, m: &Tensor2D) -> Result<()> {
        match self {
            Layer::Dense(d) => {
                if m.rows() != d.out_features {
                    return Err(Error::Shape(format!(
                        "dense weight rows {} != out_features {}",
                        m.rows(),
                        d.out_features
                    )));
                }
                d.in_features = m.cols();
                d.weight = m.data().iter().map(|&v| v as f32).collect();
                Ok(())
            }
            Layer::Conv2d(c) => {
                let [kh, kw] = c.kernel;
                if m.rows() != c.out_channels * kh * kw {
                    return Err(Error::Shape(format!(
                        "conv weight matrix rows {} != {}",
                        m.rows(),
                        c.out_channels * kh * kw
                    )));
                }
                c.in_channels = m.cols();
                let mut w = vec![0.0f32; c.out_channels * c.in_channels * kh * kw];
                for r in 0..m.rows() {
                    let o = r / (kh * kw);
                    let a = (r / kw) % kh;
                    let b = r % kw;
                    for i in 0..m.cols() {
                        w[c.widx(o, i, a, b)] = m.get(r, i) as f32;
                    }
                }
                c.weight = w;
                Ok(())
            }
            _ => Err(Error::Contract(format!("{} layer has no weights", self.kind()))),
        }
    }

    /// Keeps only the listed output units (rows / output channels and their biases).
    pub fn retain_outputs(&mut self, keep: &[usize]) -> Result<()> {
        let out = self
            .output_units()
            .ok_or_else(|| Error::Contract(format!("{} layer has no outputs to prune", self.kind())))?;
        if let Some(&k) = keep.iter().find(|&&k| k >= out) {
            return Err(Error::Contract(format!("output unit {k} out of range {out}")));
        }
        match self {
            Layer::Dense(d) => {
                let n_in = d.in_features;
                d.weight = keep
                    .iter()
                    .flat_map(|&o| d.weight[o * n_in..(o + 1) * n_in].iter().copied())
                    .collect();
                d.bias = keep.iter().map(|&o| d.bias[o]).collect();
                d.out_features = keep.len();
            }
            Layer::Conv2d(c) => {
                let per_out = c.in_channels * c.kernel[0] * c.kernel[1];
                c.weight = keep
                    .iter()
                    .flat_map(|&o| c.weight[o * per_out..(o + 1) * per_out].iter().copied())
                    .collect();
                c.bias = keep.iter().map(|&o| c.bias[o]).collect();
                c.out_channels = keep.len();
            }
            _ => unreachable!("checked by output_units"),
        }
        Ok(())
    }

    pub fn bias(&self) -> Option<&[f32]> {
        match self {
            Layer::Dense(d) => Some(&d.bias),
            Layer::Conv2d(c) => Some(&c.bias),
            _ => None,
        }
    }

    pub(crate) fn bias_mut(&mut self) -> Option<&mut Vec<f32>> {
        match self {
            Layer::Dense(d) => Some(&mut d.bias),
            Layer::Conv2d(c) => Some(&mut c.bias),
            _ => None,
        }
    }

    /// Output shape for a given input shape, or a reason it does not compose.
    pub fn output_shape(&self, input: ActShape) -> std::result::Result<ActShape, String> {
        match (self, input) {
            (Layer::Dense(d), ActShape::Flat(n)) if n == d.in_features => Ok(ActShape::Flat(d.out_features)),
            (Layer::Dense(d), s) => Err(format!(
                "dense layer expects flat input of {} features, got {:?}",
                d.in_features, s
            )),
            (
                Layer::Conv2d(c),
                ActShape::Image {
                    channels,
                    height,
                    width,
                },
            ) if channels == c.in_channels => match c.output_hw(height, width) {
                Some((h, w)) => Ok(ActShape::Image {
                    channels: c.out_channels,
                    height: h,
                    width: w,
                }),
                None => Err(format!(
                    "conv kernel {:?} larger than padded input {height}x{width}",
                    c.kernel
                )),
            },
            (Layer::Conv2d(c), s) => Err(format!(
                "conv layer expects image input with {} channels, got {:?}",
                c.in_channels, s
            )),
            (Layer::Relu, s) => Ok(s),
            (Layer::Flatten, s) => Ok(ActShape::Flat(s.numel())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matrix_round_trip() {
        let w: Vec<f32> = (0..2 * 3 * 2 * 2).map(|v| v as f32).collect();
        let mut l = Layer::Conv2d(Conv2d::new(3, 2, [2, 2], 1, 0, w.clone(), vec![0.0; 2]).unwrap());
        let m = l.input_weight_matrix().unwrap();
        assert_eq!(m.shape(), (8, 3));
        // row (o=1, a=0, b=1), column i=2 -> weight[((1*3+2)*2+0)*2+1]
        assert_eq!(m.get(4 + 1, 2), w[21] as f64);
        l.set_input_weight_matrix(&m).unwrap();
        match &l {
            Layer::Conv2d(c) => assert_eq!(c.weight, w),
            _ => unreachable!(),
        }
    }

    #[test]
    fn retain_outputs_dense() {
        let mut l = Layer::Dense(Dense::new(2, 3, vec![1., 2., 3., 4., 5., 6.], vec![7., 8., 9.]).unwrap());
        l.retain_outputs(&[0, 2]).unwrap();
        assert_eq!(
            l,
            Layer::Dense(Dense::new(2, 2, vec![1., 2., 5., 6.], vec![7., 9.]).unwrap())
        );
        assert!(l.retain_outputs(&[5]).is_err());
    }

    #[test]
    fn shape_rules() {
        let d = Layer::Dense(Dense::new(4, 2, vec![0.0; 8], vec![0.0; 2]).unwrap());
        assert_eq!(d.output_shape(ActShape::Flat(4)), Ok(ActShape::Flat(2)));
        assert!(d.output_shape(ActShape::Flat(3)).is_err());
        let c = Layer::Conv2d(Conv2d::new(2, 5, [3, 3], 2, 1, vec![0.0; 90], vec![0.0; 5]).unwrap());
        let img = ActShape::Image {
            channels: 2,
            height: 7,
            width: 6,
        };
        assert_eq!(
            c.output_shape(img),
            Ok(ActShape::Image {
                channels: 5,
                height: 4,
                width: 3
            })
        );
        assert_eq!(Layer::Flatten.output_shape(img), Ok(ActShape::Flat(84)));
    }
}
