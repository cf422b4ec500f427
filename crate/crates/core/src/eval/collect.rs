use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::cache::GramSet;
use crate::linalg::{accumulate_gram_with, GramMatrix, Tensor2D};
use crate::model::Network;

pub const DEFAULT_COLLECT_BATCH: usize = 256;

/// Streams `inputs` (`samples x features`) through `net` and accumulates one
/// Gram per weighted layer, keyed by layer index. Conv layers contribute one
/// sample per spatial position. With `absorb_bias` each Gram gains a trailing
/// constant-1 unit.
pub fn collect_grams(
    net: &Network,
    inputs: &Tensor2D,
    batch_size: usize,
    absorb_bias: bool,
    exec: Execution,
) -> Result<GramSet> {
    if batch_size == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    let weighted = net.weighted_layers();
    let extra = absorb_bias as usize;
    let mut grams: Vec<GramMatrix> = weighted
        .iter()
        .map(|&i| GramMatrix::empty(i, net.layer_input_shape(i).units() + extra))
        .collect();
    for start in (0..inputs.rows()).step_by(batch_size) {
        let idx: Vec<usize> = (start..(start + batch_size).min(inputs.rows())).collect();
        let capture = net
            .forward_with(&inputs.select_rows(&idx)?, true, exec)
            .map_err(|e| Error::Data(format!("samples {start}..{}: {e}", start + idx.len())))?
            .capture
            .expect("capture requested");
        for g in grams.iter_mut() {
            let mut features = capture.features[&g.layer_id].clone();
            if absorb_bias {
                let (units, samples) = features.shape();
                let mut data = features.into_data();
                data.extend(std::iter::repeat_n(1.0, samples));
                features = Tensor2D::new(units + 1, samples, data)?;
            }
            *g = accumulate_gram_with(g, &features, exec)
                .map_err(|e| Error::Data(format!("samples {start}..{}: {e}", start + idx.len())))?;
        }
    }
    Ok(GramSet { absorb_bias, grams })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActShape, Conv2d, Dense, Layer};

    #[test]
    fn sample_counts_and_batching() {
        let net = Network::new(
            ActShape::Image {
                channels: 1,
                height: 4,
                width: 4,
            },
            vec![
                Layer::Conv2d(Conv2d::new(1, 2, [3, 3], 1, 1, vec![0.1; 18], vec![0.0; 2]).unwrap()),
                Layer::Relu,
                Layer::Conv2d(Conv2d::new(2, 3, [3, 3], 2, 0, vec![0.05; 54], vec![0.0; 3]).unwrap()),
                Layer::Flatten,
                Layer::Dense(Dense::new(3, 2, vec![1.0; 6], vec![0.0; 2]).unwrap()),
            ],
        )
        .unwrap();
        let x = Tensor2D::from_fn(10, 16, |r, c| ((r + c) % 5) as f64);
        let a = collect_grams(&net, &x, 3, false, Execution::default()).unwrap();
        let b = collect_grams(&net, &x, 100, false, Execution::Sequential).unwrap();
        let counts: Vec<u64> = a.grams.iter().map(|g| g.sample_count()).collect();
        assert_eq!(counts, vec![160, 160, 10]);
        for (ga, gb) in a.grams.iter().zip(&b.grams) {
            assert!(ga.matrix().relative_error(gb.matrix()).unwrap() < 1e-14);
        }
        let c = collect_grams(&net, &x, 4, true, Execution::default()).unwrap();
        assert_eq!(c.grams[2].n(), 4);
        assert_eq!(c.grams[2].matrix().get(3, 3), 10.0);
    }
}
