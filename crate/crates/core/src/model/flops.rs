use super::layer::Layer;
use super::network::Network;

/// `(flops, params)` of layer `i`: dense `2·in·out` FLOPs and `in·out + out`
/// params; conv `2·C_in·kH·kW·C_out·H_out·W_out` FLOPs and
/// `C_out·C_in·kH·kW + C_out` params; relu and flatten are free.
pub fn layer_flops_params(net: &Network, i: usize) -> (u64, u64) {
    match &net.layers()[i] {
        Layer::Dense(d) => {
            let (n_in, n_out) = (d.in_features as u64, d.out_features as u64);
            (2 * n_in * n_out, n_in * n_out + n_out)
        }
        Layer::Conv2d(c) => {
            let k = (c.in_channels * c.kernel[0] * c.kernel[1]) as u64;
            let out = c.out_channels as u64;
            let positions = net.layer_output_shape(i).positions() as u64;
            (2 * k * out * positions, k * out + out)
        }
        Layer::Relu | Layer::Flatten => (0, 0),
    }
}

/// Per-sample FLOPs and total parameter count.
pub fn count_flops_params(net: &Network) -> (u64, u64) {
    (0..net.layers().len())
        .map(|i| layer_flops_params(net, i))
        .fold((0, 0), |(f, p), (lf, lp)| (f + lf, p + lp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActShape, Conv2d, Dense};

    #[test]
    fn dense_four_to_two() {
        let net = Network::new(
            ActShape::Flat(4),
            vec![Layer::Dense(Dense::new(4, 2, vec![0.0; 8], vec![0.0; 2]).unwrap())],
        )
        .unwrap();
        assert_eq!(count_flops_params(&net), (16, 10));
    }

    #[test]
    fn empty_network() {
        let net = Network::new(ActShape::Flat(3), vec![]).unwrap();
        assert_eq!(count_flops_params(&net), (0, 0));
    }

    #[test]
    fn conv_formula() {
        let shape = ActShape::Image {
            channels: 3,
            height: 5,
            width: 5,
        };
        let net = Network::new(
            shape,
            vec![Layer::Conv2d(Conv2d::new(3, 4, [3, 3], 1, 0, vec![0.0; 108], vec![0.0; 4]).unwrap()), Layer::Relu],
        )
        .unwrap();
        // out 3x3: 2·3·9·4·9
        assert_eq!(count_flops_params(&net), (1944, 112));
    }

    #[test]
    fn pruning_inputs_reduces_dense_flops() {
        let mk = |n_in: usize| {
            Network::new(
                ActShape::Flat(n_in),
                vec![Layer::Dense(Dense::new(n_in, 3, vec![0.0; 3 * n_in], vec![0.0; 3]).unwrap())],
            )
            .unwrap()
        };
        let (f10, _) = count_flops_params(&mk(10));
        let (f6, _) = count_flops_params(&mk(6));
        assert_eq!(f10 - f6, 2 * 4 * 3);
    }
}
