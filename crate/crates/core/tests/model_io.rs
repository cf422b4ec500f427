mod common;

use subprune::model::{count_flops_params, load_model, save_model, ActShape, Conv2d, Dense};
use subprune::{Layer, Network, Tensor2D};

fn conv_net() -> Network {
    let conv_w: Vec<f32> = (0..4 * 2 * 3 * 3).map(|i| (i as f32 * 0.37).sin()).collect();
    let conv = Conv2d::new(2, 4, [3, 3], 1, 1, conv_w, vec![0.1, -0.2, 0.3, 0.0]).unwrap();
    let dense_w: Vec<f32> = (0..3 * 4 * 6 * 6).map(|i| (i as f32 * 0.11).cos() * 0.1).collect();
    Network::new(
        ActShape::Image { channels: 2, height: 6, width: 6 },
        vec![
            Layer::Conv2d(conv),
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense(Dense::new(4 * 6 * 6, 3, dense_w, vec![0.0; 3]).unwrap()),
        ],
    )
    .unwrap()
}

#[test]
fn conv_model_round_trips_bit_exact() {
    let net = conv_net();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conv.snm");
    save_model(&net, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, net);
    let x = Tensor2D::new(2, 72, (0..144).map(|i| (i as f64 * 0.05).sin()).collect()).unwrap();
    let (a, b) = (net.forward(&x, false).unwrap().outputs, back.forward(&x, false).unwrap().outputs);
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn resave_of_fixture_is_byte_identical() {
    let src = common::digits_dir().join("mlp.snm");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.snm");
    save_model(&load_model(&src).unwrap(), &path).unwrap();
    for f in ["manifest.json", "tensors.bin"] {
        assert_eq!(std::fs::read(path.join(f)).unwrap(), std::fs::read(src.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn conv_flops_count_output_positions() {
    let (flops, params) = count_flops_params(&conv_net());
    let conv = 2 * (2 * 9) * 4 * 36;
    let dense = 2 * 144 * 3;
    assert_eq!(flops, (conv + dense) as u64);
    assert_eq!(params, (2 * 9 * 4 + 4 + 144 * 3 + 3) as u64);
}

#[test]
fn truncated_payload_is_rejected() {
    let src = common::digits_dir().join("mlp.snm");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.snm");
    std::fs::create_dir(&path).unwrap();
    std::fs::copy(src.join("manifest.json"), path.join("manifest.json")).unwrap();
    let bytes = std::fs::read(src.join("tensors.bin")).unwrap();
    std::fs::write(path.join("tensors.bin"), &bytes[..bytes.len() - 4]).unwrap();
    assert!(load_model(&path).is_err());
}
