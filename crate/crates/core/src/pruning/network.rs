use super::plan::{build_plan, build_plan_with_bias, LayerPrunePlan, PruneSpec};
use super::reparam::recovery;
use super::scores::{score_random, score_saw, score_saw_tilde, score_unnorm_zca, ImportanceScores, ScoreMethod};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::cache::GramSet;
use crate::linalg::{Tensor2D, DEFAULT_RIDGE_SCALE};
use crate::model::{Layer, Network, PruneSite};

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOptions {
    pub method: ScoreMethod,
    pub spec: PruneSpec,
    /// Fold the removed units' least-squares reconstruction into the consumer.
    /// When off, the consumer's columns for removed units are simply dropped.
    pub reconstruct: bool,
    pub ridge_scale: f64,
    /// Only used by [`ScoreMethod::Random`].
    pub seed: u64,
    pub exec: Execution,
}

impl PruneOptions {
    pub fn new(method: ScoreMethod, spec: PruneSpec) -> Self {
        Self {
            method,
            spec,
            reconstruct: true,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutcome {
    /// The consuming layer; Grams and plans are keyed by it.
    pub layer_id: usize,
    pub producer: usize,
    pub n_before: usize,
    pub keep: usize,
    pub retained_variance_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub network: Network,
    pub plans: Vec<LayerPrunePlan>,
    pub layers: Vec<LayerOutcome>,
}

fn site_scores(net: &Network, site: &PruneSite, grams: &GramSet, opts: &PruneOptions) -> Result<ImportanceScores> {
    let gram = grams.get(site.consumer).ok_or_else(|| {
        Error::Contract(format!("no Gram matrix for layer {}", site.consumer))
    })?;
    let expected = site.units + grams.absorb_bias as usize;
    if gram.n() != expected {
        return Err(Error::Contract(format!(
            "Gram for layer {} has {} units, expected {expected}",
            site.consumer,
            gram.n()
        )));
    }
    let real = if grams.absorb_bias { gram.leading(site.units) } else { gram.clone() };
    let w = || {
        net.layers()[site.consumer]
            .input_weight_matrix()
            .expect("prune sites are weighted layers")
    };
    match opts.method {
        ScoreMethod::Saw => Ok(score_saw(site.consumer, &w())),
        ScoreMethod::UnnormZca => score_unnorm_zca(&real, opts.ridge_scale),
        ScoreMethod::SawTilde => score_saw_tilde(&w(), &real, opts.ridge_scale),
        ScoreMethod::Random => Ok(score_random(site.consumer, site.units, opts.seed)),
    }
}

fn site_plan(net: &Network, site: &PruneSite, grams: &GramSet, opts: &PruneOptions) -> Result<LayerPrunePlan> {
    let scores = site_scores(net, site, grams, opts)?;
    let gram = grams.get(site.consumer).expect("checked in site_scores");
    if grams.absorb_bias {
        build_plan_with_bias(&scores, gram, &opts.spec, opts.ridge_scale)
    } else {
        build_plan(&scores, gram, &opts.spec, opts.ridge_scale)
    }
}

/// Per output unit, `Σ_j W_rj·b_j` over every row `r` belonging to it.
fn bias_shift(layer: &Layer, w: &Tensor2D, b: &[f64]) -> Vec<f64> {
    let outputs = layer.output_units().expect("weighted layer");
    let rows_per_out = w.rows() / outputs;
    (0..outputs)
        .map(|o| {
            (o * rows_per_out..(o + 1) * rows_per_out)
                .map(|r| w.row(r).iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .sum()
        })
        .collect()
}

/// Prunes the input units of every prune site of `net`.
///
/// Plans are built from the unmodified network (sites are independent, so
/// this runs in parallel). Each consumer then gets `Ŵ = W·A`, or just its kept
/// columns when `reconstruct` is off, and each producer drops the matching
/// output units.
pub fn prune_network(net: &Network, grams: &GramSet, opts: &PruneOptions) -> Result<PruneOutcome> {
    let sites = net.prune_sites();
    let plans: Vec<LayerPrunePlan> = opts
        .exec
        .map(&sites, |site| site_plan(net, site, grams, opts))
        .into_iter()
        .collect::<Result<_>>()?;

    let (input_shape, mut layers) = net.clone().into_parts();
    let mut outcomes = Vec::with_capacity(sites.len());
    let mut retains = Vec::with_capacity(sites.len());
    for (site, plan) in sites.iter().zip(&plans) {
        let rec = recovery(plan)?;
        let layer = &mut layers[site.consumer];
        let w = layer.input_weight_matrix().expect("weighted layer");
        let new_w = if opts.reconstruct {
            w.matmul(&rec.a)?
        } else {
            w.select_cols(&rec.kept)?
        };
        if opts.reconstruct {
            if let Some(b) = &rec.bias {
                let shift = bias_shift(layer, &w, b);
                let bias = layer.bias_mut().expect("weighted layer");
                for (dst, s) in bias.iter_mut().zip(shift) {
                    *dst = (*dst as f64 + s) as f32;
                }
            }
        }
        layer.set_input_weight_matrix(&new_w)?;
        retains.push((site.producer, rec.kept));
        outcomes.push(LayerOutcome {
            layer_id: site.consumer,
            producer: site.producer,
            n_before: site.units,
            keep: plan.keep,
            retained_variance_fraction: plan.retained_variance_fraction(),
        });
    }
    for (producer, kept) in retains {
        layers[producer].retain_outputs(&kept)?;
    }
    let network = Network::new(input_shape, layers)
        .map_err(|e| Error::Internal(format!("pruned network does not compose: {e}")))?;
    Ok(PruneOutcome {
        network,
        plans,
        layers: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::accumulate_gram;
    use crate::linalg::GramMatrix;
    use crate::model::{ActShape, Dense};
    use crate::pruning::PruneMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 3 -> 4 -> 2 MLP whose hidden units 2 and 3 copy units 0 and 1.
    fn duplicated_mlp() -> Network {
        let w1 = vec![
            0.5, -0.2, 0.1, //
            0.3, 0.4, -0.6, //
            0.5, -0.2, 0.1, //
            0.3, 0.4, -0.6,
        ];
        let w2 = vec![
            2.0, 2.0, -0.5, 0.5, //
            -1.5, 1.5, 0.25, 0.25,
        ];
        Network::new(
            ActShape::Flat(3),
            vec![
                Layer::Dense(Dense::new(3, 4, w1, vec![0.1, 0.0, 0.1, 0.0]).unwrap()),
                Layer::Relu,
                Layer::Dense(Dense::new(4, 2, w2, vec![0.0, 0.3]).unwrap()),
            ],
        )
        .unwrap()
    }

    fn inputs(n: usize) -> Tensor2D {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        Tensor2D::from_fn(n, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn grams_for(net: &Network, x: &Tensor2D) -> GramSet {
        let cap = net.forward(x, true).unwrap().capture.unwrap();
        let grams = net
            .prune_sites()
            .iter()
            .map(|s| {
                let f = &cap.features[&s.consumer];
                accumulate_gram(&GramMatrix::empty(s.consumer, f.rows()), f).unwrap()
            })
            .collect();
        GramSet {
            absorb_bias: false,
            grams,
        }
    }

    #[test]
    fn duplicated_units_are_recovered() {
        let net = duplicated_mlp();
        let x = inputs(64);
        let grams = grams_for(&net, &x);
        // SAW keeps units 0 and 1 here; the other scores may keep both copies of a pair.
        let opts = PruneOptions::new(ScoreMethod::Saw, PruneSpec::uniform(0.5).unwrap());
        let out = prune_network(&net, &grams, &opts).unwrap();
        assert_eq!(out.layers[0].keep, 2);
        assert_eq!(out.plans[0].perm.as_slice(), &[0, 1, 2, 3]);
        let before = net.forward(&x, false).unwrap().outputs;
        let after = out.network.forward(&x, false).unwrap().outputs;
        assert!(after.relative_error(&before).unwrap() < 1e-6);
    }

    #[test]
    fn drop_only_changes_outputs() {
        let net = duplicated_mlp();
        let x = inputs(64);
        let grams = grams_for(&net, &x);
        let mut opts = PruneOptions::new(ScoreMethod::Saw, PruneSpec::uniform(0.5).unwrap());
        opts.reconstruct = false;
        let out = prune_network(&net, &grams, &opts).unwrap();
        let before = net.forward(&x, false).unwrap().outputs;
        let after = out.network.forward(&x, false).unwrap().outputs;
        assert!(after.relative_error(&before).unwrap() > 1e-2);
    }

    #[test]
    fn missing_or_wrong_gram() {
        let net = duplicated_mlp();
        let opts = PruneOptions::new(ScoreMethod::Saw, PruneSpec::uniform(0.5).unwrap());
        let empty = GramSet {
            absorb_bias: false,
            grams: vec![],
        };
        assert!(matches!(prune_network(&net, &empty, &opts), Err(Error::Contract(_))));
        let wrong = GramSet {
            absorb_bias: false,
            grams: vec![GramMatrix::empty(2, 3)],
        };
        assert!(matches!(prune_network(&net, &wrong, &opts), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_unit_folds_into_bias() {
        // Hidden unit 2 is always 0.7, so it is exactly an affine function of the others.
        let w1 = vec![0.5, -0.2, 0.1, 0.3, 0.4, -0.6, 0.0, 0.0, 0.0];
        let net = Network::new(
            ActShape::Flat(3),
            vec![
                Layer::Dense(Dense::new(3, 3, w1, vec![0.1, 0.0, 0.7]).unwrap()),
                Layer::Relu,
                Layer::Dense(Dense::new(3, 1, vec![1.0, 2.0, 0.01], vec![0.2]).unwrap()),
            ],
        )
        .unwrap();
        let x = inputs(64);
        let f = &net.forward(&x, true).unwrap().capture.unwrap().features[&2];
        let mut aug = f.data().to_vec();
        aug.extend(std::iter::repeat_n(1.0, f.cols()));
        let aug = Tensor2D::new(4, f.cols(), aug).unwrap();
        let grams = GramSet {
            absorb_bias: true,
            grams: vec![accumulate_gram(&GramMatrix::empty(2, 4), &aug).unwrap()],
        };
        let spec = PruneSpec::new(PruneMode::Explicit { keep: [(2, 2)].into() }, 1).unwrap();
        let out = prune_network(&net, &grams, &PruneOptions::new(ScoreMethod::Saw, spec)).unwrap();
        assert_eq!(out.plans[0].perm.as_slice(), &[3, 1, 0, 2]);
        let before = net.forward(&x, false).unwrap().outputs;
        let after = out.network.forward(&x, false).unwrap().outputs;
        assert!(after.relative_error(&before).unwrap() < 1e-6);
        let Layer::Dense(d) = &out.network.layers()[2] else { unreachable!() };
        assert!((d.bias[0] - 0.207).abs() < 1e-6);
    }
}
