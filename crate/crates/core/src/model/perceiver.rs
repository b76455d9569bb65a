use crate::autograd::{softmax, AttentionCounter, Graph, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::attention::{cross_attention, latent_block, linear, norm};
use crate::model::config::PerceiverConfig;
use crate::model::encoding::{build_byte_array, position_table};
use crate::model::layout::{check_params, BoundParams};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// A configured classifier with its cached positional features.
///
/// Holds no parameters; every call takes a [`ParamStore`], so one instance
/// serves all members of an ensemble and may be shared across threads.
#[derive(Debug, Clone)]
pub struct Perceiver {
    config: PerceiverConfig,
    positions: Tensor,
}

impl Perceiver {
    pub fn new(config: PerceiverConfig) -> Result<Self> {
        config.validate()?;
        let positions = position_table(&config)?;
        Ok(Self { config, positions })
    }

    pub fn config(&self) -> &PerceiverConfig {
        &self.config
    }

    pub fn positions(&self) -> &Tensor {
        &self.positions
    }

    /// Records the forward pass of one image; returns `1 x K` logits.
    pub fn forward_graph(&self, g: &mut Graph, p: &BoundParams, image: &Image) -> Result<Var> {
        let cfg = &self.config;
        let bytes = build_byte_array(g, p, cfg, &self.positions, image)?;
        let mut latent = p.var("latent.array")?;
        for r in 0..cfg.depth_repeats {
            latent = cross_attention(g, p, &cfg.cross_group(r), latent, bytes, cfg.heads)?;
            let tower = cfg.tower_group(r);
            for l in 0..cfg.tower_layers {
                latent = latent_block(g, p, &format!("{tower}.layer{l}"), latent, cfg.heads)?;
            }
        }
        self.head(g, p, latent)
    }

    /// Final norm, mean-pool over latents, linear map to class logits.
    pub fn head(&self, g: &mut Graph, p: &BoundParams, latent: Var) -> Result<Var> {
        let normed = norm(g, p, "head.ln", latent)?;
        let pooled = g.mean_rows(normed)?;
        linear(g, p, "head.out", pooled)
    }

    /// Logits of each image, without gradient tracking.
    pub fn logits(&self, params: &ParamStore, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        Ok(self.logits_counted(params, images)?.0)
    }

    /// [`Perceiver::logits`] plus the attention score-entry counts of the
    /// whole pass.
    pub fn logits_counted(&self, params: &ParamStore, images: &[Image]) -> Result<(Vec<Vec<f64>>, AttentionCounter)> {
        check_params(&self.config, params)?;
        let mut g = Graph::new();
        let bound = BoundParams::bind(&mut g, params, false)?;
        let base = g.len();
        let mut out = Vec::with_capacity(images.len());
        for image in images {
            let logits = self.forward_graph(&mut g, &bound, image)?;
            out.push(g.value(logits).data().to_vec());
            g.truncate(base);
        }
        Ok((out, g.counter()))
    }

    /// Class probabilities of each image, with logits divided by
    /// `temperature` first.
    pub fn probabilities(&self, params: &ParamStore, images: &[Image], temperature: f64) -> Result<Vec<Vec<f64>>> {
        self.logits(params, images)?
            .iter()
            .map(|l| softmax(&l.iter().map(|v| v / temperature).collect::<Vec<_>>()))
            .collect()
    }

    /// Mean cross-entropy over the batch and its gradient for every
    /// parameter.
    pub fn loss_and_grads(&self, params: &ParamStore, images: &[Image], labels: &[usize]) -> Result<(f64, ParamStore)> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::Usage(format!(
                "batch of {} images with {} labels",
                images.len(),
                labels.len()
            )));
        }
        check_params(&self.config, params)?;
        let mut g = Graph::new();
        let bound = BoundParams::bind(&mut g, params, true)?;
        let mut total: Option<Var> = None;
        for (image, &label) in images.iter().zip(labels) {
            let logits = self.forward_graph(&mut g, &bound, image)?;
            let ce = g.cross_entropy(logits, label)?;
            total = Some(match total {
                Some(t) => g.add(t, ce)?,
                None => ce,
            });
        }
        let total = total.expect("batch is non-empty");
        let loss = g.scale(total, 1.0 / images.len() as f64)?;
        g.backward(loss)?;
        let value = g.value(loss).data()[0];
        Ok((value, bound.grads(&g)?))
    }
}

/// Logits of one image.
pub fn perceiver_forward(config: &PerceiverConfig, params: &ParamStore, image: &Image) -> Result<Vec<f64>> {
    let model = Perceiver::new(config.clone())?;
    let mut logits = model.logits(params, std::slice::from_ref(image))?;
    Ok(logits.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoding::byte_features;
    use crate::model::layout::init_params;

    fn small(r: usize, share: bool) -> PerceiverConfig {
        PerceiverConfig {
            height: 4,
            width: 4,
            channels: 1,
            latent_count: 3,
            latent_dim: 8,
            byte_dim: 6,
            heads: 2,
            depth_repeats: r,
            tower_layers: 2,
            num_bands: 2,
            share_cross_weights: share,
            share_tower_weights: share,
            ..Default::default()
        }
    }

    fn image(seed: u64) -> Image {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        Image::new(4, 4, 1, (0..16).map(|_| rng.random()).collect()).unwrap()
    }

    /// Runs everything after the byte projection by hand from `features`.
    fn manual(cfg: &PerceiverConfig, params: &ParamStore, features: Tensor, groups: &[(&str, &str)]) -> Vec<f64> {
        let model = Perceiver::new(cfg.clone()).unwrap();
        let mut g = Graph::new();
        let p = BoundParams::bind(&mut g, params, false).unwrap();
        let f = g.constant(features).unwrap();
        let proj = g.matmul(f, p.var("input.proj.w").unwrap()).unwrap();
        let bytes = g.add_row(proj, p.var("input.proj.b").unwrap()).unwrap();
        let mut x = p.var("latent.array").unwrap();
        for (cross, tower) in groups {
            x = cross_attention(&mut g, &p, cross, x, bytes, cfg.heads).unwrap();
            for l in 0..cfg.tower_layers {
                x = latent_block(&mut g, &p, &format!("{tower}.layer{l}"), x, cfg.heads).unwrap();
            }
        }
        let out = model.head(&mut g, &p, x).unwrap();
        g.value(out).data().to_vec()
    }

    #[test]
    fn shared_repeats_compose_the_shared_blocks() {
        let cfg = small(3, true);
        let params = init_params(&cfg, 1).unwrap();
        let model = Perceiver::new(cfg.clone()).unwrap();
        let im = image(2);
        let got = model.logits(&params, std::slice::from_ref(&im)).unwrap().remove(0);
        let feats = byte_features(&cfg, model.positions(), &im).unwrap();
        let want = manual(
            &cfg,
            &params,
            feats,
            &[
                ("cross.0", "tower.shared"),
                ("cross.shared", "tower.shared"),
                ("cross.shared", "tower.shared"),
            ],
        );
        assert_eq!(got, want);
    }

    #[test]
    fn byte_order_does_not_matter() {
        let cfg = small(2, false);
        let params = init_params(&cfg, 3).unwrap();
        let model = Perceiver::new(cfg.clone()).unwrap();
        let im = image(4);
        let feats = byte_features(&cfg, model.positions(), &im).unwrap();
        let rows: Vec<Vec<f64>> = (0..feats.rows()).rev().map(|r| feats.row_slice(r).to_vec()).collect();
        let groups = [("cross.0", "tower.0"), ("cross.1", "tower.1")];
        let a = manual(&cfg, &params, feats, &groups);
        let b = manual(&cfg, &params, Tensor::from_rows(&rows).unwrap(), &groups);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a, model.logits(&params, &[im]).unwrap()[0]);
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let cfg = small(2, true);
        let model = Perceiver::new(cfg.clone()).unwrap();
        let mut params = init_params(&cfg, 5).unwrap();
        // Break the zero/one init so that biases and norms see non-trivial signal.
        let mut rng = crate::rng::seeded(6);
        for (_, t) in params.iter_mut() {
            for v in t.data_mut() {
                *v += crate::model::layout::truncated_normal(&mut rng, 0.1);
            }
        }
        let (loss, grads) = model.loss_and_grads(&params, &[image(7), image(8)], &[0, 2]).unwrap();
        assert!(loss.is_finite());
        for (name, g) in grads.iter() {
            let norm: f64 = g.data().iter().map(|v| v * v).sum();
            if name.ends_with(".k.b") {
                // Softmax is invariant to a per-query shift.
                assert!(norm < 1e-20, "{name}");
            } else {
                assert!(norm > 0.0, "{name} has zero gradient");
            }
        }
    }

    #[test]
    fn probabilities_are_distributions() {
        let cfg = small(1, false);
        let model = Perceiver::new(cfg.clone()).unwrap();
        let params = init_params(&cfg, 9).unwrap();
        for t in [0.5, 1.0, 3.0] {
            for row in model.probabilities(&params, &[image(1), image(2)], t).unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let other = init_params(&small(2, false), 9).unwrap();
        assert!(matches!(model.logits(&other, &[image(1)]), Err(Error::Config(_))));
    }
}
