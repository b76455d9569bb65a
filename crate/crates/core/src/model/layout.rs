//! Parameter layout: which named tensors a configuration owns, how they are
//! initialized, and how they are bound into a graph.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::config::{PerceiverConfig, PosEncoding};
use crate::params::ParamStore;
use crate::rng;
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(name: String, shape: &[usize], init: Init) -> Self {
        Self {
            name,
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Group of a parameter: its first two path segments, e.g.
    /// `tower.shared` or `input.proj`.
    pub fn group(&self) -> &str {
        group_of(&self.name)
    }
}

fn group_of(name: &str) -> &str {
    match name.match_indices('.').nth(1) {
        Some((i, _)) => &name[..i],
        None => name,
    }
}

fn layer_norm(out: &mut Vec<ParamSpec>, prefix: &str, dim: usize) {
    out.push(ParamSpec::new(format!("{prefix}.gamma"), &[dim], Init::Ones));
    out.push(ParamSpec::new(format!("{prefix}.beta"), &[dim], Init::Zeros));
}

fn linear(out: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, fan_out: usize) {
    out.push(ParamSpec::new(
        format!("{prefix}.w"),
        &[fan_in, fan_out],
        Init::TruncNormal,
    ));
    out.push(ParamSpec::new(format!("{prefix}.b"), &[fan_out], Init::Zeros));
}

fn attention(out: &mut Vec<ParamSpec>, prefix: &str, q_in: usize, kv_in: usize, dim: usize) {
    linear(out, &format!("{prefix}.q"), q_in, dim);
    linear(out, &format!("{prefix}.k"), kv_in, dim);
    linear(out, &format!("{prefix}.v"), kv_in, dim);
    linear(out, &format!("{prefix}.o"), dim, dim);
}

/// Parameters of one cross-attend block under `prefix`.
pub fn cross_specs(config: &PerceiverConfig, prefix: &str) -> Vec<ParamSpec> {
    let (d, c) = (config.latent_dim, config.byte_dim);
    let mut out = Vec::new();
    layer_norm(&mut out, &format!("{prefix}.ln_q"), d);
    layer_norm(&mut out, &format!("{prefix}.ln_kv"), c);
    attention(&mut out, &format!("{prefix}.attn"), d, c, d);
    out
}

/// Parameters of one latent block under `prefix`.
pub fn latent_block_specs(config: &PerceiverConfig, prefix: &str) -> Vec<ParamSpec> {
    let d = config.latent_dim;
    let mut out = Vec::new();
    layer_norm(&mut out, &format!("{prefix}.ln1"), d);
    attention(&mut out, &format!("{prefix}.attn"), d, d, d);
    layer_norm(&mut out, &format!("{prefix}.ln2"), d);
    linear(&mut out, &format!("{prefix}.mlp.fc"), d, 4 * d);
    linear(&mut out, &format!("{prefix}.mlp.proj"), 4 * d, d);
    out
}

/// Every parameter of `config`, in store order. Shared groups appear once.
pub fn param_specs(config: &PerceiverConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let (n, d) = (config.latent_count, config.latent_dim);
    out.push(ParamSpec::new("latent.array".into(), &[n, d], Init::TruncNormal));
    if config.pos_encoding == PosEncoding::Learnable {
        out.push(ParamSpec::new(
            "input.pos_embed".into(),
            &[config.input_count(), config.channels],
            Init::TruncNormal,
        ));
    }
    linear(&mut out, "input.proj", config.input_features(), config.byte_dim);

    let mut seen = Vec::new();
    for r in 0..config.depth_repeats {
        let cross = config.cross_group(r);
        if !seen.contains(&cross) {
            out.extend(cross_specs(config, &cross));
            seen.push(cross);
        }
        let tower = config.tower_group(r);
        if !seen.contains(&tower) {
            for l in 0..config.tower_layers {
                out.extend(latent_block_specs(config, &format!("{tower}.layer{l}")));
            }
            seen.push(tower);
        }
    }
    layer_norm(&mut out, "head.ln", d);
    linear(&mut out, "head.out", d, config.num_classes);
    out
}

/// Exact scalar count, total and per group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub groups: BTreeMap<String, usize>,
}

pub fn param_count(config: &PerceiverConfig) -> Result<ParamCount> {
    config.validate()?;
    let mut groups = BTreeMap::new();
    let mut total = 0;
    for spec in param_specs(config) {
        *groups.entry(spec.group().to_string()).or_insert(0) += spec.len();
        total += spec.len();
    }
    Ok(ParamCount { total, groups })
}

/// Draws from N(0, std^2) truncated to +-2 std by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let normal = Normal::new(0.0, std).expect("std is positive");
    loop {
        let x: f64 = normal.sample(rng);
        if x.abs() <= 2.0 * std {
            return x;
        }
    }
}

/// Fresh parameters for `config`, fully determined by `seed`.
pub fn init_params(config: &PerceiverConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let mut store = ParamStore::new();
    for spec in param_specs(config) {
        let len = spec.len();
        let data = match spec.init {
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::TruncNormal => (0..len).map(|_| truncated_normal(&mut rng, INIT_STD)).collect(),
        };
        store.insert(spec.name, Tensor::new(spec.shape, data)?)?;
    }
    Ok(store)
}

/// Checks that `params` holds exactly the layout of `config`.
pub fn check_params(config: &PerceiverConfig, params: &ParamStore) -> Result<()> {
    let specs = param_specs(config);
    if specs.len() != params.len() {
        return Err(Error::Config(format!(
            "configuration expects {} parameter tensors, store has {}",
            specs.len(),
            params.len()
        )));
    }
    for (spec, (name, t)) in specs.iter().zip(params.iter()) {
        if spec.name != name || spec.shape != t.shape() {
            return Err(Error::Config(format!(
                "parameter {name} {:?} does not match expected {} {:?}",
                t.shape(),
                spec.name,
                spec.shape
            )));
        }
    }
    Ok(())
}

/// Parameters of a store registered as graph leaves.
pub struct BoundParams<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl<'a> BoundParams<'a> {
    /// Registers every tensor of `store`; as trainable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind(g: &mut Graph, store: &'a ParamStore, trainable: bool) -> Result<Self> {
        let vars = store
            .iter()
            .map(|(_, t)| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { store, vars })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.store
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Gradients of every bound parameter, as a store aligned with the
    /// source.
    pub fn grads(&self, g: &Graph) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for ((name, t), &v) in self.store.iter().zip(&self.vars) {
            let grad = g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
            out.insert(name, grad)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_use_two_segments() {
        assert_eq!(group_of("tower.shared.layer0.ln1.gamma"), "tower.shared");
        assert_eq!(group_of("latent.array"), "latent.array");
        assert_eq!(group_of("head"), "head");
    }

    #[test]
    fn init_is_seeded() {
        let cfg = PerceiverConfig {
            latent_count: 4,
            latent_dim: 8,
            byte_dim: 8,
            heads: 2,
            height: 4,
            width: 4,
            ..Default::default()
        };
        let a = init_params(&cfg, 3).unwrap();
        let b = init_params(&cfg, 3).unwrap();
        let c = init_params(&cfg, 4).unwrap();
        assert!(a.bit_equal(&b));
        assert!(!a.bit_equal(&c));
        check_params(&cfg, &a).unwrap();
        assert_eq!(a.get("head.ln.gamma").unwrap().data(), &[1.0; 8]);
        assert!(a.get("input.proj.b").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unshared_count_matches_closed_form() {
        let lin = |i: usize, o: usize| i * o + o;
        for (r, l, pos) in [
            (1, 1, PosEncoding::Fourier),
            (3, 2, PosEncoding::Learnable),
            (2, 4, PosEncoding::Fourier),
        ] {
            let cfg = PerceiverConfig {
                depth_repeats: r,
                tower_layers: l,
                pos_encoding: pos,
                share_cross_weights: false,
                share_tower_weights: false,
                ..Default::default()
            };
            let (d, c, k) = (cfg.latent_dim, cfg.byte_dim, cfg.num_classes);
            let cross = 2 * d + 2 * c + lin(d, d) + 2 * lin(c, d) + lin(d, d);
            let block = 4 * d + 4 * lin(d, d) + lin(d, 4 * d) + lin(4 * d, d);
            let mut want =
                cfg.latent_count * d + lin(cfg.input_features(), c) + r * (cross + l * block) + 2 * d + lin(d, k);
            if pos == PosEncoding::Learnable {
                want += cfg.input_count() * cfg.channels;
            }
            assert_eq!(param_count(&cfg).unwrap().total, want);
        }
    }

    #[test]
    fn truncated_normal_moments() {
        let mut rng = rng::seeded(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| truncated_normal(&mut rng, INIT_STD)).collect();
        assert!(xs.iter().all(|x| x.abs() <= 2.0 * INIT_STD));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        // N(0,1) cut at +-2 has std 0.87962566.
        assert!(
            (std / INIT_STD - 0.879_625_66).abs() < 0.01,
            "std ratio {}",
            std / INIT_STD
        );
        assert!(mean.abs() < 4.0 * INIT_STD / (n as f64).sqrt());
    }
}
