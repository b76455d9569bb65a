//! Multi-head QKV attention and the two blocks built from it.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::layout::BoundParams;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Cross,
    Latent,
}

/// Result of [`multi_head_attention`]: the projected output and the
/// post-softmax weights of each head (rows = queries, columns = keys).
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

pub(crate) fn linear(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let y = g.matmul(x, p.var(&format!("{prefix}.w"))?)?;
    g.add_row(y, p.var(&format!("{prefix}.b"))?)
}

pub(crate) fn norm(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let gamma = p.var(&format!("{prefix}.gamma"))?;
    let beta = p.var(&format!("{prefix}.beta"))?;
    g.layer_norm_rows(x, gamma, beta, LN_EPS)
}

/// Scaled dot-product attention of `queries` over `keys_values`, with
/// projections `{prefix}.q/.k/.v/.o`.
///
/// Each head scores `n_q x n_kv` entries; the count is recorded on the graph.
pub fn multi_head_attention(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    queries: Var,
    keys_values: Var,
    heads: usize,
    kind: AttentionKind,
) -> Result<AttentionOutput> {
    let q = linear(g, p, &format!("{prefix}.q"), queries)?;
    let k = linear(g, p, &format!("{prefix}.k"), keys_values)?;
    let v = linear(g, p, &format!("{prefix}.v"), keys_values)?;
    let (n_q, dim) = g.value(q).dims2();
    let n_kv = g.value(k).rows();
    if heads == 0 || dim % heads != 0 {
        return Err(Error::Config(format!(
            "attention width {dim} not divisible by {heads} heads"
        )));
    }
    let head_dim = dim / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let mut per_head = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * head_dim, head_dim)?,
                g.slice_cols(k, h * head_dim, head_dim)?,
                g.slice_cols(v, h * head_dim, head_dim)?,
            )
        };
        let scores = g.matmul_nt(qh, kh)?;
        let entries = (n_q * n_kv) as u64;
        match kind {
            AttentionKind::Cross => g.record_cross_scores(entries),
            AttentionKind::Latent => g.record_latent_scores(entries),
        }
        let scores = g.scale(scores, scale)?;
        let attn = g.softmax_rows(scores)?;
        per_head.push(g.matmul(attn, vh)?);
        weights.push(attn);
    }
    let merged = if heads == 1 {
        per_head[0]
    } else {
        g.concat_cols(&per_head)?
    };
    let output = linear(g, p, &format!("{prefix}.o"), merged)?;
    Ok(AttentionOutput { output, weights })
}

/// Cross-attend block: latents (N x D) query the byte array (M x C).
///
/// Pre-norm on both inputs, attention, output projection, residual onto the
/// latents.
pub fn cross_attention(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    latent: Var,
    bytes: Var,
    heads: usize,
) -> Result<Var> {
    Ok(cross_attention_traced(g, p, prefix, latent, bytes, heads)?.0)
}

/// [`cross_attention`] that also returns the attention weights.
pub fn cross_attention_traced(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    latent: Var,
    bytes: Var,
    heads: usize,
) -> Result<(Var, AttentionOutput)> {
    let q_in = norm(g, p, &format!("{prefix}.ln_q"), latent)?;
    let kv_in = norm(g, p, &format!("{prefix}.ln_kv"), bytes)?;
    let attn = multi_head_attention(
        g,
        p,
        &format!("{prefix}.attn"),
        q_in,
        kv_in,
        heads,
        AttentionKind::Cross,
    )?;
    let out = g.add(latent, attn.output)?;
    Ok((out, attn))
}

/// Latent self-attention block (GPT-2 layout, no causal mask):
/// `h = x + attn(ln1(x))`, `out = h + mlp(ln2(h))` with a 4D GELU hidden layer.
pub fn latent_block(g: &mut Graph, p: &BoundParams, prefix: &str, x: Var, heads: usize) -> Result<Var> {
    Ok(latent_block_traced(g, p, prefix, x, heads)?.0)
}

pub fn latent_block_traced(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    x: Var,
    heads: usize,
) -> Result<(Var, AttentionOutput)> {
    let a_in = norm(g, p, &format!("{prefix}.ln1"), x)?;
    let attn = multi_head_attention(
        g,
        p,
        &format!("{prefix}.attn"),
        a_in,
        a_in,
        heads,
        AttentionKind::Latent,
    )?;
    let h = g.add(x, attn.output)?;
    let m_in = norm(g, p, &format!("{prefix}.ln2"), h)?;
    let hidden = linear(g, p, &format!("{prefix}.mlp.fc"), m_in)?;
    let hidden = g.gelu(hidden)?;
    let m_out = linear(g, p, &format!("{prefix}.mlp.proj"), hidden)?;
    let out = g.add(h, m_out)?;
    Ok((out, attn))
}
