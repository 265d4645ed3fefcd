use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;

/// Affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), in_dim, out_dim, in_dim, rng);
        let bias = bias.then(|| {
            store.add(
                format!("{name}.bias"),
                super::tensor::Tensor::zeros(1, out_dim),
            )
        });
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Single-head scaled dot-product self-attention over groups of tokens.
///
/// Input is `(N·T) x d` with the `T` tokens of each sample on consecutive
/// rows; attention never crosses sample boundaries.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub dim: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, false, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, false, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, false, rng),
            dim,
        }
    }

    /// Returns the mixed tokens and the attention weight matrix (`(N·T) x T`).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        tokens: usize,
    ) -> Result<(Var, Var)> {
        let q = self.query.forward(g, store, x)?;
        let k = self.key.forward(g, store, x)?;
        let v = self.value.forward(g, store, x)?;
        let scores = g.grouped_scores(q, k, tokens, 1.0 / (self.dim as f64).sqrt())?;
        let weights = g.softmax_rows(scores)?;
        let out = g.grouped_mix(weights, v, tokens)?;
        Ok((out, weights))
    }
}

/// `Linear(d -> 2h)`, split into two chunks, `SiLU(chunk1) * chunk2`, then
/// `Linear(h -> d)`.
#[derive(Debug, Clone)]
pub struct SwiGlu {
    pub up: Linear,
    pub down: Linear,
    pub hidden: usize,
}

impl SwiGlu {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, 2 * hidden, true, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, true, rng),
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(g, store, x)?;
        let gate = g.slice_cols(h, 0, self.hidden)?;
        let lin = g.slice_cols(h, self.hidden, 2 * self.hidden)?;
        let gate = g.silu(gate);
        let mixed = g.mul(gate, lin)?;
        self.down.forward(g, store, mixed)
    }
}

/// One transformer layer: attention then SwiGLU, each with a residual path.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub attention: SelfAttention,
    pub ffn: SwiGlu,
}

impl TransformerLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            attention: SelfAttention::new(store, &format!("{name}.attn"), dim, rng),
            ffn: SwiGlu::new(store, &format!("{name}.swiglu"), dim, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, tokens: usize) -> Result<Var> {
        let (a, _) = self.attention.forward(g, store, x, tokens)?;
        let h = g.add(x, a)?;
        let f = self.ffn.forward(g, store, h)?;
        g.add(h, f)
    }
}
