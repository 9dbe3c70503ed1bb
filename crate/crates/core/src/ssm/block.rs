use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Bound, ParamId, ParamStore, Real, Tape, Tensor, Var, LAYER_NORM_EPS, MAX_CONV_WIDTH};

use super::scan::selective_scan;

/// Range the initial step sizes `Δ = softplus(bias)` are drawn from.
pub const DT_INIT_RANGE: (f64, f64) = (1e-3, 0.1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d_model: usize,
    pub d_state: usize,
    pub d_conv: usize,
    pub expand: usize,
}

impl BlockConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    /// Rank of the low-rank step-size projection, `ceil(d_model / 16)`.
    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_state == 0 || self.d_conv == 0 || self.expand == 0 {
            return Err(Error::Config(format!("block extents must be positive: {self:?}")));
        }
        if self.d_conv > MAX_CONV_WIDTH {
            return Err(Error::Config(format!(
                "d_conv {} exceeds the maximum of {MAX_CONV_WIDTH}",
                self.d_conv
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let (d, di, n, r, k) = (self.d_model, self.d_inner(), self.d_state, self.dt_rank(), self.d_conv);
        2 * d + 2 * di * d + k * di + di + di * (r + 2 * n) + r * di + di + di * n + di + d * di
    }
}

/// Handles of one residual block's parameters inside a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockParams {
    pub cfg: BlockConfig,
    pub norm_gamma: ParamId,
    pub norm_beta: ParamId,
    pub in_proj: ParamId,
    pub gate_proj: ParamId,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub x_proj: ParamId,
    pub dt_proj: ParamId,
    pub dt_bias: ParamId,
    pub a_log: ParamId,
    pub d_skip: ParamId,
    pub out_proj: ParamId,
}

fn uniform<T: Real, R: Rng + ?Sized>(shape: [usize; 2], bound: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..=bound)))
}

/// Inverse of softplus: `x + ln(1 − e^{−x})`.
fn inv_softplus(x: f64) -> f64 {
    x + (-(-x).exp_m1()).ln()
}

impl BlockParams {
    /// Adds a freshly initialized block under `prefix`. Linear weights are
    /// uniform in `±1/sqrt(fan_in)`, `A = −(1..N)` per channel, `D = 1`,
    /// and the step-size bias gives `Δ` log-uniform in [`DT_INIT_RANGE`].
    pub fn init<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cfg: BlockConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let (d, di, n, r, k) = (cfg.d_model, cfg.d_inner(), cfg.d_state, cfg.dt_rank(), cfg.d_conv);
        let fan = |x: usize| 1.0 / (x as f64).sqrt();
        let mut add = |name: &str, t: Tensor<T>| store.add(format!("{prefix}.{name}"), t);
        let norm_gamma = add("norm.gamma", Tensor::filled([d], T::one()));
        let norm_beta = add("norm.beta", Tensor::zeros([d]));
        let in_proj = add("in_proj", uniform([di, d], fan(d), rng));
        let gate_proj = add("gate_proj", uniform([di, d], fan(d), rng));
        let conv_kernel = add("conv.kernel", uniform([k, di], fan(k), rng));
        let conv_bias = add("conv.bias", uniform::<T, R>([1, di], fan(k), rng).reshape([di])?);
        let x_proj = add("x_proj", uniform([r + 2 * n, di], fan(di), rng));
        let dt_proj = add("dt_proj", uniform([di, r], fan(r), rng));
        let (lo, hi) = (DT_INIT_RANGE.0.ln(), DT_INIT_RANGE.1.ln());
        let dt_bias = add(
            "dt_bias",
            Tensor::from_fn([di], |_| T::lit(inv_softplus(rng.random_range(lo..=hi).exp()))),
        );
        let a_log = add(
            "a_log",
            Tensor::from_fn([di, n], |i| T::lit(((i % n) as f64 + 1.0).ln())),
        );
        let d_skip = add("d_skip", Tensor::filled([di], T::one()));
        let out_proj = add("out_proj", uniform([d, di], fan(di), rng));
        Ok(BlockParams {
            cfg,
            norm_gamma,
            norm_beta,
            in_proj,
            gate_proj,
            conv_kernel,
            conv_bias,
            x_proj,
            dt_proj,
            dt_bias,
            a_log,
            d_skip,
            out_proj,
        })
    }

    /// Every parameter id of the block in declaration order.
    pub fn ids(&self) -> [ParamId; 12] {
        [
            self.norm_gamma,
            self.norm_beta,
            self.in_proj,
            self.gate_proj,
            self.conv_kernel,
            self.conv_bias,
            self.x_proj,
            self.dt_proj,
            self.dt_bias,
            self.a_log,
            self.d_skip,
            self.out_proj,
        ]
    }
}

/// Input-dependent `B_t`, `C_t` (T×N) and `Δ_t` (T×Di) from the expanded
/// signal `x` (T×Di).
pub fn selective_params<T: Real>(
    tape: &mut Tape<T>,
    bound: &Bound,
    p: &BlockParams,
    x: Var,
) -> Result<(Var, Var, Var)> {
    let (r, n) = (p.cfg.dt_rank(), p.cfg.d_state);
    let proj = tape.linear(x, bound[p.x_proj], None)?;
    let dt_low = tape.slice_cols(proj, 0, r)?;
    let b = tape.slice_cols(proj, r, n)?;
    let c = tape.slice_cols(proj, r + n, n)?;
    let dt = tape.linear(dt_low, bound[p.dt_proj], Some(bound[p.dt_bias]))?;
    let delta = tape.softplus(dt)?;
    Ok((b, c, delta))
}

/// Dropout settings for a training pass. `None` means inference.
pub type Dropout<'a> = Option<(f64, &'a mut dyn RngCore)>;

/// One pre-norm residual block on `h` (T×d_model):
/// `h + Dropout(out_proj(scan(silu(conv(in_proj(LN h)))) · silu(gate_proj(LN h))))`.
pub fn block_forward<T: Real>(
    tape: &mut Tape<T>,
    bound: &Bound,
    p: &BlockParams,
    h: Var,
    dropout: Dropout<'_>,
) -> Result<Var> {
    let normed = tape.layer_norm(h, bound[p.norm_gamma], bound[p.norm_beta], T::lit(LAYER_NORM_EPS))?;
    let x = tape.linear(normed, bound[p.in_proj], None)?;
    let gate = tape.linear(normed, bound[p.gate_proj], None)?;
    let x = tape.depthwise_conv1d(x, bound[p.conv_kernel])?;
    let x = tape.add_row(x, bound[p.conv_bias])?;
    let x = tape.silu(x)?;
    let (b, c, delta) = selective_params(tape, bound, p, x)?;
    let y = selective_scan(tape, x, delta, bound[p.a_log], b, c, bound[p.d_skip])?;
    let gate = tape.silu(gate)?;
    let y = tape.mul(y, gate)?;
    let mut out = tape.linear(y, bound[p.out_proj], None)?;
    if let Some((rate, rng)) = dropout {
        out = tape.dropout(out, rate, rng)?;
    }
    tape.add(h, out)
}
