use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Bound, ParamId, ParamStore, Real, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::ssm::{block_forward, BlockParams, Dropout};

use super::config::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Additive attention pooling parameters: `e_t = w·tanh(W_a h_t + b_a)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolParams {
    pub w_a: ParamId,
    pub b_a: ParamId,
    pub w: ParamId,
}

/// Handles of every parameter of the classifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelIds {
    pub w_in: ParamId,
    pub b_in: ParamId,
    pub forward: Vec<BlockParams>,
    pub backward: Vec<BlockParams>,
    pub pool_forward: PoolParams,
    pub pool_backward: PoolParams,
    pub head_gamma: ParamId,
    pub head_beta: ParamId,
    pub w_c: ParamId,
    pub b_c: ParamId,
}

impl ModelIds {
    pub fn stack(&self, dir: Direction) -> &[BlockParams] {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn pool(&self, dir: Direction) -> &PoolParams {
        match dir {
            Direction::Forward => &self.pool_forward,
            Direction::Backward => &self.pool_backward,
        }
    }
}

/// Bidirectional selective-SSM classifier over XMD windows.
#[derive(Clone, Debug, PartialEq)]
pub struct BiMambaClassifier<T: Real> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub ids: ModelIds,
}

fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::lit(rng.random_range(-bound..=bound)))
}

impl<T: Real> BiMambaClassifier<T> {
    /// Deterministic initialization from `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = ParamStore::new();
        let (d, din) = (cfg.d_model, cfg.input_dim);
        let fan = |x: usize| 1.0 / (x as f64).sqrt();
        let w_in = p.add("input.weight", uniform(&[d, din], fan(din), &mut rng));
        let b_in = p.add("input.bias", uniform(&[d], fan(din), &mut rng));
        let stack = |p: &mut ParamStore<T>, name: &str, rng: &mut ChaCha8Rng| {
            (0..cfg.layers_per_direction)
                .map(|l| BlockParams::init(p, &format!("{name}.{l}"), cfg.block(), rng))
                .collect::<Result<Vec<_>>>()
        };
        let forward = stack(&mut p, "forward", &mut rng)?;
        let backward = stack(&mut p, "backward", &mut rng)?;
        let mut pool = |p: &mut ParamStore<T>, name: &str| PoolParams {
            w_a: p.add(format!("{name}.w_a"), uniform(&[d, d], fan(d), &mut rng)),
            b_a: p.add(format!("{name}.b_a"), uniform(&[d], fan(d), &mut rng)),
            w: p.add(format!("{name}.w"), uniform(&[1, d], fan(d), &mut rng)),
        };
        let pool_forward = pool(&mut p, "pool_forward");
        let pool_backward = pool(&mut p, "pool_backward");
        let head_gamma = p.add("head.norm.gamma", Tensor::filled([2 * d], T::one()));
        let head_beta = p.add("head.norm.beta", Tensor::zeros([2 * d]));
        let w_c = p.add("head.w_c", uniform(&[1, 2 * d], fan(2 * d), &mut rng));
        let b_c = p.add("head.b_c", Tensor::zeros([1]));
        Ok(BiMambaClassifier {
            cfg: cfg.clone(),
            params: p,
            ids: ModelIds {
                w_in,
                b_in,
                forward,
                backward,
                pool_forward,
                pool_backward,
                head_gamma,
                head_beta,
                w_c,
                b_c,
            },
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Same architecture and values at another precision.
    pub fn cast<U: Real>(&self) -> BiMambaClassifier<U> {
        BiMambaClassifier {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    /// Runs one window (T×input_dim) on an inference tape and returns the
    /// probability, logit and both attention profiles.
    pub fn predict(&self, z: Tensor<T>) -> Result<Prediction> {
        let mut tape = Tape::inference();
        let bound = self.params.bind(&mut tape);
        let zv = tape.constant(z);
        let out = predict_window(&mut tape, &bound, &self.ids, zv, None)?;
        let logit = tape.value(out.logit).data()[0].as_f64();
        let to_vec = |v: Var| tape.value(v).data().iter().map(|x| x.as_f64()).collect();
        Ok(Prediction {
            probability: sigmoid(logit),
            logit,
            alpha_forward: to_vec(out.alpha_forward),
            alpha_backward: to_vec(out.alpha_backward),
        })
    }

    /// [`Self::predict`] on an f32 window buffer of `steps` rows.
    pub fn predict_window_values(&self, z: &[f32], steps: usize) -> Result<Prediction> {
        let width = self.cfg.input_dim;
        if steps == 0 || z.len() != steps * width {
            return Err(Error::shape(
                "predict",
                format!("{} values for {steps} steps of width {width}", z.len()),
            ));
        }
        let t = Tensor::new([steps, width], z.iter().map(|&v| T::lit(f64::from(v))).collect())?;
        self.predict(t)
    }
}

/// Model output for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub logit: f64,
    pub alpha_forward: Vec<f64>,
    pub alpha_backward: Vec<f64>,
}

/// Tape handles of a window's outputs.
#[derive(Clone, Copy, Debug)]
pub struct WindowOutput {
    /// 1×1 pre-sigmoid score.
    pub logit: Var,
    /// T×1 attention weights per direction.
    pub alpha_forward: Var,
    pub alpha_backward: Var,
}

fn reborrow<'a>(d: &'a mut Dropout<'_>) -> Dropout<'a> {
    d.as_mut().map(|(rate, rng)| (*rate, &mut **rng as &mut dyn RngCore))
}

/// Shared input projection `h_0 = Z W_inᵀ + b_in`.
pub fn input_projection<T: Real>(tape: &mut Tape<T>, bound: &Bound, ids: &ModelIds, z: Var) -> Result<Var> {
    tape.linear(z, bound[ids.w_in], Some(bound[ids.b_in]))
}

/// One directional stack on the projected sequence. The backward branch is
/// `flip(stack_bwd(flip(h0)))`.
pub fn branch_forward<T: Real>(
    tape: &mut Tape<T>,
    bound: &Bound,
    ids: &ModelIds,
    h0: Var,
    dir: Direction,
    mut dropout: Dropout<'_>,
) -> Result<Var> {
    let mut h = match dir {
        Direction::Forward => h0,
        Direction::Backward => tape.flip_rows(h0)?,
    };
    for block in ids.stack(dir) {
        h = block_forward(tape, bound, block, h, reborrow(&mut dropout))?;
    }
    match dir {
        Direction::Forward => Ok(h),
        Direction::Backward => tape.flip_rows(h),
    }
}

/// Additive attention over time: returns the pooled 1×D context and the
/// T×1 weights.
pub fn attn_pool<T: Real>(tape: &mut Tape<T>, bound: &Bound, pool: &PoolParams, h: Var) -> Result<(Var, Var)> {
    let proj = tape.linear(h, bound[pool.w_a], Some(bound[pool.b_a]))?;
    let act = tape.tanh(proj)?;
    let scores = tape.linear(act, bound[pool.w], None)?;
    let alpha = tape.softmax(scores, 0)?;
    let alpha_t = tape.transpose(alpha)?;
    let context = tape.matmul(alpha_t, h)?;
    Ok((context, alpha))
}

/// Head on the concatenated contexts: `w_c·LayerNorm([c_f ‖ c_b]) + b_c`.
/// Returns the 1×1 logit.
pub fn classify<T: Real>(tape: &mut Tape<T>, bound: &Bound, ids: &ModelIds, c_fwd: Var, c_bwd: Var) -> Result<Var> {
    let c = tape.concat_cols(c_fwd, c_bwd)?;
    let normed = tape.layer_norm(c, bound[ids.head_gamma], bound[ids.head_beta], T::lit(LAYER_NORM_EPS))?;
    tape.linear(normed, bound[ids.w_c], Some(bound[ids.b_c]))
}

/// Full forward pass on one window `z` (T×input_dim).
pub fn predict_window<T: Real>(
    tape: &mut Tape<T>,
    bound: &Bound,
    ids: &ModelIds,
    z: Var,
    mut dropout: Dropout<'_>,
) -> Result<WindowOutput> {
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);
    let h0 = input_projection(tape, bound, ids, z).map_err(stage("input_projection"))?;
    let hf = branch_forward(tape, bound, ids, h0, Direction::Forward, reborrow(&mut dropout))
        .map_err(stage("forward_branch"))?;
    let hb = branch_forward(tape, bound, ids, h0, Direction::Backward, reborrow(&mut dropout))
        .map_err(stage("backward_branch"))?;
    let (cf, af) = attn_pool(tape, bound, &ids.pool_forward, hf).map_err(stage("forward_pool"))?;
    let (cb, ab) = attn_pool(tape, bound, &ids.pool_backward, hb).map_err(stage("backward_pool"))?;
    let logit = classify(tape, bound, ids, cf, cb).map_err(stage("head"))?;
    Ok(WindowOutput {
        logit,
        alpha_forward: af,
        alpha_backward: ab,
    })
}
