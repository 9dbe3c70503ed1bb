use crate::error::{Error, Result};
use crate::numerics::{CustomOp, Real, Tape, Tensor, Var};

use super::zoh::ZohCoeffs;

/// Sequential scan over precomputed coefficients for a single channel with
/// scalar state: `h_t = Ā_t h_{t−1} + B̄_t u_t`, `y_t = C_t h_t + D u_t`.
pub fn scan_discretized<T: Real>(abar: &[T], bbar: &[T], c: &[T], d: T, u: &[T]) -> Result<Vec<T>> {
    let n = u.len();
    if abar.len() != n || bbar.len() != n || c.len() != n {
        return Err(Error::shape(
            "scan_discretized",
            format!("lengths Ā {} B̄ {} C {} u {n}", abar.len(), bbar.len(), c.len()),
        ));
    }
    let mut h = T::zero();
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        h = abar[t] * h + bbar[t] * u[t];
        if !h.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("scan state at t={t}"),
            });
        }
        y.push(c[t] * h + d * u[t]);
    }
    Ok(y)
}

/// Fused selective scan. Inputs, in order: `u` (T×Di), `Δ` (T×Di),
/// `A_log` (Di×N), `B` (T×N), `C` (T×N), `D` (Di).
struct SelectiveScan<T> {
    /// `h_t` for every step, `T×Di×N`; empty when no gradient is needed.
    states: Vec<T>,
    steps: usize,
    inner: usize,
    state: usize,
}

/// Runs the diagonal selective SSM with realized `A = −exp(A_log)` and
/// per-step ZOH discretization. State starts at zero.
pub fn selective_scan<T: Real>(
    tape: &mut Tape<T>,
    u: Var,
    delta: Var,
    a_log: Var,
    b: Var,
    c: Var,
    d: Var,
) -> Result<Var> {
    let (steps, inner) = tape.value(u).dims2()?;
    let (na, state) = tape.value(a_log).dims2()?;
    let shape_ok = tape.value(delta).shape() == [steps, inner]
        && na == inner
        && tape.value(b).shape() == [steps, state]
        && tape.value(c).shape() == [steps, state]
        && tape.value(d).len() == inner;
    if !shape_ok {
        return Err(Error::shape(
            "selective_scan",
            format!(
                "u {:?}, Δ {:?}, A_log {:?}, B {:?}, C {:?}, D {:?}",
                tape.value(u).shape(),
                tape.value(delta).shape(),
                tape.value(a_log).shape(),
                tape.value(b).shape(),
                tape.value(c).shape(),
                tape.value(d).shape()
            ),
        ));
    }
    let keep = [u, delta, a_log, b, c, d].iter().any(|&v| tape.requires_grad(v));
    let (ud, dd, ad, bd, cd, skip) = (
        tape.value(u).data(),
        tape.value(delta).data(),
        tape.value(a_log).data(),
        tape.value(b).data(),
        tape.value(c).data(),
        tape.value(d).data(),
    );
    // Δ = 0 only arises from softplus underflow and means "no update".
    if let Some(i) = dd.iter().position(|&x| !(x >= T::zero())) {
        return Err(Error::Contract(format!(
            "selective_scan: Δ must be nonnegative, got {} at t={}",
            dd[i],
            i / inner
        )));
    }
    let a: Vec<T> = ad.iter().map(|&l| -l.exp()).collect();
    let mut h = vec![T::zero(); inner * state];
    let mut states = if keep {
        Vec::with_capacity(steps * inner * state)
    } else {
        Vec::new()
    };
    let mut y = vec![T::zero(); steps * inner];
    for t in 0..steps {
        let brow = &bd[t * state..(t + 1) * state];
        let crow = &cd[t * state..(t + 1) * state];
        for ch in 0..inner {
            let ut = ud[t * inner + ch];
            let dt = dd[t * inner + ch];
            let hs = &mut h[ch * state..(ch + 1) * state];
            let mut acc = skip[ch] * ut;
            for n in 0..state {
                let k = ZohCoeffs::new(a[ch * state + n], dt);
                hs[n] = k.abar * hs[n] + k.f * brow[n] * ut;
                acc += crow[n] * hs[n];
            }
            if !acc.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("selective_scan state at t={t}, channel {ch}"),
                });
            }
            y[t * inner + ch] = acc;
        }
        if keep {
            states.extend_from_slice(&h);
        }
    }
    let out = Tensor::new([steps, inner], y)?;
    tape.custom(
        &[u, delta, a_log, b, c, d],
        out,
        Box::new(SelectiveScan {
            states,
            steps,
            inner,
            state,
        }),
    )
}

impl<T: Real> CustomOp<T> for SelectiveScan<T> {
    fn name(&self) -> &'static str {
        "selective_scan"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, gy: &[T], grads: &mut [Vec<T>]) {
        let (steps, inner, state) = (self.steps, self.inner, self.state);
        let (ud, dd, ad, bd, cd, skip) = (
            inputs[0].data(),
            inputs[1].data(),
            inputs[2].data(),
            inputs[3].data(),
            inputs[4].data(),
            inputs[5].data(),
        );
        let a: Vec<T> = ad.iter().map(|&l| -l.exp()).collect();
        let [gu, gdelta, galog, gb, gc, gd] = grads else {
            unreachable!("selective_scan has six inputs")
        };
        // Adjoint of h_t carried backward through Ā.
        let mut gh = vec![T::zero(); inner * state];
        for t in (0..steps).rev() {
            let hs_t = &self.states[t * inner * state..(t + 1) * inner * state];
            let brow = &bd[t * state..(t + 1) * state];
            let crow = &cd[t * state..(t + 1) * state];
            for ch in 0..inner {
                let i = t * inner + ch;
                let g = gy[i];
                let ut = ud[i];
                let dt = dd[i];
                gd[ch] += g * ut;
                gu[i] += g * skip[ch];
                let mut g_delta = T::zero();
                for n in 0..state {
                    let j = ch * state + n;
                    let h_t = hs_t[j];
                    let h_prev = if t > 0 {
                        self.states[(t - 1) * inner * state + j]
                    } else {
                        T::zero()
                    };
                    gc[t * state + n] += g * h_t;
                    let ghj = gh[j] + g * crow[n];
                    let an = a[j];
                    let k = ZohCoeffs::new(an, dt);
                    let g_abar = ghj * h_prev;
                    let g_bbar = ghj * ut;
                    gu[i] += ghj * k.f * brow[n];
                    gb[t * state + n] += g_bbar * k.f;
                    let g_f = g_bbar * brow[n];
                    g_delta += g_abar * an * k.abar + g_f * k.df_ddelta;
                    // da/dA_log = a.
                    galog[j] += (g_abar * dt * k.abar + g_f * k.df_da) * an;
                    gh[j] = ghj * k.abar;
                }
                gdelta[i] += g_delta;
            }
        }
    }
}
