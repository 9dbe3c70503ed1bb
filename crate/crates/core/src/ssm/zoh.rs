use crate::error::{Error, Result};
use crate::numerics::Real;

/// Below this `|Δ·a|` the input coefficient uses its series limit.
pub const ZOH_LIMIT: f64 = 1e-8;

/// Zero-order-hold discretization of one diagonal entry:
/// `Ā = exp(Δa)`, `B̄ = ((exp(Δa) − 1)/a)·B`.
pub fn discretize_zoh<T: Real>(a: T, delta: T, b: T) -> Result<(T, T)> {
    if !(delta > T::zero()) {
        return Err(Error::Contract(format!("ZOH step must be positive, got {delta}")));
    }
    let c = ZohCoeffs::new(a, delta);
    Ok((c.abar, c.f * b))
}

/// `Ā`, the input factor `f = (exp(Δa) − 1)/a`, and their partial
/// derivatives with respect to `Δ` and `a`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ZohCoeffs<T> {
    pub abar: T,
    pub f: T,
    pub df_ddelta: T,
    pub df_da: T,
}

impl<T: Real> ZohCoeffs<T> {
    #[inline]
    pub fn new(a: T, delta: T) -> Self {
        let x = delta * a;
        let abar = x.exp();
        if x.abs() < T::lit(ZOH_LIMIT) {
            // f ≈ Δ + Δ²a/2.
            return ZohCoeffs {
                abar,
                f: delta * (T::one() + x * T::lit(0.5)),
                df_ddelta: T::one() + x,
                df_da: delta * delta * T::lit(0.5),
            };
        }
        let f = x.exp_m1() / a;
        // (x·eˣ − (eˣ − 1)) / x², by series near zero to avoid cancellation.
        let g = if x.abs() < T::lit(1e-2) {
            T::lit(0.5)
                + x * (T::lit(1.0 / 3.0) + x * (T::lit(1.0 / 8.0) + x * (T::lit(1.0 / 30.0) + x * T::lit(1.0 / 144.0))))
        } else {
            (x * abar - x.exp_m1()) / (x * x)
        };
        ZohCoeffs {
            abar,
            f,
            df_ddelta: abar,
            df_da: delta * delta * g,
        }
    }
}
