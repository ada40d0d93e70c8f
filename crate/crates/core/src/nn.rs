//! Parameter registration helpers shared by the model layers.

use rand::RngCore;

use crate::error::Result;
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

/// Dropout randomness; `None` means evaluation mode.
pub type DropoutRng<'a> = Option<&'a mut dyn RngCore>;

/// Registers `{path}.weight` `[in, out]` (Glorot-uniform) and a zero `{path}.bias`.
pub fn init_linear<T: Real>(
    store: &mut ParamStore<T>,
    path: &str,
    inp: usize,
    out: usize,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let bound = (6.0 / (inp + out) as f64).sqrt();
    store.insert(format!("{path}.weight"), Tensor::uniform(&[inp, out], bound, rng))?;
    store.insert(format!("{path}.bias"), Tensor::zeros(&[out]))?;
    Ok(())
}

pub fn linear<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, path: &str, x: Var) -> Result<Var> {
    let w = tape.param(store, &format!("{path}.weight"))?;
    let b = tape.param(store, &format!("{path}.bias"))?;
    tape.affine(x, w, b)
}

pub fn init_layer_norm<T: Real>(store: &mut ParamStore<T>, path: &str, d: usize) -> Result<()> {
    let ones = Tensor::new(vec![d], vec![T::one(); d])?;
    store.insert(format!("{path}.gamma"), ones)?;
    store.insert(format!("{path}.beta"), Tensor::zeros(&[d]))?;
    Ok(())
}

pub fn layer_norm<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, path: &str, x: Var) -> Result<Var> {
    let g = tape.param(store, &format!("{path}.gamma"))?;
    let b = tape.param(store, &format!("{path}.beta"))?;
    tape.layer_norm(x, g, b)
}

pub(crate) fn dropout<T: Real>(tape: &mut Tape<T>, x: Var, p: f64, rng: &mut DropoutRng<'_>) -> Var {
    match rng {
        Some(r) => tape.dropout(x, p, &mut **r),
        None => x,
    }
}
