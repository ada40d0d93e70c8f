//! Multi-scale, multi-granularity residual convolutions over the relation table.
//!
//! One block computes
//!
//! ```text
//! T'   = relu(conv1x1(T))
//! T''  = sum over k in {3, 5}, d in {1, 2, 3} of relu(conv_{k,d}(T'))
//! T''' = relu(conv1x1(T''))
//! out  = T''' + T
//! ```
//!
//! All convolutions are same-padded and keep the channel count, so the
//! residual addition is always well-typed.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::table::RelationTable;
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

pub const KERNEL_SIZES: [usize; 2] = [3, 5];
pub const DILATIONS: [usize; 3] = [1, 2, 3];

/// Initialization half-width for every convolution weight.
pub const INIT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct MmcnnConfig {
    /// Number of residual blocks; 0 disables the stack.
    pub n_blocks: usize,
    pub channels: usize,
}

impl Default for MmcnnConfig {
    fn default() -> Self {
        MmcnnConfig {
            n_blocks: 2,
            channels: 64,
        }
    }
}

/// Name of the multi-scale branch with kernel `k` and dilation `d`.
pub fn branch_name(k: usize, d: usize) -> String {
    format!("k{k}d{d}")
}

fn block_prefix(l: usize) -> String {
    format!("mmcnn.block{l}")
}

fn init_conv<T: Real>(
    store: &mut ParamStore<T>,
    path: &str,
    k: usize,
    c: usize,
    rng: &mut dyn RngCore,
) -> Result<()> {
    store.insert(format!("{path}.kernel"), Tensor::uniform(&[k, k, c, c], INIT_SCALE, rng))?;
    store.insert(format!("{path}.bias"), Tensor::uniform(&[c], INIT_SCALE, rng))
}

pub fn init<T: Real>(cfg: &MmcnnConfig, store: &mut ParamStore<T>, rng: &mut dyn RngCore) -> Result<()> {
    if cfg.channels == 0 && cfg.n_blocks > 0 {
        return Err(Error::Config("mmcnn channels must be positive".into()));
    }
    for l in 0..cfg.n_blocks {
        let p = block_prefix(l);
        init_conv(store, &format!("{p}.in"), 1, cfg.channels, rng)?;
        for k in KERNEL_SIZES {
            for d in DILATIONS {
                init_conv(store, &format!("{p}.{}", branch_name(k, d)), k, cfg.channels, rng)?;
            }
        }
        init_conv(store, &format!("{p}.out"), 1, cfg.channels, rng)?;
    }
    Ok(())
}

fn conv<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    path: &str,
    x: Var,
    dilation: usize,
) -> Result<Var> {
    let w = tape.param(store, &format!("{path}.kernel"))?;
    let b = tape.param(store, &format!("{path}.bias"))?;
    let y = tape.conv2d(x, w, Some(b), dilation)?;
    Ok(tape.relu(y))
}

/// Applies block `l` to `t`.
pub fn block<T: Real>(
    cfg: &MmcnnConfig,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    l: usize,
    t: RelationTable,
) -> Result<RelationTable> {
    if t.d != cfg.channels || tape.shape(t.values) != [t.n, t.n, cfg.channels] {
        return Err(Error::Config(format!(
            "mmcnn expects {} channels, table has shape {:?}",
            cfg.channels,
            tape.shape(t.values)
        )));
    }
    let p = block_prefix(l);
    let t1 = conv(tape, store, &format!("{p}.in"), t.values, 1)?;
    let mut acc: Option<Var> = None;
    for k in KERNEL_SIZES {
        for d in DILATIONS {
            let b = conv(tape, store, &format!("{p}.{}", branch_name(k, d)), t1, d)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, b)?,
                None => b,
            });
        }
    }
    let t2 = acc.expect("at least one branch");
    let t3 = conv(tape, store, &format!("{p}.out"), t2, 1)?;
    let values = tape.add(t3, t.values)?;
    Ok(RelationTable { values, ..t })
}

/// Applies `cfg.n_blocks` blocks in sequence; zero blocks is the identity.
pub fn stack<T: Real>(
    cfg: &MmcnnConfig,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    t0: RelationTable,
) -> Result<RelationTable> {
    (0..cfg.n_blocks).try_fold(t0, |t, l| block(cfg, tape, store, l, t))
}
