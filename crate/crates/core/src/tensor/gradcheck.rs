use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};

/// Settings for a central-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub eps: f64,
    /// Number of parameter coordinates to probe. Every tensor gets at least one.
    pub samples: usize,
    pub seed: u64,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-3,
            samples: 256,
            seed: 0,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Worst coordinate: (path, flat index, analytic, numeric).
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Worst relative error between analytic and central-difference gradients.
pub fn grad_check<T, F>(f: F, params: &ParamStore<T>, eps: f64) -> Result<f64>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
{
    let cfg = GradCheck {
        eps,
        ..GradCheck::default()
    };
    grad_check_with(f, params, &cfg).map(|r| r.max_rel_error)
}

fn eval_loss<T, F>(f: &F, params: &ParamStore<T>) -> Result<f64>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let v = tape.scalar(loss).as_f64();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss = {v}")));
    }
    Ok(v)
}

pub fn grad_check_with<T, F>(f: F, params: &ParamStore<T>, cfg: &GradCheck) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
{
    if !(1e-6..=1e-2).contains(&cfg.eps) {
        return Err(Error::Config(format!("grad-check eps {} outside [1e-6, 1e-2]", cfg.eps)));
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let grads = tape.backward(loss)?;

    let analytic = |path: &str, i: usize| -> f64 {
        tape.param_vars()
            .find(|(p, _)| *p == path)
            .and_then(|(_, v)| grads.get(v))
            .map_or(0.0, |g| g[i].as_f64())
    };

    let tensors: Vec<(String, usize)> = params
        .iter()
        .map(|(p, t)| (p.to_string(), t.numel()))
        .filter(|(_, n)| *n > 0)
        .collect();
    let total: usize = tensors.iter().map(|(_, n)| n).sum();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    if total <= cfg.samples {
        for (t, (_, n)) in tensors.iter().enumerate() {
            coords.extend((0..*n).map(|i| (t, i)));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (t, (_, n)) in tensors.iter().enumerate() {
            coords.push((t, rng.gen_range(0..*n)));
        }
        while coords.len() < cfg.samples {
            let mut flat = rng.gen_range(0..total);
            let mut t = 0;
            while flat >= tensors[t].1 {
                flat -= tensors[t].1;
                t += 1;
            }
            coords.push((t, flat));
        }
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (t, i) in coords {
        let path = &tensors[t].0;
        let orig = probe.get(path)?.data()[i];
        probe.get_mut(path)?.data_mut()[i] = T::of(orig.as_f64() + cfg.eps);
        let up = eval_loss(&f, &probe)?;
        probe.get_mut(path)?.data_mut()[i] = T::of(orig.as_f64() - cfg.eps);
        let down = eval_loss(&f, &probe)?;
        probe.get_mut(path)?.data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * cfg.eps);
        let exact = analytic(path, i);
        let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(cfg.floor);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = Some((path.clone(), i, exact, numeric));
        }
    }
    Ok(report)
}
