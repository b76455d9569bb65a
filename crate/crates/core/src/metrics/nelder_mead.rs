//! Derivative-free simplex minimization.

use crate::error::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once every vertex lies within this distance of the best one.
    pub tol: f64,
    pub max_iters: usize,
    /// Offset of the initial simplex vertices along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 2000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn simplex_size(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Minimizes `f` from `x0`. Non-finite objective values met after the start
/// are treated as +infinity.
pub fn nelder_mead<F>(f: F, x0: &[f64], options: NelderMeadOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    if d == 0 {
        return Err(Error::Usage("nelder_mead needs at least one dimension".into()));
    }
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += options.initial_step;
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(d + 1);
    for v in &simplex {
        let fv = f(v);
        if !fv.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is not finite at initial vertex {v:?}"
            )));
        }
        values.push(fv);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if simplex_size(&simplex) < options.tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let towards = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = towards(REFLECT);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = towards(EXPAND);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[d] = expanded;
                values[d] = f_e;
            } else {
                simplex[d] = reflected;
                values[d] = f_r;
            }
            continue;
        }
        if f_r < values[d - 1] {
            simplex[d] = reflected;
            values[d] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[d] {
            let c = towards(REFLECT * CONTRACT);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = towards(-CONTRACT);
            let fc = eval(&c);
            (c, fc)
        };
        if f_c < values[d].min(f_r) {
            simplex[d] = contracted;
            values[d] = f_c;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=d {
            simplex[i] = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + SHRINK * (v - b))
                .collect();
            values[i] = eval(&simplex[i]);
        }
    }

    Ok(Minimum {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        converged,
    })
}
