//! Damped Gauss-Newton with iteratively reweighted grouped residuals.
//!
//! A problem supplies residual blocks together with their Jacobians with
//! respect to a tangent vector, and a retraction that applies a tangent step
//! to its state. Squared blocks contribute `weight * ||r||^2`; norm blocks
//! contribute `weight * ||r||`, which each step replaces by its quadratic
//! majorizer `weight * ||r||^2 / (2 max(||r0||, eps))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLoss {
    Squared,
    /// Unsquared Euclidean norm of the whole block.
    Norm,
}

#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub loss: BlockLoss,
    pub weight: f64,
    pub residual: Vec<f64>,
    /// Row-major `residual.len() x tangent_dim`; empty when the caller did
    /// not request derivatives.
    pub jacobian: Vec<f64>,
}

impl ResidualBlock {
    pub fn energy(&self) -> f64 {
        let sq: f64 = self.residual.iter().map(|r| r * r).sum();
        match self.loss {
            BlockLoss::Squared => self.weight * sq,
            BlockLoss::Norm => self.weight * sq.sqrt(),
        }
    }
}

pub fn total_energy(blocks: &[ResidualBlock]) -> f64 {
    blocks.iter().map(ResidualBlock::energy).sum()
}

pub trait LeastSquaresProblem {
    type State: Clone;

    fn tangent_dim(&self) -> usize;

    fn residuals(&self, state: &Self::State, with_jacobian: bool) -> Result<Vec<ResidualBlock>>;

    fn retract(&self, state: &Self::State, delta: &[f64]) -> Self::State;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub steps: usize,
    pub irls_epsilon: f64,
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub max_damping: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { steps: 10, irls_epsilon: 1e-6, initial_damping: 1e-6, damping_factor: 10.0, max_damping: 1e12 }
    }
}

impl GaussNewtonOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct GaussNewtonReport<S> {
    pub state: S,
    pub initial_energy: f64,
    pub energy: f64,
    /// Energy after every accepted step.
    pub energies: Vec<f64>,
    pub steps: usize,
    pub accepted: usize,
}

/// Failure with the best state reached before it.
#[derive(Debug)]
pub struct GaussNewtonFailure<S> {
    pub error: Error,
    pub best: S,
    pub energy: f64,
}

/// IRLS weight for a grouped residual.
pub fn irls_weight(residual_norm: f64, epsilon: f64) -> f64 {
    1.0 / residual_norm.max(epsilon)
}

fn normal_equations(blocks: &[ResidualBlock], n: usize, eps: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for block in blocks {
        let m = block.residual.len();
        if block.jacobian.len() != m * n {
            return Err(Error::DimensionMismatch(format!(
                "jacobian has {} entries for a {m}x{n} block",
                block.jacobian.len()
            )));
        }
        let w = match block.loss {
            BlockLoss::Squared => block.weight,
            BlockLoss::Norm => {
                let norm = block.residual.iter().map(|r| r * r).sum::<f64>().sqrt();
                0.5 * block.weight * irls_weight(norm, eps)
            }
        };
        if w == 0.0 {
            continue;
        }
        for (i, &r) in block.residual.iter().enumerate() {
            let row = &block.jacobian[i * n..(i + 1) * n];
            for a in 0..n {
                let ja = row[a];
                if ja == 0.0 {
                    continue;
                }
                let wa = w * ja;
                rhs[a] -= wa * r;
                for b in 0..=a {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    Ok((h, rhs))
}

pub fn gauss_newton_irls<P: LeastSquaresProblem>(
    problem: &P,
    x0: &P::State,
    opts: &GaussNewtonOptions,
) -> std::result::Result<GaussNewtonReport<P::State>, GaussNewtonFailure<P::State>> {
    let n = problem.tangent_dim();
    let fail = |error: Error, best: &P::State, energy: f64| GaussNewtonFailure { error, best: best.clone(), energy };

    let mut state = x0.clone();
    let mut blocks = problem.residuals(&state, true).map_err(|e| fail(e, x0, f64::INFINITY))?;
    let mut energy = total_energy(&blocks);
    if !energy.is_finite() {
        return Err(fail(Error::NonFinite("initial energy".into()), x0, energy));
    }
    let initial_energy = energy;
    let mut energies = Vec::new();
    let mut lambda = opts.initial_damping;
    let mut steps = 0;
    let mut accepted = 0;

    while steps < opts.steps && energy > 0.0 {
        steps += 1;
        let (h, rhs) = normal_equations(&blocks, n, opts.irls_epsilon).map_err(|e| fail(e, &state, energy))?;
        if rhs.iter().all(|v| *v == 0.0) {
            break;
        }
        let mut improved = false;
        let mut factorized_any = false;
        while lambda <= opts.max_damping {
            let mut damped = h.clone();
            for a in 0..n {
                damped[(a, a)] += lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= opts.damping_factor;
                continue;
            };
            factorized_any = true;
            let delta = chol.solve(&rhs);
            let candidate = problem.retract(&state, delta.as_slice());
            let candidate_energy = problem
                .residuals(&candidate, false)
                .map(|b| total_energy(&b))
                .unwrap_or(f64::INFINITY);
            if candidate_energy.is_finite() && candidate_energy < energy {
                state = candidate;
                energy = candidate_energy;
                lambda = (lambda / opts.damping_factor).max(opts.initial_damping);
                improved = true;
                break;
            }
            lambda *= opts.damping_factor;
        }
        if !factorized_any {
            return Err(fail(Error::SingularSystem { lambda }, &state, energy));
        }
        if !improved {
            break;
        }
        accepted += 1;
        energies.push(energy);
        blocks = problem.residuals(&state, true).map_err(|e| fail(e, &state, energy))?;
        // the step was accepted on an energy recomputed without derivatives;
        // keep the value from the full evaluation
        energy = total_energy(&blocks);
    }

    Ok(GaussNewtonReport { state, initial_energy, energy, energies, steps, accepted })
}
