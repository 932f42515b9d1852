//! Least squares over the probability simplex.
//!
//! The blend objective is a sum over layers of (squared or plain) Frobenius
//! distances between a weighted sum of basis matrices and a target. Every
//! per-layer distance is a quadratic form in `w`, so the solver reduces the
//! stacks to `K x K` Gram systems once and iterates on those.

use crate::error::{Error, Result};

/// Weights on the probability simplex: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!("weights must be finite and nonnegative: {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, index: usize) -> Self {
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` by the sort-based
/// threshold algorithm.
pub fn project_to_simplex(v: &[f64]) -> Result<SimplexWeights> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex projection input".into()));
    }
    Ok(SimplexWeights(project_unchecked(v)))
}

fn project_unchecked(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Renormalize away the rounding drift of the threshold.
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        w.iter_mut().for_each(|x| *x /= sum);
    } else {
        let best = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        w.iter_mut().for_each(|x| *x = 0.0);
        w[best] = 1.0;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlendNorm {
    /// `sum_l ||r_l||_F^2`, a smooth quadratic program.
    #[default]
    SquaredFrobenius,
    /// `sum_l ||r_l||_F`.
    Frobenius,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexLsqOptions {
    pub norm: BlendNorm,
    /// Divide each layer term by the number of matrix entries `N_l^2`.
    pub normalize_layers: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SimplexLsqOptions {
    fn default() -> Self {
        Self { norm: BlendNorm::SquaredFrobenius, normalize_layers: false, max_iterations: 10_000, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexLsqSolution {
    pub weights: SimplexWeights,
    pub objective: f64,
    /// Frobenius norm of the blended residual, per layer.
    pub layer_residuals: Vec<f64>,
    pub iterations: usize,
}

/// Per-layer quadratic forms `||sum_k w_k B_k - T||^2 = w'Qw - 2b'w + c`.
#[derive(Debug, Clone)]
pub struct BlendSystem {
    k: usize,
    scale: Vec<f64>,
    q: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    norm: BlendNorm,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BlendSystem {
    /// `basis[k][l]` is layer `l` of basis entry `k`; `target[l]` the
    /// target's layer `l`. Matrices are passed flattened.
    pub fn new(target: &[&[f64]], basis: &[Vec<&[f64]>], options: &SimplexLsqOptions) -> Result<Self> {
        let k = basis.len();
        if k == 0 {
            return Err(Error::InvalidArgument("simplex least squares needs at least one basis entry".into()));
        }
        let layers = target.len();
        for (idx, entry) in basis.iter().enumerate() {
            if entry.len() != layers {
                return Err(Error::DimensionMismatch(format!(
                    "basis entry {idx} has {} layers, target has {layers}",
                    entry.len()
                )));
            }
            for (l, m) in entry.iter().enumerate() {
                if m.len() != target[l].len() {
                    return Err(Error::DimensionMismatch(format!(
                        "basis entry {idx} layer {l}: {} values, target has {}",
                        m.len(),
                        target[l].len()
                    )));
                }
            }
        }
        let mut q = Vec::with_capacity(layers);
        let mut b = Vec::with_capacity(layers);
        let mut c = Vec::with_capacity(layers);
        let mut scale = Vec::with_capacity(layers);
        for l in 0..layers {
            let mut ql = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..=i {
                    let v = dot(basis[i][l], basis[j][l]);
                    ql[i * k + j] = v;
                    ql[j * k + i] = v;
                }
            }
            q.push(ql);
            b.push((0..k).map(|i| dot(basis[i][l], target[l])).collect());
            c.push(dot(target[l], target[l]));
            scale.push(if options.normalize_layers { 1.0 / target[l].len().max(1) as f64 } else { 1.0 });
        }
        Ok(Self { k, scale, q, b, c, norm: options.norm })
    }

    pub fn entries(&self) -> usize {
        self.k
    }

    fn layer_sq(&self, l: usize, w: &[f64]) -> f64 {
        let k = self.k;
        let ql = &self.q[l];
        let mut quad = 0.0;
        for i in 0..k {
            let row = &ql[i * k..(i + 1) * k];
            quad += w[i] * dot(row, w);
        }
        (quad - 2.0 * dot(&self.b[l], w) + self.c[l]).max(0.0)
    }

    pub fn layer_residuals(&self, w: &[f64]) -> Vec<f64> {
        (0..self.q.len()).map(|l| self.layer_sq(l, w).sqrt()).collect()
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        (0..self.q.len())
            .map(|l| {
                let sq = self.layer_sq(l, w);
                self.scale[l]
                    * match self.norm {
                        BlendNorm::SquaredFrobenius => sq,
                        BlendNorm::Frobenius => sq.sqrt(),
                    }
            })
            .sum()
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        let k = self.k;
        out.iter_mut().for_each(|g| *g = 0.0);
        for l in 0..self.q.len() {
            let factor = match self.norm {
                BlendNorm::SquaredFrobenius => 2.0 * self.scale[l],
                BlendNorm::Frobenius => self.scale[l] / self.layer_sq(l, w).sqrt().max(1e-300),
            };
            let ql = &self.q[l];
            for i in 0..k {
                out[i] += factor * (dot(&ql[i * k..(i + 1) * k], w) - self.b[l][i]);
            }
        }
    }

    fn curvature_bound(&self) -> f64 {
        let trace: f64 = (0..self.q.len())
            .map(|l| self.scale[l] * (0..self.k).map(|i| self.q[l][i * self.k + i]).sum::<f64>())
            .sum();
        2.0 * trace.max(1e-300)
    }

    /// Unconstrained minimizer of the squared objective (pseudo-inverse).
    pub fn unconstrained_minimizer(&self) -> Vec<f64> {
        let k = self.k;
        let mut q = nalgebra::DMatrix::<f64>::zeros(k, k);
        let mut b = nalgebra::DVector::<f64>::zeros(k);
        for l in 0..self.q.len() {
            for i in 0..k {
                b[i] += self.scale[l] * self.b[l][i];
                for j in 0..k {
                    q[(i, j)] += self.scale[l] * self.q[l][i * k + j];
                }
            }
        }
        let max_diag = (0..k).map(|i| q[(i, i)]).fold(0.0, f64::max);
        let svd = q.svd(true, true);
        let eps = max_diag * 1e-13;
        match svd.solve(&b, eps) {
            Ok(w) => w.iter().copied().collect(),
            Err(_) => vec![0.0; k],
        }
    }
}

/// Projected gradient with Barzilai-Borwein steps and monotone backtracking,
/// started from the best of the simplex vertices and the uniform point.
pub fn solve_simplex_lsq(
    target: &[&[f64]],
    basis: &[Vec<&[f64]>],
    options: &SimplexLsqOptions,
) -> Result<SimplexLsqSolution> {
    let system = BlendSystem::new(target, basis, options)?;
    Ok(solve_blend_system(&system, options))
}

pub fn solve_blend_system(system: &BlendSystem, options: &SimplexLsqOptions) -> SimplexLsqSolution {
    let k = system.entries();
    let mut w = SimplexWeights::uniform(k).into_vec();
    let mut f = system.objective(&w);
    for i in 0..k {
        let vertex = SimplexWeights::vertex(k, i).into_vec();
        let fv = system.objective(&vertex);
        if fv < f {
            f = fv;
            w = vertex;
        }
    }
    let mut iterations = 0;
    if k > 1 {
        let mut g = vec![0.0; k];
        let mut g_new = vec![0.0; k];
        system.gradient(&w, &mut g);
        let mut step = 1.0 / system.curvature_bound();
        while iterations < options.max_iterations {
            iterations += 1;
            let mut accepted = None;
            let mut trial = step;
            for _ in 0..60 {
                let candidate: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - trial * gi).collect();
                let candidate = project_unchecked(&candidate);
                let fc = system.objective(&candidate);
                if fc <= f {
                    accepted = Some((candidate, fc));
                    break;
                }
                trial *= 0.5;
            }
            let Some((candidate, fc)) = accepted else { break };
            system.gradient(&candidate, &mut g_new);
            let s: Vec<f64> = candidate.iter().zip(&w).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let change = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            w = candidate;
            f = fc;
            std::mem::swap(&mut g, &mut g_new);
            if change < options.tolerance {
                break;
            }
            let sy = dot(&s, &y);
            let ss = dot(&s, &s);
            step = if sy > 0.0 { ss / sy } else { trial * 2.0 };
        }
    }
    SimplexLsqSolution {
        layer_residuals: system.layer_residuals(&w),
        objective: f,
        weights: SimplexWeights(w),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let w = project_to_simplex(&[0.3, 0.7]).unwrap();
        assert!((w.as_slice()[0] - 0.3).abs() < 1e-15 && (w.as_slice()[1] - 0.7).abs() < 1e-15);
        assert_eq!(project_to_simplex(&[2.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(project_to_simplex(&[0.6, 0.6]).unwrap().as_slice(), &[0.5, 0.5]);
        assert!(project_to_simplex(&[]).is_err());
        assert!(project_to_simplex(&[f64::NAN]).is_err());
    }

    #[test]
    fn single_entry_is_fixed() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 5.0, 5.0, 9.0];
        let sol = solve_simplex_lsq(&[&t], &[vec![&b]], &SimplexLsqOptions::default()).unwrap();
        assert_eq!(sol.weights.as_slice(), &[1.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = [1.0; 4];
        let b = [1.0; 9];
        assert!(solve_simplex_lsq(&[&t], &[vec![&b]], &SimplexLsqOptions::default()).is_err());
        assert!(solve_simplex_lsq(&[&t], &[vec![&t, &t]], &SimplexLsqOptions::default()).is_err());
    }
}
