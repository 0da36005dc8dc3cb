//! Shared machinery for softmax models whose class coefficients are sums of
//! coefficient vectors ("units").
//!
//! Flat MNL has one unit per class, corMNL one unit per branch covering the
//! classes below it, and each treeMNL node is a flat MNL over its children.
//! Coefficients are stored flat as `[α_0..α_c | unit 0 (p) | unit 1 (p) | ...]`.

use ndarray::ArrayView2;

use crate::hierarchy::ClassHierarchy;

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + v.iter().map(|&a| (a - m).exp()).sum::<f64>().ln()
}

pub(crate) fn row_slice<'a>(row: &'a ndarray::ArrayView1<'_, f64>) -> std::borrow::Cow<'a, [f64]> {
    match row.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(row.to_vec()),
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// In-place softmax with max subtraction.
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for a in v.iter_mut() {
        *a = (*a - m).exp();
        s += *a;
    }
    for a in v.iter_mut() {
        *a /= s;
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Design {
    pub c: usize,
    pub p: usize,
    /// Classes each unit contributes to.
    pub units: Vec<Vec<usize>>,
    /// Hyperparameter group (τ index) of each unit.
    pub group: Vec<usize>,
    pub n_groups: usize,
    /// Units contributing to each class.
    class_units: Vec<Vec<usize>>,
}

impl Design {
    fn new(c: usize, p: usize, units: Vec<Vec<usize>>, group: Vec<usize>, n_groups: usize) -> Self {
        let mut class_units = vec![Vec::new(); c];
        for (u, cols) in units.iter().enumerate() {
            for &j in cols {
                class_units[j].push(u);
            }
        }
        Design {
            c,
            p,
            units,
            group,
            n_groups,
            class_units,
        }
    }

    pub fn flat(c: usize, p: usize) -> Self {
        Self::new(c, p, (0..c).map(|j| vec![j]).collect(), vec![0; c], 1)
    }

    pub fn branch_sum(h: &ClassHierarchy, p: usize) -> Self {
        let units = (0..h.n_branches()).map(|b| h.classes_below(b)).collect();
        let group = h.branches().iter().map(|br| br.parent).collect();
        Self::new(h.n_classes(), p, units, group, h.n_nodes())
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_coef(&self) -> usize {
        self.c + self.n_units() * self.p
    }

    /// Class-major `c × p` effective coefficients.
    pub fn effective_beta(&self, coef: &[f64]) -> Vec<f64> {
        let (c, p) = (self.c, self.p);
        let mut beta = vec![0.0; c * p];
        for j in 0..c {
            let row = &mut beta[j * p..(j + 1) * p];
            for &u in &self.class_units[j] {
                let phi = &coef[c + u * p..c + (u + 1) * p];
                row.iter_mut().zip(phi).for_each(|(b, f)| *b += f);
            }
        }
        beta
    }

    #[inline]
    pub fn logits_into(&self, alpha: &[f64], beta: &[f64], x: &[f64], out: &mut [f64]) {
        let p = self.p;
        for j in 0..self.c {
            let b = &beta[j * p..(j + 1) * p];
            out[j] = alpha[j] + b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>();
        }
    }

    /// Class probabilities for every row of `x` (row-major `n × c`).
    pub fn probs(&self, coef: &[f64], x: ArrayView2<f64>) -> Vec<f64> {
        let beta = self.effective_beta(coef);
        let alpha = &coef[..self.c];
        let mut out = vec![0.0; x.nrows() * self.c];
        for (i, row) in x.rows().into_iter().enumerate() {
            let slot = &mut out[i * self.c..(i + 1) * self.c];
            let xs = row_slice(&row);
            self.logits_into(alpha, &beta, &xs, slot);
            softmax_in_place(slot);
        }
        out
    }

    pub fn log_lik(&self, coef: &[f64], x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let beta = self.effective_beta(coef);
        let alpha = &coef[..self.c];
        let mut logits = vec![0.0; self.c];
        let mut ll = 0.0;
        for (row, &yi) in x.rows().into_iter().zip(y) {
            let xs = row_slice(&row);
            self.logits_into(alpha, &beta, &xs, &mut logits);
            ll += logits[yi] - log_sum_exp(&logits);
        }
        ll
    }

    /// Log-likelihood; its gradient with respect to `coef` is added to `grad`.
    pub fn log_lik_grad(&self, coef: &[f64], x: ArrayView2<f64>, y: &[usize], grad: &mut [f64]) -> f64 {
        let (c, p) = (self.c, self.p);
        let beta = self.effective_beta(coef);
        let alpha = &coef[..c];
        let mut gbeta = vec![0.0; c * p];
        let mut resid = vec![0.0; c];
        let mut ll = 0.0;
        for (row, &yi) in x.rows().into_iter().zip(y) {
            let xs = row_slice(&row);
            self.logits_into(alpha, &beta, &xs, &mut resid);
            let lse = log_sum_exp(&resid);
            ll += resid[yi] - lse;
            for (j, r) in resid.iter_mut().enumerate() {
                *r = if j == yi { 1.0 } else { 0.0 } - (*r - lse).exp();
                grad[j] += *r;
                let gb = &mut gbeta[j * p..(j + 1) * p];
                gb.iter_mut().zip(xs.iter()).for_each(|(g, x)| *g += *r * x);
            }
        }
        for (u, cols) in self.units.iter().enumerate() {
            let gphi = &mut grad[c + u * p..c + (u + 1) * p];
            for &j in cols {
                gphi.iter_mut()
                    .zip(&gbeta[j * p..(j + 1) * p])
                    .for_each(|(g, b)| *g += b);
            }
        }
        ll
    }

    /// Prior standard deviation of every coefficient.
    pub fn prior_sd(&self, h: &Hypers) -> Vec<f64> {
        let mut sd = vec![h.tau0; self.c];
        sd.reserve(self.n_units() * self.p);
        for u in 0..self.n_units() {
            let tau = h.tau[self.group[u]];
            for l in 0..self.p {
                sd.push(tau * h.sigma.as_ref().map_or(1.0, |s| s[l]));
            }
        }
        sd
    }
}

/// Standard deviations governing the coefficients of one design.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Hypers {
    pub tau0: f64,
    pub tau: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

/// Independent zero-mean normal log density; gradient added to `grad`.
pub(crate) fn normal_log_prior_grad(coef: &[f64], sd: &[f64], grad: Option<&mut [f64]>) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let lp = coef
        .iter()
        .zip(sd)
        .map(|(t, s)| -0.5 * (t / s).powi(2) - s.ln() - HALF_LN_2PI)
        .sum();
    if let Some(grad) = grad {
        for ((g, t), s) in grad.iter_mut().zip(coef).zip(sd) {
            *g -= t / (s * s);
        }
    }
    lp
}

/// Cached logits supporting cheap one-coordinate conditionals for slice sampling.
pub(crate) struct LogitCache<'a> {
    design: &'a Design,
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    logits: Vec<f64>,
}

/// Log-likelihood of one coordinate as a function of its value, other
/// coefficients held fixed.
pub(crate) struct Conditional {
    start: f64,
    z: Vec<f64>,
    inside: Vec<f64>,
    outside: Vec<f64>,
    target_sum: f64,
    base: f64,
    pub(crate) cols: Vec<usize>,
}

impl Conditional {
    pub fn log_lik_delta(&self, value: f64) -> f64 {
        let d = value - self.start;
        let mut ll = d * self.target_sum + self.base;
        for ((z, a), b) in self.z.iter().zip(&self.inside).zip(&self.outside) {
            ll -= log_add_exp(a + d * z, *b);
        }
        ll
    }
}

impl<'a> LogitCache<'a> {
    pub fn new(design: &'a Design, coef: &[f64], x: ArrayView2<'a, f64>, y: &'a [usize]) -> Self {
        let mut cache = LogitCache {
            design,
            x,
            y,
            logits: vec![0.0; x.nrows() * design.c],
        };
        cache.refresh(coef);
        cache
    }

    pub fn refresh(&mut self, coef: &[f64]) {
        let c = self.design.c;
        let beta = self.design.effective_beta(coef);
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let xs = row_slice(&row);
            self.design
                .logits_into(&coef[..c], &beta, &xs, &mut self.logits[i * c..(i + 1) * c]);
        }
    }

    #[cfg(test)]
    pub fn log_lik(&self) -> f64 {
        let c = self.design.c;
        self.y
            .iter()
            .enumerate()
            .map(|(i, &yi)| {
                let row = &self.logits[i * c..(i + 1) * c];
                row[yi] - log_sum_exp(row)
            })
            .sum()
    }

    pub fn conditional(&self, k: usize, start: f64) -> Conditional {
        let d = self.design;
        let (cols, covariate) = if k < d.c {
            (vec![k], None)
        } else {
            let u = (k - d.c) / d.p;
            (d.units[u].clone(), Some((k - d.c) % d.p))
        };
        let n = self.y.len();
        let mut member = vec![false; d.c];
        cols.iter().for_each(|&j| member[j] = true);
        let z: Vec<f64> = match covariate {
            None => vec![1.0; n],
            Some(l) => self.x.column(l).to_vec(),
        };
        let mut inside = Vec::with_capacity(n);
        let mut outside = Vec::with_capacity(n);
        let mut target_sum = 0.0;
        let mut base = 0.0;
        for i in 0..n {
            let row = &self.logits[i * d.c..(i + 1) * d.c];
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (j, &v) in row.iter().enumerate() {
                if member[j] {
                    a = log_add_exp(a, v);
                } else {
                    b = log_add_exp(b, v);
                }
            }
            base += log_add_exp(a, b);
            inside.push(a);
            outside.push(b);
            if member[self.y[i]] {
                target_sum += z[i];
            }
        }
        Conditional {
            start,
            z,
            inside,
            outside,
            target_sum,
            base,
            cols,
        }
    }

    /// Shift the cached logits after a coordinate moved by `delta`.
    pub fn apply(&mut self, cond: &Conditional, delta: f64) {
        let c = self.design.c;
        for (i, z) in cond.z.iter().enumerate() {
            for &j in &cond.cols {
                self.logits[i * c + j] += delta * z;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn log_add_exp_matches_direct() {
        for (a, b) in [(0.0, 0.0), (1.0, -3.0), (-700.0, -701.0), (30.0, 30.5)] {
            let direct = (f64::exp(a) + f64::exp(b)).ln();
            assert!((log_add_exp(a, b) - direct).abs() < 1e-12);
        }
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
    }

    #[test]
    fn conditional_tracks_full_likelihood() {
        let h = ClassHierarchy::parse("((a,b),(c,d,e))").unwrap();
        let design = Design::branch_sum(&h, 2);
        let x = Array2::from_shape_vec((4, 2), vec![0.5, -1.0, 2.0, 0.1, -0.3, 0.7, 1.1, 1.5]).unwrap();
        let y = vec![0, 3, 4, 1];
        let mut coef: Vec<f64> = (0..design.n_coef()).map(|k| ((k * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let cache = LogitCache::new(&design, &coef, x.view(), &y);
        let base = design.log_lik(&coef, x.view(), &y);
        assert!((cache.log_lik() - base).abs() < 1e-12);
        for k in [0, 3, 5, 8, design.n_coef() - 1] {
            let cond = cache.conditional(k, coef[k]);
            let start = coef[k];
            coef[k] = start + 0.37;
            let full = design.log_lik(&coef, x.view(), &y) - base;
            coef[k] = start;
            assert!((cond.log_lik_delta(start + 0.37) - full).abs() < 1e-12, "k={k}");
        }
    }
}
