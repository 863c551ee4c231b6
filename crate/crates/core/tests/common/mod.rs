//! Oracles shared by the integration and acceptance tests. None of them
//! call into the fitting code they are used to check.

#![allow(dead_code)]

use faer::{Mat, Side};

/// Restricted log-likelihood through the eigendecomposition `G = U·Λ·Uᵀ`:
/// with `w_i = σ_g·λ_i + σ_e`, every term of
/// `−½[log|V| + log|XᵀV⁻¹X| + yᵀPy]` is a weighted sum over `i`.
pub struct SpectralReml {
    lambda: Vec<f64>,
    /// `Uᵀy`
    yt: Vec<f64>,
    /// `UᵀX`, row-major `n × q`
    xt: Vec<Vec<f64>>,
}

impl SpectralReml {
    pub fn new(y: &[f64], x: &Mat<f64>, g: &Mat<f64>) -> Self {
        let evd = g.self_adjoint_eigen(Side::Lower).expect("eigendecomposition");
        let (u, s) = (evd.U(), evd.S());
        let n = y.len();
        let q = x.ncols();
        let lambda = (0..n).map(|i| s[i]).collect();
        let yt = (0..n).map(|i| (0..n).map(|k| u[(k, i)] * y[k]).sum()).collect();
        let xt = (0..n)
            .map(|i| (0..q).map(|c| (0..n).map(|k| u[(k, i)] * x[(k, c)]).sum()).collect())
            .collect();
        Self { lambda, yt, xt }
    }

    pub fn loglik(&self, sigma_g: f64, sigma_e: f64) -> f64 {
        let q = self.xt[0].len();
        let mut logdet_v = 0.0;
        let mut yvy = 0.0;
        let mut xvx = vec![vec![0.0; q]; q];
        let mut xvy = vec![0.0; q];
        for (i, &l) in self.lambda.iter().enumerate() {
            let w = sigma_g * l + sigma_e;
            if w <= 0.0 {
                return f64::NEG_INFINITY;
            }
            logdet_v += w.ln();
            yvy += self.yt[i] * self.yt[i] / w;
            for a in 0..q {
                xvy[a] += self.xt[i][a] * self.yt[i] / w;
                for b in 0..q {
                    xvx[a][b] += self.xt[i][a] * self.xt[i][b] / w;
                }
            }
        }
        let Some((logdet_c, sol)) = small_spd_solve(&xvx, &xvy) else { return f64::NEG_INFINITY };
        let ypy = yvy - xvy.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>();
        -0.5 * (logdet_v + logdet_c + ypy)
    }
}

/// Plain Cholesky solve for a tiny SPD system; returns `(log|A|, A⁻¹b)`.
fn small_spd_solve(a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let q = b.len();
    let mut l = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; q];
    for i in 0..q {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; q];
    for i in (0..q).rev() {
        x[i] = (z[i] - (i + 1..q).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some((2.0 * (0..q).map(|i| l[i][i].ln()).sum::<f64>(), x))
}

pub struct GridOptimum {
    pub sigma_g: f64,
    pub sigma_e: f64,
    pub loglik: f64,
}

impl GridOptimum {
    pub fn h2(&self) -> f64 {
        self.sigma_g / (self.sigma_g + self.sigma_e)
    }
}

/// Exhaustive search over `{0, step, 2·step, …, hi}²`.
pub fn grid_search(oracle: &SpectralReml, hi: f64, step: f64) -> GridOptimum {
    let steps = (hi / step).round() as usize;
    let mut best = GridOptimum { sigma_g: f64::NAN, sigma_e: f64::NAN, loglik: f64::NEG_INFINITY };
    for i in 0..=steps {
        let sg = i as f64 * step;
        for j in 0..=steps {
            let se = j as f64 * step;
            let ll = oracle.loglik(sg, se);
            if ll > best.loglik {
                best = GridOptimum { sigma_g: sg, sigma_e: se, loglik: ll };
            }
        }
    }
    best
}

/// Every permutation of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best agreement over all injective cluster → class maps, by enumeration.
pub fn brute_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 1.0;
    }
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let size = kp.max(kt);
    let best = permutations(size)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap();
    best as f64 / pred.len() as f64
}

/// ARI from explicit pair enumeration; 1 when the index is undefined.
pub fn brute_ari(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    let (mut both, mut in_pred, mut in_truth, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sp = pred[i] == pred[j];
            let st = truth[i] == truth[j];
            pairs += 1.0;
            in_pred += sp as u8 as f64;
            in_truth += st as u8 as f64;
            both += (sp && st) as u8 as f64;
        }
    }
    if pairs == 0.0 {
        return 1.0;
    }
    let expected = in_pred * in_truth / pairs;
    let max = 0.5 * (in_pred + in_truth);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// All labelings of `n` points with values in `0..k`.
pub fn labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let d = code % k;
                    code /= k;
                    d
                })
                .collect()
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

/// Drops the last CSV column (the runtime) from every line.
pub fn without_runtime(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}
