//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code, clippy::excessive_precision, clippy::too_many_arguments)]

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod 15-point estimate and its difference from the embedded Gauss
/// 7-point rule.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod integration; every accepted panel has estimated
/// error below `tol` or round-off relative to its value.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn go<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol.max(1e-15 * v.abs()) || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        go(f, a, m, tol, depth - 1) + go(f, m, b, tol, depth - 1)
    }
    go(f, a, b, tol, 30)
}

/// `ln ∫₀^∞ λ^r e^{-λΔ} Gamma(λ; α, β) dλ` by quadrature in `u = ln λ`.
pub fn log_evidence_quadrature(r: usize, delta: f64, alpha: f64, beta: f64) -> f64 {
    let a = alpha + r as f64;
    let b = beta + delta;
    // integrand in u: exp(a u - b e^u) up to the prior constant, peaked at
    // u* = ln(a/b) with value exp(a ln(a/b) - a)
    let u_star = (a / b).ln();
    let peak = a * u_star - a;
    let g = |u: f64| (a * u - b * u.exp() - peak).exp();
    let lo = u_star - 60.0 / a.min(1.0) - 10.0;
    let hi = u_star + 6.0 + 10.0 / a.sqrt();
    let mut edges = vec![lo];
    let steps = 200;
    for i in 1..=steps {
        edges.push(lo + (hi - lo) * i as f64 / steps as f64);
    }
    let total: f64 = edges.windows(2).map(|w| integrate(&g, w[0], w[1], 1e-14)).sum();
    alpha * beta.ln() - ln_gamma(alpha) + peak + total.ln()
}

fn conj_evidence(times: &[f64], c: f64, d: f64, alpha: f64, beta: f64) -> f64 {
    let r = times.iter().filter(|&&t| t > c && t <= d).count() as f64;
    (alpha * beta.ln() - ln_gamma(alpha) + ln_gamma(alpha + r) - (alpha + r) * (beta + d - c).ln()).exp()
}

/// Unnormalized posterior masses of `k = 0..=kmax` changepoints in `(a, b)`
/// under the Poisson-gamma model, with the first segment's data starting at
/// `data_start`. Includes the `ν^k e^{-ν(b-a)}` prior factor.
pub fn changepoint_masses(
    times: &[f64],
    data_start: f64,
    a: f64,
    b: f64,
    nu: f64,
    alpha: f64,
    beta: f64,
    kmax: usize,
) -> Vec<f64> {
    let inside: Vec<f64> = times.iter().copied().filter(|&t| t > a && t < b).collect();
    let pieces = |lo: f64| -> Vec<(f64, f64)> {
        let mut cuts = vec![lo];
        cuts.extend(inside.iter().copied().filter(|&t| t > lo));
        cuts.push(b);
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let n = 2;
            for j in 0..n {
                let x0 = w[0] + (w[1] - w[0]) * j as f64 / n as f64;
                let x1 = w[0] + (w[1] - w[0]) * (j + 1) as f64 / n as f64;
                if x1 > x0 {
                    out.push((x0, x1));
                }
            }
        }
        out
    };
    fn g(
        k: usize,
        s: f64,
        lo: f64,
        b: f64,
        nu: f64,
        e: &dyn Fn(f64, f64) -> f64,
        pieces: &dyn Fn(f64) -> Vec<(f64, f64)>,
    ) -> f64 {
        if k == 0 {
            return e(s, b);
        }
        let f = |x: f64| e(s, x) * g(k - 1, x, x, b, nu, e, pieces);
        nu * pieces(lo).iter().map(|&(x0, x1)| gk15(&f, x0, x1).0).sum::<f64>()
    }
    let e = |c: f64, d: f64| conj_evidence(times, c, d, alpha, beta);
    let prior = (-nu * (b - a)).exp();
    (0..=kmax)
        .map(|k| prior * g(k, data_start, a, b, nu, &e, &pieces))
        .collect()
}

/// Upper-tail p-value of a chi-square statistic over the given cells.
pub fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Merges tail cells until every expected count is at least `min`.
pub fn pool_cells(observed: &[f64], expected: &[f64], min: f64) -> (Vec<f64>, Vec<f64>) {
    let mut o = observed.to_vec();
    let mut e = expected.to_vec();
    while e.len() > 2 && *e.last().unwrap() < min {
        let lo = o.pop().unwrap();
        let le = e.pop().unwrap();
        *o.last_mut().unwrap() += lo;
        *e.last_mut().unwrap() += le;
    }
    (o, e)
}

fn kolmogorov_p(d: f64, n_eff: f64) -> f64 {
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        p += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    let n = x.len() as f64 * y.len() as f64 / (x.len() + y.len()) as f64;
    (d, kolmogorov_p(d, n))
}

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> (f64, f64) {
    let mut x = xs.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    (d, kolmogorov_p(d, n))
}
