//! Synthetic ARX series with known driver strengths.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::SeriesFrame;

pub const TARGET_NAME: &str = "y";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExoProcess {
    /// i.i.d. `N(0, std²)`
    Iid { std: f64 },
    /// `x_t = rho·x_{t-1} + std·ε_t`
    Ar1 { rho: f64, std: f64 },
}

impl ExoProcess {
    /// Stationary standard deviation of the process.
    pub fn process_std(&self) -> f64 {
        match *self {
            ExoProcess::Iid { std } => std,
            ExoProcess::Ar1 { rho, std } => std / (1.0 - rho * rho).sqrt(),
        }
    }
}

impl Default for ExoProcess {
    fn default() -> Self {
        ExoProcess::Iid { std: 1.0 }
    }
}

/// Adds `weight · tanh(gain · x_{exo, t-lag})` to the target recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearTerm {
    pub exo: usize,
    pub lag: usize,
    pub weight: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArxSpec {
    pub n_exo: usize,
    /// `exo_coefs[v][l]` multiplies `x_{v, t-1-l}`.
    pub exo_coefs: Vec<Vec<f64>>,
    /// `self_coefs[l]` multiplies `y_{t-1-l}`.
    #[serde(default)]
    pub self_coefs: Vec<f64>,
    pub noise_std: f64,
    /// One process per exogenous variable; empty means unit-variance i.i.d.
    #[serde(default)]
    pub exo_process: Vec<ExoProcess>,
    #[serde(default)]
    pub nonlinear: Vec<NonlinearTerm>,
    pub length: usize,
    pub seed: u64,
    /// Value of `y` before the first generated step.
    #[serde(default)]
    pub initial_y: f64,
}

impl ArxSpec {
    /// Lag-1 spec with unit-variance i.i.d. drivers.
    pub fn lag1(coefs: &[f64], self_coef: f64, noise_std: f64, length: usize, seed: u64) -> Self {
        Self {
            n_exo: coefs.len(),
            exo_coefs: coefs.iter().map(|&c| vec![c]).collect(),
            self_coefs: vec![self_coef],
            noise_std,
            exo_process: Vec::new(),
            nonlinear: Vec::new(),
            length,
            seed,
            initial_y: 0.0,
        }
    }

    pub fn process(&self, v: usize) -> ExoProcess {
        self.exo_process.get(v).copied().unwrap_or_default()
    }

    pub fn max_lag(&self) -> usize {
        let exo = self.exo_coefs.iter().map(Vec::len).max().unwrap_or(0);
        let nl = self.nonlinear.iter().map(|t| t.lag).max().unwrap_or(0);
        self.self_coefs.len().max(exo).max(nl).max(1)
    }

    pub fn burn_in(&self) -> usize {
        10 * self.max_lag()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_exo == 0 {
            return cfg("at least one exogenous variable is required".into());
        }
        if self.exo_coefs.len() != self.n_exo {
            return cfg(format!("{} coefficient rows for {} exogenous variables", self.exo_coefs.len(), self.n_exo));
        }
        if !self.exo_process.is_empty() && self.exo_process.len() != self.n_exo {
            return cfg(format!("{} process specs for {} exogenous variables", self.exo_process.len(), self.n_exo));
        }
        let all_finite = self
            .exo_coefs
            .iter()
            .flatten()
            .chain(&self.self_coefs)
            .chain([&self.noise_std, &self.initial_y])
            .all(|v| v.is_finite());
        if !all_finite || self.noise_std < 0.0 {
            return cfg("coefficients must be finite and noise_std non-negative".into());
        }
        for t in &self.nonlinear {
            if t.exo >= self.n_exo || t.lag == 0 || !t.weight.is_finite() || !t.gain.is_finite() {
                return cfg(format!("invalid nonlinear term {t:?}"));
            }
        }
        if self.length < 10 * self.max_lag() {
            return cfg(format!(
                "length {} is shorter than 10x the largest lag ({})",
                self.length,
                self.max_lag()
            ));
        }
        for v in 0..self.n_exo {
            match self.process(v) {
                ExoProcess::Iid { std } | ExoProcess::Ar1 { std, .. } if !(std >= 0.0 && std.is_finite()) => {
                    return cfg(format!("exogenous process {} has invalid std {std}", v + 1));
                }
                ExoProcess::Ar1 { rho, .. } if !(rho.abs() < 1.0) => {
                    return Err(Error::Unstable {
                        what: format!("exogenous AR(1) process x{}", v + 1),
                        magnitude: rho.abs(),
                    });
                }
                _ => {}
            }
        }
        let radius = spectral_radius(&self.self_coefs);
        if !(radius < 1.0) {
            return Err(Error::Unstable {
                what: "target autoregression".into(),
                magnitude: radius,
            });
        }
        Ok(())
    }
}

/// Largest root magnitude of `z^p − a_1 z^{p−1} − … − a_p`, i.e. the spectral
/// radius of the AR companion matrix (Durand–Kerner iteration).
pub fn spectral_radius(coefs: &[f64]) -> f64 {
    // trailing zero coefficients only add roots at the origin
    let p = coefs.iter().rposition(|&c| c != 0.0).map_or(0, |k| k + 1);
    match p {
        0 => return 0.0,
        1 => return coefs[0].abs(),
        _ => {}
    }
    let poly: Vec<f64> = std::iter::once(1.0).chain(coefs[..p].iter().map(|c| -c)).collect();
    let eval = |z: Complex64| poly.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let bound = 1.0 + coefs[..p].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex64::from_polar(0.4 * bound, 0.9);
    let mut roots: Vec<Complex64> = (0..p).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..p {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..p {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 {
            break;
        }
    }
    roots.iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Generates the frame `x1..xK, y` (target last) after discarding a burn-in
/// of ten times the largest lag. Drivers are drawn before the target so they
/// are independent of it.
pub fn generate(spec: &ArxSpec) -> Result<SeriesFrame> {
    spec.validate()?;
    let burn = spec.burn_in();
    let total = burn + spec.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut exo: Vec<Vec<f64>> = Vec::with_capacity(spec.n_exo);
    for v in 0..spec.n_exo {
        let series = match spec.process(v) {
            ExoProcess::Iid { std } => (0..total).map(|_| std * draw()).collect(),
            ExoProcess::Ar1 { rho, std } => {
                let mut s = Vec::with_capacity(total);
                let mut prev = std / (1.0 - rho * rho).sqrt() * draw();
                s.push(prev);
                for _ in 1..total {
                    prev = rho * prev + std * draw();
                    s.push(prev);
                }
                s
            }
        };
        exo.push(series);
    }

    let lagged = |s: &[f64], t: usize, lag: usize| if t >= lag { s[t - lag] } else { 0.0 };
    let mut y = Vec::with_capacity(total);
    for t in 0..total {
        let mut v = 0.0;
        for (l, a) in spec.self_coefs.iter().enumerate() {
            let past = if t > l { y[t - 1 - l] } else { spec.initial_y };
            v += a * past;
        }
        for (series, coefs) in exo.iter().zip(&spec.exo_coefs) {
            for (l, b) in coefs.iter().enumerate() {
                v += b * lagged(series, t, l + 1);
            }
        }
        for term in &spec.nonlinear {
            v += term.weight * (term.gain * lagged(&exo[term.exo], t, term.lag)).tanh();
        }
        v += spec.noise_std * draw();
        y.push(v);
    }

    let mut names: Vec<String> = (1..=spec.n_exo).map(|k| format!("x{k}")).collect();
    names.push(TARGET_NAME.to_string());
    let mut columns: Vec<Vec<f64>> = exo.into_iter().map(|s| s[burn..].to_vec()).collect();
    columns.push(y[burn..].to_vec());
    SeriesFrame::from_columns(names, columns, TARGET_NAME)
}

/// Exogenous indices (0-based) ordered by `Σ_lags |coef| · process std`,
/// descending, ties by index.
pub fn ground_truth_rank(spec: &ArxSpec) -> Vec<usize> {
    let scores = ground_truth_scores(spec);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn ground_truth_scores(spec: &ArxSpec) -> Vec<f64> {
    spec.exo_coefs
        .iter()
        .enumerate()
        .map(|(v, coefs)| coefs.iter().map(|c| c.abs()).sum::<f64>() * spec.process(v).process_std())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::granger::ols;
    use crate::linalg::DenseMatrix;

    #[test]
    fn zero_spec_is_identically_zero() {
        let spec = ArxSpec::lag1(&[0.0, 0.0], 0.0, 0.0, 100, 1);
        let f = generate(&spec).unwrap();
        assert!(f.target().iter().all(|&v| v == 0.0));
        assert_eq!(f.names(), &["x1", "x2", "y"]);
        assert_eq!(f.n_rows(), 100);
    }

    #[test]
    fn geometric_decay_from_initial_value() {
        let mut spec = ArxSpec::lag1(&[0.0], 0.5, 0.0, 50, 1);
        spec.initial_y = 1.0;
        let f = generate(&spec).unwrap();
        let bound = 0.5f64.powi(spec.burn_in() as i32);
        assert!(f.target().iter().all(|v| v.abs() <= bound));
        assert!(f.target()[0] > 0.0);
    }

    #[test]
    fn unstable_specs_rejected_with_magnitude() {
        let spec = ArxSpec::lag1(&[0.5], 1.2, 0.1, 100, 1);
        match generate(&spec) {
            Err(Error::Unstable { magnitude, .. }) => assert!((magnitude - 1.2).abs() < 1e-12),
            other => panic!("expected instability, got {other:?}"),
        }
        let mut ar = ArxSpec::lag1(&[0.5], 0.2, 0.1, 100, 1);
        ar.exo_process = vec![ExoProcess::Ar1 { rho: 1.0, std: 1.0 }];
        assert!(matches!(generate(&ar), Err(Error::Unstable { .. })));
        let short = ArxSpec::lag1(&[0.5], 0.2, 0.1, 9, 1);
        assert!(matches!(generate(&short), Err(Error::Config(_))));
    }

    #[test]
    fn spectral_radius_of_known_polynomials() {
        // z² − 1.2z + 0.35 = (z − 0.7)(z − 0.5)
        assert!((spectral_radius(&[1.2, -0.35]) - 0.7).abs() < 1e-10);
        // z² + 0.81 has roots ±0.9i
        assert!((spectral_radius(&[0.0, -0.81]) - 0.9).abs() < 1e-10);
        // z² − z − 0.5: largest root (1 + √3)/2
        assert!((spectral_radius(&[1.0, 0.5]) - (1.0 + 3f64.sqrt()) / 2.0).abs() < 1e-10);
        assert_eq!(spectral_radius(&[0.3, 0.0, 0.0]), 0.3);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = ArxSpec::lag1(&[0.9, 0.0, 0.3], 0.4, 0.3, 300, 11);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ArxSpec { seed: 12, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn ols_recovers_generating_coefficients() {
        let spec = ArxSpec::lag1(&[0.9, 0.0, 0.3], 0.4, 0.3, 2000, 3);
        let f = generate(&spec).unwrap();
        let n = f.n_rows() - 1;
        let y = f.target();
        let design = DenseMatrix::from_fn(n, 5, |r, c| match c {
            0 => 1.0,
            4 => y[r],
            c => f.column(c - 1)[r],
        });
        let resp = &y[1..];
        let fit = ols(&design, resp).unwrap();
        // standard errors from σ̂² (XᵀX)⁻¹ via the diagonal of the inverse Gram matrix
        let sigma2 = fit.rss / (n - 5) as f64;
        let gram = DenseMatrix::from_fn(5, 5, |i, j| (0..n).map(|r| design[(r, i)] * design[(r, j)]).sum());
        let inv = invert_spd(&gram);
        let truth = [0.0, 0.9, 0.0, 0.3, 0.4];
        for k in 0..5 {
            let se = (sigma2 * inv[(k, k)]).sqrt();
            assert!(
                (fit.coefficients[k] - truth[k]).abs() <= 3.0 * se,
                "coef {k}: {} vs {} (se {se})",
                fit.coefficients[k],
                truth[k]
            );
        }
    }

    fn invert_spd(a: &DenseMatrix) -> DenseMatrix {
        // Gauss-Jordan; test-only
        let n = a.rows();
        let mut m = a.clone();
        let mut inv = DenseMatrix::identity(n);
        for c in 0..n {
            let piv = m[(c, c)];
            for k in 0..n {
                m[(c, k)] /= piv;
                inv[(c, k)] /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = m[(r, c)];
                    for k in 0..n {
                        m[(r, k)] -= f * m[(c, k)];
                        inv[(r, k)] -= f * inv[(c, k)];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn ground_truth_rank_examples() {
        let spec = ArxSpec::lag1(&[0.9, 0.0, 0.3], 0.0, 0.1, 100, 1);
        assert_eq!(ground_truth_rank(&spec), vec![0, 2, 1]);
        let zero = ArxSpec::lag1(&[0.0, 0.0, 0.0], 0.0, 0.1, 100, 1);
        assert_eq!(ground_truth_rank(&zero), vec![0, 1, 2]);
        let mut scaled = ArxSpec::lag1(&[0.5, 0.9], 0.0, 0.1, 100, 1);
        scaled.exo_process = vec![ExoProcess::Iid { std: 2.0 }, ExoProcess::Iid { std: 1.0 }];
        let scores = ground_truth_scores(&scaled);
        assert!((scores[0] - 1.0).abs() < 1e-15 && (scores[1] - 0.9).abs() < 1e-15);
        assert_eq!(ground_truth_rank(&scaled), vec![0, 1]);
    }

    #[test]
    fn zero_coefficient_driver_is_uncorrelated_with_target() {
        let spec = ArxSpec::lag1(&[0.9, 0.0, 0.3], 0.5, 0.3, 4000, 21);
        let f = generate(&spec).unwrap();
        let len = f.n_rows();
        let x = f.column(1);
        let y = f.target();
        let stdz = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
            s.iter().map(|v| (v - m) / sd).collect::<Vec<_>>()
        };
        let (x, y) = (stdz(x), stdz(y));
        let bound = 4.0 / (len as f64).sqrt();
        for lag in 0..10 {
            let r: f64 = (lag..len).map(|t| x[t - lag] * y[t]).sum::<f64>() / len as f64;
            assert!(r.abs() <= bound, "lag {lag}: {r}");
        }
    }

    #[test]
    fn spec_deserializes_with_tagged_process() {
        let json = r#"{"n_exo":1,"exo_coefs":[[0.5]],"noise_std":0.1,"length":50,"seed":1,
                       "exo_process":[{"kind":"ar1","rho":0.5,"std":1.0}]}"#;
        let spec: ArxSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.process(0), ExoProcess::Ar1 { rho: 0.5, std: 1.0 });
        assert!((spec.process(0).process_std() - 1.0 / 0.75f64.sqrt()).abs() < 1e-15);
    }
}
