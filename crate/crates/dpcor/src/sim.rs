//! Synthetic Gaussian-copula data generation for the simulation studies,
//! plus small-instance oracles used by the test suites.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Gamma, Normal, StudentsT};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::estimate::EstimatorKind;
use crate::mechanism::Mechanism;
use crate::quadrant::Dataset;

/// A marginal distribution family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MarginalSpec {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    Beta { a: f64, b: f64 },
    StudentT { df: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl MarginalSpec {
    /// Parse a `family(params)` string: `normal(0,1)`, `gamma(2,1)`,
    /// `exponential(1)`, `beta(2,5)`, `student_t(5)`, or
    /// `discrete(1:0.3,2:0.3,3:0.4)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Config(format!("marginal {s:?} missing '('")))?;
        if !s.ends_with(')') {
            return Err(Error::Config(format!("marginal {s:?} missing ')'")));
        }
        let family = s[..open].trim().to_ascii_lowercase();
        let body = &s[open + 1..s.len() - 1];
        let args: Vec<&str> = if body.trim().is_empty() {
            vec![]
        } else {
            body.split(',').map(|a| a.trim()).collect()
        };
        let num = |idx: usize| -> Result<f64> {
            args.get(idx)
                .ok_or_else(|| Error::Config(format!("marginal {s:?}: missing argument {idx}")))?
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("marginal {s:?}: bad number")))
        };
        let spec = match family.as_str() {
            "normal" | "n" => MarginalSpec::Normal {
                mean: num(0)?,
                sd: num(1)?,
            },
            "gamma" => MarginalSpec::Gamma {
                shape: num(0)?,
                rate: num(1)?,
            },
            "exponential" | "exp" => MarginalSpec::Exponential { rate: num(0)? },
            "beta" => MarginalSpec::Beta {
                a: num(0)?,
                b: num(1)?,
            },
            "student_t" | "t" => MarginalSpec::StudentT { df: num(0)? },
            "discrete" => {
                let mut pairs: Vec<(f64, f64)> = Vec::new();
                for a in &args {
                    let (v, pr) = a.split_once(':').ok_or_else(|| {
                        Error::Config(format!("discrete atom {a:?} must be value:prob"))
                    })?;
                    pairs.push((
                        v.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("bad discrete value {v:?}")))?,
                        pr.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("bad discrete prob {pr:?}")))?,
                    ));
                }
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                MarginalSpec::Discrete {
                    values: pairs.iter().map(|p| p.0).collect(),
                    probs: pairs.iter().map(|p| p.1).collect(),
                }
            }
            other => {
                return Err(Error::Config(format!("unknown marginal family {other:?}")))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            MarginalSpec::Normal { sd, .. } => *sd > 0.0,
            MarginalSpec::Gamma { shape, rate } => *shape > 0.0 && *rate > 0.0,
            MarginalSpec::Exponential { rate } => *rate > 0.0,
            MarginalSpec::Beta { a, b } => *a > 0.0 && *b > 0.0,
            MarginalSpec::StudentT { df } => *df > 0.0,
            MarginalSpec::Discrete { values, probs } => {
                !values.is_empty()
                    && values.len() == probs.len()
                    && probs.iter().all(|p| *p > 0.0)
                    && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid marginal parameters: {self}")))
        }
    }

    /// Quantile function; for the discrete family this is the generalized
    /// inverse `inf{x : F(x) >= u}`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
        match self {
            MarginalSpec::Normal { mean, sd } => {
                Normal::new(*mean, *sd).unwrap().inverse_cdf(u)
            }
            MarginalSpec::Gamma { shape, rate } => {
                Gamma::new(*shape, *rate).unwrap().inverse_cdf(u)
            }
            MarginalSpec::Exponential { rate } => -(-u).ln_1p() / rate,
            MarginalSpec::Beta { a, b } => Beta::new(*a, *b).unwrap().inverse_cdf(u),
            MarginalSpec::StudentT { df } => {
                StudentsT::new(0.0, 1.0, *df).unwrap().inverse_cdf(u)
            }
            MarginalSpec::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if acc >= u {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }

    /// CDF, used by distributional tests.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalSpec::Normal { mean, sd } => Normal::new(*mean, *sd).unwrap().cdf(x),
            MarginalSpec::Gamma { shape, rate } => Gamma::new(*shape, *rate).unwrap().cdf(x),
            MarginalSpec::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            MarginalSpec::Beta { a, b } => Beta::new(*a, *b).unwrap().cdf(x),
            MarginalSpec::StudentT { df } => StudentsT::new(0.0, 1.0, *df).unwrap().cdf(x),
            MarginalSpec::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .take_while(|(v, _)| **v <= x)
                .map(|(_, p)| p)
                .sum(),
        }
    }
}

impl std::fmt::Display for MarginalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarginalSpec::Normal { mean, sd } => write!(f, "normal({mean},{sd})"),
            MarginalSpec::Gamma { shape, rate } => write!(f, "gamma({shape},{rate})"),
            MarginalSpec::Exponential { rate } => write!(f, "exponential({rate})"),
            MarginalSpec::Beta { a, b } => write!(f, "beta({a},{b})"),
            MarginalSpec::StudentT { df } => write!(f, "student_t({df})"),
            MarginalSpec::Discrete { values, probs } => {
                write!(f, "discrete(")?;
                for (idx, (v, p)) in values.iter().zip(probs).enumerate() {
                    if idx > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}:{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl TryFrom<String> for MarginalSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        MarginalSpec::parse(&s)
    }
}

impl From<MarginalSpec> for String {
    fn from(m: MarginalSpec) -> String {
        m.to_string()
    }
}

/// A truth correlation matrix from the scaled Wishart with `p + 1` degrees
/// of freedom (Bartlett construction): the `p = 2` off-diagonal is uniform
/// on (-1, 1).
pub fn random_correlation(p: usize, rng: &mut impl Rng) -> Result<CorrelationMatrix> {
    if p < 2 {
        return Err(Error::InvalidParam(format!("need p >= 2, got {p}")));
    }
    let df = (p + 1) as f64;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| {
            Error::InvalidParam(format!("chi-squared with df {} invalid: {e}", df - i as f64))
        })?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let w = &a * a.transpose();
    let mut r = DMatrix::identity(p, p);
    for i in 0..p {
        for j in 0..i {
            let v = w[(i, j)] / (w[(i, i)] * w[(j, j)]).sqrt();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    CorrelationMatrix::new(r)
}

/// Lower Cholesky factor with an eigenvalue-floor retry for semidefinite
/// inputs. Returns the factor and whether the floor was applied.
fn cholesky_with_floor(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if let Some(chol) = nalgebra::Cholesky::new(m.clone()) {
        return Ok((chol.l(), false));
    }
    let eig = m.clone().symmetric_eigen();
    let floored = eig.eigenvalues.map(|e| e.max(1e-12));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    match nalgebra::Cholesky::new(rebuilt) {
        Some(chol) => Ok((chol.l(), true)),
        None => Err(Error::Numerical(
            "Cholesky failed even after eigenvalue flooring".into(),
        )),
    }
}

/// Draw `n` records from the Gaussian copula with truth matrix `r` and the
/// given marginals.
pub fn sample_copula(
    r: &CorrelationMatrix,
    marginals: &[MarginalSpec],
    n: usize,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    sample_copula_flagged(r, marginals, n, rng).map(|(d, _)| d)
}

/// As `sample_copula`, also reporting whether the eigenvalue-floor fallback
/// fired while factoring the truth matrix.
pub fn sample_copula_flagged(
    r: &CorrelationMatrix,
    marginals: &[MarginalSpec],
    n: usize,
    rng: &mut impl Rng,
) -> Result<(Dataset, bool)> {
    let p = r.p();
    if marginals.len() != p {
        return Err(Error::Shape(format!(
            "{} marginals for p={p} variables",
            marginals.len()
        )));
    }
    let (l, jittered) = cholesky_with_floor(r.matrix())?;
    let phi = Normal::new(0.0, 1.0).unwrap();
    let mut values = vec![0.0f64; n * p];
    let mut xi = vec![0.0f64; p];
    for i in 0..n {
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        for j in 0..p {
            let z: f64 = (0..=j).map(|c| l[(j, c)] * xi[c]).sum();
            values[i * p + j] = marginals[j].quantile(phi.cdf(z));
        }
    }
    Ok((Dataset::new(values, n, p)?, jittered))
}

/// Exact PMF of the quadrant count by direct normalization in linear
/// space — the oracle for the log-space evaluation. Limited to small
/// `half_n` where the products stay well inside f64 range.
pub fn brute_force_count_distribution(half_n: usize, r: f64) -> Result<Vec<f64>> {
    if half_n > 20 {
        return Err(Error::InvalidParam(format!(
            "brute-force PMF limited to half_n <= 20, got {half_n}"
        )));
    }
    if r.abs() >= 1.0 {
        return Err(Error::InvalidParam(format!("need |r| < 1, got {r}")));
    }
    // Pascal's triangle: exact binomials, no gamma functions.
    let mut binom = vec![1.0f64; half_n + 1];
    for t in 1..=half_n {
        binom[t] = binom[t - 1] * (half_n - t + 1) as f64 / t as f64;
    }
    let base = (std::f64::consts::PI + 2.0 * r.asin()) / (std::f64::consts::PI - 2.0 * r.asin());
    let terms: Vec<f64> = (0..=half_n)
        .map(|t| binom[t] * binom[t] * base.powi(2 * t as i32))
        .collect();
    let total: f64 = terms.iter().sum();
    Ok(terms.into_iter().map(|t| t / total).collect())
}

/// One replicated-experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub p: usize,
    pub n: usize,
    pub runs: usize,
    pub epsilon_total: f64,
    pub mechanism: Mechanism,
    pub estimator: EstimatorKind,
    pub marginals: Vec<MarginalSpec>,
    pub master_seed: u64,
    pub alpha: f64,
    pub samples: usize,
    pub burn_in: usize,
    pub grid_size: usize,
    pub bin_width: f64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config(format!("scenario needs p >= 2, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("scenario needs n >= 2, got {}", self.n)));
        }
        if self.runs < 1 {
            return Err(Error::Config("scenario needs runs >= 1".into()));
        }
        if self.marginals.len() != self.p {
            return Err(Error::Config(format!(
                "scenario has {} marginals for p={}",
                self.marginals.len(),
                self.p
            )));
        }
        for m in &self.marginals {
            m.validate()?;
        }
        if self.epsilon_total.is_nan() || self.epsilon_total <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
