//! Median-quadrant count statistics.
//!
//! For every unordered pair of variables `(j, j')` we count the records that
//! lie at-or-above the sample medians of both variables. Medians are defined
//! through a lexicographic order on `(value, key)` pairs, where the keys are
//! standard-normal draws committed before any data access. The keys make
//! every within-column comparison strict, so exactly `half_n = ceil(n/2)`
//! records sit above each median regardless of ties, and substituting one
//! record changes each pair count by at most 1.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of unordered pairs for `p` variables.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}

/// Dense index of the pair `(j, jp)`, `j < jp`, in lexicographic pair order.
pub fn pair_index(j: usize, jp: usize, p: usize) -> usize {
    debug_assert!(j < jp && jp < p);
    j * p - j * (j + 1) / 2 + (jp - j - 1)
}

/// Iterate pairs `(j, jp)` with `j < jp` in lexicographic order.
pub fn pair_iter(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |j| (j + 1..p).map(move |jp| (j, jp)))
}

/// Marginal total: records at-or-above a median, `n/2` rounded up.
pub fn half_n(n: usize) -> usize {
    n.div_ceil(2)
}

/// An `n x p` matrix of observations, row-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    pub fn new(values: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if n < 2 || p < 2 {
            return Err(Error::InvalidParam(format!(
                "dataset needs n >= 2 and p >= 2, got n={n}, p={p}"
            )));
        }
        if values.len() != n * p {
            return Err(Error::Shape(format!(
                "expected {} values for {n}x{p}, got {}",
                n * p,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        Ok(Self { values, n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, j)).collect()
    }

    /// Read a dataset from CSV: a header row of column names, then `n` rows
    /// of `p` numeric fields. Returns the data and the column names.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<(Self, Vec<String>)> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let p = names.len();
        let mut values = Vec::new();
        let mut n = 0usize;
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != p {
                return Err(Error::Validation(format!(
                    "row {} has {} fields, expected {p}",
                    row_idx + 1,
                    record.len()
                )));
            }
            for (col_idx, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Validation(format!(
                        "non-numeric cell at row {}, column {} ({:?})",
                        row_idx + 1,
                        col_idx,
                        field
                    ))
                })?;
                values.push(v);
            }
            n += 1;
        }
        let data = Dataset::new(values, n, p)?;
        Ok((data, names))
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<(Self, Vec<String>)> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }
}

/// Pre-committed tie-break keys: an `n x p` matrix of standard-normal draws,
/// deterministic given the seed and independent of the data.
#[derive(Debug, Clone)]
pub struct TieKeyMatrix {
    keys: Vec<f64>,
    n: usize,
    p: usize,
    seed: u64,
    regenerations: u32,
}

impl TieKeyMatrix {
    /// Generate keys column by column. A column whose keys collide (possible
    /// only through finite precision) is redrawn from its own stream until
    /// all keys are distinct; redraws are counted.
    pub fn generate(n: usize, p: usize, seed: u64) -> Result<Self> {
        if n < 1 || p < 1 {
            return Err(Error::InvalidParam(format!(
                "tie keys need n >= 1 and p >= 1, got n={n}, p={p}"
            )));
        }
        let mut keys = vec![0.0f64; n * p];
        let mut regenerations = 0u32;
        for j in 0..p {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            loop {
                let col: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mut sorted = col.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if sorted.windows(2).all(|w| w[0] != w[1]) {
                    for (i, k) in col.into_iter().enumerate() {
                        keys[i * p + j] = k;
                    }
                    break;
                }
                regenerations += 1;
            }
        }
        Ok(Self {
            keys,
            n,
            p,
            seed,
            regenerations,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn key(&self, i: usize, j: usize) -> f64 {
        self.keys[i * self.p + j]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn regenerations(&self) -> u32 {
        self.regenerations
    }
}

fn check_shapes(data: &Dataset, keys: &TieKeyMatrix) -> Result<()> {
    if data.n() != keys.n() || data.p() != keys.p() {
        return Err(Error::Shape(format!(
            "data is {}x{} but keys are {}x{}",
            data.n(),
            data.p(),
            keys.n(),
            keys.p()
        )));
    }
    Ok(())
}

/// Indicator of rank among the top `half_n` records of column `j` under the
/// lexicographic order: value first, key second. Exactly `half_n` entries
/// are true.
pub fn above_median_indicators(
    data: &Dataset,
    keys: &TieKeyMatrix,
    j: usize,
) -> Result<Vec<bool>> {
    check_shapes(data, keys)?;
    if j >= data.p() {
        return Err(Error::Shape(format!("column {j} out of range for p={}", data.p())));
    }
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending by (value, key); keys are distinct, so the order is total.
    order.sort_by(|&a, &b| {
        let ka = (data.value(a, j), keys.key(a, j));
        let kb = (data.value(b, j), keys.key(b, j));
        kb.partial_cmp(&ka).unwrap()
    });
    let mut indicators = vec![false; n];
    for &i in order.iter().take(half_n(n)) {
        indicators[i] = true;
    }
    Ok(indicators)
}

/// The co-occurrence counts `t_jj'` for all pairs, with margins fixed at
/// `half_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CountSetRepr", into = "CountSetRepr")]
pub struct QuadrantCountSet {
    counts: Vec<u32>,
    n: usize,
    p: usize,
    half_n: usize,
}

impl QuadrantCountSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn half_n(&self) -> usize {
        self.half_n
    }

    pub fn count(&self, j: usize, jp: usize) -> u32 {
        self.counts[pair_index(j, jp, self.p)]
    }

    /// Counts in lexicographic pair order.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}

#[derive(Serialize, Deserialize)]
struct CountEntry {
    j: usize,
    jp: usize,
    t: u32,
}

#[derive(Serialize, Deserialize)]
struct CountSetRepr {
    n: usize,
    p: usize,
    half_n: usize,
    counts: Vec<CountEntry>,
}

impl From<QuadrantCountSet> for CountSetRepr {
    fn from(set: QuadrantCountSet) -> Self {
        let counts = pair_iter(set.p)
            .map(|(j, jp)| CountEntry {
                j,
                jp,
                t: set.count(j, jp),
            })
            .collect();
        CountSetRepr {
            n: set.n,
            p: set.p,
            half_n: set.half_n,
            counts,
        }
    }
}

impl TryFrom<CountSetRepr> for QuadrantCountSet {
    type Error = Error;

    fn try_from(repr: CountSetRepr) -> Result<Self> {
        if repr.p < 2 || repr.half_n != half_n(repr.n) {
            return Err(Error::Validation("inconsistent count-set metadata".into()));
        }
        let mut counts = vec![None; pair_count(repr.p)];
        for e in &repr.counts {
            if e.j >= e.jp || e.jp >= repr.p {
                return Err(Error::Validation(format!("bad pair ({}, {})", e.j, e.jp)));
            }
            if e.t as usize > repr.half_n {
                return Err(Error::Validation(format!(
                    "count {} exceeds half_n {}",
                    e.t, repr.half_n
                )));
            }
            counts[pair_index(e.j, e.jp, repr.p)] = Some(e.t);
        }
        let counts: Option<Vec<u32>> = counts.into_iter().collect();
        match counts {
            Some(counts) => Ok(QuadrantCountSet {
                counts,
                n: repr.n,
                p: repr.p,
                half_n: repr.half_n,
            }),
            None => Err(Error::Validation("missing pair entries in count set".into())),
        }
    }
}

/// Compute all pairwise quadrant counts.
pub fn quadrant_counts(data: &Dataset, keys: &TieKeyMatrix) -> Result<QuadrantCountSet> {
    check_shapes(data, keys)?;
    let p = data.p();
    let indicators: Vec<Vec<bool>> = (0..p)
        .map(|j| above_median_indicators(data, keys, j))
        .collect::<Result<_>>()?;
    let counts = pair_iter(p)
        .map(|(j, jp)| {
            indicators[j]
                .iter()
                .zip(&indicators[jp])
                .filter(|(a, b)| **a && **b)
                .count() as u32
        })
        .collect();
    Ok(QuadrantCountSet {
        counts,
        n: data.n(),
        p,
        half_n: half_n(data.n()),
    })
}

/// l1-sensitivity accounting: 1 per pair count, `p(p-1)/2` for the full
/// collection under sequential composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sensitivity {
    pub per_pair: u64,
    pub total: u64,
}

pub fn sensitivity(p: usize) -> Result<Sensitivity> {
    if p < 2 {
        return Err(Error::InvalidParam(format!("sensitivity needs p >= 2, got {p}")));
    }
    Ok(Sensitivity {
        per_pair: 1,
        total: pair_count(p) as u64,
    })
}
