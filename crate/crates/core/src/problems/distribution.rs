//! Input distributions `p_x`.

use std::io::Read;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::acquisition::{normal_cdf, CandidateSet};
use crate::error::{Error, Result};
use crate::optim::Bounds;

/// Half-width, in standard deviations, of the box used for Gaussian designs.
pub const GAUSSIAN_BOX: f64 = 4.0;

/// Upper limit on the number of points of a tensor grid.
pub const GRID_LIMIT: u64 = 10_000_000;

fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// One-dimensional normal restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        let t = Self { mean, sd, lo, hi };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean.is_finite() && self.sd > 0.0 && self.sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad normal parameters {self:?}")));
        }
        if !(self.lo < self.hi) {
            return Err(Error::InvalidArgument(format!("truncation needs lo < hi, got {self:?}")));
        }
        if self.mass() <= 0.0 {
            return Err(Error::InvalidArgument(format!("truncation interval has no mass: {self:?}")));
        }
        Ok(())
    }

    fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    fn mass(&self) -> f64 {
        normal_cdf(self.z(self.hi)) - normal_cdf(self.z(self.lo))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        (normal_cdf(self.z(x)) - normal_cdf(self.z(self.lo))) / self.mass()
    }

    /// Inverse CDF. Intervals in the upper tail are mirrored so the quantile
    /// is taken where the normal CDF is small and accurate.
    pub fn quantile(&self, u: f64) -> f64 {
        let (a, b) = (self.z(self.lo), self.z(self.hi));
        let z = if a > 0.0 {
            let (pa, pb) = (normal_cdf(-b), normal_cdf(-a));
            -normal_quantile(pb - u * (pb - pa))
        } else {
            let (pa, pb) = (normal_cdf(a), normal_cdf(b));
            normal_quantile(pa + u * (pb - pa))
        };
        (self.mean + self.sd * z).clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution {
    /// `N(0, I)` in `dim` dimensions.
    StandardNormal { dim: usize },
    /// Independent truncated normals, one per dimension.
    TruncatedNormal(Vec<TruncatedNormal>),
    /// Weighted atoms; weights sum to one.
    Empirical { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl InputDistribution {
    pub fn standard_normal(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self::StandardNormal { dim })
    }

    pub fn truncated(dims: Vec<TruncatedNormal>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        for t in &dims {
            t.validate()?;
        }
        Ok(Self::TruncatedNormal(dims))
    }

    pub fn empirical(atoms: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        if atoms.is_empty() || atoms[0].is_empty() {
            return Err(Error::InvalidArgument("empirical distribution needs at least one atom".into()));
        }
        let d = atoms[0].len();
        if atoms.iter().any(|a| a.len() != d || a.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("atoms must be finite and of equal dimension".into()));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; atoms.len()]);
        if weights.len() != atoms.len() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be finite, nonnegative, one per atom".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::Empirical { atoms, weights })
    }

    /// CSV with header `x1,...,xd` and an optional trailing `weight` column.
    /// Error rows are file line numbers (the header is line 1).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Ingestion { row: 1, reason: e.to_string() })?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        let weighted = names.last() == Some(&"weight");
        let d = names.len() - usize::from(weighted);
        if d == 0 {
            return Err(Error::Ingestion { row: 1, reason: "no x columns".into() });
        }
        for (i, n) in names[..d].iter().enumerate() {
            if *n != format!("x{}", i + 1) {
                return Err(Error::Ingestion {
                    row: 1,
                    reason: format!("expected column `x{}`, found `{n}`", i + 1),
                });
            }
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Ingestion { row, reason: e.to_string() })?;
            let vals = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Ingestion { row, reason: format!("`{f}` is not a finite number") })
                })
                .collect::<Result<Vec<f64>>>()?;
            if weighted {
                let w = vals[d];
                if w < 0.0 {
                    return Err(Error::Ingestion { row, reason: format!("negative weight {w}") });
                }
                weights.push(w);
            }
            atoms.push(vals[..d].to_vec());
        }
        if atoms.is_empty() {
            return Err(Error::Ingestion { row: 2, reason: "no data rows".into() });
        }
        if weighted && !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::Ingestion { row: 2, reason: "weights sum to zero".into() });
        }
        Self::empirical(atoms, weighted.then_some(weights))
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::StandardNormal { dim } => *dim,
            Self::TruncatedNormal(t) => t.len(),
            Self::Empirical { atoms, .. } => atoms[0].len(),
        }
    }

    /// Box for initial designs: `+-4` for the standard normal, the truncation
    /// box, or the hull of the atoms.
    pub fn bounding_box(&self) -> Bounds {
        match self {
            Self::StandardNormal { dim } => Bounds::new(vec![-GAUSSIAN_BOX; *dim], vec![GAUSSIAN_BOX; *dim]),
            Self::TruncatedNormal(t) => Bounds::new(t.iter().map(|t| t.lo).collect(), t.iter().map(|t| t.hi).collect()),
            Self::Empirical { atoms, .. } => {
                let d = atoms[0].len();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for a in atoms {
                    for j in 0..d {
                        lo[j] = lo[j].min(a[j]);
                        hi[j] = hi[j].max(a[j]);
                    }
                }
                Bounds::new(lo, hi)
            }
        }
    }

    /// `n` seed-deterministic draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(match self {
            Self::StandardNormal { dim } => (0..n)
                .map(|_| (0..*dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect(),
            Self::TruncatedNormal(t) => (0..n)
                .map(|_| t.iter().map(|t| t.quantile(rng.random::<f64>())).collect())
                .collect(),
            Self::Empirical { atoms, weights } => {
                let idx = WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                (0..n).map(|_| atoms[idx.sample(rng)].clone()).collect()
            }
        })
    }

    /// Probability of `[lo, hi]` along dimension `j` (independent variants only).
    fn interval_mass(&self, j: usize, lo: f64, hi: f64) -> f64 {
        match self {
            Self::StandardNormal { .. } => (normal_cdf(hi) - normal_cdf(lo)).max(0.0),
            Self::TruncatedNormal(t) => (t[j].cdf(hi) - t[j].cdf(lo)).max(0.0),
            Self::Empirical { .. } => unreachable!("empirical distributions have no product structure"),
        }
    }

    /// Tensor grid over `domain`, `per_dim` cells per axis.
    ///
    /// Nodes are cell midpoints weighted by the cell's probability mass;
    /// empty cells are dropped. Empirical distributions return their atoms.
    pub fn quadrature(&self, domain: &Bounds, per_dim: usize) -> Result<QuadratureGrid> {
        QuadratureGrid::new(self, domain, per_dim)
    }
}

/// Product-form quadrature of `p_x` over a box, evaluated lazily.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
    atoms: Option<(Vec<Vec<f64>>, Vec<f64>)>,
    len: u64,
}

impl QuadratureGrid {
    fn new(dist: &InputDistribution, domain: &Bounds, per_dim: usize) -> Result<Self> {
        crate::error::check_dim(dist.dim(), domain.dim())?;
        if let InputDistribution::Empirical { atoms, weights } = dist {
            return Ok(Self {
                nodes: vec![],
                masses: vec![],
                len: atoms.len() as u64,
                atoms: Some((atoms.clone(), weights.clone())),
            });
        }
        if per_dim == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        let requested = (per_dim as u64).checked_pow(dist.dim() as u32).unwrap_or(u64::MAX);
        if requested > GRID_LIMIT {
            return Err(Error::ResolutionGuard { requested, limit: GRID_LIMIT });
        }
        let mut nodes = Vec::new();
        let mut masses = Vec::new();
        for j in 0..dist.dim() {
            let h = domain.width(j) / per_dim as f64;
            let mut nj = Vec::with_capacity(per_dim);
            let mut mj = Vec::with_capacity(per_dim);
            for k in 0..per_dim {
                let lo = domain.lower[j] + k as f64 * h;
                let hi = if k + 1 == per_dim { domain.upper[j] } else { lo + h };
                nj.push(0.5 * (lo + hi));
                mj.push(dist.interval_mass(j, lo, hi));
            }
            nodes.push(nj);
            masses.push(mj);
        }
        Ok(Self {
            nodes,
            masses,
            atoms: None,
            len: requested,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Node `k` and its unnormalized weight.
    pub fn node(&self, k: u64) -> (Vec<f64>, f64) {
        if let Some((a, w)) = &self.atoms {
            return (a[k as usize].clone(), w[k as usize]);
        }
        let mut rest = k;
        let mut x = Vec::with_capacity(self.nodes.len());
        let mut w = 1.0;
        for (nj, mj) in self.nodes.iter().zip(&self.masses) {
            let n = nj.len() as u64;
            let i = (rest % n) as usize;
            rest /= n;
            x.push(nj[i]);
            w *= mj[i];
        }
        (x, w)
    }

    /// Total weight captured by the grid.
    pub fn total_weight(&self) -> f64 {
        if let Some((_, w)) = &self.atoms {
            return w.iter().sum();
        }
        self.masses.iter().map(|m| m.iter().sum::<f64>()).product()
    }

    /// Materialize as a candidate set, dropping zero-weight nodes.
    pub fn to_candidates(&self) -> Result<CandidateSet> {
        let (points, weights): (Vec<_>, Vec<_>) = (0..self.len).map(|k| self.node(k)).filter(|(_, w)| *w > 0.0).unzip();
        CandidateSet::weighted(points, weights)
    }
}
