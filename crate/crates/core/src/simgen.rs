//! Simulation: random DAGs, interventional structural-equation data, and
//! additive measurement-error contamination at a target reliability ratio.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dag::{graph_from_coefs, DirectedGraph};
use crate::error::{CsbnError, Result};
use crate::model::{CoefMatrix, ErrorSpec};

/// Stream identifiers for [`derive_seed`].
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const DATA: u64 = 2;
    pub const NOISE: u64 = 3;
}

/// Independent sub-seed for `stream` (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// True coefficient matrix and the order used to generate data from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueNetwork {
    pub b_star: CoefMatrix,
    pub order: Vec<usize>,
}

impl TrueNetwork {
    /// Builds a network from coefficients, deriving a topological order.
    pub fn from_coefs(b_star: CoefMatrix) -> Result<Self> {
        let g = graph_from_coefs(&b_star, 0.0);
        let topo = crate::dag::kahn_eliminate(&g, &Default::default());
        if !topo.removed_edges.is_empty() {
            return Err(CsbnError::invalid("true coefficient matrix contains a cycle"));
        }
        Ok(TrueNetwork { b_star, order: topo.order })
    }

    pub fn graph(&self) -> DirectedGraph {
        graph_from_coefs(&self.b_star, 0.0)
    }

    pub fn p(&self) -> usize {
        self.b_star.p()
    }
}

/// Largest edge count achievable on p nodes with the parent cap.
pub fn max_edges(p: usize, max_parents: usize) -> usize {
    (0..p).map(|k| k.min(max_parents)).sum()
}

/// Random DAG: random topological order, `n_edges` forward pairs sampled
/// uniformly under the in-degree cap. The first ⌊n_edges/2⌋ sampled edges get
/// coefficient 0.5, the rest 1.0.
pub fn random_dag(p: usize, n_edges: usize, max_parents: usize, seed: u64) -> Result<TrueNetwork> {
    if p < 2 {
        return Err(CsbnError::invalid(format!("need p >= 2, got {p}")));
    }
    let cap = max_edges(p, max_parents);
    if n_edges > cap {
        return Err(CsbnError::invalid(format!(
            "{n_edges} edges cannot fit on {p} nodes with at most {max_parents} parents each (max {cap})"
        )));
    }
    let mut rng = rng(seed);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(p * (p - 1) / 2);
    for a in 0..p {
        for b in (a + 1)..p {
            pairs.push((order[a], order[b]));
        }
    }
    for _attempt in 0..1000 {
        pairs.shuffle(&mut rng);
        let mut indeg = vec![0usize; p];
        let mut chosen = Vec::with_capacity(n_edges);
        for &(i, j) in &pairs {
            if chosen.len() == n_edges {
                break;
            }
            if indeg[j] < max_parents {
                indeg[j] += 1;
                chosen.push((i, j));
            }
        }
        if chosen.len() == n_edges {
            let mut b = CoefMatrix::zeros(p);
            let half = n_edges / 2;
            for (k, &(i, j)) in chosen.iter().enumerate() {
                b.set(i, j, if k < half { 0.5 } else { 1.0 });
            }
            return Ok(TrueNetwork { b_star: b, order });
        }
    }
    Err(CsbnError::invalid(format!(
        "could not place {n_edges} edges under the parent cap {max_parents}"
    )))
}

/// Error-free data: p blocks of `n_per_node` rows; in block j node j is set by
/// intervention to N(0,1) and every other node follows its structural
/// equation with N(0,1) noise.
pub fn gen_data(net: &TrueNetwork, n_per_node: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<Option<usize>>)> {
    if n_per_node < 1 {
        return Err(CsbnError::invalid("n_per_node must be >= 1"));
    }
    let p = net.p();
    let n = p * n_per_node;
    let mut rng = rng(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut intervened = Vec::with_capacity(n);
    let parents: Vec<Vec<(usize, f64)>> = (0..p)
        .map(|k| {
            (0..p)
                .filter(|&i| i != k && net.b_star.get(i, k) != 0.0)
                .map(|i| (i, net.b_star.get(i, k)))
                .collect()
        })
        .collect();
    for j in 0..p {
        for r in (j * n_per_node)..((j + 1) * n_per_node) {
            intervened.push(Some(j));
            for &k in &net.order {
                let noise: f64 = rng.sample(StandardNormal);
                x[(r, k)] = if k == j {
                    noise
                } else {
                    parents[k].iter().map(|&(i, b)| x[(r, i)] * b).sum::<f64>() + noise
                };
            }
        }
    }
    Ok((x, intervened))
}

/// Σ_u family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Diagonal,
    Ar,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Diagonal => "diagonal",
            Structure::Ar => "ar",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = CsbnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" | "diag" => Ok(Structure::Diagonal),
            "ar" => Ok(Structure::Ar),
            other => Err(CsbnError::invalid(format!("unknown error structure '{other}'"))),
        }
    }
}

/// How the error variance is tied to the target reliability ratio τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibration {
    /// σ²_j = s²_j(1 − τ)/τ per column, so every node has reliability τ.
    #[default]
    PerNode,
    /// One σ²_u = v̄(1 − τ)/τ from the mean column variance v̄.
    Mean,
}

impl FromStr for Calibration {
    type Err = CsbnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-node" => Ok(Calibration::PerNode),
            "mean" => Ok(Calibration::Mean),
            other => Err(CsbnError::invalid(format!("unknown calibration '{other}'"))),
        }
    }
}

impl Calibration {
    pub fn as_str(self) -> &'static str {
        match self {
            Calibration::PerNode => "per-node",
            Calibration::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub structure: Structure,
    pub tau: f64,
    pub rho: f64,
    pub calibration: Calibration,
}

impl ContaminationSpec {
    pub fn new(structure: Structure, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(CsbnError::invalid(format!("tau must be in (0,1], got {tau}")));
        }
        Ok(ContaminationSpec {
            structure,
            tau,
            rho: 0.5,
            calibration: Calibration::default(),
        })
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = calibration;
        self
    }

    fn check(&self) -> Result<()> {
        ContaminationSpec::new(self.structure, self.tau)?;
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(CsbnError::invalid(format!("rho must be in (-1,1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Σ_u from per-node error variances: σ_j σ_k · V[j,k], V = I or ρ^|j−k|.
    pub fn sigma_u(&self, variances: &[f64]) -> DMatrix<f64> {
        let p = variances.len();
        let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        DMatrix::from_fn(p, p, |a, b| {
            let corr = match self.structure {
                Structure::Diagonal => (a == b) as u8 as f64,
                Structure::Ar => self.rho.powi((a as i32 - b as i32).abs()),
            };
            sd[a] * sd[b] * corr
        })
    }

    /// Error variance per column of `x` under this spec's calibration.
    pub fn error_variances(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let v = column_variances(x);
        let k = (1.0 - self.tau) / self.tau;
        match self.calibration {
            Calibration::PerNode => v.iter().map(|s| s * k).collect(),
            Calibration::Mean => {
                let vbar = v.iter().sum::<f64>() / v.len() as f64;
                vec![vbar * k; v.len()]
            }
        }
    }
}

/// Output of [`contaminate`].
#[derive(Debug, Clone)]
pub struct Contaminated {
    pub w: DMatrix<f64>,
    pub es: ErrorSpec,
    /// Error variance per node (the diagonal of Σ_u).
    pub error_variances: Vec<f64>,
    /// Var(X_j) / (Var(X_j) + σ²_j) per column.
    pub realized_tau: Vec<f64>,
}

/// Unbiased per-column sample variances.
pub fn column_variances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let m = c.mean();
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect()
}

/// W = X + U with rows of U i.i.d. N(0, Σ_u), Σ_u calibrated from `x`.
pub fn contaminate(x: &DMatrix<f64>, spec: &ContaminationSpec, seed: u64) -> Result<Contaminated> {
    spec.check()?;
    contaminate_with(x, spec, &spec.error_variances(x), seed)
}

/// As [`contaminate`] but with explicit per-node error variances.
pub fn contaminate_with(
    x: &DMatrix<f64>,
    spec: &ContaminationSpec,
    variances: &[f64],
    seed: u64,
) -> Result<Contaminated> {
    spec.check()?;
    let (n, p) = x.shape();
    if variances.len() != p {
        return Err(CsbnError::invalid(format!("{} error variances for {p} columns", variances.len())));
    }
    if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(CsbnError::invalid("error variances must be finite and >= 0"));
    }
    let sig = spec.sigma_u(variances);
    let es = ErrorSpec::new(sig.clone())?;
    let mut w = x.clone();
    let mut rng = rng(seed);
    // zero-variance nodes are dropped from the factorisation and stay error-free
    let live: Vec<usize> = (0..p).filter(|&k| variances[k] > 0.0).collect();
    if !live.is_empty() {
        let sub = crate::linalg::submatrix(&sig, &live, &live);
        let l = sub
            .cholesky()
            .ok_or_else(|| CsbnError::invalid("error covariance is not positive definite"))?
            .l();
        let z = DMatrix::from_fn(n, live.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = z * l.transpose();
        for (c, &k) in live.iter().enumerate() {
            for r in 0..n {
                w[(r, k)] += u[(r, c)];
            }
        }
    }
    let realized_tau = column_variances(x)
        .into_iter()
        .zip(variances)
        .map(|(v, s)| if v + s > 0.0 { v / (v + s) } else { 1.0 })
        .collect();
    Ok(Contaminated {
        w,
        es,
        error_variances: variances.to_vec(),
        realized_tau,
    })
}
