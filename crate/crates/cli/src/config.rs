//! Run configuration: a single JSON document, every key optional, unknown keys rejected.

use std::path::Path;

use hyperlat::latenum::{search_strategies, EnumOptions, NODE_BUDGET_ENV};
use hyperlat::numberfield::FieldDesc;
use hyperlat::quaternion::AlgebraDesc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldCfg {
    #[serde(rename = "D")]
    pub d: i64,
}

impl Default for FieldCfg {
    fn default() -> Self {
        Self { d: 17 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgebraCfg {
    pub u: i64,
    pub v: i64,
    pub places: Vec<f64>,
}

impl Default for AlgebraCfg {
    fn default() -> Self {
        Self {
            u: 3,
            v: 5,
            places: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CongruenceCfg {
    pub q: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnumerationCfg {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    pub node_budget: u64,
    pub strategy: String,
}

impl Default for EnumerationCfg {
    fn default() -> Self {
        Self {
            r1: 2.0,
            r2: 2.0,
            node_budget: 3_000_000_000,
            strategy: "norm-solve".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiophantineCfg {
    pub eps_list: Vec<f64>,
    /// `[[x0, x1], [y0, y1]]` in half-plane coordinates.
    pub window: [[f64; 2]; 2],
    pub seed: u64,
    pub pairs: usize,
    pub r_max: f64,
    pub source: String,
    /// Single-search inputs for `approx`.
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub eps: f64,
    /// Optional acceptance band for the pooled exponent.
    pub zeta_band: Option<[f64; 2]>,
}

impl Default for DiophantineCfg {
    fn default() -> Self {
        Self {
            eps_list: (1..=5).map(|k| 0.5f64.powi(k)).collect(),
            window: [[-1.0, 1.0], [0.5, 2.0]],
            seed: 2024,
            pairs: 20,
            r_max: 20.0,
            source: "targeted".into(),
            x: [0.0, 1.0],
            y: [0.5, 1.0],
            eps: 0.05,
            zeta_band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralGrid {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self {
            t: (0..=20).map(|i| 0.25 * i as f64).collect(),
            tau: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            sigma: hyperlat::spectral::SIGMA_LINES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralCfg {
    pub delta_prime: f64,
    pub grid: SpectralGrid,
    pub small_scales: Vec<f64>,
    pub large_scales: Vec<f64>,
    pub decay_n: Vec<i32>,
    /// Scales and point count for the Cartan/Iwasawa comparison.
    pub iwasawa_scales: Vec<f64>,
    pub iwasawa_points: usize,
}

impl Default for SpectralCfg {
    fn default() -> Self {
        Self {
            delta_prime: 0.1,
            grid: SpectralGrid::default(),
            small_scales: hyperlat::spectral::SMALL_SCALES.to_vec(),
            large_scales: hyperlat::spectral::LARGE_SCALES.to_vec(),
            decay_n: vec![2, 4],
            iwasawa_scales: vec![1.0, 0.3, 0.1],
            iwasawa_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceCfg {
    #[serde(rename = "N")]
    pub n: u32,
    pub ell: usize,
    pub k: usize,
    pub dims: Vec<usize>,
    pub seed: u64,
    #[serde(rename = "R_list")]
    pub r_list: Vec<f64>,
    pub t_max: f64,
    pub gap: f64,
    pub tempered_intensity: f64,
    pub comp_intensity: f64,
    pub levels: usize,
}

impl Default for TraceCfg {
    fn default() -> Self {
        let d = hyperlat::tracesim::SynthConfig::desk(2024);
        Self {
            n: 4,
            ell: 2,
            k: 1,
            dims: d.dims,
            seed: d.seed,
            r_list: vec![4.0, 6.0, 8.0, 10.0],
            t_max: d.t_max,
            gap: d.gap,
            tempered_intensity: d.tempered_intensity,
            comp_intensity: d.comp_intensity,
            levels: d.levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumesCfg {
    /// Split shape: approximate on the first `k` of the factors with these dimensions.
    pub k: usize,
    pub dims: Vec<usize>,
    #[serde(rename = "R_list")]
    pub r_list: Vec<f64>,
    /// Radii for the single-ball volume table.
    pub radii: Vec<f64>,
}

impl Default for VolumesCfg {
    fn default() -> Self {
        Self {
            k: 1,
            dims: vec![2, 2],
            r_list: vec![2.0 * std::f64::consts::LN_2, 2.0, 4.0, 6.0, 8.0, 10.0],
            radii: vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZarembaCfg {
    pub seed: u64,
    /// Instances in dimensions 1, 2, 3.
    pub counts: Vec<usize>,
}

impl Default for ZarembaCfg {
    fn default() -> Self {
        Self {
            seed: 2024,
            counts: vec![100, 20, 20],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub field: FieldCfg,
    pub algebra: AlgebraCfg,
    pub congruence: CongruenceCfg,
    pub enumeration: EnumerationCfg,
    pub diophantine: DiophantineCfg,
    pub spectral: SpectralCfg,
    pub trace: TraceCfg,
    pub volumes: VolumesCfg,
    pub zaremba: ZarembaCfg,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite_nonneg(name: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be finite and non-negative, got {v}")))
    }
}

fn positive_list(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        Err(bad(format!("{name} must be a non-empty list of positive numbers")))
    } else {
        Ok(())
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Replace every seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.diophantine.seed = seed;
        self.trace.seed = seed;
        self.zaremba.seed = seed;
        self
    }

    pub fn algebra(&self) -> Result<AlgebraDesc, CliError> {
        let f = FieldDesc::new(self.field.d).map_err(|e| bad(format!("field.D: {e}")))?;
        AlgebraDesc::new(f, self.algebra.u, self.algebra.v, &self.algebra.places).map_err(|e| bad(format!("algebra: {e}")))
    }

    /// Enumeration options; the environment variable overrides the configured budget.
    pub fn enum_options(&self) -> Result<EnumOptions, CliError> {
        let strategy = search_strategies()
            .get(&self.enumeration.strategy)
            .map_err(|e| bad(format!("enumeration.strategy: {e}")))?
            .name();
        let node_budget = match std::env::var(NODE_BUDGET_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| bad(format!("{NODE_BUDGET_ENV}={v} is not an integer")))?,
            Err(_) => self.enumeration.node_budget,
        };
        Ok(EnumOptions {
            node_budget,
            congruence: self.congruence.q,
            strategy,
            ..EnumOptions::default()
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.algebra()?;
        self.enum_options()?;
        if self.congruence.q == Some(0) {
            return Err(bad("congruence.q must be positive"));
        }
        finite_nonneg("enumeration.R1", self.enumeration.r1)?;
        finite_nonneg("enumeration.R2", self.enumeration.r2)?;

        let d = &self.diophantine;
        positive_list("diophantine.eps_list", &d.eps_list)?;
        if d.eps_list.len() < 3 || d.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(bad("diophantine.eps_list needs at least 3 strictly decreasing values"));
        }
        let [[x0, x1], [y0, y1]] = d.window;
        if !(x0 < x1 && 0.0 < y0 && y0 < y1) || [x0, x1, y1].iter().any(|v| !v.is_finite()) {
            return Err(bad("diophantine.window must be [[x0, x1], [y0, y1]] with x0 < x1 and 0 < y0 < y1"));
        }
        if d.pairs == 0 {
            return Err(bad("diophantine.pairs must be positive"));
        }
        finite_nonneg("diophantine.r_max", d.r_max)?;
        if !["targeted", "planted", "cached"].contains(&d.source.as_str()) {
            return Err(bad(format!("diophantine.source must be targeted, planted or cached, got {:?}", d.source)));
        }
        if !(d.x[1] > 0.0 && d.y[1] > 0.0) {
            return Err(bad("diophantine.x and diophantine.y need a positive imaginary part"));
        }
        positive_list("diophantine.eps", &[d.eps])?;
        if let Some([lo, hi]) = d.zeta_band {
            if !(lo <= hi) {
                return Err(bad("diophantine.zeta_band must be [lo, hi] with lo <= hi"));
            }
        }

        let s = &self.spectral;
        if !(s.delta_prime > 0.0 && s.delta_prime < 1.0) {
            return Err(bad("spectral.delta_prime must lie in (0, 1)"));
        }
        if s.grid.t.is_empty() || s.grid.t.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(bad("spectral.grid.t must be a non-empty list of non-negative numbers"));
        }
        if s.grid.tau.is_empty() || s.grid.tau.iter().any(|t| !t.is_finite()) {
            return Err(bad("spectral.grid.tau must be a non-empty list of finite numbers"));
        }
        if s.grid.sigma.is_empty() || s.grid.sigma.iter().any(|v| !(0.0..=0.5).contains(v)) {
            return Err(bad("spectral.grid.sigma values must lie in [0, 1/2]"));
        }
        positive_list("spectral.small_scales", &s.small_scales)?;
        positive_list("spectral.large_scales", &s.large_scales)?;
        if s.large_scales.iter().any(|r| *r < 1.0) {
            return Err(bad("spectral.large_scales must be at least 1"));
        }
        if s.decay_n.is_empty() || s.decay_n.iter().any(|n| *n < 0) {
            return Err(bad("spectral.decay_n must be non-empty and non-negative"));
        }
        positive_list("spectral.iwasawa_scales", &s.iwasawa_scales)?;
        if s.iwasawa_scales.iter().any(|r| *r > 1.0) || s.iwasawa_points == 0 {
            return Err(bad("spectral.iwasawa_scales must lie in (0, 1] and iwasawa_points be positive"));
        }

        let t = &self.trace;
        if t.n < 4 {
            return Err(bad(format!("trace.N must be at least 4, got {}", t.n)));
        }
        if t.dims.len() != t.ell || t.dims.iter().any(|d| !(2..=3).contains(d)) {
            return Err(bad("trace.dims must list ell factor dimensions, each 2 or 3"));
        }
        if !(1 <= t.k && t.k < t.ell) {
            return Err(bad("trace.k must satisfy 1 <= k < ell"));
        }
        positive_list("trace.R_list", &t.r_list)?;
        if t.r_list.len() < 2 {
            return Err(bad("trace.R_list needs at least two values"));
        }
        if !(t.gap > 0.0 && t.gap < 0.5) || t.levels == 0 {
            return Err(bad("trace.gap must lie in (0, 1/2) and trace.levels be positive"));
        }
        finite_nonneg("trace.t_max", t.t_max)?;
        finite_nonneg("trace.tempered_intensity", t.tempered_intensity)?;
        finite_nonneg("trace.comp_intensity", t.comp_intensity)?;

        hyperlat::tracesim::split_shape(self.volumes.k, &self.volumes.dims).map_err(|e| bad(format!("volumes: {e}")))?;
        positive_list("volumes.R_list", &self.volumes.r_list)?;
        positive_list("volumes.radii", &self.volumes.radii)?;
        if self.zaremba.counts.is_empty() || self.zaremba.counts.len() > 3 {
            return Err(bad("zaremba.counts lists instance counts for dimensions 1..=3"));
        }
        Ok(())
    }

    /// Canonical JSON echo of the effective configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of [`Self::canonical_json`], lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
