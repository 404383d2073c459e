use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use wellapprox::approx::{estimate_exponent, default_radius_schedule, ExponentKind, ProblemInstance};
use wellapprox::config::parse_instance;
use wellapprox::measure::BuildConfig;
use wellapprox::{Error, Result};

/// Overrides of the construction defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildOverrides {
    pub order: Option<usize>,
    pub support: Option<f64>,
    pub witness_radius: Option<i64>,
    pub report_radius: Option<i64>,
    pub k_cap: Option<u32>,
    pub fm_tail_tol: Option<f64>,
    pub entry_budget: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub deltas: Vec<f64>,
    pub qs: Vec<Vec<i64>>,
    /// Defaults to the instance's `theta`.
    pub theta: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub kappa: Option<f64>,
    pub tail_order: Option<u32>,
    /// `lebesgue` (default) or `stage`.
    pub measure: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    pub max_block: Option<u32>,
    pub start_block: Option<u32>,
    pub ratio_threshold: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: Value,
    s: Option<f64>,
    tol: Option<f64>,
    radii: Option<Vec<i64>>,
    scale_exponent: Option<u32>,
    scale_exponents: Option<Vec<u32>>,
    cutoff: Option<i64>,
    k_max: Option<usize>,
    build: Option<BuildOverrides>,
    decay_shells: Option<u32>,
    census_samples: Option<usize>,
    seed: Option<u64>,
    lattice: Option<LatticeSection>,
    series: Option<SeriesSection>,
}

/// A validated run configuration.
pub struct RunConfig {
    pub instance: ProblemInstance,
    pub hash: String,
    s: Option<f64>,
    pub tol: f64,
    pub radii: Vec<i64>,
    pub scale_exponent: Option<u32>,
    pub scale_exponents: Option<Vec<u32>>,
    pub cutoff: Option<i64>,
    pub k_max: usize,
    pub build: BuildOverrides,
    pub decay_shells: u32,
    pub census_samples: usize,
    pub seed: u64,
    pub lattice: Option<LatticeSection>,
    pub series: SeriesSection,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

impl RunConfig {
    pub fn parse(bytes: &[u8], seed_flag: Option<u64>) -> Result<Self> {
        let raw: RawConfig = serde_json::from_slice(bytes).map_err(|e| bad(format!("config: {e}")))?;
        let instance = parse_instance(&raw.instance)?;
        let hash = hex::encode(Sha256::digest(bytes));
        let tol = raw.tol.unwrap_or(0.01);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(bad(format!("tol must lie in (0, 1), got {tol}")));
        }
        if let Some(s) = raw.s {
            if !(s > 0.0) {
                return Err(bad(format!("s must be positive, got {s}")));
            }
        }
        let radii = raw.radii.unwrap_or_else(|| default_radius_schedule(instance.n));
        if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 1 {
            return Err(bad("radii must be positive and strictly increasing"));
        }
        let cutoff = raw.cutoff;
        if cutoff.is_some_and(|c| c < 1) {
            return Err(bad("cutoff must be at least 1"));
        }
        let k_max = raw.k_max.unwrap_or(BuildConfig::default().k_max);
        if k_max == 0 {
            return Err(bad("k_max must be at least 1"));
        }
        if let Some(lat) = &raw.lattice {
            if lat.deltas.is_empty() || lat.qs.is_empty() {
                return Err(bad("lattice.deltas and lattice.qs must be nonempty"));
            }
            if let Some(m) = lat.measure.as_deref() {
                if m != "lebesgue" && m != "stage" {
                    return Err(bad(format!("lattice.measure must be \"lebesgue\" or \"stage\", got \"{m}\"")));
                }
            }
        }
        Ok(RunConfig {
            instance,
            hash,
            s: raw.s,
            tol,
            radii,
            scale_exponent: raw.scale_exponent,
            scale_exponents: raw.scale_exponents,
            cutoff,
            k_max,
            build: raw.build.unwrap_or_default(),
            decay_shells: raw.decay_shells.unwrap_or(8),
            census_samples: raw.census_samples.unwrap_or(20_000),
            seed: seed_flag.or(raw.seed).unwrap_or(0),
            lattice: raw.lattice,
            series: raw.series.unwrap_or_default(),
        })
    }

    /// The configured `s`, or nine tenths of the lower end of the estimated
    /// bracket of the critical exponent.
    pub fn s(&self) -> Result<f64> {
        if let Some(s) = self.s {
            return Ok(s);
        }
        let inst = &self.instance;
        let est = estimate_exponent(&inst.q_set, &inst.psi, ExponentKind::S, self.tol, &self.radii)?;
        let s = 0.9 * est.lower;
        if !(s > 0.0) {
            return Err(bad("the critical exponent is 0 here; give a positive s explicitly"));
        }
        Ok(s)
    }

    pub fn build_config(&self) -> BuildConfig {
        let mut cfg = BuildConfig::for_dim(self.instance.m * self.instance.n);
        cfg.k_max = self.k_max;
        let o = &self.build;
        cfg.order = o.order.or(cfg.order);
        if let Some(v) = o.support {
            cfg.support = v;
        }
        if let Some(v) = o.witness_radius {
            cfg.witness_radius = v;
        }
        if let Some(v) = o.report_radius {
            cfg.report_radius = v;
        }
        if let Some(v) = o.k_cap {
            cfg.k_cap = v;
        }
        if let Some(v) = o.fm_tail_tol {
            cfg.fm_tail_tol = v;
        }
        if let Some(v) = o.entry_budget {
            cfg.entry_budget = v;
        }
        cfg
    }
}
