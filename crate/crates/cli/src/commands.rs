use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use wellapprox::approx::{
    convergence_hypothesis, estimate_exponent, fourier_dimension, hausdorff_dimension, ExponentKind,
};
use wellapprox::bump::make_bspline_bump;
use wellapprox::divisor::{dyadic, next_scale_in_script_m, scale_set_q_prime};
use wellapprox::lattice::{sup_norm, BoxIter};
use wellapprox::measure::{
    build_measure, decay_report, default_order, membership_census, MeasureStage, StageSummary,
};
use wellapprox::slab::{
    borel_cantelli_sums, lattice_lemma_check, plane_fourier, write_lattice_csv, LatticeCheckConfig,
    LatticeMeasure, LatticeReport, Lebesgue, PlaneOracle, SlabFamily, StageMeasure,
};
use wellapprox::spectrum::SparseSpectrum;
use wellapprox::torus::{fm_spectrum, phi_q_theta_coeff, verify_fm_bounds, PhiOracle, SingleScale};
use wellapprox::{Error, Result};

use crate::run_config::RunConfig;

/// Largest disagreement tolerated between a closed form and its oracle.
pub const ORACLE_TOL: f64 = 1e-6;

pub enum Failure {
    Compute(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

pub type Outcome = std::result::Result<(), Failure>;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// A CSV file whose first line records the config hash.
    fn write_csv<F: FnOnce(&mut Vec<u8>) -> io::Result<()>>(&self, name: &str, body: F) -> io::Result<PathBuf> {
        let mut buf = format!("# config_sha256={}\n", self.cfg.hash).into_bytes();
        body(&mut buf)?;
        let path = self.path(name);
        fs::write(&path, buf)?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, payload: &T) -> io::Result<PathBuf> {
        let doc = json!({ "config_sha256": self.cfg.hash, "seed": self.cfg.seed, "result": payload });
        let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn dims(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let inst = &cfg.instance;
    let s_est = estimate_exponent(&inst.q_set, &inst.psi, ExponentKind::S, cfg.tol, &cfg.radii)?;
    let eta_est = estimate_exponent(&inst.q_set, &inst.psi, ExponentKind::Eta { m: inst.m }, cfg.tol, &cfg.radii)?;
    let hyp = convergence_hypothesis(inst, s_est.radius_used)?;
    let dim_f = fourier_dimension(inst, &s_est)?;
    let dim_h = hausdorff_dimension(inst, &eta_est);
    println!("s(Q,Psi)    in [{:.6}, {:.6}]", s_est.lower, s_est.upper);
    println!("eta(Q,Psi)  in [{:.6}, {:.6}]", eta_est.lower, eta_est.upper);
    match dim_f.value() {
        Some(v) => println!("dim_F       = {v:.6}"),
        None => println!("dim_F       = unknown (divergent sum, no full-measure rule)"),
    }
    println!("dim_H       = {dim_h:.6}");
    println!(
        "sum Psi^m   {} (block ratio {:.4})",
        if hyp.convergent { "convergent" } else { "divergent" },
        hyp.ratio
    );
    let payload = json!({
        "s": s_est,
        "eta": eta_est,
        "convergence": hyp,
        "fourier_dimension": dim_f,
        "hausdorff_dimension": dim_h,
    });
    announce(&ctx.write_json("dims.json", &payload)?);
    Ok(())
}

/// The configured scale exponent, or the first admissible one from 2^3.
fn scale_exponent(cfg: &RunConfig, s: f64) -> Result<u32> {
    if let Some(k) = cfg.scale_exponent {
        if k == 0 {
            return Err(Error::Argument("scale_exponent must be at least 1".into()));
        }
        return Ok(k);
    }
    let inst = &cfg.instance;
    next_scale_in_script_m(3, &inst.q_set, &inst.psi, s, 40)?
        .ok_or_else(|| Error::NotFound("no admissible scale 2^k with 3 <= k <= 40".into()))
}

struct ScaleSpectrum {
    exponent: u32,
    qprime: usize,
    spectrum: Option<SparseSpectrum>,
}

/// Spectrum of `F_M` up to the configured cutoff, or four times the largest
/// `|q|` in `Q'(M)` when none is configured.
fn scale_spectrum(cfg: &RunConfig, s: f64, k: u32, allow_empty: bool) -> Result<ScaleSpectrum> {
    let inst = &cfg.instance;
    let (m, n) = (inst.m, inst.n);
    let order = cfg.build.order.unwrap_or_else(|| default_order(m, n, s));
    let phi = make_bspline_bump(m * n, order, cfg.build.support.unwrap_or(0.9))?;
    let qp = scale_set_q_prime(&inst.q_set, &inst.psi, s, dyadic(k), m, n)?;
    if qp.is_empty() {
        if allow_empty {
            return Ok(ScaleSpectrum { exponent: k, qprime: 0, spectrum: None });
        }
        return Err(Error::DegenerateScale { scale: dyadic(k), reason: "Q'(M) is empty".into() });
    }
    let cutoff = cfg.cutoff.unwrap_or_else(|| 4 * qp.members.iter().map(|q| sup_norm(q)).max().unwrap_or(1));
    let spec = fm_spectrum(&qp, &phi, &inst.psi, &inst.theta, cutoff)?;
    Ok(ScaleSpectrum { exponent: k, qprime: qp.len(), spectrum: Some(spec) })
}

pub fn spectrum(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let s = cfg.s()?;
    let k = scale_exponent(cfg, s)?;
    let got = scale_spectrum(cfg, s, k, false)?;
    let spec = got.spectrum.expect("nonempty scale");
    println!("M = 2^{k}, |Q'(M)| = {}, cutoff = {}", got.qprime, spec.cutoff);
    println!("nonzero coefficients: {}", spec.len());
    println!("l1 norm in window:   {:.6}", spec.l1_norm());
    println!("tail l1 bound:        {:.3e}", spec.tail_l1);
    announce(&ctx.write_csv("spectrum.csv", |w| spec.write_csv(w))?);
    let payload = json!({
        "s": s,
        "scale_exponent": got.exponent,
        "scale": dyadic(got.exponent),
        "qprime_size": got.qprime,
        "cutoff": spec.cutoff,
        "nonzero": spec.len(),
        "l1_in_window": spec.l1_norm(),
        "tail_l1": spec.tail_l1,
    });
    announce(&ctx.write_json("spectrum.json", &payload)?);
    Ok(())
}

fn build_stage(ctx: &Ctx, s: f64) -> std::result::Result<MeasureStage, Failure> {
    let cfg = &ctx.cfg;
    match build_measure(&cfg.instance, s, cfg.build_config()) {
        Ok(stage) => Ok(stage),
        Err(partial) => {
            if let Some(stage) = &partial.stage {
                let mut summary = StageSummary::new(stage)?;
                summary.error = Some(partial.error.to_string());
                announce(&ctx.write_json("stage.json", &summary)?);
            }
            Err(Failure::Compute(partial.error))
        }
    }
}

pub fn build(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let s = cfg.s()?;
    let stage = build_stage(ctx, s)?;
    let mut summary = StageSummary::new(&stage)?;
    let decay = decay_report(&stage, cfg.decay_shells)?;
    let census = membership_census(&stage, cfg.census_samples, cfg.seed);
    for r in &stage.scales {
        println!(
            "stage {}: M = 2^{} |Q'| = {} delta = {} grid margin {:.4} tail margin {:.4}",
            r.stage, r.exponent, r.qprime_size, r.delta, r.grid_margin, r.certificate.margin
        );
    }
    for d in &summary.drift {
        println!("drift stage {}: max ratio {:.4} ({})", d.stage, d.max_ratio, if d.holds { "holds" } else { "FAILS" });
    }
    println!("decay constant {:.4e}, all shells bounded: {}", decay.fitted_constant, decay.all_bounded());
    println!("census: weighted fraction {}", census.weighted_fraction);
    announce(&ctx.write_csv("decay.csv", |w| decay.write_csv(w))?);
    summary.decay = Some(decay);
    summary.census = Some(census);
    announce(&ctx.write_json("stage.json", &summary)?);
    Ok(())
}

#[derive(Serialize)]
struct PlaneCheck {
    q: Vec<i64>,
    theta: f64,
    frequencies: usize,
    max_error: f64,
}

/// Closed form of the plane-measure coefficients against the surface
/// quadrature, for `|k| <= 10`.
fn plane_checks(qs: &[Vec<i64>], theta: &[f64]) -> Result<Vec<PlaneCheck>> {
    let oracle = PlaneOracle::default();
    let mut out = Vec::new();
    for q in qs {
        for &th in theta {
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for k in BoxIter::new(q.len(), 10) {
                let o = oracle.coefficient(q, th, &k)?;
                worst = worst.max((o.value - plane_fourier(q, th, &k)).norm());
                count += 1;
            }
            out.push(PlaneCheck { q: q.clone(), theta: th, frequencies: count, max_error: worst });
        }
    }
    Ok(out)
}

pub fn verify_lattice(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let Some(lat) = &cfg.lattice else {
        return Err(Error::Argument("verify-lattice needs a \"lattice\" section".into()).into());
    };
    let inst = &cfg.instance;
    let theta = lat.theta.clone().unwrap_or_else(|| inst.theta.clone());
    let stage_holder;
    let measure: Box<dyn LatticeMeasure + '_> = match lat.measure.as_deref().unwrap_or("lebesgue") {
        "stage" => {
            let s = cfg.s()?;
            stage_holder = build_stage(ctx, s)?;
            Box::new(StageMeasure::new(&stage_holder)?)
        }
        _ => Box::new(Lebesgue { dim: theta.len() * lat.qs[0].len() }),
    };
    let check = LatticeCheckConfig {
        kappa: lat.kappa.unwrap_or(4.0),
        tail_order: lat.tail_order.unwrap_or(2),
        samples: lat.samples.unwrap_or(1_000_000),
        seed: cfg.seed,
        ..LatticeCheckConfig::default()
    };
    let mut reports: Vec<LatticeReport> = Vec::new();
    for q in &lat.qs {
        for &delta in &lat.deltas {
            let fam = SlabFamily::new(delta, q, theta.clone())?;
            let rep = lattice_lemma_check(measure.as_ref(), &fam, &check)?;
            println!(
                "delta {delta} q {q:?}: mu(L) = {:.6} [{:.6}, {:.6}] ratio {:.4} sums {:.4e}/{:.4e} band {}",
                rep.estimate,
                rep.ci_lo,
                rep.ci_hi,
                rep.ratio,
                rep.sum_upper_cutoff,
                rep.sum_lower_cutoff,
                if rep.within_band { "ok" } else { "OUT" }
            );
            reports.push(rep);
        }
    }
    let planes = plane_checks(&lat.qs.iter().filter(|q| q.len() >= 2).cloned().collect::<Vec<_>>(), &theta)?;
    let worst = planes.iter().map(|p| p.max_error).fold(0.0, f64::max);
    announce(&ctx.write_csv("lattice.csv", |w| write_lattice_csv(&reports, w))?);
    announce(&ctx.write_json("lattice.json", &json!({ "reports": reports, "plane_checks": planes }))?);
    if worst > ORACLE_TOL {
        return Err(Error::OracleMismatch(format!("plane coefficients differ from quadrature by {worst:.3e}")).into());
    }
    Ok(())
}

/// The configured exponents, or the three smallest admissible ones above 2^6.
fn fm_exponents(cfg: &RunConfig, s: f64) -> Result<Vec<u32>> {
    if let Some(list) = &cfg.scale_exponents {
        if list.is_empty() || list.contains(&0) {
            return Err(Error::Argument("scale_exponents must be nonempty and positive".into()));
        }
        return Ok(list.clone());
    }
    if let Some(k) = cfg.scale_exponent {
        return Ok(vec![k]);
    }
    let inst = &cfg.instance;
    let mut out = Vec::new();
    let mut k = 7;
    while out.len() < 3 {
        match next_scale_in_script_m(k, &inst.q_set, &inst.psi, s, 40)? {
            Some(found) => {
                out.push(found);
                k = found + 1;
            }
            None => break,
        }
    }
    if out.is_empty() {
        return Err(Error::NotFound("no admissible scale above 2^6".into()));
    }
    Ok(out)
}

pub fn verify_fm(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let inst = &cfg.instance;
    let s = cfg.s()?;
    let zeta = wellapprox::measure::DEFAULT_ZETA;
    let mut reports = Vec::new();
    let mut worst_oracle: f64 = 0.0;
    for k in fm_exponents(cfg, s)? {
        let got = scale_spectrum(cfg, s, k, false)?;
        let spec = got.spectrum.expect("nonempty scale");
        let rep = verify_fm_bounds(&spec, dyadic(k), s, zeta);
        println!(
            "M = 2^{k}: (a) {} (b) {} (c) {} up to {} (d) C = {:.4e}",
            rep.zero_coefficient_is_one, rep.bounded_by_one, rep.annulus_is_zero, rep.annulus_radius, rep.fitted_constant
        );
        // Closed-form bump coefficients against FFT quadrature for the member
        // with the coarsest slabs, on a grid resolving its width.
        let (m, n) = (inst.m, inst.n);
        let order = cfg.build.order.unwrap_or_else(|| default_order(m, n, s));
        let phi = make_bspline_bump(m * n, order, cfg.build.support.unwrap_or(0.9))?;
        let qp = scale_set_q_prime(&inst.q_set, &inst.psi, s, dyadic(k), m, n)?;
        let fm = SingleScale::new(&qp, &inst.psi, &inst.theta, &phi)?;
        let (q, eps) = fm
            .members
            .iter()
            .zip(&fm.widths)
            .min_by(|a, b| (sup_norm(a.0) as f64 / a.1).total_cmp(&(sup_norm(b.0) as f64 / b.1)))
            .map(|(q, &e)| (q.clone(), e))
            .expect("nonempty scale");
        let grid = ((32.0 * sup_norm(&q) as f64 / eps).ceil() as usize).next_power_of_two().max(64);
        let oracle_checked = grid.checked_pow(n as u32).is_some_and(|cells| cells <= 1 << 22);
        if oracle_checked {
            let oracle = PhiOracle::new(&phi, eps, &q, &inst.theta, grid)?;
            let on_lines = BoxIter::new(m, 2).map(|t| {
                t.iter().flat_map(|&ti| q.iter().map(move |&qj| ti * qj)).collect::<Vec<i64>>()
            });
            for ell in BoxIter::new(m * n, 2).map(|l| l.to_vec()).chain(on_lines) {
                let closed = phi_q_theta_coeff(&phi, eps, &q, &inst.theta, &ell)?;
                worst_oracle = worst_oracle.max((closed - oracle.coefficient(&ell)).norm());
            }
        }
        println!("  oracle on q = {q:?}: {}", if oracle_checked { "checked" } else { "grid too large, skipped" });
        reports.push(json!({ "scale_exponent": k, "qprime_size": got.qprime, "bounds": rep, "oracle_checked": oracle_checked }));
    }
    println!("bump coefficient oracle: max deviation {worst_oracle:.3e}");
    announce(&ctx.write_json(
        "fm_bounds.json",
        &json!({ "s": s, "zeta": zeta, "scales": reports, "oracle_max_deviation": worst_oracle }),
    )?);
    if worst_oracle > ORACLE_TOL {
        return Err(Error::OracleMismatch(format!("bump coefficients deviate by {worst_oracle:.3e}")).into());
    }
    Ok(())
}

pub fn export(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let inst = &cfg.instance;
    let s = cfg.s()?;
    let k = scale_exponent(cfg, s)?;
    let got = scale_spectrum(cfg, s, k, true)?;
    let path = match &got.spectrum {
        Some(spec) => ctx.write_csv("spectrum.csv", |w| spec.write_csv(w))?,
        None => ctx.write_csv("spectrum.csv", |w| SparseSpectrum::new(inst.m, inst.n, cfg.cutoff.unwrap_or(1)).write_csv(w))?,
    };
    announce(&path);
    let ser = &cfg.series;
    let table = borel_cantelli_sums(
        inst,
        s,
        ser.max_block.unwrap_or(14),
        ser.start_block.unwrap_or(6),
        ser.ratio_threshold.unwrap_or(0.95),
    )?;
    let path = ctx.write_csv("series.csv", |w| {
        writeln!(w, "block,lo,hi,mass_block,dimension_block,mass_partial,dimension_partial")?;
        for b in &table.blocks {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                b.block, b.lo, b.hi, b.mass_block, b.dimension_block, b.mass_partial, b.dimension_partial
            )?;
        }
        Ok(())
    })?;
    announce(&path);
    println!(
        "series: sum Psi^m {} , sum Psi_*^s {}",
        if table.mass_cauchy { "shrinking blocks" } else { "non-Cauchy blocks" },
        if table.dimension_cauchy { "shrinking blocks" } else { "non-Cauchy blocks" }
    );
    Ok(())
}
