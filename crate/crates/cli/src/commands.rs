//! One function per subcommand. Each returns its files and checks; nothing is written here.

use std::fmt::Write as _;
use std::sync::Arc;

use hyperlat::diophantine::{
    approx_search, below_pigeonhole_fraction, element_sources, exponent_estimate, pigeonhole_exponent, pooled_zeta,
    recheck, sample_pairs_in, schedule_r, ApproxResult, CachedScan, ElementSource, ExponentFit, Query, SplitShape,
    Witness,
};
use hyperlat::hypgeom::{ball_volume, dist, HypPoint, RhoParam};
use hyperlat::latenum::{elements_csv, enumerate_units_with};
use hyperlat::quaternion::AlgebraDesc;
use hyperlat::registry::Registry;
use hyperlat::spectral::{
    constants_by_scale, f2_decay_series, f2_integral, profile_decay_series, profile_families, spherical_phi,
    spherical_phi_rho1_closed, stability_ratio, transform_cartan, transform_iwasawa, Bump, DecaySeries,
    SphericalParam,
};
use hyperlat::tracesim::{
    density_grid_check, split_shape, synth_spectrum, trace_scaling, zaremba_self_test, DensityGrid, Param,
    SynthConfig,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::{compute, Check, CliError, Command, Outcome};

pub fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cmd {
        Command::Enumerate => enumerate(cfg),
        Command::Approx => approx(cfg),
        Command::Exponent => exponent(cfg),
        Command::Volumes => volumes(cfg),
        Command::Spherical => spherical(cfg),
        Command::Decay => decay(cfg),
        Command::Tracesim => tracesim(cfg),
        Command::Zaremba => zaremba(cfg),
    }
}

const RHOS: [RhoParam; 2] = [RhoParam::Half, RhoParam::One];

/// Thresholds of the built-in checks.
pub const PHI_TRIVIAL_TOL: f64 = 1e-8;
pub const RHO1_CLOSED_TOL: f64 = 1e-8;
pub const IWASAWA_REL_TOL: f64 = 1e-6;
pub const DECAY_STABILITY: f64 = 3.0;
pub const MASS_CONSTANT: f64 = 10.0;
pub const BALANCE_RANGE: (f64, f64) = (0.1, 10.0);
pub const GROWTH_LIMIT: f64 = 0.5;
pub const ZAREMBA_TOL: f64 = 1e-9;
pub const BELOW_PIGEONHOLE_MAX: f64 = 0.1;

fn csv(header: &str) -> String {
    let mut s = String::from(header);
    s.push('\n');
    s
}

fn point_xy(p: &HypPoint) -> (f64, f64) {
    match *p {
        HypPoint::H2 { x, y } => (x, y),
        HypPoint::H3 { z, t } => (z.re, t),
    }
}

// ---------------------------------------------------------------------------
// enumerate

fn enumerate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let a = cfg.algebra()?;
    let opts = cfg.enum_options()?;
    let (r1, r2) = (cfg.enumeration.r1, cfg.enumeration.r2);
    let els = enumerate_units_with(&a, r1, r2, &opts).map_err(compute("enumeration"))?;
    let mut out = Outcome::default();
    out.file("elements.csv", elements_csv(&els, &a).map_err(compute("element table"))?);
    let mut counts = csv("t_sum,cumulative_count");
    for (i, e) in els.iter().enumerate() {
        let _ = writeln!(counts, "{},{}", e.radii.0 + e.radii.1, i + 1);
    }
    out.file("counts.csv", counts);

    let has_identity = els.iter().any(|e| e.coords() == [1, 0, 0, 0, 0, 0, 0, 0]);
    out.check(Check::new("identity_present", has_identity, format!("{} elements", els.len())));
    let slack = 1e-9;
    let inside = els.iter().all(|e| e.radii.0 <= r1 + slack * (1.0 + r1) && e.radii.1 <= r2 + slack * (1.0 + r2));
    out.check(Check::new("radii_within_balls", inside, format!("t1 <= {r1}, t2 <= {r2}")));
    out.note("count", els.len());
    out.note("strategy", opts.strategy);
    out.note("node_budget", opts.node_budget);
    Ok(out)
}

// ---------------------------------------------------------------------------
// approx and exponent

/// Registry of sources; a cached scan covering `cover` is added when the config asks for it.
fn sources(cfg: &RunConfig, a: &AlgebraDesc, cover: Option<(f64, f64)>) -> Result<Registry<dyn ElementSource>, CliError> {
    let opts = cfg.enum_options()?;
    let cache = match cover {
        Some((t1, t2)) if cfg.diophantine.source == "cached" => {
            let els = enumerate_units_with(a, t1, t2, &opts).map_err(compute("cache enumeration"))?;
            Some(CachedScan {
                elements: Arc::new(els),
                cover: (t1, t2),
            })
        }
        _ => None,
    };
    Ok(element_sources(a, opts, cache))
}

fn witness_json(r: &ApproxResult) -> serde_json::Value {
    match &r.gamma {
        Witness::Lattice(e) => json!({ "kind": "lattice", "coords": e.coords(), "t1": e.radii.0, "t2": e.radii.1 }),
        Witness::Planted { point, level, t2 } => {
            let (x, y) = point_xy(point);
            json!({ "kind": "planted", "level": level, "point": [x, y], "t2": t2 })
        }
    }
}

/// Both inequalities recomputed from scratch, independent of the source.
fn verify(q: &Query, r: &ApproxResult) -> Result<bool, CliError> {
    recheck(q, r).map_err(compute("recheck"))?;
    let d1 = dist(&r.gamma.image(&q.x).map_err(compute("image"))?, &q.y).map_err(compute("distance"))?;
    Ok(d1 <= q.eps && r.r_found <= q.r_max)
}

fn approx(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let d = &cfg.diophantine;
    let a = cfg.algebra()?;
    let q = Query {
        x: HypPoint::h2(d.x[0], d.x[1]).map_err(|e| CliError::Config(format!("diophantine.x: {e}")))?,
        y: HypPoint::h2(d.y[0], d.y[1]).map_err(|e| CliError::Config(format!("diophantine.y: {e}")))?,
        eps: d.eps,
        r_max: d.r_max,
    };
    let cover = (q.t1_needed().map_err(compute("coverage"))?, d.r_max);
    let reg = sources(cfg, &a, Some(cover))?;
    let src = reg.get(&d.source).map_err(|e| CliError::Config(format!("diophantine.source: {e}")))?;
    let res = approx_search(src, &q).map_err(compute("approximation search"))?;
    let mut out = Outcome::default();
    let body = match &res {
        Some(r) => {
            out.check(Check::new("solution_verified", verify(&q, r)?, format!("d1 = {} <= {}", r.achieved_d1, q.eps)));
            json!({ "found": true, "r_found": r.r_found, "achieved_d1": r.achieved_d1, "witness": witness_json(r) })
        }
        None => json!({ "found": false }),
    };
    let doc = json!({
        "x": d.x, "y": d.y, "eps": d.eps, "r_max": d.r_max, "source": d.source,
        "distance": dist(&q.x, &q.y).map_err(compute("distance"))?,
        "result": body,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    out.file("approx.json", text);
    out.note("found", res.is_some());
    if let Some(r) = &res {
        out.note("r_found", r.r_found);
    }
    Ok(out)
}

fn exponent(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let d = &cfg.diophantine;
    let a = cfg.algebra()?;
    let [[x0, x1], [y0, y1]] = d.window;
    let pairs = sample_pairs_in(([x0, x1], [y0, y1]), d.seed, d.pairs);
    let eps_max = d.eps_list[0];
    let mut t1 = 0.0f64;
    for (x, y) in &pairs {
        let q = Query { x: *x, y: *y, eps: eps_max, r_max: d.r_max };
        t1 = t1.max(q.t1_needed().map_err(compute("coverage"))?);
    }
    let reg = sources(cfg, &a, Some((t1, d.r_max)))?;
    let src = reg.get(&d.source).map_err(|e| CliError::Config(format!("diophantine.source: {e}")))?;
    let fits: Vec<ExponentFit> = pairs
        .par_iter()
        .map(|(x, y)| exponent_estimate(src, *x, *y, &d.eps_list, d.r_max))
        .collect::<Result<_, _>>()
        .map_err(compute("exponent estimate"))?;

    let mut out = Outcome::default();
    let mut points = csv("pair,x_re,x_im,y_re,y_im,distance,eps,log_inv_eps,found,r_found,achieved_d1,in_fit,witness");
    let mut table = csv("pair,x_re,x_im,y_re,y_im,distance,zeta_hat,intercept,residual,fit_points,warnings");
    let (mut verified, mut checked, mut monotone) = (true, 0usize, true);
    for (i, f) in fits.iter().enumerate() {
        let ((xr, xi), (yr, yi)) = (point_xy(&f.x), point_xy(&f.y));
        let dxy = dist(&f.x, &f.y).map_err(compute("distance"))?;
        let mut prev = f64::NEG_INFINITY;
        for (eps, r) in &f.points {
            let li = (1.0 / eps).ln();
            let _ = write!(points, "{i},{xr},{xi},{yr},{yi},{dxy},{eps},{li},");
            match r {
                Some(r) => {
                    let q = Query { x: f.x, y: f.y, eps: *eps, r_max: d.r_max };
                    verified &= verify(&q, r)?;
                    checked += 1;
                    let w = match &r.gamma {
                        Witness::Lattice(e) => e.coords().map(|c| c.to_string()).join(" "),
                        Witness::Planted { level, .. } => format!("level {level}"),
                    };
                    let _ = writeln!(points, "true,{},{},{},{w}", r.r_found, r.achieved_d1, *eps < dxy);
                }
                None => {
                    let _ = writeln!(points, "false,,,false,");
                }
            }
            // eps decreases along the list, so the least height may only grow.
            let h = r.as_ref().map_or(f64::INFINITY, |r| r.r_found);
            monotone &= h >= prev;
            prev = h;
        }
        let _ = writeln!(
            table,
            "{i},{xr},{xi},{yr},{yi},{dxy},{},{},{},{},{}",
            f.zeta_hat,
            f.intercept,
            f.residual,
            f.fit_points().len(),
            f.warnings.len()
        );
    }
    out.file("exponent_points.csv", points);
    out.file("exponent_fits.csv", table);

    out.check(Check::new("solutions_verified", verified, format!("{checked} solutions rechecked")));
    out.check(Check::new("r_found_monotone_in_eps", monotone, format!("{} pairs", fits.len())));
    let shape = SplitShape::new(1, vec![a.rho(1), a.rho(2)]).map_err(compute("split shape"))?;
    let kappa = pigeonhole_exponent(&shape).map_err(compute("pigeonhole exponent"))?;
    let below = below_pigeonhole_fraction(&fits, kappa);
    out.check(Check::new(
        "below_pigeonhole_fraction",
        below <= BELOW_PIGEONHOLE_MAX,
        format!("{below} <= {BELOW_PIGEONHOLE_MAX} at kappa = {kappa}"),
    ));
    let pooled = pooled_zeta(&fits);
    if let Some([lo, hi]) = d.zeta_band {
        let ok = pooled.is_some_and(|(z, _)| lo <= z && z <= hi);
        let z = pooled.map_or("none".to_string(), |(z, _)| z.to_string());
        out.check(Check::new("zeta_in_band", ok, format!("{z} in [{lo}, {hi}]")));
    }
    out.note("source", d.source.as_str());
    out.note("pairs", fits.len());
    out.note("kappa", kappa);
    out.note("below_pigeonhole_fraction", below);
    if let Some((z, res)) = pooled {
        out.note("pooled_zeta", z);
        out.note("pooled_residual", res);
    }
    out.note("warnings", fits.iter().map(|f| f.warnings.len()).sum::<usize>());
    Ok(out)
}

// ---------------------------------------------------------------------------
// volumes

fn volumes(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let v = &cfg.volumes;
    let shape = split_shape(v.k, &v.dims).map_err(compute("split shape"))?;
    let mut out = Outcome::default();
    let mut balls = csv("rho,r,volume");
    for rho in RHOS {
        for &r in &v.radii {
            let _ = writeln!(balls, "{},{r},{}", rho.value(), ball_volume(rho, r));
        }
    }
    out.file("ball_volumes.csv", balls);
    let mut matching = csv("R,r,small_volume,large_volume,balance");
    let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
    for &big_r in &v.r_list {
        let r = schedule_r(big_r, &shape).map_err(compute("schedule"))?;
        let small: f64 = shape.rhos[..shape.k].iter().map(|&p| ball_volume(p, r)).product();
        let large: f64 = shape.rhos[shape.k..].iter().map(|&p| ball_volume(p, big_r)).product();
        let b = small * large;
        let _ = writeln!(matching, "{big_r},{r},{small},{large},{b}");
        if big_r >= 2.0 {
            worst = (worst.0.min(b), worst.1.max(b));
        }
    }
    out.file("matching.csv", matching);
    let (lo, hi) = BALANCE_RANGE;
    let ok = worst.0 > worst.1 || (lo <= worst.0 && worst.1 <= hi);
    out.check(Check::new("matching_balance", ok, format!("balance in [{}, {}] for R >= 2", worst.0, worst.1)));
    out.note("kappa", pigeonhole_exponent(&shape).map_err(compute("pigeonhole exponent"))?);
    Ok(out)
}

// ---------------------------------------------------------------------------
// spherical

fn spherical(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = &cfg.spectral.grid;
    let mut out = Outcome::default();

    let mut jobs = Vec::new();
    for rho in RHOS {
        for &sigma in &g.sigma {
            for &tau in &g.tau {
                for &t in &g.t {
                    jobs.push((rho, sigma, tau, t));
                }
            }
        }
    }
    let rows: Vec<_> = jobs
        .par_iter()
        .map(|&(rho, sigma, tau, t)| {
            let z = SphericalParam::new(sigma, tau, rho);
            let v = spherical_phi(&z, t)?;
            let closed = (rho == RhoParam::One).then(|| spherical_phi_rho1_closed(z.z(), t));
            Ok((rho, sigma, tau, t, v, closed))
        })
        .collect::<Result<_, hyperlat::spectral::SpectralError>>()
        .map_err(compute("spherical function"))?;
    let mut phi = csv("rho,sigma,tau,t,re,im,closed_re,closed_im");
    let mut closed_err = 0.0f64;
    for (rho, sigma, tau, t, v, c) in &rows {
        let _ = write!(phi, "{},{sigma},{tau},{t},{},{},", rho.value(), v.re, v.im);
        match c {
            Some(c) => {
                closed_err = closed_err.max((v - c).norm());
                let _ = writeln!(phi, "{},{}", c.re, c.im);
            }
            None => phi.push_str(",\n"),
        }
    }
    out.file("phi.csv", phi);

    // At z = 1/2 the spherical function is identically one.
    let trivial: Vec<_> = RHOS
        .iter()
        .flat_map(|&rho| g.t.iter().map(move |&t| (rho, t)))
        .collect();
    let trivial_err = trivial
        .par_iter()
        .map(|&(rho, t)| Ok((spherical_phi(&SphericalParam::new(0.5, 0.0, rho), t)? - 1.0).norm()))
        .collect::<Result<Vec<f64>, hyperlat::spectral::SpectralError>>()
        .map_err(compute("spherical function"))?
        .into_iter()
        .fold(0.0, f64::max);
    out.check(Check::new(
        "phi_trivial_is_one",
        trivial_err <= PHI_TRIVIAL_TOL,
        format!("max |phi - 1| = {trivial_err:e} over {} points", trivial.len()),
    ));
    out.check(Check::new(
        "rho1_closed_form",
        closed_err <= RHO1_CLOSED_TOL,
        format!("max |quadrature - closed form| = {closed_err:e}"),
    ));

    let bump = Bump::new(cfg.spectral.delta_prime).map_err(compute("bump"))?;
    let omega = profile_families().get("omega").map_err(compute("profile"))?;
    let s = &cfg.spectral;
    let mut jobs = Vec::new();
    for &r in &s.iwasawa_scales {
        for k in 0..s.iwasawa_points {
            jobs.push((r, k as f64 / r));
        }
    }
    let rows: Vec<_> = jobs
        .par_iter()
        .map(|&(r, tau)| {
            let f = omega.build(r, RhoParam::Half, bump)?;
            let z = SphericalParam::tempered(tau, RhoParam::Half);
            Ok((r, tau, transform_cartan(f.as_ref(), &z)?, transform_iwasawa(&bump, r, &z)?))
        })
        .collect::<Result<_, hyperlat::spectral::SpectralError>>()
        .map_err(compute("transform"))?;
    let mut tr = csv("r,tau,cartan_re,cartan_im,iwasawa_re,iwasawa_im,rel_err");
    let mut rel = 0.0f64;
    for (r, tau, c, i) in &rows {
        let e = (c - i).norm() / c.norm();
        rel = rel.max(e);
        let _ = writeln!(tr, "{r},{tau},{},{},{},{},{e}", c.re, c.im, i.re, i.im);
    }
    out.file("transforms.csv", tr);
    out.check(Check::new(
        "cartan_iwasawa_agree",
        rel <= IWASAWA_REL_TOL,
        format!("max relative difference {rel:e} over {} points", rows.len()),
    ));
    Ok(out)
}

// ---------------------------------------------------------------------------
// decay

fn rho_label(rho: RhoParam) -> String {
    rho.value().to_string()
}

fn decay(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = &cfg.spectral;
    let bump = Bump::new(s.delta_prime).map_err(compute("bump"))?;
    let mut groups: Vec<(String, RhoParam, Vec<DecaySeries>)> = Vec::new();
    for family in ["f1", "omega"] {
        let fam = profile_families().get(family).map_err(compute("profile"))?;
        for rho in RHOS {
            let mut series = Vec::new();
            for &scale in &s.small_scales {
                series.extend(profile_decay_series(fam, rho, bump, scale, &s.grid.sigma).map_err(compute("decay series"))?);
            }
            groups.push((family.to_string(), rho, series));
        }
    }
    for rho in RHOS {
        let series = s
            .large_scales
            .iter()
            .map(|&r| f2_decay_series(rho, s.delta_prime, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(compute("f2 decay series"))?;
        groups.push(("f2".to_string(), rho, series));
    }

    let mut out = Outcome::default();
    let mut values = csv("profile,rho,scale,sigma,tau,abs_transform,normalized");
    let mut consts = csv("profile,rho,N,scale,C_N");
    let mut ratios = csv("profile,rho,N,stability_ratio");
    let mut worst = 0.0f64;
    let mut stable = true;
    for (name, rho, series) in &groups {
        for se in series {
            for (tau, v) in &se.values {
                let _ = writeln!(values, "{name},{},{},{},{tau},{v},{}", rho_label(*rho), se.scale, se.sigma, v / se.normalizer);
            }
        }
        for &n in &s.decay_n {
            let cs = constants_by_scale(series, n);
            for (scale, c) in &cs {
                let _ = writeln!(consts, "{name},{},{n},{scale},{c}", rho_label(*rho));
            }
            let ratio = stability_ratio(&cs);
            let _ = writeln!(ratios, "{name},{},{n},{ratio}", rho_label(*rho));
            worst = worst.max(ratio);
            stable &= ratio <= DECAY_STABILITY;
        }
    }
    out.file("decay_values.csv", values);
    out.file("decay_constants.csv", consts);
    out.file("decay_stability.csv", ratios);
    out.check(Check::new(
        "decay_constants_stable",
        stable,
        format!("max ratio {worst} <= {DECAY_STABILITY} over profiles, rho and N"),
    ));

    let mut mass = csv("rho,R,mass,lower,upper,C_fit,C_prime_fit");
    let (mut c_fit, mut cp_fit) = (0.0f64, 0.0f64);
    for rho in RHOS {
        for &big_r in &s.large_scales {
            let m = f2_integral(big_r, rho, s.delta_prime).map_err(compute("f2 mass"))?;
            let lower = ((1.0 - s.delta_prime) * rho.value() * big_r).exp();
            let upper = (rho.value() * big_r).exp();
            let (c, cp) = (lower / m, m / upper);
            c_fit = c_fit.max(c);
            cp_fit = cp_fit.max(cp);
            let _ = writeln!(mass, "{},{big_r},{m},{lower},{upper},{c},{cp}", rho_label(rho));
        }
    }
    out.file("f2_mass.csv", mass);
    out.check(Check::new(
        "f2_mass_lower",
        c_fit <= MASS_CONSTANT,
        format!("fitted C = {c_fit} <= {MASS_CONSTANT}"),
    ));
    out.check(Check::new(
        "f2_mass_upper",
        cp_fit <= MASS_CONSTANT,
        format!("fitted C' = {cp_fit} <= {MASS_CONSTANT}"),
    ));
    out.note("max_stability_ratio", worst);
    out.note("fitted_C", c_fit);
    out.note("fitted_C_prime", cp_fit);
    Ok(out)
}

// ---------------------------------------------------------------------------
// tracesim

fn tracesim(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = &cfg.trace;
    let synth = SynthConfig {
        seed: t.seed,
        dims: t.dims.clone(),
        t_max: t.t_max,
        gap: t.gap,
        tempered_intensity: t.tempered_intensity,
        comp_intensity: t.comp_intensity,
        levels: t.levels,
    };
    let spec = synth_spectrum(&synth).map_err(compute("synthetic spectrum"))?;
    let mut out = Outcome::default();

    let mut lines = String::new();
    for a in &spec.atoms {
        let params: Vec<serde_json::Value> = a
            .params
            .iter()
            .map(|p| match *p {
                Param::Principal(t) => json!({ "principal": t }),
                Param::Complementary(s) => json!({ "complementary": s }),
            })
            .collect();
        lines.push_str(&json!({ "params": params, "mult": a.mult }).to_string());
        lines.push('\n');
    }
    out.file("spectrum.jsonl", lines);

    let violation = density_grid_check(&spec.atoms, &t.dims, &DensityGrid::standard(t.t_max.max(1.0)));
    out.check(Check::new(
        "density_bound",
        violation.is_none(),
        match &violation {
            None => format!("{} atoms after {} halvings", spec.atoms.len(), spec.halvings),
            Some(v) => format!("count {} > {} at Q = {}, sigma {:?}, T = {}", v.count, v.bound, v.q, v.sigma, v.t),
        },
    ));

    let rep = trace_scaling(&spec.atoms, &t.dims, t.k, t.n, &t.r_list).map_err(compute("trace scaling"))?;
    let masks: Vec<u32> = (0..1u32 << t.dims.len()).collect();
    let mut header = String::from("R,r,trace_sum");
    for m in &masks {
        let _ = write!(header, ",mask_{m:0w$b}", w = t.dims.len());
    }
    let mut table = csv(&header);
    for row in &rep.rows {
        let _ = write!(table, "{},{},{}", row.big_r, row.r, row.trace.total);
        for m in &masks {
            let _ = write!(table, ",{}", row.trace.by_mask.get(m).copied().unwrap_or(0.0));
        }
        table.push('\n');
    }
    out.file("trace.csv", table);
    out.check(Check::new(
        "growth_exponent",
        rep.growth_exponent <= GROWTH_LIMIT,
        format!("slope of log trace_sum over R = {} <= {GROWTH_LIMIT}", rep.growth_exponent),
    ));
    out.check(Check::new(
        "worst_case_dominates",
        rep.worst_dominates,
        format!("worst-case mask {:0w$b} largest at every R", rep.worst_mask, w = t.dims.len()),
    ));
    out.note("growth_exponent", rep.growth_exponent);
    out.note("atoms", spec.atoms.len());
    out.note("halvings", spec.halvings);
    out.note("intensity_scale", spec.scale);
    Ok(out)
}

// ---------------------------------------------------------------------------
// zaremba

fn zaremba(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let z = &cfg.zaremba;
    let counts: Vec<(usize, usize)> = z.counts.iter().enumerate().map(|(i, &c)| (i + 1, c)).collect();
    let cases = zaremba_self_test(z.seed, &counts).map_err(compute("zaremba self-test"))?;
    let mut out = Outcome::default();
    let mut table = csv("dim,index,lhs,rhs,abs_err");
    let mut worst = 0.0f64;
    for c in &cases {
        let e = (c.lhs - c.rhs).abs();
        worst = worst.max(e);
        let _ = writeln!(table, "{},{},{},{},{e}", c.dim, c.index, c.lhs, c.rhs);
    }
    out.file("zaremba.csv", table);
    out.check(Check::new(
        "zaremba_identity",
        worst <= ZAREMBA_TOL,
        format!("max |lhs - rhs| = {worst:e} over {} instances", cases.len()),
    ));
    out.note("instances", cases.len());
    out.note("max_abs_err", worst);
    Ok(out)
}
