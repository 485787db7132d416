use std::path::Path;

use serde_json::{json, Value};
use sfloc::analysis::{
    classify_with_tolerance, default_tol_imag, fit_scale_free, state_metrics, ScaleFreeOutcome, StateSelection,
};
use sfloc::band::criterion_check_with;
use sfloc::config::{apply_overrides, parse_value, read_json, resize, ModelDoc, Override};
use sfloc::effective::{
    mode_threshold_pbc, mode_threshold_pbc_printed, obc_threshold, project_perturbation, threshold_pbc,
    threshold_pbc_printed, ObcCoupling, Threshold,
};
use sfloc::eigen::eig;
use sfloc::nonbloch::{
    asymptotic_broken_solver, boundary_determinant, characteristic_roots, unitary_scan, RingParams, UnitaryScanParams,
};
use sfloc::scan::{
    fmt_f64, run_sweep, threshold_compare, threshold_csv, threshold_extract, Metric, SweepConfig, SweepOptions, VERSION,
};
use sfloc::{build_hamiltonian, Boundary, Complex64, Error, ModelSpec, Result};

use crate::{Cli, Command};

pub fn run(cli: &Cli, overrides: &[Override]) -> Result<()> {
    let mut doc = read_json(&cli.config)?;
    if cli.command == Command::Scan {
        apply_overrides(&mut doc, "base_model", overrides)?;
    } else {
        apply_overrides(&mut doc, "", overrides)?;
    }
    if matches!(cli.tol_imag, Some(t) if !(t.is_finite() && t >= 0.0)) {
        return Err(Error::config("--tol-imag", "must be a finite non-negative number"));
    }
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx { cli, overrides, doc };
    match cli.command {
        Command::Spectrum => spectrum(&ctx),
        Command::Scan => scan(&ctx),
        Command::Scaling => scaling(&ctx),
        Command::Criterion => criterion(&ctx),
        Command::Nonbloch => nonbloch(&ctx),
        Command::Effective => effective(&ctx),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    overrides: &'a [Override],
    doc: Value,
}

impl Ctx<'_> {
    fn model(&self) -> Result<(ModelDoc, ModelSpec<f64>)> {
        let doc = ModelDoc::from_value(&self.doc)?;
        let spec = doc.to_spec()?;
        Ok((doc, spec))
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.cli.out.join(name)
    }

    /// JSON sidecar with the effective config, the overrides and provenance.
    fn sidecar(&self, name: &str, results: Value) -> Result<()> {
        let timestamp =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let v = json!({
            "command": format!("{:?}", self.cli.command).to_lowercase(),
            "config": self.doc,
            "overrides": self.overrides,
            "tol_imag": self.cli.tol_imag,
            "version": VERSION,
            "timestamp_unix": timestamp,
            "results": results,
        });
        std::fs::write(self.path(name), serde_json::to_string_pretty(&v)?)?;
        Ok(())
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".into(), fmt_f64)
}

fn spectrum(ctx: &Ctx) -> Result<()> {
    let (_, spec) = ctx.model()?;
    let s = eig(&build_hamiltonian(&spec))?;
    let metrics = state_metrics(&s, spec.max_range())?;
    let bound: Vec<usize> = metrics.iter().filter(|m| m.is_bound).map(|m| m.index).collect();
    let excluded: &[usize] = if spec.boundary() == Boundary::Open { &bound } else { &[] };
    let tol = ctx.cli.tol_imag.unwrap_or_else(|| default_tol_imag(s.norm));
    let class = classify_with_tolerance(&s.eigenvalues, tol, excluded);
    write_csv(
        &ctx.path("spectrum.csv"),
        &["index", "re_E", "im_E", "mean_position", "half_asymmetry", "c_fit", "is_bound"],
        metrics.iter().map(|m| {
            vec![
                m.index.to_string(),
                fmt_f64(m.energy.re),
                fmt_f64(m.energy.im),
                fmt_f64(m.mean_position),
                fmt_f64(m.half_asymmetry),
                opt(m.c_fit),
                m.is_bound.to_string(),
            ]
        }),
    )?;
    println!(
        "L = {}: {} complex of {} (p_com = {}), {} bound state(s), max residual {:.3e}",
        spec.len(),
        class.n_com,
        s.len(),
        class.p_com,
        bound.len(),
        s.max_residual()
    );
    ctx.sidecar(
        "spectrum.json",
        json!({
            "p_com": class.p_com,
            "n_com": class.n_com,
            "tol_imag": tol,
            "bound_states": bound,
            "max_residual": s.max_residual(),
        }),
    )
}

fn scan(ctx: &Ctx) -> Result<()> {
    let mut config: SweepConfig = parse_value(&ctx.doc)?;
    if ctx.cli.tol_imag.is_some() {
        config.tol_imag = ctx.cli.tol_imag;
    }
    let grid = run_sweep(&config, &SweepOptions { threads: ctx.cli.threads, cache_dir: Some(ctx.cli.out.clone()) })?;
    let extra = json!({ "config": ctx.doc, "overrides": ctx.overrides, "tol_imag": config.tol_imag });
    let (csv, _) = grid.write(&ctx.cli.out, extra)?;
    let hash = &grid.config_hash[..16];
    if config.metric != Metric::MaxImE {
        let onsets = threshold_extract(&grid)?;
        write_csv(
            &ctx.path(&format!("{hash}.onsets.csv")),
            &["axis1", "onset"],
            onsets.iter().map(|o| vec![fmt_f64(o.axis1), opt(o.onset)]),
        )?;
    }
    if config.metric == Metric::ThresholdCompare {
        let rows = threshold_compare(&config, &grid)?;
        std::fs::write(ctx.path(&format!("{hash}.thresholds.csv")), threshold_csv(&rows))?;
    }
    println!(
        "{} points ({} from cache, {} failed) -> {}",
        grid.values.len(),
        grid.cached_points,
        grid.failures.len(),
        csv.display()
    );
    Ok(())
}

fn parse_selection(s: &str) -> Result<StateSelection> {
    match s {
        "typical" => Ok(StateSelection::Typical),
        "max_imag" => Ok(StateSelection::MaxImag),
        _ => Err(Error::config("options.selection", format!("`{s}` is not one of typical, max_imag"))),
    }
}

fn scaling(ctx: &Ctx) -> Result<()> {
    let (doc, spec) = ctx.model()?;
    let sizes: Vec<usize> = doc.option("sizes")?.unwrap_or_else(|| vec![100, 200, 400, 800]);
    let selection = parse_selection(&doc.option::<String>("selection")?.unwrap_or_else(|| "typical".into()))?;
    let fit = match fit_scale_free(|n| resize(&spec, n), &sizes, selection)? {
        ScaleFreeOutcome::Fit(f) => f,
        ScaleFreeOutcome::NoComplexStates { size } => {
            return Err(Error::IllConditioned(format!("no complex continuous-spectrum state at L = {size}")))
        }
    };
    write_csv(
        &ctx.path("scaling.csv"),
        &["L", "c_estimate", "selected_index", "re_E", "im_E"],
        fit.sizes
            .iter()
            .zip(&fit.c_estimates)
            .zip(&fit.selected)
            .map(|((l, c), (idx, e))| vec![l.to_string(), fmt_f64(*c), idx.to_string(), fmt_f64(e.re), fmt_f64(e.im)]),
    )?;
    println!(
        "c = {:.6} (relative spread {:.3}), max|Im E| ~ L^{:.3}, selected Im E ~ L^{:.3}, curve distance {:.4}",
        fit.c_mean, fit.c_relative_spread, fit.im_scaling_exponent, fit.selected_im_exponent, fit.curve_distance
    );
    ctx.sidecar(
        "scaling.json",
        json!({
            "sizes": fit.sizes,
            "c_estimates": fit.c_estimates,
            "c_mean": fit.c_mean,
            "c_relative_spread": fit.c_relative_spread,
            "im_scaling_exponent": fit.im_scaling_exponent,
            "selected_im_exponent": fit.selected_im_exponent,
            "curve_distance": fit.curve_distance,
        }),
    )
}

fn criterion(ctx: &Ctx) -> Result<()> {
    let (_, spec) = ctx.model()?;
    let report = criterion_check_with(&spec, ctx.cli.tol_imag)?;
    let json = report.to_json();
    std::fs::write(ctx.path("criterion.json"), serde_json::to_string_pretty(&json)?)?;
    if report.window.is_empty() {
        println!("PT window: empty");
    }
    for iv in &report.window.intervals {
        println!("PT window: ({}, {}) with {} equal-energy points", iv.lo, iv.hi, iv.multiplicity);
    }
    println!(
        "{} complex continuous-spectrum eigenvalue(s), {} outside the window (tolerance {:.4})",
        report.n_com,
        report.violations.len(),
        report.tolerance
    );
    ctx.sidecar("criterion.meta.json", json)
}

fn nonbloch(ctx: &Ctx) -> Result<()> {
    let (doc, spec) = ctx.model()?;
    let s = eig(&build_hamiltonian(&spec))?;
    let bulk = spec.bulk_hoppings();
    let mut worst = 0.0f64;
    let mut skipped = 0usize;
    let rows: Vec<Vec<String>> = s
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let det = characteristic_roots(&bulk, e).and_then(|r| boundary_determinant(&spec, &r));
            let (norm, log_scale, status) = match det {
                Ok(d) => {
                    worst = worst.max(d.normalized());
                    (Some(d.normalized()), Some(d.log_scale), "ok".to_string())
                }
                Err(err) => {
                    skipped += 1;
                    (None, None, err.to_string())
                }
            };
            vec![i.to_string(), fmt_f64(e.re), fmt_f64(e.im), opt(norm), opt(log_scale), status]
        })
        .collect();
    write_csv(
        &ctx.path("nonbloch_determinant.csv"),
        &["index", "re_E", "im_E", "normalized_det", "log_scale", "status"],
        rows,
    )?;
    println!("largest normalized boundary determinant over {} eigenvalues: {worst:.3e} ({skipped} skipped)", s.len());
    let mut results = json!({ "max_normalized_det": worst, "skipped": skipped });

    if let Ok(ring) = RingParams::from_model(&spec) {
        let params = UnitaryScanParams {
            len: ring.len,
            t: ring.t,
            theta: ring.theta,
            phi: ring.phi,
            g_min: doc.option("g_min")?.unwrap_or(0.0),
            g_max: doc.option("g_max")?.unwrap_or(2.0 * ring.t),
            g_steps: doc.option("g_steps")?.unwrap_or(201),
        };
        let res: usize = doc.option("gamma_resolution")?.unwrap_or((20 * ring.len).max(1000));
        let scan = unitary_scan(&params, res)?;
        write_csv(
            &ctx.path("unitary_scan.csv"),
            &["gamma", "G_plus", "G_minus", "discriminant_negative"],
            scan.points
                .iter()
                .map(|p| vec![fmt_f64(p.gamma), opt(p.g_plus), opt(p.g_minus), p.discriminant_negative.to_string()]),
        )?;
        for (lo, hi) in &scan.broken_g_intervals {
            println!("broken for g in [{lo}, {hi}]");
        }
        let sols = asymptotic_broken_solver(&ring);
        write_csv(
            &ctx.path("asymptotic.csv"),
            &["gamma", "delta", "re_E", "im_E"],
            sols.iter().map(|a| {
                let e = a.energy(ring.t, ring.len);
                vec![fmt_f64(a.gamma), fmt_f64(a.delta), fmt_f64(e.re), fmt_f64(e.im)]
            }),
        )?;
        results["broken_g_intervals"] = json!(scan.broken_g_intervals);
        results["asymptotic_solutions"] = json!(sols.len());
    } else {
        println!("not a flux ring with edge potentials; unitary scan skipped");
    }
    ctx.sidecar("nonbloch.json", results)
}

fn effective(ctx: &Ctx) -> Result<()> {
    let (_, spec) = ctx.model()?;
    match spec.boundary() {
        Boundary::Periodic => effective_ring(ctx, &spec),
        Boundary::Open => effective_open(ctx, &spec),
    }
}

fn effective_ring(ctx: &Ctx, spec: &ModelSpec<f64>) -> Result<()> {
    let ring = RingParams::from_model(spec).map_err(|e| Error::config("perturbations", e.to_string()))?;
    let theta = if ring.theta > std::f64::consts::PI { ring.theta - 2.0 * std::f64::consts::PI } else { ring.theta };
    let (len, t, phi) = (ring.len, ring.t, ring.phi);
    write_csv(
        &ctx.path("effective_modes.csv"),
        &["n", "k", "gap", "g_n", "g_n_printed"],
        (1..).take_while(|n| 2 * n < len).map(|n| {
            let k = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
            vec![
                n.to_string(),
                fmt_f64(k),
                fmt_f64(-2.0 * t * k.sin() * theta.sin()),
                opt(mode_threshold_pbc(n, len, theta, phi, t)),
                opt(mode_threshold_pbc_printed(n, len, theta, phi, t)),
            ]
        }),
    )?;
    let derived = threshold_pbc(len, theta, phi, t);
    let printed = threshold_pbc_printed(len, theta, phi, t);
    let mode = match derived {
        Threshold::Finite { mode: Some(n), .. } => n.to_string(),
        _ => "NaN".into(),
    };
    write_csv(
        &ctx.path("effective_threshold.csv"),
        &["L", "t", "theta", "phi", "g_c", "mode", "g_c_printed"],
        [vec![
            len.to_string(),
            fmt_f64(t),
            fmt_f64(theta),
            fmt_f64(phi),
            opt(derived.value()),
            mode,
            opt(printed.value()),
        ]],
    )?;
    match derived.value() {
        Some(g) => println!("g_c = {g} (sqrt(sin theta) reading: {})", opt(printed.value())),
        None => println!("no finite threshold in the two-level approximation"),
    }
    ctx.sidecar("effective.json", json!({ "g_c": derived.value(), "g_c_printed": printed.value() }))
}

/// Gram-Schmidt on a pair, so degenerate levels still give an orthonormal basis.
fn orthonormal_pair(a: &[Complex64], b: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 { x.iter().zip(y).map(|(p, q)| p.conj() * q).sum() };
    let norm = |x: &[Complex64]| dot(x, x).re.sqrt();
    let na = norm(a);
    let u: Vec<Complex64> = a.iter().map(|z| z / na).collect();
    let proj = dot(&u, b);
    let w: Vec<Complex64> = b.iter().zip(&u).map(|(y, x)| y - proj * x).collect();
    let nw = norm(&w);
    (u, w.iter().map(|z| z / nw).collect())
}

fn effective_open(ctx: &Ctx, spec: &ModelSpec<f64>) -> Result<()> {
    let g = spec.perturbations().iter().fold(0.0f64, |m, p| m.max(p.amplitude.norm()));
    if g == 0.0 {
        return Err(Error::config("perturbations", "needs a non-zero perturbation"));
    }
    let unit: Vec<_> = spec
        .perturbations()
        .iter()
        .map(|p| sfloc::PerturbationTerm::new(p.site_i, p.site_j, p.amplitude / g))
        .collect();
    let h0 = eig(&build_hamiltonian(&spec.clone().with_perturbations(Vec::new())?))?;
    let mut rows = Vec::new();
    let mut lowest: Option<(f64, usize)> = None;
    for a in 0..h0.len().saturating_sub(1) {
        let (lower, upper) = (a, a + 1);
        let (u, l) = orthonormal_pair(&h0.eigenvectors[upper], &h0.eigenvectors[lower]);
        let v = project_perturbation(&[u, l], &unit)?;
        let delta = 0.5 * (h0.eigenvalues[upper].re - h0.eigenvalues[lower].re);
        let dz = 0.5 * (v[(0, 0)] - v[(1, 1)]);
        let b = v[(0, 1)] * v[(1, 0)];
        let (dx, dy) = if b.re >= 0.0 { (b.re.sqrt(), 0.0) } else { (0.0, (-b.re).sqrt()) };
        let imag = dz.im.abs().max(b.im.abs());
        let g_c = obc_threshold(delta, ObcCoupling::Symmetric { dx, dy, dz: dz.re }).value();
        if let Some(gc) = g_c {
            if lowest.is_none_or(|(x, _)| gc < x) {
                lowest = Some((gc, lower));
            }
        }
        rows.push(vec![
            lower.to_string(),
            upper.to_string(),
            fmt_f64(h0.eigenvalues[lower].re),
            fmt_f64(h0.eigenvalues[upper].re),
            fmt_f64(delta),
            fmt_f64(dz.re),
            fmt_f64(dx),
            fmt_f64(dy),
            fmt_f64(imag),
            opt(g_c),
        ]);
    }
    write_csv(
        &ctx.path("effective_pairs.csv"),
        &["lower", "upper", "e_lower", "e_upper", "delta12", "dz", "dx", "dy", "imag_residual", "g_c"],
        rows,
    )?;
    match lowest {
        Some((gc, a)) => println!("lowest two-level threshold g_c = {gc} (levels {a}, {}); model g = {g}", a + 1),
        None => println!("no adjacent pair breaks in the two-level approximation"),
    }
    ctx.sidecar(
        "effective.json",
        json!({ "g": g, "lowest_g_c": lowest.map(|x| x.0), "lowest_pair": lowest.map(|x| x.1) }),
    )
}
