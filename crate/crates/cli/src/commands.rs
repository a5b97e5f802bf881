use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use tunnelgrid::case::DefectCase;
use tunnelgrid::grid::GridSpec;
use tunnelgrid::potential::{find_minima, ingest, PotentialField, SplineField};
use tunnelgrid::renorm::sweep_mass;
use tunnelgrid::spectra::SplittingStatus;
use tunnelgrid::strain::{
    asymmetry, fls_from_grid, fls_levels, quench_strain, tls_density, two_site_levels, ElasticDipole, SiteNetwork,
};

use crate::config::{InputRecord, Loaded};
use crate::error::CliError;
use crate::output::OutDir;

/// Exit status for a finished command.
pub const OK: i32 = 0;
/// Finished, but the headline quantity is not trustworthy.
pub const UNRESOLVED: i32 = 2;

#[derive(Serialize)]
struct GridReport {
    labels: Vec<String>,
    counts: Vec<usize>,
    min: Vec<f64>,
    max: Vec<f64>,
    points: usize,
    order: u32,
    mass_factors: Vec<f64>,
}

fn grid_report(case: &DefectCase) -> GridReport {
    let g: &GridSpec = &case.grid;
    GridReport {
        labels: g.labels().iter().map(|s| s.to_string()).collect(),
        counts: g.shape(),
        min: g.axes().iter().map(|a| a.min).collect(),
        max: g.axes().iter().map(|a| a.max).collect(),
        points: g.len(),
        order: case.order.as_u32(),
        mass_factors: case.mass_factors.clone(),
    }
}

fn fmt_j(j: Option<f64>) -> String {
    j.map_or_else(|| "NA".into(), |j| format!("{j:.9e}"))
}

pub fn solve(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["spectrum.json", "spectrum.csv", "manifest.json"];
    let prep = cfg.prepare()?;
    out.check(&names)?;
    let case = &prep.case;
    let (res, spec) = case.spectrum()?;

    let spectrum_json = out.json(&json!({
        "case": cfg.config.case,
        "source": prep.source,
        "grid": grid_report(case),
        "frame": prep.frame,
        "spectrum": spec,
    }));
    let spectrum_csv = out.csv(&spec.to_csv());
    let outputs: BTreeMap<&str, String> = [
        (names[0], crate::config::sha256_hex(spectrum_json.as_bytes())),
        (names[1], crate::config::sha256_hex(spectrum_csv.as_bytes())),
    ]
    .into();
    let manifest = out.json(&json!({
        "case": cfg.config.case,
        "config_file": cfg.file_name,
        "command": "solve",
        "seed": case.solver.seed,
        "inputs": prep.inputs,
        "solver": {
            "k": case.solver.k,
            "tol": case.solver.tol,
            "ncv": case.solver.ncv,
            "max_restarts": case.solver.max_restarts,
        },
        "converged": res.converged,
        "iterations": res.iterations,
        "matvecs": res.matvecs,
        "residuals": res.residuals,
        "outputs": outputs,
        "version": env!("CARGO_PKG_VERSION"),
    }));
    out.write_all(&[(names[0], spectrum_json), (names[1], spectrum_csv), (names[2], manifest)])?;

    let status = serde_json::to_value(spec.splitting_status).expect("status");
    println!(
        "J_meV={} status={} config_hash={}",
        fmt_j(spec.splitting_mev),
        status.as_str().unwrap_or_default(),
        out.hash()
    );
    Ok(match spec.splitting_status {
        SplittingStatus::Resolved | SplittingStatus::NotApplicable => OK,
        SplittingStatus::SplittingUnresolved | SplittingStatus::DoubletNotFound => UNRESOLVED,
    })
}

pub fn sweep(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["sweep.csv", "sweep_fit.json"];
    let s = cfg.sweep()?;
    let prep = cfg.prepare()?;
    if prep.case.grid.axis_index(&s.axis).is_none() {
        return Err(CliError::Config(format!("sweep.axis `{}` is not a grid axis", s.axis)));
    }
    out.check(&names)?;
    let r = sweep_mass(&prep.case, &s.axis, &s.masses, s.m_ref)?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mass_amu", "scale_factor", "J_meV", "converged"]).expect("in-memory write");
    for p in &r.points {
        w.write_record([
            format!("{}", p.mass_amu),
            format!("{:.12}", p.scale_factor),
            p.j_mev.map_or(String::new(), |j| format!("{j:.12e}")),
            (p.converged as u8).to_string(),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    let fit = out.json(&json!({
        "case": cfg.config.case,
        "axis": s.axis,
        "grid": grid_report(&prep.case),
        "inputs": prep.inputs,
        "sweep": r,
        "fit_model": "ln J = intercept + slope * sqrt(m / m_ref)",
    }));
    out.write_all(&[(names[0], out.csv(&body)), (names[1], fit)])?;
    match &r.fit {
        Some(f) => println!(
            "slope={:.9e} intercept={:.9e} r_squared={:.9} config_hash={}",
            f.slope,
            f.intercept,
            f.r_squared,
            out.hash()
        ),
        None => println!("fit=NA config_hash={}", out.hash()),
    }
    Ok(if r.partial { UNRESOLVED } else { OK })
}

#[derive(Serialize)]
struct ReduceRow {
    dims: usize,
    active: Vec<String>,
    pins: Vec<(String, f64)>,
    j_mev: Option<f64>,
    status: SplittingStatus,
    zpe_mev: f64,
    converged: bool,
}

pub fn reduce(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["reduce.csv", "reduce.json"];
    let r = cfg.reduce()?;
    let prep = cfg.prepare()?;
    // Every selection is checked before the first solve.
    let cases = r
        .subspaces
        .iter()
        .map(|sc| Ok((cfg.selection(&prep.full_case, sc)?, cfg.restrict(&prep.full_case, sc)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    out.check(&names)?;
    let mut rows = Vec::with_capacity(cases.len());
    for (sel, case) in &cases {
        let (res, spec) = case.spectrum()?;
        rows.push(ReduceRow {
            dims: case.grid.active_count(),
            active: sel.active.clone(),
            pins: sel.pins.clone(),
            j_mev: spec.splitting_mev,
            status: spec.splitting_status,
            zpe_mev: spec.zpe_mev,
            converged: res.converged,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dims", "active", "pins", "J_meV", "ZPE_meV", "status"]).expect("in-memory write");
    for row in &rows {
        let pins: Vec<String> = row.pins.iter().map(|(l, v)| format!("{l}={v}")).collect();
        let status = serde_json::to_value(row.status).expect("status");
        w.write_record([
            row.dims.to_string(),
            row.active.join(" "),
            pins.join(" "),
            row.j_mev.map_or(String::new(), |j| format!("{j:.12e}")),
            format!("{:.12}", row.zpe_mev),
            status.as_str().unwrap_or_default().to_string(),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    let json = out.json(&json!({
        "case": cfg.config.case,
        "source": prep.source,
        "inputs": prep.inputs,
        "rows": rows,
    }));
    out.write_all(&[(names[0], out.csv(&body)), (names[1], json)])?;
    for row in &rows {
        println!("dims={} active={} J_meV={}", row.dims, row.active.join(","), fmt_j(row.j_mev));
    }
    let unresolved = rows.iter().any(|r| matches!(r.status, SplittingStatus::SplittingUnresolved | SplittingStatus::DoubletNotFound));
    Ok(if unresolved { UNRESOLVED } else { OK })
}

pub fn strain(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["strain.json"];
    let (s, dp, dir) = cfg.strain()?;
    let quench = quench_strain(s.j_mev, &dp, &dir)?;
    let mut mags = s.magnitudes.clone();
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    let zero = ElasticDipole::from_voigt([0.0; 6])?;
    let unit = 1.0 / dir.frobenius();
    let mut scan = Vec::with_capacity(mags.len());
    for &m in &mags {
        let eps = dir.scaled(m * unit)?;
        let delta = asymmetry(&zero, &dp, &eps);
        let (lo, hi) = two_site_levels(s.j_mev, delta)?;
        scan.push(json!({ "strain": m, "asymmetry_meV": delta, "splitting_meV": hi - lo }));
    }
    out.check(&names)?;
    let report = out.json(&json!({
        "case": cfg.config.case,
        "j_meV": s.j_mev,
        "delta_p_eV": s.delta_p,
        "direction": s.direction,
        "quench_strain": quench,
        "scan": scan,
    }));
    out.write_all(&[(names[0], report)])?;
    println!("quench_strain={quench:.6e} config_hash={}", out.hash());
    Ok(OK)
}

pub fn fls(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["fls.json"];
    let f = cfg.fls()?;
    let report = match f.j {
        Some(j) => {
            let net = SiteNetwork::ring(4, j, f.j_nnn, f.delta.to_vec())?;
            out.check(&names)?;
            let levels = fls_levels(&net)?;
            json!({
                "case": cfg.config.case,
                "model": "ring",
                "j_meV": j,
                "j_nnn_meV": f.j_nnn,
                "delta_meV": f.delta,
                "levels_meV": levels,
            })
        }
        None => {
            let prep = cfg.prepare()?;
            out.check(&names)?;
            let r = fls_from_grid(&prep.case)?;
            json!({
                "case": cfg.config.case,
                "model": "grid",
                "source": prep.source,
                "grid": grid_report(&prep.case),
                "inputs": prep.inputs,
                "levels_meV": r.levels,
                "j_eff_meV": r.j_eff,
                "j_ring_meV": r.j_ring,
                "j_nnn_meV": r.j_nnn,
                "wells": r.wells,
            })
        }
    };
    let levels: Vec<String> = report["levels_meV"]
        .as_array()
        .expect("levels")
        .iter()
        .map(|v| format!("{:.9}", v.as_f64().unwrap_or(f64::NAN)))
        .collect();
    out.write_all(&[(names[0], out.json(&report))])?;
    println!("levels_meV={} config_hash={}", levels.join(","), out.hash());
    Ok(OK)
}

pub fn density(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["density.json"];
    let d = cfg.density()?;
    out.check(&names)?;
    let n = tls_density(d.rho_h, d.epsilon0_mev)?;
    let report = out.json(&json!({
        "case": cfg.config.case,
        "rho_h_per_nm3": d.rho_h,
        "epsilon0_meV": d.epsilon0_mev,
        "tls_density_per_eV_nm3": n,
    }));
    out.write_all(&[(names[0], report)])?;
    println!("tls_density={n:.6} config_hash={}", out.hash());
    Ok(OK)
}

#[derive(Serialize)]
struct MinimumReport {
    point: Vec<f64>,
    #[serde(rename = "energy_meV")]
    energy_mev: f64,
}

pub fn ingest_check(cfg: &Loaded, out: &OutDir) -> Result<i32, CliError> {
    let names = ["ingest.json"];
    let (sidecar, inputs): (_, Vec<InputRecord>) = cfg.sidecar()?;
    let sampled = ingest(&sidecar)?;
    out.check(&names)?;
    let spec = sampled.spec();
    let field: Arc<dyn PotentialField> = Arc::new(SplineField::new(&sampled));
    let minima = find_minima(field.as_ref(), spec)?;
    let e = sampled.energies();
    let report = out.json(&json!({
        "case": cfg.config.case,
        "inputs": inputs,
        "axes": spec.axes().iter().map(|a| json!({
            "label": a.label, "min": a.min, "max": a.max, "count": a.count,
        })).collect::<Vec<_>>(),
        "samples": e.len(),
        "metadata": sampled.metadata(),
        "reference_energy": sampled.reference(),
        "energy_max_meV": e.iter().copied().fold(0.0, f64::max),
        "minima": minima.iter().map(|m| MinimumReport { point: m.point.clone(), energy_mev: m.energy }).collect::<Vec<_>>(),
    }));
    out.write_all(&[(names[0], report)])?;
    println!("samples={} minima={} config_hash={}", e.len(), minima.len(), out.hash());
    Ok(OK)
}
