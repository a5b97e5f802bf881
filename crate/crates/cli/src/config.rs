//! Run configuration. The schema is strict: unknown keys anywhere are
//! errors, and everything a command needs is checked before it computes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tunnelgrid::case::DefectCase;
use tunnelgrid::frame::{build_frame_from_sites, Structure};
use tunnelgrid::operator::StencilOrder;
use tunnelgrid::potential::{
    coincidence, ingest, CoupledParams, FourWellParams, PotentialField, SplineField,
};
use tunnelgrid::presets;
use tunnelgrid::renorm::{subspace_case, SubspaceSelection};
use tunnelgrid::strain::{ElasticDipole, StrainTensor, STRAIN_BOUND};
use tunnelgrid::units::mass;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    pub potential: Option<PotentialConfig>,
    pub frame: Option<FrameConfig>,
    pub subspace: Option<SubspaceConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub sweep: Option<SweepConfig>,
    pub reduce: Option<ReduceConfig>,
    pub strain: Option<StrainConfig>,
    pub fls: Option<FlsConfig>,
    pub density: Option<DensityConfig>,
    /// Output directory; `--out` takes precedence.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "harmonic")]
    Harmonic,
    #[serde(rename = "quartic-1d")]
    Quartic1d,
    #[serde(rename = "oh-like")]
    OhLike,
    #[serde(rename = "fls-zr-like")]
    FlsZrLike,
}

/// Either a model preset with parameter overrides or an ingested dataset.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub preset: Option<Preset>,
    #[serde(default)]
    pub params: toml::Table,
    /// Dataset sidecar; relative paths resolve against the config file.
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub site_1: PathBuf,
    pub site_2: PathBuf,
    pub mirror_normal: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceConfig {
    pub active: Vec<String>,
    /// Values for inactive axes; unlisted axes default to the coincidence
    /// point for `Q` and zero otherwise.
    #[serde(default)]
    pub pins: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Node counts per active axis, replacing the source grid's counts.
    pub counts: Option<Vec<usize>>,
    pub refine: Option<usize>,
    /// Stencil order, 2 or 4.
    pub order: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub k: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub max_restarts: Option<usize>,
    pub ncv: Option<usize>,
}

fn default_axis() -> String {
    "Q".into()
}

fn default_m_ref() -> f64 {
    mass::NB
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub masses: Vec<f64>,
    #[serde(default = "default_axis")]
    pub axis: String,
    #[serde(default = "default_m_ref")]
    pub m_ref: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub subspaces: Vec<SubspaceConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrainConfig {
    /// Unstrained splitting (meV).
    pub j_mev: f64,
    /// `P_j − P_i` in eV, Voigt order.
    pub delta_p: [f64; 6],
    /// Strain direction, Voigt order; normalized before use.
    pub direction: [f64; 6],
    /// Strain magnitudes along the direction for the scan.
    #[serde(default)]
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlsConfig {
    /// Nearest-neighbour ring coupling (meV); omit to solve the potential.
    pub j: Option<f64>,
    #[serde(default)]
    pub j_nnn: f64,
    #[serde(default)]
    pub delta: [f64; 4],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Hydrogen density, nm⁻³.
    pub rho_h: f64,
    pub epsilon0_mev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HarmonicParams {
    hbar_omega: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuarticParams {
    v_b: f64,
    a: f64,
    half_width: f64,
}

/// A parsed config with its provenance.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    /// SHA-256 of the config file bytes, hex.
    pub hash: String,
    pub file_name: String,
    dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    Ok(Loaded {
        config,
        hash: sha256_hex(&bytes),
        file_name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Input file read during a run, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameReport {
    pub labels: Vec<String>,
    pub q_y12: f64,
    pub q_lr: f64,
    pub orthonormality_error: f64,
}

/// Everything a grid command needs, built and checked but not solved.
pub struct Prepared {
    pub case: DefectCase,
    /// Case before any subspace restriction.
    pub full_case: DefectCase,
    pub source: String,
    pub inputs: Vec<InputRecord>,
    pub frame: Option<FrameReport>,
}

fn with_overrides<T: Serialize + DeserializeOwned>(defaults: &T, overrides: &toml::Table) -> Result<T, CliError> {
    let toml::Value::Table(mut table) = toml::Value::try_from(defaults).expect("parameters serialize") else {
        unreachable!("parameter structs serialize to tables")
    };
    for (k, v) in overrides {
        if !table.contains_key(k) {
            let known: Vec<&String> = table.keys().collect();
            return Err(CliError::Config(format!("potential.params: unknown key `{k}` (expected one of {known:?})")));
        }
        table.insert(k.clone(), v.clone());
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(format!("potential.params: {e}")))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Loaded {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    fn record(&self, p: &Path) -> Result<InputRecord, CliError> {
        let full = self.resolve(p);
        Ok(InputRecord { path: p.display().to_string(), sha256: sha256_hex(&read(&full)?) })
    }

    fn potential(&self) -> Result<&PotentialConfig, CliError> {
        self.config.potential.as_ref().ok_or_else(|| CliError::Config("missing [potential] section".into()))
    }

    /// Builds the configured case, subspace and frame without solving.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let pc = self.potential()?;
        let mut inputs = Vec::new();
        let (mut case, source) = match (&pc.preset, &pc.sidecar) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("potential: give either `preset` or `sidecar`, not both".into()))
            }
            (None, None) => return Err(CliError::Config("potential: one of `preset` or `sidecar` is required".into())),
            (Some(preset), None) => {
                let c = self.preset_case(*preset, &pc.params)?;
                let name = serde_json::to_value(preset).expect("preset name");
                (c, format!("preset:{}", name.as_str().unwrap_or_default()))
            }
            (None, Some(sidecar)) => {
                if !pc.params.is_empty() {
                    return Err(CliError::Config("potential.params only applies to presets".into()));
                }
                let full = self.resolve(sidecar);
                let sampled = ingest(&full)?;
                inputs.push(self.record(sidecar)?);
                let data = data_file(&full)?;
                if let Some(d) = data {
                    let rel = sidecar.parent().map(|p| p.join(&d)).unwrap_or_else(|| PathBuf::from(&d));
                    inputs.push(self.record(&rel)?);
                }
                let field: Arc<dyn PotentialField> = Arc::new(SplineField::new(&sampled));
                let case = DefectCase::new(field, sampled.spec().clone()).with_k(4);
                (case, format!("sidecar:{}", sidecar.display()))
            }
        };

        let g = &self.config.grid;
        if let Some(counts) = &g.counts {
            let active = case.grid.active_count();
            if counts.len() != active {
                return Err(CliError::Config(format!("grid.counts has {} entries, the grid has {active} active axes", counts.len())));
            }
            if counts.iter().any(|&c| c < 3) {
                return Err(CliError::Config("grid.counts entries must be at least 3".into()));
            }
            case.grid = case.grid.with_counts(counts)?;
        }
        if let Some(f) = g.refine {
            if f == 0 {
                return Err(CliError::Config("grid.refine must be at least 1".into()));
            }
            case.grid = case.grid.refine(f)?;
        }
        if let Some(o) = g.order {
            case.order = StencilOrder::try_from(o).map_err(|_| CliError::Config(format!("grid.order must be 2 or 4, got {o}")))?;
        }
        let s = &self.config.solver;
        if let Some(k) = s.k {
            if k == 0 {
                return Err(CliError::Config("solver.k must be at least 1".into()));
            }
            case.solver.k = k;
        }
        if let Some(t) = s.tol {
            positive("solver.tol", t)?;
            case.solver.tol = t;
        }
        if let Some(seed) = s.seed {
            case.solver.seed = seed;
        }
        if let Some(m) = s.max_restarts {
            case.solver.max_restarts = m;
        }
        if let Some(n) = s.ncv {
            if n <= case.solver.k {
                return Err(CliError::Config(format!("solver.ncv = {n} must exceed k = {}", case.solver.k)));
            }
            case.solver.ncv = Some(n);
        }
        if case.solver.k >= case.grid.len() {
            return Err(CliError::Config(format!("solver.k = {} is too large for {} grid points", case.solver.k, case.grid.len())));
        }

        let frame = match &self.config.frame {
            None => None,
            Some(fc) => {
                let parse = |p: &Path| -> Result<Structure, CliError> {
                    let text = String::from_utf8(read(&self.resolve(p))?)
                        .map_err(|_| CliError::Config(format!("{} is not UTF-8", p.display())))?;
                    Ok(text.parse()?)
                };
                let (a, b) = (parse(&fc.site_1)?, parse(&fc.site_2)?);
                inputs.push(self.record(&fc.site_1)?);
                inputs.push(self.record(&fc.site_2)?);
                let f = build_frame_from_sites(&a, &b, fc.mirror_normal)?;
                Some(FrameReport {
                    labels: f.labels().to_vec(),
                    q_y12: f.q_y12(),
                    q_lr: f.q_lr(),
                    orthonormality_error: f.orthonormality_error(),
                })
            }
        };

        let full_case = case.clone();
        let case = match &self.config.subspace {
            None => case,
            Some(sc) => self.restrict(&full_case, sc)?,
        };
        Ok(Prepared { case, full_case, source, inputs, frame })
    }

    fn preset_case(&self, preset: Preset, params: &toml::Table) -> Result<DefectCase, CliError> {
        Ok(match preset {
            Preset::Harmonic => {
                let p = with_overrides(&HarmonicParams { hbar_omega: vec![presets::LADDER_QUANTA[0]] }, params)?;
                for w in &p.hbar_omega {
                    positive("hbar_omega", *w)?;
                }
                let (_, c) = presets::harmonic(&p.hbar_omega, presets::LADDER_COUNT)?;
                c.with_k(6)
            }
            Preset::Quartic1d => {
                let d = QuarticParams { v_b: presets::QUARTIC_V_B, a: presets::QUARTIC_A, half_width: presets::QUARTIC_HALF_WIDTH };
                let p = with_overrides(&d, params)?;
                positive("half_width", p.half_width)?;
                let w = tunnelgrid::potential::QuarticDoubleWell::new(p.v_b, p.a)?;
                let grid = w.grid(p.half_width, presets::QUARTIC_COUNT);
                DefectCase::new(Arc::new(w), grid).with_order(StencilOrder::Fourth).with_k(4)
            }
            Preset::OhLike => {
                let p: CoupledParams = with_overrides(&CoupledParams::oh_like(), params)?;
                presets::oh_like_with(p, 2)?.1
            }
            Preset::FlsZrLike => {
                let p: FourWellParams = with_overrides(&FourWellParams::zr_like(), params)?;
                let m = tunnelgrid::potential::FourWellModel::new(p, tunnelgrid::potential::LatticeAxes::Qp)?;
                let grid = m.grid(presets::FLS_COUNTS, 0.9, 0.9, 0.12);
                DefectCase::new(Arc::new(m), grid).with_k(4)
            }
        })
    }

    /// Subspace selection with default pins filled in: `Q` at the
    /// coincidence point, every other axis at zero.
    pub fn selection(&self, case: &DefectCase, sc: &SubspaceConfig) -> Result<SubspaceSelection, CliError> {
        if sc.active.is_empty() {
            return Err(CliError::Config("subspace.active must name at least one axis".into()));
        }
        let labels = case.field.domain().labels().to_vec();
        for l in sc.active.iter().chain(sc.pins.keys()) {
            if !labels.contains(l) {
                return Err(CliError::Config(format!("axis `{l}` is not defined; the field has {labels:?}")));
            }
        }
        if let Some(l) = sc.active.iter().find(|l| sc.pins.contains_key(*l)) {
            return Err(CliError::Config(format!("axis `{l}` is both active and pinned")));
        }
        let needs_qc = labels.iter().any(|l| l == "Q" && !sc.active.contains(l) && !sc.pins.contains_key(l));
        let q_c = if needs_qc { coincidence(case.field.as_ref(), &case.grid)?.q_c } else { 0.0 };
        let active: Vec<&str> = sc.active.iter().map(String::as_str).collect();
        let mut sel = SubspaceSelection::with_default_pins(case.field.as_ref(), &active, q_c);
        for (l, v) in &mut sel.pins {
            if let Some(x) = sc.pins.get(l) {
                *v = *x;
            }
        }
        Ok(sel)
    }

    pub fn restrict(&self, case: &DefectCase, sc: &SubspaceConfig) -> Result<DefectCase, CliError> {
        let sel = self.selection(case, sc)?;
        let mut sub = subspace_case(case, &sel)?;
        if sub.solver.k >= sub.grid.len() {
            sub.solver.k = sub.grid.len() - 1;
        }
        Ok(sub)
    }

    pub fn sweep(&self) -> Result<&SweepConfig, CliError> {
        let s = self.config.sweep.as_ref().ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
        if s.masses.is_empty() {
            return Err(CliError::Config("sweep.masses is empty".into()));
        }
        for m in &s.masses {
            positive("sweep.masses entry", *m)?;
        }
        positive("sweep.m_ref", s.m_ref)?;
        Ok(s)
    }

    pub fn reduce(&self) -> Result<&ReduceConfig, CliError> {
        let r = self.config.reduce.as_ref().ok_or_else(|| CliError::Config("missing [reduce] section".into()))?;
        if r.subspaces.is_empty() {
            return Err(CliError::Config("reduce.subspaces is empty".into()));
        }
        Ok(r)
    }

    pub fn strain(&self) -> Result<(&StrainConfig, ElasticDipole, StrainTensor), CliError> {
        let s = self.config.strain.as_ref().ok_or_else(|| CliError::Config("missing [strain] section".into()))?;
        if !(s.j_mev >= 0.0) {
            return Err(CliError::Config(format!("strain.j_mev must be non-negative, got {}", s.j_mev)));
        }
        let dp = ElasticDipole::from_voigt(s.delta_p)?;
        let norm = s.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(CliError::Config("strain.direction must be non-zero".into()));
        }
        // Keep the direction well inside the accepted strain range.
        let scale = 0.5 * STRAIN_BOUND / s.direction.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dir = StrainTensor::from_voigt(s.direction.map(|x| x * scale))?;
        for &m in &s.magnitudes {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(CliError::Config(format!("strain.magnitudes entries must be non-negative, got {m}")));
            }
        }
        Ok((s, dp, dir))
    }

    pub fn fls(&self) -> Result<&FlsConfig, CliError> {
        let f = self.config.fls.as_ref().ok_or_else(|| CliError::Config("missing [fls] section".into()))?;
        match f.j {
            Some(j) if !(j >= 0.0 && j.is_finite()) => {
                Err(CliError::Config(format!("fls.j must be non-negative, got {j}")))
            }
            None if self.config.potential.is_none() => {
                Err(CliError::Config("fls: give `j` for the ring model or a [potential] to solve".into()))
            }
            _ => Ok(f),
        }
    }

    pub fn density(&self) -> Result<&DensityConfig, CliError> {
        let d = self.config.density.as_ref().ok_or_else(|| CliError::Config("missing [density] section".into()))?;
        positive("density.rho_h", d.rho_h)?;
        positive("density.epsilon0_mev", d.epsilon0_mev)?;
        Ok(d)
    }

    pub fn sidecar(&self) -> Result<(PathBuf, Vec<InputRecord>), CliError> {
        let pc = self.potential()?;
        let s = pc.sidecar.as_ref().ok_or_else(|| CliError::Config("ingest-check needs potential.sidecar".into()))?;
        let full = self.resolve(s);
        let mut inputs = vec![self.record(s)?];
        if let Some(d) = data_file(&full)? {
            let rel = s.parent().map(|p| p.join(&d)).unwrap_or_else(|| PathBuf::from(&d));
            inputs.push(self.record(&rel)?);
        }
        Ok((full, inputs))
    }
}

/// The `data` entry of a sidecar, if it parses that far.
fn data_file(sidecar: &Path) -> Result<Option<String>, CliError> {
    let text = String::from_utf8_lossy(&read(sidecar)?).into_owned();
    let v: toml::Table = match toml::from_str(&text) {
        Ok(v) => v,
        Err(_) => return Ok(None),
    };
    Ok(v.get("data").and_then(|d| d.as_str()).map(str::to_string))
}
