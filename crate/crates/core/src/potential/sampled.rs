//! Sampled landscapes and their on-disk format.
//!
//! A dataset is a TOML sidecar describing the axes and provenance plus a
//! comma-separated data file with one row per grid point:
//! `i1,...,iN,energy_meV`, zero-based indices, `#` comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sample_on_grid, PotentialError, PotentialField};
use crate::grid::{GridAxis, GridError, GridSpec};

/// Largest number of axes (active or pinned) a dataset may carry.
pub const MAX_SAMPLE_AXES: usize = 8;

pub const COORD_UNITS: &str = "amu^1/2*angstrom";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarAxis {
    label: String,
    min: f64,
    max: f64,
    count: usize,
    #[serde(default = "default_units")]
    units: String,
}

fn default_units() -> String {
    COORD_UNITS.to_string()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    data: String,
    #[serde(default)]
    metadata: Metadata,
    axis: Vec<SidecarAxis>,
}

/// Energies on a complete rectangular lattice, re-referenced so that the
/// lowest sample is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPotential {
    spec: GridSpec,
    energies: Vec<f64>,
    metadata: Metadata,
    reference: f64,
}

impl SampledPotential {
    pub fn new(spec: GridSpec, mut energies: Vec<f64>, metadata: Metadata) -> Result<Self, PotentialError> {
        if spec.ndim() > MAX_SAMPLE_AXES {
            return Err(PotentialError::MalformedSidecar(format!(
                "{} axes, at most {MAX_SAMPLE_AXES} supported",
                spec.ndim()
            )));
        }
        if energies.len() != spec.len() {
            return Err(PotentialError::CountMismatch { expected: spec.len(), got: energies.len() });
        }
        if let Some(i) = energies.iter().position(|e| !e.is_finite()) {
            return Err(PotentialError::NonFinite(i));
        }
        let reference = energies.iter().copied().fold(f64::INFINITY, f64::min);
        for e in &mut energies {
            *e -= reference;
        }
        Ok(Self { spec, energies, metadata, reference })
    }

    /// Samples an analytic field on `spec`.
    pub fn from_field(field: &dyn PotentialField, spec: GridSpec, metadata: Metadata) -> Result<Self, PotentialError> {
        let energies = sample_on_grid(field, &spec)?;
        Self::new(spec, energies, metadata)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    /// Raw energy subtracted during re-referencing.
    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// Sidecar text naming `data_file` as the data path.
    pub fn sidecar_text(&self, data_file: &str) -> String {
        let sc = Sidecar {
            data: data_file.to_string(),
            metadata: self.metadata.clone(),
            axis: self
                .spec
                .axes()
                .iter()
                .map(|a| SidecarAxis {
                    label: a.label.clone(),
                    min: a.min,
                    max: a.max,
                    count: a.count,
                    units: default_units(),
                })
                .collect(),
        };
        toml::to_string(&sc).expect("sidecar serializes")
    }

    pub fn data_text(&self) -> String {
        let mut s = String::from("# indices..., energy_meV\n");
        let mut idx = vec![0usize; self.spec.ndim()];
        for (i, e) in self.energies.iter().enumerate() {
            self.spec.unravel(i, &mut idx);
            for j in &idx {
                let _ = write!(s, "{j},");
            }
            let _ = writeln!(s, "{e}");
        }
        s
    }

    /// Writes `<stem>.toml` and `<stem>.csv` into `dir`; returns the sidecar path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf, PotentialError> {
        let data_name = format!("{stem}.csv");
        let sidecar = dir.join(format!("{stem}.toml"));
        let data = dir.join(&data_name);
        fs::write(&data, self.data_text()).map_err(|e| io_err(&data, e))?;
        fs::write(&sidecar, self.sidecar_text(&data_name)).map_err(|e| io_err(&sidecar, e))?;
        Ok(sidecar)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PotentialError {
    PotentialError::Io { path: path.display().to_string(), source }
}

/// Reads a dataset from its sidecar; the data path is resolved relative to
/// the sidecar's directory.
pub fn ingest(sidecar: &Path) -> Result<SampledPotential, PotentialError> {
    let text = fs::read_to_string(sidecar).map_err(|e| io_err(sidecar, e))?;
    let sc: Sidecar = toml::from_str(&text).map_err(|e| PotentialError::MalformedSidecar(e.to_string()))?;
    let data_path = sidecar.parent().unwrap_or(Path::new(".")).join(&sc.data);
    let data = fs::read_to_string(&data_path).map_err(|e| io_err(&data_path, e))?;
    parse_dataset(sc, &data)
}

/// Parses a dataset held in memory.
pub fn parse(sidecar: &str, data: &str) -> Result<SampledPotential, PotentialError> {
    let sc: Sidecar = toml::from_str(sidecar).map_err(|e| PotentialError::MalformedSidecar(e.to_string()))?;
    parse_dataset(sc, data)
}

fn parse_dataset(sc: Sidecar, data: &str) -> Result<SampledPotential, PotentialError> {
    let mut axes = Vec::with_capacity(sc.axis.len());
    for a in sc.axis {
        if a.units != COORD_UNITS {
            return Err(PotentialError::MalformedSidecar(format!(
                "axis `{}` has units `{}`, expected `{COORD_UNITS}`",
                a.label, a.units
            )));
        }
        if a.count >= 2 && a.max <= a.min {
            return Err(PotentialError::NonMonotoneAxis(a.label));
        }
        axes.push(GridAxis { label: a.label, min: a.min, max: a.max, count: a.count });
    }
    let spec = GridSpec::new(axes).map_err(|e| match e {
        GridError::InvalidRange(l) => PotentialError::NonMonotoneAxis(l),
        e => PotentialError::Grid(e),
    })?;
    let n = spec.ndim();
    let shape = spec.shape();
    let mut energies: Vec<Option<f64>> = vec![None; spec.len()];
    let mut seen_at: HashMap<usize, usize> = HashMap::new();
    for (lineno, raw) in data.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| PotentialError::MalformedRow { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != n + 1 {
            return Err(bad(format!("expected {} fields, found {}", n + 1, fields.len())));
        }
        let mut idx = Vec::with_capacity(n);
        for (d, f) in fields[..n].iter().enumerate() {
            let i: usize = f.parse().map_err(|_| bad(format!("invalid index `{f}`")))?;
            if i >= shape[d] {
                return Err(bad(format!("index {i} out of range for axis `{}`", spec.axis(d).label)));
            }
            idx.push(i);
        }
        let e: f64 = fields[n].parse().map_err(|_| bad(format!("invalid energy `{}`", fields[n])))?;
        if !e.is_finite() {
            return Err(bad("non-finite energy".into()));
        }
        let flat = spec.ravel(&idx);
        match energies[flat] {
            Some(prev) if prev.to_bits() != e.to_bits() => {
                return Err(bad(format!(
                    "index {idx:?} repeats line {} with a different energy",
                    seen_at[&flat]
                )));
            }
            Some(_) => {}
            None => {
                energies[flat] = Some(e);
                seen_at.insert(flat, line_no);
            }
        }
    }
    let mut out = Vec::with_capacity(energies.len());
    for (flat, e) in energies.into_iter().enumerate() {
        match e {
            Some(e) => out.push(e),
            None => {
                let mut idx = vec![0; n];
                spec.unravel(flat, &mut idx);
                return Err(PotentialError::MissingSample(idx));
            }
        }
    }
    SampledPotential::new(spec, out, sc.metadata)
}
