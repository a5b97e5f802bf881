//! Landscape scalars: well minima, coincidence point and barrier height.

use super::{sample_on_grid, PotentialError, PotentialField};
use crate::grid::GridSpec;

/// Label of the composite lattice axis.
pub const Q_AXIS: &str = "Q";

const POLISH_MAX_ITER: usize = 2000;
const PROFILE_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coincidence {
    /// Lattice coordinate where both well curves meet.
    pub q_c: f64,
    /// Common energy there, relative to the lower well.
    pub e_c_prime: f64,
    pub wells: [Minimum; 2],
}

struct Box_ {
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: Vec<f64>,
}

impl Box_ {
    fn of(spec: &GridSpec) -> Self {
        Self {
            lo: spec.axes().iter().map(|a| a.min).collect(),
            hi: spec.axes().iter().map(|a| a.max).collect(),
            h: spec.axes().iter().map(|a| a.spacing()).collect(),
        }
    }
}

/// Coordinate-wise Newton descent over `dims`, using central differences
/// with step `1e-4·h` and never leaving the box.
fn polish(field: &dyn PotentialField, x: &mut [f64], dims: &[usize], bx: &Box_) -> f64 {
    let mut f0 = field.value(x);
    for _ in 0..POLISH_MAX_ITER {
        let mut moved: f64 = 0.0;
        for &d in dims {
            let h = bx.h[d];
            let hd = 1e-4 * h;
            let x0 = x[d];
            x[d] = x0 + hd;
            let fp = field.value(x);
            x[d] = x0 - hd;
            let fm = field.value(x);
            x[d] = x0;
            let grad = (fp - fm) / (2.0 * hd);
            let curv = (fp - 2.0 * f0 + fm) / (hd * hd);
            let mut step = if curv > 0.0 { -grad / curv } else { -grad.signum() * 0.5 * h };
            step = step.clamp(-h, h);
            let mut accepted = false;
            for _ in 0..30 {
                let trial = (x0 + step).clamp(bx.lo[d], bx.hi[d]);
                if trial == x0 {
                    break;
                }
                x[d] = trial;
                let ft = field.value(x);
                if ft < f0 {
                    f0 = ft;
                    moved = moved.max((trial - x0).abs() / h);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                x[d] = x0;
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    f0
}

fn on_boundary(x: &[f64], dims: &[usize], bx: &Box_) -> bool {
    dims.iter().any(|&d| {
        let tol = 1e-9 * (bx.hi[d] - bx.lo[d]);
        x[d] - bx.lo[d] <= tol || bx.hi[d] - x[d] <= tol
    })
}

/// Interior local minima of `field` inside the grid box, sorted by energy.
///
/// Grid nodes lower than all their axis neighbours seed a coordinate-wise
/// Newton polish; seeds that converge to the same point are merged and
/// minima pinned against the box boundary are dropped.
pub fn find_minima(field: &dyn PotentialField, grid: &GridSpec) -> Result<Vec<Minimum>, PotentialError> {
    let values = sample_on_grid(field, grid)?;
    let dims = grid.active_dims();
    let bx = Box_::of(grid);
    let strides = grid.strides();
    let mut idx = vec![0usize; grid.ndim()];
    let mut found: Vec<Minimum> = Vec::new();
    for i in 0..values.len() {
        grid.unravel(i, &mut idx);
        let v = values[i];
        let is_min = dims.iter().all(|&d| {
            let lower_ok = idx[d] == 0 || {
                let j = i - strides[d];
                values[j] > v
            };
            let upper_ok = idx[d] + 1 == grid.axis(d).count || {
                let j = i + strides[d];
                values[j] >= v
            };
            lower_ok && upper_ok
        });
        if !is_min {
            continue;
        }
        let mut x = grid.point(i);
        let e = polish(field, &mut x, &dims, &bx);
        if on_boundary(&x, &dims, &bx) {
            continue;
        }
        let close = |m: &Minimum| {
            dims.iter().all(|&d| (m.point[d] - x[d]).abs() < 0.25 * bx.h[d])
        };
        match found.iter_mut().find(|m| close(m)) {
            Some(m) if e < m.energy => {
                m.point = x;
                m.energy = e;
            }
            Some(_) => {}
            None => found.push(Minimum { point: x, energy: e }),
        }
    }
    found.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| a.point.partial_cmp(&b.point).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(found)
}

fn two_wells(field: &dyn PotentialField, grid: &GridSpec) -> Result<[Minimum; 2], PotentialError> {
    let mut minima = find_minima(field, grid)?;
    if minima.len() < 2 {
        return Err(PotentialError::SingleWell);
    }
    minima.truncate(2);
    let q = field.domain().axis_index(Q_AXIS);
    // Order the pair along the lattice axis when there is one.
    if let Some(q) = q {
        minima.sort_by(|a, b| a.point[q].total_cmp(&b.point[q]));
    }
    let b = minima.pop().expect("two minima");
    let a = minima.pop().expect("two minima");
    Ok([a, b])
}

/// Coincidence point of the two lowest wells: the `Q` at which the energy
/// curves `V(q₁, Q)` and `V(q₂, Q)` cross, bracketed between the wells'
/// own `Q` values, and the energy there above the lower well.
pub fn coincidence(field: &dyn PotentialField, search: &GridSpec) -> Result<Coincidence, PotentialError> {
    let q = field.domain().axis_index(Q_AXIS).ok_or(PotentialError::MissingQAxis)?;
    let wells = two_wells(field, search)?;
    let v_min = wells[0].energy.min(wells[1].energy);
    let curve = |w: &Minimum, qv: f64| {
        let mut p = w.point.clone();
        p[q] = qv;
        field.value(&p)
    };
    let diff = |qv: f64| curve(&wells[0], qv) - curve(&wells[1], qv);
    let (mut lo, mut hi) = (wells[0].point[q], wells[1].point[q]);
    let (mut dlo, dhi) = (diff(lo), diff(hi));
    if dlo == 0.0 {
        hi = lo;
    } else if dhi == 0.0 {
        lo = hi;
    } else if dlo.signum() == dhi.signum() {
        return Err(PotentialError::NoCrossing);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = diff(mid);
        if dm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if dm.signum() == dlo.signum() {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
    }
    let q_c = 0.5 * (lo + hi);
    let e = 0.5 * (curve(&wells[0], q_c) + curve(&wells[1], q_c));
    Ok(Coincidence { q_c, e_c_prime: e - v_min, wells })
}

/// Symmetric barrier height: the rise of the relaxed energy profile along
/// the tunneling axis between the two lowest wells, with `Q` pinned at the
/// coincidence point and every other light axis relaxed. Reported as the
/// profile maximum minus the profile minimum.
pub fn barrier_height(field: &dyn PotentialField, search: &GridSpec) -> Result<f64, PotentialError> {
    let q = field.domain().axis_index(Q_AXIS);
    let (wells, q_c) = match q {
        Some(_) => {
            let c = coincidence(field, search)?;
            (c.wells, Some(c.q_c))
        }
        None => (two_wells(field, search)?, None),
    };
    let light: Vec<usize> = search.active_dims().into_iter().filter(|&d| Some(d) != q).collect();
    let tun = *light
        .iter()
        .max_by(|&&a, &&b| {
            let da = (wells[1].point[a] - wells[0].point[a]).abs();
            let db = (wells[1].point[b] - wells[0].point[b]).abs();
            da.total_cmp(&db)
        })
        .ok_or(PotentialError::NoBarrier)?;
    let transverse: Vec<usize> = light.iter().copied().filter(|&d| d != tun).collect();
    let bx = Box_::of(search);
    let (t0, t1) = (wells[0].point[tun], wells[1].point[tun]);

    let start = |s: f64| {
        let mut p: Vec<f64> = wells[0]
            .point
            .iter()
            .zip(&wells[1].point)
            .map(|(a, b)| a + s * (b - a))
            .collect();
        if let (Some(q), Some(qc)) = (q, q_c) {
            p[q] = qc;
        }
        p
    };
    let relaxed = |p: &mut Vec<f64>| polish(field, p, &transverse, &bx);

    let mut energies = Vec::with_capacity(PROFILE_SAMPLES);
    let mut points = Vec::with_capacity(PROFILE_SAMPLES);
    let mut prev: Option<Vec<f64>> = None;
    for i in 0..PROFILE_SAMPLES {
        let s = i as f64 / (PROFILE_SAMPLES - 1) as f64;
        let mut p = start(s);
        if let Some(pp) = &prev {
            for &d in &transverse {
                p[d] = pp[d];
            }
        }
        p[tun] = t0 + s * (t1 - t0);
        let e = relaxed(&mut p);
        energies.push(e);
        points.push(p.clone());
        prev = Some(p);
    }
    let (imax, _) = energies
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("profile not empty");
    if imax == 0 || imax + 1 == PROFILE_SAMPLES {
        return Err(PotentialError::NoBarrier);
    }
    let (imin, _) = energies
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("profile not empty");

    let refine = |i: usize, sign: f64| {
        let lo = points[i.saturating_sub(1)][tun];
        let hi = points[(i + 1).min(PROFILE_SAMPLES - 1)][tun];
        let seed = points[i].clone();
        let g = |t: f64| {
            let mut p = seed.clone();
            p[tun] = t;
            sign * relaxed(&mut p)
        };
        sign * golden_min(g, lo.min(hi), lo.max(hi))
    };
    let top = refine(imax, -1.0).max(energies[imax]);
    let bottom = refine(imin, 1.0).min(energies[imin]);
    Ok(top - bottom)
}

/// Minimum value of a unimodal function on `[a, b]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}
