//! Tensor-product not-a-knot cubic splines over rectangular grids.

use nalgebra::DMatrix;

use super::{Domain, PotentialError, PotentialField, SampledPotential};
use crate::grid::{GridAxis, GridSpec};

/// Interpolating B-spline basis along one axis. Four or more nodes give a
/// cubic with not-a-knot ends; fewer nodes fall back to the interpolating
/// polynomial of degree `count − 1`.
#[derive(Debug, Clone)]
struct AxisBasis {
    degree: usize,
    knots: Vec<f64>,
    n: usize,
    lo: f64,
    hi: f64,
}

impl AxisBasis {
    fn new(axis: &GridAxis) -> Self {
        let nodes = axis.nodes();
        let n = nodes.len();
        let degree = 3.min(n - 1);
        let mut knots = Vec::with_capacity(n + degree + 1);
        knots.extend(std::iter::repeat(nodes[0]).take(degree + 1));
        if degree == 3 {
            knots.extend_from_slice(&nodes[2..n - 2]);
        }
        knots.extend(std::iter::repeat(nodes[n - 1]).take(degree + 1));
        debug_assert_eq!(knots.len(), n + degree + 1);
        Self { degree, knots, n, lo: nodes[0], hi: nodes[n - 1] }
    }

    /// Knot span index and the `degree + 1` non-zero basis values at `x`.
    fn eval(&self, x: f64, out: &mut [f64; 4]) -> usize {
        let p = self.degree;
        if p == 0 {
            out[0] = 1.0;
            return 0;
        }
        let x = x.clamp(self.lo, self.hi);
        let span = if x >= self.knots[self.n] {
            self.n - 1
        } else {
            // Last knot index in [p, n - 1] with knots[i] <= x.
            let (mut lo, mut hi) = (p, self.n);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.knots[mid] <= x {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let mut left = [0.0; 4];
        let mut right = [0.0; 4];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        span - p
    }

    /// Inverse of the collocation matrix `A[i][j] = B_j(x_i)`.
    fn collocation_inverse(&self, nodes: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = [0.0; 4];
        for (i, &x) in nodes.iter().enumerate() {
            let first = self.eval(x, &mut b);
            for k in 0..=self.degree {
                a[(i, first + k)] = b[k];
            }
        }
        a.try_inverse().expect("interpolating B-spline collocation matrix is non-singular")
    }
}

/// Spline interpolant of a sampled landscape.
#[derive(Debug, Clone)]
pub struct SplineField {
    domain: Domain,
    bases: Vec<AxisBasis>,
    strides: Vec<usize>,
    coeffs: Vec<f64>,
}

impl SplineField {
    /// Interpolant over the full sampled box.
    pub fn new(sampled: &SampledPotential) -> Self {
        let spec = sampled.spec();
        let bases: Vec<AxisBasis> = spec.axes().iter().map(AxisBasis::new).collect();
        let mut coeffs = sampled.energies().to_vec();
        let shape = spec.shape();
        let strides = spec.strides().to_vec();
        for (d, basis) in bases.iter().enumerate() {
            if shape[d] < 2 {
                continue;
            }
            let inv = basis.collocation_inverse(&spec.axis(d).nodes());
            apply_along_axis(&mut coeffs, &shape, &strides, d, &inv);
        }
        Self { domain: Domain::from_grid(spec), bases, strides, coeffs }
    }

    fn restrict(mut self, target: &GridSpec) -> Self {
        self.domain = Domain::from_grid(target);
        self
    }
}

fn apply_along_axis(data: &mut [f64], shape: &[usize], strides: &[usize], d: usize, m: &DMatrix<f64>) {
    let n = shape[d];
    let stride = strides[d];
    let block = n * stride;
    let mut fiber = vec![0.0; n];
    let mut out = vec![0.0; n];
    for base in (0..data.len()).step_by(block) {
        for off in 0..stride {
            let start = base + off;
            for i in 0..n {
                fiber[i] = data[start + i * stride];
            }
            for i in 0..n {
                out[i] = (0..n).map(|j| m[(i, j)] * fiber[j]).sum();
            }
            for i in 0..n {
                data[start + i * stride] = out[i];
            }
        }
    }
}

impl PotentialField for SplineField {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        let nd = self.bases.len();
        let mut vals = [[0.0f64; 4]; 8];
        let mut first = [0usize; 8];
        let mut order = [0usize; 8];
        for d in 0..nd {
            first[d] = self.bases[d].eval(x[d], &mut vals[d]);
            order[d] = self.bases[d].degree + 1;
        }
        // Odometer over the (degree+1)^N tensor-product terms.
        let mut k = [0usize; 8];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            let mut idx = 0;
            for d in 0..nd {
                w *= vals[d][k[d]];
                idx += (first[d] + k[d]) * self.strides[d];
            }
            total += w * self.coeffs[idx];
            let mut d = nd;
            loop {
                if d == 0 {
                    return total;
                }
                d -= 1;
                k[d] += 1;
                if k[d] < order[d] {
                    break;
                }
                k[d] = 0;
            }
        }
    }
}

/// Spline interpolant of `sampled` restricted to the box of `target`, which
/// must use the same axes and stay inside the sampled box.
pub fn interpolate(sampled: &SampledPotential, target: &GridSpec) -> Result<SplineField, PotentialError> {
    Domain::from_grid(sampled.spec()).check_grid(target)?;
    Ok(SplineField::new(sampled).restrict(target))
}
