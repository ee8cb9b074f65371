//! Time-difference-of-arrival multilateration.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result, SPEED_OF_LIGHT};

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE_M: f64 = 1e-9;

/// Unknowns the solver estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveDimension {
    /// x and y, with z fixed at the anchors' common height.
    Planar,
    /// x, y and z.
    Spatial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdoaProblem {
    pub anchors: Vec<Vector3<f64>>,
    /// `tdoa[i]` is the arrival time at anchor `i` minus that at anchor 0,
    /// seconds; `tdoa[0] = 0`.
    pub tdoa: Vec<f64>,
    pub noise_std: f64,
}

impl TdoaProblem {
    pub fn new(anchors: Vec<Vector3<f64>>, tdoa: Vec<f64>, noise_std: f64) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::invalid(format!("TDOA needs at least 3 anchors (got {})", anchors.len())));
        }
        if tdoa.len() != anchors.len() {
            return Err(Error::invalid(format!("{} measurements for {} anchors", tdoa.len(), anchors.len())));
        }
        if anchors.iter().any(|a| !a.iter().all(|x| x.is_finite())) || tdoa.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("anchors and measurements must be finite"));
        }
        Ok(Self { anchors, tdoa, noise_std })
    }

    /// Planar when every anchor shares one z coordinate, otherwise spatial.
    pub fn dimension(&self) -> SolveDimension {
        let z0 = self.anchors[0].z;
        if self.anchors.iter().all(|a| (a.z - z0).abs() < 1e-12) {
            SolveDimension::Planar
        } else {
            SolveDimension::Spatial
        }
    }

    /// Sum of squared TDOA residuals at `x`, s².
    pub fn residual(&self, x: &Vector3<f64>) -> f64 {
        range_residuals(self, x).iter().map(|r| (r / SPEED_OF_LIGHT).powi(2)).sum()
    }
}

/// Range-difference residuals in metres for anchors 1.., at `x`.
fn range_residuals(p: &TdoaProblem, x: &Vector3<f64>) -> Vec<f64> {
    let d0 = (x - p.anchors[0]).norm();
    (1..p.anchors.len()).map(|i| (x - p.anchors[i]).norm() - d0 - SPEED_OF_LIGHT * p.tdoa[i]).collect()
}

/// Simulated measurements for `source`, with N(0, noise_std²) added to
/// every difference except the reference.
pub fn tdoa_measure(anchors: &[Vector3<f64>], source: Vector3<f64>, noise_std: f64, seed: u64) -> Result<TdoaProblem> {
    if anchors.iter().any(|a| (a - source).norm() < 1e-9) {
        return Err(Error::invalid("source coincides with an anchor"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise std must be >= 0"));
    }
    let normal = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = (source - anchors[0]).norm();
    let tdoa = anchors
        .iter()
        .enumerate()
        .map(|(i, a)| if i == 0 { 0.0 } else { ((source - a).norm() - d0) / SPEED_OF_LIGHT + normal.sample(&mut rng) })
        .collect();
    TdoaProblem::new(anchors.to_vec(), tdoa, noise_std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdoaSolution {
    pub position: Vector3<f64>,
    /// Sum of squared TDOA residuals, s².
    pub residual: f64,
    pub iterations: usize,
    pub dimension: SolveDimension,
}

/// Gauss-Newton on the range-difference residuals with step halving.
/// Starts from `initial`, or the anchor centroid when absent.
pub fn tdoa_solve(p: &TdoaProblem, initial: Option<Vector3<f64>>) -> Result<TdoaSolution> {
    let dim = p.dimension();
    let n_unknown = match dim {
        SolveDimension::Planar => 2,
        SolveDimension::Spatial => 3,
    };
    if p.anchors.len() < n_unknown + 1 {
        return Err(Error::invalid(format!(
            "a {} solve needs at least {} anchors (got {})",
            if n_unknown == 2 { "planar" } else { "spatial" },
            n_unknown + 1,
            p.anchors.len()
        )));
    }
    let centroid = p.anchors.iter().sum::<Vector3<f64>>() / p.anchors.len() as f64;
    let mut x = initial.unwrap_or(centroid);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("initial guess must be finite"));
    }
    if dim == SolveDimension::Planar {
        x.z = p.anchors[0].z;
    }
    let cost = |x: &Vector3<f64>| range_residuals(p, x).iter().map(|r| r * r).sum::<f64>();
    let fail = |it: usize, x: &Vector3<f64>| Error::NonConvergence {
        iterations: it,
        residual: p.residual(x),
        last: [x.x, x.y, x.z],
    };
    for it in 1..=MAX_ITERATIONS {
        let r = range_residuals(p, &x);
        let u0 = unit(&(x - p.anchors[0]));
        let j = DMatrix::from_fn(r.len(), n_unknown, |i, c| (unit(&(x - p.anchors[i + 1])) - u0)[c]);
        let jt = j.transpose();
        let step = (&jt * &j).cholesky().map(|ch| ch.solve(&(-(&jt * DVector::from_vec(r)))));
        let Some(step) = step else {
            return Err(fail(it, &x));
        };
        let mut delta = Vector3::zeros();
        for c in 0..n_unknown {
            delta[c] = step[c];
        }
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(fail(it, &x));
        }
        let c0 = cost(&x);
        let mut scale = 1.0;
        while cost(&(x + delta * scale)) > c0 && scale > 1e-6 {
            scale *= 0.5;
        }
        let taken = delta * scale;
        x += taken;
        if taken.norm() < STEP_TOLERANCE_M {
            return Ok(TdoaSolution { position: x, residual: p.residual(&x), iterations: it, dimension: dim });
        }
    }
    Err(fail(MAX_ITERATIONS, &x))
}

fn unit(v: &Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vector3::zeros()
    }
}
