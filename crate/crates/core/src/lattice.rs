//! Regular discretization of the half unit-sphere.
//!
//! Directions are enumerated by nested loops over spherical angles
//! `phi_{d-1}, ..., phi_1`, each restricted to `[0, pi]`. The outermost
//! step is chord-exact (`arccos(1 - delta^2/2)`, so consecutive points on
//! the outer circle sit at Euclidean distance `delta`); inner steps are
//! latitude-corrected by the product of the outer cosines, floored at
//! `delta / pi` so polar slices still emit points. The map from angles to
//! coordinates keeps the last coordinate equal to `sin(phi_{d-1}) >= 0`,
//! which pins the construction to the half-sphere.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Max supported ambient dimension (keys of the dedup grid are fixed-size).
const MAX_DIM: usize = 16;

/// A finite set of unit directions covering the half-sphere at step `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereLattice {
    points: Vec<Vec<f64>>,
    step: f64,
    dimension: usize,
}

impl SphereLattice {
    /// Wraps an explicit list of directions (used for hand-built direction
    /// sets in tests and pipelines). Each point must be unit-norm with a
    /// non-negative last coordinate.
    pub fn from_points(points: Vec<Vec<f64>>, step: f64, dimension: usize) -> Result<Self> {
        for p in &points {
            if p.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: p.len(),
                });
            }
            let norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "lattice point must be unit-norm (|v| = {norm})"
                )));
            }
            if p[dimension - 1] < -1e-12 {
                return Err(Error::InvalidArgument(
                    "lattice point must lie on the half-sphere (last coordinate >= 0)".into(),
                ));
            }
        }
        Ok(SphereLattice {
            points,
            step,
            dimension,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lattice step `(n ln n)^{-1/(2 s_min)}` tied to the minimal allowed
/// smoothness of the link function.
pub fn lattice_step(n: usize, s_min: f64) -> f64 {
    debug_assert!(n >= 3);
    debug_assert!(s_min > 0.0);
    let t = n as f64 * (n as f64).ln();
    t.powf(-1.0 / (2.0 * s_min))
}

/// Multiples of `step` inside `[0, pi]`, clamped so the last value never
/// exceeds `pi` by floating-point noise.
fn phi_values(step: f64) -> Vec<f64> {
    debug_assert!(step > 0.0);
    let count = (PI / step + 1e-9).floor() as usize;
    (0..=count).map(|l| (l as f64 * step).min(PI)).collect()
}

/// Deduplication grid: rejects points within `tol` of an already-kept one.
struct DedupGrid {
    tol: f64,
    cells: HashMap<[i64; MAX_DIM], Vec<usize>>,
    kept: Vec<Vec<f64>>,
}

impl DedupGrid {
    fn new(tol: f64) -> Self {
        DedupGrid {
            tol,
            cells: HashMap::new(),
            kept: Vec::new(),
        }
    }

    fn key(&self, p: &[f64]) -> [i64; MAX_DIM] {
        let mut key = [0i64; MAX_DIM];
        for (k, &v) in key.iter_mut().zip(p) {
            *k = (v / self.tol).floor() as i64;
        }
        key
    }

    fn try_insert(&mut self, p: Vec<f64>) -> bool {
        let d = p.len();
        let base = self.key(&p);
        // scan the 3^d neighborhood of the cell
        let mut offsets = vec![-1i64; d];
        loop {
            let mut cell = base;
            for j in 0..d {
                cell[j] += offsets[j];
            }
            if let Some(bucket) = self.cells.get(&cell) {
                for &idx in bucket {
                    let q = &self.kept[idx];
                    let dist2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist2 <= self.tol * self.tol {
                        return false;
                    }
                }
            }
            // advance the odometer over {-1,0,1}^d
            let mut j = 0;
            loop {
                if j == d {
                    // finished every neighbor: keep the point
                    let idx = self.kept.len();
                    self.cells.entry(base).or_default().push(idx);
                    self.kept.push(p);
                    return true;
                }
                offsets[j] += 1;
                if offsets[j] <= 1 {
                    break;
                }
                offsets[j] = -1;
                j += 1;
            }
        }
    }
}

struct Builder<'a> {
    dim: usize,
    delta: f64,
    outer_step: f64,
    ball: Option<(&'a [f64], f64)>,
    /// Norms of center prefixes: `center_prefix_norm[k] = |(c_1..c_k)|`.
    center_prefix_norm: Vec<f64>,
    angles: Vec<f64>,
    dedup: DedupGrid,
}

impl<'a> Builder<'a> {
    fn run(mut self) -> Vec<Vec<f64>> {
        let known = 0.0;
        self.level(self.dim - 1, 1.0, known);
        std::mem::take(&mut self.dedup.kept)
    }

    /// `level` enumerates `phi_level`. `signed_prod` is the product of the
    /// cosines of the already-chosen outer angles and `dist_known_sq` the
    /// squared distance between the already-determined trailing coordinates
    /// and the ball center (0 when no ball is active).
    fn level(&mut self, level: usize, signed_prod: f64, dist_known_sq: f64) {
        let step = if level == self.dim - 1 {
            self.outer_step
        } else {
            self.delta / signed_prod.abs().max(self.delta / PI)
        };
        for phi in phi_values(step) {
            // coordinate x_{level+1} in 1-based spec indexing
            let coord = phi.sin() * signed_prod;
            let new_prod = phi.cos() * signed_prod;
            if level == 1 {
                self.emit(new_prod, coord);
            } else {
                let next_known = match self.ball {
                    Some((center, radius)) => {
                        let partial = dist_known_sq + sq(coord - center[level]);
                        // remaining block (x_1..x_level) lies on a sphere of
                        // radius |new_prod|
                        let lb = partial
                            + sq(new_prod.abs() - self.center_prefix_norm[level]);
                        if lb > radius * radius * (1.0 + 1e-9) + 1e-18 {
                            continue;
                        }
                        partial
                    }
                    None => 0.0,
                };
                self.angles.push(phi);
                self.level(level - 1, new_prod, next_known);
                self.angles.pop();
            }
        }
    }

    fn emit(&mut self, x1: f64, x2: f64) {
        let d = self.dim;
        let mut point = Vec::with_capacity(d);
        point.push(x1);
        point.push(x2);
        // trailing coordinates from the stored outer angles; angles are
        // stored outermost-first, so the first pass builds x_d, then
        // x_{d-1}, ... down to x_3
        let mut prod = 1.0;
        let mut trailing = Vec::with_capacity(d.saturating_sub(2));
        for &phi in self.angles.iter() {
            trailing.push(phi.sin() * prod);
            prod *= phi.cos();
        }
        trailing.reverse();
        point.extend(trailing);
        debug_assert_eq!(point.len(), d);
        // snap floating-point noise on the half-sphere boundary
        if point[d - 1] < 0.0 && point[d - 1] >= -1e-12 {
            point[d - 1] = 0.0;
        }
        if let Some((center, radius)) = self.ball {
            let dist2: f64 = point
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist2 > radius * radius {
                return;
            }
        }
        self.dedup.try_insert(point);
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn build_impl(d: usize, delta: f64, ball: Option<(&[f64], f64)>) -> Result<SphereLattice> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "lattice needs dimension >= 2, got {d}"
        )));
    }
    if d > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "lattice dimension {d} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lattice step must be positive, got {delta}"
        )));
    }
    if delta > 2.0 {
        return Err(Error::InvalidArgument(format!(
            "lattice step {delta} exceeds the sphere diameter (chord formula leaves the arccos domain)"
        )));
    }
    if let Some((center, _)) = ball {
        if center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: center.len(),
            });
        }
    }
    let mut center_prefix_norm = vec![0.0; d];
    if let Some((center, _)) = ball {
        let mut acc = 0.0;
        for k in 1..d {
            acc += sq(center[k - 1]);
            center_prefix_norm[k] = acc.sqrt();
        }
    }
    let outer_step = (1.0 - delta * delta / 2.0).acos();
    let builder = Builder {
        dim: d,
        delta,
        outer_step,
        ball,
        center_prefix_norm,
        angles: Vec::new(),
        dedup: DedupGrid::new(delta / 8.0),
    };
    let points = builder.run();
    Ok(SphereLattice {
        points,
        step: delta,
        dimension: d,
    })
}

/// Builds the regular lattice of the half unit-sphere at step `delta`.
pub fn build_lattice(d: usize, delta: f64) -> Result<SphereLattice> {
    build_impl(d, delta, None)
}

/// Builds only the lattice points inside the closed Euclidean ball around
/// `center`, pruning whole angle subtrees that cannot reach it. The kept
/// points coincide with filtering the full lattice.
pub fn build_lattice_section(
    d: usize,
    delta: f64,
    center: &[f64],
    radius: f64,
) -> Result<SphereLattice> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "section radius must be positive, got {radius}"
        )));
    }
    build_impl(d, delta, Some((center, radius)))
}

/// Points of `lat` within Euclidean distance `radius` of `center`; step
/// metadata is preserved. The section may be empty.
pub fn lattice_section(lat: &SphereLattice, center: &[f64], radius: f64) -> Result<SphereLattice> {
    if center.len() != lat.dimension() {
        return Err(Error::DimensionMismatch {
            expected: lat.dimension(),
            got: center.len(),
        });
    }
    let norm: f64 = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "section center must be unit-norm (|v| = {norm})"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "section radius must be positive, got {radius}"
        )));
    }
    let r2 = radius * radius;
    let points: Vec<Vec<f64>> = lat
        .points()
        .iter()
        .filter(|p| {
            let dist2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            dist2 <= r2
        })
        .cloned()
        .collect();
    Ok(SphereLattice {
        points,
        step: lat.step(),
        dimension: lat.dimension(),
    })
}
