//! Screened Poisson reconstruction on a uniform grid.
//!
//! Normals are splatted onto a staggered vector field `V` (x components on
//! x-edges, etc.). The indicator `chi` lives on grid nodes and minimizes
//!
//! ```text
//!   h^3 * |D chi - V|^2  +  alpha * sum_p a_p chi(p)^2
//! ```
//!
//! where `D` is the forward-difference gradient and `a_p` the surface area a
//! sample stands for. The normal equations `(h L + alpha W) chi = h^3 D^T V`
//! use the Neumann 7-point Laplacian `L` and the lumped (diagonal) point
//! weights `W`; they are solved with Jacobi-preconditioned conjugate
//! gradients.

use rayon::prelude::*;

use super::marching_cubes::{marching_cubes, ScalarGrid};
use super::{OrientedPointCloud, TriMesh};
use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::spatial::KdTree;

pub const DOMAIN_HALF_WIDTH: f64 = 1.25;
pub const MIN_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonOptions {
    /// Nodes per axis over `[-1.25, 1.25]`.
    pub grid: usize,
    /// Screening weight.
    pub screening: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Neighbours used to estimate per-sample area.
    pub density_neighbors: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            grid: 128,
            screening: 4.0,
            tolerance: 1e-6,
            max_iterations: 2000,
            density_neighbors: 8,
        }
    }
}

/// Result of a linear solve.
#[derive(Debug, Clone)]
pub struct Indicator {
    pub grid: ScalarGrid,
    pub iso: f64,
    pub iterations: usize,
    pub residual: f64,
}

struct Lattice {
    n: usize,
    h: f64,
    lo: f64,
}

impl Lattice {
    #[inline]
    fn node(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Trilinear stencil of `p` on the lattice shifted by half a cell along
    /// `shift` (if any) and with `dims` nodes per axis. Returns
    /// `(base index triple, fractional offsets)` or `None` outside.
    fn stencil(&self, p: &Vec3, shift: Option<usize>, dims: [usize; 3]) -> Option<([usize; 3], [f64; 3])> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let mut c = (p[a] - self.lo) / self.h;
            if shift == Some(a) {
                c -= 0.5;
            }
            let f = c.floor();
            if f < 0.0 || f as usize + 1 >= dims[a] {
                return None;
            }
            base[a] = f as usize;
            frac[a] = c - f;
        }
        Some((base, frac))
    }
}

fn trilinear_weights(frac: [f64; 3]) -> [([usize; 3], f64); 8] {
    std::array::from_fn(|c| {
        let off = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let w = (0..3)
            .map(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] })
            .product();
        (off, w)
    })
}

/// Approximate surface area represented by each sample: `pi r_k^2 / k`
/// with `r_k` the distance to the k-th nearest other sample.
pub fn sample_areas(points: &[Vec3], k: usize) -> Vec<f64> {
    let tree = KdTree::new(points);
    let k = k.max(1);
    points
        .par_iter()
        .map(|p| {
            let nbrs = tree.k_nearest(p, k + 1);
            let found = nbrs.len().saturating_sub(1).max(1);
            let r2 = nbrs.last().map(|n| n.dist_sq).unwrap_or(0.0);
            std::f64::consts::PI * r2 / found as f64
        })
        .collect()
}

/// Deterministic parallel dot product: fixed-size chunks summed in order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 1 << 14;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn axpy_into(out: &mut [f64], x: &[f64], alpha: f64, y: &[f64]) {
    out.par_iter_mut()
        .zip(x.par_iter().zip(y.par_iter()))
        .for_each(|(o, (a, b))| *o = a + alpha * b);
}

/// Solves for the screened indicator function of an oriented cloud.
pub fn solve_indicator(cloud: &OrientedPointCloud, options: &PoissonOptions) -> Result<Indicator> {
    if cloud.len() < MIN_POINTS {
        return Err(Error::invalid(format!(
            "poisson reconstruction needs at least {MIN_POINTS} points, got {}",
            cloud.len()
        )));
    }
    if !(32..=256).contains(&options.grid) {
        return Err(Error::invalid(format!("grid {} outside [32, 256]", options.grid)));
    }
    let n = options.grid;
    let lat = Lattice {
        n,
        h: 2.0 * DOMAIN_HALF_WIDTH / (n - 1) as f64,
        lo: -DOMAIN_HALF_WIDTH,
    };
    let h = lat.h;
    let areas = sample_areas(&cloud.positions, options.density_neighbors);

    // Staggered splat of area-weighted normals.
    let mut field: [Vec<f64>; 3] = std::array::from_fn(|a| {
        let mut dims = [n; 3];
        dims[a] = n - 1;
        vec![0.0; dims.iter().product()]
    });
    let mut point_weight = vec![0.0; n * n * n];
    for ((p, nrm), &area) in cloud.positions.iter().zip(&cloud.normals).zip(&areas) {
        for a in 0..3 {
            let mut dims = [n; 3];
            dims[a] = n - 1;
            if let Some((base, frac)) = lat.stencil(p, Some(a), dims) {
                for (off, w) in trilinear_weights(frac) {
                    let idx = (base[0] + off[0]) + dims[0] * ((base[1] + off[1]) + dims[1] * (base[2] + off[2]));
                    field[a][idx] += w * area * nrm[a];
                }
            }
        }
        if let Some((base, frac)) = lat.stencil(p, None, [n; 3]) {
            for (off, w) in trilinear_weights(frac) {
                point_weight[lat.node(base[0] + off[0], base[1] + off[1], base[2] + off[2])] += w * area;
            }
        }
    }

    // rhs = h^3 D^T V with V = splat / h^3.
    let plane = n * n;
    let mut rhs = vec![0.0; n * n * n];
    rhs.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..n {
            for i in 0..n {
                let idx = [i, j, k];
                let mut acc = 0.0;
                for a in 0..3 {
                    let mut dims = [n; 3];
                    dims[a] = n - 1;
                    let flat = |c: [usize; 3]| c[0] + dims[0] * (c[1] + dims[1] * c[2]);
                    if idx[a] > 0 {
                        let mut c = idx;
                        c[a] -= 1;
                        acc += field[a][flat(c)];
                    }
                    if idx[a] < n - 1 {
                        acc -= field[a][flat(idx)];
                    }
                }
                slab[i + n * j] = acc / h;
            }
        }
    });

    let alpha = options.screening;
    let degree = |i: usize, j: usize, k: usize| -> f64 {
        [i, j, k]
            .iter()
            .map(|&c| (c > 0) as usize + (c < n - 1) as usize)
            .sum::<usize>() as f64
    };
    let diag: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx % n, (idx / n) % n, idx / plane);
            h * degree(i, j, k) + alpha * point_weight[idx]
        })
        .collect();

    let apply = |x: &[f64], y: &mut [f64]| {
        y.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
            for j in 0..n {
                for i in 0..n {
                    let c = lat.node(i, j, k);
                    let xc = x[c];
                    let mut lap = 0.0;
                    if i > 0 {
                        lap += xc - x[c - 1];
                    }
                    if i < n - 1 {
                        lap += xc - x[c + 1];
                    }
                    if j > 0 {
                        lap += xc - x[c - n];
                    }
                    if j < n - 1 {
                        lap += xc - x[c + n];
                    }
                    if k > 0 {
                        lap += xc - x[c - plane];
                    }
                    if k < n - 1 {
                        lap += xc - x[c + plane];
                    }
                    slab[i + n * j] = h * lap + alpha * point_weight[c] * xc;
                }
            }
        });
    };

    let (chi, iterations, residual) = conjugate_gradient(apply, &rhs, &diag, options.tolerance, options.max_iterations);
    if residual > options.tolerance {
        return Err(Error::NotConverged { residual, iterations });
    }

    let grid = ScalarGrid {
        dims: [n; 3],
        origin: Vec3::repeat(lat.lo),
        spacing: h,
        values: chi,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &area) in cloud.positions.iter().zip(&areas) {
        if let Some((base, frac)) = lat.stencil(p, None, [n; 3]) {
            let val: f64 = trilinear_weights(frac)
                .iter()
                .map(|(off, w)| w * grid.values[lat.node(base[0] + off[0], base[1] + off[1], base[2] + off[2])])
                .sum();
            num += area * val;
            den += area;
        }
    }
    if !(den > 0.0) {
        return Err(Error::Empty("no samples inside the reconstruction domain".into()));
    }
    Ok(Indicator {
        grid,
        iso: num / den,
        iterations,
        residual,
    })
}

/// Jacobi-preconditioned CG. Returns `(x, iterations, relative residual)`.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    diag: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> (Vec<f64>, usize, f64) {
    let len = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; len];
    if b_norm == 0.0 {
        return (x, 0, 0.0);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.par_iter().zip(diag.par_iter()).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; len];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    for it in 0..max_iterations {
        apply(&p, &mut ap);
        let step = rz / dot(&p, &ap);
        x.par_iter_mut().zip(p.par_iter()).for_each(|(x, p)| *x += step * p);
        r.par_iter_mut().zip(ap.par_iter()).for_each(|(r, a)| *r -= step * a);
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tolerance {
            return (x, it + 1, residual);
        }
        z.par_iter_mut()
            .zip(r.par_iter().zip(diag.par_iter()))
            .for_each(|(z, (r, d))| *z = r / d);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        let p_old = std::mem::take(&mut p);
        p = vec![0.0; len];
        axpy_into(&mut p, &z, beta, &p_old);
    }
    (x, max_iterations, residual)
}

/// Screened Poisson surface of an oriented point cloud.
pub fn poisson_reconstruct(cloud: &OrientedPointCloud, options: &PoissonOptions) -> Result<TriMesh> {
    let indicator = solve_indicator(cloud, options)?;
    let mesh = marching_cubes(&indicator.grid, indicator.iso);
    if mesh.is_empty() {
        return Err(Error::Empty("iso-surface is empty".into()));
    }
    Ok(mesh)
}
