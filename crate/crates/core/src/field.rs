//! Truncated-domain grids, the discrete p-Laplacian, norms, the cut-off
//! function and tail functionals, and Hausdorff semi-distances.
//!
//! The box `[-L, L]^dim` stands in for `ℝⁿ` with homogeneous Dirichlet data.
//! All integrals use trapezoid weights. The p-Laplacian is in flux form: a
//! gradient per cell face, a face coefficient `(|∇u|² + δ²)^{(p−2)/2}`, and a
//! divergence back to the nodes. With that layout summation by parts is exact,
//! so `(v, Δ_p w) = −Σ_faces a_f D_f v D_f w |cell|` holds to rounding, which
//! is what the energy audits rely on.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Uniform node grid on `[-L, L]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, n_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", "only 1 and 2 are supported"));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(invalid("half_width", "must be positive"));
        }
        if n_per_axis < 3 {
            return Err(invalid("n_per_axis", "must be at least 3"));
        }
        Ok(Self {
            dim,
            half_width,
            n: n_per_axis,
            dx: 2.0 * half_width / (n_per_axis - 1) as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn n_per_axis(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one cell, `dx^dim`.
    pub fn cell(&self) -> f64 {
        if self.dim == 1 {
            self.dx
        } else {
            self.dx * self.dx
        }
    }

    fn axis_coord(&self, i: usize) -> f64 {
        // symmetric about 0 by construction
        let c = (i as f64 - 0.5 * (self.n - 1) as f64) * self.dx;
        if 2 * i + 1 == self.n {
            0.0
        } else {
            c
        }
    }

    /// Coordinates of node `idx` (second component 0 in 1D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.axis_coord(idx), 0.0]
        } else {
            [self.axis_coord(idx % self.n), self.axis_coord(idx / self.n)]
        }
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let [x, y] = self.coords(idx);
        math::sqrt(x * x + y * y)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let last = self.n - 1;
        if self.dim == 1 {
            idx == 0 || idx == last
        } else {
            let (i, j) = (idx % self.n, idx / self.n);
            i == 0 || j == 0 || i == last || j == last
        }
    }

    /// Trapezoid weight of node `idx`.
    pub fn weight(&self, idx: usize) -> f64 {
        let last = self.n - 1;
        let axis = |i: usize| if i == 0 || i == last { 0.5 * self.dx } else { self.dx };
        if self.dim == 1 {
            axis(idx)
        } else {
            axis(idx % self.n) * axis(idx / self.n)
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Sum of `weight · g(value)` over all nodes.
    pub fn integrate(&self, values: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        values.iter().enumerate().map(|(i, &v)| self.weight(i) * g(v)).sum()
    }
}

/// A grid function vanishing on the boundary of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every interior node; boundary nodes are set to zero.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| if grid.is_boundary(i) { 0.0 } else { f(grid.coords(i)) })
            .collect();
        Self { grid, values }
    }

    /// Wraps raw node values, checking length, finiteness and the boundary.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid("values", "length does not match the grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "must be finite"));
        }
        if (0..grid.len()).any(|i| grid.is_boundary(i) && values[i] != 0.0) {
            return Err(invalid("values", "boundary nodes must be zero"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `‖u‖²` in discrete L².
    pub fn l2_sq(&self) -> f64 {
        self.grid.integrate(&self.values, |v| v * v)
    }

    pub fn l2(&self) -> f64 {
        math::sqrt(self.l2_sq())
    }

    /// Discrete `(u, v)`.
    pub fn dot(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| self.grid.weight(i) * a * b)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Field {
        Field::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        )
    }

    /// `‖self − other‖` in discrete L².
    pub fn distance(&self, other: &Field) -> f64 {
        math::sqrt(
            self.values
                .iter()
                .zip(&other.values)
                .enumerate()
                .map(|(i, (a, b))| self.grid.weight(i) * (a - b) * (a - b))
                .sum(),
        )
    }
}

#[inline]
fn face_coef(g2: f64, delta: f64, expo: f64) -> f64 {
    math::abs_pow(g2 + delta * delta, expo)
}

/// Per-face data of the flux-form p-Laplacian.
///
/// Writes `div(a ∇u)` into `out` (zero on the boundary) and returns
/// `(Σ_f a_f (D_f u)² |cell|, max_f a_f)`.
pub(crate) fn apply_p_laplace(
    grid: &Grid,
    u: &[f64],
    p: f64,
    delta: f64,
    out: &mut [f64],
    flux: &mut Vec<f64>,
) -> (f64, f64) {
    let n = grid.n;
    let dx = grid.dx;
    let inv = 1.0 / dx;
    let expo = 0.5 * (p - 2.0);
    let mut energy = 0.0;
    let mut amax = 0.0f64;
    out.iter_mut().for_each(|o| *o = 0.0);
    if grid.dim == 1 {
        flux.clear();
        flux.resize(n - 1, 0.0);
        for i in 0..n - 1 {
            let g = (u[i + 1] - u[i]) * inv;
            let a = face_coef(g * g, delta, expo);
            amax = amax.max(a);
            energy += a * g * g;
            flux[i] = a * g;
        }
        for i in 1..n - 1 {
            out[i] = (flux[i] - flux[i - 1]) * inv;
        }
        (energy * dx, amax)
    } else {
        // x-faces (i+½, j): index j*(n-1)+i; y-faces (i, j+½): offset + j*n + i
        let nx = (n - 1) * n;
        flux.clear();
        flux.resize(nx + n * (n - 1), 0.0);
        let at = |i: usize, j: usize| u[j * n + i];
        for j in 1..n - 1 {
            for i in 0..n - 1 {
                let gx = (at(i + 1, j) - at(i, j)) * inv;
                let gy = ((at(i, j + 1) - at(i, j - 1)) + (at(i + 1, j + 1) - at(i + 1, j - 1))) * 0.25 * inv;
                let a = face_coef(gx * gx + gy * gy, delta, expo);
                amax = amax.max(a);
                energy += a * gx * gx;
                flux[j * (n - 1) + i] = a * gx;
            }
        }
        for j in 0..n - 1 {
            for i in 1..n - 1 {
                let gy = (at(i, j + 1) - at(i, j)) * inv;
                let gx = ((at(i + 1, j) - at(i - 1, j)) + (at(i + 1, j + 1) - at(i - 1, j + 1))) * 0.25 * inv;
                let a = face_coef(gx * gx + gy * gy, delta, expo);
                amax = amax.max(a);
                energy += a * gy * gy;
                flux[nx + j * n + i] = a * gy;
            }
        }
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let fx = flux[j * (n - 1) + i] - flux[j * (n - 1) + i - 1];
                let fy = flux[nx + j * n + i] - flux[nx + (j - 1) * n + i];
                out[j * n + i] = (fx + fy) * inv;
            }
        }
        (energy * dx * dx, amax)
    }
}

/// `div(|∇u|^{p−2} ∇u)` with face regularization `δ`.
pub fn p_laplace(u: &Field, p: f64, delta: f64) -> Result<Field> {
    Ok(p_laplace_with_energy(u, p, delta)?.0)
}

/// The p-Laplacian together with `‖∇u‖_pᵖ` in face-energy form
/// `Σ_f a_f (D_f u)² |cell|`.
pub fn p_laplace_with_energy(u: &Field, p: f64, delta: f64) -> Result<(Field, f64)> {
    check_p(p, delta)?;
    let mut out = vec![0.0; u.grid.len()];
    let mut flux = Vec::new();
    let (e, _) = apply_p_laplace(&u.grid, &u.values, p, delta, &mut out, &mut flux);
    Ok((Field::from_raw(u.grid, out), e))
}

fn check_p(p: f64, delta: f64) -> Result<()> {
    if !(p >= 2.0) {
        return Err(invalid("p", "must be at least 2"));
    }
    if !(delta >= 0.0) {
        return Err(invalid("delta", "must be nonnegative"));
    }
    Ok(())
}

/// Visits every face as `(coefficient source gradient², normal difference of
/// `w`, normal difference of `other`)`, in the layout of `apply_p_laplace`.
fn for_each_face(grid: &Grid, w: &[f64], other: &[f64], mut visit: impl FnMut(f64, f64, f64)) {
    let n = grid.n;
    let inv = 1.0 / grid.dx;
    if grid.dim == 1 {
        for i in 0..n - 1 {
            let g = (w[i + 1] - w[i]) * inv;
            visit(g * g, g, (other[i + 1] - other[i]) * inv);
        }
        return;
    }
    let at = |v: &[f64], i: usize, j: usize| v[j * n + i];
    for j in 1..n - 1 {
        for i in 0..n - 1 {
            let gx = (at(w, i + 1, j) - at(w, i, j)) * inv;
            let gy = ((at(w, i, j + 1) - at(w, i, j - 1)) + (at(w, i + 1, j + 1) - at(w, i + 1, j - 1))) * 0.25 * inv;
            visit(gx * gx + gy * gy, gx, (at(other, i + 1, j) - at(other, i, j)) * inv);
        }
    }
    for j in 0..n - 1 {
        for i in 1..n - 1 {
            let gy = (at(w, i, j + 1) - at(w, i, j)) * inv;
            let gx = ((at(w, i + 1, j) - at(w, i - 1, j)) + (at(w, i + 1, j + 1) - at(w, i - 1, j + 1))) * 0.25 * inv;
            visit(gx * gx + gy * gy, gy, (at(other, i, j + 1) - at(other, i, j)) * inv);
        }
    }
}

/// `(Σ_f a_f (D_f w)², Σ_f a_f D_f w D_f other)`, each times the cell volume,
/// with `a_f` the face coefficient of `w`.
pub(crate) fn face_sums(grid: &Grid, w: &[f64], other: &[f64], p: f64, delta: f64) -> (f64, f64) {
    let expo = 0.5 * (p - 2.0);
    let mut ww = 0.0;
    let mut wo = 0.0;
    for_each_face(grid, w, other, |g2, dw, dh| {
        let a = face_coef(g2, delta, expo);
        ww += a * dw * dw;
        wo += a * dw * dh;
    });
    (ww * grid.cell(), wo * grid.cell())
}

/// `∫ |∇w|^{p−2} ∇w · ∇h` in the face discretization used by [`p_laplace`].
pub fn p_flux_dot(w: &Field, h: &Field, p: f64, delta: f64) -> Result<f64> {
    check_p(p, delta)?;
    same_grid(&w.grid, &h.grid)?;
    let expo = 0.5 * (p - 2.0);
    let mut s = 0.0;
    for_each_face(&w.grid, &w.values, &h.values, |g2, dw, dh| {
        s += face_coef(g2, delta, expo) * dw * dh;
    });
    Ok(s * w.grid.cell())
}

/// `‖∇u‖_pᵖ` in the face-energy form matching [`p_laplace`].
pub fn grad_energy(u: &Field, p: f64, delta: f64) -> Result<f64> {
    p_flux_dot(u, u, p, delta)
}

/// Discrete norms of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub lp: f64,
    pub lq: f64,
    /// `(‖u‖_pᵖ + ‖∇u‖_pᵖ)^{1/p}` with `‖∇u‖_pᵖ = Σ_faces |D_f u|ᵖ |cell|`.
    pub w1p: f64,
}

/// `‖u‖_rʳ` with trapezoid weights.
pub fn lr_pow(u: &Field, r: f64) -> f64 {
    u.grid.integrate(&u.values, |v| math::abs_pow(v, r))
}

pub fn norms(u: &Field, p: f64, q: f64) -> Norms {
    let grid = &u.grid;
    let lp_p = lr_pow(u, p);
    let n = grid.n;
    let inv = 1.0 / grid.dx;
    let v = &u.values;
    let mut grad = 0.0;
    if grid.dim == 1 {
        for i in 0..n - 1 {
            grad += math::abs_pow((v[i + 1] - v[i]) * inv, p);
        }
    } else {
        for j in 0..n {
            for i in 0..n - 1 {
                grad += math::abs_pow((v[j * n + i + 1] - v[j * n + i]) * inv, p);
                grad += math::abs_pow((v[(i + 1) * n + j] - v[i * n + j]) * inv, p);
            }
        }
    }
    grad *= grid.cell();
    Norms {
        l2: u.l2(),
        lp: math::powf(lp_p, 1.0 / p),
        lq: math::powf(lr_pow(u, q), 1.0 / q),
        w1p: math::powf(lp_p + grad, 1.0 / p),
    }
}

/// Smooth cut-off: 0 on `[0, 1]`, 1 on `[2, ∞)`, quintic smoothstep between.
pub fn cutoff_rho(s: f64) -> f64 {
    let r = (s - 1.0).clamp(0.0, 1.0);
    r * r * r * (r * (6.0 * r - 15.0) + 10.0)
}

/// Mass of a field outside a ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailMass {
    /// `∫_{|x| ≥ k} u²`
    pub plain: f64,
    /// `∫ ρ(|x|²/k²) u²`
    pub weighted: f64,
}

pub fn tail_mass(u: &Field, k: f64) -> Result<TailMass> {
    let grid = &u.grid;
    if !(k > 0.0) || k >= grid.half_width {
        return Err(invalid("k", "must lie in (0, half_width)"));
    }
    let mut plain = 0.0;
    let mut weighted = 0.0;
    for (i, &v) in u.values.iter().enumerate() {
        let r = grid.radius(i);
        let m = grid.weight(i) * v * v;
        if r >= k {
            plain += m;
        }
        weighted += cutoff_rho(r * r / (k * k)) * m;
    }
    Ok(TailMass { plain, weighted })
}

/// Provenance of an endpoint ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleTag {
    pub tau: f64,
    pub seed: u64,
    pub alpha: f64,
    pub horizon: f64,
}

/// Finite set of pullback endpoints on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointEnsemble {
    members: Vec<Field>,
    pub tag: EnsembleTag,
}

impl EndpointEnsemble {
    pub fn new(members: Vec<Field>, tag: EnsembleTag) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| invalid("members", "ensemble must be nonempty"))?;
        for m in &members[1..] {
            same_grid(first.grid(), m.grid())?;
        }
        Ok(Self { members, tag })
    }

    pub fn members(&self) -> &[Field] {
        &self.members
    }

    pub fn grid(&self) -> &Grid {
        self.members[0].grid()
    }

    /// Largest pairwise distance between members.
    pub fn spread(&self) -> f64 {
        let mut s = 0.0f64;
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                s = s.max(a.distance(b));
            }
        }
        s
    }

    /// Greedy deduplication: keeps a member only if it is farther than `tol`
    /// from every member kept before it.
    pub fn deduplicated(&self, tol: f64) -> EndpointEnsemble {
        let mut kept: Vec<Field> = Vec::new();
        for m in &self.members {
            if kept.iter().all(|k| k.distance(m) > tol) {
                kept.push(m.clone());
            }
        }
        EndpointEnsemble {
            members: kept,
            tag: self.tag,
        }
    }
}

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch("fields live on different grids".to_string()))
    }
}

/// `sup_{x∈a} inf_{y∈b} ‖x − y‖` (asymmetric).
pub fn hausdorff_semidistance(a: &EndpointEnsemble, b: &EndpointEnsemble) -> Result<f64> {
    same_grid(a.grid(), b.grid())?;
    Ok(a.members
        .iter()
        .map(|x| b.members.iter().map(|y| x.distance(y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}
