//! Two-sided Wiener paths, the shift group, and Ornstein-Uhlenbeck processes.
//!
//! A [`NoisePath`] is a pure function of its seed: Brownian increments are
//! generated block by block, each block from its own ChaCha stream keyed by the
//! signed block index, so any window of the path can be regenerated
//! bit-identically no matter how far back a pullback run reaches.
//!
//! Times on a path are integer "ticks" of the path resolution `dt`. Shifts are
//! integer tick offsets, which makes the group law exact.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::math;

/// Truncation tolerance for the improper integral defining `z`.
pub const OU_TRUNCATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Increments {
    Brownian,
    Zero,
}

/// Reproducible two-sided Brownian path `ω` with `ω(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePath {
    seed: u64,
    dt: f64,
    block_ticks: usize,
    increments: Increments,
}

impl NoisePath {
    /// Creates a path with resolution `dt` whose increments are generated in
    /// blocks of `block_length` seconds.
    pub fn new(seed: u64, dt: f64, block_length: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", "must be positive and finite"));
        }
        let block_ticks = match math::to_ticks(block_length, dt) {
            Some(k) if k >= 1 => k as usize,
            _ => return Err(invalid("block_length", "must be a positive integer multiple of dt")),
        };
        Ok(Self {
            seed,
            dt,
            block_ticks,
            increments: Increments::Brownian,
        })
    }

    /// A path with identically zero increments (`ω ≡ 0`), for tests.
    pub fn zero(dt: f64, block_length: f64) -> Result<Self> {
        let mut p = Self::new(0, dt, block_length)?;
        p.increments = Increments::Zero;
        Ok(p)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn block_length(&self) -> f64 {
        self.block_ticks as f64 * self.dt
    }

    pub fn is_zero(&self) -> bool {
        self.increments == Increments::Zero
    }

    /// A path with the same resolution and blocking but another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    /// Brownian increments of block `b`, covering ticks `[b·B, (b+1)·B)`.
    fn block(&self, b: i64) -> Vec<f64> {
        match self.increments {
            Increments::Zero => vec![0.0; self.block_ticks],
            Increments::Brownian => {
                let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
                rng.set_stream(b as u64);
                let scale = math::sqrt(self.dt);
                (0..self.block_ticks)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }

    /// Increments `ω((j+1)dt) − ω(j dt)` for `j = start .. start + count`.
    pub fn increments(&self, start: i64, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        let bt = self.block_ticks as i64;
        let end = start + count as i64;
        let mut b = start.div_euclid(bt);
        while b * bt < end {
            let blk = self.block(b);
            let lo = (start - b * bt).max(0) as usize;
            let hi = ((end - b * bt).min(bt)) as usize;
            out.extend_from_slice(&blk[lo..hi]);
            b += 1;
        }
        out
    }

    /// `ω` at tick `m`, accumulated outward from `ω(0) = 0`.
    pub fn value_at_tick(&self, m: i64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        if m > 0 {
            self.increments(0, m as usize).iter().fold(0.0, |s, d| s + d)
        } else {
            self.increments(m, (-m) as usize).iter().rev().fold(0.0, |s, d| s - d)
        }
    }

    /// `ω` at ticks `m0 ..= m1`, bit-identical to repeated [`Self::value_at_tick`].
    pub fn values_at_ticks(&self, m0: i64, m1: i64) -> Vec<f64> {
        assert!(m0 <= m1);
        let mut out = Vec::with_capacity((m1 - m0 + 1) as usize);
        // negative part, accumulated from 0 downward
        if m0 < 0 {
            let top = m1.min(-1);
            let inc = self.increments(m0, (-m0) as usize);
            let mut neg = vec![0.0; (-m0) as usize];
            let mut s = 0.0;
            for (i, d) in inc.iter().enumerate().rev() {
                s -= d;
                neg[i] = s;
            }
            out.extend_from_slice(&neg[..(top - m0 + 1) as usize]);
        }
        if m1 >= 0 {
            let lo = m0.max(0);
            let inc = self.increments(0, m1 as usize);
            let mut s = 0.0;
            if lo == 0 {
                out.push(0.0);
            }
            for (j, d) in inc.iter().enumerate() {
                s += d;
                if (j as i64 + 1) >= lo {
                    out.push(s);
                }
            }
        }
        out
    }
}

/// Anything that can be read as a (possibly shifted) Brownian path.
pub trait NoiseSource {
    fn base(&self) -> &NoisePath;
    /// Tick offset `s` such that this source reads `ω(· + s) − ω(s)`.
    fn offset_ticks(&self) -> i64;

    fn dt(&self) -> f64 {
        self.base().dt()
    }

    fn value_at_tick(&self, m: i64) -> f64 {
        let off = self.offset_ticks();
        if off == 0 {
            self.base().value_at_tick(m)
        } else {
            self.base().value_at_tick(m + off) - self.base().value_at_tick(off)
        }
    }

    /// Value at time `t`, linearly interpolated between ticks.
    fn value(&self, t: f64) -> f64 {
        let r = t / self.dt();
        let m = math::floor(r) as i64;
        let frac = r - m as f64;
        let a = self.value_at_tick(m);
        if frac == 0.0 {
            return a;
        }
        let b = self.value_at_tick(m + 1);
        a + frac * (b - a)
    }

    /// `θ_s` applied to this source. `s` is rounded to the nearest tick.
    fn shift(&self, s: f64) -> ShiftedView {
        let ds = math::round(s / self.dt()) as i64;
        ShiftedView {
            base: *self.base(),
            offset: self.offset_ticks() + ds,
        }
    }

    fn shift_ticks(&self, ds: i64) -> ShiftedView {
        ShiftedView {
            base: *self.base(),
            offset: self.offset_ticks() + ds,
        }
    }
}

impl NoiseSource for NoisePath {
    fn base(&self) -> &NoisePath {
        self
    }
    fn offset_ticks(&self) -> i64 {
        0
    }
}

/// `θ_s ω`: the base path read from `s` onward and re-zeroed at `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedView {
    base: NoisePath,
    offset: i64,
}

impl ShiftedView {
    pub fn offset(&self) -> f64 {
        self.offset as f64 * self.base.dt
    }
}

impl NoiseSource for ShiftedView {
    fn base(&self) -> &NoisePath {
        &self.base
    }
    fn offset_ticks(&self) -> i64 {
        self.offset
    }
}

/// Samples of `z(θ_t ω)` on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPath {
    pub rate: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl OuPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear interpolation inside the sampled window (clamped at the ends).
    pub fn value_at(&self, t: f64) -> f64 {
        let r = (t - self.times[0]) / self.dt;
        if r <= 0.0 {
            return self.values[0];
        }
        let k = math::floor(r) as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = r - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Discrete residual `z_{k+1} − z_k + rate·z_k·dt − ΔW_k` along the path.
    pub fn residuals<S: NoiseSource>(&self, src: &S) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len().saturating_sub(1));
        for k in 0..self.values.len().saturating_sub(1) {
            let dw = src.value(self.times[k + 1]) - src.value(self.times[k]);
            out.push(self.values[k + 1] - self.values[k] + self.rate * self.values[k] * self.dt - dw);
        }
        out
    }
}

/// Canonical OU values at the absolute base ticks `start + k·stride`,
/// `k = 0 .. count`.
///
/// Every value is the exact OU recursion of the piecewise-linear path started
/// from zero far enough in the past that the discarded memory is below
/// [`OU_TRUNCATION_TOL`]; restarts happen on a fixed anchor lattice, so a value
/// depends only on its tick and never on the requested window.
pub(crate) fn ou_canonical(path: &NoisePath, rate: f64, stride: usize, start: i64, count: usize) -> Vec<f64> {
    let h = stride as f64 * path.dt;
    let decay = math::exp(-rate * h);
    // exact weight of a linear increment over one step
    let kappa = math::phi1(rate * h);
    let memory = math::ceil(math::ln(1.0 / OU_TRUNCATION_TOL) / (rate * h)) as i64;
    let anchor = (math::round(path.block_length() / h) as i64).max(1);

    let s = stride as i64;
    let residue = start.rem_euclid(s);
    let n0 = (start - residue) / s;
    let n1 = n0 + count as i64; // exclusive
    let first_anchor = n0.div_euclid(anchor) * anchor;
    let lat_lo = first_anchor - memory;
    let fine = path.increments(residue + lat_lo * s, ((n1 - lat_lo) * s) as usize);
    let coarse: Vec<f64> = fine.chunks(stride).map(|c| c.iter().fold(0.0, |a, b| a + b)).collect();
    let dw = |n: i64| coarse[(n - lat_lo) as usize];

    let mut out = Vec::with_capacity(count);
    let mut a = first_anchor;
    while a < n1 {
        let mut z = 0.0;
        for n in (a - memory)..a {
            z = decay * z + kappa * dw(n);
        }
        let seg_end = (a + anchor).min(n1);
        for n in a..seg_end {
            if n >= n0 {
                out.push(z);
            }
            z = decay * z + kappa * dw(n);
        }
        a += anchor;
    }
    out
}

/// `z(θ_t ω)` for `t ∈ [t0, t1]` on a grid of spacing `dt`, the stationary
/// solution of `dz + rate·z dt = dW` driven by `src`.
pub fn ou_from_path<S: NoiseSource>(src: &S, rate: f64, t0: f64, t1: f64, dt: f64) -> Result<OuPath> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(invalid("rate", "must be positive"));
    }
    if !(t0 < t1) {
        return Err(invalid("t1", "must exceed t0"));
    }
    let base = src.base();
    let stride = match math::to_ticks(dt, base.dt()) {
        Some(k) if k >= 1 => k as usize,
        _ => return Err(invalid("dt", "must be a positive multiple of the path dt")),
    };
    let start =
        src.offset_ticks() + math::to_ticks(t0, base.dt()).ok_or_else(|| invalid("t0", "must lie on the path grid"))?;
    let steps = math::round((t1 - t0) / dt) as usize;
    let values = ou_canonical(base, rate, stride, start, steps + 1);
    let times = (0..=steps).map(|k| t0 + k as f64 * dt).collect();
    Ok(OuPath {
        rate,
        dt,
        times,
        values,
    })
}

/// One horizon of an ergodicity diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicRow {
    pub horizon: f64,
    /// `|z(θ_t ω)| / t`
    pub sublinear_ratio: f64,
    /// `(1/t) ∫_0^t z(θ_r ω) dr`
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErgodicReport {
    pub rows: Vec<ErgodicRow>,
}

impl ErgodicReport {
    pub fn at_full_horizon(&self) -> Option<&ErgodicRow> {
        self.rows.last()
    }
}

/// Sublinear-growth and time-average ratios of `z` at horizons 100, 1000, …
/// and at the full length of the path (measured from its first sample).
pub fn ergodic_diagnostics(z: &OuPath) -> ErgodicReport {
    let mut rows = Vec::new();
    if z.values.len() < 2 {
        return ErgodicReport { rows };
    }
    let full = z.times[z.len() - 1] - z.times[0];
    let mut marks = Vec::new();
    let mut h = 100.0;
    while h < full * (1.0 - 1e-12) {
        marks.push(h);
        h *= 10.0;
    }
    if full >= 100.0 - 1e-9 {
        marks.push(full);
    }
    let mut integral = 0.0;
    let mut next = 0;
    for k in 1..z.len() {
        integral += 0.5 * z.dt * (z.values[k - 1] + z.values[k]);
        let t = k as f64 * z.dt;
        while next < marks.len() && t >= marks[next] - 0.5 * z.dt {
            rows.push(ErgodicRow {
                horizon: t,
                sublinear_ratio: z.values[k].abs() / t,
                mean_ratio: integral / t,
            });
            next += 1;
        }
    }
    ErgodicReport { rows }
}

/// Law of the coefficient process `η(θ_t ω)` in the additive equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaKind {
    Constant(f64),
    /// Stationary OU process with the given rate (mean zero).
    Ou {
        rate: f64,
    },
    /// `mean + OU`.
    ShiftedOu {
        rate: f64,
        mean: f64,
    },
}

/// Where the randomness of `η` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaSource {
    /// Driven by the same `ω` as the equation's Wiener process.
    SamePath,
    /// Driven by an independent path with its own seed.
    Independent { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaProcess {
    pub kind: EtaKind,
    pub source: EtaSource,
}

impl Default for EtaProcess {
    fn default() -> Self {
        Self {
            kind: EtaKind::Ou { rate: 1.0 },
            source: EtaSource::SamePath,
        }
    }
}

impl EtaProcess {
    pub fn constant(value: f64) -> Self {
        Self {
            kind: EtaKind::Constant(value),
            source: EtaSource::SamePath,
        }
    }

    /// `E(η)`.
    pub fn mean(&self) -> f64 {
        match self.kind {
            EtaKind::Constant(c) => c,
            EtaKind::Ou { .. } => 0.0,
            EtaKind::ShiftedOu { mean, .. } => mean,
        }
    }

    /// `η(θ_t ω)` on the grid `t0, t0+dt, …, t1`.
    pub fn sample<S: NoiseSource>(&self, src: &S, t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
        let steps = math::round((t1 - t0) / dt) as usize;
        let ou = |rate: f64| -> Result<Vec<f64>> {
            match self.source {
                EtaSource::SamePath => Ok(ou_from_path(src, rate, t0, t1, dt)?.values),
                EtaSource::Independent { seed } => {
                    let other = src.base().with_seed(seed).shift_ticks(src.offset_ticks());
                    Ok(ou_from_path(&other, rate, t0, t1, dt)?.values)
                }
            }
        };
        match self.kind {
            EtaKind::Constant(c) => Ok(vec![c; steps + 1]),
            EtaKind::Ou { rate } => ou(rate),
            EtaKind::ShiftedOu { rate, mean } => Ok(ou(rate)?.into_iter().map(|v| mean + v).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> NoisePath {
        NoisePath::new(7, 0.01, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(NoisePath::new(1, 0.0, 1.0).is_err());
        assert!(NoisePath::new(1, -0.1, 1.0).is_err());
        assert!(NoisePath::new(1, 0.01, 0.015).is_err());
    }

    #[test]
    fn origin_is_zero() {
        assert_eq!(path().value(0.0), 0.0);
        assert_eq!(path().value_at_tick(0), 0.0);
    }

    #[test]
    fn repeated_queries_are_identical() {
        let p = path();
        let a: Vec<f64> = (-500..=500).map(|m| p.value_at_tick(m)).collect();
        let b = p.values_at_ticks(-500, 500);
        assert_eq!(a, b);
        let c = p.values_at_ticks(-250, 0);
        assert_eq!(&a[250..=500], &c[..]);
        let d = p.values_at_ticks(3, 40);
        assert_eq!(&a[503..=540], &d[..]);
    }

    #[test]
    fn shift_basics() {
        let p = path();
        let v0 = p.shift(0.0);
        for m in -20..20 {
            assert_eq!(v0.value_at_tick(m), p.value_at_tick(m));
        }
        assert_eq!(p.shift(3.0).value(0.0), 0.0);
        assert_eq!(p.shift(2.0).shift(-2.0).value(1.0), p.value(1.0));
        assert_eq!(p.shift(1.5).shift(0.25), p.shift(1.75));
    }

    #[test]
    fn zero_path_gives_zero_ou() {
        let p = NoisePath::zero(0.01, 1.0).unwrap();
        let z = ou_from_path(&p, 1.0, -3.0, 3.0, 0.01).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ou_rejects_bad_arguments() {
        let p = path();
        assert!(ou_from_path(&p, 0.0, 0.0, 1.0, 0.01).is_err());
        assert!(ou_from_path(&p, 1.0, 1.0, 1.0, 0.01).is_err());
        assert!(ou_from_path(&p, 1.0, 0.0, 1.0, 0.015).is_err());
    }

    #[test]
    fn ou_window_independent() {
        let p = path();
        let a = ou_from_path(&p, 1.0, -5.0, 5.0, 0.01).unwrap();
        let b = ou_from_path(&p, 1.0, 0.0, 2.0, 0.01).unwrap();
        assert_eq!(&a.values[500..=700], &b.values[..]);
    }

    #[test]
    fn ou_shift_consistency_is_exact() {
        let p = path();
        let s = 2.37;
        let a = ou_from_path(&p.shift(s), 1.0, 0.0, 3.0, 0.01).unwrap();
        let b = ou_from_path(&p, 1.0, s, s + 3.0, 0.01).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn ou_residual_is_small() {
        let p = path();
        let z = ou_from_path(&p, 1.0, 0.0, 20.0, 0.01).unwrap();
        let r = z.residuals(&p);
        let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // O(dt^{3/2}) per step with dt = 0.01
        assert!(max < 5.0 * 0.01, "max residual {max}");
    }

    #[test]
    fn ergodic_zero_path() {
        let p = NoisePath::zero(0.1, 1.0).unwrap();
        let z = ou_from_path(&p, 1.0, 0.0, 200.0, 0.1).unwrap();
        let rep = ergodic_diagnostics(&z);
        assert!(!rep.rows.is_empty());
        for r in &rep.rows {
            assert_eq!(r.sublinear_ratio, 0.0);
            assert_eq!(r.mean_ratio, 0.0);
        }
    }

    #[test]
    fn eta_kinds() {
        let p = path();
        let c = EtaProcess::constant(0.3).sample(&p, 0.0, 1.0, 0.01).unwrap();
        assert_eq!(c.len(), 101);
        assert!(c.iter().all(|&v| v == 0.3));
        let sh = EtaProcess {
            kind: EtaKind::ShiftedOu { rate: 1.0, mean: 2.0 },
            source: EtaSource::SamePath,
        };
        let ou = EtaProcess::default().sample(&p, 0.0, 1.0, 0.01).unwrap();
        let s = sh.sample(&p, 0.0, 1.0, 0.01).unwrap();
        for (a, b) in ou.iter().zip(&s) {
            assert_eq!(*b, 2.0 + a);
        }
        assert_eq!(sh.mean(), 2.0);
        let ind = EtaProcess {
            kind: EtaKind::Ou { rate: 1.0 },
            source: EtaSource::Independent { seed: 99 },
        }
        .sample(&p, 0.0, 1.0, 0.01)
        .unwrap();
        assert_ne!(ind, ou);
    }
}
