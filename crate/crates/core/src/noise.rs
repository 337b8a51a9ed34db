//! Two-sided Brownian increments on a uniform grid, coarse views obtained by
//! summing fine increments, the path shift `theta_s`, and the Lévy product
//! that stands in for iterated integrals under commutative noise.
//!
//! Every increment is addressed by `(master_seed, stream, step, column)`:
//! the ChaCha8 key comes from the master seed, the stream is the Monte Carlo
//! sample index, and the word position is derived from `(step, column)`.
//! Any entry can therefore be regenerated on its own, and filling a grid in
//! parallel gives the same bits as filling it sequentially.

use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// ChaCha words (u32) consumed by one normal variate: two u64 uniforms.
const WORDS_PER_VARIATE: u128 = 4;
const PAR_CHUNK: usize = 1 << 14;

fn rng_for(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard normal variate number `index` of `(master_seed, stream)`.
pub fn normal_at(master_seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = rng_for(master_seed, stream);
    rng.set_word_pos(index as u128 * WORDS_PER_VARIATE);
    box_muller(&mut rng)
}

fn integral_steps(t0: f64, t_end: f64, h: f64) -> Result<usize> {
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(Error::Config(format!("invalid interval [{t0}, {t_end}]")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("stepsize must be positive, got {h}")));
    }
    let len = t_end - t0;
    let ratio = len / h;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!(
            "interval length {len} is not an integer multiple of stepsize {h}"
        )));
    }
    Ok(steps as usize)
}

/// Immutable matrix of Brownian increments, `steps x m`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    master_seed: u64,
    stream: u64,
    t0: f64,
    t_end: f64,
    h_min: f64,
    steps: usize,
    m: usize,
    increments: Vec<f64>,
}

impl BrownianGrid {
    /// Samples stream 0 of `master_seed`.
    pub fn sample(master_seed: u64, t0: f64, t_end: f64, h_min: f64, m: usize) -> Result<Self> {
        Self::sample_stream(master_seed, 0, t0, t_end, h_min, m)
    }

    /// Samples an independent path per `stream`; Monte Carlo sample `i`
    /// uses stream `i`.
    pub fn sample_stream(
        master_seed: u64,
        stream: u64,
        t0: f64,
        t_end: f64,
        h_min: f64,
        m: usize,
    ) -> Result<Self> {
        let steps = integral_steps(t0, t_end, h_min)?;
        if m == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        let mut increments = vec![0.0; steps * m];
        let sd = h_min.sqrt();
        let fill = |offset: usize, chunk: &mut [f64]| {
            let mut rng = rng_for(master_seed, stream);
            rng.set_word_pos(offset as u128 * WORDS_PER_VARIATE);
            for v in chunk {
                *v = sd * box_muller(&mut rng);
            }
        };
        if increments.len() > 4 * PAR_CHUNK {
            increments
                .par_chunks_mut(PAR_CHUNK)
                .enumerate()
                .for_each(|(i, c)| fill(i * PAR_CHUNK, c));
        } else {
            fill(0, &mut increments);
        }
        Ok(Self {
            master_seed,
            stream,
            t0,
            t_end,
            h_min,
            steps,
            m,
            increments,
        })
    }

    /// Wraps given increments (row-major `steps x m`).
    pub fn from_increments(t0: f64, h_min: f64, m: usize, increments: Vec<f64>) -> Result<Self> {
        if m == 0 || increments.is_empty() || !increments.len().is_multiple_of(m) {
            return Err(Error::Config(format!(
                "{} increments do not form rows of width {m}",
                increments.len()
            )));
        }
        let steps = increments.len() / m;
        Ok(Self {
            master_seed: 0,
            stream: 0,
            t0,
            t_end: t0 + steps as f64 * h_min,
            h_min,
            steps,
            m,
            increments,
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    /// Row `j`: the increment over `[t0 + j h_min, t0 + (j + 1) h_min]`.
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.m..(j + 1) * self.m]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// The full grid as a view at the finest resolution.
    pub fn view(&self) -> PathView<'_> {
        PathView {
            grid: self,
            factor: 1,
            start: 0,
            len: self.steps,
            t0: self.t0,
        }
    }

    /// Coarse view whose increment `j` sums fine increments
    /// `factor * j .. factor * (j + 1)`.
    pub fn aggregate(&self, factor: usize) -> Result<PathView<'_>> {
        self.view().aggregate(factor)
    }

    /// `W(theta_s omega)(t) = W(t + s) - W(s)` over the grid's own window.
    pub fn theta_shift(&self, s: f64) -> Result<PathView<'_>> {
        self.view().theta_shift(s)
    }

    /// Binary dump: header `seed, t0, T, h_min, m, steps` as little-endian
    /// 64-bit fields, then the increments row-major as little-endian f64.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.master_seed.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        w.write_all(&self.t_end.to_le_bytes())?;
        w.write_all(&self.h_min.to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&(self.steps as u64).to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`BrownianGrid::write_dump`]. The stream index
    /// is not part of the format and reads back as 0.
    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let master_seed = u64::from_le_bytes(next(&mut r)?);
        let t0 = f64::from_le_bytes(next(&mut r)?);
        let t_end = f64::from_le_bytes(next(&mut r)?);
        let h_min = f64::from_le_bytes(next(&mut r)?);
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        if integral_steps(t0, t_end, h_min)? != steps || m == 0 {
            return Err(Error::Config("inconsistent grid dump header".into()));
        }
        let mut increments = Vec::with_capacity(steps * m);
        for _ in 0..steps * m {
            increments.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self {
            master_seed,
            stream: 0,
            t0,
            t_end,
            h_min,
            steps,
            m,
            increments,
        })
    }
}

/// Sequential access to increments, one step at a time. Schemes consume
/// paths only through this trait.
pub trait IncrementSource {
    fn steps(&self) -> usize;

    fn stepsize(&self) -> f64;

    /// Time of node 0.
    fn start_time(&self) -> f64;

    fn noise_dim(&self) -> usize;

    /// Writes the increment over step `j` into `out`.
    fn increment(&self, j: usize, out: &mut [f64]);
}

/// Read-only window onto a [`BrownianGrid`], possibly coarsened and shifted.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    grid: &'a BrownianGrid,
    factor: usize,
    /// Fine index of the first increment.
    start: usize,
    /// Number of coarse steps.
    len: usize,
    t0: f64,
}

impl<'a> PathView<'a> {
    pub fn grid(&self) -> &'a BrownianGrid {
        self.grid
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn h(&self) -> f64 {
        self.factor as f64 * self.grid.h_min
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.len as f64 * self.h()
    }

    /// Time of node `j`.
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.h()
    }

    /// Fine offset of the first increment in the parent grid.
    pub fn fine_start(&self) -> usize {
        self.start
    }

    pub fn aggregate(&self, factor: usize) -> Result<PathView<'a>> {
        if factor == 0 || !self.len.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "aggregation factor {factor} does not divide {} steps",
                self.len
            )));
        }
        Ok(PathView {
            factor: self.factor * factor,
            len: self.len / factor,
            ..*self
        })
    }

    fn node_index(&self, t: f64) -> Result<usize> {
        let h = self.h();
        let pos = (t - self.t0) / h;
        let idx = pos.round();
        if (pos - idx).abs() > 1e-9 * pos.abs().max(1.0) {
            return Err(Error::Config(format!(
                "time {t} is not on the grid of stepsize {h} starting at {}",
                self.t0
            )));
        }
        if idx < 0.0 || idx as usize > self.len {
            return Err(Error::Config(format!(
                "time {t} lies outside [{}, {}]",
                self.t0,
                self.t_end()
            )));
        }
        Ok(idx as usize)
    }

    /// Restriction to `[from, to]`; both ends must be nodes of this view.
    pub fn window(&self, from: f64, to: f64) -> Result<PathView<'a>> {
        let a = self.node_index(from)?;
        let b = self.node_index(to)?;
        if b < a {
            return Err(Error::Config(format!("empty window [{from}, {to}]")));
        }
        Ok(PathView {
            start: self.start + a * self.factor,
            len: b - a,
            t0: self.time(a),
            ..*self
        })
    }

    /// Same time window, driven by `W(t + s) - W(s)`: increment `j` becomes
    /// the parent's increment `s / h_min` fine steps further along.
    pub fn theta_shift(&self, s: f64) -> Result<PathView<'a>> {
        let h_min = self.grid.h_min;
        let shift = s / h_min;
        let k = shift.round();
        if (shift - k).abs() > 1e-9 * shift.abs().max(1.0) {
            return Err(Error::Config(format!(
                "shift {s} is not a multiple of the grid stepsize {h_min}"
            )));
        }
        let start = self.start as i64 + k as i64;
        let end = start + (self.len * self.factor) as i64;
        if start < 0 || end > self.grid.steps as i64 {
            return Err(Error::Config(format!(
                "shifted window [{}, {}] leaves the sampled range [{}, {}]",
                self.t0 + s,
                self.t_end() + s,
                self.grid.t0,
                self.grid.t_end
            )));
        }
        Ok(PathView {
            start: start as usize,
            ..*self
        })
    }

    /// Sum of all increments in index order, per column.
    pub fn total(&self) -> Vec<f64> {
        let m = self.grid.m;
        let mut acc = vec![0.0; m];
        let mut buf = vec![0.0; m];
        for j in 0..self.len {
            self.increment(j, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        acc
    }

    /// `W(t_j) - W(t_0)` at every node of the view, per column, row-major
    /// `(len + 1) x m`.
    pub fn cumulative(&self) -> Vec<f64> {
        let m = self.grid.m;
        let mut out = vec![0.0; (self.len + 1) * m];
        let mut buf = vec![0.0; m];
        for j in 0..self.len {
            self.increment(j, &mut buf);
            for r in 0..m {
                out[(j + 1) * m + r] = out[j * m + r] + buf[r];
            }
        }
        out
    }
}

impl IncrementSource for PathView<'_> {
    fn steps(&self) -> usize {
        self.len
    }

    fn stepsize(&self) -> f64 {
        self.h()
    }

    fn start_time(&self) -> f64 {
        self.t0
    }

    fn noise_dim(&self) -> usize {
        self.grid.m
    }

    #[inline]
    fn increment(&self, j: usize, out: &mut [f64]) {
        let m = self.grid.m;
        let first = self.start + j * self.factor;
        out.copy_from_slice(self.grid.increment(first));
        for k in 1..self.factor {
            let row = self.grid.increment(first + k);
            for r in 0..m {
                out[r] += row[r];
            }
        }
    }
}

/// `P[r1][r2] = (dW[r1] dW[r2] - delta(r1, r2) h) / 2`, row-major `m x m`.
pub fn levy_product(dw: &[f64], h: f64) -> Vec<f64> {
    let m = dw.len();
    let mut out = vec![0.0; m * m];
    levy_product_into(dw, h, &mut out);
    out
}

#[inline]
pub fn levy_product_into(dw: &[f64], h: f64, out: &mut [f64]) {
    let m = dw.len();
    for r1 in 0..m {
        for r2 in 0..m {
            let pi = if r1 == r2 { h } else { 0.0 };
            out[r1 * m + r2] = 0.5 * (dw[r1] * dw[r2] - pi);
        }
    }
}
