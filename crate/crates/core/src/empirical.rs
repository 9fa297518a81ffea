//! Streaming weighted empirical measure
//! `nu_n = (1/H_n) sum_k eta_k delta_{x_{k-1}}` with O(1)-per-step
//! functional recursion, per-coordinate quantile sketches, merge, and a
//! Wasserstein-1 evaluator against reference CDFs.

use std::io::Write;

use crate::kahan::KahanSum;
use crate::model::TestFunctional;
use crate::{Error, Result};

/// Points kept exactly before the sketch switches to its histogram.
pub const RESERVOIR_CAP: usize = 10_000;
/// Fixed histogram resolution; the range adapts by doubling.
pub const HIST_CELLS: usize = 4096;

/// Per-coordinate quantile sketch: an exact weighted reservoir for the first
/// [`RESERVOIR_CAP`] points plus a fixed-cell histogram over a range that
/// doubles (with exact pair-merging of cells) whenever a point lands outside.
#[derive(Debug, Clone)]
pub struct CoordSketch {
    reservoir: Vec<(f64, f64)>,
    reservoir_valid: bool,
    hist: Vec<f64>,
    lo: f64,
    hi: f64,
    initialized: bool,
    /// Mass that could no longer be binned after the doubling cap.
    pub underflow: f64,
    pub overflow: f64,
    min: f64,
    max: f64,
    total_w: f64,
    doublings: u32,
}

/// Doublings stop once the span reaches ~1e300 to avoid overflow; beyond
/// that, mass is tracked in the under/overflow cells and reported.
const MAX_DOUBLINGS: u32 = 960;

impl CoordSketch {
    fn new() -> Self {
        Self {
            reservoir: Vec::new(),
            reservoir_valid: true,
            hist: vec![0.0; HIST_CELLS],
            lo: 0.0,
            hi: 0.0,
            initialized: false,
            underflow: 0.0,
            overflow: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            total_w: 0.0,
            doublings: 0,
        }
    }

    fn insert(&mut self, v: f64, w: f64) {
        if w < 0.0 {
            return;
        }
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.total_w += w;
        if self.reservoir_valid {
            if self.reservoir.len() < RESERVOIR_CAP {
                self.reservoir.push((v, w));
            } else {
                self.reservoir_valid = false;
            }
        }
        if !self.initialized {
            self.lo = v - 1.0;
            self.hi = v + 1.0;
            self.initialized = true;
        }
        while v < self.lo || v >= self.hi {
            if self.doublings >= MAX_DOUBLINGS {
                if v < self.lo {
                    self.underflow += w;
                } else {
                    self.overflow += w;
                }
                return;
            }
            self.double_range(v >= self.hi);
        }
        let span = self.hi - self.lo;
        let cell = (((v - self.lo) / span) * HIST_CELLS as f64) as usize;
        self.hist[cell.min(HIST_CELLS - 1)] += w;
    }

    /// Double the span toward the side that overflowed, merging cell pairs
    /// so every recorded mass stays in a cell that contains its old cell.
    fn double_range(&mut self, right: bool) {
        let span = self.hi - self.lo;
        let mut merged = vec![0.0; HIST_CELLS];
        if right {
            for i in 0..HIST_CELLS {
                merged[i / 2] += self.hist[i];
            }
            self.hi = self.lo + 2.0 * span;
        } else {
            for i in 0..HIST_CELLS {
                merged[(HIST_CELLS + i) / 2] += self.hist[i];
            }
            self.lo = self.hi - 2.0 * span;
        }
        self.hist = merged;
        self.doublings += 1;
    }

    /// Weighted quantile, exact from the reservoir while it is valid.
    fn quantile(&self, u: f64) -> f64 {
        if self.total_w == 0.0 {
            return f64::NAN;
        }
        let target = u * self.total_w;
        if self.reservoir_valid {
            let mut pts = self.reservoir.clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = 0.0;
            for (v, w) in &pts {
                cum += w;
                if cum >= target {
                    return *v;
                }
            }
            return pts.last().map(|p| p.0).unwrap_or(f64::NAN);
        }
        let mut cum = self.underflow;
        if cum >= target {
            return self.min;
        }
        let span = self.hi - self.lo;
        let cell_w = span / HIST_CELLS as f64;
        for (i, m) in self.hist.iter().enumerate() {
            if *m <= 0.0 {
                continue;
            }
            if cum + m >= target {
                let frac = (target - cum) / m;
                return self.lo + (i as f64 + frac) * cell_w;
            }
            cum += m;
        }
        self.max
    }

    /// Empirical CDF at t (right-continuous), exact in the reservoir regime.
    /// One-off evaluation; repeated queries should go through
    /// [`CoordSketch::cdf_evaluator`].
    fn cdf(&self, t: f64) -> f64 {
        self.cdf_evaluator().eval(t)
    }

    /// Precompute the cumulative data once so repeated CDF queries cost a
    /// binary search (the Wasserstein integrator evaluates millions).
    pub fn cdf_evaluator(&self) -> CdfEvaluator {
        if self.total_w > 0.0 && self.reservoir_valid {
            let mut pts = self.reservoir.clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = Vec::with_capacity(pts.len());
            let mut acc = 0.0;
            let mut xs = Vec::with_capacity(pts.len());
            for (v, w) in &pts {
                acc += w;
                xs.push(*v);
                cum.push(acc / self.total_w);
            }
            CdfEvaluator::Exact { xs, cum }
        } else {
            let mut cum = Vec::with_capacity(HIST_CELLS + 1);
            let mut acc = self.underflow;
            cum.push(acc);
            for m in &self.hist {
                acc += m;
                cum.push(acc);
            }
            CdfEvaluator::Histogram {
                lo: self.lo,
                hi: self.hi,
                cum,
                total: self.total_w.max(f64::MIN_POSITIVE),
            }
        }
    }

    fn merge_from(&mut self, other: &CoordSketch) {
        if !other.initialized {
            self.reservoir_valid = self.reservoir_valid
                && other.reservoir_valid
                && self.reservoir.len() + other.reservoir.len() <= RESERVOIR_CAP;
            return;
        }
        if !self.initialized {
            *self = other.clone();
            return;
        }
        if self.reservoir_valid
            && other.reservoir_valid
            && self.reservoir.len() + other.reservoir.len() <= RESERVOIR_CAP
        {
            self.reservoir.extend_from_slice(&other.reservoir);
        } else {
            self.reservoir_valid = false;
        }
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.total_w += other.total_w;
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        if self.lo == other.lo && self.hi == other.hi {
            for (a, b) in self.hist.iter_mut().zip(&other.hist) {
                *a += b;
            }
            return;
        }
        // differing ranges: re-bin the other histogram at cell centers
        let span = other.hi - other.lo;
        let cell_w = span / HIST_CELLS as f64;
        for (i, m) in other.hist.iter().enumerate() {
            if *m > 0.0 {
                let center = other.lo + (i as f64 + 0.5) * cell_w;
                self.insert_mass_only(center, *m);
            }
        }
    }

    /// Histogram-only insert used by range-mismatched merges (the totals and
    /// extrema were already combined).
    fn insert_mass_only(&mut self, v: f64, w: f64) {
        while v < self.lo || v >= self.hi {
            if self.doublings >= MAX_DOUBLINGS {
                if v < self.lo {
                    self.underflow += w;
                } else {
                    self.overflow += w;
                }
                return;
            }
            self.double_range(v >= self.hi);
        }
        let span = self.hi - self.lo;
        let cell = (((v - self.lo) / span) * HIST_CELLS as f64) as usize;
        self.hist[cell.min(HIST_CELLS - 1)] += w;
    }

    pub fn support(&self) -> (f64, f64) {
        (self.min, self.max)
    }
}

/// Reusable marginal-CDF evaluator: exact step function over the sorted
/// reservoir, or linear interpolation of the histogram cumulative.
pub enum CdfEvaluator {
    Exact {
        xs: Vec<f64>,
        cum: Vec<f64>,
    },
    Histogram {
        lo: f64,
        hi: f64,
        cum: Vec<f64>,
        total: f64,
    },
}

impl CdfEvaluator {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            CdfEvaluator::Exact { xs, cum } => {
                if xs.is_empty() {
                    return 0.0;
                }
                // number of points <= t (right-continuous step function)
                let idx = xs.partition_point(|v| *v <= t);
                if idx == 0 {
                    0.0
                } else {
                    cum[idx - 1]
                }
            }
            CdfEvaluator::Histogram { lo, hi, cum, total } => {
                if t < *lo {
                    return cum[0] / total;
                }
                if t >= *hi {
                    return cum[HIST_CELLS] / total;
                }
                let pos = (t - lo) / (hi - lo) * HIST_CELLS as f64;
                let cell = (pos as usize).min(HIST_CELLS - 1);
                let frac = pos - cell as f64;
                (cum[cell] + frac * (cum[cell + 1] - cum[cell])) / total
            }
        }
    }
}

/// Geometric-checkpoint trace entry: (n, H_n, registered functional values).
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub n: u64,
    pub h: f64,
    pub values: Vec<f64>,
}

/// Streaming weighted empirical measure with registered functionals and
/// per-coordinate quantile sketches. Single-writer; merge is the only
/// cross-thread composition.
pub struct EmpiricalAccumulator {
    dim: usize,
    n: u64,
    h: KahanSum,
    functionals: Vec<(TestFunctional, f64)>,
    sketches: Vec<CoordSketch>,
    trace: Option<Vec<TraceEntry>>,
    next_checkpoint: u64,
}

impl EmpiricalAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            h: KahanSum::new(),
            functionals: Vec::new(),
            sketches: (0..dim).map(|_| CoordSketch::new()).collect(),
            trace: None,
            next_checkpoint: 1,
        }
    }

    /// Enable the geometric-checkpoint trace (n in {1, 2, 4, ...}).
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Register a functional before feeding the accumulator.
    pub fn register(&mut self, f: TestFunctional) {
        self.functionals.push((f, 0.0));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// H_n, the running weight sum (compensated).
    pub fn weight_sum(&self) -> f64 {
        self.h.value()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.functionals
            .iter()
            .map(|(f, _)| f.label.as_str())
            .collect()
    }

    /// Current nu_n(f) for the functional registered under `label`.
    pub fn value(&self, label: &str) -> Option<f64> {
        self.functionals
            .iter()
            .find(|(f, _)| f.label == label)
            .map(|(_, v)| *v)
    }

    pub fn values(&self) -> Vec<(String, f64)> {
        self.functionals
            .iter()
            .map(|(f, v)| (f.label.clone(), *v))
            .collect()
    }

    /// Push one state with its weight:
    /// `nu_n(f) = nu_{n-1}(f) + (eta/H_n)(f(x) - nu_{n-1}(f))`.
    pub fn update(&mut self, x: &[f64], eta: f64) -> Result<()> {
        if eta < 0.0 {
            return Err(Error::input("weights must be nonnegative"));
        }
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "state dimension {} does not match accumulator dimension {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: "non-finite state pushed into the empirical measure".into(),
                state: x.to_vec(),
                gamma: f64::NAN,
                step: self.n + 1,
            });
        }
        self.n += 1;
        self.h.add(eta);
        let h = self.h.value();
        if h > 0.0 {
            let ratio = eta / h;
            for (f, nu) in &mut self.functionals {
                let fx = f.eval(x);
                if !fx.is_finite() {
                    return Err(Error::Numeric {
                        context: format!("functional '{}' returned a non-finite value", f.label),
                        state: x.to_vec(),
                        gamma: f64::NAN,
                        step: self.n,
                    });
                }
                *nu += ratio * (fx - *nu);
            }
        }
        for (sketch, xi) in self.sketches.iter_mut().zip(x) {
            sketch.insert(*xi, eta);
        }
        if self.trace.is_some() && self.n >= self.next_checkpoint {
            self.record_checkpoint();
            self.next_checkpoint = self.n.saturating_mul(2);
        }
        Ok(())
    }

    /// Snapshot the functional values into the trace (used by drivers to pin
    /// the final n even when it is not a power of two).
    pub fn record_checkpoint(&mut self) {
        let entry = TraceEntry {
            n: self.n,
            h: self.h.value(),
            values: self.functionals.iter().map(|(_, v)| *v).collect(),
        };
        if let Some(tr) = &mut self.trace {
            if tr.last().map(|e| e.n) != Some(entry.n) {
                tr.push(entry);
            }
        }
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// Combine two accumulators fed from disjoint chains:
    /// `nu(f) = (H_a nu_a(f) + H_b nu_b(f)) / (H_a + H_b)`.
    ///
    /// The merged trace is the left operand's (checkpoint history is per
    /// stream and is not interleaved).
    pub fn merge(
        mut a: EmpiricalAccumulator,
        b: &EmpiricalAccumulator,
    ) -> Result<EmpiricalAccumulator> {
        if a.dim != b.dim {
            return Err(Error::input(
                "cannot merge accumulators of different dimensions",
            ));
        }
        let labels_a: Vec<&str> = a
            .functionals
            .iter()
            .map(|(f, _)| f.label.as_str())
            .collect();
        let labels_b: Vec<&str> = b
            .functionals
            .iter()
            .map(|(f, _)| f.label.as_str())
            .collect();
        if labels_a != labels_b {
            return Err(Error::input(
                "cannot merge accumulators with different functional lists",
            ));
        }
        let ha = a.h.value();
        let hb = b.h.value();
        let total = ha + hb;
        for ((_, va), (_, vb)) in a.functionals.iter_mut().zip(&b.functionals) {
            if total > 0.0 {
                *va = (ha * *va + hb * *vb) / total;
            }
        }
        a.h.add(hb);
        a.n += b.n;
        for (sa, sb) in a.sketches.iter_mut().zip(&b.sketches) {
            sa.merge_from(sb);
        }
        Ok(a)
    }

    /// Weighted quantile of one coordinate, u in (0, 1); exact from the
    /// reservoir while n <= RESERVOIR_CAP.
    pub fn quantile(&self, coordinate: usize, u: f64) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::input("quantile of an empty accumulator"));
        }
        if !(0.0 < u && u < 1.0) {
            return Err(Error::input("quantile level u must lie in (0, 1)"));
        }
        if coordinate >= self.dim {
            return Err(Error::input("coordinate out of range"));
        }
        Ok(self.sketches[coordinate].quantile(u))
    }

    /// Empirical marginal CDF of one coordinate.
    pub fn cdf(&self, coordinate: usize, t: f64) -> f64 {
        self.sketches[coordinate].cdf(t)
    }

    pub fn sketch(&self, coordinate: usize) -> &CoordSketch {
        &self.sketches[coordinate]
    }

    /// Wasserstein-1 distance `int |F_emp - F_ref|` of one marginal against a
    /// reference CDF, by trapezoid rule on a grid spanning both supports.
    ///
    /// Returns the value and a grid-resolution error bound (h times the
    /// total-variation bound of the integrand, |F - G| having TV <= 2).
    pub fn wasserstein1_1d<F: Fn(f64) -> f64>(
        &self,
        coordinate: usize,
        ref_cdf: F,
        nodes: usize,
    ) -> Result<(f64, f64)> {
        if nodes < 16 {
            return Err(Error::input("wasserstein grid needs at least 16 nodes"));
        }
        if coordinate >= self.dim {
            return Err(Error::input("coordinate out of range"));
        }
        let sketch = &self.sketches[coordinate];
        let (emp_lo, emp_hi) = sketch.support();
        if !emp_lo.is_finite() {
            return Err(Error::input("wasserstein of an empty accumulator"));
        }
        // expand to cover the reference support as well
        let mut a = emp_lo;
        let mut b = emp_hi.max(a + 1e-12);
        let mut step = (b - a).max(1.0);
        while ref_cdf(a) > 1e-9 && step < 1e12 {
            a -= step;
            step *= 2.0;
        }
        step = (b - a).max(1.0);
        while ref_cdf(b) < 1.0 - 1e-9 && step < 1e12 {
            b += step;
            step *= 2.0;
        }
        let h = (b - a) / (nodes - 1) as f64;
        let emp = sketch.cdf_evaluator();
        let mut sum = 0.0;
        for i in 0..nodes {
            let t = a + i as f64 * h;
            let diff = (emp.eval(t) - ref_cdf(t)).abs();
            let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            sum += w * diff;
        }
        Ok((sum * h, h))
    }

    /// One CSV row per (checkpoint, functional):
    /// `n,Gamma_n,H_n,label,nu_n_value`. `gamma_of(n)` supplies Gamma_n from
    /// the schedule that drove this accumulator.
    pub fn write_trace_csv<W: Write, G: Fn(u64) -> f64>(
        &self,
        gamma_of: G,
        w: &mut W,
    ) -> Result<()> {
        writeln!(w, "n,Gamma_n,H_n,label,nu_n_value")?;
        let Some(trace) = &self.trace else {
            return Err(Error::config("trace was not enabled on this accumulator"));
        };
        for entry in trace {
            let g = gamma_of(entry.n);
            for ((f, _), v) in self.functionals.iter().zip(&entry.values) {
                writeln!(
                    w,
                    "{},{:.17e},{:.17e},{},{:.17e}",
                    entry.n, g, entry.h, f.label, v
                )?;
            }
        }
        Ok(())
    }

    /// Quantile table rows `coordinate,u,quantile`.
    pub fn write_quantile_csv<W: Write>(&self, us: &[f64], w: &mut W) -> Result<()> {
        writeln!(w, "coordinate,u,quantile")?;
        for coord in 0..self.dim {
            for &u in us {
                writeln!(w, "{},{},{:.17e}", coord, u, self.quantile(coord, u)?)?;
            }
        }
        Ok(())
    }
}
