//! Scenario generation for the canonical decomposition of `X`.
//!
//! The Brownian part is sampled by a bridge: each segment's terminal value is
//! drawn first, then the interior grid points in order, so the values at
//! segment boundaries do not depend on how finely the segments are split.
//! Jumps form an exact compound Poisson process per segment.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::model::{MarketModel, Vector};
use crate::sampling::stream;

/// Paths per unit of parallel work.
pub const CHUNK: usize = 1024;

/// Grid containing every segment boundary, with each segment split evenly.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<f64>,
    /// Segment index of the step ending at `points[k]`, for `k ≥ 1`.
    step_segment: Vec<usize>,
    /// Range of grid indices `[first, last]` of each segment.
    segment_points: Vec<(usize, usize)>,
}

impl TimeGrid {
    /// `max(1, ⌈steps_per_unit · length⌉)` steps per segment.
    pub fn new(model: &MarketModel, steps_per_unit: f64) -> Self {
        let mut points = vec![0.0];
        let mut step_segment = vec![usize::MAX];
        let mut segment_points = Vec::new();
        for (k, (a, b)) in model.spans().into_iter().enumerate() {
            let n = ((steps_per_unit * (b - a) - 1e-9).ceil() as usize).max(1);
            let first = points.len() - 1;
            for j in 1..=n {
                points.push(if j == n {
                    b
                } else {
                    a + (b - a) * j as f64 / n as f64
                });
                step_segment.push(k);
            }
            segment_points.push((first, points.len() - 1));
        }
        Self {
            points,
            step_segment,
            segment_points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.points[step] - self.points[step - 1]
    }

    pub fn step_segment(&self, step: usize) -> usize {
        self.step_segment[step]
    }

    /// Step `k` such that `t ∈ (points[k−1], points[k]]` within segment `seg`.
    fn locate(&self, seg: usize, t: f64) -> usize {
        let (first, last) = self.segment_points[seg];
        let pts = &self.points[first..=last];
        let i = pts.partition_point(|&p| p < t);
        (first + i.max(1)).min(last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Grid step containing the jump.
    pub step: usize,
    /// Index into the segment's jump measure.
    pub atom: usize,
}

/// Brownian increments per grid step and the jump events of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub index: u64,
    /// Standard Brownian increments `ΔW_k`, one per step (index 0 unused).
    pub dw: Vec<Vector>,
    pub jumps: Vec<JumpEvent>,
}

struct SegmentJumps {
    rate: f64,
    atoms: Vec<usize>,
    chooser: Option<WeightedIndex<f64>>,
}

/// Reusable sampler for one model and grid.
pub struct PathSampler<'a> {
    model: &'a MarketModel,
    grid: &'a TimeGrid,
    seed: u64,
    jumps: Vec<SegmentJumps>,
}

impl<'a> PathSampler<'a> {
    pub fn new(model: &'a MarketModel, grid: &'a TimeGrid, seed: u64) -> Self {
        let jumps = model
            .segments()
            .iter()
            .map(|s| {
                let (atoms, weights): (Vec<usize>, Vec<f64>) =
                    s.chars.jumps.charged().map(|(i, a)| (i, a.w)).unzip();
                SegmentJumps {
                    rate: weights.iter().sum(),
                    chooser: WeightedIndex::new(&weights).ok(),
                    atoms,
                }
            })
            .collect();
        Self {
            model,
            grid,
            seed,
            jumps,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.grid
    }

    /// Path `index` is a pure function of `(model, grid, seed, index)`.
    pub fn path(&self, index: u64) -> ScenarioPath {
        let d = self.model.dim();
        let mut rng = stream(self.seed, 2 * index);
        let spans = self.model.spans();
        let terminals: Vec<Vector> = spans
            .iter()
            .map(|(a, b)| {
                let sd = (b - a).sqrt();
                Vector::from_fn(d, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sd * z
                })
            })
            .collect();
        let mut dw = vec![Vector::zeros(d)];
        for (seg, &(first, last)) in self.grid.segment_points.iter().enumerate() {
            let end = self.grid.points[last];
            let target = &terminals[seg];
            let mut w = Vector::zeros(d);
            for k in first + 1..=last {
                let (s, t) = (self.grid.points[k - 1], self.grid.points[k]);
                let next = if k == last {
                    target.clone()
                } else {
                    let frac = (t - s) / (end - s);
                    let sd = ((t - s) * (end - t) / (end - s)).sqrt();
                    &w + (target - &w) * frac
                        + Vector::from_fn(d, |_, _| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            sd * z
                        })
                };
                dw.push(&next - &w);
                w = next;
            }
        }

        let mut rng = stream(self.seed, 2 * index + 1);
        let mut jumps = Vec::new();
        for (seg, (a, b)) in spans.iter().enumerate() {
            let sj = &self.jumps[seg];
            let Some(chooser) = &sj.chooser else { continue };
            let mut t = *a;
            loop {
                let e: f64 = Exp1.sample(&mut rng);
                t += e / sj.rate;
                if t >= *b {
                    break;
                }
                let atom = sj.atoms[chooser.sample(&mut rng)];
                jumps.push(JumpEvent {
                    time: t,
                    step: self.grid.locate(seg, t),
                    atom,
                });
            }
        }
        ScenarioPath { index, dw, jumps }
    }
}

/// Folds paths `0..n_paths` in fixed chunks and merges chunk results in
/// chunk order, so the outcome does not depend on the number of workers.
pub fn reduce_paths<A, I, F, M>(n_paths: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) + Sync,
    M: Fn(&mut A, A),
{
    let chunks = n_paths.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                fold(&mut acc, i as u64);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}
