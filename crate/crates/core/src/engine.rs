//! Batched evaluation of network predictions and gradients over a point set.
//!
//! Two interchangeable engines compute the same quantities:
//!
//! * [`Engine::Dense`] loops over every (point, unit) pair, `O(n·m·d)`.
//! * [`Engine::Line`] applies when all inputs lie on an affine line
//!   `x_k = o + s_k·u` (one-dimensional data, with or without bias
//!   augmentation). Each unit is then active on a prefix or suffix of the
//!   points sorted by `s`, so predictions and gradients reduce to running
//!   sums, `O(n log n + m·(d + log n))`.
//!
//! The line engine evaluates `w_jᵀx_k` as `w_jᵀo + s_k·w_jᵀu`, which differs
//! from the dense dot product only by rounding; within one engine the
//! activation predicate is evaluated identically everywhere, so gradients,
//! predictions and frozen predictions are mutually consistent.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Points `x_k` as rows, optionally with a line parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Matrix,
    line: Option<LineCoords>,
}

/// `x_k = origin + coords[k] · direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCoords {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub coords: Vec<f64>,
}

impl PointSet {
    pub fn new(points: Matrix) -> Self {
        PointSet { points, line: None }
    }

    /// Builds points from line coordinates.
    pub fn on_line(origin: Vec<f64>, direction: Vec<f64>, coords: Vec<f64>) -> Result<Self> {
        if origin.len() != direction.len() {
            return Err(Error::DimensionMismatch {
                expected: origin.len(),
                got: direction.len(),
            });
        }
        let d = origin.len();
        let mut data = Vec::with_capacity(coords.len() * d);
        for &s in &coords {
            data.extend(origin.iter().zip(&direction).map(|(o, u)| o + s * u));
        }
        Ok(PointSet {
            points: Matrix::from_vec(coords.len(), d, data)?,
            line: Some(LineCoords {
                origin,
                direction,
                coords,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        self.points.row(k)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn line(&self) -> Option<&LineCoords> {
        self.line.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |k| self.points.row(k))
    }

    /// Keeps the points at `idx` (in that order).
    pub fn select(&self, idx: &[usize]) -> PointSet {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &k in idx {
            data.extend_from_slice(self.points.row(k));
        }
        PointSet {
            points: Matrix::from_vec(idx.len(), d, data).expect("consistent shape"),
            line: self.line.as_ref().map(|l| LineCoords {
                origin: l.origin.clone(),
                direction: l.direction.clone(),
                coords: idx.iter().map(|&k| l.coords[k]).collect(),
            }),
        }
    }
}

/// Output scale and fixed signs of a network.
#[derive(Debug, Clone, Copy)]
pub struct Head<'a> {
    pub scale: f64,
    pub signs: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineKind {
    #[default]
    Auto,
    Dense,
}

#[derive(Debug, Clone)]
pub enum Engine<'a> {
    Dense(&'a PointSet),
    Line(LineEngine),
}

impl<'a> Engine<'a> {
    pub fn new(points: &'a PointSet, kind: EngineKind) -> Self {
        match (kind, points.line()) {
            (EngineKind::Auto, Some(line)) => Engine::Line(LineEngine::new(line)),
            _ => Engine::Dense(points),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Engine::Dense(p) => p.len(),
            Engine::Line(l) => l.sorted.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Dense(_) => "dense",
            Engine::Line(_) => "line",
        }
    }

    /// `out[k] = (scale) Σ_j a_j 1[mask_jᵀx_k ≥ 0] values_jᵀx_k`.
    ///
    /// With `mask == values` this is the network output itself.
    pub fn predict(&self, head: Head<'_>, mask: &Matrix, values: &Matrix, out: &mut [f64]) {
        match self {
            Engine::Dense(p) => dense_predict(p, head, mask, values, out),
            Engine::Line(l) => l.predict(head, mask, values, out),
        }
    }

    /// `grad = Σ_k coefs[k] ∇f(x_k; mask)`.
    pub fn gradient(&self, head: Head<'_>, mask: &Matrix, coefs: &[f64], grad: &mut Matrix) {
        match self {
            Engine::Dense(p) => dense_gradient(p, head, mask, coefs, grad),
            Engine::Line(l) => l.gradient(head, mask, coefs, grad),
        }
    }
}

fn dense_predict(p: &PointSet, head: Head<'_>, mask: &Matrix, values: &Matrix, out: &mut [f64]) {
    let same = std::ptr::eq(mask, values);
    for (k, o) in out.iter_mut().enumerate() {
        let x = p.point(k);
        let mut acc = 0.0;
        for (j, a) in head.signs.iter().enumerate() {
            let z = dot(mask.row(j), x);
            if z >= 0.0 {
                acc += a * if same { z } else { dot(values.row(j), x) };
            }
        }
        *o = head.scale * acc;
    }
}

fn dense_gradient(p: &PointSet, head: Head<'_>, mask: &Matrix, coefs: &[f64], grad: &mut Matrix) {
    grad.fill(0.0);
    for (k, &c) in coefs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let x = p.point(k);
        for (j, a) in head.signs.iter().enumerate() {
            if dot(mask.row(j), x) >= 0.0 {
                let cj = c * a * head.scale;
                for (g, xi) in grad.row_mut(j).iter_mut().zip(x) {
                    *g += cj * xi;
                }
            }
        }
    }
}

/// Prefix/suffix-sum engine for collinear inputs.
#[derive(Debug, Clone)]
pub struct LineEngine {
    origin: Vec<f64>,
    direction: Vec<f64>,
    /// coordinates in ascending order
    sorted: Vec<f64>,
    /// `order[r]` is the original index of the `r`-th smallest coordinate
    order: Vec<usize>,
}

/// Active points of one unit, in sorted order.
enum Active {
    None,
    All,
    Prefix(usize),
    Suffix(usize),
}

impl LineEngine {
    pub fn new(line: &LineCoords) -> Self {
        let mut order: Vec<usize> = (0..line.coords.len()).collect();
        order.sort_by(|&a, &b| line.coords[a].total_cmp(&line.coords[b]));
        LineEngine {
            origin: line.origin.clone(),
            direction: line.direction.clone(),
            sorted: order.iter().map(|&k| line.coords[k]).collect(),
            order,
        }
    }

    fn active(&self, w: &[f64]) -> Active {
        let alpha = dot(w, &self.origin);
        let beta = dot(w, &self.direction);
        if beta > 0.0 {
            let p = self.sorted.partition_point(|&s| alpha + s * beta < 0.0);
            if p == 0 {
                Active::All
            } else {
                Active::Suffix(p)
            }
        } else if beta < 0.0 {
            let q = self.sorted.partition_point(|&s| alpha + s * beta >= 0.0);
            if q == self.sorted.len() {
                Active::All
            } else {
                Active::Prefix(q)
            }
        } else if alpha >= 0.0 {
            Active::All
        } else {
            Active::None
        }
    }

    fn predict(&self, head: Head<'_>, mask: &Matrix, values: &Matrix, out: &mut [f64]) {
        let n = self.sorted.len();
        // suffix-type contributions start at index p; prefix-type end before q
        let mut suf = vec![(0.0, 0.0); n + 1];
        let mut pre = vec![(0.0, 0.0); n + 1];
        let mut all = (0.0, 0.0);
        for (j, a) in head.signs.iter().enumerate() {
            let act = self.active(mask.row(j));
            if matches!(act, Active::None) {
                continue;
            }
            let v = values.row(j);
            let g = a * dot(v, &self.origin);
            let d = a * dot(v, &self.direction);
            let slot = match act {
                Active::All => &mut all,
                Active::Suffix(p) => &mut suf[p],
                Active::Prefix(q) => &mut pre[q],
                Active::None => unreachable!(),
            };
            slot.0 += g;
            slot.1 += d;
        }
        let mut fwd = vec![(0.0, 0.0); n];
        let mut run = (0.0, 0.0);
        for r in 0..n {
            run.0 += suf[r].0;
            run.1 += suf[r].1;
            fwd[r] = run;
        }
        let mut run = (0.0, 0.0);
        for r in (0..n).rev() {
            run.0 += pre[r + 1].0;
            run.1 += pre[r + 1].1;
            let s = self.sorted[r];
            let g = all.0 + fwd[r].0 + run.0;
            let d = all.1 + fwd[r].1 + run.1;
            out[self.order[r]] = head.scale * (g + s * d);
        }
    }

    fn gradient(&self, head: Head<'_>, mask: &Matrix, coefs: &[f64], grad: &mut Matrix) {
        let n = self.sorted.len();
        // pre[q] = Σ_{r<q}, suf[p] = Σ_{r≥p} of (c, c·s)
        let mut pre = vec![(0.0, 0.0); n + 1];
        for r in 0..n {
            let c = coefs[self.order[r]];
            pre[r + 1] = (pre[r].0 + c, pre[r].1 + c * self.sorted[r]);
        }
        let mut suf = vec![(0.0, 0.0); n + 1];
        for r in (0..n).rev() {
            let c = coefs[self.order[r]];
            suf[r] = (suf[r + 1].0 + c, suf[r + 1].1 + c * self.sorted[r]);
        }
        for (j, a) in head.signs.iter().enumerate() {
            let (s0, s1) = match self.active(mask.row(j)) {
                Active::None => (0.0, 0.0),
                Active::All => pre[n],
                Active::Prefix(q) => pre[q],
                Active::Suffix(p) => suf[p],
            };
            let c = head.scale * a;
            for ((g, o), u) in grad.row_mut(j).iter_mut().zip(&self.origin).zip(&self.direction) {
                *g = c * (s0 * o + s1 * u);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use rand::Rng;

    fn line_points(n: usize, seed: u64) -> PointSet {
        let mut rng = crate::seed::rng(seed);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let coords: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PointSet::on_line(vec![0.0, s], vec![s, 0.0], coords).unwrap()
    }

    #[test]
    fn line_engine_matches_dense() {
        let pts = line_points(300, 4);
        let net = Network::init(120, 2, 0.9, 8).unwrap();
        let other = Network::init(120, 2, 0.9, 9).unwrap();
        let head = Head {
            scale: net.scale(),
            signs: net.signs(),
        };
        let dense = Engine::new(&pts, EngineKind::Dense);
        let line = Engine::new(&pts, EngineKind::Auto);
        assert_eq!(line.name(), "line");
        for values in [net.weights(), other.weights()] {
            let mut a = vec![0.0; 300];
            let mut b = vec![0.0; 300];
            dense.predict(head, net.weights(), values, &mut a);
            line.predict(head, net.weights(), values, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
        let coefs: Vec<f64> = (0..300).map(|k| ((k * 37) % 11) as f64 / 11.0 - 0.5).collect();
        let mut ga = Matrix::zeros(120, 2);
        let mut gb = Matrix::zeros(120, 2);
        dense.gradient(head, net.weights(), &coefs, &mut ga);
        line.gradient(head, net.weights(), &coefs, &mut gb);
        assert!(ga.dist(&gb) < 1e-11);
    }

    #[test]
    fn degenerate_units() {
        // β = 0 rows are all-or-nothing, and unit directions cover all/none
        let pts = PointSet::on_line(vec![0.0, 1.0], vec![1.0, 0.0], vec![-0.5, 0.1, 0.7]).unwrap();
        let w = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -1.0], vec![5.0, 10.0], vec![-5.0, 10.0]])
            .unwrap();
        let signs = [1.0, 1.0, 1.0, -1.0];
        let head = Head { scale: 0.5, signs: &signs };
        let mut a = vec![0.0; 3];
        let mut b = vec![0.0; 3];
        Engine::new(&pts, EngineKind::Dense).predict(head, &w, &w, &mut a);
        Engine::new(&pts, EngineKind::Auto).predict(head, &w, &w, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn select_keeps_line() {
        let pts = line_points(10, 1);
        let sub = pts.select(&[3, 1]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.point(0), pts.point(3));
        assert_eq!(sub.line().unwrap().coords[1], pts.line().unwrap().coords[1]);
    }
}
