use std::cell::RefCell;

use log::warn;

use crate::error::{Error, Result};

/// Projects `y` onto `{lo <= x <= hi, sum x <= cap}` in place and returns the
/// shift applied to the free coordinates (zero when the budget is slack).
pub fn project_capped_sum(y: &mut [f64], lo: f64, hi: f64, cap: f64) -> Result<f64> {
    let n = y.len();
    if n == 0 {
        return Ok(0.0);
    }
    if lo * n as f64 > cap + 1e-15 {
        return Err(Error::Model(format!(
            "budget {cap} is below the lower bound total {}",
            lo * n as f64
        )));
    }
    let clipped: f64 = y.iter().map(|&v| v.clamp(lo, hi)).sum();
    if clipped <= cap {
        y.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        return Ok(0.0);
    }
    // Sweep the breakpoints of the piecewise-linear map tau -> sum clamp(y - tau).
    let mut events: Vec<(f64, i8)> = Vec::with_capacity(2 * n);
    let mut free = 0i64;
    for &v in y.iter() {
        if v >= hi {
            events.push((v - hi, 1));
        } else if v > lo {
            free += 1;
        }
        if v > lo {
            events.push((v - lo, -1));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut tau = 0.0;
    let mut s = clipped;
    let mut solved = None;
    for &(t, kind) in &events {
        let next = s - free as f64 * (t - tau);
        if next <= cap && free > 0 {
            solved = Some(tau + (s - cap) / free as f64);
            break;
        }
        s = next;
        tau = t;
        free += kind as i64;
    }
    let tau = match solved {
        Some(t) => t,
        None if free > 0 => tau + (s - cap) / free as f64,
        None => tau,
    };
    y.iter_mut().for_each(|v| *v = (*v - tau).clamp(lo, hi));
    Ok(tau)
}

/// Least-squares non-increasing fit (pool adjacent violators), in place.
/// Returns the pooled block lengths.
pub fn pav_nonincreasing(z: &mut [f64]) -> Vec<usize> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(z.len());
    for &v in z.iter() {
        let mut sum = v;
        let mut count = 1usize;
        while let Some(&(bs, bc)) = blocks.last() {
            if bs / (bc as f64) < sum / count as f64 {
                sum += bs;
                count += bc;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push((sum, count));
    }
    let mut i = 0;
    let mut lens = Vec::with_capacity(blocks.len());
    for (s, c) in blocks {
        let m = s / c as f64;
        for v in &mut z[i..i + c] {
            *v = m;
        }
        i += c;
        lens.push(c);
    }
    lens
}

/// Linear constraint `sum a_k x_k <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, a)| a * x[k]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.lhs(x) - self.rhs).max(0.0)
    }
}

/// A contiguous block of coordinates with its own exact projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Block {
    /// `sum x <= cap`.
    Budget { off: usize, len: usize, cap: f64 },
    /// MCD class: `x_0 >= x_1 + gap >= ... >= x_{len-2} + (len-2) gap` and
    /// `2 x_0 + x_1 + ... + x_{len-1} <= rhs`. The upper bound is implied.
    Mcd {
        off: usize,
        len: usize,
        rhs: f64,
        gap: f64,
    },
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        match *self {
            Block::Budget { off, len, .. } | Block::Mcd { off, len, .. } => off..off + len,
        }
    }
}

/// Local derivative of a block projection: pools of coordinates that move
/// together and, when the block's normal constraint is tight, its coefficients.
struct Face {
    pools: Vec<Vec<usize>>,
    normal: Option<Vec<(usize, f64)>>,
}

fn mcd_normal(l: usize) -> f64 {
    if l == 0 {
        2.0
    } else {
        1.0
    }
}

/// MCD class projection for a fixed multiplier `sigma` on the normal
/// constraint. Returns local pools of free coordinates.
fn mcd_inner(y: &[f64], sigma: f64, lo: f64, gap: f64, out: &mut [f64]) -> Vec<Vec<usize>> {
    let len = y.len();
    let chain = len - 1;
    let floor = lo + chain.saturating_sub(1) as f64 * gap;
    for l in 0..chain {
        out[l] = y[l] - sigma * mcd_normal(l) + l as f64 * gap;
    }
    let lens = pav_nonincreasing(&mut out[..chain]);
    let mut pools = Vec::new();
    let mut start = 0;
    for c in lens {
        if out[start] > floor {
            pools.push((start..start + c).collect());
        }
        start += c;
    }
    for l in 0..chain {
        out[l] = out[l].max(floor) - l as f64 * gap;
    }
    let last = y[len - 1] - sigma;
    out[len - 1] = last.max(lo);
    if last > lo {
        pools.push(vec![len - 1]);
    }
    pools
}

fn mcd_dot(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(l, v)| mcd_normal(l) * v).sum()
}

fn project_mcd(
    y: &[f64],
    lo: f64,
    rhs: f64,
    gap: f64,
    out: &mut [f64],
) -> Result<(bool, Vec<Vec<usize>>)> {
    let pools = mcd_inner(y, 0.0, lo, gap, out);
    if mcd_dot(out) <= rhs {
        return Ok((false, pools));
    }
    let mut hi = 1.0;
    loop {
        mcd_inner(y, hi, lo, gap, out);
        if mcd_dot(out) <= rhs {
            break;
        }
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Model(
                "MCD block is infeasible at its lower bound".into(),
            ));
        }
    }
    let mut a = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + hi);
        if m <= a || m >= hi {
            break;
        }
        mcd_inner(y, m, lo, gap, out);
        if mcd_dot(out) > rhs {
            a = m;
        } else {
            hi = m;
        }
    }
    // exact root on the final linear piece
    let pools = mcd_inner(y, a, lo, gap, out);
    let excess = mcd_dot(out) - rhs;
    let slope: f64 = pools
        .iter()
        .map(|p| {
            let s: f64 = p.iter().map(|&l| mcd_normal(l)).sum();
            s * s / p.len() as f64
        })
        .sum();
    let sigma = if slope > 0.0 {
        (a + excess / slope).clamp(a, hi)
    } else {
        hi
    };
    let pools = mcd_inner(y, sigma, lo, gap, out);
    if mcd_dot(out) > rhs + 1e-15 {
        let pools = mcd_inner(y, hi, lo, gap, out);
        return Ok((true, pools));
    }
    Ok((true, pools))
}

/// Intersection of a box, independent per-block sets and scattered budget
/// groups (node capacities).
///
/// Blocks are projected exactly. Group constraints enter through their
/// multipliers, found by a projected Newton method on the dual, with
/// Dykstra's alternating scheme as the fallback.
#[derive(Debug, Clone)]
pub struct Polytope {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    blocks: Vec<Block>,
    groups: Vec<(Vec<usize>, f64)>,
    warm: RefCell<Vec<f64>>,
}

impl Polytope {
    pub fn boxed(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            dim,
            lo,
            hi,
            blocks: Vec::new(),
            groups: Vec::new(),
            warm: RefCell::new(Vec::new()),
        }
    }

    pub fn add_budget(&mut self, off: usize, len: usize, cap: f64) {
        self.blocks.push(Block::Budget { off, len, cap });
    }

    pub fn add_mcd(&mut self, off: usize, len: usize, rhs: f64, gap: f64) {
        if len < 2 {
            self.add_budget(off, len, rhs);
        } else {
            self.blocks.push(Block::Mcd { off, len, rhs, gap });
        }
    }

    pub fn add_group(&mut self, idx: Vec<usize>, cap: f64) {
        self.groups.push((idx, cap));
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn groups(&self) -> &[(Vec<usize>, f64)] {
        &self.groups
    }

    /// Projects onto the box and the blocks, ignoring groups.
    fn project_blocks(
        &self,
        y: &[f64],
        x: &mut [f64],
        faces: Option<&mut Vec<Face>>,
    ) -> Result<()> {
        let want = faces.is_some();
        let mut covered = vec![false; self.dim];
        let mut local = Vec::new();
        let mut collected = Vec::new();
        for b in &self.blocks {
            let r = b.range();
            covered[r.clone()].iter_mut().for_each(|c| *c = true);
            match *b {
                Block::Budget { cap, .. } => {
                    x[r.clone()].copy_from_slice(&y[r.clone()]);
                    let tau = project_capped_sum(&mut x[r.clone()], self.lo, self.hi, cap)?;
                    if want {
                        let pools: Vec<Vec<usize>> = r
                            .clone()
                            .filter(|&k| y[k] - tau > self.lo && y[k] - tau < self.hi)
                            .map(|k| vec![k])
                            .collect();
                        let normal = (tau > 0.0).then(|| r.clone().map(|k| (k, 1.0)).collect());
                        collected.push(Face { pools, normal });
                    }
                }
                Block::Mcd { off, len, rhs, gap } => {
                    local.resize(len, 0.0);
                    let (active, pools) =
                        project_mcd(&y[r.clone()], self.lo, rhs, gap, &mut local)?;
                    x[r.clone()].copy_from_slice(&local);
                    if want {
                        let pools = pools
                            .into_iter()
                            .map(|p| p.into_iter().map(|l| off + l).collect())
                            .collect();
                        let normal =
                            active.then(|| (0..len).map(|l| (off + l, mcd_normal(l))).collect());
                        collected.push(Face { pools, normal });
                    }
                }
            }
        }
        let mut loose = Vec::new();
        for k in 0..self.dim {
            if !covered[k] {
                x[k] = y[k].clamp(self.lo, self.hi);
                if y[k] > self.lo && y[k] < self.hi {
                    loose.push(vec![k]);
                }
            }
        }
        if let Some(f) = faces {
            collected.push(Face {
                pools: loose,
                normal: None,
            });
            *f = collected;
        }
        Ok(())
    }

    /// Euclidean projection of `y` onto the polytope.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        if self.groups.is_empty() {
            self.project_blocks(y, &mut x, None)?;
            return Ok(x);
        }
        match self.project_newton(y)? {
            Some(x) => Ok(x),
            None => {
                warn!("dual Newton projection stalled; falling back to Dykstra");
                self.project_dykstra(y)
            }
        }
    }

    fn group_excess(&self, x: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|(idx, cap)| idx.iter().map(|&k| x[k]).sum::<f64>() - cap)
            .collect()
    }

    fn project_newton(&self, y: &[f64]) -> Result<Option<Vec<f64>>> {
        let ng = self.groups.len();
        let mut group_of = vec![usize::MAX; self.dim];
        for (j, (idx, _)) in self.groups.iter().enumerate() {
            for &k in idx {
                group_of[k] = j;
            }
        }
        let scale = self.groups.iter().map(|(_, c)| c.abs()).fold(1.0, f64::max);
        let tol = 1e-15 * scale;
        let loose = 1e-11 * scale;
        let reach =
            2.0 * (y.iter().fold(0.0f64, |m, v| m.max(v.abs())) + self.lo.abs() + self.hi.abs());
        let mut nu = {
            let w = self.warm.borrow();
            if w.len() == ng {
                w.clone()
            } else {
                vec![0.0; ng]
            }
        };
        let mut shifted = vec![0.0; self.dim];
        let mut x = vec![0.0; self.dim];
        let mut eval =
            |nu: &[f64], x: &mut Vec<f64>, faces: &mut Vec<Face>| -> Result<(Vec<f64>, f64)> {
                for k in 0..self.dim {
                    let j = group_of[k];
                    shifted[k] = if j == usize::MAX { y[k] } else { y[k] - nu[j] };
                }
                self.project_blocks(&shifted, x, Some(faces))?;
                let r = self.group_excess(x);
                let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                let q = 0.5 * dist + nu.iter().zip(&r).map(|(n, r)| n * r).sum::<f64>();
                Ok((r, q))
            };
        let mut faces = Vec::new();
        let (mut r, mut q) = eval(&nu, &mut x, &mut faces)?;
        for _ in 0..100 {
            let optimal = (0..ng).all(|j| r[j] <= tol && (nu[j] == 0.0 || r[j].abs() <= tol));
            if optimal {
                *self.warm.borrow_mut() = nu;
                return Ok(Some(x));
            }
            let work: Vec<usize> = (0..ng).filter(|&j| nu[j] > 0.0 || r[j] > 0.0).collect();
            let h = dual_hessian(&faces, &group_of, ng);
            let m = work.len();
            let diag = work.iter().map(|&j| h[j][j]).fold(0.0, f64::max).max(1e-12);
            let mut a = vec![vec![0.0; m]; m];
            let mut b = vec![0.0; m];
            for (p, &i) in work.iter().enumerate() {
                for (s, &j) in work.iter().enumerate() {
                    a[p][s] = h[i][j];
                }
                a[p][p] += 1e-12 * diag;
                b[p] = r[i];
            }
            let mut d = solve_dense(a, b);
            let longest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if longest > reach {
                d.iter_mut().for_each(|v| *v *= reach / longest);
            }
            let mut t = 1.0;
            let mut accepted = false;
            let mut trial_x = vec![0.0; self.dim];
            for _ in 0..100 {
                let mut trial = nu.clone();
                for (p, &j) in work.iter().enumerate() {
                    trial[j] = (nu[j] + t * d[p]).max(0.0);
                }
                let mut tf = Vec::new();
                let (tr, tq) = eval(&trial, &mut trial_x, &mut tf)?;
                let gain: f64 = (0..ng).map(|j| r[j] * (trial[j] - nu[j])).sum();
                if tq >= q + 1e-4 * gain - 1e-15 * q.abs().max(1.0) {
                    nu = trial;
                    r = tr;
                    q = tq;
                    faces = tf;
                    std::mem::swap(&mut x, &mut trial_x);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let worst = (0..ng)
            .map(|j| {
                if nu[j] > 0.0 {
                    r[j].abs()
                } else {
                    r[j].max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if worst <= loose {
            *self.warm.borrow_mut() = nu;
            return Ok(Some(x));
        }
        self.warm.borrow_mut().clear();
        Ok(None)
    }

    fn project_dykstra(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = y.to_vec();
        let mut inc_a = vec![0.0; self.dim];
        let mut inc_b = vec![0.0; self.dim];
        let mut z = vec![0.0; self.dim];
        let mut p = vec![0.0; self.dim];
        let mut buf = Vec::new();
        for _ in 0..100_000 {
            let mut change = 0.0f64;
            for k in 0..self.dim {
                z[k] = x[k] + inc_a[k];
            }
            self.project_blocks(&z, &mut p, None)?;
            for k in 0..self.dim {
                inc_a[k] = z[k] - p[k];
                change = change.max((p[k] - x[k]).abs());
                x[k] = p[k];
            }
            for k in 0..self.dim {
                z[k] = x[k] + inc_b[k];
            }
            p.copy_from_slice(&z);
            for v in p.iter_mut() {
                *v = v.clamp(self.lo, self.hi);
            }
            for (idx, cap) in &self.groups {
                buf.clear();
                buf.extend(idx.iter().map(|&k| z[k]));
                project_capped_sum(&mut buf, self.lo, self.hi, *cap)?;
                for (&k, &v) in idx.iter().zip(buf.iter()) {
                    p[k] = v;
                }
            }
            for k in 0..self.dim {
                inc_b[k] = z[k] - p[k];
                change = change.max((p[k] - x[k]).abs());
                x[k] = p[k];
            }
            if change <= 1e-16 {
                break;
            }
        }
        Ok(x)
    }

    /// Every linear constraint of the polytope except the box.
    pub fn constraints(&self) -> Vec<LinearConstraint> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match *b {
                Block::Budget { off, len, cap } => {
                    out.push(LinearConstraint {
                        coeffs: (off..off + len).map(|k| (k, 1.0)).collect(),
                        rhs: cap,
                    });
                }
                Block::Mcd { off, len, rhs, gap } => {
                    for l in 1..len - 1 {
                        out.push(LinearConstraint {
                            coeffs: vec![(off + l, 1.0), (off + l - 1, -1.0)],
                            rhs: -gap,
                        });
                    }
                    out.push(LinearConstraint {
                        coeffs: (0..len).map(|l| (off + l, mcd_normal(l))).collect(),
                        rhs,
                    });
                }
            }
        }
        for (idx, cap) in &self.groups {
            out.push(LinearConstraint {
                coeffs: idx.iter().map(|&k| (k, 1.0)).collect(),
                rhs: *cap,
            });
        }
        out
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let boxed = x
            .iter()
            .map(|&v| (self.lo - v).max(v - self.hi).max(0.0))
            .fold(0.0, f64::max);
        self.constraints()
            .iter()
            .map(|c| c.violation(x))
            .fold(boxed, f64::max)
    }
}

/// `A D A^T`, where `D` is the derivative of the block projection and `A`
/// sums coordinates into groups.
fn dual_hessian(faces: &[Face], group_of: &[usize], ng: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![0.0; ng]; ng];
    let mut s = vec![0.0; ng];
    let mut u = vec![0.0; ng];
    for face in faces {
        u.iter_mut().for_each(|v| *v = 0.0);
        let mut uu = 0.0;
        let coef = |k: usize| -> f64 {
            face.normal
                .as_ref()
                .and_then(|n| n.iter().find(|&&(i, _)| i == k).map(|&(_, a)| a))
                .unwrap_or(0.0)
        };
        for pool in &face.pools {
            s.iter_mut().for_each(|v| *v = 0.0);
            let mut any = false;
            for &k in pool {
                if group_of[k] != usize::MAX {
                    s[group_of[k]] += 1.0;
                    any = true;
                }
            }
            let n = pool.len() as f64;
            if any {
                for i in 0..ng {
                    if s[i] != 0.0 {
                        for j in 0..ng {
                            h[i][j] += s[i] * s[j] / n;
                        }
                    }
                }
            }
            if face.normal.is_some() {
                let abar = pool.iter().map(|&k| coef(k)).sum::<f64>() / n;
                uu += n * abar * abar;
                for i in 0..ng {
                    u[i] += abar * s[i];
                }
            }
        }
        if face.normal.is_some() && uu > 0.0 {
            for i in 0..ng {
                if u[i] != 0.0 {
                    for j in 0..ng {
                        h[i][j] -= u[i] * u[j] / uu;
                    }
                }
            }
        }
    }
    h
}

/// Gaussian elimination with partial pivoting; singular pivots yield zeros.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = if a[row][row].abs() < 1e-300 {
            0.0
        } else {
            (b[row] - s) / a[row][row]
        };
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bisect_capped(y: &[f64], lo: f64, hi: f64, cap: f64) -> Vec<f64> {
        let f = |t: f64| y.iter().map(|&v| (v - t).clamp(lo, hi)).sum::<f64>();
        if f(0.0) <= cap {
            return y.iter().map(|&v| v.clamp(lo, hi)).collect();
        }
        let (mut a, mut b) = (0.0, y.iter().fold(0.0f64, |m, &v| m.max(v - lo)) + 1.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > cap {
                a = m;
            } else {
                b = m;
            }
        }
        y.iter().map(|&v| (v - b).clamp(lo, hi)).collect()
    }

    #[test]
    fn capped_sum_simple() {
        let mut y = vec![0.75, 0.5];
        project_capped_sum(&mut y, 0.0, 1.0, 1.0).unwrap();
        assert!((y[0] - 0.625).abs() < 1e-15 && (y[1] - 0.375).abs() < 1e-15);
        let mut y = vec![2.0, -1.0, 0.1];
        project_capped_sum(&mut y, 0.0, 1.0, 5.0).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 0.1]);
    }

    #[test]
    fn capped_sum_infeasible() {
        let mut y = vec![0.5; 3];
        assert!(project_capped_sum(&mut y, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn pav_examples() {
        let mut z = vec![1.0, 3.0, 2.0, 0.0];
        assert_eq!(pav_nonincreasing(&mut z), vec![2, 1, 1]);
        assert_eq!(z, vec![2.0, 2.0, 2.0, 0.0]);
        let mut z = vec![3.0, 2.0, 1.0];
        pav_nonincreasing(&mut z);
        assert_eq!(z, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn two_budget_families() {
        // rows sum to at most 1, columns to at most 0.8
        let mut p = Polytope::boxed(4, 0.0, 1.0);
        p.add_budget(0, 2, 1.0);
        p.add_budget(2, 2, 1.0);
        p.add_group(vec![0, 2], 0.8);
        p.add_group(vec![1, 3], 0.8);
        let x = p.project(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        for v in &x {
            assert!((v - 0.4).abs() < 1e-12, "{x:?}");
        }
        let y = [1.0, 0.5, 0.0, 0.0];
        let x = p.project(&y).unwrap();
        let d = p.project_dykstra(&y).unwrap();
        assert!(
            (x[0] - 0.75).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12,
            "{x:?}"
        );
        assert!((d[0] - 0.75).abs() < 1e-9, "{d:?}");
    }

    fn mcd_polytope() -> Polytope {
        let mut p = Polytope::boxed(8, 0.0, 1.0);
        p.add_mcd(0, 4, 1.0 - 1e-9, 1e-9);
        p.add_mcd(4, 4, 1.0 - 1e-9, 1e-9);
        p.add_group(vec![0, 4], 0.3);
        p.add_group(vec![1, 5], 0.5);
        p.add_group(vec![2, 6], 0.2);
        p.add_group(vec![3, 7], 0.9);
        p
    }

    proptest! {
        #[test]
        fn capped_sum_matches_bisection(y in prop::collection::vec(-1.0f64..2.0, 1..12), cap in 0.1f64..4.0) {
            let mut x = y.clone();
            project_capped_sum(&mut x, 0.0, 1.0, cap).unwrap();
            let o = bisect_capped(&y, 0.0, 1.0, cap);
            for (a, b) in x.iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn newton_projection_matches_dykstra(y in prop::collection::vec(-0.5f64..1.5, 8)) {
            let p = mcd_polytope();
            let x = p.project(&y).unwrap();
            prop_assert!(p.max_violation(&x) < 1e-12, "{:?} {}", x, p.max_violation(&x));
            let d = p.project_dykstra(&y).unwrap();
            for (a, b) in x.iter().zip(&d) {
                prop_assert!((a - b).abs() < 1e-7, "{:?} vs {:?}", x, d);
            }
            let x2 = p.project(&x).unwrap();
            for (a, b) in x.iter().zip(&x2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_satisfies_variational_inequality(
            y in prop::collection::vec(-0.5f64..1.5, 8),
            probe in prop::collection::vec(0.0f64..0.2, 8),
        ) {
            let p = mcd_polytope();
            let x = p.project(&y).unwrap();
            let z = p.project(&probe).unwrap();
            let vi: f64 = (0..8).map(|k| (y[k] - x[k]) * (z[k] - x[k])).sum();
            prop_assert!(vi <= 1e-9);
        }
    }
}
