//! Oracles shared by the integration tests.
#![allow(dead_code)]

use attngeom::attention::TransformerParams;
use attngeom::numkit::{Matrix, Rng};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub type Q = BigRational;

fn q(v: i64) -> Q {
    BigRational::from_integer(BigInt::from(v))
}

/// Hyperplanes `a_i · x = b_i` with integer coefficients.
#[derive(Debug, Clone)]
pub struct Arrangement {
    pub d: usize,
    pub normals: Vec<Vec<i64>>,
    pub offsets: Vec<i64>,
}

fn rank(mut rows: Vec<Vec<Q>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = &rows[i][c] / &rows[r][c];
                for k in c..cols {
                    let v = &f * &rows[r][k];
                    rows[i][k] -= v;
                }
            }
        }
        r += 1;
    }
    r
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

impl Arrangement {
    pub fn n(&self) -> usize {
        self.normals.len()
    }

    /// General position: every `k ≤ d` normals are independent and no
    /// `d + 1` hyperplanes share a point.
    pub fn is_generic(&self) -> bool {
        let n = self.n();
        for k in 1..=n.min(self.d) {
            for s in subsets(n, k) {
                let rows = s.iter().map(|&i| self.normals[i].iter().map(|&v| q(v)).collect()).collect();
                if rank(rows) != k {
                    return false;
                }
            }
        }
        if n > self.d {
            for s in subsets(n, self.d + 1) {
                let rows = s
                    .iter()
                    .map(|&i| {
                        let mut r: Vec<Q> = self.normals[i].iter().map(|&v| q(v)).collect();
                        r.push(q(self.offsets[i]));
                        r
                    })
                    .collect();
                if rank(rows) != self.d + 1 {
                    return false;
                }
            }
        }
        true
    }

    pub fn random_generic(rng: &mut Rng, n: usize, d: usize) -> Self {
        loop {
            let mut coef = || (rng.next_u64() % 19) as i64 - 9;
            let normals: Vec<Vec<i64>> = (0..n).map(|_| (0..d).map(|_| coef()).collect()).collect();
            let offsets: Vec<i64> = (0..n).map(|_| coef()).collect();
            let a = Arrangement { d, normals, offsets };
            if a.is_generic() {
                return a;
            }
        }
    }

    /// Number of sign vectors whose open cell is nonempty.
    pub fn count_regions(&self) -> usize {
        let n = self.n();
        (0u32..1 << n)
            .filter(|mask| {
                let system: Vec<(Vec<Q>, Q)> = (0..n)
                    .map(|i| {
                        let s = if mask >> i & 1 == 1 { 1 } else { -1 };
                        (
                            self.normals[i].iter().map(|&v| q(s * v)).collect(),
                            q(s * self.offsets[i]),
                        )
                    })
                    .collect();
                strictly_feasible(system, self.d)
            })
            .count()
    }
}

/// Whether `{x : c_i · x > e_i for all i}` is nonempty, by Fourier–Motzkin
/// elimination (exact for systems of strict inequalities).
pub fn strictly_feasible(mut system: Vec<(Vec<Q>, Q)>, d: usize) -> bool {
    for k in 0..d {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for row in system {
            if row.0[k].is_positive() {
                pos.push(row);
            } else if row.0[k].is_negative() {
                neg.push(row);
            } else {
                rest.push(row);
            }
        }
        for (cp, ep) in &pos {
            for (cn, en) in &neg {
                // scale so the x_k coefficients cancel: |cn_k|·p + cp_k·n
                let (wp, wn) = (-cn[k].clone(), cp[k].clone());
                let c: Vec<Q> = cp.iter().zip(cn).map(|(a, b)| &wp * a + &wn * b).collect();
                let e = &wp * ep + &wn * en;
                rest.push((c, e));
            }
        }
        system = rest;
    }
    // no variables left: each row reads 0 > e
    system.iter().all(|(_, e)| e.is_negative())
}

/// `Σ_{i ≤ d} C(n, i)` in plain integers, for small cases.
pub fn small_bound(n: u64, d: u64) -> u64 {
    let mut total = 0u64;
    let mut c = 1u64;
    for i in 0..=d.min(n) {
        total += c;
        c = c * (n - i) / (i + 1);
    }
    total
}

/// MHA row `i` computed by explicit loops.
pub fn naive_mha_row(p: &TransformerParams<f64>, x: &Matrix<f64>, i: usize) -> Vec<f64> {
    let d = x.cols();
    let scale = if p.scale_logits { 1.0 / (p.d_head() as f64).sqrt() } else { 1.0 };
    let proj = |w: &Matrix<f64>, row: usize| -> Vec<f64> {
        (0..w.cols()).map(|c| (0..d).map(|r| x[(row, r)] * w[(r, c)]).sum()).collect()
    };
    let mut out = vec![0.0; d];
    for h in &p.heads {
        let qi = proj(&h.q, i);
        let logits: Vec<f64> = (0..=i)
            .map(|j| qi.iter().zip(proj(&h.k, j)).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut head = vec![0.0; h.v.cols()];
        for j in 0..=i {
            for (acc, v) in head.iter_mut().zip(proj(&h.v, j)) {
                *acc += e[j] / z * v;
            }
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o += head.iter().enumerate().map(|(r, &hv)| hv * h.o[(r, c)]).sum::<f64>();
        }
    }
    out
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
