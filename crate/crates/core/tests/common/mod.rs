#![allow(dead_code)]

use rand::Rng;
use tripemb::data::BinaryMask;
use tripemb::Tensor;

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

pub fn at(t: &Tensor, idx: &[usize]) -> f64 {
    let mut flat = 0;
    for (i, (&k, &n)) in idx.iter().zip(t.shape()).enumerate() {
        assert!(k < n, "index {i} out of range");
        flat = flat * n + k;
    }
    t.data()[flat]
}

pub fn conv_oracle(x: &Tensor, k: &Tensor, b: &[f64]) -> Vec<f64> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let f = k.shape()[3];
    let mut out = Vec::with_capacity(h * w * f);
    for y in 0..h as isize {
        for xx in 0..w as isize {
            for fo in 0..f {
                let mut s = b[fo];
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let (iy, ix) = (y + dy, xx + dx);
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c {
                            let xv = at(x, &[iy as usize, ix as usize, ci]);
                            let kv = at(k, &[(dy + 1) as usize, (dx + 1) as usize, ci, fo]);
                            s += xv * kv;
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

pub fn pool_oracle(x: &Tensor) -> Vec<f64> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Vec::new();
    for y in 0..h / 2 {
        for xx in 0..w / 2 {
            for ci in 0..c {
                let vals = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| at(x, &[2 * y + a, 2 * xx + b, ci]));
                out.push(vals.into_iter().fold(f64::NEG_INFINITY, f64::max));
            }
        }
    }
    out
}

pub fn gap_oracle(x: &Tensor) -> Vec<f64> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    (0..c)
        .map(|ci| {
            let mut s = 0.0;
            for y in 0..h {
                for xx in 0..w {
                    s += at(x, &[y, xx, ci]);
                }
            }
            s / (h * w) as f64
        })
        .collect()
}

pub fn dense_oracle(x: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|j| b[j] + (0..x.len()).map(|i| x[i] * at(w, &[i, j])).sum::<f64>())
        .collect()
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// First permutation, in lexicographic order, satisfying all three rater
/// inequalities on absolute label differences.
pub fn brute_force_order(y: [u8; 3]) -> [usize; 3] {
    let d = |a: usize, b: usize| (y[a] as i32 - y[b] as i32).abs();
    *PERMUTATIONS
        .iter()
        .find(|s| d(s[0], s[1]) <= d(s[0], s[2]) && d(s[0], s[1]) <= d(s[1], s[2]) && d(s[0], s[2]) <= d(s[1], s[2]))
        .expect("some order is always valid")
}

/// Row and column extent of a mask, computed from per-axis occupancy.
fn axis_interval(occupied: impl Iterator<Item = bool>) -> Option<(usize, usize)> {
    let hits: Vec<usize> = occupied.enumerate().filter(|(_, b)| *b).map(|(i, _)| i).collect();
    Some((*hits.first()?, *hits.last()?))
}

fn intersect(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// Intersection of the masks' bounding boxes as ((top, bottom), (left, right)).
pub fn bbox_oracle(masks: &[BinaryMask], h: usize, w: usize) -> Option<((usize, usize), (usize, usize))> {
    masks.iter().try_fold(((0, h - 1), (0, w - 1)), |(rows, cols), m| {
        let mr = axis_interval((0..h).map(|r| (0..w).any(|c| m.get(r, c))))?;
        let mc = axis_interval((0..w).map(|c| (0..h).any(|r| m.get(r, c))))?;
        Some((intersect(rows, mr)?, intersect(cols, mc)?))
    })
}

/// A few random rectangles per mask, some of which miss each other.
pub fn random_mask_set(rng: &mut impl Rng) -> (usize, usize, Vec<BinaryMask>) {
    let (h, w) = (rng.gen_range(5..30), rng.gen_range(5..30));
    let count = rng.gen_range(1..6);
    let masks = (0..count)
        .map(|_| {
            let blobs: Vec<(usize, usize, usize, usize)> = (0..rng.gen_range(1..4))
                .map(|_| {
                    let (r0, c0) = (rng.gen_range(0..h), rng.gen_range(0..w));
                    (r0, rng.gen_range(r0..h), c0, rng.gen_range(c0..w))
                })
                .collect();
            BinaryMask::from_fn(h, w, |r, c| blobs.iter().any(|&(r0, r1, c0, c1)| r >= r0 && r <= r1 && c >= c0 && c <= c1))
        })
        .collect();
    (h, w, masks)
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}
