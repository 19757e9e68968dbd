//! Reference implementations used as test oracles. Written from the
//! definitions, without calling into the crate under test.
#![allow(dead_code, clippy::needless_range_loop, clippy::manual_clamp)]

use std::collections::HashMap;

/// Angle in degrees from a plain dot product and arccos.
pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    let c = ab / (aa.sqrt() * bb.sqrt());
    c.max(-1.0).min(1.0).acos() * 180.0 / std::f64::consts::PI
}

pub fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Shared-letter fraction via letter counts.
pub fn overlap(a: &str, b: &str, over_shorter: bool) -> f64 {
    let count = |s: &str| {
        let mut m: HashMap<char, usize> = HashMap::new();
        for c in s.to_lowercase().chars() {
            *m.entry(c).or_insert(0) += 1;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let la: usize = ca.values().sum();
    let lb: usize = cb.values().sum();
    if la == 0 || lb == 0 {
        return 0.0;
    }
    let shared: usize = ca.iter().map(|(c, n)| (*n).min(*cb.get(c).unwrap_or(&0))).sum();
    let denom = if over_shorter { la.min(lb) } else { la.max(lb) };
    shared as f64 / denom as f64
}

/// Exhaustive nearest neighbour of `words[answer]` among `words`, skipping the
/// answer itself, stems (overlap at or above `threshold`) and zero-distance
/// candidates. Ties go to the lexicographically smaller word.
pub fn brute_nearest(
    words: &[String],
    vectors: &[Vec<f32>],
    answer: usize,
    threshold: f64,
    over_shorter: bool,
) -> Option<(String, f64)> {
    let a = &vectors[answer];
    let mut best: Option<(f64, &String)> = None;
    for (w, v) in words.iter().zip(vectors) {
        if *w == words[answer] || overlap(&words[answer], w, over_shorter) >= threshold {
            continue;
        }
        let mut d2 = 0.0f64;
        for i in 0..a.len() {
            let d = a[i] as f64 - v[i] as f64;
            d2 += d * d;
        }
        if d2 == 0.0 {
            continue;
        }
        best = match best {
            None => Some((d2, w)),
            Some((b, bw)) if d2 < b || (d2 == b && w < bw) => Some((d2, w)),
            keep => keep,
        };
    }
    best.map(|(d2, w)| (w.clone(), d2.sqrt()))
}

/// z-scores with the population standard deviation.
pub fn zscore(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| (v - m) / sd).collect()
}

pub struct NormalFit {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
}

/// Invert a symmetric positive definite matrix by Gauss-Jordan elimination
/// with partial pivoting.
pub fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..p).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular matrix");
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    for (x, y) in a[r].iter_mut().zip(&pivot_row) {
                        *x -= f * y;
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[p..].to_vec()).collect()
}

/// OLS with intercept through the normal equations `(X^T X) b = X^T y`.
pub fn normal_equations(columns: &[Vec<f64>], y: &[f64]) -> NormalFit {
    let n = y.len();
    let p = columns.len() + 1;
    let x = |i: usize, j: usize| if j == 0 { 1.0 } else { columns[j - 1][i] };
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            xty[j] += x(i, j) * y[i];
            for k in 0..p {
                xtx[j][k] += x(i, j) * x(i, k);
            }
        }
    }
    let inv = invert(&xtx);
    let beta: Vec<f64> = (0..p).map(|j| (0..p).map(|k| inv[j][k] * xty[k]).sum()).collect();
    let mut rss = 0.0;
    for i in 0..n {
        let fitted: f64 = (0..p).map(|j| x(i, j) * beta[j]).sum();
        rss += (y[i] - fitted).powi(2);
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let sigma2 = rss / (n - p) as f64;
    NormalFit {
        se: (0..p).map(|j| (sigma2 * inv[j][j]).sqrt()).collect(),
        beta,
        rss,
        r_squared: 1.0 - rss / tss,
    }
}

/// Deterministic generator, separate from the crate RNG.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let x = self.0;
        (x ^ (x >> 29)).wrapping_mul(0xbf58476d1ce4e5b9) ^ (x >> 32)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.unit() * n as f64) as usize
    }

    /// Standard normal by Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u = 1.0 - self.unit();
        let v = self.unit();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    pub fn vector(&mut self, dim: usize) -> Vec<f32> {
        (0..dim).map(|_| self.normal() as f32).collect()
    }
}

/// Random vocabulary with stems, exact duplicate vectors and coarse
/// components, so ties and stem exclusions both occur.
pub fn random_vocabulary(rng: &mut Lcg, size: usize, dim: usize) -> (Vec<String>, Vec<Vec<f32>>) {
    const LETTERS: &[u8] = b"aeilnrst";
    let mut words: Vec<String> = Vec::new();
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    while words.len() < size {
        let len = 3 + rng.below(6);
        let w: String = (0..len).map(|_| LETTERS[rng.below(LETTERS.len())] as char).collect();
        if words.contains(&w) {
            continue;
        }
        let v = match rng.below(10) {
            0 if !vectors.is_empty() => vectors[rng.below(vectors.len())].clone(),
            1..=3 => (0..dim).map(|_| (rng.below(5) as f32 - 2.0) * 0.5).collect(),
            _ => rng.vector(dim),
        };
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        words.push(w);
        vectors.push(v);
    }
    (words, vectors)
}
