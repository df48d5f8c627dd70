//! W1 distances between populations.

use rand::Rng;

use super::population::Population;
use crate::rng::{stream, tag};

/// Exact W1 between two empirical laws on the real line.
pub fn w1_1d(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    if na == nb {
        return a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / na as f64;
    }
    // integrate |F_a^{-1}(u) − F_b^{-1}(u)| over the merged breakpoints i/na, j/nb
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < na && j < nb {
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    total
}

/// W1 between two populations: exact on μ(0) for q = 2, sliced over random
/// unit directions for q > 2.
pub fn w1_distance(a: &Population, b: &Population, projections: usize, seed: u64) -> f64 {
    assert_eq!(a.q(), b.q(), "populations over different spin sets");
    let q = a.q();
    if q == 2 {
        let mut xa: Vec<f64> = a.members().map(|m| m[0]).collect();
        let mut xb: Vec<f64> = b.members().map(|m| m[0]).collect();
        return w1_1d(&mut xa, &mut xb);
    }
    let projections = projections.max(1);
    let mut rng = stream(seed, &[tag::W1]);
    let mut total = 0.0;
    for _ in 0..projections {
        let dir = random_direction(&mut rng, q);
        let project = |m: &[f64]| m.iter().zip(&dir).map(|(x, y)| x * y).sum::<f64>();
        let mut xa: Vec<f64> = a.members().map(project).collect();
        let mut xb: Vec<f64> = b.members().map(project).collect();
        total += w1_1d(&mut xa, &mut xb);
    }
    total / projections as f64
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, q: usize) -> Vec<f64> {
    loop {
        // Box–Muller pairs
        let mut v: Vec<f64> = (0..q)
            .map(|_| {
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
