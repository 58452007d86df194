//! Deterministic low-discrepancy point sets for balls, boxes and spheres.
//!
//! Points come from a Halton sequence with a Cranley-Patterson shift drawn
//! from a seeded ChaCha stream, so a `(seed, count, dim)` triple always
//! reproduces the same set.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % b) as f64 * factor;
        index /= b;
        factor *= inv;
    }
    value
}

fn prime(dim: usize) -> u32 {
    // dimensions beyond the table reuse primes with a different shift
    PRIMES[dim % PRIMES.len()]
}

/// Shifted Halton points in `[0,1)^dim`.
pub fn halton_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let u = radical_inverse(i as u64 + 1, prime(d)) + shift[d];
                    u - u.floor()
                })
                .collect()
        })
        .collect()
}

/// Acklam's rational approximation of the standard normal quantile.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    let low = 0.02425;
    if p < low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

fn direction_from_uniforms(us: &[f64]) -> DVector<f64> {
    if us.len() == 1 {
        return DVector::from_element(1, if us[0] < 0.5 { -1.0 } else { 1.0 });
    }
    let g = DVector::from_iterator(us.len(), us.iter().map(|&u| normal_quantile(u)));
    let norm = g.norm();
    if norm > 0.0 {
        g / norm
    } else {
        let mut e = DVector::zeros(us.len());
        e[0] = 1.0;
        e
    }
}

/// Unit directions in `R^dim`. In one and two dimensions these are exact
/// equispaced points of the sphere; otherwise they are low-discrepancy.
pub fn sphere_directions(count: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
    match dim {
        1 => (0..count)
            .map(|i| DVector::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect(),
        2 => (0..count)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                DVector::from_vec(vec![theta.cos(), theta.sin()])
            })
            .collect(),
        _ => halton_points(count, dim, seed)
            .iter()
            .map(|u| direction_from_uniforms(u))
            .collect(),
    }
}

/// Points of the closed unit ball: the centre, the `2 dim` axis points
/// `±e_i`, then `count` low-discrepancy points with radial part `u^(1/dim)`.
pub fn unit_ball_points(count: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut points = Vec::with_capacity(count + 2 * dim + 1);
    points.push(DVector::zeros(dim));
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(dim);
            e[i] = sign;
            points.push(e);
        }
    }
    for u in halton_points(count, dim + 1, seed) {
        let radius = u[0].powf(1.0 / dim as f64);
        points.push(direction_from_uniforms(&u[1..]) * radius);
    }
    points
}

/// Points of the box `center + [-half_width, half_width]^dim`.
pub fn box_points(
    count: usize,
    center: &DVector<f64>,
    half_width: f64,
    seed: u64,
) -> Vec<DVector<f64>> {
    let dim = center.len();
    halton_points(count, dim, seed)
        .into_iter()
        .map(|u| {
            DVector::from_iterator(
                dim,
                u.iter()
                    .zip(center.iter())
                    .map(|(&ui, &ci)| ci + half_width * (2.0 * ui - 1.0)),
            )
        })
        .collect()
}
