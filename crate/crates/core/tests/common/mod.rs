#![allow(dead_code)]

use fracnodal::{Field, ModelParams, PotentialSpec, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn problem(grid_points: usize, b: f64) -> Problem {
    let mp = ModelParams {
        b,
        grid_points,
        ..ModelParams::default()
    };
    Problem::new(&mp, &PotentialSpec::harmonic(1.0)).unwrap()
}

/// Sum of Gaussian bumps with a nontrivial part of each sign.
pub fn random_field(pb: &Problem, rng: &mut ChaCha8Rng, amplitude: f64) -> Field {
    loop {
        let u = bumps(pb, rng, amplitude);
        let (pos, neg) = u.values().iter().fold((0.0f64, 0.0f64), |(p, n), &x| (p.max(x), n.min(x)));
        if pos > 0.05 * amplitude && neg < -0.05 * amplitude {
            return u;
        }
    }
}

fn bumps(pb: &Problem, rng: &mut ChaCha8Rng, amplitude: f64) -> Field {
    let n = rng.gen_range(2..=5);
    let bumps: Vec<(f64, f64, f64)> = (0..n)
        .map(|k| {
            let sign = match k {
                0 => 1.0,
                1 => -1.0,
                _ if rng.gen_bool(0.5) => 1.0,
                _ => -1.0,
            };
            (
                sign * amplitude * rng.gen_range(0.2..1.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(0.5..2.0),
            )
        })
        .collect();
    pb.field(|x| {
        bumps
            .iter()
            .map(|(a, c, w)| a * (-((x[0] - c) / w).powi(2)).exp())
            .sum()
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
