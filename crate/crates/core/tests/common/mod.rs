//! Population generators and brute-force oracles shared by the integration
//! tests. The oracles read potential outcomes straight off the type keys and
//! atoms and do not call the library's enumeration code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vaxmed::popmodel::{
    Arm, Atom, BinaryTypeDistribution, GeneralPopulation, MediatorLevel, PhiTable, PopulationStratum,
    StratifiedPopulation,
};

pub const PATTERNS: [&str; 6] = ["0000", "0001", "0011", "0101", "0111", "1111"];

pub fn lvl(i: u32) -> MediatorLevel {
    if i == 0 {
        MediatorLevel::Undetectable
    } else {
        MediatorLevel::Detectable(i)
    }
}

/// Random point of the simplex with `n` coordinates, none exactly zero.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(rng.random::<f64>().max(1e-300)).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn binary_from_pairs(pairs: &[(String, f64)]) -> BinaryTypeDistribution<f64> {
    BinaryTypeDistribution::from_keyed(pairs.iter().map(|(k, v)| (k.as_str(), *v))).expect("valid type distribution")
}

/// `π^{m}_{y} = Pr[M1 = m] · q_y`: responder status independent of the
/// outcome pattern.
pub fn random_factorized(rng: &mut ChaCha8Rng) -> BinaryTypeDistribution<f64> {
    let va = rng.random_range(0.05..0.95);
    let q = simplex(rng, 6);
    let mut pairs = Vec::new();
    for (m, pm) in [("00", 1.0 - va), ("10", va)] {
        for (y, qy) in PATTERNS.iter().zip(&q) {
            pairs.push((format!("{m}/{y}"), pm * qy));
        }
    }
    binary_from_pairs(&pairs)
}

/// Any of the twelve types with random mass.
pub fn random_binary(rng: &mut ChaCha8Rng) -> BinaryTypeDistribution<f64> {
    let w = simplex(rng, 12);
    let pairs: Vec<(String, f64)> = ["00", "10"]
        .iter()
        .flat_map(|m| PATTERNS.iter().map(move |y| format!("{m}/{y}")))
        .zip(w)
        .collect();
    binary_from_pairs(&pairs)
}

/// Admissible margins with room for every allocation parameter in `[0, 1]`
/// (`φ_vns ≤ φ_pns`).
pub fn random_admissible_phi(rng: &mut ChaCha8Rng) -> PhiTable<f64> {
    let pnf: f64 = rng.random_range(0.01..0.3);
    let vn: f64 = rng.random_range(0.05..0.6);
    let va = 1.0 - vn;
    let vf = pnf * rng.random_range(0.05..0.95);
    let share = rng.random_range(0.05..0.95);
    let vnf = (vf * share).min(vn * 0.9);
    let vaf = (vf - vnf).min(va * 0.9);
    PhiTable::new(vaf, va - vaf, vnf, vn - vnf, pnf, 1.0 - pnf).expect("admissible margins")
}

/// Reads `Y = [Y11, Y10, Y01, Y00]` from a key like `10/0101`.
fn key_outcomes(key: &str) -> (bool, [bool; 4]) {
    let (m, y) = key.split_once('/').expect("key has a slash");
    let bits: Vec<bool> = y.chars().map(|c| c == '1').collect();
    (m == "10", [bits[0], bits[1], bits[2], bits[3]])
}

/// `E[Y_{a M_{a'}}]` for a binary type distribution by direct summation.
pub fn brute_binary(pi: &BinaryTypeDistribution<f64>, a: u8, a_prime: u8) -> f64 {
    pi.to_keyed()
        .iter()
        .map(|(k, &p)| {
            let (responder, y) = key_outcomes(k);
            let m = a_prime == 1 && responder;
            let idx = match (a, m) {
                (1, true) => 0,
                (1, false) => 1,
                (_, true) => 2,
                (_, false) => 3,
            };
            if y[idx] {
                p
            } else {
                0.0
            }
        })
        .sum()
}

/// Oracle `θ_Ia = E[Y_{0 M_1}] / E[Y_{0 M_0}]` of a stratified population by
/// summing atoms.
pub fn brute_theta_ia(pop: &StratifiedPopulation<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in pop.strata() {
        for a in s.population.atoms() {
            let p = s.weight * a.prob();
            if a.outcome(Arm::Placebo, a.m1()) {
                num += p;
            }
            if a.outcome(Arm::Placebo, 0) {
                den += p;
            }
        }
    }
    num / den
}

fn bits(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(p)).collect()
}

/// Random population on `neg, 1, …, k−1` with no structural assumptions.
pub fn random_general(rng: &mut ChaCha8Rng, k: usize, atoms: usize) -> GeneralPopulation<f64> {
    let support: Vec<MediatorLevel> = (0..k as u32).map(lvl).collect();
    let probs = simplex(rng, atoms);
    // cycling M1 keeps every level in the support
    let atoms = probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| Atom::new(i % k, bits(rng, k, 0.3), bits(rng, k, 0.5), p))
        .collect();
    GeneralPopulation::new(support, atoms, false).expect("valid population")
}

/// Within each stratum `M1` is independent of the outcome vectors and has
/// the same distribution in every stratum; outcome distributions differ.
pub fn independent_strata(rng: &mut ChaCha8Rng, k: usize, strata: usize) -> StratifiedPopulation<f64> {
    let support: Vec<MediatorLevel> = (0..k as u32).map(lvl).collect();
    let pm = simplex(rng, k);
    let weights = simplex(rng, strata);
    let built = weights
        .into_iter()
        .enumerate()
        .map(|(x, w)| {
            let mut profiles: Vec<(Vec<bool>, Vec<bool>)> = (0..4)
                .map(|_| {
                    let p0 = rng.random_range(0.2..0.8);
                    (bits(rng, k, 0.3), bits(rng, k, p0))
                })
                .collect();
            // keeps the placebo risk positive
            profiles[0].1[0] = true;
            let q = simplex(rng, profiles.len());
            let mut atoms = Vec::new();
            for (m1, &p) in pm.iter().enumerate() {
                for ((y1, y0), &qp) in profiles.iter().zip(&q) {
                    atoms.push(Atom::new(m1, y1, y0, p * qp));
                }
            }
            PopulationStratum {
                label: format!("x{x}"),
                weight: w,
                population: GeneralPopulation::new(support.clone(), atoms, false).expect("valid stratum"),
            }
        })
        .collect();
    StratifiedPopulation::new(built).expect("valid strata")
}

/// Two strata in which the vaccine response is determined by the stratum:
/// everyone in `resp` responds, nobody in `non` does.
pub fn predictable_binary(rng: &mut ChaCha8Rng) -> StratifiedPopulation<f64> {
    let w = rng.random_range(0.2..0.8);
    let stratum = |rng: &mut ChaCha8Rng, m: &str| {
        let q = simplex(rng, 6);
        let pairs: Vec<(String, f64)> = PATTERNS
            .iter()
            .zip(q)
            .map(|(y, p)| (format!("{m}/{y}"), p))
            .collect();
        binary_from_pairs(&pairs).to_general()
    };
    StratifiedPopulation::new(vec![
        PopulationStratum {
            label: "resp".into(),
            weight: w,
            population: stratum(rng, "10"),
        },
        PopulationStratum {
            label: "non".into(),
            weight: 1.0 - w,
            population: stratum(rng, "00"),
        },
    ])
    .expect("valid strata")
}

/// Base-model population with `φ_vnf / φ_vn > φ_pnf`: non-responders fail
/// far more often than the placebo arm does overall.
pub fn constraint_violator(rng: &mut ChaCha8Rng) -> BinaryTypeDistribution<f64> {
    let vn = rng.random_range(0.05..0.5);
    let fail_share = rng.random_range(0.6..1.0);
    let vnf = vn * fail_share;
    let q = simplex(rng, 3);
    let va = 1.0 - vn;
    // responders almost all never fail; a sliver spread over the other types
    let sliver = va * rng.random_range(0.0..0.05);
    let r = simplex(rng, 5);
    let mut pairs = vec![
        ("00/0000".to_string(), vn - vnf),
        ("10/0000".to_string(), va - sliver),
    ];
    for (y, p) in ["0101", "0111", "1111"].iter().zip(&q) {
        pairs.push((format!("00/{y}"), vnf * p));
    }
    for (y, p) in ["0001", "0011", "0101", "0111", "1111"].iter().zip(&r) {
        pairs.push((format!("10/{y}"), sliver * p));
    }
    binary_from_pairs(&pairs)
}
