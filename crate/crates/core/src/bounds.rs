//! Minimum softmax entropy inside a logit ball: the exact value, a closed-form
//! lower bound, the stationary candidates of the constrained problem, and a
//! brute-force projected-gradient oracle.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::linalg::{norm2, softmax_entropy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub r: f64,
    pub num_classes: usize,
    pub kappa: f64,
    pub h_star: Vec<f64>,
    pub exact_hstar: f64,
    pub lower_bound: f64,
    /// Present only when the oracle was run.
    pub oracle_min: Option<f64>,
    pub oracle_argmin: Option<Vec<f64>>,
}

fn check(r: f64, c: usize) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(contract(format!("radius must be finite and >= 0, got {r}")));
    }
    if c < 2 {
        return Err(contract(format!("need at least 2 classes, got {c}")));
    }
    Ok(())
}

/// Logit gap between the top class and the rest at the minimizer.
fn gap(r: f64, c: usize) -> f64 {
    let c = c as f64;
    (c / (c - 1.0)).sqrt() * r
}

/// Closed-form lower bound `log(1 + (C−1)·exp(−√(C/(C−1))·r))`.
pub fn lower_bound(r: f64, c: usize) -> f64 {
    ((c as f64 - 1.0) * (-gap(r, c)).exp()).ln_1p()
}

/// Exact minimum entropy over the radius-`r` ball.
pub fn hstar_value(r: f64, c: usize) -> f64 {
    let v = gap(r, c);
    // 1/κ = (C−1)e^{−v}, and log(κ(C−1)) = v.
    let inv_kappa = (c as f64 - 1.0) * (-v).exp();
    let kappa = 1.0 / inv_kappa;
    inv_kappa.ln_1p() + if v == 0.0 { 0.0 } else { v / (kappa + 1.0) }
}

/// The minimizing logit vector: one large entry, `C−1` equal small ones.
pub fn h_star(r: f64, c: usize) -> Vec<f64> {
    let cf = c as f64;
    let mut h = vec![-r / (cf * (cf - 1.0)).sqrt(); c];
    h[0] = ((cf - 1.0) / cf).sqrt() * r;
    h
}

pub fn exact_hstar(r: f64, c: usize) -> Result<BoundResult> {
    check(r, c)?;
    Ok(BoundResult {
        r,
        num_classes: c,
        kappa: gap(r, c).exp() / (c as f64 - 1.0),
        h_star: h_star(r, c),
        exact_hstar: hstar_value(r, c),
        lower_bound: lower_bound(r, c),
        oracle_min: None,
        oracle_argmin: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Number of large entries.
    pub b: usize,
    pub h: Vec<f64>,
    pub entropy: f64,
}

/// Zero-sum, norm-`r` points with `b` equal large entries and `C−b` equal small ones.
pub fn stationary_candidates(r: f64, c: usize) -> Result<Vec<Candidate>> {
    check(r, c)?;
    let cf = c as f64;
    Ok((1..c)
        .map(|b| {
            let bf = b as f64;
            let hi = ((cf - bf) / (bf * cf)).sqrt() * r;
            let lo = -(bf / (cf * (cf - bf))).sqrt() * r;
            let h: Vec<f64> = (0..c).map(|i| if i < b { hi } else { lo }).collect();
            let entropy = softmax_entropy(&h);
            Candidate { b, h, entropy }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            iters: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMin {
    pub min: f64,
    pub argmin: Vec<f64>,
}

/// Entropy of softmax(h) and its gradient `−p_j(log p_j + H)`.
fn entropy_grad(h: &[f64]) -> (f64, Vec<f64>) {
    let m = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = h.iter().map(|v| (v - m).exp()).sum();
    let log_z = z.ln();
    let logp: Vec<f64> = h.iter().map(|v| v - m - log_z).collect();
    let ent = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
    let ent = ent.max(0.0);
    let g = logp.iter().map(|l| -l.exp() * (l + ent)).collect();
    (ent, g)
}

fn project(h: &mut [f64], r: f64) {
    let n = norm2(h);
    if n > r {
        let s = r / n;
        h.iter_mut().for_each(|v| *v *= s);
    }
}

/// Multi-restart projected gradient descent of softmax entropy over `‖h‖₂ ≤ r`.
///
/// Each restart starts from a seeded random zero-sum point on the sphere and
/// uses a backtracking step that doubles after every accepted move.
pub fn oracle_min(r: f64, c: usize, cfg: &OracleConfig) -> Result<OracleMin> {
    check(r, c)?;
    if cfg.restarts == 0 {
        return Err(contract("oracle needs at least one restart"));
    }
    if r == 0.0 {
        return Ok(OracleMin {
            min: (c as f64).ln(),
            argmin: vec![0.0; c],
        });
    }
    let mut best = OracleMin {
        min: f64::INFINITY,
        argmin: Vec::new(),
    };
    for s in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (s as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut h: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mean = h.iter().sum::<f64>() / c as f64;
        h.iter_mut().for_each(|v| *v -= mean);
        let n = norm2(&h);
        if n == 0.0 {
            h[0] = 1.0;
        }
        let n = norm2(&h);
        h.iter_mut().for_each(|v| *v *= r / n);

        let (mut ent, mut g) = entropy_grad(&h);
        let mut step = r;
        for _ in 0..cfg.iters {
            let mut accepted = false;
            for _ in 0..80 {
                let mut cand: Vec<f64> = h.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                project(&mut cand, r);
                let decrease: f64 = g.iter().zip(h.iter().zip(&cand)).map(|(gi, (a, b))| gi * (a - b)).sum();
                let (ce, cg) = entropy_grad(&cand);
                if decrease > 0.0 && ce <= ent - 1e-4 * decrease {
                    h = cand;
                    ent = ce;
                    g = cg;
                    step *= 2.0;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if ent < best.min {
            best = OracleMin { min: ent, argmin: h };
        }
    }
    Ok(best)
}

pub fn bound_with_oracle(r: f64, c: usize, cfg: &OracleConfig) -> Result<BoundResult> {
    let mut out = exact_hstar(r, c)?;
    let o = oracle_min(r, c, cfg)?;
    out.oracle_min = Some(o.min);
    out.oracle_argmin = Some(o.argmin);
    Ok(out)
}

/// Default grid radii, log-spaced-ish from 0.01 to 20.
pub const GRID_R: [f64; 8] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
pub const GRID_C: [usize; 4] = [2, 3, 10, 100];

pub fn bound_grid(rs: &[f64], cs: &[usize], cfg: &OracleConfig) -> Result<Vec<BoundResult>> {
    let mut out = Vec::with_capacity(rs.len() * cs.len());
    for &c in cs {
        for &r in rs {
            out.push(bound_with_oracle(r, c, cfg)?);
        }
    }
    Ok(out)
}

/// CSV with columns `r,C,exact,bound,oracle,gap` where gap = exact − bound.
pub fn write_grid_csv(mut out: impl Write, grid: &[BoundResult]) -> std::io::Result<()> {
    writeln!(out, "r,C,exact,bound,oracle,gap")?;
    for b in grid {
        let oracle = b.oracle_min.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{:.16e},{},{:.16e},{:.16e},{},{:.16e}",
            b.r,
            b.num_classes,
            b.exact_hstar,
            b.lower_bound,
            oracle,
            b.exact_hstar - b.lower_bound
        )?;
    }
    Ok(())
}
