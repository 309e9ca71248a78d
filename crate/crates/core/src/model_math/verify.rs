//! Self-check suite behind `spie modelcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::*;

/// Gradient checks pass below this relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, e.to_string()),
        }
    }
}

/// Random probabilities away from the clamp and binary targets.
pub fn random_point(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let p = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
    let y = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
    (p, y)
}

fn check_msam_shape(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pyramid: Vec<Tensor> = PYRAMID_STRIDES
        .iter()
        .map(|s| Tensor::from_fn(vec![1, 512 / s, 512 / s], |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let out = msam_forward(&pyramid, &MsamParams::seeded(4, MSAM_CHANNELS, seed))?;
    Ok((
        out.shape() == [MSAM_CHANNELS, 32, 32],
        format!("512x512 source -> {:?}", out.shape()),
    ))
}

fn check_tcp_shape(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = Tensor::from_fn(vec![37, 64], |_| rng.gen_range(-1.0..1.0));
    let out = tcp_forward(
        &tokens,
        &TcpParams::seeded(DEFAULT_TCP_TOKENS, 64, MSAM_CHANNELS, seed)?,
    )?;
    Ok((
        out.shape() == [DEFAULT_TCP_TOKENS, MSAM_CHANNELS],
        format!("(37, 64) tokens -> {:?}", out.shape()),
    ))
}

fn worst_over_points(
    seed: u64,
    points: usize,
    loss: impl Fn(&[f64], &[f64]) -> Result<f64>,
    grad: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let n = rng.gen_range(1..=32);
        let (p, y) = random_point(&mut rng, n);
        let g = grad(&p, &y)?;
        let f = |x: &[f64]| loss(x, &y).unwrap_or(f64::NAN);
        worst = worst.max(grad_check(&f, &p, &g)?);
    }
    Ok((
        worst < GRAD_TOLERANCE,
        format!("max relative error {worst:.3e} over {points} points"),
    ))
}

fn check_ce_grad(seed: u64, points: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let (t, v) = (rng.gen_range(1..=5), rng.gen_range(2..=12));
        let logits: Vec<f64> = (0..t * v).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let targets: Vec<usize> = (0..t).map(|_| rng.gen_range(0..v)).collect();
        let g = ce_text_grad(&Tensor::new(vec![t, v], logits.clone())?, &targets)?;
        let f = |x: &[f64]| {
            Tensor::new(vec![t, v], x.to_vec())
                .and_then(|l| ce_text_loss(&l, &targets))
                .unwrap_or(f64::NAN)
        };
        worst = worst.max(grad_check(&f, &logits, g.data())?);
    }
    Ok((
        worst < GRAD_TOLERANCE,
        format!("max relative error {worst:.3e} over {points} points"),
    ))
}

fn check_total(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, y) = random_point(&mut rng, 16);
    let logits = Tensor::from_fn(vec![3, 7], |_| rng.gen_range(-2.0..2.0));
    let (text, bce, dice) = (
        ce_text_loss(&logits, &[1, 4, 6])?,
        bce_loss(&p, &y)?,
        dice_loss(&p, &y, DICE_SMOOTH)?,
    );
    let total = total_loss(text, bce, dice)?;
    Ok((
        total == text + bce + dice,
        format!("{text:.6} + {bce:.6} + {dice:.6} = {total:.6}"),
    ))
}

/// Runs every check with the given seed.
pub fn run_checks(seed: u64) -> Vec<Check> {
    vec![
        Check::from_result("msam_shape", check_msam_shape(seed)),
        Check::from_result("tcp_shape", check_tcp_shape(seed)),
        Check::from_result("bce_gradient", worst_over_points(seed, 100, bce_loss, bce_grad)),
        Check::from_result(
            "dice_gradient",
            worst_over_points(
                seed ^ 1,
                100,
                |p, y| dice_loss(p, y, DICE_SMOOTH),
                |p, y| dice_grad(p, y, DICE_SMOOTH),
            ),
        ),
        Check::from_result("ce_gradient", check_ce_grad(seed ^ 2, 50)),
        Check::from_result("total_loss", check_total(seed)),
    ]
}
