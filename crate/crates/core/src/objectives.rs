//! Scalar training objectives, recorded on a [`Tape`] so they can be
//! differentiated with respect to either network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::nets::Discriminator;
use crate::{Error, Result};

/// Floor applied to every log argument.
pub const LOG_FLOOR: f64 = 1e-12;

/// Floor under the squared input-gradient norm before the square root.
const GP_NORM_FLOOR: f64 = 1e-24;

/// Generator objective used as a mutation operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    Minimax,
    Heuristic,
    LeastSquares,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [MutationKind::Minimax, MutationKind::Heuristic, MutationKind::LeastSquares];

    pub fn tag(self) -> &'static str {
        match self {
            MutationKind::Minimax => "minimax",
            MutationKind::Heuristic => "heuristic",
            MutationKind::LeastSquares => "least_squares",
        }
    }
}

/// Target chosen for rows where both parents receive the same logit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    ImitateX,
    ImitateY,
    /// Tied rows contribute nothing.
    Skip,
}

/// Normalization of the distillation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillNorm {
    /// Divide the summed squared error by the number of rows.
    Mean,
    /// Plain sum over rows.
    Sum,
}

/// `log(max(x, LOG_FLOOR))`
pub fn clamped_log(tape: &mut Tape, x: Var) -> Result<Var> {
    let c = tape.clamp_min(x, LOG_FLOOR)?;
    Ok(tape.log(c)?)
}

fn one_minus(tape: &mut Tape, x: Var) -> Result<Var> {
    let neg = tape.scalar_mul(x, -1.0)?;
    Ok(tape.add_scalar(neg, 1.0)?)
}

/// Discriminator loss from already-recorded probabilities:
/// `-mean(log D(real)) - mean(log(1 - D(fake)))`.
pub fn d_loss_from_probs(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var> {
    let log_real = clamped_log(tape, d_real)?;
    let real_term = tape.mean(log_real)?;
    let not_fake = one_minus(tape, d_fake)?;
    let log_fake = clamped_log(tape, not_fake)?;
    let fake_term = tape.mean(log_fake)?;
    let total = tape.add(real_term, fake_term)?;
    Ok(tape.scalar_mul(total, -1.0)?)
}

/// Discriminator loss over `m` real rows and one fake batch of `m / mu` rows
/// per parent generator:
///
/// `-(1/m) sum_i log D(x_i) - (1/m) sum_j sum_i log(1 - D(G_j(z_i)))`
///
/// `omega` is the discriminator parameter node; the batches are constants.
pub fn d_loss(
    tape: &mut Tape,
    disc: &Discriminator,
    omega: Var,
    real: &Tensor,
    fakes: &[Tensor],
) -> Result<Var> {
    let m = real.rows();
    if fakes.is_empty() || m % fakes.len() != 0 {
        return Err(Error::Shape(format!("{} fake batches cannot split {m} real rows", fakes.len())));
    }
    let per = m / fakes.len();
    if let Some(bad) = fakes.iter().find(|f| f.rows() != per) {
        return Err(Error::Shape(format!("fake batch has {} rows, expected {per}", bad.rows())));
    }
    let real = tape.constant(real.clone());
    let fake = tape.constant(Tensor::vstack(fakes));
    let d_real = disc.record_probs(tape, omega, real)?;
    let d_fake = disc.record_probs(tape, omega, fake)?;
    d_loss_from_probs(tape, d_real, d_fake)
}

/// Interpolation gradient penalty
/// `lambda * mean_i (||grad_x C(x_hat_i)|| - 1)^2` with
/// `x_hat_i = u_i * real_i + (1 - u_i) * fake_i`, `u_i ~ U[0, 1)` per row.
pub fn gp_term(
    tape: &mut Tape,
    disc: &Discriminator,
    omega: Var,
    real: &Tensor,
    fake: &Tensor,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<Var> {
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!("gp real {:?} vs fake {:?}", real.shape(), fake.shape())));
    }
    if lambda == 0.0 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let cols = real.cols();
    let mut mixed = Vec::with_capacity(real.len());
    for i in 0..real.rows() {
        let u: f64 = rng.random();
        mixed.extend(real.row(i).iter().zip(fake.row(i)).map(|(r, f)| u * r + (1.0 - u) * f));
    }
    let x_hat = tape.constant(Tensor::matrix(real.rows(), cols, mixed));
    gp_at(tape, disc, omega, x_hat, lambda)
}

/// Penalty evaluated at fixed interpolates `x_hat`.
pub fn gp_at(tape: &mut Tape, disc: &Discriminator, omega: Var, x_hat: Var, lambda: f64) -> Result<Var> {
    let g = disc.record_input_gradient(tape, omega, x_hat)?;
    let sq = tape.square(g)?;
    let sq_norm = tape.row_sum(sq)?;
    let sq_norm = tape.clamp_min(sq_norm, GP_NORM_FLOOR)?;
    let norm = tape.sqrt(sq_norm)?;
    let dev = tape.add_scalar(norm, -1.0)?;
    let dev_sq = tape.square(dev)?;
    let mean = tape.mean(dev_sq)?;
    Ok(tape.scalar_mul(mean, lambda)?)
}

/// Generator loss for `kind`, given `D(G(z))` on the candidate's batch.
pub fn mutation_loss(tape: &mut Tape, kind: MutationKind, d_fake: Var) -> Result<Var> {
    match kind {
        MutationKind::Minimax => {
            let not = one_minus(tape, d_fake)?;
            let l = clamped_log(tape, not)?;
            let m = tape.mean(l)?;
            Ok(tape.scalar_mul(m, 0.5)?)
        }
        MutationKind::Heuristic => {
            let l = clamped_log(tape, d_fake)?;
            let m = tape.mean(l)?;
            Ok(tape.scalar_mul(m, -0.5)?)
        }
        MutationKind::LeastSquares => {
            let shifted = tape.add_scalar(d_fake, -1.0)?;
            let sq = tape.square(shifted)?;
            Ok(tape.mean(sq)?)
        }
    }
}

/// Row-wise imitation targets: the parent output whose logit is higher.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillTargets {
    pub target: Tensor,
    /// 1 for rows that contribute, 0 for skipped ties.
    pub weight: Vec<f64>,
    pub from_x: usize,
    pub from_y: usize,
    pub ties: usize,
}

pub fn distillation_targets(
    x_out: &Tensor,
    y_out: &Tensor,
    c_x: &[f64],
    c_y: &[f64],
    tie: TiePolicy,
) -> Result<DistillTargets> {
    let n = x_out.rows();
    if y_out.shape() != x_out.shape() || c_x.len() != n || c_y.len() != n {
        return Err(Error::Shape(format!(
            "distillation rows: x {:?}, y {:?}, C_x {}, C_y {}",
            x_out.shape(),
            y_out.shape(),
            c_x.len(),
            c_y.len()
        )));
    }
    let mut data = Vec::with_capacity(x_out.len());
    let mut weight = Vec::with_capacity(n);
    let (mut from_x, mut from_y, mut ties) = (0, 0, 0);
    for i in 0..n {
        let pick_x = if c_x[i] > c_y[i] {
            from_x += 1;
            Some(true)
        } else if c_y[i] > c_x[i] {
            from_y += 1;
            Some(false)
        } else {
            ties += 1;
            match tie {
                TiePolicy::ImitateX => Some(true),
                TiePolicy::ImitateY => Some(false),
                TiePolicy::Skip => None,
            }
        };
        match pick_x {
            Some(true) => {
                data.extend_from_slice(x_out.row(i));
                weight.push(1.0);
            }
            Some(false) => {
                data.extend_from_slice(y_out.row(i));
                weight.push(1.0);
            }
            None => {
                data.extend_from_slice(x_out.row(i));
                weight.push(0.0);
            }
        }
    }
    Ok(DistillTargets { target: Tensor::matrix(n, x_out.cols(), data), weight, from_x, from_y, ties })
}

/// Squared distance of `child_out` to precomputed targets.
pub fn distillation_loss_to(
    tape: &mut Tape,
    child_out: Var,
    targets: &DistillTargets,
    norm: DistillNorm,
) -> Result<Var> {
    let out = tape.value(child_out);
    if out.shape() != targets.target.shape() {
        return Err(Error::Shape(format!(
            "child output {:?} vs targets {:?}",
            out.shape(),
            targets.target.shape()
        )));
    }
    let n = out.rows();
    let cols = out.cols();
    let target = tape.constant(targets.target.clone());
    let mut diff = tape.sub(child_out, target)?;
    if targets.weight.iter().any(|&w| w != 1.0) {
        let mask: Vec<f64> = targets.weight.iter().flat_map(|&w| std::iter::repeat_n(w, cols)).collect();
        let mask = tape.constant(Tensor::matrix(n, cols, mask));
        diff = tape.mul(diff, mask)?;
    }
    let sq = tape.square(diff)?;
    let total = tape.sum(sq)?;
    Ok(match norm {
        DistillNorm::Mean => tape.scalar_mul(total, 1.0 / n as f64)?,
        DistillNorm::Sum => total,
    })
}

/// Discriminator-filtered distillation loss: each row of `child_out` is
/// pulled toward whichever parent output has the larger raw logit.
#[allow(clippy::too_many_arguments)]
pub fn distillation_loss(
    tape: &mut Tape,
    child_out: Var,
    x_out: &Tensor,
    y_out: &Tensor,
    c_x: &[f64],
    c_y: &[f64],
    tie: TiePolicy,
    norm: DistillNorm,
) -> Result<Var> {
    let targets = distillation_targets(x_out, y_out, c_x, c_y, tie)?;
    distillation_loss_to(tape, child_out, &targets, norm)
}
