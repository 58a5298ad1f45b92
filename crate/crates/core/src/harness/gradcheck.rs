use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{grad_check, Tape, Tensor};
use crate::evolution::{mutation_objective, Arena};
use crate::nets::{init_params, Activation, Discriminator, Generator, MlpSpec, ParamVector};
use crate::objectives::{d_loss, distillation_loss, gp_term, DistillNorm, MutationKind, TiePolicy};
use crate::Result;

/// Finite-difference step used by the suite.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted `|analytic - numeric| / max(1, |analytic|)`.
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckResult {
    pub objective: &'static str,
    pub instances: usize,
    pub max_error: f64,
}

impl GradcheckResult {
    pub fn passed(&self) -> bool {
        self.max_error < FD_TOLERANCE
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

struct Instance {
    gen: Generator,
    disc: Discriminator,
    theta: ParamVector,
    theta_x: ParamVector,
    theta_y: ParamVector,
    omega: ParamVector,
    z: Tensor,
    real: Tensor,
    gp_seed: u64,
}

fn instance(seed: u64) -> Instance {
    let gs = MlpSpec::new(vec![8, 32, 2], Activation::Tanh, Activation::Identity).expect("valid");
    let ds = MlpSpec::new(vec![2, 16, 1], Activation::Relu, Activation::Identity).expect("valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Instance {
        theta: init_params(&gs, rng.random()),
        theta_x: init_params(&gs, rng.random()),
        theta_y: init_params(&gs, rng.random()),
        omega: init_params(&ds, rng.random()),
        z: normal(&mut rng, 8, 8, 1.0),
        real: normal(&mut rng, 8, 2, 1.5),
        gp_seed: rng.random(),
        gen: Generator::new(gs).expect("valid"),
        disc: Discriminator::new(ds).expect("valid"),
    }
}

fn disc_objective(inst: &Instance, omega: &[f64], gp: bool) -> Result<(f64, Vec<f64>)> {
    let fake = inst.gen.forward(&inst.theta, &inst.z)?;
    let mut tape = Tape::new();
    let w = tape.leaf("omega", Tensor::vector(omega.to_vec()));
    let loss = if gp {
        let mut rng = ChaCha8Rng::seed_from_u64(inst.gp_seed);
        gp_term(&mut tape, &inst.disc, w, &inst.real, &fake, 10.0, &mut rng)?
    } else {
        let fakes = [fake.slice_rows(0, 4), fake.slice_rows(4, 8)];
        d_loss(&mut tape, &inst.disc, w, &inst.real, &fakes)?
    };
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), grads.wrt(w).into_data()))
}

fn mutation(inst: &Instance, theta: &[f64], kind: MutationKind) -> Result<(f64, Vec<f64>)> {
    let arena = Arena { gen: &inst.gen, disc: &inst.disc, omega: &inst.omega };
    mutation_objective(arena, &ParamVector::from_vec(theta.to_vec()), kind, &inst.z)
}

fn distill(inst: &Instance, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let x = inst.gen.forward(&inst.theta_x, &inst.z)?;
    let y = inst.gen.forward(&inst.theta_y, &inst.z)?;
    let cx = inst.disc.logits(&inst.omega, &x)?;
    let cy = inst.disc.logits(&inst.omega, &y)?;
    let mut tape = Tape::new();
    let t = tape.leaf("theta", Tensor::vector(theta.to_vec()));
    let zv = tape.constant(inst.z.clone());
    let out = inst.gen.record(&mut tape, t, zv)?;
    let loss = distillation_loss(&mut tape, out, &x, &y, &cx, &cy, TiePolicy::ImitateX, DistillNorm::Mean)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), grads.wrt(t).into_data()))
}

/// Checks every training objective against central differences on
/// `instances` random 2-16-1 discriminators and 8-32-2 generators.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<Vec<GradcheckResult>> {
    let names = ["d_loss", "minimax", "heuristic", "least_squares", "distillation", "gradient_penalty"];
    let mut worst = [0.0f64; 6];
    for k in 0..instances {
        let inst = instance(seed.wrapping_add(k as u64));
        let errs = [
            grad_check(|p| disc_objective(&inst, p, false), inst.omega.as_slice(), FD_STEP)?,
            grad_check(|p| mutation(&inst, p, MutationKind::Minimax), inst.theta.as_slice(), FD_STEP)?,
            grad_check(|p| mutation(&inst, p, MutationKind::Heuristic), inst.theta.as_slice(), FD_STEP)?,
            grad_check(|p| mutation(&inst, p, MutationKind::LeastSquares), inst.theta.as_slice(), FD_STEP)?,
            grad_check(|p| distill(&inst, p), inst.theta.as_slice(), FD_STEP)?,
            grad_check(|p| disc_objective(&inst, p, true), inst.omega.as_slice(), FD_STEP)?,
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    Ok(names
        .iter()
        .zip(worst)
        .map(|(&objective, max_error)| GradcheckResult { objective, instances, max_error })
        .collect())
}
