// Central-difference check of every training objective on a small random
// network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfadapt::adversarial::TradesObjective;
use selfadapt::grad::{finite_diff_check, FiniteDiff, FiniteDiffReport, Objective, ProbLoss};
use selfadapt::loss::{erm_loss_grad, sat_loss_grad, sce_sat_loss_grad, selective_loss_grad, SceWeights};
use selfadapt::{Mlp, MlpSpec, Result, Tensor};

pub fn run_example() -> Result<Vec<(&'static str, FiniteDiffReport)>> {
    let (m, d, c) = (8, 5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut draw = |rows: usize, cols: usize| {
        Tensor::from_vec(&[rows, cols], (0..rows * cols).map(|_| rng.random_range(0.05..1.0)).collect())
    };
    let x = draw(m, d)?;
    let adv = draw(m, d)?;
    let mut targets = draw(m, c)?;
    for i in 0..m {
        let s: f64 = targets.row(i).iter().sum();
        targets.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    let weights: Vec<f64> = (0..m).map(|i| targets.row(i).iter().cloned().fold(0.0, f64::max)).collect();
    let labels: Vec<usize> = (0..m).map(|i| i % c).collect();
    let mut one_hot = Tensor::zeros(&[m, c]);
    for (i, &y) in labels.iter().enumerate() {
        one_hot.row_mut(i)[y] = 1.0;
    }
    let mass: Vec<f64> = (0..m).map(|i| targets.row(i)[labels[i]]).collect();

    let model = Mlp::new(MlpSpec::new(d, vec![10], c), 1)?;
    let abstain = Mlp::new(MlpSpec::new(d, vec![10], c).with_abstention(), 1)?;
    let opts = FiniteDiff { samples: usize::MAX, ..FiniteDiff::default() };

    let erm = ProbLoss::new(&x, |p: &Tensor| erm_loss_grad(p, &one_hot));
    let sat = ProbLoss::new(&x, |p: &Tensor| sat_loss_grad(p, &targets, &weights));
    let sce = ProbLoss::new(&x, |p: &Tensor| sce_sat_loss_grad(p, &targets, &weights, SceWeights::default()));
    let trades = TradesObjective {
        inputs: &x,
        adversarial: &adv,
        targets: &targets,
        weights: &weights,
        inv_lambda: 6.0,
    };
    let selective = ProbLoss::new(&x, |p: &Tensor| selective_loss_grad(p, &mass, &labels));

    let plain: [(&str, &dyn Objective); 4] = [("erm", &erm), ("sat", &sat), ("sat+sce", &sce), ("trades", &trades)];
    let mut out = Vec::new();
    for (name, obj) in plain {
        out.push((name, finite_diff_check(&model, obj, opts)?));
    }
    out.push(("selective", finite_diff_check(&abstain, &selective, opts)?));
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    println!("{:<10} {:>8} {:>14} {:>12}", "objective", "probed", "max rel err", "max |grad|");
    for (name, r) in run_example()? {
        println!("{name:<10} {:>8} {:>14.3e} {:>12.4}", r.probed, r.max_relative_error, r.max_gradient);
    }
    Ok(())
}
