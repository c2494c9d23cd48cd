//! The sampled-candidate protocol: a random scorer lands near HR@10 = 0.10,
//! a perfect scorer at 1.0.

use kcrec::eval::{build_eval_instances, score_instance, MetricReport};
use kcrec::train::RatingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> kcrec::Result<()> {
    let users = 1000;
    let train = RatingMatrix::new(users, 300, (0..users).map(|u| (u, u % 300, 1.0)))?;
    let test: Vec<(usize, usize)> = (0..users).map(|u| (u, (u + 7) % 300)).collect();
    let instances = build_eval_instances(&train, &test, 99, 42)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let random: Vec<_> = instances
        .iter()
        .map(|inst| {
            let scores: Vec<f64> = inst.candidates().iter().map(|_| rng.gen()).collect();
            score_instance(inst, &scores)
        })
        .collect::<kcrec::Result<_>>()?;
    println!("random scorer:\n{}", MetricReport::aggregate(&random).to_tsv());

    let perfect: Vec<_> = instances
        .iter()
        .map(|inst| {
            let scores: Vec<f64> =
                inst.candidates().iter().map(|&k| if k == inst.positive { 1.0 } else { 0.0 }).collect();
            score_instance(inst, &scores)
        })
        .collect::<kcrec::Result<_>>()?;
    println!("perfect scorer:\n{}", MetricReport::aggregate(&perfect).to_json());
    Ok(())
}
