use handeye_cov::montecarlo::{eps_metric, random_pose, sample_chain_covariance};
use handeye_cov::noise::rng_from_seed;
use handeye_cov::{compound_poses, propagate_chain, Cov3, NoisyPose};

fn chain(seed: u64, n: usize) -> Vec<NoisyPose> {
    let mut rng = rng_from_seed(seed);
    let c = Cov3::from_diagonal([1e-4, 2e-4, 1.5e-4]);
    let d = Cov3::from_diagonal([2e-4, 1e-4, 1e-4]);
    (0..n).map(|_| NoisyPose::new(random_pose(&mut rng), c, d)).collect()
}

fn errors(poses: &[NoisyPose], seed: u64) -> (f64, f64) {
    let pred = propagate_chain(poses).unwrap();
    let (r, t) = sample_chain_covariance(poses, 100_000, seed).unwrap();
    (
        eps_metric(&pred.cov_rot, &r).unwrap(),
        eps_metric(&pred.cov_trans, &t).unwrap(),
    )
}

#[test]
fn two_pose_chain_matches_sampling() {
    for seed in 0..3 {
        let (er, et) = errors(&chain(seed, 2), seed);
        assert!(er < 0.05 && et < 0.05, "seed {seed}: {er} {et}");
    }
}

#[test]
fn three_pose_chain_matches_sampling_when_first_rotation_is_exact() {
    for seed in 0..3 {
        let mut poses = chain(seed, 3);
        poses[0].cov_rot = Cov3::zeros();
        let (er, et) = errors(&poses, seed);
        assert!(er < 0.05 && et < 0.05, "seed {seed}: {er} {et}");
    }
}

#[test]
fn generic_three_pose_chain_within_chain_tolerance() {
    for seed in 0..3 {
        let (er, et) = errors(&chain(seed, 3), seed);
        assert!(er < 0.05, "seed {seed}: {er}");
        assert!(et < 0.3, "seed {seed}: {et}");
    }
}

#[test]
fn chain_of_one_is_identity_and_fold_is_left_associative() {
    let poses = chain(9, 3);
    assert_eq!(propagate_chain(&poses[..1]).unwrap(), poses[0]);
    let manual = compound_poses(&compound_poses(&poses[0], &poses[1]).unwrap(), &poses[2]).unwrap();
    assert_eq!(propagate_chain(&poses).unwrap(), manual);
    assert!(propagate_chain(&[]).is_err());
}
