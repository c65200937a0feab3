use handeye_cov::io::Provenance;
use handeye_cov::io::{DatasetFile, PoseFile, ResultFile};
use handeye_cov::montecarlo::{generate_dataset, random_truth, SyntheticConfig};
use handeye_cov::solve_axxb;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dataset_round_trip_is_bit_exact(seed in any::<u64>(), k in 1usize..12, exp in -9i32..-2) {
        let config = SyntheticConfig { seed, k, lambda: 10f64.powi(exp), ..SyntheticConfig::default() };
        let pairs = generate_dataset(&config, &random_truth(seed), 0);
        let file = DatasetFile::from_pairs(&pairs, true);
        let text = file.to_jsonl();
        let back = DatasetFile::parse(&text, "mem").unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_jsonl(), text);
        let again = back.measurement_set(&Default::default()).unwrap();
        for (a, b) in pairs.iter().zip(&again) {
            prop_assert_eq!(a.a.pose.rotation.to_row_major(), b.a.pose.rotation.to_row_major());
            prop_assert_eq!(a.b.pose.translation, b.b.pose.translation);
            prop_assert_eq!(a.a.cov_rot, b.a.cov_rot);
        }
    }

    #[test]
    fn result_round_trip_is_bit_exact(seed in 0u64..1000) {
        let config = SyntheticConfig { seed, k: 8, ..SyntheticConfig::default() };
        let pairs = generate_dataset(&config, &random_truth(seed), 0);
        let sol = solve_axxb(&pairs).unwrap();
        let file = ResultFile::from_solution(&sol, Provenance::new(None, Some(seed)));
        let back = ResultFile::parse(&file.to_json()).unwrap();
        prop_assert_eq!(&back, &file);
        let pose = back.noisy_pose().unwrap();
        prop_assert_eq!(pose.cov_rot, sol.rotation.cov_rot);
        prop_assert_eq!(PoseFile::from_noisy_pose(&pose).cov_t, file.cov_t);
    }
}
