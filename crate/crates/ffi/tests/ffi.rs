use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use handeye_cov::io::DatasetFile;
use handeye_cov::montecarlo::{generate_dataset, random_truth, SyntheticConfig};
use handeye_cov_ffi::*;

fn pose_of(p: &handeye_cov::NoisyPose) -> HecPose {
    HecPose {
        rotation: p.pose.rotation.to_row_major(),
        translation: [p.pose.translation.x, p.pose.translation.y, p.pose.translation.z],
        cov_rot: p.cov_rot.to_row_major(),
        cov_trans: p.cov_trans.to_row_major(),
    }
}

fn last_error() -> String {
    let p = hec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(hec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn calibrate_through_handles_matches_library() {
    let config = SyntheticConfig {
        k: 12,
        ..SyntheticConfig::default()
    };
    let pairs = generate_dataset(&config, &random_truth(2), 0);
    let expected = handeye_cov::solve_axxb(&pairs).unwrap();

    unsafe {
        let ds = hec_dataset_new();
        for p in &pairs {
            assert_eq!(hec_dataset_add_pair(ds, &pose_of(&p.a), &pose_of(&p.b)), HecStatus::Ok);
        }
        assert_eq!(hec_dataset_len(ds), 12);
        let mut sol = ptr::null_mut();
        assert_eq!(hec_calibrate(ds, &mut sol), HecStatus::Ok);
        let mut x = HecPose::default();
        assert_eq!(hec_solution_pose(sol, &mut x), HecStatus::Ok);
        assert_eq!(x, pose_of(&expected.noisy_pose()));
        let (mut ri, mut ti) = (0usize, 0usize);
        assert_eq!(hec_solution_iterations(sol, &mut ri, &mut ti), HecStatus::Ok);
        assert_eq!(
            (ri, ti),
            (expected.rotation.iterations, expected.translation.iterations)
        );
        hec_solution_free(sol);
        hec_dataset_free(ds);
    }
}

#[test]
fn dataset_read_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let pairs = generate_dataset(
        &SyntheticConfig {
            k: 6,
            ..Default::default()
        },
        &random_truth(4),
        0,
    );
    DatasetFile::from_pairs(&pairs, true).write(&path).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(hec_dataset_read(c.as_ptr(), &mut ds), HecStatus::Ok);
        assert_eq!(hec_dataset_len(ds), 6);
        hec_dataset_free(ds);

        let missing = CString::new(dir.path().join("nope.jsonl").to_str().unwrap()).unwrap();
        let mut ds = ptr::null_mut();
        assert_eq!(hec_dataset_read(missing.as_ptr(), &mut ds), HecStatus::Io);
        assert!(ds.is_null());
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut sol = ptr::null_mut();
        assert_eq!(hec_calibrate(ptr::null(), &mut sol), HecStatus::NullPointer);
        assert!(last_error().contains("dataset"));

        let ds = hec_dataset_new();
        let bad = HecPose {
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0],
            ..HecPose::default()
        };
        assert_eq!(hec_dataset_add_pair(ds, &bad, &bad), HecStatus::InvalidInput);
        assert_eq!(hec_dataset_len(ds), 0);

        // rotations about one axis only
        let x = random_truth(1);
        let c = handeye_cov::Cov3::identity().scaled(1e-5);
        for i in 1..5 {
            let a = handeye_cov::DecoupledPose::new(
                handeye_cov::exp_so3(&(fixed_axis() * (0.3 * i as f64))),
                x.translation * i as f64,
            );
            let b = x.inverse().compose(&a).compose(&x);
            let pa = pose_of(&handeye_cov::NoisyPose::new(a, c, c));
            let pb = pose_of(&handeye_cov::NoisyPose::new(b, c, c));
            assert_eq!(hec_dataset_add_pair(ds, &pa, &pb), HecStatus::Ok);
        }
        assert_eq!(hec_calibrate(ds, &mut sol), HecStatus::DegenerateMotion);
        assert!(sol.is_null());
        assert!(last_error().starts_with("degenerate motion"));
        hec_dataset_free(ds);
        hec_dataset_free(ptr::null_mut());
        hec_solution_free(ptr::null_mut());
    }
}

fn fixed_axis() -> handeye_cov::liegroup::AxisAngle {
    random_truth(8).translation.normalize()
}

#[test]
fn compound_and_chain() {
    let p = handeye_cov::NoisyPose::new(
        random_truth(3),
        handeye_cov::Cov3::from_diagonal([1e-4, 2e-4, 3e-4]),
        handeye_cov::Cov3::from_diagonal([3e-4, 2e-4, 1e-4]),
    );
    let q = handeye_cov::NoisyPose::new(random_truth(5), p.cov_trans, p.cov_rot);
    let expected = pose_of(&handeye_cov::compound_poses(&p, &q).unwrap());
    let mut out = HecPose::default();
    unsafe {
        assert_eq!(hec_compound(&pose_of(&p), &pose_of(&q), &mut out), HecStatus::Ok);
        assert_eq!(out, expected);
        let chain = [pose_of(&p), pose_of(&q)];
        let mut out2 = HecPose::default();
        assert_eq!(hec_propagate_chain(chain.as_ptr(), 2, &mut out2), HecStatus::Ok);
        assert_eq!(out2, expected);
        assert_eq!(
            hec_propagate_chain(chain.as_ptr(), 0, &mut out2),
            HecStatus::InvalidInput
        );
        assert_eq!(hec_compound(ptr::null(), &chain[0], &mut out2), HecStatus::NullPointer);
    }
}

#[test]
fn header_is_current_and_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/handeye_cov.h")).unwrap();
    for name in [
        "hec_version",
        "hec_last_error",
        "hec_dataset_new",
        "hec_dataset_read",
        "hec_dataset_add_pair",
        "hec_dataset_len",
        "hec_dataset_free",
        "hec_calibrate",
        "hec_solution_pose",
        "hec_solution_iterations",
        "hec_solution_free",
        "hec_compound",
        "hec_propagate_chain",
        "typedef struct HecDataset HecDataset;",
        "HEC_STATUS_DEGENERATE_MOTION = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "handeye_cov.h"
int use(const char *path) {
    HecDataset *ds = NULL;
    HecSolution *sol = NULL;
    HecPose x;
    if (hec_dataset_read(path, &ds) != HEC_STATUS_OK) return 1;
    HecStatus s = hec_calibrate(ds, &sol);
    if (s == HEC_STATUS_OK) s = hec_solution_pose(sol, &x);
    hec_solution_free(sol);
    hec_dataset_free(ds);
    return (int)s;
}
"#,
    )
    .unwrap();
    for std in ["-std=c99", "-std=c11"] {
        let out = Command::new("cc")
            .args([std, "-Wall", "-Werror", "-pedantic", "-c", "-o"])
            .arg(tmp.path().join("use.o"))
            .arg("-I")
            .arg(format!("{dir}/include"))
            .arg(&src)
            .output()
            .expect("C compiler available");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
