//! Shared scaffolding for the binary-level tests: a small synthetic dataset
//! (mask volume, foci table, run config) written into a temp directory, and
//! helpers for invoking the compiled `cbmr` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cbmr::nifti::write_volume_f32;
use cbmr_core::mask::{synthetic_ellipsoid_mask, BrainMask};
use cbmr_core::rng::SeedPlan;
use rand_chacha::rand_core::RngCore;

pub struct Demo {
    #[allow(dead_code)] // holds the directory alive for the test's duration
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    pub out: PathBuf,
}

pub fn demo_mask() -> BrainMask {
    synthetic_ellipsoid_mask(
        [20, 24, 20],
        [4.0, 4.0, 4.0],
        [
            [4.0, 0.0, 0.0, -38.0],
            [0.0, 4.0, 0.0, -46.0],
            [0.0, 0.0, 4.0, -38.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        [9.5, 11.5, 9.5],
        [7.5, 9.5, 7.5],
        2500,
    )
    .expect("demo mask parameters are valid")
}

fn write_mask_volume(mask: &BrainMask, path: &Path) {
    let mut grid = vec![0.0f32; mask.dims[0] * mask.dims[1] * mask.dims[2]];
    for &raster in mask.in_mask_rasters() {
        grid[raster as usize] = 1.0;
    }
    write_volume_f32(&grid, mask.dims, mask.voxel_size_mm, mask.affine, path)
        .expect("demo mask volume writes");
}

/// Synthesize 14 studies with 6–12 foci each. The second half of the studies
/// concentrate 60% of their foci inside a 14 mm ball so the dataset carries a
/// genuine hotspot, and each study gets a `sample_size` covariate.
fn write_foci_table(mask: &BrainMask, path: &Path) {
    let centers: Vec<[f64; 3]> = (0..mask.n_voxels())
        .map(|rank| mask.voxel_center_mm(mask.voxel_at_rank(rank)))
        .collect();
    let hot = centers[mask.n_voxels() / 2];
    let hot_ranks: Vec<usize> = (0..centers.len())
        .filter(|&r| {
            let d = [
                centers[r][0] - hot[0],
                centers[r][1] - hot[1],
                centers[r][2] - hot[2],
            ];
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= 14.0 * 14.0
        })
        .collect();

    let mut rng = SeedPlan::new(41).stream("cli-demo-foci", 0);
    let mut table = String::from("study_id,x,y,z,sample_size\n");
    for s in 0..14usize {
        let n_foci = 6 + (s % 7);
        for _ in 0..n_foci {
            let u = rng.next_u64();
            let rank = if s >= 7 && u % 10 < 6 {
                hot_ranks[(u >> 32) as usize % hot_ranks.len()]
            } else {
                (u >> 16) as usize % centers.len()
            };
            let c = centers[rank];
            writeln!(table, "study{:02},{},{},{},{}", s, c[0], c[1], c[2], 16 + 3 * s)
                .expect("writing to a String cannot fail");
        }
    }
    std::fs::write(path, table).expect("demo foci table writes");
}

/// Lay out mask + foci + config in a fresh temp dir. Small realization and
/// permutation counts keep every command in the suite fast.
pub fn demo() -> Demo {
    let dir = tempfile::tempdir().expect("temp dir");
    let mask = demo_mask();
    write_mask_volume(&mask, &dir.path().join("mask.nii.gz"));
    write_foci_table(&mask, &dir.path().join("foci.csv"));
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        r#"seed = 7

[paths]
foci = "foci.csv"
mask = "mask.nii.gz"
output_dir = "out"

[model]
family = "poisson"

[covariates]
terms = [{ column = "sample_size", transform = "sqrt" }]

[simulation]
n_realizations = 8

[ale]
n_iter = 60
"#,
    )
    .expect("demo config writes");
    Demo { out: dir.path().join("out"), dir, config }
}

pub fn cbmr_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbmr"))
}

pub fn run(args: &[&str]) -> Output {
    cbmr_cmd().args(args).output().expect("cbmr binary runs")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "cbmr {:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
