//! Fixtures shared by the benchmarks.

use dbd_core::lifting::synthesize_measurements;
use dbd_core::scene::{make_subspaces, sample_scene};
use dbd_core::{Dims, Measurement, Scene, SceneConfig, Subspaces};

/// Scene, subspaces and measurements with two atoms per channel.
pub fn fixture(m: usize, p: usize, nr: usize, k: usize) -> (Scene, Subspaces, Measurement) {
    let dims = Dims::with_samples(m, p, nr, k, 2, 2).expect("valid dims");
    let scene = sample_scene(&SceneConfig::new(dims, 1)).expect("scene");
    let sub = make_subspaces(&dims, 1);
    let y = synthesize_measurements(&scene, &sub).expect("measurement");
    (scene, sub, y)
}
