//! The synthetic test set and its cached golden outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Result};
use uvguard_core::exec::Executor;
use uvguard_core::layers::{forward, LayerDesc, NonlinearKind};
use uvguard_core::rng::hash_words;
use uvguard_core::tensor::{random_tensor, Dist};
use uvguard_core::{ExecContext, ModelGraph, Scalar, Seed, Tensor};

use crate::shvt;

pub const TEST_SET_SIZE: usize = 100;

/// An unbounded stream of uniform `[-1, 1)` inputs. Input `i` depends only on
/// the seed, the shape and `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSet {
    pub shape: Vec<usize>,
    pub seed: Seed,
}

impl TestSet {
    pub fn new(shape: &[usize], seed: Seed) -> Self {
        TestSet {
            shape: shape.to_vec(),
            seed,
        }
    }

    pub fn input<T: Scalar>(&self, i: usize) -> Tensor<T> {
        random_tensor(&self.shape, self.seed.derive(i as u64), Dist::Uniform).expect("non-empty input shape")
    }

    pub fn inputs<T: Scalar>(&self, n: usize) -> Vec<Tensor<T>> {
        (0..n).map(|i| self.input(i)).collect()
    }
}

/// Identifies a (model, test set, count, precision) combination.
pub fn fingerprint<T: Scalar>(model: &ModelGraph<T>, set: &TestSet, n: usize) -> u64 {
    let mut words = vec![T::BITS as u64, n as u64, set.seed.0];
    words.extend(set.shape.iter().map(|&d| d as u64));
    words.extend(model.input_shape().iter().map(|&d| d as u64));
    for layer in model.layers() {
        let (w, b) = match layer {
            LayerDesc::Conv(c) => (&c.weights, &c.bias),
            LayerDesc::Fc(f) => (&f.weights, &f.bias),
            LayerDesc::Nonlinear(NonlinearKind::Relu) => {
                words.push(1);
                continue;
            }
            LayerDesc::Nonlinear(NonlinearKind::MaxPool(p)) => {
                words.extend([2, p.window as u64, p.stride as u64]);
                continue;
            }
            LayerDesc::Nonlinear(NonlinearKind::Softmax) => {
                words.push(3);
                continue;
            }
        };
        words.extend(w.shape().iter().map(|&d| d as u64));
        words.push(hash_words(&w.data().iter().map(|v| v.to_bits_u64()).collect::<Vec<_>>()));
        words.push(hash_words(&b.data().iter().map(|v| v.to_bits_u64()).collect::<Vec<_>>()));
    }
    hash_words(&words)
}

/// Fault-free outputs of the first `n` inputs.
pub fn golden<T: Scalar, E: Executor>(model: &ModelGraph<T>, set: &TestSet, n: usize, exec: &E) -> Result<Vec<Tensor<T>>> {
    let out: uvguard_core::Result<Vec<Tensor<T>>> = exec
        .map(n, |i| forward(model, &set.input(i), &ExecContext::fault_free()))
        .into_iter()
        .collect();
    Ok(out?)
}

pub fn golden_path<T: Scalar>(dir: &Path, model: &ModelGraph<T>, set: &TestSet, n: usize) -> PathBuf {
    dir.join(format!("golden-{}-{:016x}.shvt", T::NAME, fingerprint(model, set, n)))
}

/// Golden outputs, read from `dir` when a matching cache file exists and
/// computed and written there otherwise.
pub fn golden_cached<T: Scalar, E: Executor>(
    model: &ModelGraph<T>,
    set: &TestSet,
    n: usize,
    dir: &Path,
    exec: &E,
) -> Result<Vec<Tensor<T>>> {
    ensure!(n > 0, "test set is empty");
    let path = golden_path(dir, model, set, n);
    let out_shape = model.output_shape();
    let mut stacked_shape = vec![n];
    stacked_shape.extend(&out_shape);
    if path.exists() {
        if let Ok(t) = shvt::load::<T>(&path) {
            if t.shape() == stacked_shape.as_slice() {
                return Ok(unstack(t, &out_shape));
            }
        }
    }
    let outs = golden(model, set, n, exec)?;
    fs::create_dir_all(dir)?;
    let flat: Vec<T> = outs.iter().flat_map(|t| t.data().iter().copied()).collect();
    shvt::save(&path, &Tensor::new(&stacked_shape, flat)?)?;
    Ok(outs)
}

fn unstack<T: Scalar>(t: Tensor<T>, shape: &[usize]) -> Vec<Tensor<T>> {
    let per: usize = shape.iter().product();
    t.data()
        .chunks_exact(per)
        .map(|c| Tensor::new(shape, c.to_vec()).expect("chunk matches shape"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use uvguard_core::exec::Sequential;
    use uvguard_core::layers::build_lenet;

    #[test]
    fn inputs_are_a_pure_function_of_index() {
        let s = TestSet::new(&[1, 4, 4], Seed(9));
        let a: Vec<Tensor> = s.inputs(5);
        assert_eq!(s.input::<f64>(3), a[3]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn cache_is_written_and_reused() {
        let dir = tempfile::tempdir().unwrap();
        let m: ModelGraph = build_lenet(Seed(2)).unwrap();
        let set = TestSet::new(m.input_shape(), Seed(4));
        let g = golden_cached(&m, &set, 6, dir.path(), &Sequential).unwrap();
        let path = golden_path(dir.path(), &m, &set, 6);
        assert!(path.exists());
        assert_eq!(g, golden(&m, &set, 6, &Sequential).unwrap());
        // a tampered cache file with the right shape is trusted
        let cached = shvt::load::<f64>(&path).unwrap();
        assert_eq!(cached.shape(), [6, 1, 10]);
        let mut t = cached.into_data();
        t[0] = 42.0;
        shvt::save(&path, &Tensor::new(&[6, 1, 10], t).unwrap()).unwrap();
        let again = golden_cached(&m, &set, 6, dir.path(), &Sequential).unwrap();
        assert_eq!(again[0].data()[0], 42.0);
    }

    #[test]
    fn fingerprint_tracks_weights_and_count() {
        let a: ModelGraph = build_lenet(Seed(2)).unwrap();
        let b: ModelGraph = build_lenet(Seed(3)).unwrap();
        let set = TestSet::new(a.input_shape(), Seed(4));
        assert_ne!(fingerprint(&a, &set, 10), fingerprint(&b, &set, 10));
        assert_ne!(fingerprint(&a, &set, 10), fingerprint(&a, &set, 11));
        let a32: ModelGraph<f32> = build_lenet(Seed(2)).unwrap();
        assert_ne!(fingerprint(&a, &set, 10), fingerprint(&a32, &set, 10));
    }
}
