//! Finite-difference validation of analytic gradients.
//!
//! The checker rebuilds the forward graph through a caller-supplied closure,
//! so it exercises exactly the code path under test: once for the analytic
//! backward pass, then twice per parameter scalar for the central difference
//! `(f(x + eps) - f(x - eps)) / (2 eps)`.
//!
//! Errors are relative with a denominator floor, so near-zero gradient pairs
//! are compared absolutely instead of dividing by noise.

use super::element::Element;
use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use super::NnError;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Half-width of the central difference.
    pub epsilon: f64,
    /// Maximum tolerated relative error.
    pub tolerance: f64,
    /// Denominator floor; pairs smaller than this are compared absolutely.
    pub denom_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            denom_floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub mismatches: Vec<GradMismatch>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares analytic gradients against central differences for every scalar
/// of every parameter in `store`. `build` must construct the scalar loss
/// from the store's current values and must be deterministic.
pub fn check<E, F>(
    store: &mut ParamStore<E>,
    mut build: F,
    cfg: &GradCheckConfig,
) -> Result<GradReport, NnError>
where
    E: Element,
    F: FnMut(&ParamStore<E>, &mut Tape<E>) -> Result<NodeId, NnError>,
{
    let mut tape = Tape::new();
    let loss = build(store, &mut tape)?;
    let grads = tape.backward(loss)?;
    drop(tape);

    let names: Vec<String> = store.names().map(str::to_owned).collect();
    let mut report = GradReport::default();
    for name in names {
        let n = store.value(&name).expect("name from this store").numel();
        for i in 0..n {
            let orig = store.value(&name).expect("checked above").data()[i];
            let eps = E::from_f64(cfg.epsilon);

            store.value_mut(&name).expect("checked above").data_mut()[i] = orig + eps;
            let plus = eval_loss(store, &mut build)?;
            store.value_mut(&name).expect("checked above").data_mut()[i] = orig - eps;
            let minus = eval_loss(store, &mut build)?;
            store.value_mut(&name).expect("checked above").data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let analytic = grads
                .get(&name)
                .map_or(0.0, |g| g.data()[i].to_f64());
            let denom = analytic.abs().max(numeric.abs()).max(cfg.denom_floor);
            let rel_err = (analytic - numeric).abs() / denom;

            report.checked += 1;
            if rel_err > report.max_rel_err {
                report.max_rel_err = rel_err;
            }
            if rel_err > cfg.tolerance {
                report.mismatches.push(GradMismatch {
                    param: name.clone(),
                    index: i,
                    analytic,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    Ok(report)
}

fn eval_loss<E, F>(store: &ParamStore<E>, build: &mut F) -> Result<f64, NnError>
where
    E: Element,
    F: FnMut(&ParamStore<E>, &mut Tape<E>) -> Result<NodeId, NnError>,
{
    let mut tape = Tape::new();
    let loss = build(store, &mut tape)?;
    let v = tape.value(loss);
    if v.numel() != 1 {
        return Err(NnError::ShapeMismatch {
            op: "gradcheck",
            detail: format!("loss must be scalar, got {:?}", v.shape()),
        });
    }
    Ok(v.item().to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn assert_passes<F>(store: &mut ParamStore<f64>, build: F)
    where
        F: FnMut(&ParamStore<f64>, &mut Tape<f64>) -> Result<NodeId, NnError>,
    {
        let report = check(store, build, &GradCheckConfig::default()).unwrap();
        assert!(report.checked > 0);
        assert!(
            report.passed(),
            "max rel err {:.3e}, first mismatch {:?}",
            report.max_rel_err,
            report.mismatches.first()
        );
    }

    #[test]
    fn dense_relu_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        store.insert("w1", rand_tensor(&[4, 5], &mut rng));
        store.insert("b1", rand_tensor(&[5], &mut rng));
        store.insert("w2", rand_tensor(&[5, 2], &mut rng));
        store.insert("b2", rand_tensor(&[2], &mut rng));
        let x = rand_tensor(&[3, 4], &mut rng);
        assert_passes(&mut store, move |s, t| {
            let xin = t.input(x.clone())?;
            let w1 = s.tape_param(t, "w1")?;
            let b1 = s.tape_param(t, "b1")?;
            let w2 = s.tape_param(t, "w2")?;
            let b2 = s.tape_param(t, "b2")?;
            let h = t.dense(xin, w1, b1)?;
            let h = t.relu(h)?;
            let y = t.dense(h, w2, b2)?;
            t.reduce_mean_all(y)
        });
    }

    #[test]
    fn conv_stride_one_and_two() {
        for stride in [1usize, 2] {
            let mut rng = ChaCha8Rng::seed_from_u64(23 + stride as u64);
            let mut store = ParamStore::new();
            store.insert("w", rand_tensor(&[3, 3, 2, 3], &mut rng));
            store.insert("b", rand_tensor(&[3], &mut rng));
            let x = rand_tensor(&[6, 5, 2], &mut rng);
            assert_passes(&mut store, move |s, t| {
                let xin = t.input(x.clone())?;
                let w = s.tape_param(t, "w")?;
                let b = s.tape_param(t, "b")?;
                let y = t.conv2d(xin, w, b, stride)?;
                t.reduce_mean_all(y)
            });
        }
    }

    #[test]
    fn max_pool_after_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut store = ParamStore::new();
        store.insert("w", rand_tensor(&[3, 3, 1, 2], &mut rng));
        store.insert("b", rand_tensor(&[2], &mut rng));
        let x = rand_tensor(&[6, 6, 1], &mut rng);
        assert_passes(&mut store, move |s, t| {
            let xin = t.input(x.clone())?;
            let w = s.tape_param(t, "w")?;
            let b = s.tape_param(t, "b")?;
            let y = t.conv2d(xin, w, b, 1)?;
            let p = t.max_pool2(y)?;
            t.reduce_mean_all(p)
        });
    }

    #[test]
    fn gather_concat_reshape() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut store = ParamStore::new();
        store.insert("emb", rand_tensor(&[5, 3], &mut rng));
        store.insert("w", rand_tensor(&[6, 2], &mut rng));
        store.insert("b", rand_tensor(&[2], &mut rng));
        assert_passes(&mut store, move |s, t| {
            let emb = s.tape_param(t, "emb")?;
            let w = s.tape_param(t, "w")?;
            let b = s.tape_param(t, "b")?;
            // Repeated indices make the scatter-add path do real work.
            let left = t.gather_rows(emb, &[0, 0, 3, 4])?;
            let right = t.gather_rows(emb, &[1, 2, 2, 0])?;
            let pair = t.concat_cols(&[left, right])?;
            let y = t.dense(pair, w, b)?;
            let flat = t.reshape(y, &[8, 1])?;
            t.reduce_mean_all(flat)
        });
    }

    #[test]
    fn reductions_along_middle_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut store = ParamStore::new();
        store.insert("x", rand_tensor(&[3, 4, 2], &mut rng));
        assert_passes(&mut store, |s, t| {
            let x = s.tape_param(t, "x")?;
            let smax = t.reduce_max_axis(x, 1)?;
            let smean = t.reduce_mean_axis(x, 1)?;
            let ssum = t.reduce_sum_axis(x, 1)?;
            let a = t.add(smax, smean)?;
            let b = t.mul(a, ssum)?;
            t.reduce_mean_all(b)
        });
    }

    #[test]
    fn scale_rows_with_exp_weights() {
        // The GravNet weighting pattern: rows scaled by exp(-10 d^2) where d
        // depends on learned values, so the gradient must flow into both.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut store = ParamStore::new();
        store.insert("feat", rand_tensor(&[4, 3], &mut rng));
        store.insert("dist", rand_tensor(&[4], &mut rng));
        assert_passes(&mut store, |s, t| {
            let feat = s.tape_param(t, "feat")?;
            let dist = s.tape_param(t, "dist")?;
            let d2 = t.mul(dist, dist)?;
            let neg = t.scale(d2, -10.0)?;
            let w = t.exp(neg)?;
            let scaled = t.scale_rows(feat, w)?;
            t.reduce_mean_all(scaled)
        });
    }

    #[test]
    fn softmax_xent_against_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut store = ParamStore::new();
        store.insert("logits", rand_tensor(&[6, 2], &mut rng));
        assert_passes(&mut store, |s, t| {
            let l = s.tape_param(t, "logits")?;
            t.softmax_xent_mean(l, &[0, 1, 1, 0, 1, 0])
        });
    }

    #[test]
    fn sub_and_scale_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let mut store = ParamStore::new();
        store.insert("a", rand_tensor(&[3, 3], &mut rng));
        store.insert("b", rand_tensor(&[3, 3], &mut rng));
        assert_passes(&mut store, |s, t| {
            let a = s.tape_param(t, "a")?;
            let b = s.tape_param(t, "b")?;
            let d = t.sub(a, b)?;
            let sq = t.mul(d, d)?;
            let scaled = t.scale(sq, 0.37)?;
            t.reduce_mean_all(scaled)
        });
    }

    #[test]
    fn detects_a_broken_gradient() {
        // A loss whose build closure disagrees with the recorded graph's
        // gradient: scale by a value that flips between calls would break
        // determinism, so instead compare against a deliberately wrong
        // analytic result by checking that an offset loss fails.
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(&[1], vec![0.5]).unwrap());
        let mut first = true;
        let report = check(
            &mut store,
            move |s, t| {
                let w = s.tape_param(t, "w")?;
                // First call (analytic pass) sees loss = w; later FD calls
                // see loss = 2w, so numeric and analytic gradients differ.
                let factor = if first { 1.0 } else { 2.0 };
                first = false;
                let y = t.scale(w, factor)?;
                t.reduce_mean_all(y)
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed());
        assert_eq!(report.mismatches[0].param, "w");
    }
}
