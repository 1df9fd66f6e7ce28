//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use attacknet::data::Label;
use attacknet::layers::{self, BatchNormState, Mode};
use attacknet::{Prng, Tensor};

pub type T64 = Tensor<f64>;

pub fn rand64(rng: &mut Prng, shape: &[usize], lo: f64, hi: f64) -> T64 {
    rng.uniform_tensor(shape, lo, hi).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of a scalar function of a tensor.
pub fn numeric_grad(x: &T64, h: f64, f: impl Fn(&T64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub layer: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

const H: f64 = 1e-5;
const SMOOTH_TOL: f64 = 1e-6;
const KINK_TOL: f64 = 1e-5;

fn pick(rng: &mut Prng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Values spread at least 1e-3 away from 0 so probes never cross the kink.
fn away_from_zero(rng: &mut Prng, shape: &[usize]) -> T64 {
    let mut t = rand64(rng, shape, 0.01, 2.0);
    for v in t.data_mut() {
        if rng.below(2) == 0 {
            *v = -*v;
        }
    }
    t
}

/// Distinct values (pairwise gaps ≥ 0.01) so pooling argmaxes are stable.
fn distinct(rng: &mut Prng, shape: &[usize]) -> T64 {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape, vals).unwrap()
}

fn record(layer: &'static str, tolerance: f64, errors: Vec<f64>) -> GradCheck {
    GradCheck {
        layer,
        cases: errors.len(),
        worst: errors.into_iter().fold(0.0, f64::max),
        tolerance,
    }
}

/// Finite-difference checks of every layer backward on `cases` random
/// shapes each, in f64.
pub fn gradient_suite(seed: u64, cases: usize) -> Vec<GradCheck> {
    let mut rng = Prng::new(seed);
    let mut out = Vec::new();

    // conv: input, weight and bias gradients
    let mut errs = Vec::new();
    for _ in 0..cases {
        let (n, c, f) = (
            pick(&mut rng, 1, 2),
            pick(&mut rng, 1, 3),
            pick(&mut rng, 1, 3),
        );
        let (h, w) = (pick(&mut rng, 1, 5), pick(&mut rng, 1, 5));
        let x = rand64(&mut rng, &[n, c, h, w], -1.0, 1.0);
        let wt = rand64(&mut rng, &[f, c, 3, 3], -1.0, 1.0);
        let b = rand64(&mut rng, &[f], -1.0, 1.0);
        let r = rand64(&mut rng, &[n, f, h, w], -1.0, 1.0);
        let (_, cache) = layers::conv2d_forward(&x, &wt, &b).unwrap();
        let g = layers::conv2d_backward(cache, &r).unwrap();
        let loss = |x: &T64, wt: &T64, b: &T64| {
            dot(layers::conv2d_forward(x, wt, b).unwrap().0.data(), r.data())
        };
        errs.push(rel_err(
            g.dx.data(),
            &numeric_grad(&x, H, |v| loss(v, &wt, &b)),
        ));
        errs.push(rel_err(
            g.dw.data(),
            &numeric_grad(&wt, H, |v| loss(&x, v, &b)),
        ));
        errs.push(rel_err(
            g.db.data(),
            &numeric_grad(&b, H, |v| loss(&x, &wt, v)),
        ));
    }
    out.push(record("conv2d", SMOOTH_TOL, errs));

    // dense
    let mut errs = Vec::new();
    for _ in 0..cases {
        let (n, i, o) = (
            pick(&mut rng, 1, 4),
            pick(&mut rng, 1, 6),
            pick(&mut rng, 1, 5),
        );
        let x = rand64(&mut rng, &[n, i], -1.0, 1.0);
        let wt = rand64(&mut rng, &[i, o], -1.0, 1.0);
        let b = rand64(&mut rng, &[o], -1.0, 1.0);
        let r = rand64(&mut rng, &[n, o], -1.0, 1.0);
        let (_, cache) = layers::dense_forward(&x, &wt, &b).unwrap();
        let g = layers::dense_backward(cache, &r).unwrap();
        let loss = |x: &T64, wt: &T64, b: &T64| {
            dot(layers::dense_forward(x, wt, b).unwrap().0.data(), r.data())
        };
        errs.push(rel_err(
            g.dx.data(),
            &numeric_grad(&x, H, |v| loss(v, &wt, &b)),
        ));
        errs.push(rel_err(
            g.dw.data(),
            &numeric_grad(&wt, H, |v| loss(&x, v, &b)),
        ));
        errs.push(rel_err(
            g.db.data(),
            &numeric_grad(&b, H, |v| loss(&x, &wt, v)),
        ));
    }
    out.push(record("dense", SMOOTH_TOL, errs));

    // batch norm, both modes
    for mode in [Mode::Train, Mode::Infer] {
        let mut errs = Vec::new();
        for _ in 0..cases {
            let (n, c) = (pick(&mut rng, 1, 3), pick(&mut rng, 1, 3));
            let (h, w) = (pick(&mut rng, 2, 4), pick(&mut rng, 1, 4));
            let x = rand64(&mut rng, &[n, c, h, w], -2.0, 2.0);
            let mut state = BatchNormState::<f64>::new(c, 0.1, 1e-5).unwrap();
            state.gamma = rand64(&mut rng, &[c], 0.5, 1.5);
            state.beta = rand64(&mut rng, &[c], -0.5, 0.5);
            state.running_mean = rand64(&mut rng, &[c], -0.5, 0.5);
            state.running_var = rand64(&mut rng, &[c], 0.5, 2.0);
            let r = rand64(&mut rng, &[n, c, h, w], -1.0, 1.0);
            let fwd = |x: &T64, s: &BatchNormState<f64>| match mode {
                Mode::Train => {
                    let (y, cache, _) = layers::batchnorm_forward_train(x, s).unwrap();
                    (y, cache)
                }
                Mode::Infer => layers::batchnorm_forward_infer(x, s).unwrap(),
            };
            let (_, cache) = fwd(&x, &state);
            let g = layers::batchnorm_backward(cache, &r).unwrap();
            let loss_x = |v: &T64| dot(fwd(v, &state).0.data(), r.data());
            let loss_gamma = |v: &T64| {
                let mut s = state.clone();
                s.gamma = v.clone();
                dot(fwd(&x, &s).0.data(), r.data())
            };
            let loss_beta = |v: &T64| {
                let mut s = state.clone();
                s.beta = v.clone();
                dot(fwd(&x, &s).0.data(), r.data())
            };
            errs.push(rel_err(g.dx.data(), &numeric_grad(&x, H, loss_x)));
            errs.push(rel_err(
                g.dgamma.data(),
                &numeric_grad(&state.gamma, H, loss_gamma),
            ));
            errs.push(rel_err(
                g.dbeta.data(),
                &numeric_grad(&state.beta, H, loss_beta),
            ));
        }
        let name = if mode == Mode::Train {
            "batchnorm(train)"
        } else {
            "batchnorm(infer)"
        };
        out.push(record(name, SMOOTH_TOL, errs));
    }

    // leaky relu
    let mut errs = Vec::new();
    for _ in 0..cases {
        let shape = [
            pick(&mut rng, 1, 3),
            pick(&mut rng, 1, 3),
            pick(&mut rng, 1, 4),
            pick(&mut rng, 1, 4),
        ];
        let alpha = rng.uniform_range(0.01, 0.5).unwrap();
        let x = away_from_zero(&mut rng, &shape);
        let r = rand64(&mut rng, &shape, -1.0, 1.0);
        let (_, cache) = layers::leaky_relu_forward(&x, alpha).unwrap();
        let dx = layers::leaky_relu_backward(cache, &r).unwrap();
        let num = numeric_grad(&x, H, |v| {
            dot(
                layers::leaky_relu_forward(v, alpha).unwrap().0.data(),
                r.data(),
            )
        });
        errs.push(rel_err(dx.data(), &num));
    }
    out.push(record("leaky_relu", KINK_TOL, errs));

    // tanh
    let mut errs = Vec::new();
    for _ in 0..cases {
        let shape = [pick(&mut rng, 1, 4), pick(&mut rng, 1, 8)];
        let x = rand64(&mut rng, &shape, -2.0, 2.0);
        let r = rand64(&mut rng, &shape, -1.0, 1.0);
        let (_, cache) = layers::tanh_forward(&x);
        let dx = layers::tanh_backward(cache, &r).unwrap();
        let num = numeric_grad(&x, H, |v| dot(layers::tanh_forward(v).0.data(), r.data()));
        errs.push(rel_err(dx.data(), &num));
    }
    out.push(record("tanh", SMOOTH_TOL, errs));

    // max pool
    let mut errs = Vec::new();
    for _ in 0..cases {
        let shape = [
            pick(&mut rng, 1, 2),
            pick(&mut rng, 1, 3),
            2 * pick(&mut rng, 1, 3),
            2 * pick(&mut rng, 1, 3),
        ];
        let x = distinct(&mut rng, &shape);
        let (y, cache) = layers::maxpool2x2_forward(&x).unwrap();
        let r = rand64(&mut rng, y.shape(), -1.0, 1.0);
        let dx = layers::maxpool2x2_backward(cache, &r).unwrap();
        let num = numeric_grad(&x, H, |v| {
            dot(layers::maxpool2x2_forward(v).unwrap().0.data(), r.data())
        });
        errs.push(rel_err(dx.data(), &num));
    }
    out.push(record("maxpool2x2", KINK_TOL, errs));

    // dropout with a fixed mask stream
    let mut errs = Vec::new();
    for case in 0..cases {
        let shape = [pick(&mut rng, 1, 3), pick(&mut rng, 1, 10)];
        let rate = [0.0, 0.25, 0.5][case % 3];
        let x = rand64(&mut rng, &shape, -1.0, 1.0);
        let r = rand64(&mut rng, &shape, -1.0, 1.0);
        let mask_seed = rng.next_u64();
        let fwd = |v: &T64| {
            layers::dropout_forward(v, rate, Mode::Train, &mut Prng::new(mask_seed)).unwrap()
        };
        let dx = layers::dropout_backward(fwd(&x).1, &r).unwrap();
        let num = numeric_grad(&x, H, |v| dot(fwd(v).0.data(), r.data()));
        errs.push(rel_err(dx.data(), &num));
    }
    out.push(record("dropout", SMOOTH_TOL, errs));

    // residual add
    let mut errs = Vec::new();
    for _ in 0..cases {
        let shape = [pick(&mut rng, 1, 3), pick(&mut rng, 1, 6)];
        let a = rand64(&mut rng, &shape, -1.0, 1.0);
        let b = rand64(&mut rng, &shape, -1.0, 1.0);
        let r = rand64(&mut rng, &shape, -1.0, 1.0);
        let (da, db) = layers::residual_add_backward(&r);
        errs.push(rel_err(
            da.data(),
            &numeric_grad(&a, H, |v| {
                dot(layers::residual_add(v, &b).unwrap().data(), r.data())
            }),
        ));
        errs.push(rel_err(
            db.data(),
            &numeric_grad(&b, H, |v| {
                dot(layers::residual_add(&a, v).unwrap().data(), r.data())
            }),
        ));
    }
    out.push(record("residual_add", SMOOTH_TOL, errs));

    // softmax + cross-entropy, gradient at the logits
    let mut errs = Vec::new();
    for _ in 0..cases {
        let (n, k) = (pick(&mut rng, 1, 5), pick(&mut rng, 2, 4));
        let z = rand64(&mut rng, &[n, k], -3.0, 3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let (_, dz) = layers::cross_entropy_loss(&layers::softmax(&z).unwrap(), &labels).unwrap();
        let num = numeric_grad(&z, H, |v| {
            layers::cross_entropy_loss(&layers::softmax(v).unwrap(), &labels)
                .unwrap()
                .0
        });
        errs.push(rel_err(dz.data(), &num));
    }
    out.push(record("softmax_cross_entropy", SMOOTH_TOL, errs));

    out
}

/// Direct 3×3, stride 1, zero-padded convolution by nested loops.
pub fn conv_direct(x: &T64, w: &T64, b: &T64) -> T64 {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let f = w.shape()[0];
    let mut y = vec![0.0; n * f * h * wd];
    for s in 0..n {
        for o in 0..f {
            for i in 0..h {
                for j in 0..wd {
                    let mut acc = b.data()[o];
                    for ch in 0..c {
                        for di in 0..3 {
                            for dj in 0..3 {
                                let (ii, jj) =
                                    (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                    continue;
                                }
                                let xv =
                                    x.data()[((s * c + ch) * h + ii as usize) * wd + jj as usize];
                                let wv = w.data()[((o * c + ch) * 3 + di) * 3 + dj];
                                acc += xv * wv;
                            }
                        }
                    }
                    y[((s * f + o) * h + i) * wd + j] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, f, h, wd], y).unwrap()
}

/// Worst elementwise gap between the f32 convolution and the f64 direct
/// oracle over `cases` random configurations.
pub fn conv_oracle_gap(seed: u64, cases: usize) -> f64 {
    let mut rng = Prng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (n, c, f) = (
            pick(&mut rng, 1, 3),
            pick(&mut rng, 1, 8),
            pick(&mut rng, 1, 8),
        );
        let (h, w) = (pick(&mut rng, 1, 12), pick(&mut rng, 1, 12));
        let x = rand64(&mut rng, &[n, c, h, w], -1.0, 1.0);
        let wt = rand64(&mut rng, &[f, c, 3, 3], -1.0, 1.0);
        let b = rand64(&mut rng, &[f], -1.0, 1.0);
        let want = conv_direct(&x, &wt, &b);
        let (got, _) =
            layers::conv2d_forward(&x.cast::<f32>(), &wt.cast::<f32>(), &b.cast::<f32>()).unwrap();
        for (g, w) in got.data().iter().zip(want.data()) {
            worst = worst.max((*g as f64 - w).abs());
        }
    }
    worst
}

/// Metric values recomputed from scratch by scanning the pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveMetrics {
    pub precision: f32,
    pub recall: f32,
    pub f1: f32,
    pub far: f32,
    pub frr: f32,
    pub hter: f32,
}

pub fn naive_metrics(preds: &[Label], labels: &[Label]) -> NaiveMetrics {
    let count = |want_label: Label, want_pred: Label| {
        let mut k = 0u64;
        for i in 0..preds.len() {
            if labels[i] == want_label && preds[i] == want_pred {
                k += 1;
            }
        }
        k
    };
    let tp = count(Label::Bonafide, Label::Bonafide);
    let fn_ = count(Label::Bonafide, Label::Attack);
    let fp = count(Label::Attack, Label::Bonafide);
    let tn = count(Label::Attack, Label::Attack);
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = div(tp, tp + fp);
    let r = div(tp, tp + fn_);
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    let far = div(fp, fp + tn) as f32;
    let frr = div(fn_, tp + fn_) as f32;
    NaiveMetrics {
        precision: p as f32,
        recall: r as f32,
        f1: f1 as f32,
        far,
        frr,
        hter: (far + frr) / 2.0,
    }
}

pub fn random_labels(rng: &mut Prng, n: usize) -> Vec<Label> {
    (0..n).map(|_| Label::ALL[rng.below(2)]).collect()
}

/// Compares every metric of `EvalReport` and the free functions with the
/// naive recount over `trials` random vectors. Returns the mismatch count.
pub fn metrics_oracle_mismatches(seed: u64, trials: usize) -> usize {
    use attacknet::metrics::{confusion, far, frr, hter, EvalReport};
    let mut rng = Prng::new(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let n = 1 + rng.below(200);
        let labels = random_labels(&mut rng, n);
        let preds = random_labels(&mut rng, n);
        let want = naive_metrics(&preds, &labels);
        let cm = confusion(&preds, &labels).unwrap();
        let both = cm.positives() > 0 && cm.negatives() > 0;
        if !both {
            if far(&cm).is_ok() == (cm.negatives() == 0)
                || frr(&cm).is_ok() == (cm.positives() == 0)
            {
                bad += 1;
            }
            if cm.positives() > 0 && frr(&cm).unwrap() != want.frr {
                bad += 1;
            }
            if cm.negatives() > 0 && far(&cm).unwrap() != want.far {
                bad += 1;
            }
            continue;
        }
        let r = EvalReport::from_predictions(&preds, &labels).unwrap();
        let got = [
            r.bonafide.precision.value,
            r.bonafide.recall.value,
            r.bonafide.f1.value,
            r.far,
            r.frr,
            r.hter,
            hter(&cm).unwrap(),
        ];
        let exp = [
            want.precision,
            want.recall,
            want.f1,
            want.far,
            want.frr,
            want.hter,
            want.hter,
        ];
        if got
            .iter()
            .zip(&exp)
            .any(|(g, e)| g.to_bits() != e.to_bits())
        {
            bad += 1;
        }
        let swapped: Vec<Label> = labels.iter().map(|l| l.other()).collect();
        let swapped_preds: Vec<Label> = preds.iter().map(|l| l.other()).collect();
        let att = naive_metrics(&swapped_preds, &swapped);
        let got_att = [
            r.attack.precision.value,
            r.attack.recall.value,
            r.attack.f1.value,
        ];
        if got_att
            .iter()
            .zip([att.precision, att.recall, att.f1])
            .any(|(g, e)| g.to_bits() != e.to_bits())
        {
            bad += 1;
        }
    }
    bad
}

/// Probability that a random bonafide outscores a random attack, ties
/// counting one half.
pub fn pairwise_auc(scores: &[f32], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == Label::Bonafide && labels[j] == Label::Attack {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}
