//! Central finite-difference checks of the tape.
//!
//! Each case draws random inputs, builds an expression on the tape, reduces a
//! non-scalar result with a fixed random weighting, and compares the
//! reverse-mode gradient of every input with `(f(x+h) − f(x−h)) / 2h`. The
//! error of one trial is `‖g_tape − g_fd‖₂ / max(‖g_tape‖₂, ‖g_fd‖₂, 1e-8)`
//! over all input coordinates.
//!
//! A trial whose inputs sit within a step of a ReLU kink is not a valid
//! sample of a derivative. Such trials are detected by the central
//! difference changing when the step is halved, counted, and redrawn.

use graphsteal::attack::{mse_alignment_loss, rank_alignment_loss};
use graphsteal::diff::{cross_entropy, mse, soft_cross_entropy, Tape, Tensor, Var};
use graphsteal::model::{forward_tape, Arch, GraphBatch, ModelConfig, ModelState};
use graphsteal::rng::{seeded, Rng as Pcg};
use graphsteal::Result;
use rand::Rng;

use super::{random_graph, random_tensor};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

pub struct Case {
    pub name: &'static str,
    pub make: fn(&mut Pcg) -> (Vec<Tensor>, Build),
}

#[derive(Debug)]
pub struct Outcome {
    pub name: &'static str,
    pub trials: usize,
    pub redrawn: usize,
    pub worst: f64,
}

fn reduced(tape: &mut Tape, out: Var, weights: &mut Option<Tensor>, rng: &mut Pcg) -> Var {
    let shape = tape.value(out).shape().to_vec();
    if shape == [1, 1] {
        return out;
    }
    let w = weights.get_or_insert_with(|| random_tensor(rng, shape[0], shape[1], -1.0, 1.0)).clone();
    let m = tape.mul_const(out, w).unwrap();
    tape.sum_all(m).unwrap()
}

fn eval(build: &Build, inputs: &[Tensor], weights: &mut Option<Tensor>, rng: &mut Pcg) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let s = reduced(&mut tape, out, weights, rng);
    tape.value(s).item()
}

/// Relative error of one trial, or `None` when the finite differences are
/// unstable under halving the step (a kink within reach).
pub fn check_once(inputs: &[Tensor], build: &Build, rng: &mut Pcg) -> Option<f64> {
    let mut weights = None;
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let s = reduced(&mut tape, out, &mut weights, rng);
    let grads = tape.backward(s).unwrap();
    let mut fd_at = |i: usize, k: usize, h: f64| {
        let mut plus = inputs.to_vec();
        plus[i].data_mut()[k] += h;
        let mut minus = inputs.to_vec();
        minus[i].data_mut()[k] -= h;
        (eval(build, &plus, &mut weights, rng) - eval(build, &minus, &mut weights, rng)) / (2.0 * h)
    };
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    let mut unstable = false;
    for (i, x) in inputs.iter().enumerate() {
        let g = grads.get_or_zeros(vars[i], x);
        for k in 0..x.len() {
            let fd = fd_at(i, k, STEP);
            let half = fd_at(i, k, STEP / 2.0);
            if (fd - half).abs() > 1e-6 * fd.abs().max(1.0) {
                unstable = true;
            }
            let an = g.data()[k];
            diff2 += (an - fd).powi(2);
            a2 += an * an;
            n2 += fd * fd;
        }
    }
    (!unstable).then(|| diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-8))
}

/// Runs `trials` valid trials; kinked draws are redrawn, at most `trials` times.
pub fn run_case(case: &Case, trials: usize, seed: u64) -> Outcome {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    let (mut done, mut redrawn) = (0, 0);
    while done < trials {
        let (inputs, build) = (case.make)(&mut rng);
        match check_once(&inputs, &build, &mut rng) {
            Some(e) => {
                worst = worst.max(e);
                done += 1;
            }
            None => {
                redrawn += 1;
                assert!(redrawn <= trials, "{}: finite differences unstable on every draw", case.name);
            }
        }
    }
    Outcome {
        name: case.name,
        trials,
        redrawn,
        worst,
    }
}

fn dims(rng: &mut Pcg) -> (usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5))
}

/// Uniform in ±[lo, hi], away from a kink at zero.
fn away_from_zero(rng: &mut Pcg, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..r * c)
        .map(|_| {
            let m = rng.gen_range(lo..hi);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(r, c, data).unwrap()
}

fn distribution_rows(rng: &mut Pcg, r: usize, c: usize) -> Tensor {
    let mut t = random_tensor(rng, r, c, 0.01, 1.0);
    for i in 0..r {
        let s: f64 = t.row_slice(i).iter().sum();
        for j in 0..c {
            t.set(i, j, t.get(i, j) / s);
        }
    }
    t
}

fn model_case(rng: &mut Pcg, arch: Arch) -> (Vec<Tensor>, Build) {
    let cfg = ModelConfig {
        arch,
        num_layers: rng.gen_range(1..4),
        hidden_dim: rng.gen_range(2..6),
        num_classes: rng.gen_range(2..4),
        feature_dim: 3,
        seed: rng.gen(),
    };
    let state = ModelState::init(&cfg).unwrap();
    let graphs: Vec<_> = (0..rng.gen_range(1..4))
        .map(|_| {
            let n = rng.gen_range(1..7);
            random_graph(rng, n, 0.4, 3)
        })
        .collect();
    let labels: Vec<usize> = graphs.iter().map(|_| rng.gen_range(0..cfg.num_classes)).collect();
    // Zero-initialised biases put ReLU inputs exactly on the kink for nodes
    // whose hidden vector is all zero, so evaluate at a jittered point.
    let inputs: Vec<Tensor> = state
        .params()
        .into_iter()
        .map(|p| {
            let noise = random_tensor(rng, p.rows(), p.cols(), -0.1, 0.1);
            Tensor::new(p.rows(), p.cols(), p.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).unwrap()
        })
        .collect();
    let build: Build = Box::new(move |tape, vars| {
        let refs: Vec<_> = graphs.iter().collect();
        let batch = GraphBatch::new(&refs, 3)?;
        let out = forward_tape(tape, vars, &state, &batch)?;
        cross_entropy(tape, out.logits, &labels)
    });
    (inputs, build)
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            make: |rng| {
                let (r, k) = dims(rng);
                let c = rng.gen_range(1..5);
                let a = random_tensor(rng, r, k, -1.0, 1.0);
                let b = random_tensor(rng, k, c, -1.0, 1.0);
                (vec![a, b], Box::new(|t, v| t.matmul(v[0], v[1])))
            },
        },
        Case {
            name: "add",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let b = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a, b], Box::new(|t, v| t.add(v[0], v[1])))
            },
        },
        Case {
            name: "sub",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let b = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a, b], Box::new(|t, v| t.sub(v[0], v[1])))
            },
        },
        Case {
            name: "mul",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let b = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a, b], Box::new(|t, v| t.mul(v[0], v[1])))
            },
        },
        Case {
            name: "mul_self",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a], Box::new(|t, v| t.mul(v[0], v[0])))
            },
        },
        Case {
            name: "add_row",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let b = random_tensor(rng, 1, c, -1.0, 1.0);
                (vec![a, b], Box::new(|t, v| t.add_row(v[0], v[1])))
            },
        },
        Case {
            name: "scale",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let s = rng.gen_range(-2.0..2.0);
                (vec![a], Box::new(move |t, v| t.scale(v[0], s)))
            },
        },
        Case {
            name: "scale_by",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let s = random_tensor(rng, 1, 1, -2.0, 2.0);
                (vec![a, s], Box::new(|t, v| t.scale_by(v[0], v[1])))
            },
        },
        Case {
            name: "scale_rows",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let f: Vec<f64> = (0..r).map(|_| rng.gen_range(-2.0..2.0)).collect();
                (vec![a], Box::new(move |t, v| t.scale_rows(v[0], f.clone())))
            },
        },
        Case {
            name: "mul_const",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let k = random_tensor(rng, r, c, -2.0, 2.0);
                (vec![a], Box::new(move |t, v| t.mul_const(v[0], k.clone())))
            },
        },
        Case {
            name: "relu",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = away_from_zero(rng, r, c, 0.01, 2.0);
                (vec![a], Box::new(|t, v| t.relu(v[0])))
            },
        },
        Case {
            name: "sigmoid",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -5.0, 5.0);
                (vec![a], Box::new(|t, v| t.sigmoid(v[0])))
            },
        },
        Case {
            name: "softplus",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -8.0, 8.0);
                (vec![a], Box::new(|t, v| t.softplus(v[0])))
            },
        },
        Case {
            name: "log",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, 0.2, 3.0);
                (vec![a], Box::new(|t, v| t.log(v[0])))
            },
        },
        Case {
            name: "row_sum",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a], Box::new(|t, v| t.row_sum(v[0])))
            },
        },
        Case {
            name: "row_mean",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a], Box::new(|t, v| t.row_mean(v[0])))
            },
        },
        Case {
            name: "sum_all",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a], Box::new(|t, v| t.sum_all(v[0])))
            },
        },
        Case {
            name: "mean_all",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a], Box::new(|t, v| t.mean_all(v[0])))
            },
        },
        Case {
            name: "gather_rows",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let idx: Vec<usize> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..r)).collect();
                (vec![a], Box::new(move |t, v| t.gather_rows(v[0], idx.clone())))
            },
        },
        Case {
            name: "scatter_add_rows",
            make: |rng| {
                let (r, c) = dims(rng);
                let out_rows = rng.gen_range(1..5);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let idx: Vec<usize> = (0..r).map(|_| rng.gen_range(0..out_rows)).collect();
                (vec![a], Box::new(move |t, v| t.scatter_add_rows(v[0], idx.clone(), out_rows)))
            },
        },
        Case {
            name: "softmax_rows",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -3.0, 3.0);
                (vec![a], Box::new(|t, v| t.softmax_rows(v[0])))
            },
        },
        Case {
            name: "log_softmax_rows",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -3.0, 3.0);
                (vec![a], Box::new(|t, v| t.log_softmax_rows(v[0])))
            },
        },
        Case {
            name: "concat_rows",
            make: |rng| {
                let c = rng.gen_range(1..5);
                let parts: Vec<Tensor> = (0..rng.gen_range(1..4))
                    .map(|_| {
                        let r = rng.gen_range(1..4);
                        random_tensor(rng, r, c, -1.0, 1.0)
                    })
                    .collect();
                (parts, Box::new(|t, v| t.concat_rows(v)))
            },
        },
        Case {
            name: "pick",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let cols: Vec<usize> = (0..r).map(|_| rng.gen_range(0..c)).collect();
                (vec![a], Box::new(move |t, v| t.pick(v[0], cols.clone())))
            },
        },
        Case {
            name: "cross_entropy",
            make: |rng| {
                let r = rng.gen_range(1..5);
                let c = rng.gen_range(2..5);
                let a = random_tensor(rng, r, c, -3.0, 3.0);
                let y: Vec<usize> = (0..r).map(|_| rng.gen_range(0..c)).collect();
                (vec![a], Box::new(move |t, v| cross_entropy(t, v[0], &y)))
            },
        },
        Case {
            name: "soft_cross_entropy",
            make: |rng| {
                let r = rng.gen_range(1..5);
                let c = rng.gen_range(2..5);
                let a = random_tensor(rng, r, c, -3.0, 3.0);
                let p = distribution_rows(rng, r, c);
                (vec![a], Box::new(move |t, v| soft_cross_entropy(t, v[0], &p)))
            },
        },
        Case {
            name: "mse",
            make: |rng| {
                let (r, c) = dims(rng);
                let a = random_tensor(rng, r, c, -1.0, 1.0);
                let b = random_tensor(rng, r, c, -1.0, 1.0);
                (vec![a], Box::new(move |t, v| mse(t, v[0], &b)))
            },
        },
        Case {
            name: "rank_alignment_loss",
            make: |rng| {
                let n = rng.gen_range(2..9);
                // coarse target values so ties occur
                let target: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..4))).collect();
                let s = random_tensor(rng, n, 1, -3.0, 3.0);
                (vec![s], Box::new(move |t, v| rank_alignment_loss(t, &target, v[0])))
            },
        },
        Case {
            name: "mse_alignment_loss",
            make: |rng| {
                let n = rng.gen_range(1..9);
                let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let s = random_tensor(rng, n, 1, -3.0, 3.0);
                (vec![s], Box::new(move |t, v| mse_alignment_loss(t, &target, v[0])))
            },
        },
        Case {
            name: "gin_forward",
            make: |rng| model_case(rng, Arch::GIN),
        },
        Case {
            name: "gcn_forward",
            make: |rng| model_case(rng, Arch::GCN),
        },
    ]
}
