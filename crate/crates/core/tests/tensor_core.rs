use leafnet::Tensor;
use proptest::prelude::*;

fn all_shapes() -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for rank in 1..=3u32 {
        for code in 0..3usize.pow(rank) {
            out.push((0..rank).map(|d| code / 3usize.pow(d) % 3 + 1).collect());
        }
    }
    out
}

fn values(shape: &[usize], salt: f64) -> Vec<f64> {
    let n: usize = shape.iter().product();
    (0..n).map(|i| (i as f64 + 1.0) * 0.37 + salt).collect()
}

/// Materializes both operands at the output shape, then combines them elementwise.
fn brute_broadcast(a: &[f64], sa: &[usize], b: &[f64], sb: &[usize], f: fn(f64, f64) -> f64) -> Option<(Vec<usize>, Vec<f64>)> {
    let rank = sa.len().max(sb.len());
    let pad = |s: &[usize]| {
        let mut p = vec![1; rank - s.len()];
        p.extend_from_slice(s);
        p
    };
    let (pa, pb) = (pad(sa), pad(sb));
    let mut out_shape = Vec::with_capacity(rank);
    for d in 0..rank {
        out_shape.push(match (pa[d], pb[d]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        });
    }
    let n: usize = out_shape.iter().product();
    let materialize = |src: &[f64], ps: &[usize]| -> Vec<f64> {
        (0..n)
            .map(|flat| {
                let (mut rem, mut idx, mut stride) = (flat, 0, 1);
                let mut coords = vec![0; rank];
                for d in (0..rank).rev() {
                    coords[d] = rem % out_shape[d];
                    rem /= out_shape[d];
                }
                for d in (0..rank).rev() {
                    let c = if ps[d] == 1 { 0 } else { coords[d] };
                    idx += c * stride;
                    stride *= ps[d];
                }
                src[idx]
            })
            .collect()
    };
    let (ma, mb) = (materialize(a, &pa), materialize(b, &pb));
    Some((out_shape, ma.iter().zip(&mb).map(|(&x, &y)| f(x, y)).collect()))
}

#[test]
fn broadcasting_matches_brute_force_on_every_small_shape_pair() {
    let shapes = all_shapes();
    assert_eq!(shapes.len(), 40);
    let ops: [(&str, fn(f64, f64) -> f64); 5] = [
        ("add", |a, b| a + b),
        ("sub", |a, b| a - b),
        ("mul", |a, b| a * b),
        ("div", |a, b| a / b),
        ("max", f64::max),
    ];
    let (mut compatible, mut rejected) = (0, 0);
    for sa in &shapes {
        for sb in &shapes {
            let (va, vb) = (values(sa, 0.0), values(sb, 0.5));
            let ta = Tensor::from_vec(va.clone(), sa).unwrap();
            let tb = Tensor::from_vec(vb.clone(), sb).unwrap();
            for (name, f) in ops {
                let got = match name {
                    "add" => ta.add(&tb),
                    "sub" => ta.sub(&tb),
                    "mul" => ta.mul(&tb),
                    "div" => ta.div(&tb),
                    _ => ta.maximum(&tb),
                };
                match brute_broadcast(&va, sa, &vb, sb, f) {
                    Some((shape, want)) => {
                        let got = got.unwrap_or_else(|e| panic!("{name} {sa:?} {sb:?}: {e}"));
                        assert_eq!(got.shape(), shape.as_slice(), "{name} {sa:?} {sb:?}");
                        assert_eq!(got.data(), want.as_slice(), "{name} {sa:?} {sb:?}");
                        compatible += 1;
                    }
                    None => {
                        assert!(got.is_err(), "{name} {sa:?} {sb:?} should not broadcast");
                        rejected += 1;
                    }
                }
            }
        }
    }
    assert!(compatible > 0 && rejected > 0);
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn vec_f64(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop((m, k, n, a, b) in (1usize..8, 1usize..8, 1usize..8)
        .prop_flat_map(|(m, k, n)| (Just(m), Just(k), Just(n), vec_f64(m * k), vec_f64(k * n)))) {
        let got = Tensor::from_vec(a.clone(), &[m, k]).unwrap()
            .matmul(&Tensor::from_vec(b.clone(), &[k, n]).unwrap()).unwrap();
        let want = naive_matmul(&a, &b, m, k, n);
        prop_assert_eq!(got.shape(), &[m, n]);
        for (g, w) in got.data().iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{g} vs {w}");
        }
    }

    #[test]
    fn matmul_is_associative_in_f32((m, k, l, n, a, b, c) in (1usize..7, 1usize..7, 1usize..7, 1usize..7)
        .prop_flat_map(|(m, k, l, n)| (Just(m), Just(k), Just(l), Just(n),
            prop::collection::vec(0.1f32..1.0, m * k),
            prop::collection::vec(0.1f32..1.0, k * l),
            prop::collection::vec(0.1f32..1.0, l * n)))) {
        let ta = Tensor::from_vec(a, &[m, k]).unwrap();
        let tb = Tensor::from_vec(b, &[k, l]).unwrap();
        let tc = Tensor::from_vec(c, &[l, n]).unwrap();
        let left = ta.matmul(&tb).unwrap().matmul(&tc).unwrap();
        let right = ta.matmul(&tb.matmul(&tc).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() <= 1e-5 * y.abs().max(x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn fan_out_gradient_is_the_sum_of_path_gradients(x in vec_f64(5), w in vec_f64(5)) {
        let tw = Tensor::from_vec(w.clone(), &[5]).unwrap();
        // f(x) = sum(x * w) + sum(x * x), with x used on both paths
        let shared = Tensor::from_vec(x.clone(), &[5]).unwrap().requires_grad(true);
        let f = shared.mul(&tw).unwrap().sum(None, false).unwrap()
            .add(&shared.mul(&shared).unwrap().sum(None, false).unwrap()).unwrap();
        f.backward().unwrap();

        let p1 = Tensor::from_vec(x.clone(), &[5]).unwrap().requires_grad(true);
        p1.mul(&tw).unwrap().sum(None, false).unwrap().backward().unwrap();
        let p2 = Tensor::from_vec(x.clone(), &[5]).unwrap().requires_grad(true);
        p2.mul(&p2).unwrap().sum(None, false).unwrap().backward().unwrap();

        let total = shared.grad_vec().unwrap();
        for ((t, a), b) in total.iter().zip(p1.grad_vec().unwrap()).zip(p2.grad_vec().unwrap()) {
            prop_assert!((t - (a + b)).abs() < 1e-12);
        }
    }
}

#[test]
fn incompatible_matmul_is_a_shape_error() {
    let a = Tensor::<f32>::zeros(&[2, 3]);
    let b = Tensor::<f32>::zeros(&[2, 3]);
    assert!(matches!(a.matmul(&b), Err(leafnet::Error::Shape { .. })));
}
