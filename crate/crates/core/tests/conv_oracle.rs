//! The grouped convolution against a textbook loop nest on every extent up
//! to 8.

mod common;

use common::conv_oracle as oracle;
use deltagate::tensor::{Tape, Tensor};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    b: usize,
    cin: usize,
    cout: usize,
    g: usize,
    t: usize,
    k: usize,
    p: usize,
    x: Vec<f64>,
    w: Vec<f64>,
    bias: Vec<f64>,
}

fn geometry() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize)> {
    (1usize..=8, 1usize..=8, 1usize..=8, 1usize..=8)
        .prop_flat_map(|(b, cin, t, k)| {
            let divisors: Vec<usize> = (1..=cin).filter(|g| cin % g == 0).collect();
            (Just(b), Just(cin), Just(t), Just(k), proptest::sample::select(divisors), 0usize..=4)
        })
        .prop_flat_map(|(b, cin, t, k, g, p)| (Just(b), Just(cin), 1usize..=(8 / g), Just(g), Just(t), Just(k), Just(p)))
        .prop_map(|(b, cin, m, g, t, k, p)| (b, cin, m * g, g, t, k, p))
        .prop_filter("output length must be positive", |&(_, _, _, _, t, k, p)| t + 2 * p >= k)
}

fn case() -> impl Strategy<Value = Case> {
    geometry().prop_flat_map(|(b, cin, cout, g, t, k, p)| {
        let v = |n: usize| proptest::collection::vec(-4.0f64..4.0, n);
        (v(b * cin * t), v(cout * (cin / g) * k), v(cout)).prop_map(move |(x, w, bias)| Case { b, cin, cout, g, t, k, p, x, w, bias })
    })
}

fn run<E: deltagate::tensor::Element>(c: &Case) -> Vec<E> {
    let mut tape = Tape::<E>::new();
    let x = tape.constant(Tensor::<f64>::new(&[c.b, c.cin, c.t], c.x.clone()).unwrap().cast());
    let w = tape.constant(Tensor::<f64>::new(&[c.cout, c.cin / c.g, c.k], c.w.clone()).unwrap().cast());
    let b = tape.constant(Tensor::<f64>::new(&[c.cout], c.bias.clone()).unwrap().cast());
    let y = tape.conv1d_grouped(x, w, b, c.g, c.p).unwrap();
    tape.value(y).data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 600, ..ProptestConfig::default() })]

    #[test]
    fn matches_oracle_exactly(c in case()) {
        let want = oracle(&c.x, c.b, c.cin, c.t, &c.w, c.cout, c.k, &c.bias, c.g, c.p);
        let got = run::<f64>(&c);
        prop_assert_eq!(got.len(), want.len());
        for (a, e) in got.iter().zip(&want) {
            prop_assert_eq!(a.to_bits(), e.to_bits(), "{:?}", (c.b, c.cin, c.cout, c.g, c.t, c.k, c.p));
        }
    }
}

/// Every (Cin, G, Cout) combination with Cin, Cout <= 8, each at a few
/// lengths, kernels and paddings.
#[test]
fn every_group_count() {
    let mut cases = 0;
    let mut seed = 1u64;
    let mut next = move || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((seed >> 11) as f64 / (1u64 << 53) as f64) * 8.0 - 4.0
    };
    for cin in 1..=8 {
        for g in (1..=cin).filter(|g| cin % g == 0) {
            for cout in (g..=8).step_by(g) {
                for (t, k, p) in [(8, 8, 0), (5, 3, 1), (1, 1, 0), (3, 7, 3), (8, 2, 4), (6, 4, 2)] {
                    let b = 2;
                    let c = Case {
                        b,
                        cin,
                        cout,
                        g,
                        t,
                        k,
                        p,
                        x: (0..b * cin * t).map(|_| next()).collect(),
                        w: (0..cout * (cin / g) * k).map(|_| next()).collect(),
                        bias: (0..cout).map(|_| next()).collect(),
                    };
                    let want = oracle(&c.x, b, cin, t, &c.w, cout, k, &c.bias, g, p);
                    let got = run::<f64>(&c);
                    assert!(got.iter().zip(&want).all(|(a, e)| a.to_bits() == e.to_bits()), "{:?}", (cin, g, cout, t, k, p));
                    // f32 storage rounds the same f64 sums once.
                    let c32 = Case {
                        x: c.x.iter().map(|&v| v as f32 as f64).collect(),
                        w: c.w.iter().map(|&v| v as f32 as f64).collect(),
                        bias: c.bias.iter().map(|&v| v as f32 as f64).collect(),
                        ..c
                    };
                    let want = oracle(&c32.x, b, cin, t, &c32.w, cout, k, &c32.bias, g, p);
                    let got = run::<f32>(&c32);
                    assert!(got.iter().zip(&want).all(|(a, e)| *a == *e as f32), "f32 {:?}", (cin, g, cout, t, k, p));
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 500, "{cases}");
}

#[test]
fn invalid_geometry_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 4, 5]));
    let w = tape.constant(Tensor::zeros(&[4, 2, 3]));
    let b = tape.constant(Tensor::zeros(&[4]));
    assert!(tape.conv1d_grouped(x, w, b, 3, 1).is_err());
    assert!(tape.conv1d_grouped(x, w, b, 1, 1).is_err());
    let wide = tape.constant(Tensor::zeros(&[4, 2, 9]));
    assert!(tape.conv1d_grouped(x, wide, b, 2, 1).is_err());
}
