//! Grouped 1-D convolution against the naive reference loop nest.
//!
//!     cargo run --example grouped_conv

use deltagate::tensor::reference::conv1d_naive;
use deltagate::tensor::{Tape, Tensor};

fn main() -> deltagate::Result<()> {
    let (b, cin, t, cout, k, pad) = (2, 4, 10, 8, 3, 1);
    let x: Vec<f64> = (0..b * cin * t).map(|i| ((i * 37 % 17) as f64 - 8.0) / 4.0).collect();
    for groups in [1, 2, 4] {
        let w: Vec<f64> = (0..cout * (cin / groups) * k).map(|i| ((i * 11 % 7) as f64 - 3.0) / 5.0).collect();
        let bias: Vec<f64> = (0..cout).map(|i| i as f64 / 10.0).collect();
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(&[b, cin, t], x.clone())?);
        let wv = tape.constant(Tensor::new(&[cout, cin / groups, k], w.clone())?);
        let bv = tape.constant(Tensor::new(&[cout], bias.clone())?);
        let y = tape.conv1d_grouped(xv, wv, bv, groups, pad)?;
        let reference = conv1d_naive(&x, [b, cin, t], &w, [cout, cin / groups, k], &bias, groups, pad);
        let exact = tape.value(y).data() == &reference[..];
        println!("groups {groups}: output {:?}, {} weights, matches reference exactly: {exact}", tape.shape(y), w.len());
    }
    Ok(())
}
