//! Record a few operations on a tape, backpropagate, and compare against
//! central finite differences.
//!
//!     cargo run --example autodiff

use deltagate::tensor::gradcheck::grad_check;
use deltagate::tensor::{Tape, Tensor};

fn main() -> deltagate::Result<()> {
    // loss = sum(gelu(W x + b) * c)
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(&[2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5])?, true);
    let w = tape.leaf(Tensor::new(&[2, 3], vec![0.1, 0.2, -0.3, 0.4, -0.5, 0.6])?, true);
    let b = tape.leaf(Tensor::new(&[2], vec![0.0, 0.1])?, true);
    let c = tape.constant(Tensor::new(&[2, 2], vec![1.0, -1.0, 0.5, 2.0])?);
    let h = tape.linear(x, w, b)?;
    let g = tape.gelu(h)?;
    let m = tape.mul(g, c)?;
    let loss = tape.sum(m)?;
    tape.backward(loss)?;
    println!("loss {:.6}", tape.value(loss).data()[0]);
    println!("dL/dW {:.4?}", tape.grad(w).unwrap().data());
    println!("dL/db {:.4?}", tape.grad(b).unwrap().data());

    let report = grad_check(
        |t, v| {
            let h = t.linear(v[0], v[1], v[2])?;
            t.gelu(h)
        },
        &[&[2, 3], &[2, 3], &[2]],
        7,
    )?;
    println!("finite-difference check: max relative error {:.2e} over {} coordinates", report.max_rel_error, report.coordinates);
    Ok(())
}
