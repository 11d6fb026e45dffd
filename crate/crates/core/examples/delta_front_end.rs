//! The parameter-free bidirectional delta: rising and falling halves of the
//! first difference, and its indifference to a constant offset.
//!
//!     cargo run --example delta_front_end

use deltagate::model::bidirectional_delta;
use deltagate::tensor::{Tape, Tensor};

fn delta(x: &[f64], step: usize) -> deltagate::Result<Vec<f64>> {
    let mut tape = Tape::<f64>::new();
    let xv = tape.constant(Tensor::new(&[1, 1, x.len()], x.to_vec())?);
    let y = bidirectional_delta(&mut tape, xv, step)?;
    Ok(tape.value(y).data().to_vec())
}

fn main() -> deltagate::Result<()> {
    let x = [1.0, 1.5, 1.25, 1.25, 1.75, 1.0];
    let y = delta(&x, 1)?;
    let (pos, neg) = y.split_at(x.len() - 1);
    println!("x   {x:?}");
    println!("pos {pos:?}");
    println!("neg {neg:?}");
    let rebuilt: Vec<f64> = pos.iter().zip(neg).map(|(p, n)| p - n).collect();
    println!("pos - neg {rebuilt:?}");
    for offset in [-5.0, 0.1, 100.0] {
        let shifted: Vec<f64> = x.iter().map(|v| v + offset).collect();
        println!("offset {offset:>6}: identical output {}", delta(&shifted, 1)? == y);
    }
    println!("step 2: {:?}", delta(&x, 2)?);
    Ok(())
}
