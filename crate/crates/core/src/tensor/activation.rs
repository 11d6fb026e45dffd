//! Pointwise nonlinearities, dropout and softmax.

use rand::Rng;

use super::tape::Op;
use super::{Element, Mode, Tape, Var};
use crate::error::{invalid, Result};

/// Cubic coefficient of the tanh approximation of GELU.
pub const GELU_CUBIC: f64 = 0.044715;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    gelu_with(x, GELU_CUBIC)
}

/// `e^x` without branches or library calls, so loops over it vectorize.
///
/// Cody-Waite reduction `x = k ln2 + r` with `|r| <= ln2 / 2`, then a
/// degree-13 Taylor polynomial whose truncation error (below 1e-17) sits
/// under one ulp. Inputs are clamped to `[-700, 700]`.
#[inline(always)]
fn exp_fast(x: f64) -> f64 {
    // 1.5 * 2^52: adding it rounds to an integer kept in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const INV_FACT: [f64; 14] = [
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362_880.0,
        1.0 / 3_628_800.0,
        1.0 / 39_916_800.0,
        1.0 / 479_001_600.0,
        1.0 / 6_227_020_800.0,
    ];
    let x = x.clamp(-700.0, 700.0);
    let t = x * std::f64::consts::LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = INV_FACT[13];
    for c in INV_FACT[..13].iter().rev() {
        p = p * r + c;
    }
    let k_int = t.to_bits() as i64 - SHIFT.to_bits() as i64;
    p * f64::from_bits(((k_int + 1023) << 52) as u64)
}

/// `tanh` through one exponential; within a few ulps of `f64::tanh` in
/// absolute terms.
#[inline(always)]
fn fast_tanh(u: f64) -> f64 {
    1.0 - 2.0 / (exp_fast(2.0 * u) + 1.0)
}

#[inline]
fn gelu_with(x: f64, cubic: f64) -> f64 {
    0.5 * x * (1.0 + fast_tanh(SQRT_2_OVER_PI * (x + cubic * x * x * x)))
}

#[inline]
fn gelu_derivative(x: f64) -> f64 {
    let x2 = x * x;
    let th = fast_tanh(SQRT_2_OVER_PI * (x + GELU_CUBIC * x2 * x));
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x2)
}

impl<E: Element> Tape<E> {
    /// `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, |v| v.max(0.0), |input| Op::Relu { input })
    }

    /// `x` for `x >= 0`, otherwise `slope * x`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.pointwise(x, |v| if v >= 0.0 { v } else { slope * v }, |input| Op::LeakyRelu { input, slope })
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, gelu_scalar, |input| Op::Gelu { input })
    }

    /// GELU whose forward pass uses a caller-chosen cubic coefficient while
    /// the backward pass keeps the true derivative. Exists so self-checks
    /// can demonstrate that the gradient checker catches a corrupted kernel.
    #[doc(hidden)]
    pub fn gelu_with_forward_cubic(&mut self, x: Var, cubic: f64) -> Result<Var> {
        self.pointwise(x, |v| gelu_with(v, cubic), |input| Op::Gelu { input })
    }

    /// Inverted dropout. In train mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; eval mode
    /// and `p == 0` are exact identities.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(format!("dropout probability must be in [0, 1), got {p}")));
        }
        let xi = self.index(x)?;
        if mode == Mode::Eval || p == 0.0 {
            let n = self.node_value(xi).numel();
            let value = self.node_value(xi).clone();
            return Ok(self.push(value, Op::Dropout { input: xi, keep: vec![true; n], scale: 1.0 }, &[xi]));
        }
        let scale = 1.0 / (1.0 - p);
        let v = self.node_value(xi);
        let shape = v.shape().to_vec();
        // Element i survives when its uniform 32-bit draw is at least p * 2^32.
        let threshold = (p * 4_294_967_296.0).ceil() as u64;
        let mut draws = vec![0u32; v.numel()];
        rng.fill(&mut draws[..]);
        let keep: Vec<bool> = draws.iter().map(|&d| d as u64 >= threshold).collect();
        let values = v
            .data()
            .iter()
            .zip(&keep)
            .map(|(e, &k)| E::from_f64(if k { e.to_f64() * scale } else { 0.0 }))
            .collect();
        Ok(self.push_values(&shape, values, Op::Dropout { input: xi, keep, scale }, &[xi]))
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let v = self.node_value(xi);
        let n = *v.shape().last().unwrap();
        if n == 0 {
            return Err(invalid("softmax needs at least one class"));
        }
        let shape = v.shape().to_vec();
        let x = E::slice_to_f64(v.data());
        let mut values = Vec::with_capacity(x.len());
        for row in x.chunks_exact(n) {
            softmax_row(row, &mut values);
        }
        Ok(self.push_f64(&shape, values, Op::Softmax { input: xi }, &[xi]))
    }

    fn pointwise(&mut self, x: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op<E>) -> Result<Var> {
        let xi = self.index(x)?;
        let v = self.node_value(xi);
        let shape = v.shape().to_vec();
        let values = v.data().iter().map(|e| E::from_f64(f(e.to_f64()))).collect();
        Ok(self.push_values(&shape, values, op(xi), &[xi]))
    }
}

pub(crate) fn softmax_row(row: &[f64], out: &mut Vec<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    let mut total = 0.0;
    for &v in row {
        let e = (v - max).exp();
        total += e;
        out.push(e);
    }
    for e in &mut out[start..] {
        *e /= total;
    }
}

pub(crate) fn relu_backward<E: Element>(x: &[E], g: &[f64]) -> Vec<f64> {
    x.iter().zip(g).map(|(&x, &g)| if x.to_f64() > 0.0 { g } else { 0.0 }).collect()
}

pub(crate) fn leaky_relu_backward<E: Element>(x: &[E], slope: f64, g: &[f64]) -> Vec<f64> {
    x.iter().zip(g).map(|(&x, &g)| if x.to_f64() >= 0.0 { g } else { slope * g }).collect()
}

pub(crate) fn gelu_backward<E: Element>(x: &[E], g: &[f64]) -> Vec<f64> {
    x.iter().zip(g).map(|(&x, &g)| g * gelu_derivative(x.to_f64())).collect()
}

pub(crate) fn dropout_backward(keep: &[bool], scale: f64, g: &[f64]) -> Vec<f64> {
    keep.iter().zip(g).map(|(&k, &g)| if k { g * scale } else { 0.0 }).collect()
}

pub(crate) fn softmax_backward(y: &[f64], n: usize, g: &[f64]) -> Vec<f64> {
    let mut dx = Vec::with_capacity(y.len());
    for (yr, gr) in y.chunks_exact(n).zip(g.chunks_exact(n)) {
        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
        dx.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(values: &[f64], f: impl Fn(&mut Tape<f64>, Var) -> Result<Var>) -> Vec<f64> {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[values.len()], values).unwrap());
        let y = f(&mut tape, x).unwrap();
        tape.value(y).to_f64_vec()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(run(&[-1.0, 0.0, 2.0], |t, x| t.relu(x)), vec![0.0, 0.0, 2.0]);
        assert_eq!(run(&[-1.0, -0.5, -9.0], |t, x| t.relu(x)), vec![0.0; 3]);
    }

    #[test]
    fn relu_at_zero_has_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(&[3], &[0.0, 1.0, -1.0]).unwrap(), true);
        let y = tape.relu(x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn relu_split_reconstructs_input() {
        let xs = [-2.5, -0.0, 0.0, 1e-9, 3.25];
        let pos = run(&xs, |t, x| t.relu(x));
        let neg = run(&xs, |t, x| {
            let n = t.neg(x)?;
            t.relu(n)
        });
        for ((p, n), x) in pos.iter().zip(&neg).zip(&xs) {
            assert_eq!(p - n, *x);
        }
    }

    #[test]
    fn exp_fast_matches_std() {
        let mut worst = 0.0f64;
        for i in -20_000..=20_000 {
            let x = i as f64 * 0.0313;
            worst = worst.max(((exp_fast(x) - x.exp()) / x.exp()).abs());
        }
        assert!(worst < 1e-15, "worst relative error {worst:e}");
        assert_eq!(exp_fast(0.0), 1.0);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        // 0.5 * (1 + tanh(sqrt(2/pi) * 1.044715)), evaluated independently in mpmath.
        assert!((gelu_scalar(1.0) - 0.841_191_990_608_277).abs() < 1e-12);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn leaky_relu_examples() {
        assert_eq!(run(&[-1.0, 2.0], |t, x| t.leaky_relu(x, 0.01)), vec![-0.01, 2.0]);
        assert_eq!(run(&[-1.5, 2.0, 0.0], |t, x| t.leaky_relu(x, 1.0)), vec![-1.5, 2.0, 0.0]);
        assert_eq!(run(&[-1.5, 2.0], |t, x| t.leaky_relu(x, 0.0)), run(&[-1.5, 2.0], |t, x| t.relu(x)));
    }

    #[test]
    fn softmax_examples() {
        let y = run(&[1.0, 1.0, 1.0], |t, x| t.softmax_lastdim(x));
        for v in y {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let y = run(&[0.0, 2f64.ln(), 3f64.ln()], |t, x| t.softmax_lastdim(x));
        for (v, want) in y.iter().zip([1.0 / 6.0, 1.0 / 3.0, 0.5]) {
            assert!((v - want).abs() < 1e-12);
        }
        let a = run(&[0.3, -1.2, 2.0], |t, x| t.softmax_lastdim(x));
        let b = run(&[100.3, 98.8, 102.0], |t, x| t.softmax_lastdim(x));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_identities_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = [1.0, -2.0, 3.0];
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[3], &xs).unwrap());
        let a = tape.dropout(x, 0.0, Mode::Train, &mut rng).unwrap();
        let b = tape.dropout(x, 0.7, Mode::Eval, &mut rng).unwrap();
        assert_eq!(tape.value(a).data(), &xs);
        assert_eq!(tape.value(b).data(), &xs);
        assert!(tape.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(tape.dropout(x, -0.1, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn dropout_survivor_fraction() {
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2026);
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::filled(&[n], 1.0));
        let y = tape.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
        let data = tape.value(y).data();
        let survivors = data.iter().filter(|&&v| v != 0.0).count();
        assert!(data.iter().all(|&v| v == 0.0 || v == 2.0));
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.01, "survivor fraction {frac}");
    }
}
