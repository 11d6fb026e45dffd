//! Naive reference kernels used as independent oracles by tests and the
//! self-check command.

/// Five-nested-loop grouped convolution over `[B, Cin, T]` input and
/// `[Cout, Cin/G, K]` weights with symmetric zero padding.
///
/// Accumulates bias, then input channels, then taps, in ascending order.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_naive(
    input: &[f64],
    input_shape: [usize; 3],
    weight: &[f64],
    weight_shape: [usize; 3],
    bias: &[f64],
    groups: usize,
    padding: usize,
) -> Vec<f64> {
    let [batch, cin, len] = input_shape;
    let [cout, cig, k_len] = weight_shape;
    let cog = cout / groups;
    let out_len = len + 2 * padding - k_len + 1;
    let mut out = vec![0.0; batch * cout * out_len];
    for b in 0..batch {
        for co in 0..cout {
            let group = co / cog;
            for t in 0..out_len {
                let mut acc = bias[co];
                for ci in 0..cig {
                    let channel = group * cig + ci;
                    for k in 0..k_len {
                        let pos = t + k;
                        if pos < padding || pos >= padding + len {
                            continue;
                        }
                        let x = input[(b * cin + channel) * len + pos - padding];
                        acc += weight[(co * cig + ci) * k_len + k] * x;
                    }
                }
                out[(b * cout + co) * out_len + t] = acc;
            }
        }
    }
    out
}
