//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use deltagate::data::{make_inter_folds, make_intra_folds, EegDataset, EegSample};
use rand::Rng;

/// out[b, o, t] = bias[o] + sum_i sum_k w[o, i, k] * x_padded[b, g*cig + i, t + k],
/// summed in that order.
#[allow(clippy::too_many_arguments)]
pub fn conv_oracle(x: &[f64], b: usize, cin: usize, t: usize, w: &[f64], cout: usize, k: usize, bias: &[f64], g: usize, p: usize) -> Vec<f64> {
    let cig = cin / g;
    let tout = t + 2 * p - k + 1;
    let mut out = Vec::with_capacity(b * cout * tout);
    for bi in 0..b {
        for o in 0..cout {
            let group = o / (cout / g);
            for s in 0..tout {
                let mut acc = bias[o];
                for i in 0..cig {
                    for kk in 0..k {
                        // Padding taps are skipped rather than multiplied by
                        // zero, which keeps signed zeros identical.
                        if (s + kk) >= p && (s + kk) < p + t {
                            acc += w[(o * cig + i) * k + kk] * x[(bi * cin + group * cig + i) * t + s + kk - p];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Up to 15 subjects and 10..=400 samples with arbitrary subject ids.
pub fn random_dataset(rng: &mut impl Rng) -> EegDataset {
    let n_subjects = rng.random_range(1..=15u32);
    let n = rng.random_range(10..=400);
    let samples = (0..n)
        .map(|i| EegSample { subject_id: rng.random_range(0..n_subjects) * 7 + 3, label: (i % 3) as u32, data: vec![i as f32] })
        .collect();
    EegDataset { name: "r".into(), n_channels: 1, n_timesteps: 1, n_classes: 3, sampling_rate_hz: 1.0, samples }
}

fn as_set(v: &[usize]) -> HashSet<usize> {
    v.iter().copied().collect()
}

/// Intra plans: 60/20/20 within one sample, disjoint roles, every sample
/// tested exactly once.
pub fn check_intra(ds: &EegDataset, seed: u64) -> Result<(), String> {
    let n = ds.len();
    let plan = make_intra_folds(ds, 5, seed).map_err(|e| e.to_string())?;
    let mut tested = vec![0usize; n];
    for (i, f) in plan.folds.iter().enumerate() {
        for (len, share) in [(f.train.len(), 0.6), (f.val.len(), 0.2), (f.test.len(), 0.2)] {
            if (len as f64 - share * n as f64).abs() > 1.0 {
                return Err(format!("n={n} fold {i}: size {len} is not {share} of n"));
            }
        }
        let (tr, va, te) = (as_set(&f.train), as_set(&f.val), as_set(&f.test));
        if !(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te)) || tr.len() + va.len() + te.len() != n {
            return Err(format!("n={n} fold {i}: roles overlap or miss samples"));
        }
        f.test.iter().for_each(|&j| tested[j] += 1);
    }
    if tested.iter().any(|&c| c != 1) {
        return Err(format!("n={n}: a sample is not tested exactly once"));
    }
    Ok(())
}

/// Inter plans: no subject of the test side appears in train or val, each
/// subject is tested once. Returns `Ok(false)` when planning is refused,
/// which is only allowed below 5 subjects.
pub fn check_inter(ds: &EegDataset, seed: u64) -> Result<bool, String> {
    let n = ds.len();
    let plan = match make_inter_folds(ds, 5, seed) {
        Ok(p) => p,
        Err(_) if ds.subjects().len() < 5 => return Ok(false),
        Err(e) => return Err(e.to_string()),
    };
    let subj = |idx: &[usize]| idx.iter().map(|&j| ds.samples[j].subject_id).collect::<HashSet<_>>();
    let mut tested = Vec::new();
    for (i, f) in plan.folds.iter().enumerate() {
        let seen: HashSet<u32> = subj(&f.train).union(&subj(&f.val)).copied().collect();
        if !seen.is_disjoint(&subj(&f.test)) || !subj(&f.train).is_disjoint(&subj(&f.val)) {
            return Err(format!("fold {i}: a subject appears on both sides"));
        }
        if f.train.is_empty() || f.val.is_empty() || f.test.is_empty() || f.train.len() + f.val.len() + f.test.len() != n {
            return Err(format!("fold {i}: empty role or missing samples"));
        }
        tested.extend(subj(&f.test));
    }
    let mut unique = tested.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != tested.len() || unique != ds.subjects() {
        return Err("subjects are not each tested exactly once".into());
    }
    Ok(true)
}
