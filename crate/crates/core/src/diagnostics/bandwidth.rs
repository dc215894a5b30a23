use crate::diffeo::MapChain;
use crate::error::{Error, Result};
use crate::field::{bandwidth_of_spectra, dft_values, Grid};

/// Closed-form composite bandwidth bound
/// `L [1 + ln(C1/ε)] ((1 + C2 L)^k − 1) / (L C2)`, with the `C2 → 0` limit
/// `k L [1 + ln(C1/ε)]`.
pub fn composite_bandwidth_bound(l: f64, eps: f64, c1: f64, c2: f64, k: usize) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if !(l >= 0.0 && c1 >= 0.0 && c2 >= 0.0) {
        return Err(Error::Domain("L, C1 and C2 must be nonnegative".into()));
    }
    let head = l * (1.0 + (c1 / eps).ln());
    let lc = l * c2;
    // (1+x)^k - 1 over x, stable for small x
    let growth = if lc < 1e-12 {
        k as f64
    } else {
        ((k as f64) * lc.ln_1p()).exp_m1() / lc
    };
    Ok(head * growth)
}

/// One prefix depth of a bandwidth study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthPoint {
    pub depth: usize,
    pub measured: usize,
    pub bound: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `(C1, C2)` for a chain: the largest RMS displacement of a single map and
/// the largest sup-norm displacement of the suffixes `φ_j ∘ … ∘ φ_k`, `j ≥ 2`,
/// both measured on `samples`.
pub fn chain_constants(chain: &MapChain, samples: Grid) -> (f64, f64) {
    let pts = samples.vertices();
    let c1 = chain
        .maps()
        .iter()
        .map(|m| {
            let single = MapChain::from_maps(vec![m.clone()]).expect("one map");
            let d = single.displacement(&pts);
            (d.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>() / d.len() as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let c2 = (1..chain.len())
        .map(|j| {
            chain
                .suffix(j)
                .displacement(&pts)
                .iter()
                .map(|v| v[0].abs().max(v[1].abs()))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    (c1, c2)
}

/// Measured `bw_ε(φ₁∘…∘φ_k − id)` for every prefix depth `k`, next to the
/// closed-form bound with constants measured from that prefix. The mean
/// displacement is excluded from the tail sums.
///
/// Displacements are sampled on `samples` before the DFT, which should be
/// fine enough that aliasing does not reach the tail sums.
pub fn bandwidth_study(chain: &MapChain, eps: f64, l: f64, samples: Grid) -> Result<Vec<BandwidthPoint>> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let pts = samples.vertices();
    (1..=chain.len())
        .map(|k| {
            let prefix = chain.prefix(k);
            let d = prefix.displacement(&pts);
            let mut sx = dft_values(samples, &d.iter().map(|v| v[0]).collect::<Vec<_>>());
            let mut sy = dft_values(samples, &d.iter().map(|v| v[1]).collect::<Vec<_>>());
            // a rigid shift carries no bandwidth
            sx.coeffs_mut()[0] = Default::default();
            sy.coeffs_mut()[0] = Default::default();
            let measured = bandwidth_of_spectra(&[&sx, &sy], eps);
            let (c1, c2) = chain_constants(&prefix, samples);
            Ok(BandwidthPoint {
                depth: k,
                measured,
                bound: composite_bandwidth_bound(l, eps, c1, c2, k)?,
                c1,
                c2,
            })
        })
        .collect()
}
