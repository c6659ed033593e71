//! Ground-truth expressibility: fidelity sampling through the
//! compute-uncompute protocol, analytic Haar bin probabilities, and the
//! KL divergence between them (natural log).
//!
//! For each parameter pair (theta, phi) drawn uniformly from [0, 2*pi), the
//! fidelity |<psi_theta|psi_phi>|^2 equals the all-zeros probability of the
//! transpiled circuit U(theta) U(phi)^dag. Fidelities are histogrammed into
//! uniform bins on [0, 1] (last bin right-closed) and compared against the
//! exact integral of the Haar fidelity density (N-1)(1-F)^(N-2).

use serde::{Deserialize, Serialize};

use crate::backend::BackendModel;
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim;
use crate::transpile::transpile;

pub const DEFAULT_NUM_PAIRS: usize = 5000;
pub const DEFAULT_BINS: usize = 75;
pub const DEFAULT_SHOTS: u64 = 1024;

/// RNG stream tags used below `seed`.
const TAG_PAIRS: u64 = 0x50;
const TAG_THETA: u64 = 0;
const TAG_PHI: u64 = 1;
const TAG_SHOTS: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExprMode {
    /// Exact all-zeros probability from the statevector.
    Exact,
    /// Multinomial shot sampling on a noiseless backend.
    Sampled,
    /// Stochastic Pauli-trajectory sampling on a noisy backend.
    Noisy,
}

impl std::str::FromStr for ExprMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ExprMode::Exact),
            "sampled" => Ok(ExprMode::Sampled),
            "noisy" => Ok(ExprMode::Noisy),
            other => Err(Error::validation(format!(
                "unknown mode `{other}` (expected exact, sampled, or noisy)"
            ))),
        }
    }
}

impl std::fmt::Display for ExprMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExprMode::Exact => "exact",
            ExprMode::Sampled => "sampled",
            ExprMode::Noisy => "noisy",
        })
    }
}

/// Uniform histogram over [0, 1]; the last bin is right-closed so F = 1.0
/// is binnable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityHistogram {
    pub n_bins: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl FidelityHistogram {
    pub fn from_fidelities(fidelities: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::validation("histogram needs at least 2 bins"));
        }
        let mut counts = vec![0u64; n_bins];
        for &f in fidelities {
            if !(-1e-9..=1.0 + 1e-9).contains(&f) {
                return Err(Error::validation(format!("fidelity {f} outside [0, 1]")));
            }
            let k = ((f * n_bins as f64) as usize).min(n_bins - 1);
            counts[k] += 1;
        }
        Ok(FidelityHistogram { n_bins, counts, total: fidelities.len() as u64 })
    }

    pub fn probs(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }
}

/// Exact Haar probability of each fidelity bin: the integral of
/// (N-1)(1-F)^(N-2) over [a_k, b_k), i.e. (1-a_k)^(N-1) - (1-b_k)^(N-1).
/// Sums to 1 exactly by telescoping.
pub fn haar_bin_probs(n_qubits: usize, n_bins: usize) -> Vec<f64> {
    let m = ((1u64 << n_qubits) - 1) as f64;
    let cumulative = |k: usize| (1.0 - k as f64 / n_bins as f64).powf(m);
    (0..n_bins).map(|k| cumulative(k) - cumulative(k + 1)).collect()
}

/// Natural log of the Haar bin probabilities, stable for large registers
/// where the raw probabilities underflow: ln q_k = (N-1) ln(1-a_k) +
/// ln(1 - r^(N-1)) with r = (1-b_k)/(1-a_k).
pub fn haar_bin_ln_probs(n_qubits: usize, n_bins: usize) -> Vec<f64> {
    let m = ((1u64 << n_qubits) - 1) as f64;
    (0..n_bins)
        .map(|k| {
            let a = k as f64 / n_bins as f64;
            let b = (k + 1) as f64 / n_bins as f64;
            if k + 1 == n_bins {
                // Last bin: q = (1-a)^m exactly.
                m * (1.0 - a).ln()
            } else {
                let ratio = (1.0 - b) / (1.0 - a);
                m * (1.0 - a).ln() + (-ratio.powf(m)).ln_1p()
            }
        })
        .collect()
}

/// KL divergence sum p_k ln(p_k / q_k) in nats, with 0 ln 0 = 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::validation(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for (sum, name) in [(p.iter().sum::<f64>(), "p"), (q.iter().sum::<f64>(), "q")] {
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("{name} sums to {sum}, not 1")));
        }
    }
    let mut acc = 0.0;
    for (&pk, &qk) in p.iter().zip(q.iter()) {
        if pk == 0.0 {
            continue;
        }
        if qk <= 0.0 {
            return Err(Error::validation(format!(
                "q has a zero bin where p = {pk} > 0"
            )));
        }
        acc += pk * (pk / qk).ln();
    }
    Ok(acc)
}

/// KL divergence of a binned empirical distribution from the Haar bins,
/// evaluated with log-domain Haar weights so large registers do not
/// underflow. Agrees with `kl_divergence(p, haar_bin_probs(..))` wherever
/// the latter is representable.
pub fn kl_vs_haar(p: &[f64], n_qubits: usize) -> f64 {
    let ln_q = haar_bin_ln_probs(n_qubits, p.len());
    p.iter()
        .zip(ln_q.iter())
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &lq)| pk * (pk.ln() - lq))
        .sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExprConfig {
    pub num_pairs: usize,
    pub n_bins: usize,
    pub mode: ExprMode,
    pub shots: u64,
    pub seed: u64,
}

impl Default for ExprConfig {
    fn default() -> Self {
        ExprConfig {
            num_pairs: DEFAULT_NUM_PAIRS,
            n_bins: DEFAULT_BINS,
            mode: ExprMode::Exact,
            shots: DEFAULT_SHOTS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpressibilityResult {
    pub expr: f64,
    pub num_pairs: usize,
    pub mode: ExprMode,
    pub shots_per_pair: u64,
    pub histogram: FidelityHistogram,
}

fn check_mode(mode: ExprMode, backend: &BackendModel) -> Result<()> {
    match mode {
        ExprMode::Sampled if !backend.noiseless => Err(Error::Profile(
            "sampled mode expects a noiseless backend; use noisy mode for noise models".into(),
        )),
        ExprMode::Noisy if backend.noiseless => Err(Error::Profile(
            "noisy mode needs a backend with calibration data".into(),
        )),
        _ => Ok(()),
    }
}

/// Fidelity of one parameter pair via compute-uncompute: transpile
/// bind(C, theta) . inverse(bind(C, phi)) and take the all-zeros
/// probability (exact) or all-zeros frequency (sampled/noisy).
pub fn pair_fidelity(
    circuit: &Circuit,
    theta: &[f64],
    phi: &[f64],
    mode: ExprMode,
    backend: &BackendModel,
    shots: u64,
    shot_rng: &RngStream,
) -> Result<f64> {
    let forward = circuit.bind(theta)?;
    let backward = circuit.bind(phi)?.inverse()?;
    let combined = forward.compose(&backward)?;
    let transpiled = transpile(&combined, backend)?;
    match mode {
        ExprMode::Exact => sim::exact_zero_prob(&transpiled.circuit),
        ExprMode::Sampled | ExprMode::Noisy => {
            let measured = transpiled.circuit.with_full_measurement()?;
            let counts = sim::sample_counts(&measured, shots, backend, shot_rng)?;
            let zeros = "0".repeat(measured.n_qubits);
            Ok(counts.get(&zeros).copied().unwrap_or(0) as f64 / shots as f64)
        }
    }
}

/// Draw `num_pairs` parameter pairs i.i.d. uniform over [0, 2*pi) per
/// parameter and return the fidelity of each pair.
pub fn sample_fidelities(
    circuit: &Circuit,
    num_pairs: usize,
    mode: ExprMode,
    backend: &BackendModel,
    shots: u64,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    if num_pairs == 0 {
        return Err(Error::validation("num_pairs must be >= 1"));
    }
    check_mode(mode, backend)?;
    let base = rng.child(TAG_PAIRS);
    let mut out = Vec::with_capacity(num_pairs);
    for pair in 0..num_pairs {
        let stream = base.child(pair as u64);
        let draw = |tag: u64| {
            let mut s = stream.child(tag);
            (0..circuit.n_params)
                .map(|_| s.uniform(0.0, std::f64::consts::TAU))
                .collect::<Vec<f64>>()
        };
        let theta = draw(TAG_THETA);
        let phi = draw(TAG_PHI);
        out.push(pair_fidelity(
            circuit,
            &theta,
            &phi,
            mode,
            backend,
            shots,
            &stream.child(TAG_SHOTS),
        )?);
    }
    Ok(out)
}

/// Full expressibility estimate; deterministic given `cfg.seed`.
pub fn expressibility(
    circuit: &Circuit,
    backend: &BackendModel,
    cfg: &ExprConfig,
) -> Result<ExpressibilityResult> {
    let rng = RngStream::new(cfg.seed);
    let fidelities =
        sample_fidelities(circuit, cfg.num_pairs, cfg.mode, backend, cfg.shots, &rng)?;
    let histogram = FidelityHistogram::from_fidelities(&fidelities, cfg.n_bins)?;
    let expr = kl_vs_haar(&histogram.probs(), circuit.n_qubits);
    Ok(ExpressibilityResult {
        expr,
        num_pairs: cfg.num_pairs,
        mode: cfg.mode,
        shots_per_pair: match cfg.mode {
            ExprMode::Exact => 0,
            _ => cfg.shots,
        },
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Gate, GateKind, Param};
    use crate::transpile::CouplingMap;

    fn noiseless(n: usize) -> BackendModel {
        BackendModel::ideal(n, CouplingMap::full(n))
    }

    fn rx_circuit() -> Circuit {
        Circuit::new(1, 1, vec![Gate::one_p(GateKind::RX, 0, Param::Sym { sym: 0 })]).unwrap()
    }

    #[test]
    fn haar_bins_are_uniform_for_one_qubit() {
        let q = haar_bin_probs(1, 75);
        for &v in &q {
            assert!((v - 1.0 / 75.0).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn haar_bins_sum_to_one() {
        for n in 1..=8 {
            let q = haar_bin_probs(n, 75);
            let sum: f64 = q.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "n = {n}: {sum}");
        }
    }

    #[test]
    fn haar_first_bin_matches_closed_form() {
        // n = 2 (N = 4), first bin [0, 1/75]: 1 - (74/75)^3.
        let q = haar_bin_probs(2, 75);
        let want = 1.0 - (74.0f64 / 75.0).powi(3);
        assert!((q[0] - want).abs() < 1e-15);
        assert!((want - 0.0394691).abs() < 1e-6);
    }

    #[test]
    fn haar_bins_decrease_for_larger_registers() {
        let q = haar_bin_probs(3, 75);
        for w in q.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(q.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn haar_ln_probs_match_direct_logs() {
        for n in 1..=6 {
            let q = haar_bin_probs(n, 75);
            let lq = haar_bin_ln_probs(n, 75);
            for (v, lv) in q.iter().zip(lq.iter()) {
                assert!((v.ln() - lv).abs() < 1e-10, "n={n}: {} vs {lv}", v.ln());
            }
        }
    }

    #[test]
    fn haar_ln_probs_survive_ten_qubits() {
        // Raw probabilities underflow near F = 1 for n = 10; the log form
        // must stay finite.
        let lq = haar_bin_ln_probs(10, 75);
        assert!(lq.iter().all(|v| v.is_finite()));
        let q = haar_bin_probs(10, 75);
        assert_eq!(q[74], 0.0, "raw tail underflows as expected");
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = haar_bin_probs(3, 75);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_of_delta_against_uniform_is_ln_bins() {
        let mut p = vec![0.0; 75];
        p[40] = 1.0;
        let q = vec![1.0 / 75.0; 75];
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - 75.0f64.ln()).abs() < 1e-12);
        assert!((kl - 4.31749).abs() < 1e-5);
    }

    #[test]
    fn kl_two_bin_example() {
        let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        let want = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl - want).abs() < 1e-15);
        assert!((kl - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn kl_rejects_zero_q_under_positive_p() {
        let err = kl_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn kl_rejects_unnormalized_input() {
        assert!(kl_divergence(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn parameterless_circuit_has_unit_fidelities() {
        let c = Circuit::new(1, 0, vec![Gate::one(GateKind::H, 0)]).unwrap();
        let f = sample_fidelities(&c, 16, ExprMode::Exact, &noiseless(1), 0, &RngStream::new(1))
            .unwrap();
        for v in f {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rx_pair_fidelity_matches_closed_form() {
        let c = rx_circuit();
        let backend = noiseless(1);
        let mut rng = RngStream::new(3);
        for _ in 0..20 {
            let theta = rng.uniform(0.0, std::f64::consts::TAU);
            let phi = rng.uniform(0.0, std::f64::consts::TAU);
            let f = pair_fidelity(
                &c,
                &[theta],
                &[phi],
                ExprMode::Exact,
                &backend,
                0,
                &RngStream::new(0),
            )
            .unwrap();
            let want = ((theta - phi) / 2.0).cos().powi(2);
            assert!((f - want).abs() < 1e-10, "{f} vs {want}");
        }
    }

    #[test]
    fn forced_equal_parameters_give_unit_fidelity() {
        let c = rx_circuit();
        let f = pair_fidelity(
            &c,
            &[1.234],
            &[1.234],
            ExprMode::Exact,
            &noiseless(1),
            0,
            &RngStream::new(0),
        )
        .unwrap();
        assert!((f - 1.0).abs() < 1e-10);
    }

    #[test]
    fn idle_circuit_expressibility_matches_closed_form() {
        for n in 1..=3 {
            let c = Circuit::empty(n).unwrap();
            let cfg = ExprConfig { num_pairs: 200, seed: 7, ..Default::default() };
            let r = expressibility(&c, &noiseless(n), &cfg).unwrap();
            let want = ((1u64 << n) - 1) as f64 * 75.0f64.ln();
            assert!((r.expr - want).abs() < 1e-9, "n={n}: {} vs {want}", r.expr);
            assert_eq!(r.histogram.counts[74], 200);
        }
    }

    #[test]
    fn expressibility_is_deterministic_and_order_invariant() {
        let c = rx_circuit();
        let cfg = ExprConfig { num_pairs: 300, seed: 11, ..Default::default() };
        let backend = noiseless(1);
        let a = expressibility(&c, &backend, &cfg).unwrap();
        let b = expressibility(&c, &backend, &cfg).unwrap();
        assert_eq!(a.expr, b.expr);
        assert_eq!(a.histogram, b.histogram);
        // Histogramming is permutation invariant by construction; check the
        // histogram against a manual shuffle of the fidelity sample.
        let mut f =
            sample_fidelities(&c, 300, ExprMode::Exact, &backend, 0, &RngStream::new(11)).unwrap();
        let h1 = FidelityHistogram::from_fidelities(&f, 75).unwrap();
        RngStream::new(99).shuffle(&mut f);
        let h2 = FidelityHistogram::from_fidelities(&f, 75).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1, a.histogram);
    }

    #[test]
    fn rx_expressibility_matches_integration_oracle() {
        // Oracle: F = cos^2((theta-phi)/2) with theta-phi uniform gives the
        // arcsine law; its exact bin mass is CDF(b) - CDF(a) with
        // CDF(x) = 1 - arccos(2x - 1) / pi. The KL of those bins against the
        // Haar bins is the infinite-sample limit of the estimator.
        let bins = 75;
        let cdf = |x: f64| 1.0 - (2.0 * x - 1.0).clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
        let p_exact: Vec<f64> = (0..bins)
            .map(|k| cdf((k + 1) as f64 / bins as f64) - cdf(k as f64 / bins as f64))
            .collect();
        let oracle = kl_vs_haar(&p_exact, 1);

        let c = rx_circuit();
        let backend = noiseless(1);
        for seed in 0..3 {
            let cfg = ExprConfig { num_pairs: 5000, seed, ..Default::default() };
            let r = expressibility(&c, &backend, &cfg).unwrap();
            assert!(
                (r.expr - oracle).abs() < 0.05,
                "seed {seed}: sampled {} vs oracle {oracle}",
                r.expr
            );
        }
    }

    #[test]
    fn more_pairs_shrink_seed_variance() {
        let c = rx_circuit();
        let backend = noiseless(1);
        let spread = |num_pairs: usize| {
            let vals: Vec<f64> = (0..10)
                .map(|seed| {
                    let cfg = ExprConfig { num_pairs, seed, ..Default::default() };
                    expressibility(&c, &backend, &cfg).unwrap().expr
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64).sqrt()
        };
        let s_small = spread(500);
        let s_large = spread(2000);
        assert!(
            s_large < s_small,
            "std at 2000 pairs ({s_large}) should fall below std at 500 ({s_small})"
        );
    }

    #[test]
    fn sampled_mode_requires_noiseless_backend() {
        let noisy = BackendModel::preset("synth_mid").unwrap();
        let c = rx_circuit();
        assert!(matches!(
            sample_fidelities(&c, 4, ExprMode::Sampled, &noisy, 64, &RngStream::new(0)),
            Err(Error::Profile(_))
        ));
        assert!(matches!(
            sample_fidelities(&c, 4, ExprMode::Noisy, &noiseless(1), 64, &RngStream::new(0)),
            Err(Error::Profile(_))
        ));
    }
}
