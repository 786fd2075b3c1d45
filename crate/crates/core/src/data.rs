//! Pattern, example and probe generation.
//!
//! All spins live in `{-1, +1}` and are stored as `i8`. `Rad(p)` denotes the
//! biased binary distribution taking `+1` with probability `(1+p)/2`, so that
//! the expectation of a draw is exactly `p`.

use crate::error::{Error, Result};
use crate::rng::RngSpec;
use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rayon::prelude::*;

/// A configuration of `N` binary neurons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryConfig {
    spins: Vec<i8>,
}

impl BinaryConfig {
    /// Validates that every entry is exactly -1 or +1 and that N >= 1.
    pub fn from_spins(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::ShapeMismatch(
                "a configuration needs at least one spin".into(),
            ));
        }
        if let Some(&bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::ShapeMismatch(format!(
                "spin value {bad} is not in {{-1,+1}}"
            )));
        }
        Ok(Self { spins })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Normalized overlap `(1/N) sum_i x_i y_i` (a Mattis magnetization when
    /// `y` is a stored pattern).
    pub fn overlap(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "overlap of mismatched configs");
        let dot: i64 = self
            .spins
            .iter()
            .zip(&other.spins)
            .map(|(&a, &b)| (a as i64) * (b as i64))
            .sum();
        dot as f64 / self.len() as f64
    }

    /// Hamming distance `(1/4) sum_i (x_i - y_i)^2`, i.e. the number of
    /// disagreeing sites.
    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.len(), other.len(), "hamming of mismatched configs");
        self.spins
            .iter()
            .zip(&other.spins)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// The hidden archetypes: a `P x N` matrix of `{-1,+1}` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthSet {
    data: Vec<i8>, // row-major P x N
    p: usize,
    n: usize,
}

impl GroundTruthSet {
    pub fn num_patterns(&self) -> usize {
        self.p
    }

    pub fn num_neurons(&self) -> usize {
        self.n
    }

    pub fn load(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn pattern(&self, mu: usize) -> &[i8] {
        &self.data[mu * self.n..(mu + 1) * self.n]
    }

    pub fn pattern_config(&self, mu: usize) -> BinaryConfig {
        BinaryConfig {
            spins: self.pattern(mu).to_vec(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.data.chunks_exact(self.n)
    }

    /// Build from raw row-major data; used by the dump reader.
    pub fn from_raw(data: Vec<i8>, p: usize, n: usize) -> Result<Self> {
        if p == 0 || n == 0 || data.len() != p * n {
            return Err(Error::ShapeMismatch(format!(
                "ground-truth data of length {} does not match P={p} x N={n}",
                data.len()
            )));
        }
        if p > n {
            return Err(Error::LoadDomain { p, n });
        }
        if data.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Format("ground-truth entries must be +-1".into()));
        }
        Ok(Self { data, p, n })
    }

    /// Flip the sign of pattern `mu` in place (test helper for gauge checks).
    pub fn flip_pattern(&mut self, mu: usize) {
        for s in &mut self.data[mu * self.n..(mu + 1) * self.n] {
            *s = -*s;
        }
    }
}

/// Noisy examples: a `P x M x N` tensor with `examples[mu][a] = chi ⊙ zeta^mu`
/// where each `chi` entry is an independent `Rad(r)` draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    data: Vec<i8>, // row-major P x M x N
    p: usize,
    m: usize,
    n: usize,
    r: f64,
}

impl ExampleSet {
    pub fn num_classes(&self) -> usize {
        self.p
    }

    pub fn per_class(&self) -> usize {
        self.m
    }

    pub fn num_neurons(&self) -> usize {
        self.n
    }

    pub fn quality(&self) -> f64 {
        self.r
    }

    pub fn example(&self, mu: usize, a: usize) -> &[i8] {
        let start = (mu * self.m + a) * self.n;
        &self.data[start..start + self.n]
    }

    pub fn example_config(&self, mu: usize, a: usize) -> BinaryConfig {
        BinaryConfig {
            spins: self.example(mu, a).to_vec(),
        }
    }

    pub fn from_raw(data: Vec<i8>, p: usize, m: usize, n: usize, r: f64) -> Result<Self> {
        let expect = p
            .checked_mul(m)
            .and_then(|pm| pm.checked_mul(n))
            .ok_or_else(|| Error::Format("example tensor dimensions overflow".into()))?;
        if p == 0 || m == 0 || n == 0 || data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "example data of length {} does not match P={p} x M={m} x N={n}",
                data.len()
            )));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::ParameterDomain {
                name: "r",
                value: r,
                domain: "[0,1]",
            });
        }
        if data.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Format("example entries must be +-1".into()));
        }
        Ok(Self { data, p, m, n, r })
    }

    /// Flip the sign of every example of class `mu` in place (test helper).
    pub fn flip_class(&mut self, mu: usize) {
        let start = mu * self.m * self.n;
        for s in &mut self.data[start..start + self.m * self.n] {
            *s = -*s;
        }
    }
}

/// Draw `n` i.i.d. `Rad(p)` spins, `p` in `[-1, 1]`.
pub fn sample_rademacher(p: f64, n: usize, rng: &RngSpec) -> Result<BinaryConfig> {
    if !(-1.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::ParameterDomain {
            name: "p",
            value: p,
            domain: "[-1,1]",
        });
    }
    if n == 0 {
        return Err(Error::ShapeMismatch("need n >= 1 spins".into()));
    }
    let mut out = vec![0i8; n];
    fill_rademacher(&mut out, p, &mut rng.rng());
    Ok(BinaryConfig { spins: out })
}

/// Fill a slice with i.i.d. `Rad(p)` spins from an already-instantiated rng.
pub(crate) fn fill_rademacher<R: Rng>(out: &mut [i8], p: f64, rng: &mut R) {
    if p == 0.0 {
        // Unbiased case: one bit per spin, 64 spins per draw.
        let mut chunks = out.chunks_exact_mut(64);
        for chunk in &mut chunks {
            let mut word: u64 = rng.random();
            for s in chunk.iter_mut() {
                *s = if word & 1 == 1 { 1 } else { -1 };
                word >>= 1;
            }
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let mut word: u64 = rng.random();
            for s in rem.iter_mut() {
                *s = if word & 1 == 1 { 1 } else { -1 };
                word >>= 1;
            }
        }
    } else {
        // `Bernoulli` is exact at the endpoints, so p = +-1 degenerates
        // to a constant configuration as required.
        let bern = Bernoulli::new((1.0 + p) / 2.0).expect("probability in [0,1]");
        for s in out.iter_mut() {
            *s = if bern.sample(rng) { 1 } else { -1 };
        }
    }
}

/// Sample `P` unbiased Rademacher patterns of size `N`.
///
/// Requires `1 <= P <= N` so the load `alpha = P/N` stays in `(0, 1]`.
pub fn make_ground_truths(n: usize, p: usize, rng: &RngSpec) -> Result<GroundTruthSet> {
    if p == 0 || n == 0 || p > n {
        return Err(Error::LoadDomain { p, n });
    }
    let mut data = vec![0i8; p * n];
    data.par_chunks_exact_mut(n).enumerate().for_each(|(mu, row)| {
        fill_rademacher(row, 0.0, &mut rng.substream(mu as u64).rng());
    });
    Ok(GroundTruthSet { data, p, n })
}

/// Generate `M` noisy examples per archetype by independent entry flips:
/// `examples[mu][a][i] = chi * zeta^mu_i` with `chi ~ Rad(r)`.
///
/// Each `(mu, a)` pair draws from its own derived stream, so generation is
/// order-independent and parallelizes deterministically.
pub fn make_examples(gt: &GroundTruthSet, m: usize, r: f64, rng: &RngSpec) -> Result<ExampleSet> {
    if !(0.0..=1.0).contains(&r) || !r.is_finite() {
        return Err(Error::ParameterDomain {
            name: "r",
            value: r,
            domain: "[0,1]",
        });
    }
    if m == 0 {
        return Err(Error::ShapeMismatch("need M >= 1 examples per class".into()));
    }
    let (p, n) = (gt.num_patterns(), gt.num_neurons());
    let mut data = vec![0i8; p * m * n];
    data.par_chunks_exact_mut(n).enumerate().for_each(|(idx, row)| {
        let (mu, a) = (idx / m, idx % m);
        let mut local = rng.substream2(mu as u64, a as u64).rng();
        let zeta = gt.pattern(mu);
        fill_rademacher(row, r, &mut local);
        for (x, &z) in row.iter_mut().zip(zeta) {
            *x *= z;
        }
    });
    Ok(ExampleSet { data, p, m, n, r })
}

/// Multiplicative perturbation `x'_i = eta_i x_i` with `eta ~ Rad(p)`.
///
/// For probes `p` is restricted to `[0,1]`; the expected Hamming distance to
/// `x` is `N(1-p)/2` and the expected overlap is `p`.
pub fn perturb_on_ball(x: &BinaryConfig, p: f64, rng: &RngSpec) -> Result<BinaryConfig> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::ParameterDomain {
            name: "p",
            value: p,
            domain: "[0,1]",
        });
    }
    let mut spins = vec![0i8; x.len()];
    fill_rademacher(&mut spins, p, &mut rng.rng());
    for (e, &xi) in spins.iter_mut().zip(x.spins()) {
        *e *= xi;
    }
    Ok(BinaryConfig { spins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> RngSpec {
        RngSpec::new(2024, 0)
    }

    #[test]
    fn degenerate_rademacher_endpoints() {
        let plus = sample_rademacher(1.0, 5, &spec()).unwrap();
        assert!(plus.spins().iter().all(|&s| s == 1));
        let minus = sample_rademacher(-1.0, 5, &spec()).unwrap();
        assert!(minus.spins().iter().all(|&s| s == -1));
    }

    #[test]
    fn rademacher_mean_concentrates() {
        // CLT: |mean| < 4/sqrt(n) holds with probability ~0.99994; the seed
        // is fixed, so this is deterministic.
        let n = 1_000_000;
        let x = sample_rademacher(0.0, n, &spec()).unwrap();
        let mean: f64 = x.spins().iter().map(|&s| s as f64).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn rademacher_rejects_bad_p() {
        assert!(sample_rademacher(1.5, 4, &spec()).is_err());
        assert!(sample_rademacher(f64::NAN, 4, &spec()).is_err());
    }

    #[test]
    fn ground_truths_deterministic() {
        let a = make_ground_truths(4, 2, &spec()).unwrap();
        let b = make_ground_truths(4, 2, &spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ground_truths_reject_overload() {
        assert!(make_ground_truths(4, 5, &spec()).is_err());
        assert!(make_ground_truths(4, 0, &spec()).is_err());
    }

    #[test]
    fn pattern_cross_correlations_are_small() {
        // Off-diagonal C_{mu nu} = (1/N) xi^mu . xi^nu should be O(1/sqrt N).
        let (n, p) = (1000, 300);
        let gt = make_ground_truths(n, p, &spec()).unwrap();
        let mut max_off = 0.0f64;
        for mu in 0..p {
            for nu in (mu + 1)..p {
                let dot: i64 = gt
                    .pattern(mu)
                    .iter()
                    .zip(gt.pattern(nu))
                    .map(|(&a, &b)| (a as i64) * (b as i64))
                    .sum();
                max_off = max_off.max((dot as f64 / n as f64).abs());
            }
        }
        assert!(max_off < 5.0 / (n as f64).sqrt(), "max |C| = {max_off}");
    }

    #[test]
    fn perfect_examples_equal_archetypes() {
        let gt = make_ground_truths(16, 3, &spec()).unwrap();
        let ex = make_examples(&gt, 4, 1.0, &spec()).unwrap();
        for mu in 0..3 {
            for a in 0..4 {
                assert_eq!(ex.example(mu, a), gt.pattern(mu));
            }
        }
    }

    #[test]
    fn orthogonal_examples_at_r_zero() {
        let gt = make_ground_truths(4096, 2, &spec()).unwrap();
        let ex = make_examples(&gt, 8, 0.0, &spec()).unwrap();
        let mut acc = 0.0;
        for mu in 0..2 {
            for a in 0..8 {
                let dot: i64 = ex
                    .example(mu, a)
                    .iter()
                    .zip(gt.pattern(mu))
                    .map(|(&x, &z)| (x as i64) * (z as i64))
                    .sum();
                acc += dot as f64 / 4096.0;
            }
        }
        assert!((acc / 16.0).abs() < 0.02, "mean overlap {}", acc / 16.0);
    }

    #[test]
    fn example_noise_mean_matches_quality() {
        // (1/M) sum_A chi^{mu,A}_i ~ r +- O(1/sqrt M) per entry.
        let gt = make_ground_truths(16, 2, &spec()).unwrap();
        let m = 10_000;
        let ex = make_examples(&gt, m, 0.5, &spec()).unwrap();
        for mu in 0..2 {
            for i in 0..16 {
                let mut sum = 0i64;
                for a in 0..m {
                    sum += (ex.example(mu, a)[i] * gt.pattern(mu)[i]) as i64;
                }
                let mean = sum as f64 / m as f64;
                // sd of the mean is ~0.0087; 4 sd covers the 32 fixed-seed draws.
                assert!((mean - 0.5).abs() < 0.035, "chi mean {mean}");
            }
        }
    }

    #[test]
    fn example_noise_is_independent_across_sites() {
        // 2x2 contingency of (chi_i, chi_{i+1}) across examples; chi-square
        // with 1 dof should stay well under ~11 (p ~ 1e-3) at a fixed seed.
        let gt = make_ground_truths(64, 1, &spec()).unwrap();
        let m = 4000;
        let ex = make_examples(&gt, m, 0.3, &spec()).unwrap();
        let chi = |a: usize, i: usize| ex.example(0, a)[i] * gt.pattern(0)[i];
        let mut counts = [[0f64; 2]; 2];
        for a in 0..m {
            let u = (chi(a, 10) == 1) as usize;
            let v = (chi(a, 11) == 1) as usize;
            counts[u][v] += 1.0;
        }
        let tot = m as f64;
        let (r0, r1) = (counts[0][0] + counts[0][1], counts[1][0] + counts[1][1]);
        let (c0, c1) = (counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]);
        let mut stat = 0.0;
        for (u, ru) in [(0, r0), (1, r1)] {
            for (v, cv) in [(0, c0), (1, c1)] {
                let expect = ru * cv / tot;
                stat += (counts[u][v] - expect).powi(2) / expect;
            }
        }
        assert!(stat < 11.0, "chi-square stat {stat}");
    }

    #[test]
    fn perturb_identity_at_p_one() {
        let x = sample_rademacher(0.0, 100, &spec()).unwrap();
        let y = perturb_on_ball(&x, 1.0, &spec().substream(1)).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.hamming(&y), 0);
    }

    #[test]
    fn perturb_at_p_zero_is_half_distance() {
        let n = 10_000;
        let x = sample_rademacher(0.0, n, &spec()).unwrap();
        let y = perturb_on_ball(&x, 0.0, &spec().substream(1)).unwrap();
        let frac = x.hamming(&y) as f64 / n as f64;
        assert!((0.47..=0.53).contains(&frac), "flip fraction {frac}");
    }

    #[test]
    fn perturb_overlap_approaches_p() {
        let n = 50_000;
        let p = 0.6;
        let x = sample_rademacher(0.0, n, &spec()).unwrap();
        let y = perturb_on_ball(&x, p, &spec().substream(1)).unwrap();
        assert!((x.overlap(&y) - p).abs() < 0.02);
        // d_H = N(1-p)/2 on average.
        let expect = n as f64 * (1.0 - p) / 2.0;
        assert!((x.hamming(&y) as f64 - expect).abs() < 0.02 * n as f64);
    }

    #[test]
    fn binary_config_validation() {
        assert!(BinaryConfig::from_spins(vec![]).is_err());
        assert!(BinaryConfig::from_spins(vec![1, 0, -1]).is_err());
        assert!(BinaryConfig::from_spins(vec![1, -1, 1]).is_ok());
    }
}
