//! Seeded Monte Carlo oracles: slab measures, the counting function
//! `𝒩(X, h)`, the expectation identity, quasi-independence sums, and
//! Schmidt residuals.
//!
//! Sample `i` belongs to batch `i / BATCH`. Batch `b` draws from a ChaCha8
//! stream keyed by `(seed, b)`, and batch statistics are merged in batch
//! order, so every estimate is a function of `(seed, samples)` alone.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{classify_raw, IntVec, Membership, SlabSpec};
use crate::numtheory::{factorize, gcd_u64, mobius_product};
use crate::rational::{self, Rational};
use crate::series::{
    phi_chi, primitive_count, sphere_count, sum_b_prime_measures, ApproxFunction, Convention,
    MultiApproxFunction,
};

/// Samples per RNG stream.
pub const BATCH: u64 = 4096;
/// Redraws allowed for a sample that lands within the boundary guard.
const MAX_REDRAWS: u32 = 10_000;
/// Largest number of lattice points held in memory by the pair samplers.
const SPHERE_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCConfig {
    pub seed: u64,
    pub samples: u64,
    /// Threads used; never changes the result.
    pub workers: usize,
}

impl MCConfig {
    pub fn new(seed: u64, samples: u64, workers: usize) -> Self {
        Self {
            seed,
            samples,
            workers,
        }
    }

    fn check(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::domain("Monte Carlo needs at least one sample"));
        }
        Ok(())
    }

    /// Same sample count under an independent seed.
    fn derived(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(tag)),
            ..*self
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl MCEstimate {
    /// `|mean − exact| <= k·std_error`.
    pub fn within(&self, exact: f64, k: f64) -> bool {
        (self.mean - exact).abs() <= k * self.std_error
    }

    fn exact(value: f64, cfg: &MCConfig) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            samples: cfg.samples,
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Welford) -> Welford {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64,
        }
    }
}

fn pool(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let workers = workers.max(1);
    let mut pools = POOLS
        .get_or_init(Default::default)
        .lock()
        .expect("pool cache poisoned");
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("failed to start worker pool"),
            )
        })
        .clone()
}

/// Runs `f` on `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    pool(workers).install(f)
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Mean and standard error of `f` over `cfg.samples` draws. `init` builds the
/// per-batch scratch state handed to `f` together with the batch's RNG.
pub fn mc_expectation_with<S, I, F>(cfg: &MCConfig, init: I, f: F) -> Result<MCEstimate>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &mut ChaCha8Rng) -> f64 + Sync,
{
    cfg.check()?;
    let batches = cfg.samples.div_ceil(BATCH);
    let parts: Vec<Welford> = with_workers(cfg.workers, || {
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = batch_rng(cfg.seed, b);
                let mut state = init();
                let count = BATCH.min(cfg.samples - b * BATCH);
                let mut w = Welford::default();
                for _ in 0..count {
                    w.push(f(&mut state, &mut rng));
                }
                w
            })
            .collect()
    });
    let total = parts.into_iter().fold(Welford::default(), Welford::merge);
    let var = if total.n > 1 {
        total.m2 / (total.n - 1) as f64
    } else {
        0.0
    };
    Ok(MCEstimate {
        mean: total.mean,
        std_error: (var.max(0.0) / total.n as f64).sqrt(),
        samples: cfg.samples,
        seed: cfg.seed,
    })
}

fn fill_uniform(rng: &mut ChaCha8Rng, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = rng.random::<f64>();
    }
}

/// Lebesgue measure of `{X ∈ [0,1]^dims : pred(X)}`. Boundary samples are
/// redrawn from the same stream.
pub fn mc_measure<P>(pred: P, dims: usize, cfg: &MCConfig) -> Result<MCEstimate>
where
    P: Fn(&[f64]) -> Membership + Sync,
{
    mc_expectation_with(
        cfg,
        || vec![0.0; dims],
        |x, rng| {
            for _ in 0..MAX_REDRAWS {
                fill_uniform(rng, x);
                match pred(x) {
                    Membership::Inside => return 1.0,
                    Membership::Outside => return 0.0,
                    Membership::Boundary => {}
                }
            }
            0.0
        },
    )
}

fn pair_membership(x: &[f64], a: &SlabSpec, b: &SlabSpec) -> Membership {
    let ca = classify_slab(x, a);
    if ca == Membership::Outside {
        return ca;
    }
    match (ca, classify_slab(x, b)) {
        (_, Membership::Outside) => Membership::Outside,
        (Membership::Inside, Membership::Inside) => Membership::Inside,
        _ => Membership::Boundary,
    }
}

fn classify_slab(x: &[f64], s: &SlabSpec) -> Membership {
    crate::measures::classify(x, s)
}

/// `|B(q1) ∩ B(q2)|` (or the `B'` variants) by uniform sampling.
pub fn mc_joint_measure(s1: &SlabSpec, s2: &SlabSpec, cfg: &MCConfig) -> Result<MCEstimate> {
    if s1.dims() != s2.dims() || s1.m() != s2.m() {
        return Err(Error::domain("slabs live in different spaces"));
    }
    mc_measure(|x| pair_membership(x, s1, s2), s1.dims(), cfg)
}

/// One line of the parallel-pair audit.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub q1: IntVec,
    pub q2: IntVec,
    #[serde(with = "rational::text")]
    pub delta1: Rational,
    #[serde(with = "rational::text")]
    pub delta2: Rational,
    pub joint: MCEstimate,
    /// `joint / (δ1·δ2)^m`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub rows: Vec<AuditRow>,
    pub max_ratio: f64,
}

/// Estimates `|B'_1 ∩ B'_2| / (δ1 δ2)^m` for each pair and records the largest.
pub fn parallel_pair_audit(pairs: &[(SlabSpec, SlabSpec)], cfg: &MCConfig) -> Result<Audit> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (k, (a, b)) in pairs.iter().enumerate() {
        let joint = mc_joint_measure(a, b, &cfg.derived(k as u64))?;
        let scale = rational::to_f64(&rational::pow(&(a.delta() * b.delta()), a.m()));
        rows.push(AuditRow {
            q1: a.q().clone(),
            q2: b.q().clone(),
            delta1: a.delta().clone(),
            delta2: b.delta().clone(),
            joint,
            ratio: joint.mean / scale,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(Audit { rows, max_ratio })
}

/// Precomputed thresholds for `𝒩(X, h)`.
pub struct SolutionCounter {
    n: usize,
    m: usize,
    h: u64,
    kind: Thresholds,
}

enum Thresholds {
    /// Threshold by sup norm; `plane` restricts to `q = (q1, q2, 0, …)`.
    ByNorm {
        psi: Vec<f64>,
        plane: bool,
    },
    ByVector(Vec<(Vec<i64>, f64)>),
}

impl SolutionCounter {
    /// Checks `Ψ(q) < 1/2` for every `0 < |q| <= h`.
    pub fn new(psi: &MultiApproxFunction, m: u32, h: u64) -> Result<Self> {
        let n = psi.dim() as usize;
        if m == 0 || n == 0 {
            return Err(Error::domain("n and m must be >= 1"));
        }
        let points = (2 * h as u128 + 1)
            .checked_pow(n as u32)
            .unwrap_or(u128::MAX);
        if points > SPHERE_CAP {
            return Err(Error::capacity(format!(
                "|q| <= {h} in dimension {n} is beyond the enumeration cap"
            )));
        }
        let half_m = rational::pow(&rational::ratio(1, 2), m);
        let kind = match psi {
            MultiApproxFunction::NormLift { psi: f, .. }
            | MultiApproxFunction::PlaneLift { psi: f, .. } => {
                let mut by_norm = vec![0.0; h as usize + 1];
                for k in 1..=h {
                    if f.psi_pow(&BigUint::from(k), m)? >= half_m {
                        let mut q = vec![0i64; n];
                        q[0] = k as i64;
                        return Err(Error::domain(format!("Ψ(q) >= 1/2 at q = {q:?}")));
                    }
                    by_norm[k as usize] = f.psi_f64(k);
                }
                Thresholds::ByNorm {
                    psi: by_norm,
                    plane: matches!(psi, MultiApproxFunction::PlaneLift { .. }),
                }
            }
            MultiApproxFunction::Table { values, .. } => {
                let mut list = Vec::new();
                for (q, v) in values {
                    let norm = q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
                    if norm > h || v.is_zero() {
                        continue;
                    }
                    if rational::pow(v, m) >= half_m {
                        return Err(Error::domain(format!("Ψ(q) >= 1/2 at q = {q:?}")));
                    }
                    list.push((q.clone(), rational::to_f64(v)));
                }
                Thresholds::ByVector(list)
            }
        };
        Ok(Self {
            n,
            m: m as usize,
            h,
            kind,
        })
    }

    /// Whether `(p, q)` with `p = −round(qX)` solves `|qX + p| < t`.
    #[inline]
    fn solves(&self, x: &[f64], q: &[i64], t: f64, coprime: bool) -> bool {
        if t <= 0.0 {
            return false;
        }
        let m = self.m;
        let mut g = 0u64;
        if coprime {
            g = q.iter().fold(0, |g, &c| gcd_u64(g, c.unsigned_abs()));
        }
        for j in 0..m {
            let mut a = 0.0;
            for (i, &qi) in q.iter().enumerate() {
                if qi != 0 {
                    a += qi as f64 * x[i * m + j];
                }
            }
            let r = a.round();
            if (a - r).abs() >= t {
                return false;
            }
            if coprime {
                g = gcd_u64(g, r.abs() as u64);
            }
        }
        !coprime || g == 1
    }

    /// Solutions with `|q| = k` for each `k <= h`.
    pub fn count_by_norm(&self, x: &[f64], coprime: bool) -> Vec<u64> {
        assert_eq!(x.len(), self.n * self.m, "point has wrong dimension");
        let mut counts = vec![0u64; self.h as usize + 1];
        match &self.kind {
            Thresholds::ByVector(list) => {
                for (q, t) in list {
                    if self.solves(x, q, *t, coprime) {
                        counts[q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) as usize] += 1;
                    }
                }
            }
            Thresholds::ByNorm { psi, plane } => {
                let h = self.h as i64;
                let active = if *plane { self.n.min(2) } else { self.n };
                let mut q = vec![0i64; self.n];
                // Half space: the first nonzero coordinate is positive; ±q solve together.
                for lead in 0..active {
                    for c in q.iter_mut() {
                        *c = 0;
                    }
                    for v in 1..=h {
                        q[lead] = v;
                        let tail = &mut vec![-h; active - lead - 1];
                        loop {
                            q[lead + 1..active].copy_from_slice(tail);
                            let norm = q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
                            if self.solves(x, &q, psi[norm as usize], coprime) {
                                counts[norm as usize] += 2;
                            }
                            let mut i = 0;
                            while i < tail.len() && tail[i] == h {
                                tail[i] = -h;
                                i += 1;
                            }
                            if i == tail.len() {
                                break;
                            }
                            tail[i] += 1;
                        }
                    }
                }
            }
        }
        counts
    }

    /// Cumulative counts `𝒩(X, h_k)` for each `h_k` in `grid`.
    pub fn count_profile(&self, x: &[f64], grid: &[u64], coprime: bool) -> Result<Vec<u64>> {
        if let Some(&g) = grid.iter().find(|&&g| g > self.h) {
            return Err(Error::domain(format!(
                "grid point {g} beyond the prepared horizon {}",
                self.h
            )));
        }
        let by_norm = self.count_by_norm(x, coprime);
        let mut prefix = Vec::with_capacity(by_norm.len());
        let mut acc = 0u64;
        for c in by_norm {
            acc += c;
            prefix.push(acc);
        }
        Ok(grid.iter().map(|&g| prefix[g as usize]).collect())
    }
}

/// `𝒩(X, h)`: pairs `(p, q)`, `0 < |q| <= h`, with `|qX + p| < Ψ(q)`, optionally
/// with `gcd(p, q) = 1`. `X` is `n×m`, row-major.
pub fn count_solutions(
    x: &[f64],
    psi: &MultiApproxFunction,
    m: u32,
    h: u64,
    coprime: bool,
) -> Result<u64> {
    let counter = SolutionCounter::new(psi, m, h)?;
    if x.len() != counter.n * counter.m {
        return Err(Error::domain("X has the wrong shape"));
    }
    Ok(counter.count_by_norm(x, coprime).iter().sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectedCountReport {
    pub h: u64,
    #[serde(with = "rational::text")]
    pub exact: Rational,
    pub estimate: MCEstimate,
    pub passed: bool,
}

/// Compares the Monte Carlo mean of `𝒩'(X, h)` with `Σ_{|q|≤h} |B'_q(ψ)|`.
pub fn expected_count_check(
    psi: &ApproxFunction,
    n: u32,
    m: u32,
    h: u64,
    cfg: &MCConfig,
) -> Result<ExpectedCountReport> {
    let exact = sum_b_prime_measures(psi, n, m, h)?;
    let lift = MultiApproxFunction::NormLift {
        psi: psi.clone(),
        n,
    };
    let counter = SolutionCounter::new(&lift, m, h)?;
    let dims = (n * m) as usize;
    let estimate = mc_expectation_with(
        cfg,
        || vec![0.0; dims],
        |x, rng| {
            fill_uniform(rng, x);
            counter.count_by_norm(x, true).iter().sum::<u64>() as f64
        },
    )?;
    let passed = estimate.within(rational::to_f64(&exact), 4.0);
    Ok(ExpectedCountReport {
        h,
        exact,
        estimate,
        passed,
    })
}

/// Second-moment sums for `E_q = B'(q, ψ(|q|))`, `0 < |q| <= N`.
#[derive(Debug, Clone, Serialize)]
pub struct QIAReport {
    pub n: u32,
    pub m: u32,
    #[serde(rename = "N")]
    pub big_n: u64,
    /// `S_N = Σ |E_q|`.
    #[serde(rename = "S_N", with = "rational::text")]
    pub s_n: Rational,
    /// Pairs `q2 = ±q1`: `2·S_N`.
    #[serde(rename = "D_N_diag", with = "rational::text")]
    pub d_diag: Rational,
    /// Non-parallel pairs of primitive vectors, where `E_q = B_q` and the
    /// intersection is the product.
    #[serde(rename = "D_N_offdiag_exact", with = "rational::text")]
    pub d_exact: Rational,
    /// Non-parallel pairs with a non-primitive member. Also a product: membership
    /// in `E_q` depends only on `r·X mod 1` for `q = d·r`.
    #[serde(rename = "D_N_nonprimitive_exact", with = "rational::text")]
    pub d_nonprimitive: Rational,
    /// Parallel pairs `q2 ≠ ±q1`.
    #[serde(rename = "D_N_parallel")]
    pub d_parallel: MCEstimate,
    pub pair_counts: PairCounts,
    #[serde(rename = "D_N")]
    pub d_n: f64,
    #[serde(rename = "D_N_std_error")]
    pub d_n_std_error: f64,
    /// `D_N / S_N²`.
    pub ratio: f64,
    /// `S_N² / D_N`.
    pub bc_lower_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCounts {
    pub diagonal: String,
    pub exact: String,
    pub nonprimitive: String,
    pub parallel: String,
}

/// `S²/D`, the second-moment lower bound for the measure of the limsup set.
pub fn borel_cantelli_lower_bound(s: f64, d: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else {
        s * s / d
    }
}

fn primitive_lists(n: u32, big_n: u64) -> Result<Vec<Vec<Vec<i64>>>> {
    let points = (2 * big_n as u128 + 1).checked_pow(n).unwrap_or(u128::MAX);
    if points > SPHERE_CAP {
        return Err(Error::capacity(format!(
            "|q| <= {big_n} in dimension {n} is beyond the enumeration cap"
        )));
    }
    let mut prim = vec![Vec::new(); big_n as usize + 1];
    let h = big_n as i64;
    let mut q = vec![-h; n as usize];
    loop {
        let norm = q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        if norm > 0 {
            let g = q.iter().fold(0, |g, c| gcd_u64(g, c.unsigned_abs()));
            if g == 1 {
                prim[norm as usize].push(q.clone());
            }
        }
        let mut i = 0;
        while i < q.len() && q[i] == h {
            q[i] = -h;
            i += 1;
        }
        if i == q.len() {
            break;
        }
        q[i] += 1;
    }
    Ok(prim)
}

/// Uniform draw from `B(q, δ)`: columns are independent, and in each column the
/// coordinate at the largest `|q_i|` is solved for a uniform offset in `(−δ, δ)`.
fn sample_in_slab(rng: &mut ChaCha8Rng, q: &[i64], m: usize, delta: f64, x: &mut [f64]) {
    let (pivot, &qp) = q
        .iter()
        .enumerate()
        .max_by_key(|(_, c)| c.unsigned_abs())
        .expect("nonzero vector");
    for j in 0..m {
        let mut rest = 0.0;
        for (i, &qi) in q.iter().enumerate() {
            if i != pivot {
                let v = rng.random::<f64>();
                x[i * m + j] = v;
                rest += qi as f64 * v;
            }
        }
        let t = (2.0 * rng.random::<f64>() - 1.0) * delta;
        let k = rng.random_range(0..qp.unsigned_abs()) as f64;
        // q_p·x_p ≡ t − rest (mod 1), x_p ∈ [0, 1): |q_p| solutions.
        let base = (t - rest).rem_euclid(1.0);
        let mut v = (base + k) / qp.unsigned_abs() as f64;
        if qp < 0 {
            v = 1.0 - v;
        }
        x[pivot * m + j] = v.clamp(0.0, 1.0 - f64::EPSILON);
    }
}

struct Stratum {
    h1: u64,
    h2: u64,
}

/// Importance-sampled `Σ |E_{q1} ∩ E_{q2}|` over one class of pairs. Strata are
/// drawn with probability proportional to `count·|B_{q1}|·|B_{q2}|`; within a
/// stratum the pair is uniform and `X` is uniform on the thinner slab.
fn class_estimate<D>(
    strata: &[Stratum],
    weights: &[f64],
    psi: &[f64],
    n: usize,
    m: usize,
    draw_pair: D,
    cfg: &MCConfig,
) -> Result<MCEstimate>
where
    D: Fn(&mut ChaCha8Rng, &Stratum) -> (Vec<i64>, Vec<i64>) + Sync,
{
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Ok(MCEstimate::exact(0.0, cfg));
    }
    let index = WeightedIndex::new(weights).map_err(|e| Error::domain(e.to_string()))?;
    mc_expectation_with(
        cfg,
        || vec![0.0; n * m],
        |x, rng| {
            let s = &strata[index.sample(rng)];
            let (q1, q2) = draw_pair(rng, s);
            let (d1, d2) = (psi[s.h1 as usize], psi[s.h2 as usize]);
            let (thin, thin_d, other_d) = if d1 <= d2 {
                (&q1, d1, d2)
            } else {
                (&q2, d2, d1)
            };
            let g1 = q1.iter().fold(0, |g, c| gcd_u64(g, c.unsigned_abs()));
            let g2 = q2.iter().fold(0, |g, c| gcd_u64(g, c.unsigned_abs()));
            for _ in 0..MAX_REDRAWS {
                sample_in_slab(rng, thin, m, thin_d, x);
                let a = classify_raw(x, &q1, g1, m, d1, true);
                let b = classify_raw(x, &q2, g2, m, d2, true);
                match (a, b) {
                    (Membership::Boundary, _) | (_, Membership::Boundary) => continue,
                    (Membership::Inside, Membership::Inside) => {
                        return total / (2.0 * other_d).powi(m as i32);
                    }
                    _ => return 0.0,
                }
            }
            0.0
        },
    )
}

/// Quasi-independence sums for `ψ` in `Zⁿ` up to `N`.
pub fn qia_report(
    psi: &ApproxFunction,
    n: u32,
    m: u32,
    big_n: u64,
    cfg: &MCConfig,
) -> Result<QIAReport> {
    cfg.check()?;
    let s_n = sum_b_prime_measures(psi, n, m, big_n)?;
    if s_n.is_zero() {
        return Err(Error::domain("S_N = 0: no sets to compare"));
    }
    let d_diag = &s_n * rational::int(2);
    let prim = primitive_lists(n, big_n)?;
    let mi = m as usize;

    let mut pow2 = vec![Rational::zero(); big_n as usize + 1];
    let mut psi_f = vec![0.0; big_n as usize + 1];
    for h in 1..=big_n {
        let p = psi.psi_pow(&BigUint::from(h), m)?;
        pow2[h as usize] = rational::two_pow(m) * p;
        psi_f[h as usize] = psi.psi_f64(h);
    }
    let pc: Vec<u64> = (0..=big_n)
        .map(|h| {
            if h == 0 {
                0
            } else {
                primitive_count(n, h).to_u64().expect("fits")
            }
        })
        .collect();
    let sc: Vec<u64> = (0..=big_n)
        .map(|h| {
            if h == 0 {
                0
            } else {
                sphere_count(n, h).to_u64().expect("fits")
            }
        })
        .collect();
    let mp: Vec<Rational> = (0..=big_n)
        .map(|d| {
            if d == 0 {
                Rational::zero()
            } else {
                mobius_product(&factorize(d), m)
            }
        })
        .collect();
    // M(h) = Σ_{|q|=h} |E_q| / (2ψ(h))^m.
    let mass: Vec<Rational> = (0..=big_n)
        .map(|h| {
            (1..=h)
                .filter(|d| h > 0 && h % d == 0)
                .map(|d| &mp[d as usize] * Rational::from_integer(pc[(h / d) as usize].into()))
                .sum()
        })
        .collect();

    let mut d_exact = Rational::zero();
    let mut d_nonprimitive = Rational::zero();
    let (mut cnt_exact, mut cnt_b, mut cnt_c) = (0u128, 0u128, 0u128);
    let mut strata_c = Vec::new();
    let mut weights_c = Vec::new();
    for h1 in 1..=big_n {
        for h2 in 1..=big_n {
            let (p1, p2) = (pc[h1 as usize] as u128, pc[h2 as usize] as u128);
            let (s1, s2) = (sc[h1 as usize] as u128, sc[h2 as usize] as u128);
            let same = h1 == h2;
            let diag = if same { 2 * p1 } else { 0 };
            let g = gcd_u64(h1, h2);
            let par: u128 = (1..=g)
                .filter(|d| g.is_multiple_of(*d))
                .map(|d| 2 * pc[d as usize] as u128)
                .sum();
            let a = p1 * p2 - diag;
            let b = (s1 - p1) * s2 + p1 * (s2 - p2) - (par - diag);
            let c = if same { 0 } else { par };
            cnt_exact += a;
            cnt_b += b;
            cnt_c += c;
            let w = &pow2[h1 as usize] * &pow2[h2 as usize];
            if w.is_zero() {
                continue;
            }
            let a_r = Rational::from_integer(a.into());
            d_exact += &a_r * &w;
            if b > 0 {
                let par_mass: Rational = (1..=g)
                    .filter(|d| g.is_multiple_of(*d))
                    .map(|d| {
                        Rational::from_integer((2 * pc[d as usize]).into())
                            * &mp[(h1 / d) as usize]
                            * &mp[(h2 / d) as usize]
                    })
                    .sum();
                d_nonprimitive += (&mass[h1 as usize] * &mass[h2 as usize] - par_mass - a_r) * &w;
            }
            let wf = rational::to_f64(&w);
            if c > 0 {
                strata_c.push(Stratum { h1, h2 });
                weights_c.push(c as f64 * wf);
            }
        }
    }

    // Class (c): q1 = (h1/g)·r, q2 = ±(h2/g)·r with r primitive, |r| = g | gcd(h1, h2).
    let draw_c = |rng: &mut ChaCha8Rng, s: &Stratum| -> (Vec<i64>, Vec<i64>) {
        let g = gcd_u64(s.h1, s.h2);
        let divs: Vec<u64> = (1..=g).filter(|d| g.is_multiple_of(*d)).collect();
        let total: u64 = divs.iter().map(|&d| pc[d as usize]).sum();
        let mut pick = rng.random_range(0..total);
        let d = *divs
            .iter()
            .find(|&&d| {
                if pick < pc[d as usize] {
                    true
                } else {
                    pick -= pc[d as usize];
                    false
                }
            })
            .expect("pick below total");
        let r = &prim[d as usize][pick as usize];
        let sign = if rng.random::<bool>() { 1 } else { -1 };
        let (a, b) = ((s.h1 / d) as i64, sign * (s.h2 / d) as i64);
        (
            r.iter().map(|c| a * c).collect(),
            r.iter().map(|c| b * c).collect(),
        )
    };

    let d_parallel = if strata_c.is_empty() {
        MCEstimate::exact(0.0, cfg)
    } else {
        class_estimate(
            &strata_c,
            &weights_c,
            &psi_f,
            n as usize,
            mi,
            draw_c,
            &cfg.derived(2),
        )?
    };

    let exact_part = rational::to_f64(&(&d_diag + &d_exact + &d_nonprimitive));
    let d_n = exact_part + d_parallel.mean;
    let d_n_std_error = d_parallel.std_error;
    let s = rational::to_f64(&s_n);
    let diagonal_pairs: u128 = (1..=big_n).map(|h| 2 * sc[h as usize] as u128).sum();
    Ok(QIAReport {
        n,
        m,
        big_n,
        s_n,
        d_diag,
        d_exact,
        d_nonprimitive,
        d_parallel,
        pair_counts: PairCounts {
            diagonal: diagonal_pairs.to_string(),
            exact: cnt_exact.to_string(),
            nonprimitive: cnt_b.to_string(),
            parallel: cnt_c.to_string(),
        },
        d_n,
        d_n_std_error,
        ratio: d_n / (s * s),
        bc_lower_bound: borel_cantelli_lower_bound(s, d_n),
    })
}

/// `count` points drawn uniformly from `[0,1]^dims`.
pub fn draw_points(cfg: &MCConfig, dims: usize) -> Result<Vec<Vec<f64>>> {
    cfg.check()?;
    let mut out = Vec::with_capacity(cfg.samples as usize);
    for b in 0..cfg.samples.div_ceil(BATCH) {
        let mut rng = batch_rng(cfg.seed, b);
        for _ in 0..BATCH.min(cfg.samples - b * BATCH) {
            let mut x = vec![0.0; dims];
            fill_uniform(&mut rng, &mut x);
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub sample_id: usize,
    pub h: u64,
    #[serde(rename = "N_count")]
    pub n_count: u64,
    #[serde(rename = "Phi", with = "rational::text")]
    pub phi: Rational,
    #[serde(with = "rational::text")]
    pub chi: Rational,
    pub residual: f64,
    /// `residual / (χ^(1/2)·ln(χ)^(3/2+ε))`; absent when `χ <= 1`.
    pub normalized_residual: Option<f64>,
}

/// `𝒩(X, h) − Φ(h)` and its normalized form for each point and each `h` in the grid.
pub fn schmidt_residual(
    points: &[Vec<f64>],
    psi: &MultiApproxFunction,
    m: u32,
    grid: &[u64],
    epsilon: f64,
    convention: Convention,
    workers: usize,
) -> Result<Vec<ResidualRow>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::domain("ε must be positive"));
    }
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let h_max = *grid.last().expect("nonempty");
    let counter = SolutionCounter::new(psi, m, h_max)?;
    let dims = counter.n * counter.m;
    if let Some(p) = points.iter().find(|p| p.len() != dims) {
        return Err(Error::domain(format!(
            "point of length {} in dimension {dims}",
            p.len()
        )));
    }
    let mut main = Vec::with_capacity(grid.len());
    for &h in &grid {
        let (phi, chi) = phi_chi(psi, m, &BigUint::from(h), convention)?;
        let chi_f = rational::to_f64(&chi);
        let scale = (chi_f > 1.0).then(|| chi_f.sqrt() * chi_f.ln().powf(1.5 + epsilon));
        main.push((phi, chi, scale));
    }
    let profiles: Vec<Vec<u64>> = with_workers(workers, || {
        points
            .par_iter()
            .map(|x| counter.count_profile(x, &grid, false))
            .collect::<Result<_>>()
    })?;
    let mut rows = Vec::with_capacity(points.len() * grid.len());
    for (sample_id, counts) in profiles.iter().enumerate() {
        for ((&h, &count), (phi, chi, scale)) in grid.iter().zip(counts).zip(&main) {
            let residual = count as f64 - rational::to_f64(phi);
            rows.push(ResidualRow {
                sample_id,
                h,
                n_count: count,
                phi: phi.clone(),
                chi: chi.clone(),
                residual,
                normalized_residual: scale.map(|s| residual / s),
            });
        }
    }
    Ok(rows)
}
