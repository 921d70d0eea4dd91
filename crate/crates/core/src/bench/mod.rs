//! Native timing workloads.
//!
//! Four kernels, each run for a fixed number of iterations over a sweep of
//! sizes: dense matrix multiplication, building and counting a vector of
//! coin-flip strings, dense matrix inversion, and summing a list of floats.
//! Inputs come from a seeded ChaCha stream so they are identical across runs;
//! only the kernel is timed, except for coin flips where building the vector
//! is the workload. Everything runs on the calling thread.

mod report;

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub use report::{
    compare_environments, emit_csv, nearest_rank, parse_csv, render_comparison, render_summaries,
    summarize, write_csv, CellComparison, Comparison, Summary, CSV_HEADER,
};

pub const DEFAULT_ITERATIONS: u32 = 100;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkloadKind {
    MatMul,
    CoinFlips,
    MatInverse,
    ListSum,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 4] = [
        WorkloadKind::MatMul,
        WorkloadKind::CoinFlips,
        WorkloadKind::MatInverse,
        WorkloadKind::ListSum,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WorkloadKind::MatMul => "matmul",
            WorkloadKind::CoinFlips => "coinflips",
            WorkloadKind::MatInverse => "matinverse",
            WorkloadKind::ListSum => "listsum",
        }
    }

    /// Matrix dimensions for the matrix kernels, element counts otherwise.
    pub fn default_sizes(self) -> &'static [usize] {
        match self {
            WorkloadKind::MatMul | WorkloadKind::MatInverse => &[64, 128, 256],
            WorkloadKind::CoinFlips | WorkloadKind::ListSum => &[10_000, 100_000, 1_000_000],
        }
    }

    /// Peak bytes held by one iteration at `size`, or `None` on overflow.
    pub fn footprint(self, size: usize) -> Option<u64> {
        let n = size as u64;
        match self {
            WorkloadKind::MatMul | WorkloadKind::MatInverse => n.checked_mul(n)?.checked_mul(8 * 3),
            WorkloadKind::CoinFlips => n.checked_mul(std::mem::size_of::<&str>() as u64),
            WorkloadKind::ListSum => n.checked_mul(8),
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                format!("unknown workload {s:?}; expected matmul, coinflips, matinverse or listsum")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub size: usize,
    pub iterations: u32,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, size: usize) -> Self {
        Self {
            kind,
            size,
            iterations: DEFAULT_ITERATIONS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn iterations(mut self, iterations: u32) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Input stream for this spec. Each size gets its own stream so a sweep
    /// and a single-size run see the same inputs.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.size as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkRecord {
    pub environment: String,
    pub kind: WorkloadKind,
    pub size: usize,
    pub iteration: u32,
    pub elapsed_ns: u64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    InvalidSpec(&'static str),
    #[error("{kind} at size {size} needs {required} bytes, over the {budget} byte budget")]
    SizeTooLargeForMemory {
        kind: WorkloadKind,
        size: usize,
        required: u64,
        budget: u64,
    },
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("{kind} correctness gate failed: {detail}")]
    GateFailed { kind: WorkloadKind, detail: String },
    #[error("no records to summarize")]
    EmptyRecordSet,
    #[error("no (kind, size) cell appears in both inputs")]
    NoOverlap,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub environment: String,
    pub memory_budget: u64,
    /// Adds `n` to the diagonal before inverting, which rules out singular
    /// inputs.
    pub diagonal_dominance: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            environment: "native".into(),
            memory_budget: DEFAULT_MEMORY_BUDGET,
            diagonal_dominance: true,
        }
    }
}

fn gate(kind: WorkloadKind, ok: bool, detail: impl FnOnce() -> String) -> Result<(), BenchError> {
    if ok {
        Ok(())
    } else {
        Err(BenchError::GateFailed {
            kind,
            detail: detail(),
        })
    }
}

fn check(spec: &WorkloadSpec, opts: &RunOptions) -> Result<(), BenchError> {
    if spec.iterations == 0 {
        return Err(BenchError::InvalidSpec("iterations must be at least 1"));
    }
    if spec.size == 0 {
        return Err(BenchError::InvalidSpec("size must be at least 1"));
    }
    let required = spec.kind.footprint(spec.size).unwrap_or(u64::MAX);
    if required > opts.memory_budget {
        return Err(BenchError::SizeTooLargeForMemory {
            kind: spec.kind,
            size: spec.size,
            required,
            budget: opts.memory_budget,
        });
    }
    Ok(())
}

fn elapsed_ns(start: Instant) -> u64 {
    (start.elapsed().as_nanos() as u64).max(1)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>())
}

pub fn random_list(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

pub fn coin_flips(rng: &mut impl Rng, n: usize) -> Vec<&'static str> {
    (0..n)
        .map(|_| if rng.gen::<bool>() { "H" } else { "T" })
        .collect()
}

pub fn count_heads(flips: &[&str]) -> usize {
    flips.iter().filter(|s| **s == "H").count()
}

pub fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>, BenchError> {
    a.clone().try_inverse().ok_or(BenchError::SingularMatrix)
}

/// Induced infinity norm (largest absolute row sum) of `A·B − I`.
pub fn identity_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut r = a * b;
    for i in 0..r.nrows() {
        r[(i, i)] -= 1.0;
    }
    r.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn record(spec: &WorkloadSpec, opts: &RunOptions, iteration: u32, ns: u64) -> BenchmarkRecord {
    BenchmarkRecord {
        environment: opts.environment.clone(),
        kind: spec.kind,
        size: spec.size,
        iteration,
        elapsed_ns: ns,
    }
}

pub fn run_matmul(
    spec: &WorkloadSpec,
    opts: &RunOptions,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    check(spec, opts)?;
    let kind = WorkloadKind::MatMul;
    let id = DMatrix::<f64>::identity(2, 2);
    gate(kind, &id * &id == id, || {
        "identity times identity is not identity".into()
    })?;

    let mut rng = spec.rng();
    let mut out = Vec::with_capacity(spec.iterations as usize);
    for i in 0..spec.iterations {
        let a = random_matrix(&mut rng, spec.size);
        let b = random_matrix(&mut rng, spec.size);
        let start = Instant::now();
        let c = black_box(&a) * black_box(&b);
        let ns = elapsed_ns(start);
        black_box(&c);
        out.push(record(spec, opts, i, ns));
    }
    Ok(out)
}

/// Five standard deviations of a fair binomial count over `n` trials.
pub fn coin_flip_tolerance(n: usize) -> f64 {
    5.0 * (n as f64 / 4.0).sqrt()
}

pub fn run_coin_flips(
    spec: &WorkloadSpec,
    opts: &RunOptions,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    check(spec, opts)?;
    let kind = WorkloadKind::CoinFlips;
    gate(
        kind,
        count_heads(&coin_flips(&mut spec.rng(), 0)) == 0,
        || "empty sequence has heads".into(),
    )?;

    let mut rng = spec.rng();
    let mut out = Vec::with_capacity(spec.iterations as usize);
    for i in 0..spec.iterations {
        let start = Instant::now();
        let flips = coin_flips(&mut rng, spec.size);
        let heads = count_heads(black_box(&flips));
        let ns = elapsed_ns(start);
        if i == 0 && spec.size >= 10_000 {
            let dev = (heads as f64 - spec.size as f64 / 2.0).abs();
            gate(kind, dev <= coin_flip_tolerance(spec.size), || {
                format!(
                    "{heads} heads out of {} is more than 5 sigma from half",
                    spec.size
                )
            })?;
        }
        black_box(heads);
        out.push(record(spec, opts, i, ns));
    }
    Ok(out)
}

pub fn run_mat_inverse(
    spec: &WorkloadSpec,
    opts: &RunOptions,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    check(spec, opts)?;
    let kind = WorkloadKind::MatInverse;
    let scalar = invert(&DMatrix::from_element(1, 1, 2.0))?;
    gate(kind, scalar[(0, 0)] == 0.5, || {
        format!("inverse of [2] is {scalar}")
    })?;

    let n = spec.size;
    let mut rng = spec.rng();
    let mut out = Vec::with_capacity(spec.iterations as usize);
    for i in 0..spec.iterations {
        let mut a = random_matrix(&mut rng, n);
        if opts.diagonal_dominance {
            for d in 0..n {
                a[(d, d)] += n as f64;
            }
        }
        let start = Instant::now();
        let inv = invert(black_box(&a))?;
        let ns = elapsed_ns(start);
        if i == 0 {
            let residual = identity_residual(&a, &inv);
            gate(kind, residual < 1e-6, || {
                format!("|A*inv(A) - I| = {residual:e}")
            })?;
        }
        black_box(&inv);
        out.push(record(spec, opts, i, ns));
    }
    Ok(out)
}

pub fn run_list_sum(
    spec: &WorkloadSpec,
    opts: &RunOptions,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    check(spec, opts)?;
    let kind = WorkloadKind::ListSum;
    let single = random_list(&mut spec.rng(), 1);
    let single_sum: f64 = single.iter().sum();
    gate(kind, single_sum == single[0], || {
        format!("sum of [{}] is {single_sum}", single[0])
    })?;

    let mut rng = spec.rng();
    let mut out = Vec::with_capacity(spec.iterations as usize);
    for i in 0..spec.iterations {
        let list = random_list(&mut rng, spec.size);
        let start = Instant::now();
        let sum: f64 = black_box(&list).iter().sum();
        let ns = elapsed_ns(start);
        if i == 0 && spec.size >= 1_000_000 {
            let mean = sum / spec.size as f64;
            gate(kind, (0.49..=0.51).contains(&mean), || {
                format!("mean {mean} outside [0.49, 0.51]")
            })?;
        }
        black_box(sum);
        out.push(record(spec, opts, i, ns));
    }
    Ok(out)
}

pub fn run(spec: &WorkloadSpec, opts: &RunOptions) -> Result<Vec<BenchmarkRecord>, BenchError> {
    match spec.kind {
        WorkloadKind::MatMul => run_matmul(spec, opts),
        WorkloadKind::CoinFlips => run_coin_flips(spec, opts),
        WorkloadKind::MatInverse => run_mat_inverse(spec, opts),
        WorkloadKind::ListSum => run_list_sum(spec, opts),
    }
}

/// Runs `kind` at every size in turn. All sizes are checked against the
/// memory budget before any timing starts, and any failure discards the
/// whole sweep.
pub fn run_sweep(
    kind: WorkloadKind,
    sizes: &[usize],
    iterations: u32,
    seed: u64,
    opts: &RunOptions,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    if sizes.is_empty() {
        return Err(BenchError::InvalidSpec("at least one size is required"));
    }
    let specs: Vec<WorkloadSpec> = sizes
        .iter()
        .map(|&s| WorkloadSpec::new(kind, s).iterations(iterations).seed(seed))
        .collect();
    for s in &specs {
        check(s, opts)?;
    }
    let mut out = Vec::with_capacity(specs.len() * iterations as usize);
    for s in &specs {
        out.extend(run(s, opts)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = WorkloadSpec::new(WorkloadKind::MatMul, 5).rng();
        let a = random_matrix(&mut rng, 5);
        let b = random_matrix(&mut rng, 5);
        let diff = (&a * &b - naive_product(&a, &b)).amax();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn inputs_are_deterministic_per_seed_and_size() {
        let s = WorkloadSpec::new(WorkloadKind::ListSum, 100);
        assert_eq!(
            random_list(&mut s.rng(), 100),
            random_list(&mut s.rng(), 100)
        );
        assert_ne!(
            random_list(&mut s.rng(), 100),
            random_list(&mut s.seed(43).rng(), 100)
        );
        let other_size = WorkloadSpec::new(WorkloadKind::ListSum, 101);
        assert_ne!(
            random_list(&mut s.rng(), 100),
            random_list(&mut other_size.rng(), 100)
        );
        let m = WorkloadSpec::new(WorkloadKind::MatMul, 8);
        assert_eq!(
            random_matrix(&mut m.rng(), 8),
            random_matrix(&mut m.rng(), 8)
        );
        let c = WorkloadSpec::new(WorkloadKind::CoinFlips, 64);
        assert_eq!(coin_flips(&mut c.rng(), 64), coin_flips(&mut c.rng(), 64));
    }

    #[test]
    fn coin_flip_count_within_five_sigma() {
        let n = 1_000_000;
        assert_eq!(coin_flip_tolerance(n), 2500.0);
        let heads = count_heads(&coin_flips(
            &mut WorkloadSpec::new(WorkloadKind::CoinFlips, n).rng(),
            n,
        ));
        assert!((heads as i64 - 500_000).abs() <= 2500, "{heads}");
        assert_eq!(count_heads(&[]), 0);
        assert_eq!(count_heads(&["H", "T", "H"]), 2);
    }

    #[test]
    fn list_mean_near_half() {
        let n = 1_000_000;
        let list = random_list(&mut WorkloadSpec::new(WorkloadKind::ListSum, n).rng(), n);
        let mean = list.iter().sum::<f64>() / n as f64;
        assert!((0.49..=0.51).contains(&mean));
        assert!(list.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn inverse_residual_at_64() {
        let n = 64;
        let mut a = random_matrix(&mut WorkloadSpec::new(WorkloadKind::MatInverse, n).rng(), n);
        for d in 0..n {
            a[(d, d)] += n as f64;
        }
        let inv = invert(&a).unwrap();
        assert!(identity_residual(&a, &inv) < 1e-6);
        // residual is measured, not assumed
        assert!(identity_residual(&a, &a) > 1.0);
    }

    #[test]
    fn singular_input_is_reported() {
        assert_eq!(
            invert(&DMatrix::zeros(3, 3)).unwrap_err(),
            BenchError::SingularMatrix
        );
    }

    #[test]
    fn record_counts_and_labels() {
        let opts = RunOptions {
            environment: "ci".into(),
            ..Default::default()
        };
        for kind in WorkloadKind::ALL {
            let recs = run_sweep(kind, &[1, 3], 4, 9, &opts).unwrap();
            assert_eq!(recs.len(), 8);
            assert!(recs
                .iter()
                .all(|r| r.elapsed_ns > 0 && r.environment == "ci" && r.kind == kind));
            let idx: Vec<u32> = recs.iter().map(|r| r.iteration).collect();
            assert_eq!(idx, [0, 1, 2, 3, 0, 1, 2, 3]);
            assert_eq!(kind.label().parse::<WorkloadKind>(), Ok(kind));
        }
    }

    #[test]
    fn invalid_specs() {
        let opts = RunOptions::default();
        let s = WorkloadSpec::new(WorkloadKind::MatMul, 0);
        assert!(matches!(run(&s, &opts), Err(BenchError::InvalidSpec(_))));
        let s = WorkloadSpec::new(WorkloadKind::ListSum, 5).iterations(0);
        assert!(matches!(run(&s, &opts), Err(BenchError::InvalidSpec(_))));
        assert!(run_sweep(WorkloadKind::ListSum, &[], 1, 0, &opts).is_err());
        assert!("gemm".parse::<WorkloadKind>().is_err());
    }

    #[test]
    fn memory_budget_refuses_before_allocating() {
        let opts = RunOptions {
            memory_budget: 1 << 20,
            ..Default::default()
        };
        // 256^2 * 8 * 3 = 1.5 MiB
        let err = run(&WorkloadSpec::new(WorkloadKind::MatMul, 256), &opts).unwrap_err();
        assert_eq!(
            err,
            BenchError::SizeTooLargeForMemory {
                kind: WorkloadKind::MatMul,
                size: 256,
                required: 1_572_864,
                budget: 1 << 20
            }
        );
        // a sweep fails up front even if earlier sizes fit
        assert!(run_sweep(WorkloadKind::MatMul, &[2, 256], 1, 0, &opts).is_err());
        let huge = WorkloadSpec::new(WorkloadKind::MatInverse, usize::MAX);
        assert!(matches!(
            run(&huge, &RunOptions::default()),
            Err(BenchError::SizeTooLargeForMemory {
                required: u64::MAX,
                ..
            })
        ));
    }
}
