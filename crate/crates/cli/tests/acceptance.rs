//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use penetra::attack::{generate, AttackConfig};
use penetra::eigen::{
    dense_eig_reference, solve_largest_magnitude, DenseOperator, EigConfig, LinearOperator,
};
use penetra::metrics::mean_variance;
use penetra::oracle::make_linear_oracle;
use penetra::{dice, ssim, write_tensor, JvpOperator, OracleHandle, Rng, Tensor};
use penetra_cli::bench::{run_bench, BenchConfig, BenchInput, BenchRow};
use penetra_cli::inputs::{input_name, input_seed};
use penetra_cli::spec::open_oracle;
use penetra_cli::Method;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(a: &Tensor, v: &[f64]) -> Vec<f64> {
    a.data()
        .chunks_exact(v.len())
        .map(|row| dot(row, v))
        .collect()
}

fn symmetric(rng: &mut Rng, n: usize) -> Tensor {
    let m = rng.uniform_vec(n * n, -1.0, 1.0);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[i * n + j] + m[j * n + i]);
        }
    }
    Tensor::new(vec![n, n], a).unwrap()
}

fn jvp_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut rng = Rng::new(1000 + case);
        let n = 4 + (case as usize * 3) % 61;
        let a = Tensor::new(vec![n, n], rng.uniform_vec(n * n, -1.0, 1.0)).unwrap();
        let b = Tensor::new(vec![n], rng.uniform_vec(n, -1.0, 1.0)).unwrap();
        let oracle = make_linear_oracle(&a, &b).unwrap();
        let base = Tensor::new(vec![n], rng.uniform_vec(n, -1.0, 1.0)).unwrap();
        let op = JvpOperator::new(&oracle, &base, 1e-4).unwrap();
        for _ in 0..10 {
            let v = rng.uniform_vec(n, -1.0, 1.0);
            let exact = matvec(&a, &v);
            let got = op.apply(&v).unwrap();
            let err: Vec<f64> = got.iter().zip(&exact).map(|(g, e)| g - e).collect();
            worst = worst.max(norm(&err) / norm(&exact));
        }
    }
    check(
        worst <= 1e-9,
        format!("max relative error {worst:.3e} over 200 products (bound 1e-9)"),
    )
}

fn fd_order() -> Outcome {
    let n = 32;
    let oracle = OracleHandle::from_fn("cube", vec![n], vec![n], |x| {
        x.iter().map(|v| v * v * v).collect()
    })
    .unwrap();
    let mut rng = Rng::new(77);
    let base = Tensor::new(vec![n], rng.uniform_vec(n, -1.0, 1.0)).unwrap();
    let v = rng.uniform_vec(n, -1.0, 1.0);
    let exact: Vec<f64> = base
        .data()
        .iter()
        .zip(&v)
        .map(|(x, vi)| 3.0 * x * x * vi)
        .collect();
    let err = |eps: f64| {
        let got = JvpOperator::new(&oracle, &base, eps)
            .unwrap()
            .apply(&v)
            .unwrap();
        norm(
            &got.iter()
                .zip(&exact)
                .map(|(g, e)| g - e)
                .collect::<Vec<_>>(),
        )
    };
    let ratio = err(1e-3) / err(1e-2);
    check(
        (0.005..=0.02).contains(&ratio),
        format!("error ratio {ratio:.5} (want [0.005, 0.02])"),
    )
}

fn eigensolver_vs_dense() -> Outcome {
    let mut worst_val: f64 = 0.0;
    let mut worst_vec: f64 = 1.0;
    let mut all_converged = true;
    for n in [8usize, 16, 32, 64] {
        let a = symmetric(&mut Rng::new(500 + n as u64), n);
        let reference = dense_eig_reference(&a).unwrap();
        let op = DenseOperator::new(&a).unwrap();
        for k in [1usize, 3, 5] {
            let res = solve_largest_magnitude(
                &op,
                &EigConfig {
                    k,
                    tol: 1e-12,
                    seed: 11,
                    ..EigConfig::default()
                },
            )
            .unwrap();
            all_converged &= res.converged && res.pairs.len() >= k;
            let scale = reference[0].re.abs();
            for (pair, want) in res.pairs.iter().zip(&reference).take(k) {
                worst_val = worst_val.max((pair.eigenvalue - want.re).abs() / scale);
                let align = dot(pair.vector.data(), want.vector.as_ref().unwrap()).abs();
                worst_vec = worst_vec.min(align);
            }
        }
    }
    check(
        all_converged && worst_val <= 1e-8 && worst_vec >= 1.0 - 1e-6,
        format!("max |λ−λ̂|/|λ̂₁| {worst_val:.2e} (≤1e-8), min |⟨v,v̂⟩| {worst_vec:.12} (≥1−1e-6), converged {all_converged}"),
    )
}

fn diagonal_oracle(n: usize, tail: f64) -> OracleHandle {
    let leading = [12.0, -9.0, 6.5, 4.0, 2.5];
    let mut d = vec![tail; n];
    d[..leading.len()].copy_from_slice(&leading);
    OracleHandle::from_fn("diag", vec![n], vec![n], move |x| {
        x.iter().zip(&d).map(|(a, b)| a * b).collect()
    })
    .unwrap()
}

fn constant_queries() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for tail in [0.0, 0.5] {
        let mut counts = Vec::new();
        for n in [64usize, 16384] {
            let oracle = diagonal_oracle(n, tail);
            let base = Tensor::zeros(&[n]).unwrap();
            let op = JvpOperator::new(&oracle, &base, 1e-4).unwrap();
            let cfg = EigConfig {
                k: 1,
                ncv: Some(20),
                tol: 1e-10,
                seed: 5,
                ..EigConfig::default()
            };
            let res = solve_largest_magnitude(&op, &cfg).unwrap();
            pass &= res.converged && (res.pairs[0].eigenvalue - 12.0).abs() < 1e-6;
            pass &= res.oracle_evals == 2 * res.matvecs && oracle.total_evals() == 2 * res.matvecs;
            counts.push((res.matvecs, res.oracle_evals));
        }
        pass &= counts[0] == counts[1];
        details.push(format!(
            "tail {tail}: n=64 {}/{} n=16384 {}/{} matvecs/evals",
            counts[0].0, counts[0].1, counts[1].0, counts[1].1
        ));
    }
    check(pass, details.join("; "))
}

fn penetration_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..10u64 {
        let mut rng = Rng::new(300 + case);
        let n = 10 + 5 * case as usize;
        let a = symmetric(&mut rng, n);
        let b = Tensor::new(vec![n], rng.uniform_vec(n, -1.0, 1.0)).unwrap();
        let oracle = make_linear_oracle(&a, &b).unwrap();
        let base = Tensor::new(vec![n], rng.uniform_vec(n, -1.0, 1.0)).unwrap();
        let res = generate(
            &oracle,
            &base,
            &AttackConfig {
                seed: case,
                ..AttackConfig::default()
            },
        )
        .unwrap();
        let f_adv = oracle.eval(&res.adversarial_input).unwrap();
        let f_clean = oracle.eval(&base).unwrap();
        let v = res.perturbation.data();
        let scale = res.delta * res.eigenvalue.abs();
        let r: Vec<f64> = (0..n)
            .map(|i| f_adv.data()[i] - f_clean.data()[i] - res.delta * res.eigenvalue * v[i])
            .collect();
        worst = worst.max(norm(&r) / scale);
    }
    check(
        worst <= 1e-8,
        format!("max ‖f(x̄+δv)−f(x̄)−δλv‖/(δ|λ|) {worst:.3e} (bound 1e-8)"),
    )
}

const TOYSEG: &str = "builtin:toyseg:1:32x32";

fn toy_inputs() -> Vec<BenchInput> {
    (0..20)
        .map(|i| BenchInput {
            id: input_name(i),
            tensor: penetra::blob_image(input_seed(0, i), 32, 32).unwrap(),
            mask: None,
        })
        .collect()
}

fn bench_config(methods: Vec<Method>, tols: Vec<f64>, modes: Vec<usize>) -> BenchConfig {
    let k = *modes.iter().max().unwrap();
    BenchConfig {
        methods,
        tols,
        modes,
        attack: AttackConfig {
            k,
            ..AttackConfig::default()
        },
        seed: 0,
        jobs: 1,
        dynamic_range: 1.0,
        threshold: 0.5,
    }
}

fn select(
    rows: &[BenchRow],
    method: Method,
    tol: Option<f64>,
    mode: Option<usize>,
) -> Vec<&BenchRow> {
    rows.iter()
        .filter(|r| r.method == method && r.tol == tol && r.mode_index == mode)
        .collect()
}

fn mean(rows: &[&BenchRow], f: fn(&BenchRow) -> Option<f64>) -> f64 {
    mean_variance(&rows.iter().map(|r| f(r).unwrap()).collect::<Vec<_>>())
        .unwrap()
        .mean
}

struct ToyRuns {
    rows: Vec<BenchRow>,
    elapsed: Duration,
}

fn table_two(runs: &ToyRuns) -> Outcome {
    let pen = select(&runs.rows, Method::Penetrative, Some(1e-6), Some(1));
    let uni = select(&runs.rows, Method::Uniform, None, None);
    if pen.len() != 20 || uni.len() != 20 || pen.iter().chain(&uni).any(|r| !r.note.is_empty()) {
        return check(false, "missing or failed rows".into());
    }
    let ordered = pen
        .iter()
        .zip(&uni)
        .filter(|(p, u)| p.dice.unwrap() < u.dice.unwrap() && p.ssim.unwrap() > u.ssim.unwrap())
        .count();
    let (dp, du) = (mean(&pen, |r| r.dice), mean(&uni, |r| r.dice));
    let (sp, su) = (mean(&pen, |r| r.ssim), mean(&uni, |r| r.ssim));
    let evals = mean(&pen, |r| Some(r.oracle_evals as f64));
    check(
        dp < du && sp > su && ordered >= 16 && runs.elapsed < Duration::from_secs(120),
        format!(
            "dice pen {dp:.4} < uni {du:.4}, ssim pen {sp:.4} > uni {su:.4}, ordered {ordered}/20 (≥16), mean evals {evals:.1}, {:.1}s (<120s)",
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn tol_insensitivity(runs: &ToyRuns) -> Outcome {
    let means: Vec<f64> = [1e-3, 1e-6, 1e-12]
        .iter()
        .map(|t| {
            mean(
                &select(&runs.rows, Method::Penetrative, Some(*t), Some(1)),
                |r| r.dice,
            )
        })
        .collect();
    let spread = means.iter().cloned().fold(f64::MIN, f64::max)
        - means.iter().cloned().fold(f64::MAX, f64::min);
    check(
        spread <= 0.05,
        format!(
            "mean dice at tol 1e-3/1e-6/1e-12: {:.4}/{:.4}/{:.4}, spread {spread:.4} (≤0.05)",
            means[0], means[1], means[2]
        ),
    )
}

fn higher_modes(runs: &ToyRuns, modes: &[BenchRow]) -> Outcome {
    let uniform = mean(&select(&runs.rows, Method::Uniform, None, None), |r| r.dice);
    let mut means = Vec::new();
    for m in 1..=4 {
        let rows = select(modes, Method::Penetrative, Some(1e-12), Some(m));
        if rows.len() != 20 || rows.iter().any(|r| !r.note.is_empty()) {
            return check(false, format!("mode {m}: missing or failed rows"));
        }
        means.push(mean(&rows, |r| r.dice));
    }
    let shown: Vec<String> = means.iter().map(|d| format!("{d:.4}")).collect();
    check(
        means.iter().all(|d| *d < uniform),
        format!(
            "mean dice modes 1-4 [{}] vs uniform {uniform:.4}",
            shown.join(", ")
        ),
    )
}

fn metric_units() -> Outcome {
    let x = Tensor::new(vec![3, 16, 16], Rng::new(8).uniform_vec(768, 0.0, 1.0)).unwrap();
    let s = ssim(&x, &x, 1.0).unwrap();
    let m = Tensor::new(
        vec![1, 4, 4],
        (0..16).map(|i| f64::from(i % 3 == 0)).collect(),
    )
    .unwrap();
    let not_m = Tensor::new(vec![1, 4, 4], m.data().iter().map(|v| 1.0 - v).collect()).unwrap();
    let same = dice(&m, &m, 0.5).unwrap();
    let disjoint = dice(&m, &not_m, 0.5).unwrap();
    check(
        s == 1.0 && same == 1.0 && disjoint == 0.0,
        format!("ssim(x,x) {s}, dice(m,m) {same}, dice(disjoint) {disjoint}"),
    )
}

fn strip_wall_time(csv: &str) -> String {
    let mut out = String::new();
    for line in csv.lines() {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(line.as_bytes());
        let rec = reader.records().next().unwrap().unwrap();
        let kept: Vec<&str> = rec
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 10)
            .map(|(_, f)| f)
            .collect();
        out.push_str(&kept.join("\u{1f}"));
        out.push('\n');
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    std::fs::create_dir_all(&inputs).unwrap();
    for i in 0..6 {
        write_tensor(
            inputs.join(input_name(i)),
            &penetra::blob_image(input_seed(9, i), 24, 24).unwrap(),
        )
        .unwrap();
    }
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_penetra"))
            .args([
                "bench",
                "--oracle",
                "builtin:toyseg:4:24x24",
                "--inputs",
                inputs.to_str().unwrap(),
            ])
            .args([
                "--tol",
                "1e-3,1e-8",
                "--modes",
                "1,2",
                "--seed",
                "42",
                "--jobs",
                "2",
                "--out-dir",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        (
            status.success(),
            std::fs::read_to_string(out.join("bench.csv")).unwrap_or_default(),
        )
    };
    let (ok_a, a) = run("a");
    let (ok_b, b) = run("b");
    let rows = a.lines().count().saturating_sub(1);
    check(
        ok_a && ok_b && rows == 30 && strip_wall_time(&a) == strip_wall_time(&b),
        format!(
            "{rows} rows, identical modulo wall_time_ms: {}",
            strip_wall_time(&a) == strip_wall_time(&b)
        ),
    )
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let elapsed = t.elapsed();
    if let Some(limit) = limit {
        o.pass &= elapsed < limit;
        o.detail = format!(
            "{}, {:.2}s (<{}s)",
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    o
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut results = vec![
        (
            1,
            "JVP exactness on affine maps",
            timed(secs(1), jvp_exactness),
        ),
        (
            2,
            "central-difference error decays as eps^2",
            timed(secs(1), fd_order),
        ),
        (
            3,
            "eigensolver matches dense reference",
            timed(secs(10), eigensolver_vs_dense),
        ),
        (
            4,
            "query count independent of dimension",
            timed(secs(5), constant_queries),
        ),
        (
            5,
            "penetration identity on affine oracles",
            timed(secs(1), penetration_identity),
        ),
    ];

    let oracle = || open_oracle(TOYSEG);
    let inputs = toy_inputs();
    let t = Instant::now();
    let main_run = run_bench(
        &inputs,
        &bench_config(
            vec![Method::Penetrative, Method::Uniform],
            vec![1e-6],
            vec![1],
        ),
        oracle,
    );
    let elapsed = t.elapsed();
    let sweep = run_bench(
        &inputs,
        &bench_config(vec![Method::Penetrative], vec![1e-3, 1e-12], vec![1]),
        oracle,
    );
    let modes = run_bench(
        &inputs,
        &bench_config(vec![Method::Penetrative], vec![1e-12], vec![1, 2, 3, 4]),
        oracle,
    );
    let runs = ToyRuns {
        rows: main_run.rows.into_iter().chain(sweep.rows).collect(),
        elapsed,
    };
    results.push((
        6,
        "penetrative beats uniform noise on the toy segmenter",
        table_two(&runs),
    ));
    results.push((
        7,
        "mean Dice insensitive to solver tolerance",
        tol_insensitivity(&runs),
    ));
    results.push((
        8,
        "modes 1-4 each degrade Dice below uniform",
        higher_modes(&runs, &modes.rows),
    ));
    results.push((9, "metric units", metric_units()));
    results.push((10, "bench output deterministic", determinism()));

    let mut failed = 0;
    for (id, name, o) in &results {
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
