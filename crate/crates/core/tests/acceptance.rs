//! Acceptance criteria 1 to 7. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::{E, LN_2, PI};

use infoloss::bounds::{bounds_report, entropy_w};
use infoloss::classify::{atom_scan, classify, Reason, Verdict};
use infoloss::cli;
use infoloss::config::{Model, ModelConfig};
use infoloss::loss::{loss_direct_quadrature, mc_routes, partition_sweep, LossMethod, LossReport};
use infoloss::numerics::McPlan;
use infoloss::presets::{bundled, triangle_abs};
use infoloss::report::normalization_nodes;
use infoloss::transform::output_mass;

// ---------- oracles ----------

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Differential entropy of a standard normal variable, in bits.
fn gaussian_entropy_bits() -> f64 {
    0.5 * (2.0 * PI * E).log2()
}

/// `E[log2 |2X|]` for standard normal `X`, from `E[ln |X|] = -(gamma + ln 2) / 2`.
fn gaussian_log_double_abs_bits() -> f64 {
    1.0 - (EULER_GAMMA + LN_2) / (2.0 * LN_2)
}

/// Entropy of the branch index of the exponential sawtooth: member `k` holds
/// mass `(1 - q) q^(k-1)` with `q = exp(-rate * width) = exp(-1)`.
fn sawtooth_index_entropy_series() -> f64 {
    let q = (-1.0f64).exp();
    (1..=2000)
        .map(|k| (1.0 - q) * q.powi(k - 1))
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

fn geometric_entropy_closed_form() -> f64 {
    let q = (-1.0f64).exp();
    (-(1.0 - q) * (1.0 - q).log2() - q * q.log2()) / (1.0 - q)
}

/// Quadrant masses of the uniform triangle, from the areas of the three
/// pieces cut by the coordinate axes.
fn triangle_quadrant_masses(m: f64, a: f64) -> [f64; 3] {
    let total = 2.0 * a * a;
    let upper_left = (a - m).powi(2) / 2.0;
    let right = (m + a).powi(2) / 2.0;
    let lower_left = total - upper_left - right;
    [upper_left / total, lower_left / total, right / total]
}

fn entropy_bits(ps: &[f64]) -> f64 {
    ps.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
}

/// Printed closed form of `H(W)` for the triangle; the two singular terms
/// cancel as `m -> a`, leaving 0.
fn triangle_hw_printed(m: f64, a: f64) -> f64 {
    if (a - m).abs() < 1e-12 {
        return 0.0;
    }
    m * m / (2.0 * a * a) + 1.5 - ((a * a - m * m) / (a * a)).log2() + m / a * ((a - m) / (a + m)).log2()
}

/// Upper standard-normal tail at 1.
fn q1() -> f64 {
    0.5 * statrs::function::erf::erfc(1.0 / 2f64.sqrt())
}

// ---------- harness ----------

#[derive(Default)]
struct Criterion {
    checks: usize,
    failures: Vec<String>,
}

impl Criterion {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks += 1;
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn near(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check(
            (got - want).abs() <= tol && got.is_finite(),
            format!("{label}: got {got:.5}, want {want:.5} +- {tol}"),
        );
    }
}

fn model(name: &str) -> Model {
    bundled(name).unwrap_or_else(|| panic!("preset {name}")).build().unwrap()
}

fn from_json(text: &str) -> Model {
    ModelConfig::from_json(text).unwrap().build().unwrap()
}

fn by(rs: &[LossReport], m: LossMethod) -> &LossReport {
    rs.iter().find(|r| r.method == m).unwrap()
}

// ---------- criteria ----------

fn fold_square(c: &mut Criterion) {
    let m = model("ex1");
    let routes = mc_routes(&m.map, &m.density, &McPlan::new(1_000_000, 1)).unwrap();
    for r in &routes {
        c.near(r.method.as_str(), r.loss_bits, 0.5, 0.01);
    }
    let q = loss_direct_quadrature(&m.map, &m.density, m.analysis.nodes_per_dim).unwrap();
    c.near("direct_quadrature", q.loss_bits, 0.5, 0.003);
}

fn square_gaussian(c: &mut Criterion) {
    let m = model("ex2");
    let routes = mc_routes(&m.map, &m.density, &McPlan::new(1_000_000, 1)).unwrap();
    for r in &routes {
        c.near(r.method.as_str(), r.loss_bits, 1.0, 0.01);
    }
    let comp = by(&routes, LossMethod::EntropyDifference).components.clone().unwrap();
    let (hx, elj) = (gaussian_entropy_bits(), gaussian_log_double_abs_bits());
    c.near("h(X)", comp.h_x_bits, hx, 0.005);
    c.near("E[log2 jac]", comp.e_logjac_bits, elj, 0.005);
    c.near("h(Y)", comp.h_y_bits, hx + elj - 1.0, 0.01);
}

fn triangle(c: &mut Criterion) {
    let a = 2.0;
    for (m, tag) in [(0.0, "m0"), (1.0, "m1"), (2.0, "m2")] {
        let mdl = triangle_abs(m, a, tag).build().unwrap();
        let plan = McPlan::new(400_000, 7);
        let r = m * m / (a * a);
        for route in mc_routes(&mdl.map, &mdl.density, &plan).unwrap() {
            c.near(&format!("m={m} {}", route.method), route.loss_bits, 1.0 - r, 0.01);
        }
        let b = bounds_report(&mdl.map, &mdl.density, &plan).unwrap();
        c.near(&format!("m={m} e_log_card"), b.e_log_card_bits, 1.0 - r, 0.01);
        c.near(&format!("m={m} log_e_card"), b.log_e_card_bits, (2.0 - r).log2(), 0.01);
        // every output has a single preimage once m = a, so the largest
        // count is 1 and its log is 0; below that it is 2
        let max_want = if m < a { 1.0 } else { 0.0 };
        c.near(&format!("m={m} max_log_card"), b.max_log_card_bits, max_want, 0.01);
        c.check(
            b.e_log_card_bits <= b.log_e_card_bits + 1e-12 && b.log_e_card_bits <= b.max_log_card_bits + 1e-12,
            format!("m={m} chain order"),
        );
        let hw_oracle = entropy_bits(&triangle_quadrant_masses(m, a));
        c.near(&format!("m={m} H(W) oracle vs printed form"), triangle_hw_printed(m, a), hw_oracle, 1e-9);
        c.near(&format!("m={m} H(W)"), b.h_w_bits, hw_oracle, 0.01);
    }
}

fn sawtooth(c: &mut Criterion) {
    let series = sawtooth_index_entropy_series();
    c.near("series vs closed form", series, geometric_entropy_closed_form(), 1e-12);
    let m = model("ex3");
    let b = bounds_report(&m.map, &m.density, &McPlan::new(5_000, 1)).unwrap();
    c.check(
        b.e_log_card_infinite && b.log_e_card_infinite && b.max_log_card_infinite,
        "cardinality bounds not flagged infinite",
    );
    let hw = entropy_w(&m.map, &m.density, &McPlan::new(1_000_000, 1)).unwrap();
    c.check(
        (hw.bits - series).abs() <= 3.0 * hw.stderr_bits,
        format!("H(W) {:.5} +- {:.1e} vs {series:.5}", hw.bits, hw.stderr_bits),
    );
    for r in mc_routes(&m.map, &m.density, &McPlan::new(200_000, 1)).unwrap() {
        // the posterior route's integrand is constant here, so its sampling
        // error vanishes; allow for the enumeration tail instead
        let tol = (3.0 * r.stderr_bits).max(1e-9);
        c.check(
            (r.loss_bits - series).abs() <= tol,
            format!("{} {:.6} +- {:.1e} vs {series:.6}", r.method, r.loss_bits, r.stderr_bits),
        );
    }
}

fn classification(c: &mut Criterion) {
    let plan = McPlan::new(100_000, 1);
    for name in ["identity", "ex1", "ex2", "ex3", "ex6_m0", "ex6_m1", "ex6_m2", "ex4"] {
        let m = model(name);
        let v = classify(&m.map, &m.density, &plan).unwrap();
        c.check(v.verdict == Verdict::Finite, format!("{name}: {}", v.verdict.as_str()));
    }
    for (name, reason) in [
        ("quantizer", Reason::DiscreteAtom),
        ("quantizer_uniform", Reason::DiscreteAtom),
        ("ex5", Reason::RankDeficientMass),
    ] {
        let m = model(name);
        let v = classify(&m.map, &m.density, &plan).unwrap();
        c.check(
            v.verdict == Verdict::Infinite && v.reason == reason,
            format!("{name}: {} ({})", v.verdict.as_str(), v.reason.as_str()),
        );
    }
    let m = model("limiter");
    let v = classify(&m.map, &m.density, &plan).unwrap();
    c.check(v.verdict == Verdict::Infinite, format!("limiter: {}", v.verdict.as_str()));
    let atoms = atom_scan(&m.map, &m.density, &McPlan::new(1_000_000, 1)).unwrap();
    let ys: Vec<f64> = atoms.iter().map(|a| a.y[0]).collect();
    c.check(ys == vec![-1.0, 1.0], format!("limiter atoms at {ys:?}"));
    for a in &atoms {
        c.near(&format!("atom {:?} mass", a.y), a.mass, q1(), 0.003);
    }
    let m = model("ex4");
    for r in mc_routes(&m.map, &m.density, &McPlan::new(200_000, 1)).unwrap() {
        c.near(&format!("ex4 {}", r.method), r.loss_bits, 0.0, 0.01);
    }
}

const UNIFORM_SQUARE: &str = r#"{
  "dim": 1,
  "density": {"form": "uniform_box", "support": {"predicate": "x1 >= -1 and x1 <= 1", "bbox": {"lo": [-1], "hi": [1]}}},
  "parts": [
    {"type": "branch", "region": {"predicate": "x1 < 0", "bbox": {"lo": [-1], "hi": [0]}},
     "forward": ["x1^2"], "inverse": ["-sqrt(y1)"], "jac_abs_det": "abs(2*x1)"},
    {"type": "branch", "region": {"predicate": "x1 >= 0", "bbox": {"lo": [0], "hi": [1]}},
     "forward": ["x1^2"], "inverse": ["sqrt(y1)"], "jac_abs_det": "abs(2*x1)"}
  ]
}"#;

const LAPLACE_SQUARE: &str = r#"{
  "dim": 1,
  "density": {"form": "expression", "pdf": "0.5*exp(-abs(x1))", "pdf_bound": 0.5,
              "support": {"predicate": "x1 >= -30 and x1 <= 30", "bbox": {"lo": [-30], "hi": [30]}}},
  "parts": [
    {"type": "branch", "region": {"predicate": "x1 < 0"},
     "forward": ["x1^2"], "inverse": ["-sqrt(y1)"], "jac_abs_det": "abs(2*x1)"},
    {"type": "branch", "region": {"predicate": "x1 >= 0"},
     "forward": ["x1^2"], "inverse": ["sqrt(y1)"], "jac_abs_det": "abs(2*x1)"}
  ]
}"#;

/// Closed-form loss of the finite presets; zero means `g` is bijective
/// almost everywhere.
const FINITE: &[(&str, f64)] = &[
    ("identity", 0.0),
    ("ex1", 0.5),
    ("ex2", 1.0),
    ("ex3", f64::NAN),
    ("ex4", 0.0),
    ("ex6_m0", 1.0),
    ("ex6_m1", 0.75),
    ("ex6_m2", 0.0),
];

fn properties(c: &mut Criterion) {
    let plan = McPlan::new(200_000, 11);
    for &(name, exact) in FINITE {
        let m = model(name);
        let mut routes = mc_routes(&m.map, &m.density, &plan).unwrap().to_vec();
        let bounded = m.density.support().bbox().is_bounded();
        if m.map.dim() <= 2 && bounded {
            routes.push(loss_direct_quadrature(&m.map, &m.density, m.analysis.nodes_per_dim).unwrap());
        }
        let spread = |r: &LossReport| r.stderr_bits.max(r.error_bound_bits.unwrap_or(0.0));

        for r in &routes {
            c.check(
                r.loss_bits >= -3.0 * spread(r) - 1e-9,
                format!("{name} {} negative: {}", r.method, r.loss_bits),
            );
        }
        for (i, a) in routes.iter().enumerate() {
            for b in &routes[i + 1..] {
                let comb = (spread(a).powi(2) + spread(b).powi(2)).sqrt();
                c.check(
                    (a.loss_bits - b.loss_bits).abs() <= 3.0 * comb + 1e-9,
                    format!("{name} {} {:.5} vs {} {:.5}", a.method, a.loss_bits, b.method, b.loss_bits),
                );
            }
        }

        // h(Y) <= h(X) + E[log jac], tight exactly when nothing is lost
        let ed = by(&routes, LossMethod::EntropyDifference);
        let k = ed.components.as_ref().unwrap();
        let gap = k.h_x_bits + k.e_logjac_bits - k.h_y_bits;
        let comb = (k.h_y_stderr_bits.powi(2) + k.e_logjac_stderr_bits.powi(2)).sqrt();
        c.check(gap >= -3.0 * comb - 1e-9, format!("{name} entropy gap {gap}"));
        if exact == 0.0 {
            c.check(gap.abs() <= 0.01, format!("{name} bijective but gap {gap}"));
        } else {
            c.check(gap > 0.01, format!("{name} lossy but gap {gap}"));
        }

        if bounded {
            let s = partition_sweep(&m.map, &m.density, &m.analysis.depths, &plan).unwrap();
            c.check(
                s.losses_bits.windows(2).all(|w| w[1] >= w[0] - 1e-12),
                format!("{name} sweep not monotone: {:?}", s.losses_bits),
            );
            let last = *s.losses_bits.last().unwrap();
            let direct = by(&routes, LossMethod::DirectMc).loss_bits;
            c.near(&format!("{name} sweep limit"), last, direct, 0.01);
        }

        let moved = m.map.with_output_affine(3.0, 1.0).unwrap();
        let shifted = mc_routes(&moved, &m.density, &plan).unwrap();
        for (a, b) in routes.iter().zip(&shifted) {
            let comb = (a.stderr_bits.powi(2) + b.stderr_bits.powi(2)).sqrt();
            c.check(
                (a.loss_bits - b.loss_bits).abs() <= 3.0 * comb + 1e-9,
                format!("{name} {} changed under 3y+1: {} vs {}", a.method, a.loss_bits, b.loss_bits),
            );
        }

        if let Some(bbox) = &m.output_box {
            let mass = output_mass(&m.map, &m.density, bbox, &normalization_nodes(m.map.dim())).unwrap();
            c.near(&format!("{name} f_Y mass"), mass, 1.0, 1e-3);
        }
    }

    for (label, mdl) in [
        ("gaussian", model("ex2")),
        ("uniform[-1,1]", from_json(UNIFORM_SQUARE)),
        ("laplace", from_json(LAPLACE_SQUARE)),
    ] {
        for r in mc_routes(&mdl.map, &mdl.density, &plan).unwrap() {
            c.near(&format!("{label} squared {}", r.method), r.loss_bits, 1.0, 0.01);
        }
    }
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(args.iter().copied(), &mut out, &mut err);
    (code, out)
}

fn determinism(c: &mut Criterion) {
    for preset in ["ex1", "ex6_m1", "limiter", "ex3"] {
        let n = if preset == "ex3" { "20000" } else { "200000" };
        let base = ["infoloss", "report", preset, "--n", n, "--seed", "5"];
        let with = |w: &'static str| {
            let mut v = base.to_vec();
            v.extend(["--workers", w]);
            run_cli(&v)
        };
        let (c0, a) = run_cli(&base);
        let (c1, b) = run_cli(&base);
        let (c2, one) = with("1");
        let (c3, eight) = with("8");
        c.check(c0 == 0 && c1 == 0 && c2 == 0 && c3 == 0, format!("{preset} exit codes {c0} {c1} {c2} {c3}"));
        c.check(!a.is_empty() && a == b, format!("{preset}: repeated runs differ"));
        c.check(one == eight, format!("{preset}: --workers 1 and 8 differ"));
        c.check(a == one, format!("{preset}: default pool differs from --workers 1"));
    }
}

type Run = fn(&mut Criterion);

fn main() {
    let criteria: [(&str, Run); 7] = [
        ("fold of the uniform square loses half a bit", fold_square),
        ("square of a standard normal loses one bit", square_gaussian),
        ("triangle magnitude map: loss, bound chain, H(W)", triangle),
        ("exponential sawtooth: infinite cardinality, finite H(W)", sawtooth),
        ("finite/infinite classification suite", classification),
        ("property suite over all presets", properties),
        ("byte-identical reports across runs and worker counts", determinism),
    ];
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let started = std::time::Instant::now();
        let mut c = Criterion::default();
        f(&mut c);
        let secs = started.elapsed().as_secs_f64();
        if c.failures.is_empty() {
            println!("criterion {} PASS: {title} ({} checks, {secs:.1} s)", i + 1, c.checks);
        } else {
            failed += 1;
            println!(
                "criterion {} FAIL: {title} ({}/{} checks failed, {secs:.1} s): {}",
                i + 1,
                c.failures.len(),
                c.checks,
                c.failures.join("; ")
            );
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
