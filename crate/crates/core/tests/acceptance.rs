//! Acceptance run: one line per criterion, exit status non-zero if any fails.
//! Sample sizes and tolerances are the ones the checks are specified with.

use std::process::ExitCode;
use std::time::Instant;

use fdyson::harness::suites::{self, stream_family};
use fdyson::harness::{run_suite, ExperimentConfig, Suite, SuiteContext};
use fdyson::statistics::TestReport;
use fdyson::Result;

const SEED: u64 = 20_241_015;

fn ctx(d: usize, hurst: f64, steps: usize) -> SuiteContext {
    SuiteContext::new(&ExperimentConfig {
        d,
        hurst,
        steps,
        master_seed: SEED,
        ..Default::default()
    })
    .expect("valid acceptance config")
}

fn pick(reports: Vec<TestReport>, names: &[&str]) -> Vec<TestReport> {
    reports
        .into_iter()
        .filter(|r| names.iter().any(|n| r.name == *n))
        .collect()
}

fn label(r: &TestReport, tag: &str) -> String {
    let name = if tag.is_empty() {
        r.name.clone()
    } else {
        format!("{}[{tag}]", r.name)
    };
    format!(
        "{name}={:.4e}/{:.4e}{}",
        r.statistic,
        r.threshold,
        if r.passed { "" } else { "!" }
    )
}

struct Outcome {
    passed: bool,
    summary: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            passed: true,
            summary: Vec::new(),
        }
    }

    fn add(&mut self, tag: &str, result: Result<Vec<TestReport>>) {
        match result {
            Ok(reports) if !reports.is_empty() => {
                for r in reports {
                    self.passed &= r.passed;
                    self.summary.push(label(&r, tag));
                }
            }
            Ok(_) => {
                self.passed = false;
                self.summary.push(format!("[{tag}] no reports"));
            }
            Err(e) => {
                self.passed = false;
                self.summary.push(format!("[{tag}] error: {e}"));
            }
        }
    }

    fn check(&mut self, tag: &str, ok: bool, text: String) {
        self.passed &= ok;
        self.summary
            .push(format!("{tag}: {text}{}", if ok { "" } else { "!" }));
    }
}

fn one(r: Result<TestReport>) -> Result<Vec<TestReport>> {
    r.map(|r| vec![r])
}

fn c1() -> Outcome {
    let mut o = Outcome::new();
    for h in [0.6, 0.75] {
        let c = ctx(2, h, 1 << 12);
        let tag = format!("H={h}");
        o.add(
            &tag,
            one(suites::fbm_covariance(
                &c,
                10_000,
                stream_family(Suite::Simulate, 0),
            )),
        );
        o.add(
            &tag,
            one(suites::sampler_agreement(
                &c,
                10_000,
                stream_family(Suite::Simulate, 1),
                stream_family(Suite::Simulate, 2),
            )),
        );
    }
    o
}

fn c2() -> Outcome {
    let mut o = Outcome::new();
    for h in [0.6, 0.75] {
        let c = ctx(2, h, 1 << 14);
        o.add(
            &format!("H={h}"),
            one(suites::fbm_variation(
                &c,
                200,
                stream_family(Suite::Variation, 0),
            )),
        );
    }
    o
}

fn c3() -> Outcome {
    let mut o = Outcome::new();
    for d in [2, 3] {
        for h in [0.6, 0.75] {
            let c = ctx(d, h, 1 << 12);
            let r = suites::noncollision(&c, 200, stream_family(Suite::Noncollide, 0))
                .map(|(r, _)| vec![r]);
            o.add(&format!("d={d},H={h}"), r);
        }
    }
    o
}

fn c4() -> Outcome {
    let mut o = Outcome::new();
    o.add(
        "",
        suites::gradient_formulas(SEED, 100, stream_family(Suite::Gradcheck, 0)),
    );
    o
}

const IDENTITIES: [&str; 3] = ["decomposition_identity", "drift_sum_zero", "trace_identity"];

fn c5_c6() -> (Outcome, Outcome) {
    let (mut o5, mut o6) = (Outcome::new(), Outcome::new());
    let fam = stream_family(Suite::Itocheck, 0);
    let c = ctx(2, 0.75, 1 << 12);
    match suites::decomposition_checks(&c, 500, fam) {
        Ok(reports) => {
            o5.add("d=2", Ok(pick(reports.clone(), &IDENTITIES)));
            o6.add("", Ok(pick(reports, &["y_zero_mean"])));
        }
        Err(e) => {
            o5.add("d=2", Err(e.clone()));
            o6.add("", Err(e));
        }
    }
    let c = ctx(3, 0.6, 1 << 12);
    o5.add(
        "d=3",
        suites::decomposition_checks(&c, 100, fam).map(|r| pick(r, &IDENTITIES)),
    );
    (o5, o6)
}

fn c7() -> Outcome {
    let mut o = Outcome::new();
    let c = ctx(2, 0.75, 1 << 12);
    o.add(
        "",
        one(suites::young_skorohod_consistency(
            &c,
            200,
            stream_family(Suite::Itocheck, 1),
        )),
    );
    o
}

fn c8() -> Outcome {
    let mut o = Outcome::new();
    let c = ctx(2, 0.75, 1 << 14);
    o.add(
        "",
        suites::y_variation(&c, 200, stream_family(Suite::Variation, 1)),
    );
    o
}

fn c9() -> Outcome {
    let mut o = Outcome::new();
    let c = ctx(2, 0.75, 1 << 12);
    let fams = [
        stream_family(Suite::Selfsim, 0),
        stream_family(Suite::Selfsim, 1),
    ];
    o.add("", suites::self_similarity(&c, 2000, fams));
    o
}

fn c10() -> Outcome {
    let mut o = Outcome::new();
    let c = ctx(2, 0.75, 1 << 12);
    let fams = [2, 3, 4, 5].map(|k| stream_family(Suite::Itocheck, k));
    o.add("", suites::brownian_reduction(&c, 2000, fams));
    o
}

fn c11() -> Outcome {
    let mut o = Outcome::new();
    let c = ctx(2, 0.75, 1 << 13);
    o.add(
        "",
        suites::decomposition_checks(&c, 100, stream_family(Suite::Itocheck, 0))
            .map(|r| pick(r, &["log_gap_young"])),
    );
    o
}

fn c12() -> Outcome {
    let mut o = Outcome::new();
    let c = ctx(2, 0.75, 1 << 12);
    let fams: Vec<u16> = (0..5).map(|j| stream_family(Suite::Density, j)).collect();
    o.add("", suites::gap_law(&c, 10_000, &fams));
    o
}

fn c13() -> Outcome {
    let mut o = Outcome::new();
    for h in [0.6, 0.75] {
        let c = ctx(2, h, 1 << 12);
        let tag = format!("H={h}");
        o.add(
            &tag,
            one(suites::holder_fbm(
                &c,
                500,
                stream_family(Suite::Simulate, 3),
            )),
        );
        o.add(
            &tag,
            suites::holder_eigenvalues(&c, 500, stream_family(Suite::Simulate, 4)),
        );
    }
    o
}

fn c14() -> Outcome {
    let mut o = Outcome::new();
    let base = ExperimentConfig {
        steps: 1 << 12,
        replicates: 30,
        master_seed: SEED,
        suites: Suite::ALL.to_vec(),
        ..Default::default()
    };
    let runs: Vec<_> = [1, 8]
        .into_iter()
        .map(|threads| {
            run_suite(&ExperimentConfig {
                threads: Some(threads),
                ..base.clone()
            })
        })
        .collect();
    match (&runs[0], &runs[1]) {
        (Ok(a), Ok(b)) => {
            let same = a.canonical_json() == b.canonical_json();
            let reports: usize = a.suites.iter().map(|s| s.reports.len()).sum();
            o.check(
                "threads 1 vs 8",
                same,
                format!(
                    "{} manifests over {reports} reports",
                    if same { "identical" } else { "different" }
                ),
            );
        }
        (Err(e), _) | (_, Err(e)) => o.check("run", false, e.to_string()),
    }
    o
}

type Criterion = (u32, &'static str, Box<dyn Fn() -> Vec<Outcome>>);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        (1, "fBm sampler exactness", Box::new(|| vec![c1()])),
        (2, "fBm 1/H-variation", Box::new(|| vec![c2()])),
        (3, "non-collision", Box::new(|| vec![c3()])),
        (4, "eigenvalue derivative formulas", Box::new(|| vec![c4()])),
        (
            5,
            "decomposition identities / Y zero mean",
            Box::new(|| {
                let (a, b) = c5_c6();
                vec![a, b]
            }),
        ),
        (7, "Young/Skorohod consistency", Box::new(|| vec![c7()])),
        (8, "1/H-variation of Y", Box::new(|| vec![c8()])),
        (9, "self-similarity", Box::new(|| vec![c9()])),
        (10, "H = 1/2 reduction", Box::new(|| vec![c10()])),
        (11, "log-gap Young identity", Box::new(|| vec![c11()])),
        (
            12,
            "gap density and negative moments",
            Box::new(|| vec![c12()]),
        ),
        (13, "Hölder exponents", Box::new(|| vec![c13()])),
        (
            14,
            "determinism across thread counts",
            Box::new(|| vec![c14()]),
        ),
    ];
    let names6 = "Skorohod residual zero mean";
    let mut failed = Vec::new();
    let started = Instant::now();
    for (id, name, run) in criteria {
        let t = Instant::now();
        let outcomes = run();
        let titles: Vec<(u32, &str)> = if id == 5 {
            vec![(5, "decomposition identities"), (6, names6)]
        } else {
            vec![(id, name)]
        };
        for ((cid, title), o) in titles.into_iter().zip(outcomes) {
            println!(
                "criterion {cid:>2} {} {title} ({:.1}s): {}",
                if o.passed { "PASS" } else { "FAIL" },
                t.elapsed().as_secs_f64(),
                o.summary.join("  ")
            );
            if !o.passed {
                failed.push(cid);
            }
        }
    }
    println!(
        "acceptance: {} of 14 criteria passed in {:.1}s{}",
        14 - failed.len(),
        started.elapsed().as_secs_f64(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {failed:?}")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
