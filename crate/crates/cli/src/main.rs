use std::fmt::Write as _;
use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pdescrow_core::deposit::{DecompositionReport, RefundSchedule};
use pdescrow_core::escrow::{run_match, Transcript};
use pdescrow_core::explorer::{census_table, enumerate, CensusOptions, CensusReport, Threshold};
use pdescrow_core::fragment::{fragment_deposit, fragment_payoff_vs_nash, DominanceMode, Fragment};
use pdescrow_core::game::composition_payoff;
use pdescrow_core::{
    agreement_payoff, decompose, exhaustive_oracle, minimal_deposits, refund_schedule, verify,
    Agreement, Composition, DecomposePolicy, DepositPair, PayoffMatrix, PayoffSummary, Rational,
    StrategyScript, VerificationReport,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "pdescrow",
    version,
    about = "Security deposits for repeated Prisoner's Dilemma agreements"
)]
struct Cli {
    /// Payoff matrix: a JSON file path or an inline JSON object with keys
    /// a..h. Defaults to AC (8,8), AD (4,24), BC (10,4), BD (6,6).
    #[arg(long, global = true)]
    matrix: Option<String>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the ordering axioms e > a > g > c and d > b > h > f.
    MatrixValidate,
    /// Payoff totals, expectations and effectiveness.
    Eval {
        #[command(flatten)]
        source: Source,
    },
    /// Classify a fragment and give its deposit.
    Fragment {
        /// Fragment as `x*AC+z*AD+y*BC`.
        #[arg(long, conflicts_with = "agreement")]
        fragment: Option<Fragment>,
        /// Fragment as explicit stage tokens, order kept.
        #[arg(long)]
        agreement: Option<Agreement>,
        #[arg(long, default_value = "weak")]
        dominance: DominanceMode,
    },
    /// Decompose a composition into fragments and compute deposits.
    Deposit {
        #[arg(long)]
        composition: Composition,
        #[arg(long, default_value = "balanced")]
        policy: DecomposePolicy,
    },
    /// Refund schedule for a composition's decomposition.
    Schedule {
        #[arg(long)]
        composition: Composition,
        #[arg(long, default_value = "balanced")]
        policy: DecomposePolicy,
    },
    /// Check deposits against every one-shot deviation.
    Verify {
        #[arg(long)]
        agreement: Agreement,
        #[arg(long)]
        deposits: DepositPair,
        /// Also walk the deviation game explicitly (at most 12 stages).
        #[arg(long)]
        oracle: bool,
    },
    /// Census over all compositions of N stages.
    Enumerate {
        #[arg(long)]
        n: usize,
        /// Cap on AC stages, or `none`.
        #[arg(long, default_value = "2", value_parser = parse_cap)]
        max_ac: Cap,
        #[arg(long, default_value = "balanced")]
        policy: DecomposePolicy,
        /// Expectation bar both players must clear, e.g. `>=8` or `>8.5`.
        /// Repeatable. Defaults to >=7.5, >=8 and >8.5.
        #[arg(long = "threshold")]
        thresholds: Vec<Threshold>,
        /// List every composition, not only the effective ones.
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum)]
        report: Option<ReportKind>,
    },
    /// Play one match under escrow.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Defaults to the decomposition deposit for a composition and to
        /// the minimal deposits for an explicit agreement.
        #[arg(long)]
        deposits: Option<DepositPair>,
        #[arg(long, default_value = "balanced")]
        policy: DecomposePolicy,
        /// compliant, defect-at:K, best-response or random:P.
        #[arg(long, default_value = "compliant")]
        tom: String,
        #[arg(long, default_value = "compliant")]
        jack: String,
        /// Tom's random strategy uses this seed, Jack's the next one.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Release deposits in tranches (composition input only).
        #[arg(long, requires = "composition")]
        refunds: bool,
    },
}

#[derive(clap::Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Stage tokens such as `AC,AD,BC`.
    #[arg(long)]
    agreement: Option<Agreement>,
    /// Counts `n_bc,n_ad,n_ac`.
    #[arg(long)]
    composition: Option<Composition>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportKind {
    Discrepancies,
}

#[derive(Clone, Copy)]
struct Cap(Option<usize>);

fn parse_cap(s: &str) -> Result<Cap, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Cap(None));
    }
    s.parse()
        .map(|n| Cap(Some(n)))
        .map_err(|_| format!("expected a count or `none`, got {s:?}"))
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<pdescrow_core::Error> for Failure {
    fn from(e: pdescrow_core::Error) -> Self {
        Failure {
            code: 1,
            msg: e.to_string(),
        }
    }
}

fn domain(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        msg: msg.into(),
    }
}

type Out = Result<String, Failure>;

fn load_matrix(src: Option<&str>) -> Result<PayoffMatrix, Failure> {
    let text = match src {
        None => return Ok(PayoffMatrix::worked()),
        Some(s) if s.trim_start().starts_with('{') => s.to_string(),
        Some(path) => fs::read_to_string(path)
            .map_err(|e| domain(format!("cannot read matrix {path}: {e}")))?,
    };
    let m: PayoffMatrix =
        serde_json::from_str(&text).map_err(|e| domain(format!("bad matrix JSON: {e}")))?;
    m.validate()?;
    Ok(m)
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn csv_rows<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("flat row");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Decimal when exact to three places, `n/d` otherwise.
fn plain(q: &Rational) -> String {
    let d = q.to_decimal(3);
    if d.parse::<Rational>().ok().as_ref() == Some(q) {
        let t = d.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        q.to_string()
    }
}

#[derive(Serialize)]
struct EvalOut {
    agreement: Option<String>,
    composition: Composition,
    payoff: PayoffSummary,
    baseline: (Rational, Rational),
    effective: bool,
}

#[derive(Serialize)]
struct EvalRow {
    n_bc: usize,
    n_ad: usize,
    n_ac: usize,
    stages: usize,
    tom_total: Rational,
    jack_total: Rational,
    #[serde(rename = "tom_E")]
    tom_e: String,
    #[serde(rename = "jack_E")]
    jack_e: String,
    effective: bool,
}

fn cmd_eval(src: &Source, m: &PayoffMatrix, format: Format) -> Out {
    let (agreement, composition, payoff) = match (&src.agreement, src.composition) {
        (Some(a), _) => (Some(a.to_string()), a.composition(), agreement_payoff(a, m)),
        (None, Some(c)) => (None, c, composition_payoff(&c, m)?),
        (None, None) => unreachable!("clap requires one source"),
    };
    let baseline = m.nash_baseline(payoff.stages);
    let effective = payoff.tom_total > baseline.0 && payoff.jack_total > baseline.1;
    Ok(match format {
        Format::Json => json(&EvalOut {
            agreement,
            composition,
            payoff,
            baseline,
            effective,
        }),
        Format::Csv => csv_rows(&[EvalRow {
            n_bc: composition.n_bc,
            n_ad: composition.n_ad,
            n_ac: composition.n_ac,
            stages: payoff.stages,
            tom_e: payoff.tom_expectation.to_decimal(3),
            jack_e: payoff.jack_expectation.to_decimal(3),
            tom_total: payoff.tom_total,
            jack_total: payoff.jack_total,
            effective,
        }]),
    })
}

#[derive(Serialize)]
struct FragmentOut {
    text: String,
    x_ac: usize,
    y_bc: usize,
    z_ad: usize,
    kind: String,
    shape: Option<u8>,
    dominance: String,
    dominant: bool,
    tom_delta: Rational,
    jack_delta: Rational,
    deposit_tom: Option<Rational>,
    deposit_jack: Option<Rational>,
    note: Option<String>,
}

fn cmd_fragment(f: &Fragment, mode: DominanceMode, m: &PayoffMatrix, format: Format) -> Out {
    let check = fragment_payoff_vs_nash(f, m, mode);
    let counts = f.counts();
    let dep = fragment_deposit(f, m);
    let out = FragmentOut {
        text: f
            .order()
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join(","),
        x_ac: counts.x_ac,
        y_bc: counts.y_bc,
        z_ad: counts.z_ad,
        kind: f.kind().to_string(),
        shape: f.deposit_shape().ok().map(|r| r.number()),
        dominance: format!("{mode:?}").to_lowercase(),
        dominant: check.dominant,
        tom_delta: check.tom_delta,
        jack_delta: check.jack_delta,
        deposit_tom: dep.as_ref().ok().map(|d| d.tom.clone()),
        deposit_jack: dep.as_ref().ok().map(|d| d.jack.clone()),
        note: dep.err().map(|e| e.to_string()),
    };
    Ok(match format {
        Format::Json => json(&out),
        Format::Csv => csv_rows(&[out]),
    })
}

/// A level change in a refund schedule, also given as the first stage
/// played at the lower level.
#[derive(Serialize)]
struct Drop {
    after_stage: usize,
    from_stage: usize,
    tom: Rational,
    jack: Rational,
}

fn drops(s: &RefundSchedule) -> Vec<Drop> {
    s.changes()
        .into_iter()
        .map(|l| Drop {
            after_stage: l.stage,
            from_stage: l.stage + 1,
            tom: l.remaining.tom.clone(),
            jack: l.remaining.jack.clone(),
        })
        .collect()
}

#[derive(Serialize)]
struct DepositOut {
    #[serde(flatten)]
    report: DecompositionReport,
    drops: Vec<Drop>,
}

#[derive(Serialize)]
struct FragmentRow {
    text: String,
    kind: String,
    shape: Option<u8>,
    first_stage: usize,
    last_stage: usize,
    dominant: bool,
    trailing: bool,
    deposit_tom: Option<Rational>,
    deposit_jack: Option<Rational>,
}

fn cmd_deposit(c: Composition, policy: DecomposePolicy, m: &PayoffMatrix, format: Format) -> Out {
    let d = decompose(c, m, policy)?;
    let report = DecompositionReport::build(&d, m)?;
    Ok(match format {
        Format::Json => json(&DepositOut {
            drops: drops(&report.schedule),
            report,
        }),
        Format::Csv => {
            let rows: Vec<FragmentRow> = report
                .fragments
                .iter()
                .map(|f| FragmentRow {
                    text: f.text.clone(),
                    kind: f.kind.to_string(),
                    shape: f.shape,
                    first_stage: f.first_stage,
                    last_stage: f.last_stage,
                    dominant: f.dominant,
                    trailing: f.trailing,
                    deposit_tom: f.deposit.as_ref().map(|d| d.tom.clone()),
                    deposit_jack: f.deposit.as_ref().map(|d| d.jack.clone()),
                })
                .collect();
            let mut s = csv_rows(&rows);
            writeln!(
                s,
                "# deposit={},{}",
                report.deposit.tom, report.deposit.jack
            )
            .unwrap();
            let drop_text: Vec<String> = drops(&report.schedule)
                .iter()
                .map(|d| format!("{}:{},{}", d.from_stage, d.tom, d.jack))
                .collect();
            writeln!(s, "# drops={}", drop_text.join(";")).unwrap();
            s
        }
    })
}

#[derive(Serialize)]
struct ScheduleOut {
    schedule: RefundSchedule,
    drops: Vec<Drop>,
}

#[derive(Serialize)]
struct LevelRow {
    after_stage: usize,
    tom: Rational,
    jack: Rational,
}

fn cmd_schedule(c: Composition, policy: DecomposePolicy, m: &PayoffMatrix, format: Format) -> Out {
    let d = decompose(c, m, policy)?;
    let schedule = refund_schedule(&d, m)?;
    Ok(match format {
        Format::Json => json(&ScheduleOut {
            drops: drops(&schedule),
            schedule,
        }),
        Format::Csv => {
            let rows: Vec<LevelRow> = (0..=schedule.horizon())
                .map(|k| {
                    let r = schedule.remaining_after(k);
                    LevelRow {
                        after_stage: k,
                        tom: r.tom.clone(),
                        jack: r.jack.clone(),
                    }
                })
                .collect();
            csv_rows(&rows)
        }
    })
}

#[derive(Serialize)]
struct VerifyOut {
    #[serde(flatten)]
    report: VerificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<bool>,
}

#[derive(Serialize)]
struct GainRow {
    stage: usize,
    player: String,
    gain: Rational,
    deposit: Rational,
    status: &'static str,
}

fn cmd_verify(
    ag: &Agreement,
    dep: &DepositPair,
    oracle: bool,
    m: &PayoffMatrix,
    format: Format,
) -> Out {
    let report = verify(ag, dep, m);
    let oracle = if oracle {
        Some(exhaustive_oracle(ag, dep, m)?)
    } else {
        None
    };
    Ok(match format {
        Format::Json => json(&VerifyOut { report, oracle }),
        Format::Csv => {
            let rows: Vec<GainRow> = pdescrow_core::one_shot_gains(ag, m)
                .into_iter()
                .map(|g| {
                    let stake = dep.get(g.player).clone();
                    let status = if g.gain > stake {
                        "violation"
                    } else if g.gain == stake {
                        "binding"
                    } else {
                        "slack"
                    };
                    GainRow {
                        stage: g.stage,
                        player: g.player.to_string(),
                        gain: g.gain,
                        deposit: stake,
                        status,
                    }
                })
                .collect();
            let mut s = csv_rows(&rows);
            writeln!(s, "# sufficient={}", report.sufficient).unwrap();
            writeln!(
                s,
                "# minimal={},{}",
                report.minimal.tom, report.minimal.jack
            )
            .unwrap();
            if let Some(o) = oracle {
                writeln!(s, "# oracle={o}").unwrap();
            }
            s
        }
    })
}

fn threshold_label(t: &Threshold) -> String {
    format!("{}{}", if t.strict { ">" } else { ">=" }, plain(&t.value))
}

fn census_csv(report: &CensusReport, policy: DecomposePolicy, m: &PayoffMatrix, all: bool) -> Out {
    let rows = census_table(report, policy, m, all)?;
    let mut s = csv_rows(&rows);
    if rows.is_empty() {
        s.push_str("n_bc,n_ad,n_ac,tom_E,tom_total,tom_sd,jack_E,jack_total,jack_sd\n");
    }
    writeln!(s, "# n={}", report.n).unwrap();
    let cap = report.max_ac.map_or("none".to_string(), |c| c.to_string());
    writeln!(s, "# max_ac={cap}").unwrap();
    writeln!(s, "# total={}", report.total_enumerated).unwrap();
    writeln!(s, "# effective={}", report.effective).unwrap();
    for t in &report.threshold_counts {
        writeln!(s, "# both {}={}", threshold_label(&t.threshold), t.count).unwrap();
    }
    let frontier: Vec<String> = report.frontier.iter().map(|c| format!("({c})")).collect();
    writeln!(s, "# frontier={}", frontier.join(" ")).unwrap();
    if !report.discrepancies.is_empty() {
        writeln!(
            s,
            "# discrepancies={} (see --report discrepancies)",
            report.discrepancies.len()
        )
        .unwrap();
    }
    Ok(s)
}

fn run(cli: Cli) -> Out {
    let m = load_matrix(cli.matrix.as_deref())?;
    let fmt_or = |default| cli.format.unwrap_or(default);
    match cli.cmd {
        Cmd::MatrixValidate => Ok(match fmt_or(Format::Json) {
            Format::Json => json(&serde_json::json!({ "valid": true, "matrix": m })),
            Format::Csv => {
                let mut s = String::from("entry,value\n");
                for (k, v) in [
                    ("a", &m.a),
                    ("b", &m.b),
                    ("c", &m.c),
                    ("d", &m.d),
                    ("e", &m.e),
                    ("f", &m.f),
                    ("g", &m.g),
                    ("h", &m.h),
                ] {
                    writeln!(s, "{k},{v}").unwrap();
                }
                s.push_str("# valid=true\n");
                s
            }
        }),
        Cmd::Eval { source } => cmd_eval(&source, &m, fmt_or(Format::Json)),
        Cmd::Fragment {
            fragment,
            agreement,
            dominance,
        } => {
            let f = match (fragment, agreement) {
                (Some(f), _) => f,
                (None, Some(a)) => Fragment::from_stages(a.stages())?,
                (None, None) => {
                    return Err(Failure {
                        code: 2,
                        msg: "fragment needs --fragment or --agreement".into(),
                    })
                }
            };
            cmd_fragment(&f, dominance, &m, fmt_or(Format::Json))
        }
        Cmd::Deposit {
            composition,
            policy,
        } => cmd_deposit(composition, policy, &m, fmt_or(Format::Json)),
        Cmd::Schedule {
            composition,
            policy,
        } => cmd_schedule(composition, policy, &m, fmt_or(Format::Json)),
        Cmd::Verify {
            agreement,
            deposits,
            oracle,
        } => cmd_verify(&agreement, &deposits, oracle, &m, fmt_or(Format::Json)),
        Cmd::Enumerate {
            n,
            max_ac,
            policy,
            thresholds,
            all,
            report,
        } => {
            let mut opts = CensusOptions {
                max_ac: max_ac.0,
                policy,
                ..CensusOptions::default()
            };
            if !thresholds.is_empty() {
                opts.thresholds = thresholds;
            }
            let census = enumerate(n, &m, &opts)?;
            match (report, fmt_or(Format::Csv)) {
                (Some(ReportKind::Discrepancies), Format::Json) => Ok(json(&census.discrepancies)),
                (Some(ReportKind::Discrepancies), Format::Csv) => {
                    if census.discrepancies.is_empty() {
                        Ok("item,published,computed,note\n".into())
                    } else {
                        Ok(csv_rows(&census.discrepancies))
                    }
                }
                (None, Format::Json) => Ok(json(&census)),
                (None, Format::Csv) => census_csv(&census, policy, &m, all),
            }
        }
        Cmd::Simulate {
            source,
            deposits,
            policy,
            tom,
            jack,
            seed,
            refunds,
        } => {
            let (ag, default_dep, schedule) = match (&source.agreement, source.composition) {
                (Some(a), _) => (a.clone(), minimal_deposits(a, &m), None),
                (None, Some(c)) => {
                    let d = decompose(c, &m, policy)?;
                    let s = refund_schedule(&d, &m)?;
                    (d.agreement()?, d.deposit(&m)?, refunds.then_some(s))
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let dep = deposits.unwrap_or(default_dep);
            let mut tom = StrategyScript::parse(&tom, seed)?;
            let mut jack = StrategyScript::parse(&jack, seed.wrapping_add(1))?;
            let t = run_match(&ag, &dep, &mut tom, &mut jack, &m, schedule.as_ref())?;
            Ok(match fmt_or(Format::Json) {
                Format::Json => t.to_jsonl(),
                Format::Csv => simulate_csv(&t),
            })
        }
    }
}

#[derive(Serialize)]
struct EventRow {
    stage: usize,
    prescribed: String,
    tom_move: char,
    jack_move: char,
    tom_compliant: bool,
    jack_compliant: bool,
    tom_running: Rational,
    jack_running: Rational,
    tom_held: Rational,
    jack_held: Rational,
}

fn simulate_csv(t: &Transcript) -> String {
    let rows: Vec<EventRow> = t
        .events
        .iter()
        .map(|e| EventRow {
            stage: e.stage,
            prescribed: e.prescribed.to_string(),
            tom_move: e.tom_move.symbol(),
            jack_move: e.jack_move.symbol(),
            tom_compliant: e.tom_compliant,
            jack_compliant: e.jack_compliant,
            tom_running: e.running_payoffs.0.clone(),
            jack_running: e.running_payoffs.1.clone(),
            tom_held: e.held.tom.clone(),
            jack_held: e.held.jack.clone(),
        })
        .collect();
    let mut s = csv_rows(&rows);
    let l = &t.ledger;
    writeln!(
        s,
        "# deposits_in={},{}",
        l.deposits_in.tom, l.deposits_in.jack
    )
    .unwrap();
    writeln!(
        s,
        "# refunds_out={},{}",
        l.refunds_out.tom, l.refunds_out.jack
    )
    .unwrap();
    writeln!(s, "# forfeits={},{}", l.forfeits.tom, l.forfeits.jack).unwrap();
    writeln!(s, "# sink={}", l.sink).unwrap();
    let (nt, nj) = t.net();
    writeln!(s, "# net={nt},{nj}").unwrap();
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("pdescrow: error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
