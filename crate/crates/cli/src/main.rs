use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use elcq_core::answer::{answer_over_store, AnswerOptions, AnswerSet, Answers, Cq};
use elcq_core::arborescent::{classify_query, entails, QueryShape};
use elcq_core::bench::{bench_queries, gen_bench, BenchSpec};
use elcq_core::chase::{oracle_answers, ChaseLimits};
use elcq_core::filter::FilterConfig;
use elcq_core::hardgen::{
    brute_sat, gen_acyclic_hard, gen_filter_hard, gen_refl_hard, gen_trans_hard, Cnf,
};
use elcq_core::kb::{validate_kb, Kb};
use elcq_core::materialize::{materialize_with_cap, FactStore, MaterializeStats, ResourceLimit};
use elcq_core::text::{parse_kb, parse_query, print_query, serialize_facts, serialize_kb};
use elcq_core::translate::{build_datalog, build_rule_base};

const UNSAT_BANNER: &str = "unsatisfiable: every tuple is a certain answer";

#[derive(Parser, Debug)]
#[command(
    name = "elcq",
    version,
    about = "Conjunctive query answering over ELHO knowledge bases with transitive and reflexive roles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Filter branch cap per candidate.
    #[arg(long, global = true, default_value_t = 10_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    branch_cap: u64,
    /// Deepest functional term the chase oracle may create.
    #[arg(long, global = true, default_value_t = 6)]
    depth: u32,
    /// Fact limit for materialization and the chase oracle.
    #[arg(long, global = true, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_facts: u64,
    /// Treat KB validation diagnostics as errors instead of dropping the
    /// offending axioms.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads for filtering candidates.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    scale: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HardKind {
    Filter,
    Acyclic,
    Trans,
    Refl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide satisfiability of a KB.
    Check { kb: PathBuf },
    /// Print the saturated datalog model of a KB and its statistics.
    Materialize { kb: PathBuf },
    /// Compute certain answers of a query.
    Answer {
        kb: PathBuf,
        query: PathBuf,
        /// Hand every candidate to the filter instead of discarding partial
        /// matches that cannot be sound.
        #[arg(long)]
        no_prune: bool,
    },
    /// Classify a query as cyclic, acyclic or arborescent; with a KB, also
    /// decide arborescent queries with the polynomial procedure.
    Classify {
        query: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Answer a query with the bounded chase.
    Oracle { kb: PathBuf, query: PathBuf },
    /// Write a KB and Boolean query encoding a CNF formula.
    GenHard {
        kind: HardKind,
        /// DIMACS file, or inline clauses such as "1 -2 3 0 -1 2 2 0".
        #[arg(long)]
        cnf: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write the synthetic university benchmark and its query templates.
    GenBench {
        #[arg(long, default_value_t = 3)]
        chain_depth: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Parse(String),
    Limit(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Parse(m) | Failure::Limit(m) => f.write_str(m),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Limit(_) => 3,
        }
    }
}

impl From<ResourceLimit> for Failure {
    fn from(e: ResourceLimit) -> Self {
        Failure::Limit(format!("resource limit: {e}"))
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_query(path: &Path) -> Result<Cq, Failure> {
    parse_query(&read(path)?).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn load_kb(path: &Path, strict: bool) -> Result<Kb, Failure> {
    let mut kb =
        parse_kb(&read(path)?).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let report = validate_kb(&kb);
    if !report.is_ok() {
        if strict {
            return Err(Failure::Parse(format!("{}: {report}", path.display())));
        }
        eprintln!(
            "warning: {}: dropping invalid axioms:\n{report}",
            path.display()
        );
        let bad: Vec<usize> = report
            .diagnostics
            .iter()
            .filter_map(|d| d.axiom())
            .collect();
        kb.retain_axioms(|i, _| !bad.contains(&i));
    }
    Ok(kb)
}

fn saturate(kb: &Kb, cli: &Cli) -> Result<(FactStore, MaterializeStats), Failure> {
    let program = build_datalog(kb).map_err(|e| Failure::Parse(e.to_string()))?;
    Ok(materialize_with_cap(&program, cli.max_facts as usize)?)
}

fn tuple_text(t: &[String]) -> String {
    format!("({})", t.join(", "))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn answer_json(set: &AnswerSet) -> Value {
    let answers: Vec<&Vec<String>> = set.tuples().map(|t| t.iter().collect()).unwrap_or_default();
    json!({
        "answers": answers,
        "candidates": set.stats.candidates,
        "unsound": set.stats.unsound,
        "filter_ms_avg": round2(set.stats.filter_ms_avg()),
        "choices_avg": round2(set.stats.choices_avg()),
        "fast_path_hits": set.stats.fast_path_hits,
        "unsat": matches!(set.answers, Answers::Unsatisfiable),
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Check { kb } => {
            let kb = load_kb(kb, cli.strict)?;
            let (store, _) = saturate(&kb, cli)?;
            let verdict = if store.is_unsatisfiable() {
                "unsatisfiable"
            } else {
                "satisfiable"
            };
            match cli.format {
                Format::Text => println!("{verdict}"),
                Format::Json => println!("{}", json!({ "satisfiable": !store.is_unsatisfiable() })),
            }
        }
        Command::Materialize { kb } => {
            let kb = load_kb(kb, cli.strict)?;
            let (store, stats) = saturate(&kb, cli)?;
            match cli.format {
                Format::Text => {
                    print!("{}", serialize_facts(&store));
                    println!("# abox atoms: {}", stats.abox_facts);
                    println!("# facts after: {}", stats.total_facts);
                    println!("# ratio: {:.2}", stats.ratio());
                    println!("# merges: {}", stats.merges);
                    println!("# unsatisfiable: {}", store.is_unsatisfiable());
                }
                Format::Json => {
                    let facts: Vec<String> =
                        serialize_facts(&store).lines().map(String::from).collect();
                    println!(
                        "{}",
                        json!({
                            "facts": facts,
                            "abox_atoms": stats.abox_facts,
                            "facts_after": stats.total_facts,
                            "ratio": round2(stats.ratio()),
                            "merges": stats.merges,
                            "unsat": store.is_unsatisfiable(),
                        })
                    );
                }
            }
        }
        Command::Answer {
            kb,
            query,
            no_prune,
        } => {
            let kb = load_kb(kb, cli.strict)?;
            let q = load_query(query)?;
            let (store, _) = saturate(&kb, cli)?;
            let opts = AnswerOptions {
                filter: FilterConfig {
                    branch_cap: cli.branch_cap,
                    ..FilterConfig::default()
                },
                jobs: cli.jobs.map(|j| j as usize),
                prune: !no_prune,
            };
            let set = answer_over_store(&store, &q, &opts);
            match cli.format {
                Format::Text => {
                    match &set.answers {
                        Answers::Unsatisfiable => println!("{UNSAT_BANNER}"),
                        Answers::Tuples(ts) if q.is_boolean() => println!("{}", !ts.is_empty()),
                        Answers::Tuples(ts) => {
                            for t in ts {
                                println!("{}", tuple_text(t));
                            }
                        }
                    }
                    let s = &set.stats;
                    println!(
                        "# candidates: {}, unsound: {}, filter_ms_avg: {:.2}, choices_avg: {:.2}, fast_path_hits: {}",
                        s.candidates,
                        s.unsound,
                        s.filter_ms_avg(),
                        s.choices_avg(),
                        s.fast_path_hits
                    );
                }
                Format::Json => println!("{}", answer_json(&set)),
            }
            if !set.undecided.is_empty() {
                let list: Vec<String> = set.undecided.iter().map(|t| tuple_text(t)).collect();
                return Err(Failure::Limit(format!(
                    "branch cap reached; undecided tuples: {}",
                    list.join(" ")
                )));
            }
        }
        Command::Classify { query, kb } => {
            let q = load_query(query)?;
            let shape = classify_query(&q);
            let name = match shape {
                QueryShape::Cyclic => "cyclic",
                QueryShape::Acyclic => "acyclic",
                QueryShape::Arborescent { .. } => "arborescent",
            };
            let entailed = match kb {
                Some(path) if matches!(shape, QueryShape::Arborescent { .. }) => {
                    let kb = load_kb(path, cli.strict)?;
                    if !kb.is_elho() {
                        return Err(Failure::Usage(
                            "the polynomial procedure needs an ELHO knowledge base (axiom forms 1 to 7)".into(),
                        ));
                    }
                    let (store, _) = saturate(&kb, cli)?;
                    Some(
                        store.is_unsatisfiable()
                            || entails(&store, &q).map_err(|e| Failure::Usage(e.to_string()))?,
                    )
                }
                _ => None,
            };
            match cli.format {
                Format::Text => {
                    println!("{name}");
                    if let Some(e) = entailed {
                        println!("entailed: {e}");
                    }
                }
                Format::Json => {
                    let root = match &shape {
                        QueryShape::Arborescent { root } => Some(root.clone()),
                        _ => None,
                    };
                    println!(
                        "{}",
                        json!({ "shape": name, "root": root, "entailed": entailed })
                    );
                }
            }
        }
        Command::Oracle { kb, query } => {
            let kb = load_kb(kb, cli.strict)?;
            let q = load_query(query)?;
            let base = build_rule_base(&kb).map_err(|e| Failure::Parse(e.to_string()))?;
            let limits = ChaseLimits {
                depth: cli.depth,
                facts: cli.max_facts as usize,
            };
            let res = oracle_answers(&base, &q, limits);
            match cli.format {
                Format::Text => {
                    if res.unsatisfiable {
                        println!("{UNSAT_BANNER}");
                    } else if q.is_boolean() {
                        println!("{}", !res.tuples.is_empty());
                    } else {
                        for t in &res.tuples {
                            println!("{}", tuple_text(t));
                        }
                    }
                    println!("# complete: {}", res.complete);
                }
                Format::Json => {
                    let answers: Vec<&Vec<String>> = res.tuples.iter().collect();
                    println!(
                        "{}",
                        json!({ "answers": answers, "complete": res.complete, "unsat": res.unsatisfiable })
                    );
                }
            }
            if !res.complete {
                return Err(Failure::Limit(
                    "chase stopped at its depth or fact limit; answers are sound but may be incomplete".into(),
                ));
            }
        }
        Command::GenHard { kind, cnf, out } => {
            let text = if Path::new(cnf).is_file() {
                read(Path::new(cnf))?
            } else {
                cnf.clone()
            };
            let phi = Cnf::parse_dimacs(&text).map_err(|e| Failure::Parse(e.to_string()))?;
            let (inst, stem) = match kind {
                HardKind::Filter => (
                    gen_filter_hard(&phi).map_err(|e| Failure::Parse(e.to_string()))?,
                    "filter",
                ),
                HardKind::Acyclic => (gen_acyclic_hard(&phi), "acyclic"),
                HardKind::Trans => (gen_trans_hard(&phi), "trans"),
                HardKind::Refl => (gen_refl_hard(&phi), "refl"),
            };
            fs::create_dir_all(out)
                .map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
            let kb_path = out.join(format!("{stem}.kb"));
            let q_path = out.join(format!("{stem}.q"));
            write(&kb_path, &serialize_kb(&inst.kb))?;
            write(&q_path, &format!("{}\n", print_query(&inst.query)))?;
            let sat = (phi.vars <= 20).then(|| brute_sat(&phi));
            match cli.format {
                Format::Text => {
                    println!("{}", kb_path.display());
                    println!("{}", q_path.display());
                    if let Some(sat) = sat {
                        println!("# satisfiable: {sat}");
                    }
                }
                Format::Json => println!(
                    "{}",
                    json!({ "kb": kb_path.display().to_string(), "query": q_path.display().to_string(), "satisfiable": sat })
                ),
            }
        }
        Command::GenBench { chain_depth, out } => {
            let spec = BenchSpec {
                scale: cli.scale as usize,
                seed: cli.seed,
                depth: *chain_depth,
            };
            let kb = gen_bench(&spec);
            fs::create_dir_all(out)
                .map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
            let kb_path = out.join(format!("bench_s{}.kb", spec.scale));
            write(&kb_path, &serialize_kb(&kb))?;
            let mut paths = vec![kb_path.display().to_string()];
            for q in bench_queries() {
                let p = out.join(format!("{}.q", q.name));
                write(&p, &format!("{}\n", print_query(&q)))?;
                paths.push(p.display().to_string());
            }
            match cli.format {
                Format::Text => {
                    for p in &paths {
                        println!("{p}");
                    }
                    println!("# abox atoms: {}", kb.abox_len());
                }
                Format::Json => {
                    println!("{}", json!({ "files": paths, "abox_atoms": kb.abox_len() }))
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
