//! Command-line driver: answer counting, decomposition search, cores,
//! frontier hypergraphs, degree reports, and corpus generation.
//!
//! Exit codes: 0 success; 1 parse or usage errors; 2 when no
//! decomposition exists within the budgets; 3 when a search or
//! enumeration cap was exceeded.  With `--json`, every subcommand prints
//! a single JSON object with sorted keys and counts rendered as decimal
//! strings.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sharpcq_core::counting::{self, CountReport, Mode, RunConfig};
use sharpcq_core::corpus;
use sharpcq_core::decomp::{
    build_view_set, nf_to_hd, sharp_decomposition_nf, sharp_hypertree_width_with,
    HypertreeDecomposition, DEFAULT_CORES_TO_TRY,
};
use sharpcq_core::hom;
use sharpcq_core::hybrid;
use sharpcq_core::hypergraph::Hypergraph;
use sharpcq_core::oracle;
use sharpcq_core::parse::{format_facts, parse_database, parse_query, parse_var_list};
use sharpcq_core::treeproj::{nf_tree_projection, SearchOptions};
use sharpcq_core::{Atom, Error, Query, Result, Var};

#[derive(Parser)]
#[command(
    name = "sharpcq",
    version,
    about = "Count distinct answers of conjunctive queries via #-hypertree decompositions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count distinct answers with the configured pipeline.
    Count(CountArgs),
    /// Count distinct answers by brute-force enumeration only.
    OracleCount(OracleCountArgs),
    /// Search for a decomposition and print it.
    Decompose(DecomposeArgs),
    /// Print the free-variable-preserving core of the query.
    Core(CoreArgs),
    /// Print the frontier hypergraph of the query's quantified part.
    Frontier(FrontierArgs),
    /// Search for a degree-bounded hybrid decomposition and count with it.
    Hybrid(HybridArgs),
    /// Report per-vertex degrees and the degree bound of a decomposition.
    Degree(DegreeArgs),
    /// Generate a seeded random corpus of query/database instances.
    GenCorpus(GenCorpusArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Query file in the rule grammar.
    #[arg(long)]
    query: PathBuf,
    /// Facts file or directory of headerless CSV files.
    #[arg(long)]
    db: PathBuf,
}

fn mode_value(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Pipeline selection: auto, structural, hybrid, or oracle.
    #[arg(long, value_parser = mode_value, default_value = "auto")]
    mode: Mode,
    /// Largest decomposition width tried.
    #[arg(long, default_value_t = 3)]
    kmax: usize,
    /// Largest degree bound tried by the hybrid search.
    #[arg(long, default_value_t = 16)]
    bmax: u64,
    /// How many cores of the colored query the searches consider.
    #[arg(long, default_value_t = DEFAULT_CORES_TO_TRY)]
    cores_to_try: usize,
    /// Cap on brute-force enumeration states.
    #[arg(long, default_value_t = oracle::DEFAULT_STATE_CAP)]
    state_cap: u64,
    /// Emit a JSON object instead of the bare count.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleCountArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Cap on brute-force enumeration states.
    #[arg(long, default_value_t = oracle::DEFAULT_STATE_CAP)]
    state_cap: u64,
    /// Emit a JSON object instead of the bare count.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Query file in the rule grammar.
    #[arg(long)]
    query: PathBuf,
    /// Exact width to try; when absent, widths 1..=kmax are searched.
    #[arg(long)]
    width: Option<usize>,
    /// Search for a #-decomposition (core + frontier coverage) instead of
    /// a plain generalized decomposition of the query hypergraph.
    #[arg(long)]
    sharp: bool,
    /// Largest width tried when --width is absent.
    #[arg(long, default_value_t = 3)]
    kmax: usize,
    /// How many cores of the colored query the #-search considers.
    #[arg(long, default_value_t = DEFAULT_CORES_TO_TRY)]
    cores_to_try: usize,
    /// Emit a JSON object instead of the indented tree.
    #[arg(long)]
    json: bool,
    /// Emit Graphviz DOT instead of the indented tree.
    #[arg(long)]
    dot: bool,
}

#[derive(Args)]
struct CoreArgs {
    /// Query file in the rule grammar.
    #[arg(long)]
    query: PathBuf,
    /// Emit a JSON object instead of the query text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FrontierArgs {
    /// Query file in the rule grammar.
    #[arg(long)]
    query: PathBuf,
    /// Emit a JSON object instead of the text listing.
    #[arg(long)]
    json: bool,
    /// Emit Graphviz DOT instead of the text listing.
    #[arg(long)]
    dot: bool,
}

#[derive(Args)]
struct HybridArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Decomposition width for the search.
    #[arg(long)]
    width: usize,
    /// Largest degree bound tried.
    #[arg(long, default_value_t = 16)]
    bmax: u64,
    /// Emit a JSON object instead of the text report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DegreeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Exact decomposition width; when absent, widths 1..=kmax are searched.
    #[arg(long)]
    width: Option<usize>,
    /// Largest width tried when --width is absent.
    #[arg(long, default_value_t = 3)]
    kmax: usize,
    /// Comma-separated variables to measure degrees over (default: the
    /// query's free variables).
    #[arg(long)]
    free: Option<String>,
    /// Emit a JSON object instead of the text report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Seed for the deterministic generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of instances to generate.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Directory to write `<name>.query` and `<name>.facts` files into;
    /// when absent, the whole corpus is printed as one JSON object.
    #[arg(long)]
    out: Option<PathBuf>,
    /// With --out, print a JSON summary instead of a sentence.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoDecompositionWithinBudget(_) => 2,
        Error::StateCapExceeded { .. } | Error::SearchBudgetExceeded(_) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Count(a) => cmd_count(a),
        Cmd::OracleCount(a) => cmd_oracle_count(a),
        Cmd::Decompose(a) => cmd_decompose(a),
        Cmd::Core(a) => cmd_core(a),
        Cmd::Frontier(a) => cmd_frontier(a),
        Cmd::Hybrid(a) => cmd_hybrid(a),
        Cmd::Degree(a) => cmd_degree(a),
        Cmd::GenCorpus(a) => cmd_gen_corpus(a),
    }
}

fn load_query(path: &Path) -> Result<Query> {
    parse_query(&fs::read_to_string(path)?)
}

fn var_names(vars: &BTreeSet<Var>) -> Vec<String> {
    vars.iter().map(|v| v.to_string()).collect()
}

fn var_set_text(vars: &BTreeSet<Var>) -> String {
    format!("{{{}}}", var_names(vars).join(","))
}

fn report_json(rep: &CountReport) -> Value {
    json!({
        "bound": rep.bound,
        "core_atoms": rep.core_atoms,
        "count": rep.count.to_string(),
        "elapsed_ms": rep.elapsed_ms as u64,
        "mode_used": rep.mode_used.to_string(),
        "width": rep.width,
    })
}

fn cmd_count(a: CountArgs) -> Result<()> {
    let q = load_query(&a.input.query)?;
    let db = parse_database(&a.input.db)?;
    let cfg = RunConfig {
        kmax: a.kmax,
        bmax: a.bmax,
        cores_to_try: a.cores_to_try,
        mode: a.mode,
        state_cap: a.state_cap,
        seed: 0,
        json: a.json,
    };
    let rep = counting::count(&q, &db, &cfg)?;
    if a.json {
        println!("{}", report_json(&rep));
    } else {
        println!("{}", rep.count);
    }
    Ok(())
}

fn cmd_oracle_count(a: OracleCountArgs) -> Result<()> {
    let q = load_query(&a.input.query)?;
    let db = parse_database(&a.input.db)?;
    let cfg = RunConfig {
        mode: Mode::Oracle,
        state_cap: a.state_cap,
        json: a.json,
        ..RunConfig::default()
    };
    let rep = counting::count(&q, &db, &cfg)?;
    if a.json {
        println!("{}", report_json(&rep));
    } else {
        println!("{}", rep.count);
    }
    Ok(())
}

/// The core of the colored query with the color markers stripped back
/// out: the smallest subquery with the same answers and free variables.
fn free_preserving_core(q: &Query) -> Result<(Query, Vec<Atom>)> {
    let prefix = hom::color_prefix(q);
    let colored = hom::color(q);
    let colored_core = hom::core(&colored)?;
    let kept: Vec<Atom> = colored_core
        .atoms
        .iter()
        .filter(|a| !a.rel.starts_with(&prefix))
        .cloned()
        .collect();
    let core_q = q.with_atoms(kept)?;
    let dropped: Vec<Atom> = q
        .atoms
        .iter()
        .filter(|a| !core_q.atoms.contains(a))
        .cloned()
        .collect();
    Ok((core_q, dropped))
}

fn no_decomposition(detail: String) -> Error {
    Error::NoDecompositionWithinBudget(detail)
}

/// A #-decomposition of `q`: at the exact width when given, otherwise the
/// smallest width up to `kmax`.
fn sharp_decomposition_cmd(
    q: &Query,
    width: Option<usize>,
    kmax: usize,
    cores_to_try: usize,
) -> Result<(HypertreeDecomposition, Option<Query>, usize)> {
    match width {
        Some(k) => {
            let vs = build_view_set(q, k)?;
            match sharp_decomposition_nf(q, &vs, cores_to_try)? {
                Some((nf, core)) => Ok((nf_to_hd(&nf, &vs)?, Some(core), k)),
                None => Err(no_decomposition(format!("no width-{k} #-decomposition"))),
            }
        }
        None => match sharp_hypertree_width_with(q, kmax, cores_to_try)? {
            Some(sd) => Ok((sd.hd, Some(sd.core), sd.k)),
            None => Err(no_decomposition(format!("no #-decomposition of width <= {kmax}"))),
        },
    }
}

/// A plain generalized decomposition of the query hypergraph (no cores,
/// no frontier edges): at the exact width when given, otherwise the
/// smallest width up to `kmax`.
fn plain_decomposition_cmd(
    q: &Query,
    width: Option<usize>,
    kmax: usize,
) -> Result<(HypertreeDecomposition, Option<Query>, usize)> {
    let h1 = Hypergraph::of_query(q);
    let try_width = |k: usize| -> Result<Option<HypertreeDecomposition>> {
        let vs = build_view_set(q, k)?;
        let nf = nf_tree_projection(&h1, &vs.hypergraph(), &SearchOptions::default(), |_| true)?;
        nf.map(|nf| nf_to_hd(&nf, &vs)).transpose()
    };
    match width {
        Some(k) => match try_width(k)? {
            Some(hd) => Ok((hd, None, k)),
            None => Err(no_decomposition(format!("no width-{k} generalized decomposition"))),
        },
        None => {
            for k in 1..=kmax.min(q.atoms.len()) {
                if let Some(hd) = try_width(k)? {
                    return Ok((hd, None, k));
                }
            }
            Err(no_decomposition(format!(
                "no generalized decomposition of width <= {kmax}"
            )))
        }
    }
}

fn decomposition_vertices_json(hd: &HypertreeDecomposition) -> Value {
    let vertices: Vec<Value> = (0..hd.vertex_count())
        .map(|p| {
            json!({
                "chi": var_names(&hd.chi[p]),
                "lambda": hd.lambda[p].iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "parent": hd.parent[p],
            })
        })
        .collect();
    Value::Array(vertices)
}

fn print_decomposition_tree(hd: &HypertreeDecomposition) {
    fn walk(hd: &HypertreeDecomposition, p: usize, depth: usize) {
        let lambda: Vec<String> = hd.lambda[p].iter().map(|a| a.to_string()).collect();
        println!(
            "{}v{} chi={} lambda={{{}}}",
            "  ".repeat(depth),
            p,
            var_set_text(&hd.chi[p]),
            lambda.join(", ")
        );
        for c in hd.children(p) {
            walk(hd, c, depth + 1);
        }
    }
    walk(hd, 0, 0);
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn decomposition_dot(hd: &HypertreeDecomposition) -> String {
    let mut out = String::from("digraph decomposition {\n  node [shape=box];\n");
    for p in 0..hd.vertex_count() {
        let lambda: Vec<String> = hd.lambda[p].iter().map(|a| a.to_string()).collect();
        let label = format!("chi: {}\\nlambda: {}", var_set_text(&hd.chi[p]), lambda.join(", "));
        out.push_str(&format!("  v{} [label=\"{}\"];\n", p, dot_escape(&label)));
    }
    for (c, parent) in hd.parent.iter().enumerate() {
        if let Some(p) = parent {
            out.push_str(&format!("  v{p} -> v{c};\n"));
        }
    }
    out.push_str("}\n");
    out
}

fn cmd_decompose(a: DecomposeArgs) -> Result<()> {
    let q = load_query(&a.query)?;
    let (hd, core, k) = if a.sharp {
        sharp_decomposition_cmd(&q, a.width, a.kmax, a.cores_to_try)?
    } else {
        plain_decomposition_cmd(&q, a.width, a.kmax)?
    };
    if a.json {
        let obj = json!({
            "core": core.as_ref().map(|c| c.to_string()),
            "k": k,
            "sharp": a.sharp,
            "vertices": decomposition_vertices_json(&hd),
            "width": hd.width(),
        });
        println!("{obj}");
    } else if a.dot {
        print!("{}", decomposition_dot(&hd));
    } else {
        println!("width {} (k = {})", hd.width(), k);
        if let Some(core) = &core {
            println!("core: {core}");
        }
        print_decomposition_tree(&hd);
    }
    Ok(())
}

fn cmd_core(a: CoreArgs) -> Result<()> {
    let q = load_query(&a.query)?;
    let (core_q, dropped) = free_preserving_core(&q)?;
    if a.json {
        let obj = json!({
            "atoms": core_q.atoms.len(),
            "core": core_q.to_string(),
            "dropped_atoms": dropped.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        });
        println!("{obj}");
    } else {
        println!("{core_q}");
    }
    Ok(())
}

fn cmd_frontier(a: FrontierArgs) -> Result<()> {
    let q = load_query(&a.query)?;
    let h = Hypergraph::of_query(&q);
    let free = q.free_set();
    let fh = h.frontier_hypergraph(&free);
    let mut edges: Vec<Vec<String>> = fh.edges().iter().map(var_names).collect();
    edges.sort();
    edges.dedup();
    let components: Vec<(BTreeSet<Var>, BTreeSet<Var>)> = h
        .w_components(&free)
        .into_iter()
        .map(|comp| {
            let witness = comp.iter().next().expect("components are non-empty").clone();
            let frontier = h.frontier(&witness, &free);
            (comp, frontier)
        })
        .collect();
    if a.json {
        let comps: Vec<Value> = components
            .iter()
            .map(|(comp, frontier)| {
                json!({"frontier": var_names(frontier), "vars": var_names(comp)})
            })
            .collect();
        let obj = json!({
            "components": comps,
            "edges": edges,
            "free": var_names(&free),
        });
        println!("{obj}");
    } else if a.dot {
        let mut out = String::from("graph frontier {\n");
        for v in fh.nodes() {
            out.push_str(&format!("  \"{}\" [shape=ellipse];\n", dot_escape(v.as_str())));
        }
        for (i, edge) in edges.iter().enumerate() {
            out.push_str(&format!("  e{i} [shape=point];\n"));
            for v in edge {
                out.push_str(&format!("  e{i} -- \"{}\";\n", dot_escape(v)));
            }
        }
        out.push_str("}\n");
        print!("{out}");
    } else {
        for (comp, frontier) in &components {
            println!("component {} frontier {}", var_set_text(comp), var_set_text(frontier));
        }
        for edge in &edges {
            println!("edge {{{}}}", edge.join(","));
        }
    }
    Ok(())
}

fn cmd_hybrid(a: HybridArgs) -> Result<()> {
    let q = load_query(&a.input.query)?;
    let db = parse_database(&a.input.db)?;
    let found = hybrid::search_sharp_b(&q, &db, a.width, a.bmax)?;
    let (hd, s_bar, b) = found.ok_or_else(|| {
        no_decomposition(format!(
            "no width-{} hybrid decomposition with degree bound <= {}",
            a.width, a.bmax
        ))
    })?;
    let (count, _core) = hybrid::count_hybrid_with_core(&q, &db, &hd, &s_bar)?;
    if a.json {
        let obj = json!({
            "b": b,
            "count": count.to_string(),
            "k": a.width,
            "selection": var_names(&s_bar),
            "vertices": decomposition_vertices_json(&hd),
            "width": hd.width(),
        });
        println!("{obj}");
    } else {
        println!("k = {}", a.width);
        println!("b = {b}");
        println!("selection = {}", var_set_text(&s_bar));
        println!("count = {count}");
        print_decomposition_tree(&hd);
    }
    Ok(())
}

fn cmd_degree(a: DegreeArgs) -> Result<()> {
    let q = load_query(&a.input.query)?;
    let db = parse_database(&a.input.db)?;
    let f: BTreeSet<Var> = match &a.free {
        Some(list) => parse_var_list(list)?.into_iter().collect(),
        None => q.free_set(),
    };
    let (hd, _, k) = sharp_decomposition_cmd(&q, a.width, a.kmax, DEFAULT_CORES_TO_TRY)?;
    let profile = hybrid::bound(&hd, &db, &f)?;
    if a.json {
        let obj = json!({
            "bound": profile.overall,
            "free": var_names(&profile.over),
            "k": k,
            "per_vertex": profile.per_vertex,
            "width": hd.width(),
        });
        println!("{obj}");
    } else {
        for (p, d) in profile.per_vertex.iter().enumerate() {
            println!("v{p}: degree {d}");
        }
        println!("bound = {} over {}", profile.overall, var_set_text(&profile.over));
    }
    Ok(())
}

fn cmd_gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let instances = corpus::generate(a.seed, a.n);
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut names = Vec::with_capacity(instances.len());
            for inst in &instances {
                fs::write(dir.join(format!("{}.query", inst.name)), format!("{}\n", inst.query))?;
                fs::write(dir.join(format!("{}.facts", inst.name)), format_facts(&inst.db))?;
                names.push(inst.name.clone());
            }
            if a.json {
                let obj = json!({
                    "dir": dir.display().to_string(),
                    "instances": names,
                    "n": a.n,
                    "seed": a.seed,
                });
                println!("{obj}");
            } else {
                println!("wrote {} instances to {}", instances.len(), dir.display());
            }
        }
        None => {
            let items: Vec<Value> = instances
                .iter()
                .map(|inst| {
                    json!({
                        "facts": format_facts(&inst.db),
                        "name": inst.name,
                        "query": inst.query.to_string(),
                    })
                })
                .collect();
            let obj = json!({"instances": items, "n": a.n, "seed": a.seed});
            println!("{obj}");
        }
    }
    Ok(())
}
