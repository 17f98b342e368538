//! `crossfoot`: batch spreadsheet audit tool.
//!
//! Exit codes: 0 clean, 1 findings at or above `--fail-on`, 2 usage, parse,
//! or I/O errors. Reports go to stdout; load warnings and errors to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crossfoot_core::audit::{run_audit, AuditConfig, AuditReport, Severity};
use crossfoot_core::canonical::{load_canonical, save_canonical};
use crossfoot_core::checks::{apply_patches, generate_all_checks};
use crossfoot_core::engine::{recalc_diff, recalculate};
use crossfoot_core::formula::print_formula;
use crossfoot_core::manifest::{manifest_path_for, validate_manifest, Manifest};
use crossfoot_core::value::fmt_number;
use crossfoot_core::workbook::Workbook;
use crossfoot_core::xlsx::read_xlsx;
use crossfoot_core::{parse_address, CellAddress, CellValue, FormulaNode};

#[derive(Parser)]
#[command(name = "crossfoot", version, about = "Audit spreadsheets for missing and broken self-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FailOn {
    Error,
    Warning,
}

impl FailOn {
    fn severity(self) -> Severity {
        match self {
            FailOn::Error => Severity::Error,
            FailOn::Warning => Severity::Warning,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Audit one or more workbooks against the rule catalog
    Audit {
        /// Workbook files (.json canonical or .xlsx)
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Audit configuration (JSON)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Severity that makes the exit status 1
        #[arg(long, value_enum, default_value = "error")]
        fail_on: FailOn,
    },
    /// Print a cell's formula as an AST
    Parse {
        file: PathBuf,
        /// Cell reference, e.g. Data!B67
        #[arg(long)]
        cell: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Recalculate and print a cell's value
    Eval {
        file: PathBuf,
        #[arg(long)]
        cell: String,
    },
    /// Compare stored cell values against a fresh recalculation
    RecalcDiff {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Generate missing cross-foot check formulas as patches
    GenChecks {
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Apply the patches and write the patched workbook to --out
        #[arg(long, requires = "out")]
        apply: bool,
        /// Output path for the patched canonical workbook
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Validate the governance manifest for a workbook
    ManifestCheck {
        file: PathBuf,
        /// Manifest path (defaults to <workbook>.manifest.json)
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, value_enum, default_value = "error")]
        fail_on: FailOn,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_workbook(path: &Path) -> Result<Workbook> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let wb = match path.extension().and_then(|e| e.to_str()) {
        Some("xlsx") => read_xlsx(&bytes).with_context(|| format!("loading {}", path.display()))?,
        Some("json") => load_canonical(&bytes).with_context(|| format!("loading {}", path.display()))?,
        _ => bail!("{}: unsupported file type (expected .json or .xlsx)", path.display()),
    };
    for warning in wb.warnings() {
        eprintln!("{}: warning: {warning}", path.display());
    }
    Ok(wb)
}

fn load_config(path: &Option<PathBuf>) -> Result<AuditConfig> {
    match path {
        None => Ok(AuditConfig::default()),
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            AuditConfig::from_json(&bytes).with_context(|| format!("loading {}", p.display()))
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Audit { files, config, format, fail_on } => {
            let config = load_config(&config)?;
            audit_files(&files, &config, format, fail_on)
        }
        Command::Parse { file, cell, format } => {
            let wb = load_workbook(&file)?;
            let addr = resolve_cell(&wb, &cell)?;
            match wb.cell(&addr).and_then(|c| c.formula.clone()) {
                Some(ast) => {
                    match format {
                        Format::Text => print!("{}", ast_text(&ast)),
                        Format::Json => println!("{}", serde_json::to_string_pretty(&ast)?),
                    }
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    let raw = wb.cell(&addr).and_then(|c| c.formula_text.clone());
                    match raw {
                        Some(text) => Err(anyhow!("{}: formula did not parse: {text}", addr)),
                        None => {
                            println!("{}: no formula (value: {})", addr, show_value(&wb.stored_value(&addr)));
                            Ok(ExitCode::SUCCESS)
                        }
                    }
                }
            }
        }
        Command::Eval { file, cell } => {
            let wb = load_workbook(&file)?;
            let addr = resolve_cell(&wb, &cell)?;
            let vm = recalculate(&wb);
            println!("{}", show_value(vm.value(&addr)));
            Ok(ExitCode::SUCCESS)
        }
        Command::RecalcDiff { file, format } => {
            let wb = load_workbook(&file)?;
            let diff = recalc_diff(&wb);
            match format {
                Format::Json => {
                    let json = serde_json::json!({
                        "mismatches": diff.mismatches.iter().map(|m| serde_json::json!({
                            "cell": m.address.to_a1(),
                            "stored": m.stored.to_json(),
                            "computed": m.computed.to_json(),
                            "delta": m.delta,
                        })).collect::<Vec<_>>(),
                        "unverifiable": diff.unverifiable.iter().map(|a| a.to_a1()).collect::<Vec<_>>(),
                    });
                    println!("{}", serde_json::to_string_pretty(&json)?);
                }
                Format::Text => {
                    if diff.is_clean() {
                        println!("stored values match recalculation");
                    }
                    for m in &diff.mismatches {
                        let delta = m.delta.map(|d| format!(" (delta {})", fmt_number(d))).unwrap_or_default();
                        println!(
                            "{}: stored {} recalculates to {}{delta}",
                            m.address,
                            show_value(&m.stored),
                            show_value(&m.computed)
                        );
                    }
                    for a in &diff.unverifiable {
                        println!("{a}: unverifiable (unsupported or unparsed formula)");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenChecks { file, config, apply, out } => {
            let wb = load_workbook(&file)?;
            let config = load_config(&config)?;
            let vm = recalculate(&wb);
            let (patches, errors) = generate_all_checks(&wb, &vm, &config);
            for (range, err) in &errors {
                eprintln!("{}: cannot generate check for {range}: {err}", file.display());
            }
            println!("{}", serde_json::to_string_pretty(&patches)?);
            if apply {
                let out = out.expect("clap enforces --out with --apply");
                let patched = apply_patches(&wb, &patches)?;
                fs::write(&out, save_canonical(&patched))
                    .with_context(|| format!("writing {}", out.display()))?;
                eprintln!("wrote patched workbook to {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ManifestCheck { file, manifest, format, fail_on } => {
            let wb = load_workbook(&file)?;
            let path = manifest.unwrap_or_else(|| manifest_path_for(&file));
            let bytes = fs::read(&path).with_context(|| format!("reading manifest {}", path.display()))?;
            let doc = Manifest::from_json(&bytes).with_context(|| format!("loading {}", path.display()))?;
            let findings = validate_manifest(&doc, Some(&wb));
            match format {
                Format::Json => {
                    let counts = count(&findings);
                    let json = serde_json::json!({ "findings": findings, "counts": counts });
                    println!("{}", serde_json::to_string_pretty(&json)?);
                }
                Format::Text => {
                    if findings.is_empty() {
                        println!("manifest answers all ten questions");
                    }
                    for f in &findings {
                        println!("{:7} {:3} {}", f.severity.as_str(), f.rule, f.message);
                    }
                }
            }
            let worst = findings.iter().filter(|f| f.severity >= fail_on.severity()).count();
            Ok(if worst > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
    }
}

fn count(findings: &[crossfoot_core::Finding]) -> serde_json::Value {
    let mut error = 0;
    let mut warning = 0;
    let mut info = 0;
    for f in findings {
        match f.severity {
            Severity::Error => error += 1,
            Severity::Warning => warning += 1,
            Severity::Info => info += 1,
        }
    }
    serde_json::json!({"error": error, "warning": warning, "info": info})
}

/// Audit files concurrently; print buffered reports in argument order.
fn audit_files(files: &[PathBuf], config: &AuditConfig, format: Format, fail_on: FailOn) -> Result<ExitCode> {
    struct Outcome {
        report: Result<(AuditReport, String)>,
    }
    let outcomes: Vec<Outcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|path| {
                scope.spawn(move || {
                    let report = load_workbook(path).map(|wb| {
                        let report = run_audit(&wb, config);
                        let rendered = match format {
                            Format::Text => {
                                if files.len() > 1 {
                                    format!("== {} ==\n{}", path.display(), report.to_text())
                                } else {
                                    report.to_text()
                                }
                            }
                            Format::Json => report.to_json(),
                        };
                        (report, rendered)
                    });
                    Outcome { report }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("audit thread")).collect()
    });

    let mut failed_io = false;
    let mut tripped = false;
    for outcome in outcomes {
        match outcome.report {
            Ok((report, rendered)) => {
                print!("{rendered}");
                if report.count_at_or_above(fail_on.severity()) > 0 {
                    tripped = true;
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                failed_io = true;
            }
        }
    }
    Ok(if failed_io {
        ExitCode::from(2)
    } else if tripped {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn resolve_cell(wb: &Workbook, text: &str) -> Result<CellAddress> {
    let addr = parse_address(text, wb.front_sheet())
        .map_err(|e| anyhow!("bad cell reference `{text}`: {e}"))?;
    if wb.sheet(&addr.sheet).is_none() {
        bail!("no sheet named `{}` in this workbook", addr.sheet);
    }
    Ok(addr)
}

fn show_value(v: &CellValue) -> String {
    match v {
        CellValue::Blank => "(blank)".to_string(),
        CellValue::Text(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

/// Indented AST rendering for `parse`.
fn ast_text(node: &FormulaNode) -> String {
    fn walk(node: &FormulaNode, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match node {
            FormulaNode::Number(n) => out.push_str(&format!("{pad}Number {}\n", fmt_number(*n))),
            FormulaNode::Text(s) => out.push_str(&format!("{pad}Text \"{s}\"\n")),
            FormulaNode::Bool(b) => out.push_str(&format!("{pad}Bool {b}\n")),
            FormulaNode::Ref(r) => out.push_str(&format!("{pad}Ref {}\n", r.to_a1())),
            FormulaNode::Range(_) => {
                let printed = print_formula(node);
                out.push_str(&format!("{pad}Range {}\n", printed.trim_start_matches('=')));
            }
            FormulaNode::Unary(op, inner) => {
                out.push_str(&format!("{pad}Unary {op:?}\n"));
                walk(inner, depth + 1, out);
            }
            FormulaNode::Binary(op, l, r) => {
                out.push_str(&format!("{pad}Binary {op:?}\n"));
                walk(l, depth + 1, out);
                walk(r, depth + 1, out);
            }
            FormulaNode::Call(name, args) => {
                out.push_str(&format!("{pad}Call {name}\n"));
                for arg in args {
                    walk(arg, depth + 1, out);
                }
            }
            FormulaNode::Paren(inner) => {
                out.push_str(&format!("{pad}Paren\n"));
                walk(inner, depth + 1, out);
            }
        }
    }
    let mut out = String::new();
    walk(node, 0, &mut out);
    out
}
