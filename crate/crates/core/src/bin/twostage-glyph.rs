use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use twostage_glyph::corners::{glyph_corners, map_to_gray};
use twostage_glyph::ensemble::Decision;
use twostage_glyph::pipeline::{self, synth, ModelBundle, PipelineConfig, Prediction, Stage};
use twostage_glyph::preprocess::normalize;
use twostage_glyph::{pgm, Error, Result};

#[derive(Parser)]
#[command(
    name = "twostage-glyph",
    version,
    about = "Two-stage offline handwritten character recognizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model bundle from a directory-per-class PGM tree.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 100)]
        side: usize,
    },
    /// Classify one image.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Print every intermediate of the decision.
        #[arg(long)]
        explain: bool,
        /// Write both feature vectors as CSV rows.
        #[arg(long)]
        features_csv: Option<PathBuf>,
        /// Write the cornerness map as an 8-bit PGM.
        #[arg(long)]
        cornerness_pgm: Option<PathBuf>,
        /// Write detected corner coordinates as CSV.
        #[arg(long)]
        corners_csv: Option<PathBuf>,
    },
    /// Stratified k-fold cross validation.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        #[arg(long)]
        epochs: Option<usize>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic glyph corpus.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            data,
            out,
            seed,
            epochs,
            side,
        } => {
            let cfg = config(seed, side, epochs)?;
            let ds = pipeline::load_dataset(&data)?;
            report_warnings(&ds.warnings);
            let started = Instant::now();
            let (bundle, summary) = pipeline::train_bundle(&ds, &cfg)?;
            bundle.save(&out).map_err(|e| e.in_file(&out))?;
            println!(
                "trained on {} samples ({} validation, {} skipped) in {:.1}s",
                summary.train_size,
                summary.validation_size,
                summary.skipped,
                started.elapsed().as_secs_f64()
            );
            println!(
                "validation accuracy: shadow {:.4}, chain {:.4}",
                summary.validation_accuracies[0], summary.validation_accuracies[1]
            );
            println!(
                "fusion weights {:.5} {:.5}, theta {:.2}",
                bundle.voting.weights[0], bundle.voting.weights[1], bundle.voting.theta
            );
            println!("wrote {}", out.display());
        }
        Command::Predict {
            bundle,
            image,
            explain,
            features_csv,
            cornerness_pgm,
            corners_csv,
        } => {
            let bundle = ModelBundle::load(&bundle)?;
            let img = pgm::read(&image)?;
            let prepared = bundle.prepare(&img).map_err(|e| e.in_file(&image))?;
            let prediction = bundle.predict_prepared(&prepared)?;
            println!("{}", prediction.label);
            if explain {
                print!("{}", explain_text(&bundle, &prediction));
            }
            if let Some(path) = features_csv {
                let mut csv = String::new();
                for (name, values) in [
                    ("shadow", &prediction.trace.shadow_features),
                    ("chain", &prediction.trace.chain_features),
                ] {
                    csv.push_str(name);
                    for v in values {
                        write!(csv, ",{}", sig9(*v)).unwrap();
                    }
                    csv.push('\n');
                }
                write_file(&path, csv.as_bytes())?;
            }
            if cornerness_pgm.is_some() || corners_csv.is_some() {
                let glyph = normalize(&img, bundle.side).map_err(|e| e.in_file(&image))?;
                let gc = glyph_corners(&glyph, &bundle.corner)?;
                if let Some(path) = cornerness_pgm {
                    pgm::write_binary(&map_to_gray(&gc.map), &path)
                        .map_err(|e| e.in_file(&path))?;
                }
                if let Some(path) = corners_csv {
                    let mut csv = String::from("x,y\n");
                    for (x, y) in &gc.corners {
                        writeln!(csv, "{x},{y}").unwrap();
                    }
                    write_file(&path, csv.as_bytes())?;
                }
            }
        }
        Command::Evaluate {
            data,
            seed,
            folds,
            epochs,
            json,
        } => {
            let mut cfg = config(seed, 100, epochs)?;
            if folds < 2 {
                return Err(Error::Format(format!(
                    "--folds must be at least 2, got {folds}"
                )));
            }
            cfg.folds = folds;
            let ds = pipeline::load_dataset(&data)?;
            report_warnings(&ds.warnings);
            let report = pipeline::evaluate(&ds, &cfg)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{report}");
            }
        }
        Command::Synth {
            classes,
            per_class,
            noise,
            seed,
            out,
        } => {
            if classes == 0 || per_class == 0 {
                return Err(Error::Format(
                    "--classes and --per-class must be positive".into(),
                ));
            }
            if !(0.0..=1.0).contains(&noise) {
                return Err(Error::Format(format!(
                    "--noise must lie in [0, 1], got {noise}"
                )));
            }
            let ds = synth::generate_synthetic_corpus(&out, classes, per_class, noise, seed)?;
            println!(
                "wrote {} images in {} classes to {}",
                ds.len(),
                ds.labels.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn config(seed: u64, side: usize, epochs: Option<usize>) -> Result<PipelineConfig> {
    if side == 0 || !side.is_multiple_of(5) {
        return Err(Error::BadSide(side));
    }
    let mut cfg = PipelineConfig {
        seed,
        side,
        ..PipelineConfig::default()
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    Ok(cfg)
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if !warnings.is_empty() {
        eprintln!("warning: {} file(s) skipped", warnings.len());
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

/// Nine significant digits, trailing zeros trimmed.
fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..9).contains(&exp) {
        return format!("{v:.8e}");
    }
    let s = format!("{:.*}", (8 - exp).max(0) as usize, v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn scores_line(out: &mut String, name: &str, labels: &[String], scores: &[f64]) {
    write!(out, "{name:<10}").unwrap();
    for (l, s) in labels.iter().zip(scores) {
        write!(out, " {l}={s:.4}").unwrap();
    }
    out.push('\n');
}

fn explain_text(bundle: &ModelBundle, p: &Prediction) -> String {
    let t = &p.trace;
    let mut out = String::new();
    let fmt_vec = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "shadow features: {}", fmt_vec(&t.shadow_features)).unwrap();
    let nonzero: Vec<String> = t
        .chain_features
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| format!("{i}:{v:.4}"))
        .collect();
    writeln!(out, "chain features (nonzero): {}", nonzero.join(" ")).unwrap();
    scores_line(&mut out, "shadow", &bundle.labels, &t.shadow_scores);
    scores_line(&mut out, "chain", &bundle.labels, &t.chain_scores);
    scores_line(&mut out, "combined", &bundle.labels, &t.combined);
    writeln!(
        out,
        "fusion weights {:.5} {:.5}, theta {:.2}, floor {:.2}",
        bundle.voting.weights[0],
        bundle.voting.weights[1],
        bundle.voting.theta,
        bundle.voting.rejection_floor
    )
    .unwrap();
    if let Some(rd) = t.relative_difference {
        writeln!(out, "relative difference {rd:.4}").unwrap();
    }
    let describe = |c: &[(usize, f64)]| {
        c.iter()
            .map(|(i, s)| format!("{}({s:.4})", bundle.labels[*i]))
            .collect::<Vec<_>>()
            .join(" ")
    };
    match &t.decision {
        Decision::Certain(i) => writeln!(out, "decision: certain {}", bundle.labels[*i]).unwrap(),
        Decision::Confused(c) => writeln!(out, "decision: confused among {}", describe(c)).unwrap(),
        Decision::Rejected(c) => {
            writeln!(out, "decision: rejected, candidates {}", describe(c)).unwrap()
        }
    }
    let cs: Vec<String> = t
        .corner_string
        .counts()
        .iter()
        .map(u32::to_string)
        .collect();
    writeln!(out, "corner string: {}", cs.join(" ")).unwrap();
    if let Some(d) = &t.distances {
        for (label, dist) in d {
            writeln!(out, "  edit distance to {label}: {dist}").unwrap();
        }
    }
    let stage = match t.stage {
        Stage::Mlp => "neural ensemble",
        Stage::EditDistance => "corner-string edit distance",
    };
    writeln!(out, "answered by: {stage}").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(0.5), "0.5");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(0.0123456789012), "0.0123456789");
        assert_eq!(sig9(1.0), "1");
    }
}
