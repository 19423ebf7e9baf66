use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homograde_core::batch::{apply_directory, apply_file};
use homograde_core::imgio::write_atomic;
use homograde_core::shading::{DEFAULT_LAMBDA, DEFAULT_SLOTS};
use homograde_core::{
    decompose, deserialize_profile, format_psnr, load_image, psnr, save_image, serialize_profile, AlsSettings,
    ApplyMode, Error, ExtractOptions, Variant,
};

const EXIT_IO: u8 = 1;
const EXIT_DEGENERATE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "homograde", version, about = "Extract and apply color transfer profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a transfer profile to a source/target exemplar pair.
    Extract {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Profile file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Apply a profile to one image or to every frame in a directory.
    Apply {
        #[arg(long)]
        profile: PathBuf,
        /// Image file, or a directory of .ppm/.png frames.
        #[arg(long)]
        input: PathBuf,
        /// Output image, or output directory when --input is a directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Shading)]
        mode: Mode,
    },
    /// Approximate a source → target transfer and report its PSNR.
    Approx {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Mapped)]
        variant: VariantArg,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Print the PSNR between two images in dB, or "inf" if identical.
    Psnr { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct FitArgs {
    /// Downsampling level k for homography estimation; each level halves both
    /// dimensions [default: auto, the smallest k with max dimension ≤ 256]
    #[arg(long, value_name = "K")]
    downsample: Option<u32>,
    /// Shading smoothness weight.
    #[arg(long, value_name = "V", default_value_t = DEFAULT_LAMBDA, value_parser = non_negative)]
    lambda: f64,
    /// Brightness slots for the shading curve.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_SLOTS, value_parser = positive_count)]
    slots: usize,
    /// ALS stopping threshold on the change between sweeps [default: 1e-6 × pixels]
    #[arg(long, value_name = "E", value_parser = positive)]
    epsilon: Option<f64>,
    /// Maximum ALS iterations.
    #[arg(long, value_name = "M", default_value_t = 50, value_parser = positive_count)]
    max_iters: usize,
}

impl FitArgs {
    fn options(&self) -> ExtractOptions {
        ExtractOptions {
            downsample: self.downsample,
            lambda: self.lambda,
            n_slots: self.slots,
            als: AlsSettings {
                epsilon: self.epsilon,
                max_iterations: self.max_iters,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Simple,
    Shading,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Simple,
    /// Exact per-pixel shading.
    Shading,
    /// Shading through the brightness curve, as a profile would apply it.
    Mapped,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number ≥ 0, got `{s}`")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number > 0, got `{s}`")),
    }
}

fn positive_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected an integer ≥ 1, got `{s}`")),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Io { .. } | Error::Format { .. } | Error::Parse { .. } | Error::UnsupportedVersion { .. } => EXIT_IO,
        _ => EXIT_DEGENERATE,
    }
}

fn extract(source: &Path, target: &Path, out: &Path, fit: &FitArgs) -> Result<(), Error> {
    let src = load_image(source)?;
    let tgt = load_image(target)?;
    let dec = decompose(&src, &tgt, &fit.options())?;
    let name = |p: &Path| {
        p.file_name()
            .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
    };
    let profile = dec
        .profile
        .clone()
        .with_provenance(format!("source={} target={}", name(source), name(target)));
    write_atomic(out, &serialize_profile(&profile))?;

    let self_psnr = psnr(&dec.approximation(&src, Variant::ShadingMapped), &tgt)?;
    println!("iterations={}", dec.als.iterations);
    println!("final_residual={:e}", dec.als.final_residual);
    println!("converged={}", dec.als.converged);
    println!("downsample={}", dec.downsample);
    println!("self_psnr={}", format_psnr(self_psnr));
    Ok(())
}

fn apply(profile: &Path, input: &Path, out: &Path, mode: Mode) -> Result<(), Error> {
    let bytes = fs::read(profile).map_err(|source| Error::Io {
        path: profile.to_path_buf(),
        source,
    })?;
    let prof = deserialize_profile(&bytes)?;
    let mode = match mode {
        Mode::Simple => ApplyMode::Simple,
        Mode::Shading => ApplyMode::Shading,
    };
    if input.is_dir() {
        let start = Instant::now();
        let reports = apply_directory(&prof, input, out, mode, None)?;
        for r in &reports {
            let name = r.input.file_name().unwrap_or_default().to_string_lossy();
            println!("frame={name} ms={:.2}", r.elapsed.as_secs_f64() * 1e3);
        }
        println!("frames={}", reports.len());
        println!("total_ms={:.2}", start.elapsed().as_secs_f64() * 1e3);
    } else {
        let r = apply_file(&prof, input, out, mode)?;
        println!("ms={:.2}", r.elapsed.as_secs_f64() * 1e3);
    }
    Ok(())
}

fn approx(source: &Path, target: &Path, out: &Path, variant: VariantArg, fit: &FitArgs) -> Result<(), Error> {
    let src = load_image(source)?;
    let tgt = load_image(target)?;
    let variant = match variant {
        VariantArg::Simple => Variant::Simple,
        VariantArg::Shading => Variant::ShadingExact,
        VariantArg::Mapped => Variant::ShadingMapped,
    };
    let result = decompose(&src, &tgt, &fit.options())?.approximation(&src, variant);
    save_image(&result, out)?;
    println!("psnr={}", format_psnr(psnr(&result, &tgt)?));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Extract {
            source,
            target,
            out,
            fit,
        } => extract(&source, &target, &out, &fit),
        Command::Apply {
            profile,
            input,
            out,
            mode,
        } => apply(&profile, &input, &out, mode),
        Command::Approx {
            source,
            target,
            out,
            variant,
            fit,
        } => approx(&source, &target, &out, variant, &fit),
        Command::Psnr { a, b } => {
            let db = psnr(&load_image(&a)?, &load_image(&b)?)?;
            println!("{}", format_psnr(db));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("homograde: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use homograde_core::profile::AUTO_DOWNSAMPLE_MAX_DIM;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_documents_auto_downsample() {
        let help = Cli::command()
            .find_subcommand_mut("extract")
            .unwrap()
            .render_long_help()
            .to_string();
        assert!(help.contains(&format!("max dimension ≤ {AUTO_DOWNSAMPLE_MAX_DIM}")));
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Degenerate("x".into())), EXIT_DEGENERATE);
        assert_eq!(exit_code(&Error::Shape("x".into())), EXIT_DEGENERATE);
        let io = Error::Io {
            path: "p".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(exit_code(&io), EXIT_IO);
    }
}
