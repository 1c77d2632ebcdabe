//! The `wus` pipeline: corpus manifests, training per quantization level,
//! evaluation reports, bit-width sweeps and weight export over a fixed
//! work-directory layout.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod layout;
pub mod pipeline;

use args::{Cli, Command};
pub use config::RunConfig;
pub use error::CliError;

/// Runs one parsed invocation and returns the text to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = cli.common.resolve()?;
    match &cli.command {
        Command::Synth { synthetic_sources } => {
            let s = commands::cmd_synth(&cfg, *synthetic_sources)?;
            Ok(format!(
                "manifests written: train {} ({} speech), val {} ({} speech), test {} ({} speech)",
                s.train.examples, s.train.speech, s.val.examples, s.val.speech, s.test.examples, s.test.speech
            ))
        }
        Command::Train { level } | Command::Quantize { level } => {
            let out = commands::cmd_train(&cfg, *level)?;
            let tail = match &out.history {
                Some(h) => format!(", {} epochs, best validation loss {:.4}", h.epochs.len(), h.best_val_loss),
                None => String::new(),
            };
            Ok(format!("{}{tail}", out.checkpoint.display()))
        }
        Command::Eval { level, checkpoint, manifest } => {
            let r = commands::cmd_eval(&cfg, *level, checkpoint.as_deref(), manifest.as_deref())?;
            let o = &r.operating;
            Ok(format!(
                "{}: NTR {:.4} FTR {:.1}/h at threshold {:.4}{} (duty cycle {:.5})",
                r.system,
                o.ntr,
                o.ftr,
                o.threshold,
                if o.unreachable { ", target NTR unreachable" } else { "" },
                r.duty_cycle
            ))
        }
        Command::Sweep { widths } => {
            let bits = if widths.is_empty() { cfg.eval.sweep_bits.clone() } else { widths.clone() };
            let rows = commands::cmd_sweep(&cfg, &bits)?;
            Ok(rows
                .iter()
                .map(|r| format!("{}: NTR {:.4} FTR {:.1}/h", r.label, r.operating.ntr, r.operating.ftr))
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Command::Export { checkpoint } => {
            let fp = commands::cmd_export(&cfg, checkpoint.as_deref())?;
            Ok(format!("{} weights at {} bits: {} bytes ({} kB)", fp.weights, fp.bits, fp.payload_bytes, fp.kilobytes))
        }
        Command::Config => Ok(cfg.to_toml()),
    }
}
