use std::path::{Path, PathBuf};
use std::process::ExitCode;

use celtld::bands::CODED_BANDS;
use celtld::tables::Tables;
use celtld_harness::channel::ChannelModel;
use celtld_harness::container::Stream;
use celtld_harness::error::{format_err, HarnessError, Result};
use celtld_harness::{corpus, metrics, pipeline, train, wav};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "celtld", version, about = "Low-delay transform audio codec tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a 16-bit mono 44.1 kHz WAV file into a stream.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[arg(short, long, default_value_t = 47)]
        bytes_per_frame: usize,
        /// Protect the first 64 bits of each packet with an 8-bit SECDED code.
        #[arg(long)]
        secded: bool,
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Decode a stream into a WAV file, concealing lost packets.
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Pass a stream through a lossy, noisy channel.
    Simulate {
        input: PathBuf,
        output: PathBuf,
        /// Packet loss probability.
        #[arg(long, default_value_t = 0.0)]
        loss: f64,
        /// Bit error rate.
        #[arg(long, default_value_t = 0.0)]
        ber: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Require a SECDED-protected stream.
        #[arg(long)]
        secded: bool,
    },
    /// Compare a reference WAV with a decoded one.
    Metrics {
        reference: PathBuf,
        degraded: PathBuf,
        /// Samples by which the degraded file lags the reference.
        #[arg(long, default_value_t = metrics::DEFAULT_DELAY)]
        delay: usize,
    },
    /// Train codec tables from a directory of WAV files.
    Train {
        corpus: PathBuf,
        #[arg(short, long, default_value = "tables.tbl")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Report coarse-energy entropy over a grid of predictor coefficients.
    SweepEntropy {
        corpus: PathBuf,
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Describe a stream file.
    Info { input: PathBuf },
    /// Write the synthetic desk corpus as WAV files.
    Corpus { dir: PathBuf },
}

fn load_tables(path: Option<&Path>) -> Result<Tables> {
    match path {
        Some(p) => Ok(Tables::parse(&std::fs::read(p)?)?),
        None => Ok(Tables::shipped()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode { input, output, bytes_per_frame, secded, tables } => {
            let tables = load_tables(tables.as_deref())?;
            let pcm = wav::read(&input)?;
            let stream = pipeline::encode(&pcm, bytes_per_frame, secded, &tables)?;
            stream.write(&output)?;
            println!("{} samples -> {} packets, {} payload bytes", pcm.len(), stream.packets.len(), stream.payload_bytes());
        }
        Command::Decode { input, output, tables } => {
            let tables = load_tables(tables.as_deref())?;
            let stream = Stream::read(&input)?;
            let pcm = pipeline::decode(&stream, &tables)?;
            wav::write(&output, &pcm)?;
            println!("{} packets ({} lost) -> {} samples", stream.packets.len(), stream.lost(), pcm.len());
        }
        Command::Simulate { input, output, loss, ber, seed, secded } => {
            let mut stream = Stream::read(&input)?;
            if secded && !stream.header.secded {
                return Err(format_err("stream was not encoded with --secded"));
            }
            let channel = ChannelModel::new(loss, ber, seed).map_err(HarnessError::Input)?;
            let s = channel.apply(&mut stream);
            stream.write(&output)?;
            println!(
                "packets {}  dropped {}  bits flipped {}  corrected {}  detected {}",
                s.packets, s.dropped, s.flipped_bits, s.corrected, s.detected
            );
        }
        Command::Metrics { reference, degraded, delay } => {
            let r = metrics::compare(&wav::read(&reference)?, &wav::read(&degraded)?, delay)?;
            println!("segmental SNR   {:.2} dB over {} segments", r.seg_snr_db, r.segments);
            println!("mean LSD        {:.3} dB", r.mean_lsd_db());
            println!("mean tracking   {:.3} dB", r.mean_tracking_db());
            println!("band  LSD(dB)  tracking(dB)");
            for b in 0..CODED_BANDS {
                println!("{b:>4}  {:>7.3}  {:>12.3}", r.lsd_db[b], r.tracking_db[b]);
            }
        }
        Command::Train { corpus: dir, out, seed } => {
            let clips = corpus::read_corpus(&dir)?;
            let tables = train::train(&clips, seed)?;
            std::fs::write(&out, tables.to_bytes())?;
            println!("trained on {} clips, table version {:08x} -> {}", clips.len(), tables.version_id(), out.display());
        }
        Command::SweepEntropy { corpus: dir, tables } => {
            let tables = load_tables(tables.as_deref())?;
            let energies = train::clip_energies(&corpus::read_corpus(&dir)?);
            println!("alpha  best beta  bits/frame");
            for row in train::sweep(&energies, &tables.mean_db) {
                println!("{:>5.2}  {:>9.1}  {:>10.2}", row.alpha, row.beta, row.bits);
            }
            let shipped = train::shipped_point(&energies, &tables.mean_db);
            println!("shipped alpha {:.1} beta {:.1}: {:.2} bits/frame", shipped.alpha, shipped.beta, shipped.bits);
        }
        Command::Info { input } => {
            let s = Stream::read(&input)?;
            let h = &s.header;
            println!("bytes per frame {}", h.bytes_per_frame);
            println!("bitrate         {:.1} kbit/s", h.bitrate() / 1000.0);
            println!("samples         {} ({:.3} s)", h.num_samples, h.num_samples as f64 / 44_100.0);
            println!("packets         {} ({} lost)", s.packets.len(), s.lost());
            println!("payload bytes   {}", s.payload_bytes());
            println!("secded          {}", if h.secded { "yes" } else { "no" });
            let shipped = Tables::shipped().version_id();
            println!("table version   {:08x}{}", h.table_version, if h.table_version == shipped { " (shipped)" } else { "" });
        }
        Command::Corpus { dir } => {
            for name in corpus::write_corpus(&dir)? {
                println!("{}", dir.join(name).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(3),
    }
}
