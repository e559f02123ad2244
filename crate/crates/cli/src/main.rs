use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use quixo_cli::service::{self, AppState};
use quixo_cli::{describe, eval_view, grouped, Position};
use quixo_core::analysis;
use quixo_core::play::{self, GameStatus, Policy};
use quixo_core::solver::compute_steps;
use quixo_core::{solve, Database, Outcome, QState, SolveConfig};
use rand::SeedableRng;

/// Strong solver and evaluation tools for Quixo on 3×3, 4×4 and 5×5 boards.
///
/// States are written row by row with `/` between rows, `.` for an empty
/// cell, and the player to move at the end, e.g. `..OX/..../XOO./.... X`.
#[derive(Parser)]
#[command(name = "quixo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every position of one board size and write a database.
    Solve {
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Store step counts (the default).
        #[arg(long, overrides_with = "no_steps")]
        steps: bool,
        /// Store outcomes only.
        #[arg(long)]
        no_steps: bool,
        /// Skip classes already listed in the manifest.
        #[arg(long)]
        resume: bool,
        /// Only solve classes with at least this many tiles.
        #[arg(long, default_value_t = 0)]
        min_tiles: u32,
    },
    /// Add step counts to a database solved without them.
    AddSteps {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Win/Loss/Draw totals, per-class table and step histogram.
    Stats {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        #[arg(long)]
        per_class: bool,
        #[arg(long)]
        histogram: bool,
        /// Write the per-class table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Value of a position and of each legal move.
    Eval {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        #[arg(long)]
        state: String,
        #[arg(long)]
        json: bool,
    },
    /// Pick a move under a policy.
    Bestmove {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        #[arg(long)]
        state: String,
        /// fastest_win, stubborn_loss, hold_draw or random_win.
        #[arg(long, default_value = "fastest_win")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Count positions reachable from the empty board.
    Reach {
        #[arg(long)]
        size: usize,
        /// Save the reachability bitmap here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal play for both sides from the empty board, as JSON.
    Selfplay {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        /// Start from this position instead of the empty board.
        #[arg(long)]
        state: Option<String>,
        #[arg(long, default_value_t = 200)]
        max_moves: usize,
    },
    /// Check every stored value against its children.
    Verify {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        /// Also compare with the brute-force reference solver.
        #[arg(long)]
        oracle: bool,
        /// Smallest tile count the reference solver covers (default: all
        /// states on 3×3, 14 tiles on 4×4).
        #[arg(long)]
        min_tiles: Option<usize>,
    },
    /// Positions with the fewest tiles that are not a draw.
    Extremal {
        #[arg(long, env = "QUIXO_DB")]
        db: PathBuf,
        /// Only positions reachable from the empty board.
        #[arg(long)]
        reachable: bool,
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// Serve the JSON API and the web interface.
    Serve {
        /// Database directories, one per board size.
        #[arg(long, env = "QUIXO_DB", value_delimiter = ',')]
        db: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory with the built web interface.
        #[arg(long, env = "QUIXO_STATIC")]
        static_dir: Option<PathBuf>,
        /// Classes kept in memory for 5×5 databases.
        #[arg(long, default_value_t = 64)]
        cache_classes: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Solve {
            size,
            out,
            threads,
            steps: _,
            no_steps,
            resume,
            min_tiles,
        } => {
            let mut config = SolveConfig::new(size, &out);
            config.threads = threads;
            config.with_steps = !no_steps;
            config.resume = resume;
            config.min_tiles = min_tiles;
            let summary = solve(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if min_tiles == 0 {
                let db = Database::open(&out, 4)?;
                let v = db.lookup(QState::EMPTY)?;
                println!("initial state: {}", describe(v.outcome, v.step));
            }
        }
        Command::AddSteps { db, threads } => {
            let summary = compute_steps(&db, threads)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Stats {
            db,
            per_class,
            histogram,
            csv,
        } => {
            let db = Database::open(&db, 8)?;
            let tally = analysis::tally(&db)?;
            let t = tally.totals;
            println!("size {}", tally.n);
            println!("win  {:>20}", grouped(t.win));
            println!("loss {:>20}", grouped(t.loss));
            println!("draw {:>20}", grouped(t.draw));
            println!("all  {:>20}", grouped(t.total()));
            if per_class {
                print!("{}", tally.to_csv());
            }
            if let Some(path) = csv {
                std::fs::write(&path, tally.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if histogram {
                println!("{:>4} {:>14} {:>14}", "step", "win", "loss");
                for r in analysis::steps_histogram(&db)? {
                    println!(
                        "{:>4} {:>14} {:>14}",
                        r.step,
                        grouped(r.win),
                        grouped(r.loss)
                    );
                }
            }
        }
        Command::Eval { db, state, json } => {
            let db = Database::open(&db, 8)?;
            let pos = Position::parse(db.board(), &state)?;
            let (_, view) = eval_view(&db, pos)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&view)?);
            } else {
                println!("{}", describe(view.outcome, view.step));
                // Per move: the value for the player to move, counted from here.
                for m in &view.moves {
                    println!(
                        "  {:>2} {:<10} {:<12} -> {}",
                        m.mv.cell,
                        m.mv.insert_end.name(),
                        describe(m.outcome, m.step.map(|s| s + 1)),
                        m.board_after
                    );
                }
            }
        }
        Command::Bestmove {
            db,
            state,
            policy,
            seed,
        } => {
            let Some(policy) = Policy::parse(&policy) else {
                bail!("unknown policy {policy:?}");
            };
            let db = Database::open(&db, 8)?;
            let board = db.board();
            let pos = Position::parse(board, &state)?;
            let eval = play::evaluate(&db, pos.state)?;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mv = play::choose(&eval, policy, &mut rng)?;
            let chosen = eval.moves.iter().find(|m| m.mv == mv).expect("legal");
            println!(
                "{} {} -> {} ({})",
                mv.cell,
                mv.insert_end.name(),
                pos.after(chosen.child).render(board),
                describe(chosen.outcome, chosen.step.map(|s| s + 1))
            );
        }
        Command::Reach { size, out } => {
            let r = analysis::reachable(size)?;
            let total = 3f64.powi((size * size) as i32);
            println!(
                "{} reachable states ({:.1}% of 3^{})",
                grouped(r.count),
                100.0 * r.count as f64 / total,
                size * size
            );
            if let Some(path) = out {
                r.save(&path)?;
            }
        }
        Command::Selfplay {
            db,
            state,
            max_moves,
        } => {
            let db = Database::open(&db, 64)?;
            let start = match state {
                Some(text) => {
                    let pos = Position::parse(db.board(), &text)?;
                    if pos.active != quixo_core::Symbol::X {
                        bail!("self-play starts with X to move");
                    }
                    pos.state
                }
                None => QState::EMPTY,
            };
            let game = play::selfplay(&db, start, max_moves)?;
            println!("{}", serde_json::to_string_pretty(&game.moves)?);
            let status = match game.status {
                GameStatus::XWins => "X wins",
                GameStatus::OWins => "O wins",
                GameStatus::DrawCycle => "draw-cycle",
            };
            eprintln!("{status} after {} moves", game.moves.len());
        }
        Command::Verify {
            db,
            oracle,
            min_tiles,
        } => {
            let db = Database::open(&db, 16)?;
            let report = analysis::verify(&db)?;
            report_result("consistency", &report)?;
            if oracle {
                let min_tiles = match (min_tiles, db.n()) {
                    (Some(t), _) => t,
                    (None, 3) => 0,
                    (None, 4) => 14,
                    (None, n) => bail!("pick --min-tiles for size {n}; the reference solver cannot cover the whole board"),
                };
                let report = analysis::audit_with_oracle(&db, min_tiles)?;
                report_result("reference", &report)?;
            }
        }
        Command::Extremal {
            db,
            reachable,
            limit,
        } => {
            let db = Database::open(&db, 64)?;
            let reach = if reachable {
                Some(analysis::reachable(db.n())?)
            } else {
                None
            };
            let found = analysis::find_extremal(&db, limit, |s, v| {
                v.outcome != Outcome::Draw && reach.as_ref().is_none_or(|r| r.contains(s))
            })?;
            match found.tiles {
                None => println!("every position is a draw"),
                Some(t) => {
                    println!("{} positions with {t} tiles", grouped(found.total));
                    for s in found.states {
                        let v = db.lookup(s)?;
                        println!("{}  {}", db.board().render(s), describe(v.outcome, v.step));
                    }
                }
            }
        }
        Command::Serve {
            db,
            port,
            host,
            static_dir,
            cache_classes,
        } => {
            let mut dbs = Vec::new();
            for dir in db {
                let d = Database::open(&dir, cache_classes)?;
                let d = if d.n() <= 4 {
                    Database::open_preloaded(&dir)?
                } else {
                    d
                };
                log::info!("loaded size {} database from {}", d.n(), dir.display());
                dbs.push(d);
            }
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad listen address {host}:{port}"))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(addr, AppState::new(dbs), static_dir))?;
        }
    }
    Ok(())
}

fn report_result(label: &str, r: &analysis::VerifyReport) -> anyhow::Result<()> {
    if r.ok() {
        println!("{label}: all {} states agree", grouped(r.checked));
        return Ok(());
    }
    for e in &r.examples {
        println!("  {e}");
    }
    bail!(
        "{label}: {} of {} states disagree",
        grouped(r.mismatches),
        grouped(r.checked)
    )
}
