//! Command-line pipeline: `gen-data → train → sample → solve → eval →
//! report`. Each subcommand reads a flat key=value configuration (file plus
//! flag overrides) and writes `resolved_config.txt` next to its outputs;
//! passing that file back through `--config` repeats the run exactly.

pub mod common;
pub mod config;
pub mod error;
pub mod eval;
pub mod gen_data;
pub mod report;
pub mod sample;
pub mod solve;
pub mod svg;
pub mod train;

use clap::Command;

use config::{with_keys, Key, RunConfig};
pub use error::{CliError, EXIT_CODES};

type Runner = fn(&RunConfig) -> Result<(), CliError>;

/// Every subcommand with its key table, runner and one-line description.
pub const COMMANDS: &[(&str, &[Key], Runner, &str)] = &[
    ("gen-data", gen_data::KEYS, gen_data::run, "Render synthetic demonstrations into a dataset directory"),
    ("train", train::KEYS, train::run, "Train the flow and goal-image denoiser; writes model.ecf and loss.csv"),
    ("sample", sample::KEYS, sample::run, "Sample a flow and goal image for every dataset scene"),
    ("solve", solve::KEYS, solve::run, "Recover end-effector pose trajectories from flows and depth"),
    ("eval", eval::KEYS, eval::run, "Compare solved trajectories with gt_traj.csv; writes metrics CSVs"),
    ("report", report::KEYS, report::run, "Plot loss curves, noise sweeps and weighting comparisons as SVG"),
];

pub fn command() -> Command {
    let mut cmd = Command::new("ecflow")
        .about("Embodiment-centric flow: synthetic data, diffusion flow prediction and pose recovery")
        .after_help(EXIT_CODES)
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, keys, _, about) in COMMANDS {
        cmd = cmd.subcommand(with_keys(Command::new(*name).about(*about).after_help(EXIT_CODES), keys));
    }
    cmd
}

/// Resolves the configuration of one invocation without running it.
pub fn resolve<I, T>(args: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command().try_get_matches_from(args)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let (_, keys, _, _) = COMMANDS.iter().find(|c| c.0 == name).expect("registered subcommand");
    RunConfig::resolve(name, keys, sub).map_err(|e| command().error(clap::error::ErrorKind::InvalidValue, e.to_string()))
}

/// Runs an already resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, _, run, _) = COMMANDS
        .iter()
        .find(|c| c.0 == cfg.command)
        .ok_or_else(|| CliError::Usage(format!("unknown command `{}`", cfg.command)))?;
    run(cfg)
}

/// Parses, runs and reports; returns the process exit code.
pub fn run_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let (_, keys, run, _) = COMMANDS.iter().find(|c| c.0 == name).expect("registered subcommand");
    let result = RunConfig::resolve(name, keys, sub).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_tree_is_valid() {
        command().debug_assert();
    }

    #[test]
    fn help_lists_exit_codes() {
        let help = command().render_long_help().to_string();
        assert!(help.contains("Exit codes"));
        assert!(help.contains("degenerate step"));
    }

    #[test]
    fn usage_errors_exit_with_2() {
        assert_eq!(run_main(["ecflow", "solve", "--no-such-flag", "1"]), 2);
        assert_eq!(run_main(["ecflow", "gen-data"]), 2);
    }

    #[test]
    fn missing_inputs_exit_with_3() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let missing = dir.path().join("nope");
        let code = run_main([
            "ecflow",
            "solve",
            "--dataset",
            missing.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 3);
    }
}
