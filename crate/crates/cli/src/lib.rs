//! Command-line front end and HTTP annotation API for `spal-core`.

pub mod cli;
pub mod run;
pub mod server;
pub mod tools;

use anyhow::Result;

use cli::{Cli, Command, LoopCommand};

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => tools::synth(&a),
        Command::Segment(a) => tools::segment(&a),
        Command::Merge(a) => tools::merge(&a),
        Command::Select(a) => tools::select(&a),
        Command::Sieve(a) => tools::sieve(&a),
        Command::Oracle(a) => tools::oracle(&a),
        Command::Evaluate(a) => tools::evaluate(&a),
        Command::Correlate(a) => tools::correlate(&a),
        Command::Train(a) => tools::train_cmd(&a),
        Command::Predict(a) => tools::predict_cmd(&a),
        Command::Sweep(a) => tools::sweep(&a),
        Command::Loop(LoopCommand::Run { config, listen, partial }) => {
            run::run(&config, listen.as_deref(), partial).map(drop)
        }
        Command::Loop(LoopCommand::Resume { state, listen }) => run::resume(&state, listen.as_deref()).map(drop),
        Command::Loop(LoopCommand::Status { state }) => {
            println!("{}", serde_json::to_string_pretty(&run::status(&state)?)?);
            Ok(())
        }
    }
}
