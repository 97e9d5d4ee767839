use clap::Parser;
use ncq_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let code = match run(&cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ncq {}: {e}", cli.command.name());
            e.code
        }
    };
    std::process::exit(code);
}
