use clap::Parser;

fn main() -> anyhow::Result<()> {
    let cli = refcomm_cli::Cli::parse();
    refcomm_cli::run(cli, &mut std::io::stdout().lock())
}
