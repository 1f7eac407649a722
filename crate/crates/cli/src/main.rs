use clap::Parser;

fn main() {
    let cli = hamrank::Cli::parse();
    let (_, code) = hamrank::execute(&cli);
    std::process::exit(code);
}
