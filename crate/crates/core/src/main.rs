use clap::Parser;

fn main() {
    let cli = qualshift::cli::Cli::parse();
    let code = qualshift::cli::run(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
