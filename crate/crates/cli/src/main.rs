fn main() {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = infocam_cli::run(std::env::args_os(), &mut stdout) {
        eprintln!("infocam: {e}");
        std::process::exit(e.exit_code());
    }
}
