fn main() {
    eprintln!("tslab: command-line surface not wired up yet");
    std::process::exit(2);
}
