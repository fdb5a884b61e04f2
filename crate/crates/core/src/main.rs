fn main() -> std::process::ExitCode {
    markov_structures::cli::main()
}
