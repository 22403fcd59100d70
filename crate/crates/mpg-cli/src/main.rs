fn main() {
    // placeholder; subcommands land with the pipeline wiring
}
