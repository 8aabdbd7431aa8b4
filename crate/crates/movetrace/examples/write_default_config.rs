//! Print the full-default run configuration template.
//!
//! Pipe it to a file to start a custom run:
//!
//! ```sh
//! cargo run --example write_default_config > run.toml
//! ```

fn main() {
    print!("{}", movetrace::config::default_template());
}
