//! Prints the built-in pipeline configuration as JSON; a starting point for
//! `--config` files.
//!
//!     cargo run --example print_default_config > my.json

fn main() {
    println!("{}", fieldscan::pipeline::PipelineConfig::default().to_json());
}
