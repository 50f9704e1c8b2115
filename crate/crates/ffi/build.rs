use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("reading cbindgen.toml");
    match cbindgen::generate_with_config(&crate_dir, config) {
        Ok(bindings) => {
            bindings.write_to_file(crate_dir.join("include/verifact.h"));
        }
        // A syntax error is reported better by rustc itself.
        Err(e @ cbindgen::Error::ParseSyntaxError { .. }) => {
            println!("cargo:warning=header not regenerated: {e}")
        }
        Err(e) => panic!("generating C header: {e}"),
    }
}
