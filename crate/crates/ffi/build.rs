use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("EDSL_H".into()),
        cpp_compat: true,
        usize_is_size_t: true,
        documentation: true,
        enumeration: cbindgen::EnumConfig { prefix_with_name: false, ..Default::default() },
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
        .expect("header generation")
        .write_to_file(dir.join("include").join("edsl.h"));
}
