fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let mut config = cbindgen::Config::default();
    config.language = cbindgen::Language::C;
    config.include_guard = Some("RTLFORGE_H".to_string());
    config.cpp_compat = true;
    config.documentation = true;
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen header generation")
        .write_to_file(std::path::Path::new(&crate_dir).join("include/rtlforge.h"));
    println!("cargo:rerun-if-changed=src/lib.rs");
}
