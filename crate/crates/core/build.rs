use std::env;
use std::path::Path;

// The distro ships cblas symbols inside libopenblas but no libcblas.so,
// while netlib-src emits `-lcblas`. Provide the alias in OUT_DIR.
fn main() {
    let out = env::var("OUT_DIR").unwrap();
    let alias = Path::new(&out).join("libcblas.so");
    if !alias.exists() {
        let _ = std::os::unix::fs::symlink("/usr/lib/x86_64-linux-gnu/libopenblas.so", &alias);
    }
    println!("cargo:rustc-link-search=native={out}");
}
