//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the PATH.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "listcombine.h"

int main(void) {
    int32_t y[8] = {0, 0, 1, 1, 0, 0, 1, LC_MISSING};
    int32_t z[8] = {1, 0, 1, 0, 1, 0, 1, 0};
    int32_t v[8] = {2, 1, 3, 2, 1, 1, 4, 2};
    LcDataset *ds = NULL;
    if (lc_dataset_from_arrays(y, z, v, 8, 4, &ds) != LC_STATUS_OK) return 1;
    LcEstimate est;
    if (lc_estimate(ds, LC_METHOD_COMBINED_LIST, 0.05, &est) != LC_STATUS_OK) return 2;
    lc_dataset_free(ds);
    if (est.n_used != 7) return 3;
    if (lc_estimate(NULL, LC_METHOD_DIRECT, 0.05, &est) != LC_STATUS_NULL_POINTER) return 4;
    printf("%s %.6f\n", lc_version(), est.estimate);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let lib = target_dir().join("liblistcombine_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::TempDir::new().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I", include])
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")), "{text}");
}
