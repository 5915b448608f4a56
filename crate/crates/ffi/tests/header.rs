use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "rangefuse.h"

int main(void) {
    RfIntrinsics *intr = NULL;
    if (rf_intrinsics_synthetic(16, 64, -0.3, 0.3, &intr) != RF_STATUS_OK) return 1;
    size_t h = 0, w = 0;
    rf_intrinsics_size(intr, &h, &w);
    if (h != 16 || w != 64) return 2;
    RfIntrinsics *bad = NULL;
    if (rf_intrinsics_synthetic(16, 64, 0.3, -0.3, &bad) != RF_STATUS_INVALID_INTRINSICS) return 3;
    if (rf_last_error() == NULL || strlen(rf_last_error()) == 0) return 4;
    rf_intrinsics_free(intr);
    printf("%s\n", rf_version());
    return 0;
}
"#;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

#[test]
fn header_is_generated() {
    let text = std::fs::read_to_string(header_dir().join("rangefuse.h")).unwrap();
    for name in [
        "rf_register",
        "rf_grid_integrate",
        "rf_mesh_extract",
        "rf_last_error",
        "RF_STATUS_PANIC",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c_and_links_against_the_static_library() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args([
            "-std=c99",
            "-Wall",
            "-Wextra",
            "-Werror",
            "-fsyntax-only",
            "-I",
        ])
        .arg(header_dir())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "header does not compile as C99");

    // The static library sits next to the deps/ directory holding this test.
    let exe = std::env::current_exe().unwrap();
    let lib = exe
        .parent()
        .and_then(Path::parent)
        .map(|d| d.join("librangefuse_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("static library not built; link step skipped");
        return;
    };
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .arg("-I")
        .arg(header_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link against {} failed", lib.display());
    let output = Command::new(&bin).output().unwrap();
    assert!(
        output.status.success(),
        "C program exited with {:?}",
        output.status
    );
    assert_eq!(
        String::from_utf8_lossy(&output.stdout).trim(),
        env!("CARGO_PKG_VERSION")
    );
}
