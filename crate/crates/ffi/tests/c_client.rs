//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "cocycle_lab.h"

int main(void) {
    CocyclePotential *v = NULL;
    CocycleFrequency *a = NULL;
    if (cocycle_potential_new_constant(0.0, &v) != COCYCLE_STATUS_OK) return 1;
    if (cocycle_frequency_new_golden(&a) != COCYCLE_STATUS_OK) return 2;
    CocycleLe le;
    if (cocycle_le_estimate(v, 3.0, 0.0, a, 20000, 2, 0, &le) != COCYCLE_STATUS_OK) return 3;
    if (fabs(le.value - 0.9624236501192069) > 1e-3) return 4;
    double b = 0.0;
    if (cocycle_herman_bound(10.0, 1e4, 1.0, &b) != COCYCLE_STATUS_DOMAIN) return 5;
    if (cocycle_last_error() == NULL) return 6;
    fprintf(stdout, "le=%.6f\n", le.value);
    cocycle_frequency_free(a);
    cocycle_potential_free(v);
    return 0;
}
"#;

fn profile_dir() -> PathBuf {
    // target/<profile>/deps/<this test>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("cocycle_lab.h").exists());
    let lib = profile_dir().join("libcocycle_lab_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = std::env::temp_dir().join(format!("cocycle-lab-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("client.c");
    let bin = dir.join("client");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("cc");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("le=0.962"));
    std::fs::remove_dir_all(&dir).ok();
}
