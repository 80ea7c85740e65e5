//! The generated header must be valid C that declares the whole API.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include "wavephase.h"
#include <stdio.h>

int run(void) {
    WpBank *bank = NULL;
    WpField *x = NULL;
    WpTable *table = NULL;
    WpGaussian *model = NULL;
    double a = 0.0, b = 0.0;
    if (wp_bank_bump(32, 3, 4, &bank) != WP_STATUS_OK) {
        fprintf(stderr, "%s\n", wp_last_error_message());
        return 1;
    }
    wp_bank_frame_bounds(bank, &a, &b);
    wp_field_white_noise(32, 1.0, 7, &x);
    wp_table_estimate(x, bank, WP_MODEL_A, &table);
    wp_gaussian_fit(table, bank, 1e-8, &model);
    size_t n = wp_field_side(x) * wp_field_side(x);
    (void)n;
    wp_gaussian_free(model);
    wp_table_free(table);
    wp_field_free(x);
    wp_bank_free(bank);
    return 0;
}
"#;

fn header_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header_dir().join("wavephase.h")).unwrap();
    let source = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for handle in ["WpField", "WpBank", "WpTable", "WpGaussian"] {
        assert!(header.contains(&format!("typedef struct {handle} {handle};")));
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header_dir())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
