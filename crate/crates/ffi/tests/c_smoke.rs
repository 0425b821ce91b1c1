//! Compiles and runs a small C program against the generated header and
//! the built shared library, proving the ABI is usable from C — not just
//! from Rust callers of the `extern "C"` functions.

use std::path::{Path, PathBuf};
use std::process::Command;

/// The C program: build a scenario from TOML, run the deterministic
/// correlation sweep, pull a column out, and print the self-correlation.
/// Exits nonzero on any unexpected status or value.
const PROGRAM: &str = r#"
#include <stdio.h>
#include <stdlib.h>
#include <math.h>
#include "hapsim.h"

static void check(enum HapsimStatus status, const char *what) {
    if (status != HAPSIM_STATUS_OK) {
        const char *msg = hapsim_last_error();
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)status,
                msg ? msg : "no message");
        exit(1);
    }
}

int main(void) {
    const char *toml =
        "n_clusters = 2\n"
        "users_per_cluster = 2\n"
        "n_rx = 2\n"
        "n_trials = 2\n"
        "quad_nodes = 12\n";
    HapsimScenario *scenario = NULL;
    check(hapsim_scenario_from_toml(toml, &scenario), "from_toml");
    check(hapsim_scenario_set_seed(scenario, 11), "set_seed");

    double grid[3] = {-5.0, 0.0, 5.0};
    HapsimSeries *series = NULL;
    check(hapsim_correlation_sweep(scenario, 16, 0.0, grid, 3, &series),
          "correlation_sweep");

    size_t n = hapsim_series_n_points(series);
    if (n != 3) {
        fprintf(stderr, "expected 3 points, got %zu\n", n);
        return 1;
    }
    double haps[3];
    check(hapsim_series_column_values(series, "correlation_haps", haps, 3),
          "column_values");
    if (fabs(haps[1] - 1.0) > 1e-9) {
        fprintf(stderr, "self-correlation %f != 1\n", haps[1]);
        return 1;
    }

    char *csv = NULL;
    check(hapsim_series_to_csv(series, &csv), "to_csv");
    if (csv[0] == '\0') {
        fprintf(stderr, "empty CSV\n");
        return 1;
    }
    hapsim_string_free(csv);

    /* Error paths set a readable message and leave outputs untouched. */
    HapsimScenario *bad = NULL;
    if (hapsim_scenario_from_toml("no_such_knob = 1", &bad) !=
        HAPSIM_STATUS_CONFIG_ERROR) {
        fprintf(stderr, "unknown key was accepted\n");
        return 1;
    }
    if (bad != NULL || hapsim_last_error() == NULL) {
        fprintf(stderr, "error reporting contract broken\n");
        return 1;
    }

    hapsim_series_free(series);
    hapsim_scenario_free(scenario);
    printf("ok %s\n", hapsim_version());
    return 0;
}
"#;

fn find_compiler() -> Option<PathBuf> {
    let candidates = [std::env::var("CC").unwrap_or_default(), "cc".into(), "gcc".into()];
    candidates
        .iter()
        .filter(|c| !c.is_empty())
        .find_map(|c| which(c))
}

fn which(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    let header = include_dir.join("hapsim.h");
    assert!(
        header.is_file(),
        "header not generated at {}",
        header.display()
    );

    // The shared library is emitted into the deps directory next to this
    // test binary; an uplifted copy one level up may exist but can be
    // stale, so prefer whichever is newest.
    let deps_dir = PathBuf::from(std::env::current_exe().unwrap())
        .parent() // .../target/debug/deps
        .unwrap()
        .to_path_buf();
    let uplift_dir = deps_dir.parent().unwrap().to_path_buf();
    let lib_dir = [&deps_dir, &uplift_dir]
        .into_iter()
        .filter(|d| d.join("libhapsim_ffi.so").is_file())
        .max_by_key(|d| {
            std::fs::metadata(d.join("libhapsim_ffi.so"))
                .and_then(|m| m.modified())
                .ok()
        });
    let Some(lib_dir) = lib_dir else {
        eprintln!("skipping: no shared library found on this platform");
        return;
    };

    let Some(cc) = find_compiler() else {
        eprintln!("skipping: no C compiler on PATH");
        return;
    };

    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    let bin = work.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();

    let compile = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lhapsim_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("compiler runs");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().expect("program runs");
    assert!(
        run.status.success(),
        "program failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with("ok "), "unexpected output: {stdout}");
}
