use std::process::Command;

fn main() {
    // Best-effort build identifier for output metadata; "unknown" when the
    // build happens outside a git checkout (e.g. from a crate tarball).
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .map(|out| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string());
    println!("cargo:rustc-env=HAPSIM_GIT_DESCRIBE={describe}");
    println!("cargo:rerun-if-changed=build.rs");
}
