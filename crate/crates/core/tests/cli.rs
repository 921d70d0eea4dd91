use std::path::Path;
use std::process::{Command, Output};

use sandhub::bench::parse_csv;
use sandhub::share::{self, Passphrase};

fn sandhub(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sandhub"));
    cmd.args(args)
        .env_remove("SANDHUB_PASSPHRASE")
        .env_remove("SANDHUB_STORAGE");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn seal_then_unseal_via_env_passphrase() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("report.html");
    std::fs::write(&input, b"<p>result</p>").unwrap();
    let sealed = dir.path().join("report.bin");
    let pw = [("SANDHUB_PASSPHRASE", "tänzer 🔑 passphrase")];

    let out = sandhub(&["seal", path(&input), "-o", path(&sealed)], &pw);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let blob = std::fs::read(&sealed).unwrap();
    assert_eq!((blob.len() - 32) % 16, 0);

    // the library opens what the CLI sealed
    let env = share::open_bytes(&blob, &Passphrase::new(pw[0].1).unwrap()).unwrap();
    assert_eq!(env.file_name, "report.html");
    assert_eq!(env.payload, b"<p>result</p>");

    let outdir = dir.path().join("opened");
    std::fs::create_dir(&outdir).unwrap();
    let out = sandhub(&["unseal", path(&sealed), "--out-dir", path(&outdir)], &pw);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(
        std::fs::read(outdir.join("report.html")).unwrap(),
        b"<p>result</p>"
    );
    for stream in [&out.stdout, &out.stderr] {
        assert!(!text(stream).contains(pw[0].1));
    }
}

#[test]
fn base64_and_passphrase_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    std::fs::write(&input, vec![7u8; 5000]).unwrap();
    let pwfile = dir.path().join("pw.txt");
    std::fs::write(&pwfile, "from a file\n").unwrap();
    let sealed = dir.path().join("data.b64");

    let out = sandhub(
        &[
            "seal",
            path(&input),
            "-o",
            path(&sealed),
            "--base64",
            "--name",
            "renamed.csv",
            "--passphrase-file",
            path(&pwfile),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(std::fs::read_to_string(&sealed).unwrap().is_ascii());

    let dest = dir.path().join("back.csv");
    let out = sandhub(
        &[
            "unseal",
            path(&sealed),
            "--base64",
            "-o",
            path(&dest),
            "--passphrase-env",
            "MY_PW",
        ],
        &[("MY_PW", "from a file")],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(std::fs::read(&dest).unwrap(), vec![7u8; 5000]);
    assert!(text(&out.stderr).contains("renamed.csv"));
}

#[test]
fn cli_opens_library_sealed_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let pw = Passphrase::new("shared secret").unwrap();
    let blob = share::seal(b"", "empty.txt", &pw, &mut rand::rngs::OsRng).unwrap();
    let sealed = dir.path().join("empty.bin");
    std::fs::write(&sealed, blob.to_bytes()).unwrap();
    let dest = dir.path().join("empty.out");
    let out = sandhub(
        &["unseal", path(&sealed), "-o", path(&dest)],
        &[("SANDHUB_PASSPHRASE", "shared secret")],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(std::fs::read(&dest).unwrap(), b"");
}

#[test]
fn wrong_passphrase_is_uniform_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.txt");
    std::fs::write(&input, b"x").unwrap();
    let sealed = dir.path().join("x.bin");
    assert!(sandhub(
        &["seal", path(&input), "-o", path(&sealed)],
        &[("SANDHUB_PASSPHRASE", "right")]
    )
    .status
    .success());
    let dest = dir.path().join("never");
    let out = sandhub(
        &["unseal", path(&sealed), "-o", path(&dest)],
        &[("SANDHUB_PASSPHRASE", "wrong")],
    );
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("wrong passphrase or corrupted data"));
    assert!(!dest.exists());

    let out = sandhub(&["unseal", path(&sealed), "-o", path(&dest)], &[]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("SANDHUB_PASSPHRASE is not set"));
}

#[test]
fn validate_reports_paths() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = Path::new(env!("CARGO_MANIFEST_DIR")).join("seeds");
    let out = sandhub(&["validate", path(&seeds.join("netanova.json"))], &[]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout).trim(), "ok: netANOVA 1.0.0 (r)");

    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(seeds.join("demo.json")).unwrap()).unwrap();
    doc["entry_point"]["parameters"][0]["kind"] = "dataframe".into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = sandhub(&["validate", path(&bad)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("entry_point.parameters[0].kind"));
}

#[test]
fn seed_and_grant() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("registry.db");
    let out = sandhub(&["seed", "--storage", path(&db)], &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(
        text(&out.stdout).trim(),
        format!("seeded 17 applications into {}", db.display())
    );
    let out = sandhub(&["seed"], &[("SANDHUB_STORAGE", path(&db))]);
    assert!(text(&out.stdout).starts_with("seeded 0 "));

    let out = sandhub(
        &[
            "admin",
            "grant",
            "nobody",
            "publish-app",
            "--storage",
            path(&db),
        ],
        &[],
    );
    assert!(!out.status.success());
    let out = sandhub(
        &["admin", "grant", "operator", "root", "--storage", path(&db)],
        &[],
    );
    assert!(text(&out.stderr).contains("expected publish-app or upload-data"));
    let out = sandhub(
        &[
            "admin",
            "grant",
            "operator",
            "upload-data",
            "--storage",
            path(&db),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).trim(), "granted upload-data to operator");
}

#[test]
fn bench_run_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("native.csv");
    let out = sandhub(
        &[
            "bench",
            "run",
            "--kind",
            "listsum",
            "--sizes",
            "10,20",
            "--iterations",
            "5",
            "--out",
            path(&csv),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let records = parse_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(records.len(), 10);
    assert!(text(&out.stdout).contains("median_ns"));

    let report = dir.path().join("report.txt");
    let out = sandhub(
        &[
            "bench",
            "compare",
            "--native",
            path(&csv),
            "--sandbox",
            path(&csv),
            "--out",
            path(&report),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report = std::fs::read_to_string(&report).unwrap();
    assert_eq!(report.matches("     1.00").count(), 2, "{report}");

    let out = sandhub(
        &["bench", "run", "--kind", "gemm", "--out", path(&csv)],
        &[],
    );
    assert!(!out.status.success());
    let out = sandhub(
        &[
            "bench",
            "run",
            "--kind",
            "matmul",
            "--sizes",
            "100000",
            "--out",
            path(&csv),
        ],
        &[],
    );
    assert!(text(&out.stderr).contains("budget"));
}
